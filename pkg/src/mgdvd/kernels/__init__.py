"""Kernel selection for the pattern-matching inner loop.

The compiled extension (`_cmatch`, built from Cython) and the pure-Python
mirror (`pymatch`) implement the same enumeration over the same compiled
graph/pattern structures. The compiled kernel is preferred when the
extension imported; set ``MGDVD_PURE_PY=1`` to force the fallback, or call
:func:`set_implementation` at runtime (used by the kernel benchmark).
"""

from __future__ import annotations

import os

from . import pymatch

try:
    from . import _cmatch

    HAVE_COMPILED = True
except ImportError:
    _cmatch = None
    HAVE_COMPILED = False

_active = "python" if (os.environ.get("MGDVD_PURE_PY") == "1" or not HAVE_COMPILED) else "compiled"


def available_implementations() -> tuple[str, ...]:
    return ("compiled", "python") if HAVE_COMPILED else ("python",)


def active_implementation() -> str:
    return _active


def set_implementation(name: str) -> None:
    global _active
    if name not in ("compiled", "python"):
        raise ValueError(f"unknown kernel implementation {name!r}")
    if name == "compiled" and not HAVE_COMPILED:
        raise ValueError("compiled kernel is not available in this build")
    _active = name


def enumerate_matches(gindex, pattern, root: int, dyn, root_dyn: bool, cap: int):
    """Enumerate typed directed homomorphisms of ``pattern`` rooted at ``root``.

    ``dyn`` is a set of dynamic node indices or None for unrestricted
    matching. Returns (list of slot-order index tuples, truncated flag).
    """
    if _active == "compiled":
        return _cmatch.enumerate_matches(gindex, pattern, root, dyn, root_dyn, cap)
    return pymatch.enumerate_matches(gindex, pattern, root, dyn, root_dyn, cap)
