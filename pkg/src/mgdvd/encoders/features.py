"""Deterministic node state vectors.

A node's state is its entity-type one-hot (8 dims) concatenated with a
feature hash of its id filling the remaining dims, unit-normalized.
For dims <= 8 the whole vector comes from the hash (the type still
participates through the hash key). No RNG, no global state: the same
node always yields the same vector.
"""

from __future__ import annotations

from hashlib import blake2b

import numpy as np

from ..errors import MissingNodeStateError
from ..schema import EntityRef, EntityType

_N_TYPES = len(EntityType)


def _hash_unit(key: bytes, j: int) -> float:
    digest = blake2b(key, digest_size=8, salt=j.to_bytes(8, "little")).digest()
    return int.from_bytes(digest, "big") / 2**63 - 1.0


def node_state(ref: EntityRef, dim: int) -> np.ndarray:
    key = f"{ref.etype.value}:{ref.id}".encode("utf-8")
    if dim > _N_TYPES:
        vec = np.zeros(dim, dtype=np.float64)
        vec[ref.etype.rank] = 1.0
        for j in range(dim - _N_TYPES):
            vec[_N_TYPES + j] = _hash_unit(key, j)
    else:
        vec = np.array([_hash_unit(key, j) for j in range(dim)], dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm < 1e-12:
        vec[0] = 1.0
        norm = 1.0
    return vec / norm


class StateStore:
    """Computes node states on demand and caches them."""

    def __init__(self, dim: int):
        self.dim = dim
        self._cache: dict[EntityRef, np.ndarray] = {}

    def get(self, ref: EntityRef) -> np.ndarray:
        vec = self._cache.get(ref)
        if vec is None:
            vec = node_state(ref, self.dim)
            self._cache[ref] = vec
        return vec


class FixedStateStore:
    """Explicit state table; raises on unknown nodes (strict mode)."""

    def __init__(self, dim: int, table: dict[EntityRef, np.ndarray]):
        self.dim = dim
        self._table = dict(table)

    def get(self, ref: EntityRef) -> np.ndarray:
        vec = self._table.get(ref)
        if vec is None:
            raise MissingNodeStateError(f"no state vector for {ref.token()}")
        return vec
