"""Model hyperparameters, trainable parameters, and checkpoint io.

Parameters live in an ordered name -> float64 ndarray mapping so the
optimizer, the finite-difference checker, and the checkpoint format all
treat them uniformly. Scalars are shape-(1,) arrays.

Checkpoint format (text, versioned, bit-exact round trip): one header
line, ``hyper`` lines with hex-encoded floats where fractional, then per
array a ``array <name> <shape...>`` line followed by one line of
space-joined ``float.hex()`` values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..errors import InputError, MissingCheckpointError

CHECKPOINT_MAGIC = "mgdvd-checkpoint v1"


@dataclass(frozen=True)
class ModelHyperparams:
    layers: int = 3          # aggregation layers K
    rep_dim: int = 64        # representation matrix dimension d
    hidden_dim: int = 300    # hidden neurons of the projection head
    embed_dim: int = 60      # graph embedding size
    gamma: float = 0.3       # churn-ratio dispatch threshold
    leaky_slope: float = 0.01

    def __post_init__(self):
        if self.layers < 1:
            raise InputError("layers must be >= 1")
        if min(self.rep_dim, self.hidden_dim, self.embed_dim) < 1:
            raise InputError("dimensions must be >= 1")
        if not (0.0 < self.gamma < 1.0):
            raise InputError("gamma must lie in (0, 1)")

    @property
    def two_layer_projection(self) -> bool:
        return self.embed_dim != self.rep_dim


class ModelParams:
    """Ordered bundle of named trainable arrays."""

    def __init__(self, arrays: dict[str, np.ndarray]):
        self.arrays = {k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def names(self) -> list[str]:
        return list(self.arrays)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self.arrays.items())

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams({k: np.zeros_like(v) for k, v in self.arrays.items()})

    def flatten(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays.values()])

    def unflatten(self, vec: np.ndarray) -> "ModelParams":
        out = {}
        offset = 0
        for name, arr in self.arrays.items():
            size = arr.size
            out[name] = vec[offset:offset + size].reshape(arr.shape).copy()
            offset += size
        return ModelParams(out)

    def scalar_names(self) -> list[tuple[str, int]]:
        """(array name, flat offset) for every trainable scalar."""
        out = []
        for name, arr in self.arrays.items():
            out.extend((name, i) for i in range(arr.size))
        return out


def init_params(h: ModelHyperparams, seed: int) -> ModelParams:
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    d, e, hid, k = h.rep_dim, h.embed_dim, h.hidden_dim, h.layers
    arrays: dict[str, np.ndarray] = {
        "att_w": rng.normal(0.0, 0.1, size=2 * d),
        "att_b": rng.normal(0.0, 0.1, size=1),
        "agg_w": rng.normal(0.0, 1.0 / np.sqrt(d), size=(k, d, d)),
        "agg_eps": np.zeros(k),
        "prior_proj": rng.normal(0.0, 1.0 / np.sqrt(e), size=(d, e)),
    }
    if h.two_layer_projection:
        arrays["proj_w1"] = rng.normal(0.0, 1.0 / np.sqrt(d), size=(hid, d))
        arrays["proj_b1"] = rng.normal(0.0, 0.1, size=hid)
        arrays["proj_w2"] = rng.normal(0.0, 1.0 / np.sqrt(hid), size=(e, hid))
        arrays["proj_b2"] = rng.normal(0.0, 0.1, size=e)
    else:
        arrays["proj_w"] = rng.normal(0.0, 1.0 / np.sqrt(d), size=(e, d))
        arrays["proj_b"] = rng.normal(0.0, 0.1, size=e)
    return ModelParams(arrays)


def _hex(x: float) -> str:
    return float(x).hex()


def save_checkpoint(path, params: ModelParams, h: ModelHyperparams) -> None:
    lines = [CHECKPOINT_MAGIC]
    lines.append(f"hyper layers {h.layers}")
    lines.append(f"hyper rep_dim {h.rep_dim}")
    lines.append(f"hyper hidden_dim {h.hidden_dim}")
    lines.append(f"hyper embed_dim {h.embed_dim}")
    lines.append(f"hyper gamma {_hex(h.gamma)}")
    lines.append(f"hyper leaky_slope {_hex(h.leaky_slope)}")
    for name, arr in params.items():
        shape = " ".join(str(s) for s in arr.shape)
        lines.append(f"array {name} {shape}")
        lines.append(" ".join(_hex(v) for v in arr.ravel()))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[ModelParams, ModelHyperparams]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except FileNotFoundError:
        raise MissingCheckpointError(f"checkpoint not found: {path}") from None
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise InputError(f"{path}: not a checkpoint (bad header)")
    hyper: dict[str, float | int] = {}
    arrays: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        if parts[0] == "hyper":
            key, value = parts[1], parts[2]
            hyper[key] = float.fromhex(value) if "0x" in value else int(value)
            i += 1
        elif parts[0] == "array":
            name = parts[1]
            shape = tuple(int(s) for s in parts[2:])
            values = [float.fromhex(tok) for tok in lines[i + 1].split()]
            arrays[name] = np.asarray(values, dtype=np.float64).reshape(shape)
            i += 2
        else:
            raise InputError(f"{path}: unrecognized checkpoint line {lines[i]!r}")
    h = ModelHyperparams(
        layers=int(hyper["layers"]),
        rep_dim=int(hyper["rep_dim"]),
        hidden_dim=int(hyper["hidden_dim"]),
        embed_dim=int(hyper["embed_dim"]),
        gamma=float(hyper["gamma"]),
        leaky_slope=float(hyper["leaky_slope"]),
    )
    return ModelParams(arrays), h
