"""Gallery matching and real-time verdicts.

Each window's embedding is scored by Pearson correlation against every
labeled reference embedding. The best label above the threshold yields a
provisional verdict; a verdict becomes final once the required number of
consecutive windows agree on the same label. Windows where nothing
clears the threshold stay pending and reset the agreement run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import (
    EmptyGalleryError,
    InputError,
    LengthMismatchError,
    ZeroVarianceError,
)


def _validate_pair(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatchError(f"vector shapes differ: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise LengthMismatchError("need vectors of length >= 2")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise ZeroVarianceError("constant vector has no defined correlation")
    return x, y


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Population Pearson correlation, clamped to [-1, 1]."""
    x, y = _validate_pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    num = float(xc @ yc)
    denom = float(np.sqrt((xc @ xc) * (yc @ yc)))
    return float(np.clip(num / denom, -1.0, 1.0))


def pearson_gradient(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of the correlation w.r.t. both vectors."""
    x, y = _validate_pair(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    sxy = float(xc @ yc)
    denom = np.sqrt(sxx * syy)
    dx = (yc - (sxy / sxx) * xc) / denom
    dy = (xc - (sxy / syy) * yc) / denom
    return dx, dy


@dataclass
class GalleryEntry:
    sample_id: str
    label: str
    embedding: np.ndarray


class Gallery:
    """Labeled reference embeddings; constant length, nonzero variance."""

    def __init__(self, embed_dim: int):
        self.embed_dim = embed_dim
        self.entries: list[GalleryEntry] = []

    def add(self, sample_id: str, label: str, embedding: np.ndarray) -> None:
        emb = np.asarray(embedding, dtype=np.float64)
        if emb.shape != (self.embed_dim,):
            raise LengthMismatchError(
                f"gallery embeddings must have length {self.embed_dim}, got {emb.shape}"
            )
        if np.ptp(emb) == 0.0:
            raise ZeroVarianceError(f"embedding for {sample_id!r} has zero variance")
        self.entries.append(GalleryEntry(sample_id, label, emb))

    def __len__(self) -> int:
        return len(self.entries)

    def labels(self) -> list[str]:
        return sorted({e.label for e in self.entries})

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"mgdvd-gallery v1 dim {self.embed_dim}\n")
            for e in self.entries:
                values = " ".join(float(v).hex() for v in e.embedding)
                fh.write(f"{e.sample_id}|{e.label}|{values}\n")

    @staticmethod
    def load(path) -> "Gallery":
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or not lines[0].startswith("mgdvd-gallery v1 dim "):
            raise InputError(f"{path}: not a gallery file")
        dim = int(lines[0].rsplit(" ", 1)[1])
        gallery = Gallery(dim)
        for line in lines[1:]:
            if not line.strip():
                continue
            sample_id, label, values = line.split("|", 2)
            emb = np.array([float.fromhex(tok) for tok in values.split()])
            gallery.add(sample_id, label, emb)
        return gallery


@dataclass(frozen=True)
class DetectorConfig:
    tau: float = 0.5
    consistency_window: int = 2

    def __post_init__(self):
        if not (-1.0 < self.tau <= 1.0):
            raise InputError(f"tau must lie in (-1, 1], got {self.tau}")
        if self.consistency_window < 1:
            raise InputError("consistency_window must be >= 1")


@dataclass
class Verdict:
    window_index: int
    status: str                      # "pending" | "provisional" | "final"
    label: Optional[str]
    rho: Optional[float]
    best_sample: Optional[str] = None
    run_length: int = 0


def classify_window(
    emb: np.ndarray,
    gallery: Gallery,
    cfg: DetectorConfig,
    prior: Optional[Verdict],
    window_index: int = 0,
) -> Verdict:
    """Score one window embedding against the gallery.

    Ties on the correlation break toward the smallest sample id, so
    gallery order never affects the verdict. A final verdict is sticky:
    later windows keep its label.
    """
    if len(gallery) == 0:
        raise EmptyGalleryError("cannot classify against an empty gallery")
    scored = sorted(
        ((pearson(emb, e.embedding), e.sample_id, e.label) for e in gallery.entries),
        key=lambda t: (-t[0], t[1]),
    )
    best_rho, best_sample, best_label = scored[0]

    if prior is not None and prior.status == "final":
        return Verdict(window_index, "final", prior.label, best_rho,
                       best_sample, prior.run_length)

    if best_rho >= cfg.tau:
        run = 1
        if prior is not None and prior.status == "provisional" and prior.label == best_label:
            run = prior.run_length + 1
        status = "final" if run >= cfg.consistency_window else "provisional"
        return Verdict(window_index, status, best_label, best_rho, best_sample, run)
    return Verdict(window_index, "pending", None, best_rho, best_sample, 0)


def stream_detect(
    events,
    params,
    h,
    catalog,
    gallery: Gallery,
    cfg: DetectorConfig = DetectorConfig(),
    wcfg=None,
    schema=None,
    mode: str = "auto",
    stop_on_final: bool = True,
    target=None,
    measure_wall: bool = False,
) -> tuple[list[Verdict], list[float]]:
    """Advance windows, encode, and classify until a final verdict.

    Returns one verdict per processed window plus per-window latencies in
    milliseconds (zeros unless ``measure_wall``, keeping the default log
    deterministic). With ``stop_on_final`` the stream stops at the first
    final verdict; otherwise later windows keep the final label.
    """
    import time

    from .encoders.features import StateStore
    from .pipeline import build_window_data, find_target, static_rewalk_window
    from .schema import DEFAULT_SCHEMA
    from .windows import WindowConfig, iter_windows
    from .encoders.ops import encode_window

    if len(gallery) == 0:
        raise EmptyGalleryError("cannot detect against an empty gallery")
    wcfg = wcfg if wcfg is not None else WindowConfig()
    schema = schema if schema is not None else DEFAULT_SCHEMA
    events = list(events)
    root = target if target is not None else find_target(events)
    states = StateStore(h.rep_dim)
    verdicts: list[Verdict] = []
    latencies: list[float] = []
    prior = None
    last: Optional[Verdict] = None
    for step in iter_windows(events, wcfg):
        t0 = time.monotonic() if measure_wall else 0.0
        wd = build_window_data(
            step.graph, step.delta, step.ratio, root, catalog, schema, h, states, mode
        )
        if mode == "static-walk":
            static_rewalk_window(step.graph, root, catalog, schema, h, states, params)
        emb, _ = encode_window(params, h, wd, prior)
        prior = emb
        verdict = classify_window(emb, gallery, cfg, last, step.graph.index)
        latencies.append((time.monotonic() - t0) * 1000.0 if measure_wall else 0.0)
        verdicts.append(verdict)
        last = verdict
        if stop_on_final and verdict.status == "final":
            break
    return verdicts, latencies


def format_verdict_line(v: Verdict, latency_ms: float = 0.0) -> str:
    label = v.label if v.label is not None else "-"
    rho = repr(v.rho) if v.rho is not None else "-"
    return f"{v.window_index}|{v.status}|{label}|{rho}|{latency_ms:.3f}"


def write_verdict_log(path, verdicts: Iterable[Verdict], latencies=None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, v in enumerate(verdicts):
            ms = latencies[i] if latencies is not None else 0.0
            fh.write(format_verdict_line(v, ms) + "\n")
