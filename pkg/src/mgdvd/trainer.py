"""Training of all trainable parameters on the pairwise correlation loss.

The objective sums (rho(a, b) - y)^2 over labeled embedding pairs,
y = +1 for same-family pairs and -1 otherwise. Embeddings come from the
final window of each training stream; gradients flow analytically
through the projection, attention, and aggregation chain and are guarded
by a central finite-difference check. Optimization is a hand-rolled
adaptive-moment update, fully deterministic under a seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .detector import pearson, pearson_gradient
from .encoders.backprop import backward_window
from .encoders.ops import WindowData, encode_window
from .encoders.params import ModelHyperparams, ModelParams, init_params
from .errors import DivergenceError, InputError, InsufficientFamiliesError
from .pipeline import SampleTrace, forward_trace


@dataclass
class TrainingPair:
    emb_a: np.ndarray
    emb_b: np.ndarray
    label: int  # +1 same family, -1 otherwise

    def __post_init__(self):
        if self.label not in (1, -1):
            raise InputError(f"pair label must be +1 or -1, got {self.label}")


def pair_loss(pairs: Sequence[TrainingPair]) -> float:
    """Sum of squared residuals between pair correlation and label."""
    total = 0.0
    for p in pairs:
        total += (pearson(p.emb_a, p.emb_b) - p.label) ** 2
    return total


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    batch_size: int = 0  # 0: one full-batch step per epoch
    seed: int = 0
    max_same_pairs: int = 400

    def __post_init__(self):
        if self.lr < 0:
            raise InputError("learning rate must be >= 0")
        for beta in (self.beta1, self.beta2):
            if not (0.0 < beta < 1.0):
                raise InputError("moment decay rates must lie in (0, 1)")


class Adam:
    """Adaptive-moment update over the named parameter arrays."""

    def __init__(self, params: ModelParams, cfg: OptimizerConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: ModelParams, grads: ModelParams) -> None:
        cfg = self.cfg
        self.t += 1
        b1t = 1.0 - cfg.beta1 ** self.t
        b2t = 1.0 - cfg.beta2 ** self.t
        for name, g in grads.items():
            self.m[name] = cfg.beta1 * self.m[name] + (1 - cfg.beta1) * g
            self.v[name] = cfg.beta2 * self.v[name] + (1 - cfg.beta2) * g * g
            m_hat = self.m[name] / b1t
            v_hat = self.v[name] / b2t
            params.arrays[name] -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


PairKey = tuple[str, str, int]


def make_pairs(
    families: dict[str, str], rng: np.random.Generator, max_same: int
) -> list[PairKey]:
    """All same-family pairs (within budget) plus as many cross-family ones."""
    by_family: dict[str, list[str]] = {}
    for sid in sorted(families):
        by_family.setdefault(families[sid], []).append(sid)
    same: list[PairKey] = []
    for family in sorted(by_family):
        sids = by_family[family]
        for i in range(len(sids)):
            for j in range(i + 1, len(sids)):
                same.append((sids[i], sids[j], 1))
    if len(same) > max_same:
        keep = rng.choice(len(same), size=max_same, replace=False)
        same = [same[i] for i in sorted(keep)]
    cross: list[PairKey] = []
    all_sids = sorted(families)
    guard = 0
    while len(cross) < len(same) and guard < 50 * (len(same) + 1):
        guard += 1
        a, b = rng.choice(len(all_sids), size=2, replace=False)
        sa, sb = all_sids[a], all_sids[b]
        if families[sa] != families[sb]:
            cross.append((sa, sb, -1))
    return same + cross


def _batch_loss_and_grads(
    params: ModelParams,
    h: ModelHyperparams,
    traces: dict[str, SampleTrace],
    pairs: Sequence[PairKey],
) -> tuple[float, ModelParams]:
    needed = sorted({sid for a, b, _ in pairs for sid in (a, b)})
    embs: dict[str, np.ndarray] = {}
    caches: dict[str, object] = {}
    for sid in needed:
        emb, cache = forward_trace(params, h, traces[sid], want_final_cache=True)
        embs[sid], caches[sid] = emb, cache
    loss = 0.0
    d_embs = {sid: np.zeros_like(embs[sid]) for sid in needed}
    for a, b, y in pairs:
        rho = pearson(embs[a], embs[b])
        resid = rho - y
        loss += resid * resid
        da, db = pearson_gradient(embs[a], embs[b])
        d_embs[a] += 2.0 * resid * da
        d_embs[b] += 2.0 * resid * db
    grads = params.zeros_like()
    for sid in needed:
        backward_window(caches[sid], d_embs[sid], params, h, grads)
    return loss, grads


@dataclass
class TrainResult:
    params: ModelParams
    history: list[tuple[int, float]]  # (epoch, mean loss per pair)
    initial_loss: float
    final_loss: float
    restored_best: bool = False


def train(
    traces: Sequence[SampleTrace],
    cfg: OptimizerConfig,
    h: ModelHyperparams,
    params: Optional[ModelParams] = None,
) -> TrainResult:
    """Fit parameters on final-window embeddings of the given traces."""
    trace_map = {t.sample_id: t for t in traces}
    families = {t.sample_id: t.family for t in traces}
    if len(set(families.values())) < 2:
        raise InsufficientFamiliesError(
            f"training needs >= 2 families, got {sorted(set(families.values()))}"
        )
    if params is None:
        params = init_params(h, cfg.seed)
    adam = Adam(params, cfg)
    history: list[tuple[int, float]] = []
    best_loss = np.inf
    best_params = params.copy()
    initial_loss = np.nan
    # one fixed pair set per run: with lr=0 the loss stays constant
    pair_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x9A135]))
    pairs = make_pairs(families, pair_rng, cfg.max_same_pairs)
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch]))
        if cfg.batch_size and cfg.batch_size < len(pairs):
            # shuffle the label groups separately and interleave, so every
            # even-sized batch keeps the +1/-1 balance
            same = [p for p in pairs if p[2] == 1]
            cross = [p for p in pairs if p[2] == -1]
            shuffled = []
            for group in (same, cross):
                order = rng.permutation(len(group))
                shuffled.append([group[i] for i in order])
            interleaved = [
                p for duo in zip(shuffled[0], shuffled[1]) for p in duo
            ]
            for leftover in shuffled[0][len(shuffled[1]):] + shuffled[1][len(shuffled[0]):]:
                interleaved.append(leftover)
            batches = [
                interleaved[k:k + cfg.batch_size]
                for k in range(0, len(interleaved), cfg.batch_size)
            ]
        else:
            batches = [pairs]
        epoch_loss = 0.0
        n_pairs = 0
        for batch in batches:
            loss, grads = _batch_loss_and_grads(params, h, trace_map, batch)
            epoch_loss += loss
            n_pairs += len(batch)
            adam.step(params, grads)
        mean_loss = epoch_loss / max(n_pairs, 1)
        if not np.isfinite(mean_loss):
            raise DivergenceError(
                f"loss became non-finite at epoch {epoch} ({mean_loss}); "
                f"history: {history[-3:]}"
            )
        history.append((epoch, mean_loss))
        if epoch == 0:
            initial_loss = mean_loss
        if mean_loss < best_loss:
            best_loss = mean_loss
            best_params = params.copy()
    final_loss = history[-1][1]
    restored = False
    if final_loss > initial_loss:
        params = best_params
        final_loss = best_loss
        restored = True
    return TrainResult(params, history, initial_loss, final_loss, restored)


@dataclass
class GradCheckBatch:
    """Encode items plus pair labels; the loss closed over parameters."""

    items: list[tuple[WindowData, Optional[np.ndarray]]]
    pairs: list[tuple[int, int, int]]


def _gradcheck_loss_and_grads(
    params: ModelParams, h: ModelHyperparams, batch: GradCheckBatch, want_grads: bool
):
    embs = []
    caches = []
    for wd, prior in batch.items:
        emb, cache = encode_window(params, h, wd, prior)
        embs.append(emb)
        caches.append(cache)
    loss = 0.0
    d_embs = [np.zeros_like(e) for e in embs]
    for a, b, y in batch.pairs:
        rho = pearson(embs[a], embs[b])
        resid = rho - y
        loss += resid * resid
        if want_grads:
            da, db = pearson_gradient(embs[a], embs[b])
            d_embs[a] += 2.0 * resid * da
            d_embs[b] += 2.0 * resid * db
    if not want_grads:
        return loss, None
    grads = params.zeros_like()
    for cache, de in zip(caches, d_embs):
        backward_window(cache, de, params, h, grads)
    return loss, grads


def _min_nonzero_abs(arr: np.ndarray) -> float:
    nz = np.abs(arr[arr != 0.0])
    return float(nz.min()) if nz.size else np.inf


def activation_margin(params: ModelParams, h: ModelHyperparams, batch: GradCheckBatch) -> float:
    """Smallest nonzero |pre-activation| across the batch.

    Exact zeros come from values an earlier layer already clipped; they
    stay zero under small parameter perturbations and do not hurt finite
    differences. Values merely near zero do.
    """
    margin = np.inf
    for wd, prior in batch.items:
        _, cache = encode_window(params, h, wd, prior)
        margin = min(margin, _min_nonzero_abs(cache.attn.pre))
        if cache.fuse.hidden_pre is not None:
            margin = min(margin, _min_nonzero_abs(cache.fuse.hidden_pre))
        for mg_cache in cache.mg_caches:
            if mg_cache is None:
                continue
            for layer in mg_cache.layers:
                margin = min(margin, _min_nonzero_abs(layer.pre_v))
                if layer.pre_members.size:
                    margin = min(margin, _min_nonzero_abs(layer.pre_members))
    return margin


def gradient_check(
    params: ModelParams, h: ModelHyperparams, batch: GradCheckBatch, eps: float = 1e-5
) -> float:
    """Max |analytic - central difference| / max(1, |analytic|) over scalars."""
    if not (1e-7 <= eps <= 1e-3):
        raise InputError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    _, grads = _gradcheck_loss_and_grads(params, h, batch, want_grads=True)
    flat = params.flatten()
    analytic = grads.flatten()
    worst = 0.0
    for i in range(flat.size):
        saved = flat[i]
        flat[i] = saved + eps
        hi, _ = _gradcheck_loss_and_grads(params.unflatten(flat), h, batch, False)
        flat[i] = saved - eps
        lo, _ = _gradcheck_loss_and_grads(params.unflatten(flat), h, batch, False)
        flat[i] = saved
        fd = (hi - lo) / (2.0 * eps)
        err = abs(analytic[i] - fd) / max(1.0, abs(analytic[i]))
        if err > worst:
            worst = err
    return worst
