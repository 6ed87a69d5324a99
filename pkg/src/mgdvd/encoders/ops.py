"""Window-embedding forward operations for both encoder paths.

The low-churn path assembles a representation matrix per meta-graph from
the prior embedding and dynamic-neighbor states, pools it, and fuses the
pooled vectors with attention. The high-churn path re-aggregates the
target's vector layer-wise with type-frequency neighbor weights (dynamic
neighbors only until the last layer, then all). Both share the attention
+ projection tail.

Every forward returns the value plus a cache consumed by the backward
pass in ``backprop``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import EmptyNeighborSetError, InputError, LengthMismatchError
from ..metagraphs import NeighborSet
from ..schema import EntityRef
from .params import ModelHyperparams, ModelParams

logger = logging.getLogger(__name__)

Member = tuple[EntityRef, int]


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max()
    e = np.exp(shifted)
    return e / e.sum()


def select_encoder(ratio: float, gamma: float) -> str:
    """Dispatch on churn: at or below the threshold stays incremental."""
    return "dwiue" if ratio <= gamma else "chgae"


def _truncation_key(member: Member) -> tuple[int, int, str]:
    ref, order = member
    return (order, ref.etype.rank, ref.id)


def _assembly_key(member: Member) -> tuple[int, int, str]:
    ref, order = member
    return (ref.etype.rank, order, ref.id)


def select_members(members: Sequence[Member], rep_dim: int) -> list[Member]:
    """Pick at most rep_dim-1 members (closest first) in assembly order."""
    chosen = list(members)
    limit = rep_dim - 1
    if len(chosen) > limit:
        chosen.sort(key=_truncation_key)
        dropped = len(chosen) - limit
        chosen = chosen[:limit]
        logger.warning("representation matrix truncated: dropped %d of %d members",
                       dropped, limit + dropped)
    chosen.sort(key=_assembly_key)
    return chosen


def build_representation_matrix(
    prior: Optional[np.ndarray],
    neigh: "NeighborSet | Sequence[Member]",
    states,
    h: ModelHyperparams,
    prior_proj: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Assemble the (rep_dim x rep_dim) matrix: prior row, member rows, padding.

    ``prior`` is the previous window's graph embedding; it is linearly
    projected to rep_dim via ``prior_proj`` (or used as-is when already
    that length). Absent prior means the first window: a zero row.
    """
    d = h.rep_dim
    members = neigh.members if isinstance(neigh, NeighborSet) else list(neigh)
    rows = np.zeros((d, d), dtype=np.float64)
    if prior is not None:
        if prior_proj is not None:
            rows[0] = prior_proj @ prior
        elif len(prior) == d:
            rows[0] = prior
        else:
            raise LengthMismatchError(
                f"prior has length {len(prior)}, expected {d} or a projection"
            )
    for i, (ref, _) in enumerate(select_members(members, d), start=1):
        vec = states.get(ref)
        if len(vec) != d:
            raise LengthMismatchError(f"state for {ref.token()} has length {len(vec)}")
        rows[i] = vec
    return rows


def pool_rows(matrix: np.ndarray) -> np.ndarray:
    return matrix.mean(axis=0)


@dataclass
class AttnCache:
    reps: np.ndarray     # (m, d)
    context: np.ndarray  # (d,)
    pre: np.ndarray      # (m,)
    theta: np.ndarray    # (m,)


def metagraph_attention(
    reps: np.ndarray, att_w: np.ndarray, att_b: np.ndarray, slope: float
) -> tuple[np.ndarray, AttnCache]:
    """Softmax weights over per-meta-graph representations.

    Each representation is scored against the shared context vector (the
    mean representation) through one linear layer and a LeakyReLU.
    """
    reps = np.asarray(reps, dtype=np.float64)
    m, d = reps.shape
    w_self, w_ctx = att_w[:d], att_w[d:]
    context = reps.mean(axis=0)
    pre = reps @ w_self + float(w_ctx @ context) + float(att_b[0])
    z = leaky_relu(pre, slope)
    theta = softmax(z)
    return theta, AttnCache(reps, context, pre, theta)


@dataclass
class FuseCache:
    reps: np.ndarray
    theta: np.ndarray
    fused: np.ndarray              # (d,)
    hidden_pre: Optional[np.ndarray]
    hidden: Optional[np.ndarray]


def fuse_graph_embedding(
    reps: np.ndarray, theta: np.ndarray, params: ModelParams, h: ModelHyperparams
) -> tuple[np.ndarray, FuseCache]:
    """Weighted sum of representations followed by the projection head."""
    reps = np.asarray(reps, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if reps.shape[0] != theta.shape[0]:
        raise LengthMismatchError(
            f"{reps.shape[0]} representations vs {theta.shape[0]} weights"
        )
    fused = theta @ reps
    if h.two_layer_projection:
        hidden_pre = params["proj_w1"] @ fused + params["proj_b1"]
        hidden = relu(hidden_pre)
        emb = params["proj_w2"] @ hidden + params["proj_b2"]
        return emb, FuseCache(reps, theta, fused, hidden_pre, hidden)
    emb = params["proj_w"] @ fused + params["proj_b"]
    return emb, FuseCache(reps, theta, fused, None, None)


def chgae_neighbor_weights(neigh: "NeighborSet | Sequence[Member]") -> np.ndarray:
    """Type-frequency/order weights over the full neighbor set, summing to 1."""
    members = neigh.members if isinstance(neigh, NeighborSet) else list(neigh)
    if not members:
        raise EmptyNeighborSetError("neighbor weights need a non-empty set")
    n = len(members)
    type_counts: dict[int, int] = {}
    for ref, _ in members:
        type_counts[ref.etype.rank] = type_counts.get(ref.etype.rank, 0) + 1
    scores = np.array(
        [np.exp(type_counts[ref.etype.rank] / (n * order)) for ref, order in members],
        dtype=np.float64,
    )
    return scores / scores.sum()


def chgae_neighbor_weight(neigh: "NeighborSet | Sequence[Member]", u: Member) -> float:
    members = neigh.members if isinstance(neigh, NeighborSet) else list(neigh)
    weights = chgae_neighbor_weights(members)
    for i, member in enumerate(members):
        if member == u:
            return float(weights[i])
    raise InputError(f"{u[0].token()} is not a member of the neighbor set")


@dataclass
class LayerCache:
    x_v_in: np.ndarray          # (d,)
    members_in: np.ndarray      # (n, d)
    masked_alphas: np.ndarray   # (n,)
    agg: np.ndarray             # (d,)
    pre_v: np.ndarray           # (d,)
    pre_members: np.ndarray     # (n, d)


@dataclass
class ChgaeCache:
    layers: list[LayerCache]
    out: np.ndarray


def chgae_aggregate(
    v_state: np.ndarray,
    member_states: np.ndarray,
    alphas: np.ndarray,
    dyn_mask: np.ndarray,
    params: ModelParams,
    h: ModelHyperparams,
) -> tuple[np.ndarray, ChgaeCache]:
    """K-layer aggregation of the target vector.

    Layers 1..K-1 sum over dynamic members only; layer K over all
    members. Member vectors advance by the self-transform (their own
    neighborhoods are outside the rooted walk). Weights are the Eq-style
    type-frequency alphas over the full member set, not renormalized on
    the dynamic subset.
    """
    agg_w, agg_eps = params["agg_w"], params["agg_eps"]
    k_layers = h.layers
    x_v = np.asarray(v_state, dtype=np.float64)
    if len(alphas):
        members = np.asarray(member_states, dtype=np.float64).reshape(len(alphas), -1)
    else:
        members = np.zeros((0, x_v.shape[0]))
    caches: list[LayerCache] = []
    for k in range(1, k_layers + 1):
        scale = 1.0 + float(agg_eps[k - 1])
        if k < k_layers:
            masked = np.where(dyn_mask, alphas, 0.0) if len(alphas) else alphas
        else:
            masked = alphas
        agg = masked @ members if len(alphas) else np.zeros_like(x_v)
        pre_v = scale * x_v + agg_w[k - 1] @ agg
        x_v_next = relu(pre_v)
        pre_members = scale * members
        members_next = relu(pre_members)
        caches.append(LayerCache(x_v, members, masked, agg, pre_v, pre_members))
        x_v, members = x_v_next, members_next
    return x_v, ChgaeCache(caches, x_v)


@dataclass
class MgData:
    """Parameter-independent inputs of one meta-graph branch in one window."""

    member_states: np.ndarray            # (n, rep_dim)
    alphas: Optional[np.ndarray] = None  # high-churn path only
    dyn_mask: Optional[np.ndarray] = None


@dataclass
class WindowData:
    """Everything needed to encode one window, minus trainable parameters."""

    encoder: str                 # "dwiue" | "chgae"
    mg: list[MgData]
    v_state: Optional[np.ndarray]
    index: int
    ratio: float = 0.0


@dataclass
class WindowCache:
    encoder: str
    data: WindowData
    prior: Optional[np.ndarray]
    reps: np.ndarray
    mg_caches: list
    attn: AttnCache
    fuse: FuseCache
    emb: np.ndarray


def encode_window(
    params: ModelParams,
    h: ModelHyperparams,
    wd: WindowData,
    prior: Optional[np.ndarray],
) -> tuple[np.ndarray, WindowCache]:
    """Encode one window from precomputed inputs; dispatch chosen upstream."""
    d = h.rep_dim
    reps = np.empty((len(wd.mg), d), dtype=np.float64)
    mg_caches: list = []
    if wd.encoder == "dwiue":
        row0 = params["prior_proj"] @ prior if prior is not None else np.zeros(d)
        for i, mg in enumerate(wd.mg):
            reps[i] = (row0 + mg.member_states.sum(axis=0)) / d
            mg_caches.append(None)
    else:
        for i, mg in enumerate(wd.mg):
            vec, cache = chgae_aggregate(
                wd.v_state, mg.member_states, mg.alphas, mg.dyn_mask, params, h
            )
            reps[i] = vec
            mg_caches.append(cache)
    theta, attn_cache = metagraph_attention(
        reps, params["att_w"], params["att_b"], h.leaky_slope
    )
    emb, fuse_cache = fuse_graph_embedding(reps, theta, params, h)
    return emb, WindowCache(
        wd.encoder, wd, prior, reps, mg_caches, attn_cache, fuse_cache, emb
    )


def _window_data_from_neighbor_sets(
    encoder: str,
    neighbor_sets: Sequence[NeighborSet],
    states,
    h: ModelHyperparams,
    delta=None,
    v: Optional[EntityRef] = None,
) -> WindowData:
    mgs: list[MgData] = []
    if encoder == "dwiue":
        for ns in neighbor_sets:
            chosen = select_members(ns.members, h.rep_dim)
            mat = (
                np.stack([states.get(ref) for ref, _ in chosen])
                if chosen
                else np.zeros((0, h.rep_dim))
            )
            mgs.append(MgData(member_states=mat))
        return WindowData("dwiue", mgs, None, 0)
    for ns in neighbor_sets:
        members = list(ns.members)
        mat = (
            np.stack([states.get(ref) for ref, _ in members])
            if members
            else np.zeros((0, h.rep_dim))
        )
        alphas = chgae_neighbor_weights(members) if members else np.zeros(0)
        dyn = (
            np.array([ref in delta for ref, _ in members], dtype=bool)
            if delta is not None
            else np.ones(len(members), dtype=bool)
        )
        mgs.append(MgData(member_states=mat, alphas=alphas, dyn_mask=dyn))
    return WindowData("chgae", mgs, states.get(v), 0)


def dwiue_encode(
    prior: Optional[np.ndarray],
    neighbor_sets: Sequence[NeighborSet],
    states,
    params: ModelParams,
    h: ModelHyperparams,
) -> tuple[np.ndarray, WindowCache]:
    """Low-churn path: representation matrices from dynamic neighbors + prior."""
    wd = _window_data_from_neighbor_sets("dwiue", neighbor_sets, states, h)
    return encode_window(params, h, wd, prior)


def chgae_encode(
    neighbor_sets: Sequence[NeighborSet],
    delta,
    v: EntityRef,
    states,
    params: ModelParams,
    h: ModelHyperparams,
) -> tuple[np.ndarray, WindowCache]:
    """High-churn path: layer-wise re-aggregation rooted at the target."""
    wd = _window_data_from_neighbor_sets("chgae", neighbor_sets, states, h, delta, v)
    return encode_window(params, h, wd, None)
