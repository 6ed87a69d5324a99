"""Analytic gradients through the window-encoding chain.

Backward passes mirror the forward caches from ``ops``: projection head,
attention softmax, then either the pooled-matrix branch (gradient lands
on the prior projection) or the layer-wise aggregation branch (gradients
on the per-layer weights and trade-off scalars). The prior embedding
entering a window is treated as constant: gradients do not flow across
window boundaries.
"""

from __future__ import annotations

import numpy as np

from .ops import AttnCache, ChgaeCache, FuseCache, WindowCache
from .params import ModelHyperparams, ModelParams


def _relu_mask(pre: np.ndarray) -> np.ndarray:
    return (pre > 0).astype(np.float64)


def _leaky_mask(pre: np.ndarray, slope: float) -> np.ndarray:
    return np.where(pre >= 0, 1.0, slope)


def backward_fuse(
    cache: FuseCache, d_emb: np.ndarray, params: ModelParams, h: ModelHyperparams,
    grads: ModelParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Returns (d_theta, d_reps contribution from the fused sum)."""
    if h.two_layer_projection:
        grads.arrays["proj_w2"] += np.outer(d_emb, cache.hidden)
        grads.arrays["proj_b2"] += d_emb
        d_hidden = params["proj_w2"].T @ d_emb
        d_hidden_pre = d_hidden * _relu_mask(cache.hidden_pre)
        grads.arrays["proj_w1"] += np.outer(d_hidden_pre, cache.fused)
        grads.arrays["proj_b1"] += d_hidden_pre
        d_fused = params["proj_w1"].T @ d_hidden_pre
    else:
        grads.arrays["proj_w"] += np.outer(d_emb, cache.fused)
        grads.arrays["proj_b"] += d_emb
        d_fused = params["proj_w"].T @ d_emb
    d_theta = cache.reps @ d_fused
    d_reps = np.outer(cache.theta, d_fused)
    return d_theta, d_reps


def backward_attention(
    cache: AttnCache, d_theta: np.ndarray, params: ModelParams, h: ModelHyperparams,
    grads: ModelParams,
) -> np.ndarray:
    """Returns d_reps contribution through the attention scores."""
    theta = cache.theta
    m, d = cache.reps.shape
    d_z = theta * (d_theta - float(theta @ d_theta))
    d_pre = d_z * _leaky_mask(cache.pre, h.leaky_slope)
    w_self, w_ctx = params["att_w"][:d], params["att_w"][d:]
    grads.arrays["att_w"][:d] += cache.reps.T @ d_pre
    grads.arrays["att_w"][d:] += d_pre.sum() * cache.context
    grads.arrays["att_b"][0] += d_pre.sum()
    d_reps = np.outer(d_pre, w_self)
    d_context = d_pre.sum() * w_ctx
    d_reps += d_context[None, :] / m
    return d_reps


def backward_chgae(
    cache: ChgaeCache, d_out: np.ndarray, params: ModelParams, h: ModelHyperparams,
    grads: ModelParams,
) -> None:
    agg_w, agg_eps = params["agg_w"], params["agg_eps"]
    d_x_v = d_out
    d_members = np.zeros_like(cache.layers[0].members_in)
    for k in range(h.layers, 0, -1):
        layer = cache.layers[k - 1]
        scale = 1.0 + float(agg_eps[k - 1])
        d_pre_v = d_x_v * _relu_mask(layer.pre_v)
        grads.arrays["agg_eps"][k - 1] += float(d_pre_v @ layer.x_v_in)
        grads.arrays["agg_w"][k - 1] += np.outer(d_pre_v, layer.agg)
        d_agg = agg_w[k - 1].T @ d_pre_v
        d_members_from_agg = np.outer(layer.masked_alphas, d_agg)
        d_pre_members = d_members * _relu_mask(layer.pre_members)
        if d_pre_members.size:
            grads.arrays["agg_eps"][k - 1] += float(
                np.sum(d_pre_members * layer.members_in)
            )
        d_x_v = scale * d_pre_v
        d_members = d_members_from_agg + scale * d_pre_members
    # layer inputs are constant state vectors; nothing further


def backward_window(
    cache: WindowCache,
    d_emb: np.ndarray,
    params: ModelParams,
    h: ModelHyperparams,
    grads: ModelParams,
) -> None:
    """Accumulate parameter gradients for one encoded window."""
    d_theta, d_reps = backward_fuse(cache.fuse, d_emb, params, h, grads)
    d_reps = d_reps + backward_attention(cache.attn, d_theta, params, h, grads)
    d = h.rep_dim
    if cache.encoder == "dwiue":
        if cache.prior is not None:
            d_row0 = d_reps.sum(axis=0) / d
            grads.arrays["prior_proj"] += np.outer(d_row0, cache.prior)
    else:
        for i, mg_cache in enumerate(cache.mg_caches):
            backward_chgae(mg_cache, d_reps[i], params, h, grads)
