"""Stream-to-embedding pipeline shared by training, detection, and bench.

Per window: advance the graph, compute churn, pick the encoder (or force
one for ablation modes), build per-meta-graph inputs via the matcher,
and encode. Matching inputs are parameter-independent, so training
precomputes them once per sample as a trace and re-runs only the numeric
forward pass each epoch.

Modes: ``auto`` dispatches on churn with the dynamic walk; ``static-walk``
dispatches on churn but re-walks every process node with full neighbor
sets each window (the static strategy's defining cost) and aggregates
over all members in every layer; ``dwiue``/``chgae`` force one encoder
with the dynamic walk.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .encoders.features import StateStore
from .encoders.ops import (
    MgData,
    WindowData,
    chgae_aggregate,
    chgae_neighbor_weights,
    encode_window,
    select_encoder,
    select_members,
)
from .encoders.params import ModelHyperparams, ModelParams
from .errors import InputError
from .metagraphs import Catalog, neighbor_set
from .schema import DEFAULT_SCHEMA, EntityRef, EntityType, Event, NetworkSchema
from .windows import DynamicNodeSet, HeteroGraph, WindowConfig, iter_windows

MODES = ("auto", "static-walk", "dwiue", "chgae")


def find_target(events: Sequence[Event]) -> Optional[EntityRef]:
    """The monitored process: first process-typed endpoint in stream order."""
    for ev in events:
        if ev.src.etype is EntityType.PROCESS:
            return ev.src
        if ev.dst.etype is EntityType.PROCESS:
            return ev.dst
    return None


def _resolve(mode: str, ratio: float, gamma: float) -> tuple[str, str]:
    """Returns (encoder, walk) for a window under the given mode."""
    if mode not in MODES:
        raise InputError(f"unknown mode {mode!r}, expected one of {MODES}")
    if mode == "auto":
        return select_encoder(ratio, gamma), "dynamic"
    if mode == "static-walk":
        return select_encoder(ratio, gamma), "static"
    return mode, "dynamic"


def build_window_data(
    graph: HeteroGraph,
    delta: DynamicNodeSet,
    ratio: float,
    root: Optional[EntityRef],
    catalog: Catalog,
    schema: NetworkSchema,
    h: ModelHyperparams,
    states: StateStore,
    mode: str = "auto",
) -> WindowData:
    encoder, walk = _resolve(mode, ratio, h.gamma)
    d = h.rep_dim
    in_graph = root is not None and root in graph.nodes
    mgs: list[MgData] = []
    for m in catalog:
        if not in_graph:
            if encoder == "dwiue":
                mgs.append(MgData(member_states=np.zeros((0, d))))
            else:
                mgs.append(MgData(np.zeros((0, d)), np.zeros(0), np.zeros(0, dtype=bool)))
            continue
        if encoder == "dwiue":
            restrict = delta if walk == "dynamic" else None
            ns = neighbor_set(graph, m, root, restrict, schema)
            chosen = select_members(ns.members, d)
            mat = (
                np.stack([states.get(ref) for ref, _ in chosen])
                if chosen
                else np.zeros((0, d))
            )
            mgs.append(MgData(member_states=mat))
        else:
            ns = neighbor_set(graph, m, root, None, schema)
            members = list(ns.members)
            mat = (
                np.stack([states.get(ref) for ref, _ in members])
                if members
                else np.zeros((0, d))
            )
            alphas = chgae_neighbor_weights(members) if members else np.zeros(0)
            if walk == "dynamic":
                dyn = np.array([ref in delta for ref, _ in members], dtype=bool)
            else:
                dyn = np.ones(len(members), dtype=bool)
            mgs.append(MgData(member_states=mat, alphas=alphas, dyn_mask=dyn))
    v_state = states.get(root) if root is not None else np.zeros(d)
    return WindowData(encoder, mgs, v_state, graph.index, ratio)


@dataclass
class EncodedWindow:
    index: int
    ratio: float
    encoder: str
    embedding: np.ndarray
    theta: np.ndarray


@dataclass
class SampleTrace:
    """Parameter-independent encoding inputs for a whole stream."""

    sample_id: str
    family: str
    windows: list[WindowData]


def build_sample_trace(
    events: Sequence[Event],
    h: ModelHyperparams,
    catalog: Catalog,
    schema: NetworkSchema = DEFAULT_SCHEMA,
    wcfg: WindowConfig = WindowConfig(),
    mode: str = "auto",
    sample_id: str = "",
    family: str = "",
    target: Optional[EntityRef] = None,
) -> SampleTrace:
    events = list(events)
    root = target if target is not None else find_target(events)
    states = StateStore(h.rep_dim)
    windows = [
        build_window_data(
            step.graph, step.delta, step.ratio, root, catalog, schema, h, states, mode
        )
        for step in iter_windows(events, wcfg)
    ]
    sid = sample_id or (events[0].sample_id if events else "")
    return SampleTrace(sid, family, windows)


def forward_trace(
    params: ModelParams,
    h: ModelHyperparams,
    trace: SampleTrace,
    want_final_cache: bool = False,
):
    """Run the numeric forward pass over a trace; prior chains across windows."""
    prior: Optional[np.ndarray] = None
    cache = None
    emb: Optional[np.ndarray] = None
    for wd in trace.windows:
        emb, cache = encode_window(params, h, wd, prior)
        prior = emb
    if emb is None:
        raise InputError(f"trace for {trace.sample_id!r} has no windows")
    return (emb, cache) if want_final_cache else (emb, None)


def static_rewalk_window(
    graph: HeteroGraph,
    root: Optional[EntityRef],
    catalog: Catalog,
    schema: NetworkSchema,
    h: ModelHyperparams,
    states: StateStore,
    params: ModelParams,
) -> int:
    """Re-learn a node vector for every process in the window.

    This is the static-walk ablation's defining cost: full neighbor sets
    and a fresh aggregation for all process nodes each window, not just
    for changed neighborhoods of the target. Returns the number of nodes
    walked. The target itself is excluded (the main path handles it).
    """
    walked = 0
    for node in sorted(graph.nodes, key=lambda r: r.sort_key()):
        if node.etype is not EntityType.PROCESS or node == root:
            continue
        v_state = states.get(node)
        for m in catalog:
            ns = neighbor_set(graph, m, node, None, schema)
            members = list(ns.members)
            if members:
                mat = np.stack([states.get(ref) for ref, _ in members])
                alphas = chgae_neighbor_weights(members)
                dyn = np.ones(len(members), dtype=bool)
            else:
                mat = np.zeros((0, h.rep_dim))
                alphas = np.zeros(0)
                dyn = np.zeros(0, dtype=bool)
            chgae_aggregate(v_state, mat, alphas, dyn, params, h)
        walked += 1
    return walked


def build_gallery(params, h: ModelHyperparams, traces: Sequence[SampleTrace],
                  per_window: bool = True):
    """Reference gallery from training traces.

    Per-window entries cover the whole embedding trajectory, so live
    windows early in a stream have references of comparable shape;
    constant embeddings (no usable correlation) are skipped.
    """
    from .detector import Gallery

    gallery = Gallery(h.embed_dim)
    for trace in traces:
        prior: Optional[np.ndarray] = None
        for i, wd in enumerate(trace.windows, start=1):
            emb, _ = encode_window(params, h, wd, prior)
            prior = emb
            if per_window and np.ptp(emb) > 0.0:
                gallery.add(f"{trace.sample_id}#w{i}", trace.family, emb)
        if not per_window and prior is not None and np.ptp(prior) > 0.0:
            gallery.add(trace.sample_id, trace.family, prior)
    return gallery


def encode_stream(
    events: Sequence[Event],
    params: ModelParams,
    h: ModelHyperparams,
    catalog: Catalog,
    schema: NetworkSchema = DEFAULT_SCHEMA,
    wcfg: WindowConfig = WindowConfig(),
    mode: str = "auto",
    target: Optional[EntityRef] = None,
) -> list[EncodedWindow]:
    """Windows -> per-window embeddings, the whole front of the pipeline."""
    events = list(events)
    root = target if target is not None else find_target(events)
    states = StateStore(h.rep_dim)
    out: list[EncodedWindow] = []
    prior: Optional[np.ndarray] = None
    for step in iter_windows(events, wcfg):
        wd = build_window_data(
            step.graph, step.delta, step.ratio, root, catalog, schema, h, states, mode
        )
        if mode == "static-walk":
            static_rewalk_window(step.graph, root, catalog, schema, h, states, params)
        emb, cache = encode_window(params, h, wd, prior)
        prior = emb
        out.append(EncodedWindow(step.graph.index, step.ratio, wd.encoder, emb,
                                 cache.attn.theta))
    return out
