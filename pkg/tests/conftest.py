"""Shared builders and independent oracles for the test suite.

The oracles here are deliberately naive (full enumeration, literal set
algebra) and never call the code paths they check.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from mgdvd.metagraphs import MetaGraph
from mgdvd.schema import DEFAULT_SCHEMA, EntityRef, EntityType, Event
from mgdvd.windows import HeteroGraph


def ref(token: str) -> EntityRef:
    return EntityRef.from_token(token)


def ev(ts: float, src: str, rel: str, dst: str, sid: str = "s") -> Event:
    return Event(ts, ref(src), DEFAULT_SCHEMA.relation(rel), ref(dst), sid)


def graph_of(events, index=1, start=0.0, end=60.0) -> HeteroGraph:
    return HeteroGraph.from_events(events, index, start, end)


def random_events(rng: np.random.Generator, count: int, t_max: float,
                  n_entities: int = 12, sid: str = "s") -> list[Event]:
    """Schema-legal random events over a small entity pool, time ordered."""
    rels = [DEFAULT_SCHEMA.relations[name] for name in DEFAULT_SCHEMA.relation_order]
    times = np.sort(rng.uniform(0.0, t_max, size=count))
    events = []
    for ts in times:
        rel = rels[rng.integers(len(rels))]
        src = EntityRef(rel.src, f"{rel.src.token}{rng.integers(n_entities)}")
        dst = EntityRef(rel.dst, f"{rel.dst.token}{rng.integers(n_entities)}")
        events.append(Event(float(ts), src, rel, dst, sid))
    return events


def random_graph(rng: np.random.Generator, max_nodes: int = 25,
                 n_edges: int = 40) -> HeteroGraph:
    """Random typed multigraph with a process-heavy node population."""
    nodes: list[EntityRef] = []
    n_proc = int(rng.integers(2, max(3, max_nodes // 3)))
    for i in range(n_proc):
        nodes.append(EntityRef(EntityType.PROCESS, f"p{i}"))
    others = [t for t in EntityType if t is not EntityType.PROCESS]
    while len(nodes) < max_nodes:
        t = others[rng.integers(len(others))]
        nodes.append(EntityRef(t, f"{t.token}{rng.integers(max_nodes)}"))
    nodes = list(dict.fromkeys(nodes))
    by_type: dict[EntityType, list[EntityRef]] = {}
    for node in nodes:
        by_type.setdefault(node.etype, []).append(node)
    rels = [DEFAULT_SCHEMA.relations[name] for name in DEFAULT_SCHEMA.relation_order]
    events = []
    ts = 0.0
    for _ in range(n_edges):
        rel = rels[rng.integers(len(rels))]
        if rel.src not in by_type or rel.dst not in by_type:
            continue
        src = by_type[rel.src][rng.integers(len(by_type[rel.src]))]
        dst = by_type[rel.dst][rng.integers(len(by_type[rel.dst]))]
        events.append(Event(ts, src, rel, dst, "s"))
        ts += 0.1
    return graph_of(events, end=max(60.0, ts + 1.0))


def brute_force_instances(g: HeteroGraph, m: MetaGraph, root: EntityRef) -> set[tuple[str, ...]]:
    """Exhaustive typed assignment enumeration filtered by edge checks.

    Returns tuples of mapped node ids in catalog declaration order.
    """
    support = {(src, rel, dst) for (src, rel, dst) in g.edges}
    names = m.node_order
    required = m.required_edges()
    candidates: list[list[EntityRef]] = []
    for name in names:
        if name == m.source:
            candidates.append([root])
        else:
            want = m.node_types[name]
            candidates.append(
                sorted(
                    (n for n in g.nodes if n.etype is want and n != root),
                    key=lambda r: r.sort_key(),
                )
            )
    found = set()
    for combo in itertools.product(*candidates):
        assign = dict(zip(names, combo))
        if all((assign[a], rel, assign[b]) in support for a, rel, b in required):
            found.add(tuple(assign[name].id for name in names))
    return found


def brute_force_delta(g_prev, g_cur, mode: str = "both") -> set[EntityRef]:
    """Literal set-difference evaluation of the changed-node definition."""
    prev_edges = set(g_prev.edges) if g_prev is not None else set()
    cur_edges = set(g_cur.edges)
    prev_nodes = g_prev.nodes if g_prev is not None else frozenset()
    added = cur_edges - prev_edges
    removed = prev_edges - cur_edges
    if mode == "source":
        return {s for (s, _, _) in added | removed} & set(g_cur.nodes)
    out = set()
    for (s, _, d) in added | removed:
        out.add(s)
        out.add(d)
    return out & (set(g_cur.nodes) | set(prev_nodes))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class TrainedCorpus:
    """Full desk-scale corpus with a trained model, built once per session."""

    def __init__(self, root):
        import time

        from mgdvd.detector import DetectorConfig
        from mgdvd.encoders import ModelHyperparams
        from mgdvd.metagraphs import load_default_catalog
        from mgdvd.pipeline import build_gallery, build_sample_trace
        from mgdvd.schema import read_event_file
        from mgdvd.synthgen import default_templates, generate_corpus
        from mgdvd.trainer import OptimizerConfig, train
        from mgdvd.windows import WindowConfig

        t0 = time.monotonic()
        self.root = root
        self.catalog = load_default_catalog()
        self.h = ModelHyperparams()
        self.wcfg = WindowConfig()
        self.dcfg = DetectorConfig()
        self.rows = generate_corpus(
            default_templates(), 20, 150.0, seed=1, out_dir=root, catalog=self.catalog
        )
        self.train_rows = [r for r in self.rows if r.split == "train"]
        self.test_rows = [r for r in self.rows if r.split == "test"]
        self.traces = [
            build_sample_trace(
                read_event_file(root / r.path), self.h, self.catalog,
                wcfg=self.wcfg, sample_id=r.sample_id, family=r.family,
            )
            for r in self.train_rows
        ]
        self.result = train(self.traces, OptimizerConfig(lr=2e-3, epochs=200, seed=0), self.h)
        self.gallery = build_gallery(self.result.params, self.h, self.traces)
        self.build_seconds = time.monotonic() - t0

    @property
    def params(self):
        return self.result.params


@pytest.fixture(scope="session")
def trained_corpus(tmp_path_factory) -> TrainedCorpus:
    return TrainedCorpus(tmp_path_factory.mktemp("corpus"))
