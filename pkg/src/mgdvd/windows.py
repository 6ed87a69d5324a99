"""Sliding-window construction of the typed graph sequence.

Each window W_t = [(t-1)*p, (t-1)*p + W) yields one multigraph over the
events whose timestamps fall inside it. Windows advance incrementally:
surviving events are reused, expired ones dropped, new ones joined, and
the set of nodes whose incident edges changed between consecutive
windows (the dynamic node set) is reported alongside each graph.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Literal, Optional

from .errors import EmptyGraphError, InputError, OutOfOrderStreamError
from .schema import EntityRef, Event

DeltaMode = Literal["both", "source"]

EdgeKey = tuple[EntityRef, str, EntityRef]


@dataclass(frozen=True)
class WindowConfig:
    window: float = 60.0
    step: float = 30.0

    def __post_init__(self):
        if not (0 < self.step <= self.window):
            raise InputError(f"need 0 < step <= window, got step={self.step} window={self.window}")


def _edge_key(ev: Event) -> EdgeKey:
    return (ev.src, ev.rel.name, ev.dst)


@dataclass
class HeteroGraph:
    """One window's typed multigraph snapshot.

    ``edges`` maps (src, relation name, dst) to its occurrence count in
    the window; ``events`` is the authoritative time-ordered content.
    """

    index: int
    start: float
    end: float
    events: tuple[Event, ...]
    nodes: frozenset[EntityRef] = field(default_factory=frozenset)
    edges: dict[EdgeKey, int] = field(default_factory=dict)

    # lazily built matcher index, see metagraphs.GraphIndex
    _graph_index: object = field(default=None, repr=False, compare=False)

    @staticmethod
    def empty(index: int = 0, start: float = 0.0, end: float = 0.0) -> "HeteroGraph":
        return HeteroGraph(index, start, end, ())

    @staticmethod
    def from_events(events: Iterable[Event], index: int, start: float, end: float) -> "HeteroGraph":
        evs = tuple(events)
        counts: Counter[EdgeKey] = Counter(_edge_key(e) for e in evs)
        nodes = frozenset(n for (s, _, d) in counts for n in (s, d))
        return HeteroGraph(index, start, end, evs, nodes, dict(counts))

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def edge_support(self) -> frozenset[EdgeKey]:
        return frozenset(self.edges)

    def sorted_edges(self) -> list[tuple[EdgeKey, int]]:
        return sorted(
            self.edges.items(),
            key=lambda kv: (kv[0][0].sort_key(), kv[0][1], kv[0][2].sort_key()),
        )


@dataclass
class DynamicNodeSet:
    """Nodes whose incident edge set changed between consecutive windows."""

    window_index: int
    nodes: frozenset[EntityRef]

    def __contains__(self, ref: EntityRef) -> bool:
        return ref in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)


def compute_dynamic_nodes(
    g_prev: Optional[HeteroGraph],
    g_cur: HeteroGraph,
    mode: DeltaMode = "both",
) -> DynamicNodeSet:
    """Dynamic node set between two consecutive window graphs.

    An edge counts as changed when it appears in exactly one of the two
    windows' distinct-edge sets. Default mode collects both endpoints of
    changed edges, intersected with V_t union V_{t-1}; mode "source"
    keeps the literal reading (source endpoints only, members of V_t).
    """
    prev_support = g_prev.edge_support() if g_prev is not None else frozenset()
    cur_support = g_cur.edge_support()
    changed = prev_support.symmetric_difference(cur_support)
    prev_nodes = g_prev.nodes if g_prev is not None else frozenset()
    if mode == "source":
        members = {s for (s, _, _) in changed} & g_cur.nodes
    else:
        members = {n for (s, _, d) in changed for n in (s, d)}
        members &= g_cur.nodes | prev_nodes
    return DynamicNodeSet(g_cur.index, frozenset(members))


def churn_ratio(delta: DynamicNodeSet, g: HeteroGraph) -> float:
    """|delta intersect V_t| / |V_t|; raises EmptyGraphError when V_t is empty."""
    if not g.nodes:
        raise EmptyGraphError(f"window {g.index} has no nodes")
    return len(delta.nodes & g.nodes) / len(g.nodes)


class _EventCursor:
    """Single-pass cursor over a time-ordered event iterable with peek."""

    def __init__(self, events: Iterable[Event]):
        self._it = iter(events)
        self._peeked: Optional[Event] = None
        self._last_ts = float("-inf")
        self.consumed = 0

    def peek(self) -> Optional[Event]:
        if self._peeked is None:
            nxt = next(self._it, None)
            if nxt is not None:
                if nxt.ts < self._last_ts:
                    raise OutOfOrderStreamError(
                        f"event at t={nxt.ts} after t={self._last_ts}"
                    )
                self._last_ts = nxt.ts
            self._peeked = nxt
        return self._peeked

    def take(self) -> Event:
        ev = self.peek()
        assert ev is not None
        self._peeked = None
        self.consumed += 1
        return ev


def advance_window(
    prev: Optional[HeteroGraph],
    stream: "_EventCursor | Iterable[Event]",
    cfg: WindowConfig = WindowConfig(),
    mode: DeltaMode = "both",
) -> tuple[HeteroGraph, DynamicNodeSet]:
    """Build the next window graph incrementally from ``prev``.

    Surviving events are carried over from the previous graph without
    re-reading them from the stream; only events newly entering the
    window are consumed. The result is identical to building the window
    from scratch over its events.
    """
    cursor = stream if isinstance(stream, _EventCursor) else _EventCursor(stream)
    t = 1 if prev is None else prev.index + 1
    start = (t - 1) * cfg.step
    end = start + cfg.window

    survivors: list[Event] = []
    if prev is not None:
        survivors = [e for e in prev.events if e.ts >= start]

    fresh: list[Event] = []
    while True:
        nxt = cursor.peek()
        if nxt is None or nxt.ts >= end:
            break
        ev = cursor.take()
        if ev.ts >= start:
            fresh.append(ev)
        # events below start can only occur on the very first window of a
        # resumed stream; with continuous advancement they never appear

    graph = HeteroGraph.from_events(survivors + fresh, t, start, end)
    delta = compute_dynamic_nodes(prev, graph, mode)
    return graph, delta


@dataclass
class WindowStep:
    graph: HeteroGraph
    delta: DynamicNodeSet
    ratio: float  # 0.0 for an empty window


def iter_windows(
    events: Iterable[Event],
    cfg: WindowConfig = WindowConfig(),
    mode: DeltaMode = "both",
) -> Iterator[WindowStep]:
    """Advance windows across a whole stream, updating state in place.

    Maintains a live event buffer plus edge/node occurrence counts, so
    each advance costs O(events entering or leaving) rather than a full
    rebuild; the yielded graphs are nevertheless identical to from-scratch
    construction. Every event is consumed from the iterable exactly once.
    """
    from collections import deque

    cursor = _EventCursor(events)
    if cursor.peek() is None:
        return
    buffer: deque[Event] = deque()
    counts: dict[EdgeKey, int] = {}
    incidence: dict[EntityRef, int] = {}

    def bump(ref: EntityRef, by: int) -> None:
        new = incidence.get(ref, 0) + by
        if new:
            incidence[ref] = new
        else:
            del incidence[ref]

    t = 0
    pending = True
    while pending:
        t += 1
        start = (t - 1) * cfg.step
        end = start + cfg.window
        support_before: dict[EdgeKey, bool] = {}
        prev_nodes = frozenset(incidence) if t > 1 else frozenset()

        while buffer and buffer[0].ts < start:
            ev = buffer.popleft()
            key = _edge_key(ev)
            support_before.setdefault(key, True)
            remaining = counts[key] - 1
            if remaining:
                counts[key] = remaining
            else:
                del counts[key]
            bump(ev.src, -1)
            bump(ev.dst, -1)
        while True:
            nxt = cursor.peek()
            if nxt is None or nxt.ts >= end:
                break
            ev = cursor.take()
            if ev.ts < start:
                continue  # stale relative to an already-advanced window
            key = _edge_key(ev)
            support_before.setdefault(key, key in counts)
            counts[key] = counts.get(key, 0) + 1
            bump(ev.src, 1)
            bump(ev.dst, 1)
            buffer.append(ev)

        changed = [
            key for key, had in support_before.items() if had != (key in counts)
        ]
        cur_nodes = frozenset(incidence)
        if mode == "source":
            members = {s for (s, _, _) in changed} & cur_nodes
        else:
            members = {n for (s, _, d) in changed for n in (s, d)}
            members &= cur_nodes | prev_nodes
        graph = HeteroGraph(t, start, end, tuple(buffer), cur_nodes, dict(counts))
        delta = DynamicNodeSet(t, frozenset(members))
        ratio = churn_ratio(delta, graph) if graph.nodes else 0.0
        yield WindowStep(graph, delta, ratio)

        next_start = t * cfg.step
        if cursor.peek() is not None:
            pending = True
        else:
            last_ts = buffer[-1].ts if buffer else float("-inf")
            pending = last_ts >= next_start


def dump_snapshot(g: HeteroGraph) -> str:
    """Deterministic sorted edge-list dump of one window graph."""
    lines = [f"window {g.index} start {g.start!r} end {g.end!r}"]
    lines.append(f"nodes {len(g.nodes)} edges {len(g.edges)} events {len(g.events)}")
    for (src, rel, dst), count in g.sorted_edges():
        lines.append(f"{src.token()}|{rel}|{dst.token()}|{count}")
    return "\n".join(lines) + "\n"
