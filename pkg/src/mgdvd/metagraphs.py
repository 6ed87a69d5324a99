"""Meta-graph patterns: catalog loading, matching, and neighbor sets.

A meta-graph is a typed DAG over *flow* edges with a single source and a
single target, both process-typed. Each flow edge names a schema
relation and an orientation: ``fwd`` realizes the flow edge a->b as the
graph edge a-[rel]->b, ``rev`` realizes it as b-[rel]->a (the actor sits
at the flow destination, e.g. a process reading a file the flow enters
from). Matching maps pattern nodes to graph nodes preserving node types
and the oriented relation edges, with the source pinned to a root
process; mappings need not be injective, but no non-source slot may bind
the root.

Catalog file format, one block per meta-graph::

    metagraph <id>
    node <name> <entity_type>
    edge <from> <to> <relation> <fwd|rev>
    source <name>
    target <name>
    end

Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from . import kernels
from .errors import (
    CatalogError,
    MultipleSourcesError,
    MultipleTargetsError,
    NonProcessEndpointError,
    NotADagError,
    RootNotInGraphError,
    SchemaViolationError,
)
from .schema import DEFAULT_SCHEMA, EntityRef, EntityType, NetworkSchema
from .windows import DynamicNodeSet, HeteroGraph

logger = logging.getLogger(__name__)

INSTANCE_CAP = 10_000


@dataclass(frozen=True)
class FlowEdge:
    src: str
    dst: str
    relation: str
    orient: str  # "fwd" | "rev"


@dataclass
class MetaGraph:
    mid: int
    node_types: dict[str, EntityType]  # declaration order preserved
    flow_edges: list[FlowEdge]
    source: str
    target: str

    _compiled: object = field(default=None, repr=False, compare=False)

    @property
    def node_order(self) -> list[str]:
        return list(self.node_types)

    def required_edges(self) -> list[tuple[str, str, str]]:
        """Pattern edges in graph direction: (actor node, relation, object node)."""
        out = []
        for fe in self.flow_edges:
            if fe.orient == "fwd":
                out.append((fe.src, fe.relation, fe.dst))
            else:
                out.append((fe.dst, fe.relation, fe.src))
        return out

    def flow_distances(self) -> dict[str, int]:
        """Shortest flow-path length from the source to every node."""
        dist = {self.source: 0}
        frontier = [self.source]
        adj: dict[str, list[str]] = {n: [] for n in self.node_types}
        for fe in self.flow_edges:
            adj[fe.src].append(fe.dst)
        while frontier:
            nxt = []
            for n in frontier:
                for m in adj[n]:
                    if m not in dist:
                        dist[m] = dist[n] + 1
                        nxt.append(m)
            frontier = nxt
        return dist

    def validate(self, schema: NetworkSchema) -> None:
        names = self.node_order
        if len(names) < 2:
            raise CatalogError(f"metagraph {self.mid}: needs at least 2 nodes")
        for fe in self.flow_edges:
            for endpoint in (fe.src, fe.dst):
                if endpoint not in self.node_types:
                    raise CatalogError(
                        f"metagraph {self.mid}: edge references unknown node {endpoint!r}"
                    )
            if fe.orient not in ("fwd", "rev"):
                raise CatalogError(f"metagraph {self.mid}: bad orientation {fe.orient!r}")
        for declared in (self.source, self.target):
            if declared not in self.node_types:
                raise CatalogError(
                    f"metagraph {self.mid}: source/target {declared!r} not a node"
                )
        if self.source == self.target:
            raise CatalogError(f"metagraph {self.mid}: source equals target")

        # acyclicity of the flow digraph (Kahn)
        indeg = {n: 0 for n in names}
        outdeg = {n: 0 for n in names}
        adj: dict[str, list[str]] = {n: [] for n in names}
        for fe in self.flow_edges:
            indeg[fe.dst] += 1
            outdeg[fe.src] += 1
            adj[fe.src].append(fe.dst)
        queue = [n for n in names if indeg[n] == 0]
        seen = 0
        work = dict(indeg)
        while queue:
            n = queue.pop()
            seen += 1
            for m in adj[n]:
                work[m] -= 1
                if work[m] == 0:
                    queue.append(m)
        if seen != len(names):
            raise NotADagError(f"metagraph {self.mid}: flow edges contain a cycle")

        sources = [n for n in names if indeg[n] == 0]
        targets = [n for n in names if outdeg[n] == 0]
        if len(sources) != 1:
            raise MultipleSourcesError(
                f"metagraph {self.mid}: {len(sources)} flow sources {sources}"
            )
        if len(targets) != 1:
            raise MultipleTargetsError(
                f"metagraph {self.mid}: {len(targets)} flow targets {targets}"
            )
        if sources[0] != self.source or targets[0] != self.target:
            raise CatalogError(
                f"metagraph {self.mid}: declared source/target do not match "
                f"flow degrees (computed {sources[0]}->{targets[0]})"
            )
        for endpoint in (self.source, self.target):
            if self.node_types[endpoint] is not EntityType.PROCESS:
                raise NonProcessEndpointError(
                    f"metagraph {self.mid}: {endpoint!r} must be process-typed"
                )

        for actor, rel_name, obj in self.required_edges():
            rel = schema.relation(rel_name)
            if self.node_types[actor] is not rel.src or self.node_types[obj] is not rel.dst:
                raise SchemaViolationError(
                    f"metagraph {self.mid}: edge {actor}-[{rel_name}]->{obj} "
                    f"violates relation typing"
                )

    def compiled(self, schema: NetworkSchema) -> "CompiledPattern":
        if self._compiled is None:
            self._compiled = CompiledPattern.build(self, schema)
        return self._compiled


@dataclass
class Catalog:
    metagraphs: list[MetaGraph]

    def __post_init__(self):
        ids = [m.mid for m in self.metagraphs]
        if ids != list(range(1, len(ids) + 1)):
            raise CatalogError(f"metagraph ids must be dense 1..{len(ids)}, got {ids}")

    def __len__(self) -> int:
        return len(self.metagraphs)

    def __iter__(self):
        return iter(self.metagraphs)


class CompiledPattern:
    """Slot-ordered form of a meta-graph consumed by the matching kernels.

    Slot 0 is the flow source. Every later slot carries one anchor edge
    to an earlier slot (candidate generator) plus the remaining pattern
    edges into earlier slots as membership checks. Directions are graph
    directions: 0 = earlier-slot -> this-slot, 1 = this-slot -> earlier.
    """

    def __init__(self, nslots, slot_types, anchors, checks, slot_dist, slot_names,
                 slot_types_arr, anchors_arr, checks_ptr, checks_arr):
        self.nslots = nslots
        self.slot_types = slot_types
        self.anchors = anchors
        self.checks = checks
        self.slot_dist = slot_dist
        self.slot_names = slot_names
        # array mirrors for the compiled kernel
        self.slot_types_arr = slot_types_arr
        self.anchors_arr = anchors_arr
        self.checks_ptr = checks_ptr
        self.checks_arr = checks_arr

    @staticmethod
    def build(m: MetaGraph, schema: NetworkSchema) -> "CompiledPattern":
        names = m.node_order
        rel_code = {name: i for i, name in enumerate(schema.relation_order)}
        required = [(a, rel_code[r], b) for (a, r, b) in m.required_edges()]

        # undirected connectivity adjacency over required edges
        und: dict[str, list[tuple[str, int, int]]] = {n: [] for n in names}
        for a, r, b in required:
            und[a].append((b, r, 0))  # from a's view: edge a->b
            und[b].append((a, r, 1))  # from b's view: edge a->b comes in

        order = [m.source]
        placed = {m.source: 0}
        cursor = 0
        while cursor < len(order):
            cur = order[cursor]
            for nb, _, _ in und[cur]:
                if nb not in placed:
                    placed[nb] = len(order)
                    order.append(nb)
            cursor += 1
        if len(order) != len(names):
            raise CatalogError(f"metagraph {m.mid}: pattern is not connected")

        anchors: list[tuple[int, int, int]] = [(-1, -1, -1)]
        checks: list[list[tuple[int, int, int]]] = [[]]
        consumed: set[int] = set()
        for slot in range(1, len(order)):
            node = order[slot]
            anchor = None
            slot_checks: list[tuple[int, int, int]] = []
            for eidx, (a, r, b) in enumerate(required):
                if eidx in consumed:
                    continue
                if a == node and placed[b] < slot:
                    item = (placed[b], r, 1)  # this-slot -> earlier
                elif b == node and placed[a] < slot:
                    item = (placed[a], r, 0)  # earlier -> this-slot
                else:
                    continue
                consumed.add(eidx)
                if anchor is None:
                    anchor = item
                else:
                    slot_checks.append(item)
            assert anchor is not None, "BFS order guarantees an anchor edge"
            anchors.append(anchor)
            checks.append(slot_checks)
        # edges between already-placed slots were consumed as checks of the
        # later slot; any skipped ones (both endpoints placed before either
        # became current) are attached to the later endpoint
        for eidx, (a, r, b) in enumerate(required):
            if eidx in consumed:
                continue
            sa, sb = placed[a], placed[b]
            later = max(sa, sb)
            if later == sb:
                checks[later].append((sa, r, 0))
            else:
                checks[later].append((sb, r, 1))

        dist = m.flow_distances()
        slot_types = [m.node_types[n].rank for n in order]
        slot_dist = [dist[n] for n in order]

        checks_ptr = [0]
        flat_checks: list[tuple[int, int, int]] = []
        for slot_checks in checks:
            flat_checks.extend(slot_checks)
            checks_ptr.append(len(flat_checks))

        return CompiledPattern(
            nslots=len(order),
            slot_types=slot_types,
            anchors=anchors,
            checks=checks,
            slot_dist=slot_dist,
            slot_names=order,
            slot_types_arr=np.asarray(slot_types, dtype=np.int8),
            anchors_arr=np.asarray(anchors, dtype=np.int32),
            checks_ptr=np.asarray(checks_ptr, dtype=np.int32),
            checks_arr=(
                np.asarray(flat_checks, dtype=np.int32)
                if flat_checks
                else np.zeros((0, 3), dtype=np.int32)
            ),
        )


class GraphIndex:
    """Integer-indexed adjacency view of one window graph."""

    def __init__(self, g: HeteroGraph, schema: NetworkSchema):
        self.refs: list[EntityRef] = sorted(g.nodes, key=lambda r: r.sort_key())
        self.pos: dict[EntityRef, int] = {r: i for i, r in enumerate(self.refs)}
        self.types: list[int] = [r.etype.rank for r in self.refs]
        rel_code = {name: i for i, name in enumerate(schema.relation_order)}
        nrel = len(schema.relation_order)
        n = len(self.refs)
        out_sets: list[list[set[int]]] = [[set() for _ in range(n)] for _ in range(nrel)]
        in_sets: list[list[set[int]]] = [[set() for _ in range(n)] for _ in range(nrel)]
        edge_set: set[tuple[int, int, int]] = set()
        for (src, rel_name, dst) in g.edges:
            r = rel_code[rel_name]
            s, d = self.pos[src], self.pos[dst]
            out_sets[r][s].add(d)
            in_sets[r][d].add(s)
            edge_set.add((s, r, d))
        self.out_list = [[sorted(s) for s in rel] for rel in out_sets]
        self.in_list = [[sorted(s) for s in rel] for rel in in_sets]
        self.edge_set = edge_set
        self.types_arr = np.asarray(self.types, dtype=np.int8)
        # CSR mirrors for the compiled kernel
        self.out_ptr, self.out_idx = _csr(self.out_list, n, nrel)
        self.in_ptr, self.in_idx = _csr(self.in_list, n, nrel)

    @staticmethod
    def of(g: HeteroGraph, schema: NetworkSchema) -> "GraphIndex":
        if g._graph_index is None:
            g._graph_index = GraphIndex(g, schema)
        return g._graph_index


def _csr(adj_lists: list[list[list[int]]], n: int, nrel: int):
    ptr = np.zeros((nrel, n + 1), dtype=np.int32)
    chunks: list[int] = []
    for r in range(nrel):
        for i in range(n):
            cell = adj_lists[r][i]
            chunks.extend(cell)
            ptr[r, i + 1] = len(chunks)
        if r + 1 < nrel:
            ptr[r + 1, 0] = len(chunks)
    idx = np.asarray(chunks, dtype=np.int32) if chunks else np.zeros(0, dtype=np.int32)
    return ptr, idx


@dataclass
class NeighborSet:
    """Path-relevant neighbors of a root process under one meta-graph."""

    target: EntityRef
    metagraph_id: int
    members: tuple[tuple[EntityRef, int], ...]  # (node, flow order), sorted

    def __len__(self) -> int:
        return len(self.members)

    def refs(self) -> list[EntityRef]:
        return [ref for ref, _ in self.members]


def _run_kernel(
    g: HeteroGraph,
    m: MetaGraph,
    root: EntityRef,
    restrict_to: Optional[DynamicNodeSet],
    schema: NetworkSchema,
    cap: int,
):
    gi = GraphIndex.of(g, schema)
    if root not in gi.pos:
        raise RootNotInGraphError(f"{root.token()} not in window {g.index}")
    if root.etype is not EntityType.PROCESS:
        raise RootNotInGraphError(f"match root must be a process, got {root.token()}")
    cp = m.compiled(schema)
    root_idx = gi.pos[root]
    if gi.types[root_idx] != cp.slot_types[0]:
        return gi, cp, [], False
    dyn = None
    root_dyn = False
    if restrict_to is not None:
        dyn = {gi.pos[r] for r in restrict_to.nodes if r in gi.pos}
        root_dyn = root_idx in dyn
        if not dyn and not root_dyn:
            return gi, cp, [], False
    rows, truncated = kernels.enumerate_matches(gi, cp, root_idx, dyn, root_dyn, cap)
    if truncated:
        logger.warning(
            "instance cap %d hit for metagraph %d at root %s (window %d); "
            "results truncated",
            cap, m.mid, root.token(), g.index,
        )
    return gi, cp, rows, truncated


def match_instances(
    g: HeteroGraph,
    m: MetaGraph,
    root: EntityRef,
    restrict_to: Optional[DynamicNodeSet] = None,
    schema: NetworkSchema = DEFAULT_SCHEMA,
    cap: int = INSTANCE_CAP,
) -> list[dict[str, EntityRef]]:
    """All homomorphic instances of ``m`` with the source mapped to ``root``.

    Returned mappings are keyed by pattern node name, ordered
    lexicographically on the mapped node ids (declaration node order).
    """
    gi, cp, rows, _ = _run_kernel(g, m, root, restrict_to, schema, cap)
    slot_of = {name: i for i, name in enumerate(cp.slot_names)}
    decl = m.node_order
    mappings = []
    for row in rows:
        mapping = {name: gi.refs[row[slot_of[name]]] for name in decl}
        mappings.append(mapping)
    mappings.sort(key=lambda mp: tuple(mp[name].id for name in decl))
    return mappings


def neighbor_set(
    g: HeteroGraph,
    m: MetaGraph,
    root: EntityRef,
    restrict_to: Optional[DynamicNodeSet] = None,
    schema: NetworkSchema = DEFAULT_SCHEMA,
    cap: int = INSTANCE_CAP,
) -> NeighborSet:
    """Union of non-root instance nodes with minimal flow order.

    With ``restrict_to``, only instances touching at least one dynamic
    node are explored and the member set is intersected with it.
    """
    gi, cp, rows, _ = _run_kernel(g, m, root, restrict_to, schema, cap)
    best: dict[int, int] = {}
    for row in rows:
        for slot in range(1, cp.nslots):
            idx = row[slot]
            dist = cp.slot_dist[slot]
            prev = best.get(idx)
            if prev is None or dist < prev:
                best[idx] = dist
    if restrict_to is not None:
        keep = {gi.pos[r] for r in restrict_to.nodes if r in gi.pos}
        best = {i: d for i, d in best.items() if i in keep}
    members = [(gi.refs[i], d) for i, d in best.items()]
    members.sort(key=lambda md: (md[0].etype.rank, md[1], md[0].id))
    return NeighborSet(target=root, metagraph_id=m.mid, members=tuple(members))


def parse_catalog_text(text: str, schema: NetworkSchema = DEFAULT_SCHEMA,
                       origin: str = "<catalog>") -> Catalog:
    name_to_type = {t.value: t for t in EntityType}
    metas: list[MetaGraph] = []
    current: Optional[dict] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        where = f"{origin}:{lineno}"
        if parts[0] == "metagraph" and len(parts) == 2:
            if current is not None:
                raise CatalogError(f"{where}: missing 'end' before new metagraph")
            try:
                mid = int(parts[1])
            except ValueError:
                raise CatalogError(f"{where}: bad metagraph id {parts[1]!r}") from None
            current = {"mid": mid, "nodes": {}, "edges": [], "source": None, "target": None}
        elif current is None:
            raise CatalogError(f"{where}: directive outside a metagraph block")
        elif parts[0] == "node" and len(parts) == 3:
            name, tname = parts[1], parts[2]
            if name in current["nodes"]:
                raise CatalogError(f"{where}: duplicate node {name!r}")
            etype = name_to_type.get(tname)
            if etype is None:
                raise CatalogError(f"{where}: unknown entity type {tname!r}")
            current["nodes"][name] = etype
        elif parts[0] == "edge" and len(parts) == 5:
            current["edges"].append(FlowEdge(parts[1], parts[2], parts[3], parts[4]))
        elif parts[0] in ("source", "target") and len(parts) == 2:
            current[parts[0]] = parts[1]
        elif parts[0] == "end" and len(parts) == 1:
            if current["source"] is None or current["target"] is None:
                raise CatalogError(f"{where}: metagraph missing source/target")
            meta = MetaGraph(
                mid=current["mid"],
                node_types=current["nodes"],
                flow_edges=current["edges"],
                source=current["source"],
                target=current["target"],
            )
            meta.validate(schema)
            metas.append(meta)
            current = None
        else:
            raise CatalogError(f"{where}: unrecognized line {line!r}")
    if current is not None:
        raise CatalogError(f"{origin}: unterminated metagraph block")
    return Catalog(metas)


def load_catalog(path, schema: NetworkSchema = DEFAULT_SCHEMA) -> Catalog:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_catalog_text(fh.read(), schema, origin=str(path))


def load_default_catalog(schema: NetworkSchema = DEFAULT_SCHEMA) -> Catalog:
    text = resources.files("mgdvd.data").joinpath("default_catalog.txt").read_text("utf-8")
    return parse_catalog_text(text, schema, origin="default_catalog.txt")


def dump_catalog(catalog: Catalog) -> str:
    lines: list[str] = []
    for m in catalog:
        lines.append(f"metagraph {m.mid}")
        for name, etype in m.node_types.items():
            lines.append(f"node {name} {etype.value}")
        for fe in m.flow_edges:
            lines.append(f"edge {fe.src} {fe.dst} {fe.relation} {fe.orient}")
        lines.append(f"source {m.source}")
        lines.append(f"target {m.target}")
        lines.append("end")
        lines.append("")
    return "\n".join(lines)
