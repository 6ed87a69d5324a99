import logging

import pytest

from conftest import brute_force_instances, ev, graph_of, random_graph, ref

from mgdvd import kernels
from mgdvd.errors import (
    CatalogError,
    MultipleSourcesError,
    MultipleTargetsError,
    NonProcessEndpointError,
    NotADagError,
    RootNotInGraphError,
    SchemaViolationError,
)
from mgdvd.metagraphs import (
    dump_catalog,
    load_default_catalog,
    match_instances,
    neighbor_set,
    parse_catalog_text,
)
from mgdvd.schema import EntityType
from mgdvd.windows import DynamicNodeSet

MINIMAL = """
metagraph 1
node P1 process
node F1 file
node P2 process
edge P1 F1 proc_write_file fwd
edge F1 P2 proc_read_file rev
source P1
target P2
end
"""


@pytest.fixture(scope="module")
def catalog():
    return load_default_catalog()


def test_minimal_catalog_parses():
    cat = parse_catalog_text(MINIMAL)
    assert len(cat) == 1
    m = cat.metagraphs[0]
    assert len(m.node_types) == 3
    assert m.source == "P1" and m.target == "P2"
    assert m.flow_distances() == {"P1": 0, "F1": 1, "P2": 2}


def test_cycle_rejected():
    text = """
metagraph 1
node P1 process
node F1 file
edge P1 F1 proc_write_file fwd
edge F1 P1 proc_read_file rev
source P1
target F1
end
"""
    with pytest.raises(NotADagError):
        parse_catalog_text(text)


def test_non_process_target_rejected():
    text = """
metagraph 1
node P1 process
node F1 file
edge P1 F1 proc_write_file fwd
source P1
target F1
end
"""
    with pytest.raises(NonProcessEndpointError):
        parse_catalog_text(text)


def test_multiple_sources_and_targets_rejected():
    two_sources = """
metagraph 1
node P1 process
node P2 process
node F1 file
edge P1 F1 proc_write_file fwd
edge P2 F1 proc_write_file fwd
source P1
target F1
end
"""
    with pytest.raises(MultipleSourcesError):
        parse_catalog_text(two_sources)
    two_targets = """
metagraph 1
node P1 process
node P2 process
node P3 process
edge P1 P2 proc_fork_proc fwd
edge P1 P3 proc_fork_proc fwd
source P1
target P2
end
"""
    with pytest.raises(MultipleTargetsError):
        parse_catalog_text(two_targets)


def test_schema_violating_edge_rejected():
    text = """
metagraph 1
node P1 process
node F1 file
node P2 process
edge P1 F1 proc_fork_proc fwd
edge F1 P2 proc_read_file rev
source P1
target P2
end
"""
    with pytest.raises(SchemaViolationError):
        parse_catalog_text(text)


def test_sparse_ids_rejected():
    text = MINIMAL.replace("metagraph 1", "metagraph 3")
    with pytest.raises(CatalogError):
        parse_catalog_text(text)


def test_default_catalog_shape(catalog):
    assert len(catalog) == 14
    assert [m.mid for m in catalog] == list(range(1, 15))
    covered = {t for m in catalog for t in m.node_types.values()}
    assert covered == set(EntityType)
    four_node = [m for m in catalog if len(m.node_types) == 4]
    assert len(four_node) >= 2


def test_catalog_dump_reparses(catalog):
    text = dump_catalog(catalog)
    again = parse_catalog_text(text)
    assert len(again) == len(catalog)
    for a, b in zip(catalog, again):
        assert a.node_types == b.node_types
        assert a.flow_edges == b.flow_edges
        assert (a.source, a.target) == (b.source, b.target)


def test_match_simple_shared_file(catalog):
    g = graph_of([
        ev(1.0, "proc:P1", "proc_write_file", "file:F1"),
        ev(2.0, "proc:P2", "proc_read_file", "file:F1"),
    ])
    m = catalog.metagraphs[1]
    found = match_instances(g, m, ref("proc:P1"))
    assert found == [
        {"P1": ref("proc:P1"), "F1": ref("file:F1"), "P2": ref("proc:P2")}
    ]


def test_match_no_candidates(catalog):
    g = graph_of([ev(1.0, "proc:P1", "proc_alloc_memory", "mem:M1")])
    assert match_instances(g, catalog.metagraphs[1], ref("proc:P1")) == []


def test_match_root_not_in_graph(catalog):
    g = graph_of([ev(1.0, "proc:P1", "proc_write_file", "file:F1")])
    with pytest.raises(RootNotInGraphError):
        match_instances(g, catalog.metagraphs[0], ref("proc:nope"))


def test_match_equals_brute_force(catalog, rng):
    """Soundness and completeness against exhaustive enumeration."""
    trials = 60
    for _ in range(trials):
        g = random_graph(rng, max_nodes=int(rng.integers(6, 26)), n_edges=int(rng.integers(5, 60)))
        procs = sorted((n for n in g.nodes if n.etype is EntityType.PROCESS),
                       key=lambda r: r.sort_key())
        if not procs:
            continue
        root = procs[int(rng.integers(len(procs)))]
        for m in catalog:
            got = {
                tuple(mp[name].id for name in m.node_order)
                for mp in match_instances(g, m, root)
            }
            assert got == brute_force_instances(g, m, root), f"metagraph {m.mid}"


def test_neighbor_set_ordering(catalog):
    g = graph_of([
        ev(1.0, "proc:P1", "proc_write_file", "file:F1"),
        ev(2.0, "proc:P2", "proc_read_file", "file:F1"),
    ])
    ns = neighbor_set(g, catalog.metagraphs[1], ref("proc:P1"))
    # process rank precedes file; orders are flow distances
    assert [(r.token(), n) for r, n in ns.members] == [("proc:P2", 2), ("file:F1", 1)]


def test_neighbor_set_empty_restriction(catalog):
    g = graph_of([
        ev(1.0, "proc:P1", "proc_write_file", "file:F1"),
        ev(2.0, "proc:P2", "proc_read_file", "file:F1"),
    ])
    empty = DynamicNodeSet(1, frozenset())
    ns = neighbor_set(g, catalog.metagraphs[1], ref("proc:P1"), restrict_to=empty)
    assert ns.members == ()


def test_neighbor_restriction_equals_intersection(catalog, rng):
    for _ in range(40):
        g = random_graph(rng, max_nodes=20, n_edges=40)
        procs = sorted((n for n in g.nodes if n.etype is EntityType.PROCESS),
                       key=lambda r: r.sort_key())
        if not procs:
            continue
        root = procs[0]
        nodes = sorted(g.nodes, key=lambda r: r.sort_key())
        mask = rng.random(len(nodes)) < 0.4
        delta = DynamicNodeSet(1, frozenset(n for n, keep in zip(nodes, mask) if keep))
        for m in catalog:
            unrestricted = neighbor_set(g, m, root)
            restricted = neighbor_set(g, m, root, restrict_to=delta)
            expected = tuple(
                (r, n) for r, n in unrestricted.members if r in delta.nodes
            )
            assert restricted.members == expected, f"metagraph {m.mid}"


def test_match_determinism(catalog, rng):
    g = random_graph(rng, max_nodes=18, n_edges=45)
    procs = sorted((n for n in g.nodes if n.etype is EntityType.PROCESS),
                   key=lambda r: r.sort_key())
    root = procs[0]
    for m in catalog:
        first = repr(match_instances(g, m, root)) + repr(neighbor_set(g, m, root))
        second = repr(match_instances(g, m, root)) + repr(neighbor_set(g, m, root))
        assert first == second


@pytest.mark.skipif(not kernels.HAVE_COMPILED, reason="compiled kernel not built")
def test_kernel_parity(catalog, rng):
    """Compiled and pure-Python kernels return identical instance lists."""
    previous = kernels.active_implementation()
    try:
        for _ in range(25):
            g = random_graph(rng, max_nodes=20, n_edges=50)
            procs = sorted((n for n in g.nodes if n.etype is EntityType.PROCESS),
                           key=lambda r: r.sort_key())
            if not procs:
                continue
            root = procs[int(rng.integers(len(procs)))]
            nodes = sorted(g.nodes, key=lambda r: r.sort_key())
            delta = DynamicNodeSet(
                1, frozenset(n for n in nodes if rng.random() < 0.3)
            )
            for m in catalog:
                kernels.set_implementation("compiled")
                fast = match_instances(g, m, root)
                fast_ns = neighbor_set(g, m, root, restrict_to=delta)
                kernels.set_implementation("python")
                slow = match_instances(g, m, root)
                slow_ns = neighbor_set(g, m, root, restrict_to=delta)
                assert fast == slow
                assert fast_ns == slow_ns
    finally:
        kernels.set_implementation(previous)


def test_instance_cap_truncation_warns(catalog, caplog):
    events = []
    t = 0.0
    for i in range(12):
        events.append(ev(t, "proc:root", "proc_write_file", f"file:F{i}"))
        t += 0.1
        for j in range(12):
            events.append(ev(t, f"proc:R{j}", "proc_read_file", f"file:F{i}"))
            t += 0.1
    g = graph_of(events, end=600.0)
    m = catalog.metagraphs[1]
    with caplog.at_level(logging.WARNING, logger="mgdvd.metagraphs"):
        found = match_instances(g, m, ref("proc:root"), cap=50)
    assert len(found) == 50
    assert any("cap" in rec.message for rec in caplog.records)
