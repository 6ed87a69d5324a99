import pytest

from mgdvd.errors import InputError, InsufficientFamiliesError
from mgdvd.metagraphs import load_default_catalog, match_instances
from mgdvd.pipeline import find_target
from mgdvd.schema import read_event_file, serialize_event
from mgdvd.synthgen import (
    FamilyTemplate,
    default_templates,
    generate_corpus,
    generate_stream,
    read_manifest,
)
from mgdvd.windows import HeteroGraph


@pytest.fixture(scope="module")
def catalog():
    return load_default_catalog()


def test_zero_duration_is_empty(catalog):
    events, truth = generate_stream(default_templates()[0], 0.0, seed=1, catalog=catalog)
    assert events == []
    assert truth["planted"] == []


def test_streams_are_seed_deterministic(catalog):
    tmpl = default_templates()[0]
    a, truth_a = generate_stream(tmpl, 120.0, seed=7, catalog=catalog)
    b, truth_b = generate_stream(tmpl, 120.0, seed=7, catalog=catalog)
    assert [serialize_event(e) for e in a] == [serialize_event(e) for e in b]
    assert truth_a == truth_b
    c, _ = generate_stream(tmpl, 120.0, seed=8, catalog=catalog)
    assert [serialize_event(e) for e in a] != [serialize_event(e) for e in c]


def test_streams_parse_cleanly(catalog, tmp_path):
    from mgdvd.schema import write_event_file

    for tmpl in default_templates():
        events, _ = generate_stream(tmpl, 90.0, seed=3, catalog=catalog)
        assert all(e.src.etype is e.rel.src and e.dst.etype is e.rel.dst for e in events)
        assert all(events[i].ts <= events[i + 1].ts for i in range(len(events) - 1))
        path = tmp_path / f"{tmpl.label}.events"
        write_event_file(path, events)
        again = read_event_file(path)
        assert [serialize_event(e) for e in again] == [serialize_event(e) for e in events]


def test_first_event_marks_target_process(catalog):
    for tmpl in default_templates():
        events, _ = generate_stream(tmpl, 60.0, seed=2, catalog=catalog)
        target = find_target(events)
        assert target is not None
        assert events[0].ts == 0.0
        assert events[0].src == target


def test_planted_motifs_are_matchable(catalog):
    tmpl = FamilyTemplate(
        label="plantonly",
        rates={"proc_syscall_system": 0.05},
        motifs=(1,),
        motifs_per_minute=10.0,
        motif_dropout=0.0,
        jitter=0.5,
        seed=77,
    )
    duration = 120.0
    events, truth = generate_stream(tmpl, duration, seed=5, catalog=catalog)
    plants = [t for t in truth["planted"] if t["motif"] == 1]
    assert len(plants) >= 10
    g = HeteroGraph.from_events(events, 1, 0.0, duration + 10.0)
    root = find_target(events)
    found = match_instances(g, catalog.metagraphs[0], root)
    assert len(found) >= 10
    found_ids = {frozenset(mp[name].id for name in mp) for mp in found}
    for plant in plants:
        assert frozenset(plant["nodes"].values()) in found_ids


def test_motif_dropout_bounds():
    with pytest.raises(InputError):
        FamilyTemplate(label="x", motif_dropout=0.5)


def test_corpus_split_622(catalog, tmp_path):
    templates = default_templates()[:2]
    rows = generate_corpus(templates, 10, 45.0, seed=4, out_dir=tmp_path, catalog=catalog)
    assert len(rows) == 20
    counts = {"train": 0, "val": 0, "test": 0}
    for r in rows:
        counts[r.split] += 1
        assert (tmp_path / r.path).exists()
        assert (tmp_path / "truth" / f"{r.sample_id}.json").exists()
    assert counts == {"train": 12, "val": 4, "test": 4}
    manifest = read_manifest(tmp_path / "manifest.txt")
    assert [(r.sample_id, r.split) for r in manifest] == [(r.sample_id, r.split) for r in rows]


def test_corpus_needs_two_templates(catalog, tmp_path):
    with pytest.raises(InsufficientFamiliesError):
        generate_corpus(default_templates()[:1], 4, 30.0, seed=1, out_dir=tmp_path, catalog=catalog)


def test_corpus_split_is_seed_stable(catalog, tmp_path):
    templates = default_templates()[:2]
    rows_a = generate_corpus(templates, 10, 30.0, seed=6, out_dir=tmp_path / "a", catalog=catalog)
    rows_b = generate_corpus(templates, 10, 30.0, seed=6, out_dir=tmp_path / "b", catalog=catalog)
    assert [(r.sample_id, r.split) for r in rows_a] == [(r.sample_id, r.split) for r in rows_b]
    first = (tmp_path / "a" / rows_a[0].path).read_bytes()
    second = (tmp_path / "b" / rows_b[0].path).read_bytes()
    assert first == second


def test_burst_steady_profile_has_low_churn_tail(catalog):
    tmpl = FamilyTemplate(
        label="bursty",
        rates={"proc_write_file": 1.2, "proc_fork_proc": 0.4, "proc_connect_network": 0.6},
        motifs=(2, 9),
        profile="burst_steady",
        burst_fraction=0.25,
        steady_rate=3.0,
        seed=9,
    )
    events, _ = generate_stream(tmpl, 240.0, seed=1, catalog=catalog)
    from mgdvd.windows import iter_windows

    steps = list(iter_windows(events))
    ratios = [s.ratio for s in steps]
    low = sum(1 for r in ratios if r <= 0.3)
    assert low >= len(ratios) / 2
    nonempty_low = [s for s in steps if s.ratio <= 0.3 and s.graph.nodes]
    assert nonempty_low, "steady tail should keep the graph populated"
