"""Acceptance suite: one test per criterion, each printing a PASS line.

Every criterion pins its tolerance and its runtime bound. Run with
``pytest tests/test_acceptance.py -v -s`` to see the per-criterion lines.
"""

import time
from pathlib import Path

import numpy as np

from conftest import brute_force_delta, brute_force_instances, random_events, random_graph

from mgdvd.bench import bench, detect_corpus
from mgdvd.detector import DetectorConfig, Gallery, classify_window, pearson
from mgdvd.encoders import ModelHyperparams, init_params, softmax
from mgdvd.encoders.ops import chgae_neighbor_weights
from mgdvd.metagraphs import load_default_catalog, match_instances
from mgdvd.pipeline import build_gallery, build_sample_trace, forward_trace
from mgdvd.schema import EntityRef, EntityType, read_event_file, write_event_file
from mgdvd.synthgen import (
    FamilyTemplate,
    ManifestRow,
    generate_stream,
    read_manifest,
    write_manifest,
)
from mgdvd.trainer import OptimizerConfig, gradient_check, train
from mgdvd.windows import WindowConfig, HeteroGraph, compute_dynamic_nodes, iter_windows


def report(num: int, name: str, elapsed: float, bound: float) -> None:
    print(f"ACCEPTANCE {num} PASS {name} ({elapsed:.1f}s < {bound:.0f}s)")
    assert elapsed < bound, f"criterion {num} exceeded its runtime bound"


def test_criterion_1_dynamic_node_oracle():
    """compute_dynamic_nodes equals literal set-difference evaluation."""
    t0 = time.monotonic()
    rng = np.random.default_rng(101)
    checked = 0
    while checked < 1000:
        # ids span 8 types x 6 names, so windows never exceed 48 < 50 nodes
        events = random_events(rng, int(rng.integers(20, 160)), t_max=240.0,
                               n_entities=6)
        prev = None
        for step in iter_windows(events, WindowConfig()):
            assert len(step.graph.nodes) <= 50
            got = compute_dynamic_nodes(prev, step.graph)
            assert set(got.nodes) == brute_force_delta(prev, step.graph)
            got_src = compute_dynamic_nodes(prev, step.graph, mode="source")
            assert set(got_src.nodes) == brute_force_delta(prev, step.graph, mode="source")
            prev = step.graph
            checked += 1
            if checked >= 1000:
                break
    report(1, "dynamic-node set equals brute-force set difference (1000 pairs)",
           time.monotonic() - t0, 10.0)


def test_criterion_2_matching_completeness():
    """match_instances equals exhaustive homomorphism enumeration."""
    t0 = time.monotonic()
    rng = np.random.default_rng(202)
    catalog = load_default_catalog()
    graphs = 0
    while graphs < 500:
        g = random_graph(rng, max_nodes=int(rng.integers(5, 26)),
                         n_edges=int(rng.integers(4, 55)))
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
        graphs += 1
    report(2, "matching equals exhaustive enumeration (500 graphs x 14 patterns)",
           time.monotonic() - t0, 60.0)


def test_criterion_3_incremental_equals_scratch():
    t0 = time.monotonic()
    rng = np.random.default_rng(303)
    cfg = WindowConfig()
    for _ in range(100):
        events = random_events(rng, int(rng.integers(0, 260)), t_max=420.0,
                               n_entities=18)
        t_max = max((e.ts for e in events), default=None)
        steps = list(iter_windows(events, cfg))
        if t_max is None:
            assert steps == []
            continue
        t = 1
        idx = 0
        while (t - 1) * cfg.step <= t_max:
            start = (t - 1) * cfg.step
            end = start + cfg.window
            scratch = HeteroGraph.from_events(
                [e for e in events if start <= e.ts < end], t, start, end
            )
            live = steps[idx].graph
            assert live.nodes == scratch.nodes
            assert live.edges == scratch.edges
            assert live.events == scratch.events
            t += 1
            idx += 1
        assert idx == len(steps)
    report(3, "incrementally advanced windows equal from-scratch builds (100 streams)",
           time.monotonic() - t0, 30.0)


def test_criterion_4_numeric_invariants():
    t0 = time.monotonic()
    rng = np.random.default_rng(404)
    for _ in range(200):
        z = rng.normal(scale=10.0, size=int(rng.integers(1, 12)))
        theta = softmax(z)
        assert abs(theta.sum() - 1.0) < 1e-12
        assert np.all(theta > 0)
        assert np.allclose(theta, softmax(z + rng.normal() * 50), atol=1e-12)

    types = list(EntityType)
    for _ in range(200):
        n = int(rng.integers(1, 10))
        members = [
            (EntityRef(types[rng.integers(8)], f"n{i}"), int(rng.integers(1, 5)))
            for i in range(n)
        ]
        alphas = chgae_neighbor_weights(members)
        assert abs(alphas.sum() - 1.0) < 1e-12
        if n > 1:
            bumped = list(members)
            bumped[0] = (bumped[0][0], bumped[0][1] + 1)
            assert chgae_neighbor_weights(bumped)[0] < alphas[0]

    for _ in range(200):
        n = int(rng.integers(3, 12))
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        a = float(rng.uniform(0.2, 10.0))
        b = float(rng.normal() * 5)
        assert pearson(x, x) == 1.0
        rho = pearson(x, y)
        assert abs(pearson(a * x + b, y) - rho) < 1e-10
        assert abs(pearson(-a * x + b, y) + rho) < 1e-10
        assert abs(pearson(y, x) - rho) < 1e-10
    report(4, "softmax, neighbor-weight, and correlation invariants",
           time.monotonic() - t0, 5.0)


def test_criterion_5_gradient_gate():
    from test_trainer import H as H_SMALL
    from test_trainer import kink_free_batch

    t0 = time.monotonic()
    worst = 0.0
    for seed, start in ((1, 0), (2, 100)):
        batch = kink_free_batch(start_seed=start)
        params = init_params(H_SMALL, seed=seed)
        worst = max(worst, gradient_check(params, H_SMALL, batch, eps=1e-5))
    assert worst < 1e-3, f"gradient gate failed: max relative error {worst}"
    print(f"    max relative gradient error {worst:.2e}")
    report(5, "analytic gradients match central differences (< 1e-3)",
           time.monotonic() - t0, 30.0)


def test_criterion_6_end_to_end_detection(trained_corpus):
    tc = trained_corpus
    t0 = time.monotonic()
    assert len(tc.rows) == 100  # 4 malicious families + benign, 20 each
    assert len(tc.train_rows) == 60 and len(tc.test_rows) == 20
    res = detect_corpus(tc.root, tc.test_rows, tc.params, tc.h, tc.catalog,
                        tc.gallery, tc.dcfg, tc.wcfg)
    accuracy = res.accuracy

    embs = {}
    for row in tc.test_rows:
        trace = build_sample_trace(
            read_event_file(tc.root / row.path), tc.h, tc.catalog,
            wcfg=tc.wcfg, sample_id=row.sample_id, family=row.family,
        )
        emb, _ = forward_trace(tc.params, tc.h, trace)
        embs[row.sample_id] = (row.family, emb)
    within, cross = [], []
    sids = sorted(embs)
    for i in range(len(sids)):
        for j in range(i + 1, len(sids)):
            fa, ea = embs[sids[i]]
            fb, eb = embs[sids[j]]
            (within if fa == fb else cross).append(pearson(ea, eb))
    gap = float(np.mean(within) - np.mean(cross))

    elapsed = tc.build_seconds + (time.monotonic() - t0)
    assert accuracy >= 0.90, f"test accuracy {accuracy}"
    assert gap >= 0.2, f"rho gap {gap}"
    print(f"    accuracy {accuracy:.3f}, within-cross rho gap {gap:.3f}, "
          f"epochs {len(tc.result.history)} <= 200")
    report(6, "desk-scale detection accuracy >= 0.90 and rho gap >= 0.2",
           elapsed, 600.0)


def _bursty_corpus(root: Path, catalog) -> list[ManifestRow]:
    templates = [
        FamilyTemplate(label="burstA",
            rates={"proc_write_file": 1.0, "proc_connect_network": 0.6,
                   "proc_fork_proc": 0.5, "proc_read_file": 0.6},
            motifs=(2, 9), motifs_per_minute=8.0, profile="burst_steady",
            burst_fraction=0.25, steady_rate=6.0, steady_repertoire=30,
            pool_size=4, seed=71),
        FamilyTemplate(label="burstB",
            rates={"proc_alloc_memory": 1.0, "proc_syscall_system": 0.8,
                   "proc_fork_proc": 0.5},
            motifs=(4, 6), motifs_per_minute=8.0, profile="burst_steady",
            burst_fraction=0.25, steady_rate=6.0, steady_repertoire=30,
            pool_size=4, seed=72),
    ]
    (root / "streams").mkdir(parents=True, exist_ok=True)
    rows = []
    for k in range(50):
        tmpl = templates[k % 2]
        sid = f"{tmpl.label}{k:03d}"
        events, _ = generate_stream(tmpl, 240.0, seed=k, sample_id=sid, catalog=catalog)
        write_event_file(root / "streams" / f"{sid}.events", events)
        rows.append(ManifestRow(sid, tmpl.label, "test", f"streams/{sid}.events", 240.0, k))
    write_manifest(root / "manifest.txt", rows)
    return rows


def test_criterion_7_dynamic_walk_speedup(tmp_path):
    t0 = time.monotonic()
    catalog = load_default_catalog()
    h = ModelHyperparams()
    wcfg = WindowConfig()
    rows = _bursty_corpus(tmp_path, catalog)

    # the required stream property: churn at or below gamma in >= half the windows
    low_fractions = []
    for row in rows:
        steps = list(iter_windows(read_event_file(tmp_path / row.path), wcfg))
        low = sum(1 for s in steps if s.ratio <= h.gamma)
        low_fractions.append(low / len(steps))
    assert min(low_fractions) >= 0.5

    traces = [
        build_sample_trace(read_event_file(tmp_path / r.path), h, catalog,
                           wcfg=wcfg, sample_id=r.sample_id, family=r.family)
        for r in rows[:6]
    ]
    result = train(traces, OptimizerConfig(lr=1e-3, epochs=2, seed=0), h)
    gallery = build_gallery(result.params, h, traces, per_window=False)
    report_tbl = bench(tmp_path, ["auto", "static-walk"], result.params, h, catalog,
                       gallery, DetectorConfig(), wcfg, split="test", reps=1)
    by_mode = {r.mode: r for r in report_tbl.rows}
    ratio = by_mode["auto"].total_s / by_mode["static-walk"].total_s
    assert ratio <= 0.8, f"auto/static time ratio {ratio:.3f}"
    print(f"    auto {by_mode['auto'].total_s:.2f}s vs static-walk "
          f"{by_mode['static-walk'].total_s:.2f}s (ratio {ratio:.3f})")
    report(7, "dynamic walk total time <= 0.8x static re-walk (50 streams)",
           time.monotonic() - t0, 300.0)


def test_criterion_8_consistency_rule():
    t0 = time.monotonic()
    gallery = Gallery(4)
    gallery.add("ga", "A", np.array([1.0, 2.0, 3.0, 4.0]))
    gallery.add("gb", "B", np.array([-1.0, 4.0, -3.0, 2.0]))
    cfg = DetectorConfig(tau=0.5, consistency_window=2)
    emb_a = np.array([1.0, 2.0, 3.0, 4.0])
    emb_b = np.array([-1.0, 4.0, -3.0, 2.0])
    v1 = classify_window(emb_a, gallery, cfg, None, 1)
    v2 = classify_window(emb_b, gallery, cfg, v1, 2)
    v3 = classify_window(emb_b, gallery, cfg, v2, 3)
    assert (v1.status, v1.label) == ("provisional", "A")
    assert (v2.status, v2.label) == ("provisional", "B")
    assert (v3.status, v3.label) == ("final", "B")
    assert not any(v.status == "final" and v.label == "A" for v in (v1, v2, v3))
    report(8, "provisional A,B,B finalizes B on the third window, never A",
           time.monotonic() - t0, 5.0)


def test_criterion_9_pipeline_determinism(tmp_path):
    from mgdvd.cli import main

    t0 = time.monotonic()
    digests = []
    for tag in ("run1", "run2"):
        base = tmp_path / tag
        corpus = base / "corpus"
        ckpt = base / "model.ckpt"
        log = base / "verdicts.log"
        base.mkdir()
        assert main([
            "gen", "--families", "exfil,miner", "--count", "6",
            "--duration", "70", "--seed", "13", "--out", str(corpus),
        ]) == 0
        assert main([
            "train", "--data", str(corpus), "--epochs", "5", "--lr", "0.002",
            "--seed", "7", "--out", str(ckpt),
            "--rep-dim", "16", "--hidden-dim", "8", "--embed-dim", "12",
        ]) == 0
        rows = read_manifest(corpus / "manifest.txt")
        test_row = next(r for r in rows if r.split == "test")
        assert main([
            "detect", "--stream", str(corpus / test_row.path),
            "--gallery", f"{ckpt}.gallery", "--checkpoint", str(ckpt),
            "--keep-going", "--out", str(log),
        ]) == 0
        digests.append((
            ckpt.read_bytes(),
            Path(f"{ckpt}.gallery").read_bytes(),
            log.read_bytes(),
        ))
    assert digests[0][0] == digests[1][0], "checkpoints differ"
    assert digests[0][1] == digests[1][1], "galleries differ"
    assert digests[0][2] == digests[1][2], "verdict logs differ"
    report(9, "gen->train->detect twice is byte-identical (checkpoint, gallery, log)",
           time.monotonic() - t0, 600.0)
