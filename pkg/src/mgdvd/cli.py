"""Command-line entry point wiring all pipeline stages.

Subcommands: gen, ingest, train, detect, bench, inspect. Exit codes:
0 success, 2 input or format error, 3 model error, 4 violated internal
invariant. ``MGDVD_LOG`` sets the logging level (debug/info/warning/error).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .bench import bench, calibrate_tau
from .detector import (
    DetectorConfig,
    Gallery,
    format_verdict_line,
    stream_detect,
)
from .encoders.params import ModelHyperparams, load_checkpoint, save_checkpoint
from .errors import InputError, MgdvdError
from .metagraphs import load_catalog, load_default_catalog
from .pipeline import MODES, build_sample_trace, encode_stream
from .schema import DEFAULT_SCHEMA, load_schema, read_event_file
from .synthgen import (
    FamilyTemplate,
    default_templates,
    generate_corpus,
    read_manifest,
)
from .trainer import OptimizerConfig, train
from .windows import WindowConfig, dump_snapshot, iter_windows

logger = logging.getLogger("mgdvd")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=float, default=60.0, help="window size in seconds")
    p.add_argument("--step", type=float, default=30.0, help="window step in seconds")
    p.add_argument("--schema", default=None, help="schema file (default: built-in)")
    p.add_argument("--catalog", default=None, help="meta-graph catalog file (default: built-in)")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mgdvd",
        description="Streaming behavior-graph embedding and gallery-match detection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a labeled synthetic corpus")
    p.add_argument("--families", default="default",
                   help="'default', comma-separated default labels, or a JSON template file")
    p.add_argument("--count", type=int, default=10, help="samples per family")
    p.add_argument("--duration", type=float, default=150.0, help="stream length in seconds")
    p.add_argument("--out", required=True, help="output corpus directory")
    _add_common(p)

    p = sub.add_parser("ingest", help="parse a stream and dump window snapshots")
    p.add_argument("--stream", required=True)
    p.add_argument("--out", default=None, help="write snapshots to this file (default stdout)")
    p.add_argument("--delta-mode", choices=("both", "source"), default="both")
    _add_common(p)

    p = sub.add_parser("train", help="fit parameters on a corpus train split")
    p.add_argument("--data", required=True, help="corpus directory with manifest.txt")
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--gallery-out", default=None,
                   help="write the reference gallery here (default: <out>.gallery)")
    p.add_argument("--loss-log", default=None, help="write epoch|loss table here")
    p.add_argument("--gamma", type=float, default=0.3)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--rep-dim", type=int, default=64)
    p.add_argument("--hidden-dim", type=int, default=300)
    p.add_argument("--embed-dim", type=int, default=60)
    p.add_argument("--mode", choices=MODES, default="auto")
    _add_common(p)

    p = sub.add_parser("detect", help="classify one stream against a gallery")
    p.add_argument("--stream", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--consistency", type=int, default=2)
    p.add_argument("--mode", choices=MODES, default="auto")
    p.add_argument("--keep-going", action="store_true",
                   help="keep processing windows after the first final verdict")
    p.add_argument("--timing", choices=("none", "wall"), default="none",
                   help="latency column source (wall timing breaks determinism)")
    p.add_argument("--target", default=None, help="target process as proc:<id>")
    p.add_argument("--out", default=None, help="verdict log path (default stdout only)")
    _add_common(p)

    p = sub.add_parser("bench", help="compare engine modes (and kernels) on a corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--modes", default="auto,static-walk")
    p.add_argument("--impl", default="active",
                   choices=("active", "both", "python", "compiled"))
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--split", default="test")
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--consistency", type=int, default=2)
    p.add_argument("--calibrate-tau", action="store_true",
                   help="sweep tau on the val split and report the best F-1")
    _add_common(p)

    p = sub.add_parser("inspect", help="per-family meta-graph attention weights")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--topk", type=int, default=3)
    p.add_argument("--mode", choices=MODES, default="auto")
    _add_common(p)

    return parser


def _load_context(args):
    schema = load_schema(args.schema) if args.schema else DEFAULT_SCHEMA
    catalog = load_catalog(args.catalog, schema) if args.catalog else load_default_catalog(schema)
    wcfg = WindowConfig(window=args.window, step=args.step)
    return schema, catalog, wcfg


def _templates_from_spec(spec: str) -> list[FamilyTemplate]:
    if spec == "default":
        return default_templates()
    if os.path.exists(spec):
        with open(spec, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        templates = []
        for item in raw:
            item = dict(item)
            item["motifs"] = tuple(item.get("motifs", ()))
            if "rates" in item:
                item["rates"] = dict(item["rates"])
            templates.append(FamilyTemplate(**item))
        return templates
    wanted = [name.strip() for name in spec.split(",") if name.strip()]
    by_label = {t.label: t for t in default_templates()}
    missing = [w for w in wanted if w not in by_label]
    if missing:
        raise InputError(f"unknown family templates: {missing} (and no such file)")
    return [by_label[w] for w in wanted]


def cmd_gen(args) -> int:
    schema, catalog, _ = _load_context(args)
    templates = _templates_from_spec(args.families)
    rows = generate_corpus(
        templates, args.count, args.duration, args.seed, args.out, catalog, schema
    )
    counts = {}
    for r in rows:
        counts[r.split] = counts.get(r.split, 0) + 1
    print(f"wrote {len(rows)} streams to {args.out} "
          f"(train={counts.get('train', 0)} val={counts.get('val', 0)} test={counts.get('test', 0)})")
    return 0


def cmd_ingest(args) -> int:
    schema, _, wcfg = _load_context(args)
    events = read_event_file(args.stream, schema)
    chunks = []
    for step in iter_windows(events, wcfg, mode=args.delta_mode):
        chunks.append(dump_snapshot(step.graph))
        chunks.append(f"delta {len(step.delta)} ratio {step.ratio!r}\n")
    text = "".join(chunks)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_train(args) -> int:
    schema, catalog, wcfg = _load_context(args)
    h = ModelHyperparams(
        layers=args.layers, rep_dim=args.rep_dim, hidden_dim=args.hidden_dim,
        embed_dim=args.embed_dim, gamma=args.gamma,
    )
    corpus = Path(args.data)
    rows = read_manifest(corpus / "manifest.txt")
    train_rows = [r for r in rows if r.split == "train"]
    logger.info("building traces for %d training streams", len(train_rows))
    traces = []
    for row in train_rows:
        events = read_event_file(corpus / row.path, schema)
        traces.append(
            build_sample_trace(events, h, catalog, schema, wcfg, args.mode,
                               row.sample_id, row.family)
        )
    cfg = OptimizerConfig(lr=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                          seed=args.seed)
    result = train(traces, cfg, h)
    save_checkpoint(args.out, result.params, h)

    from .pipeline import build_gallery

    gallery = build_gallery(result.params, h, traces)
    gallery_path = args.gallery_out or f"{args.out}.gallery"
    gallery.save(gallery_path)

    loss_lines = "\n".join(f"{epoch}|{loss!r}" for epoch, loss in result.history)
    if args.loss_log:
        Path(args.loss_log).write_text(loss_lines + "\n", encoding="utf-8")
    print(loss_lines)
    print(f"# initial {result.initial_loss!r} final {result.final_loss!r} "
          f"checkpoint {args.out} gallery {gallery_path}")
    return 0


def cmd_detect(args) -> int:
    schema, catalog, wcfg = _load_context(args)
    params, h = load_checkpoint(args.checkpoint)
    gallery = Gallery.load(args.gallery)
    dcfg = DetectorConfig(tau=args.tau, consistency_window=args.consistency)
    events = read_event_file(args.stream, schema)
    target = None
    if args.target:
        from .schema import EntityRef

        target = EntityRef.from_token(args.target)
    verdicts, latencies = stream_detect(
        events, params, h, catalog, gallery, dcfg, wcfg, schema,
        mode=args.mode, stop_on_final=not args.keep_going, target=target,
        measure_wall=(args.timing == "wall"),
    )
    lines = [format_verdict_line(v, latencies[i]) for i, v in enumerate(verdicts)]
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    schema, catalog, wcfg = _load_context(args)
    params, h = load_checkpoint(args.checkpoint)
    gallery = Gallery.load(args.gallery)
    dcfg = DetectorConfig(tau=args.tau, consistency_window=args.consistency)
    if args.calibrate_tau:
        tau, f1 = calibrate_tau(args.data, params, h, catalog, gallery, wcfg, schema)
        print(f"calibrated tau {tau} (val F-1 {f1:.3f})")
        dcfg = DetectorConfig(tau=tau, consistency_window=args.consistency)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    report = bench(
        args.data, modes, params, h, catalog, gallery, dcfg, wcfg, schema,
        split=args.split, impls=(args.impl,), reps=args.reps,
        config_echo={"tau": dcfg.tau, "window": wcfg.window, "step": wcfg.step,
                     "seed": args.seed},
    )
    print(report.table())
    return 0


def cmd_inspect(args) -> int:
    schema, catalog, wcfg = _load_context(args)
    params, h = load_checkpoint(args.checkpoint)
    corpus = Path(args.data)
    rows = [r for r in read_manifest(corpus / "manifest.txt") if r.split == args.split]
    if not rows:
        raise InputError(f"no samples in split {args.split!r}")
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for row in rows:
        events = read_event_file(corpus / row.path, schema)
        for win in encode_stream(events, params, h, catalog, schema, wcfg, args.mode):
            sums[row.family] = sums.get(row.family, np.zeros(len(catalog))) + win.theta
            counts[row.family] = counts.get(row.family, 0) + 1
    header = "family      " + " ".join(f"M{m.mid:<14}" for m in catalog)
    print(header)
    for family in sorted(sums):
        mean = sums[family] / counts[family]
        weights = " ".join(f"{w:.12f}" for w in mean)
        print(f"{family:<11} {weights}")
    print()
    for family in sorted(sums):
        mean = sums[family] / counts[family]
        top = np.argsort(-mean)[: args.topk]
        ranked = " ".join(f"M{catalog.metagraphs[i].mid}:{mean[i]:.5f}" for i in top)
        print(f"top{args.topk} {family}: {ranked}")
    return 0


_COMMANDS = {
    "gen": cmd_gen,
    "ingest": cmd_ingest,
    "train": cmd_train,
    "detect": cmd_detect,
    "bench": cmd_bench,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    level = os.environ.get("MGDVD_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except MgdvdError as exc:
        print(f"mgdvd: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
