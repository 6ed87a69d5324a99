"""Corpus-level evaluation and mode/kernel benchmarking.

Runs identical streams under each requested engine mode (and optionally
under each matching-kernel implementation), reporting median wall times
over repetitions plus detection accuracy. Timing uses the monotonic
clock; verdict content is unaffected by how it is timed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from statistics import median
from typing import Optional, Sequence

from . import kernels
from .detector import DetectorConfig, Gallery, Verdict, stream_detect
from .encoders.params import ModelHyperparams, ModelParams
from .errors import InputError
from .metagraphs import Catalog
from .schema import DEFAULT_SCHEMA, NetworkSchema, read_event_file
from .synthgen import ManifestRow, read_manifest
from .windows import WindowConfig


def predicted_label(verdicts: Sequence[Verdict], gallery: Gallery) -> Optional[str]:
    """Final label if reached, else last provisional, else best match."""
    label = None
    for v in verdicts:
        if v.status in ("provisional", "final") and v.label is not None:
            label = v.label
    if label is not None:
        return label
    if verdicts and verdicts[-1].best_sample is not None:
        best = verdicts[-1].best_sample
        for e in gallery.entries:
            if e.sample_id == best:
                return e.label
    return None


@dataclass
class CorpusResult:
    predictions: dict[str, Optional[str]]
    actual: dict[str, str]
    n_windows: int
    wall_s: float

    @property
    def accuracy(self) -> float:
        if not self.predictions:
            return 0.0
        hits = sum(
            1 for sid, pred in self.predictions.items() if pred == self.actual[sid]
        )
        return hits / len(self.predictions)


def load_corpus_streams(
    corpus_dir, rows: Sequence[ManifestRow], schema: NetworkSchema = DEFAULT_SCHEMA
) -> dict[str, list]:
    corpus = Path(corpus_dir)
    return {row.sample_id: read_event_file(corpus / row.path, schema) for row in rows}


def detect_corpus(
    corpus_dir,
    rows: Sequence[ManifestRow],
    params: ModelParams,
    h: ModelHyperparams,
    catalog: Catalog,
    gallery: Gallery,
    dcfg: DetectorConfig,
    wcfg: WindowConfig,
    schema: NetworkSchema = DEFAULT_SCHEMA,
    mode: str = "auto",
    stop_on_final: bool = False,
    streams: Optional[dict[str, list]] = None,
) -> CorpusResult:
    """Classify every stream; wall time covers the pipeline, not file io."""
    if streams is None:
        streams = load_corpus_streams(corpus_dir, rows, schema)
    predictions: dict[str, Optional[str]] = {}
    actual: dict[str, str] = {}
    n_windows = 0
    t0 = time.monotonic()
    for row in rows:
        verdicts, _ = stream_detect(
            streams[row.sample_id], params, h, catalog, gallery, dcfg, wcfg, schema,
            mode=mode, stop_on_final=stop_on_final,
        )
        n_windows += len(verdicts)
        predictions[row.sample_id] = predicted_label(verdicts, gallery)
        actual[row.sample_id] = row.family
    return CorpusResult(predictions, actual, n_windows, time.monotonic() - t0)


@dataclass
class BenchRow:
    mode: str
    impl: str
    total_s: float          # median over repetitions
    per_window_ms: float
    accuracy: float
    n_streams: int
    n_windows: int


@dataclass
class RunReport:
    rows: list[BenchRow]
    config: dict = field(default_factory=dict)

    def table(self) -> str:
        header = f"{'mode':<12} {'impl':<9} {'total_s':>9} {'win_ms':>8} {'acc':>6} {'streams':>8} {'windows':>8}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.mode:<12} {r.impl:<9} {r.total_s:>9.3f} {r.per_window_ms:>8.3f} "
                f"{r.accuracy:>6.3f} {r.n_streams:>8} {r.n_windows:>8}"
            )
        if self.config:
            echo = " ".join(f"{k}={v}" for k, v in sorted(self.config.items()))
            lines.append(f"# config {echo}")
        return "\n".join(lines)


def bench(
    corpus_dir,
    modes: Sequence[str],
    params: ModelParams,
    h: ModelHyperparams,
    catalog: Catalog,
    gallery: Gallery,
    dcfg: DetectorConfig = DetectorConfig(),
    wcfg: WindowConfig = WindowConfig(),
    schema: NetworkSchema = DEFAULT_SCHEMA,
    split: str = "test",
    impls: Sequence[str] = ("active",),
    reps: int = 5,
    config_echo: Optional[dict] = None,
) -> RunReport:
    """Comparative timing/accuracy table across engine modes and kernels."""
    rows = [r for r in read_manifest(Path(corpus_dir) / "manifest.txt") if r.split == split]
    streams = load_corpus_streams(corpus_dir, rows, schema)
    resolved_impls: list[str] = []
    for impl in impls:
        if impl == "active":
            resolved_impls.append(kernels.active_implementation())
        elif impl == "both":
            resolved_impls.extend(kernels.available_implementations())
        elif impl in ("compiled", "python"):
            if impl == "compiled" and not kernels.HAVE_COMPILED:
                raise InputError("compiled kernel requested but not built")
            resolved_impls.append(impl)
        else:
            raise InputError(f"unknown kernel impl {impl!r}")
    seen = set()
    resolved_impls = [i for i in resolved_impls if not (i in seen or seen.add(i))]

    report_rows: list[BenchRow] = []
    previous = kernels.active_implementation()
    try:
        for impl in resolved_impls:
            kernels.set_implementation(impl)
            for mode in modes:
                results = [
                    detect_corpus(
                        corpus_dir, rows, params, h, catalog, gallery, dcfg, wcfg,
                        schema, mode=mode, streams=streams,
                    )
                    for _ in range(max(reps, 1))
                ]
                total = median(r.wall_s for r in results)
                n_windows = results[0].n_windows
                report_rows.append(
                    BenchRow(
                        mode=mode,
                        impl=impl,
                        total_s=total,
                        per_window_ms=1000.0 * total / max(n_windows, 1),
                        accuracy=results[0].accuracy,
                        n_streams=len(rows),
                        n_windows=n_windows,
                    )
                )
    finally:
        kernels.set_implementation(previous)
    echo = dict(config_echo or {})
    echo.update({"split": split, "reps": reps, "modes": ",".join(modes)})
    return RunReport(report_rows, echo)


def calibrate_tau(
    corpus_dir,
    params: ModelParams,
    h: ModelHyperparams,
    catalog: Catalog,
    gallery: Gallery,
    wcfg: WindowConfig = WindowConfig(),
    schema: NetworkSchema = DEFAULT_SCHEMA,
    split: str = "val",
    benign_label: str = "benign",
    consistency_window: int = 2,
) -> tuple[float, float]:
    """Sweep the threshold on a validation split, maximizing malicious F-1."""
    rows = [r for r in read_manifest(Path(corpus_dir) / "manifest.txt") if r.split == split]
    best = (0.5, -1.0)
    for step in range(1, 19):
        tau = round(0.05 * step, 2)
        dcfg = DetectorConfig(tau=tau, consistency_window=consistency_window)
        result = detect_corpus(
            corpus_dir, rows, params, h, catalog, gallery, dcfg, wcfg, schema
        )
        tp = fp = fn = 0
        for sid, pred in result.predictions.items():
            actual_mal = result.actual[sid] != benign_label
            pred_mal = pred is not None and pred != benign_label
            if pred_mal and actual_mal:
                tp += 1
            elif pred_mal and not actual_mal:
                fp += 1
            elif not pred_mal and actual_mal:
                fn += 1
        f1 = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
        if f1 > best[1]:
            best = (tau, f1)
    return best
