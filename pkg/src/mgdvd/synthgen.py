"""Synthetic labeled event streams with planted ground truth.

Each family template drives a base sample: background activity drawn
from per-relation rates over a small entity pool, plus planted catalog
motifs rooted at the main process (every flow edge becomes one event, so
each plant is a matchable instance). Variants mutate the base: a
fraction of entities is renamed to variant-private ids (the rest keep
family-shared ids), motifs drop out at a bounded rate, and timings
jitter. Everything is seeded; identical inputs give byte-identical
streams.

Stream profiles: ``uniform`` spreads background over the whole duration;
``burst_steady`` frontloads varied activity and then repeats a fixed set
of edges, which keeps the graph populated while node churn drops to
zero (the low-churn regime the incremental encoder exploits).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, InsufficientFamiliesError
from .metagraphs import Catalog, MetaGraph, load_default_catalog
from .schema import (
    DEFAULT_SCHEMA,
    EntityRef,
    EntityType,
    Event,
    NetworkSchema,
    write_event_file,
)

_POOL_PREFIX = {
    EntityType.PROCESS: "p",
    EntityType.FILE: "f",
    EntityType.MEMORY: "m",
    EntityType.REGISTRY: "r",
    EntityType.SYSTEM: "s",
    EntityType.MUTEX: "x",
    EntityType.ATTRIBUTE: "a",
    EntityType.NETWORK: "n",
}


@dataclass(frozen=True)
class FamilyTemplate:
    label: str
    rates: dict[str, float] = field(default_factory=dict)  # relation -> events/s
    motifs: tuple[int, ...] = ()
    motifs_per_minute: float = 6.0
    rename_rate: float = 0.3
    motif_dropout: float = 0.1
    jitter: float = 1.5
    pool_size: int = 4
    profile: str = "uniform"  # or "burst_steady"
    burst_fraction: float = 0.3
    steady_rate: float = 2.0
    steady_repertoire: int = 20  # distinct edges repeated through the tail
    seed: int = 0

    def __post_init__(self):
        if any(rate < 0 for rate in self.rates.values()):
            raise InputError("rates must be >= 0")
        if not (0.0 <= self.motif_dropout <= 0.2):
            raise InputError("motif dropout must lie in [0, 0.2]")


@dataclass
class _BaseEvent:
    ts: float
    src_slot: str
    relation: str
    dst_slot: str
    motif_index: int = -1  # background and anchor events carry -1
    frozen_ts: bool = False


def _pool_slot(rng: np.random.Generator, etype: EntityType, size: int) -> str:
    return f"{_POOL_PREFIX[etype]}{rng.integers(size)}"


def _plant_motif(
    rng: np.random.Generator,
    m: MetaGraph,
    plant_idx: int,
    t0: float,
    pool_size: int,
) -> tuple[list[_BaseEvent], dict[str, str]]:
    slots: dict[str, str] = {m.source: "main"}
    for name, etype in m.node_types.items():
        if name == m.source:
            continue
        if etype is EntityType.PROCESS or rng.random() < 0.5:
            slots[name] = f"m{m.mid}.{plant_idx}.{name}"
        else:
            slots[name] = _pool_slot(rng, etype, pool_size)
    events = []
    for actor, rel_name, obj in m.required_edges():
        ts = t0 + float(rng.uniform(0.0, 4.0))
        events.append(_BaseEvent(ts, slots[actor], rel_name, slots[obj], plant_idx))
    return events, slots


def _base_sample(
    tmpl: FamilyTemplate,
    duration: float,
    catalog: Catalog,
    schema: NetworkSchema,
) -> tuple[list[_BaseEvent], dict[str, EntityType], list[dict]]:
    """Template-seeded skeleton shared by every variant of the family."""
    rng = np.random.default_rng(np.random.SeedSequence([0x5EED, tmpl.seed]))
    slot_types: dict[str, EntityType] = {"main": EntityType.PROCESS}
    for etype, prefix in _POOL_PREFIX.items():
        for i in range(tmpl.pool_size):
            slot_types[f"{prefix}{i}"] = etype
    events: list[_BaseEvent] = [
        _BaseEvent(0.0, "main", "proc_syscall_system", "s0", -1, frozen_ts=True)
    ]

    active_end = duration
    if tmpl.profile == "burst_steady":
        active_end = duration * tmpl.burst_fraction
    for rel_name in sorted(tmpl.rates):
        rate = tmpl.rates[rel_name]
        rel = schema.relation(rel_name)
        count = int(rng.poisson(rate * active_end))
        for _ in range(count):
            ts = float(rng.uniform(0.0, active_end))
            if rng.random() < 0.6:
                src = "main"
            else:
                src = _pool_slot(rng, rel.src, tmpl.pool_size)
            dst = _pool_slot(rng, rel.dst, tmpl.pool_size)
            events.append(_BaseEvent(ts, src, rel_name, dst))

    if tmpl.profile == "burst_steady" and active_end < duration:
        # a fixed repertoire of repeated edges: the graph stays populated
        # across the tail while its distinct-edge support never changes,
        # which is exactly the zero-churn steady state
        procs = ["main"] + [f"p{i}" for i in range(tmpl.pool_size)]
        rel_names = sorted(tmpl.rates) or ["proc_syscall_system"]
        repertoire: list[tuple[str, str, str]] = [("main", "proc_syscall_system", "s0")]
        for j in range(max(tmpl.steady_repertoire - 1, 0)):
            rel = schema.relation(rel_names[j % len(rel_names)])
            src = procs[int(rng.integers(len(procs)))]
            dst = _pool_slot(rng, rel.dst, tmpl.pool_size)
            repertoire.append((src, rel.name, dst))
        count = int(rng.poisson(tmpl.steady_rate * (duration - active_end)))
        for _ in range(count):
            ts = float(rng.uniform(active_end, duration))
            src, rel_name, dst = repertoire[int(rng.integers(len(repertoire)))]
            events.append(_BaseEvent(ts, src, rel_name, dst, frozen_ts=True))

    by_id = {m.mid: m for m in catalog}
    truth: list[dict] = []
    plant_idx = 0
    for mid in tmpl.motifs:
        if mid not in by_id:
            raise InputError(f"template {tmpl.label!r} plants unknown motif {mid}")
        n_plants = max(1, int(round(tmpl.motifs_per_minute * active_end / 60.0)))
        for _ in range(n_plants):
            t0 = float(rng.uniform(0.0, max(active_end - 5.0, 1e-9)))
            plant_events, slots = _plant_motif(rng, by_id[mid], plant_idx, t0, tmpl.pool_size)
            events.extend(plant_events)
            for name, etype in by_id[mid].node_types.items():
                slot_types.setdefault(slots[name], etype)
            truth.append({"motif": mid, "t0": t0, "index": plant_idx, "slots": slots})
            plant_idx += 1
    return events, slot_types, truth


def generate_stream(
    tmpl: FamilyTemplate,
    duration: float,
    seed: int,
    sample_id: str = "",
    catalog: Catalog | None = None,
    schema: NetworkSchema = DEFAULT_SCHEMA,
) -> tuple[list[Event], dict]:
    """One labeled variant stream plus its planted ground truth."""
    if duration < 0:
        raise InputError("duration must be >= 0")
    catalog = catalog if catalog is not None else load_default_catalog(schema)
    sample_id = sample_id or f"{tmpl.label}{seed:03d}"
    if duration == 0:
        return [], {"label": tmpl.label, "sample_id": sample_id, "planted": []}

    base_events, slot_types, base_truth = _base_sample(tmpl, duration, catalog, schema)
    rng = np.random.default_rng(np.random.SeedSequence([0xFA111, tmpl.seed, seed]))

    dropped = {
        t["index"] for t in base_truth if rng.random() < tmpl.motif_dropout
    }
    renames: dict[str, str] = {}
    for slot in sorted(slot_types):
        if slot == "main":
            continue  # the monitored process keeps its family identity
        if rng.random() < tmpl.rename_rate:
            renames[slot] = f"{sample_id}~{slot}"

    def concrete(slot: str) -> EntityRef:
        ident = renames.get(slot, f"{tmpl.label}.{slot}")
        return EntityRef(slot_types[slot], ident)

    events: list[Event] = []
    for be in base_events:
        if be.motif_index in dropped:
            continue
        ts = be.ts
        if not be.frozen_ts and tmpl.jitter > 0:
            ts = max(0.0, ts + float(rng.uniform(-tmpl.jitter, tmpl.jitter)))
        rel = schema.relation(be.relation)
        events.append(Event(ts, concrete(be.src_slot), rel, concrete(be.dst_slot), sample_id))
    events.sort(key=lambda e: (e.ts, e.src.sort_key(), e.rel.name, e.dst.sort_key()))

    truth = {
        "label": tmpl.label,
        "sample_id": sample_id,
        "seed": seed,
        "planted": [
            {
                "motif": t["motif"],
                "t0": t["t0"],
                "nodes": {name: concrete(slot).id for name, slot in t["slots"].items()},
            }
            for t in base_truth
            if t["index"] not in dropped
        ],
    }
    return events, truth


def default_templates() -> list[FamilyTemplate]:
    return [
        FamilyTemplate(
            label="exfil",
            rates={
                "proc_write_file": 0.5,
                "proc_read_file": 0.4,
                "proc_connect_network": 0.6,
                "proc_open_file": 0.3,
            },
            motifs=(2, 9, 12),
            motifs_per_minute=12.0,
            rename_rate=0.15,
            motif_dropout=0.05,
            jitter=1.0,
            pool_size=3,
            seed=11,
        ),
        FamilyTemplate(
            label="miner",
            rates={
                "proc_alloc_memory": 1.3,
                "proc_syscall_system": 1.0,
                "proc_connect_network": 0.3,
            },
            motifs=(4, 6, 9),
            motifs_per_minute=12.0,
            rename_rate=0.15,
            motif_dropout=0.05,
            jitter=1.0,
            pool_size=3,
            seed=22,
        ),
        FamilyTemplate(
            label="regworm",
            rates={
                "proc_set_registry": 1.0,
                "proc_create_mutex": 0.5,
                "proc_set_attribute": 0.5,
            },
            motifs=(5, 7, 8),
            motifs_per_minute=12.0,
            rename_rate=0.15,
            motif_dropout=0.05,
            jitter=1.0,
            pool_size=3,
            seed=33,
        ),
        FamilyTemplate(
            label="infector",
            rates={
                "proc_fork_proc": 0.6,
                "proc_write_file": 0.7,
                "proc_read_file": 0.5,
            },
            motifs=(13, 14, 10, 1),
            motifs_per_minute=12.0,
            rename_rate=0.15,
            motif_dropout=0.05,
            jitter=1.0,
            pool_size=3,
            seed=44,
        ),
        FamilyTemplate(
            label="benign",
            rates={
                name: 0.07
                for name in (
                    "proc_open_file",
                    "proc_read_file",
                    "proc_syscall_system",
                    "proc_set_attribute",
                    "proc_fork_proc",
                    "proc_write_file",
                    "proc_alloc_memory",
                    "proc_set_registry",
                )
            },
            motifs=(),
            rename_rate=0.4,
            pool_size=8,
            seed=55,
        ),
    ]


def _split_counts(n: int) -> tuple[int, int, int]:
    n_train = int(round(0.6 * n))
    n_val = int(round(0.2 * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


@dataclass
class ManifestRow:
    sample_id: str
    family: str
    split: str
    path: str
    duration: float
    seed: int


def generate_corpus(
    templates: list[FamilyTemplate],
    per_family: int,
    duration: float,
    seed: int,
    out_dir,
    catalog: Catalog | None = None,
    schema: NetworkSchema = DEFAULT_SCHEMA,
) -> list[ManifestRow]:
    """Write labeled streams, truth files, and a 6:2:2 split manifest."""
    if len(templates) < 2:
        raise InsufficientFamiliesError("corpus generation needs >= 2 family templates")
    catalog = catalog if catalog is not None else load_default_catalog(schema)
    out = Path(out_dir)
    (out / "streams").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    rows: list[ManifestRow] = []
    for fam_idx, tmpl in enumerate(templates):
        rng = np.random.default_rng(np.random.SeedSequence([seed, fam_idx]))
        order = rng.permutation(per_family)
        n_train, n_val, _ = _split_counts(per_family)
        split_of = {}
        for pos, sample_idx in enumerate(order):
            split_of[int(sample_idx)] = (
                "train" if pos < n_train else "val" if pos < n_train + n_val else "test"
            )
        for k in range(per_family):
            sample_seed = seed * 10_000 + fam_idx * 100 + k
            sample_id = f"{tmpl.label}{k:03d}"
            events, truth = generate_stream(
                tmpl, duration, sample_seed, sample_id, catalog, schema
            )
            rel_path = f"streams/{sample_id}.events"
            write_event_file(out / rel_path, events)
            with open(out / "truth" / f"{sample_id}.json", "w", encoding="utf-8") as fh:
                json.dump(truth, fh, sort_keys=True, separators=(",", ":"))
            rows.append(
                ManifestRow(sample_id, tmpl.label, split_of[k], rel_path, duration, sample_seed)
            )
    rows.sort(key=lambda r: (r.family, r.sample_id))
    write_manifest(out / "manifest.txt", rows)
    return rows


def write_manifest(path, rows: list[ManifestRow]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# sample_id|family|split|path|duration|seed\n")
        for r in rows:
            fh.write(f"{r.sample_id}|{r.family}|{r.split}|{r.path}|{r.duration!r}|{r.seed}\n")


def read_manifest(path) -> list[ManifestRow]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            sid, family, split, rel_path, duration, sample_seed = line.split("|")
            rows.append(ManifestRow(sid, family, split, rel_path, float(duration), int(sample_seed)))
    return rows
