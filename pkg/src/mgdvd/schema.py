"""Typed event schema: entities, relations, and the event-line format.

The vocabulary is deliberately small and fixed: eight entity types in a
canonical total order (the order used everywhere a node list must be
sorted by type) and a configurable set of relations, each pinned to one
(source type, destination type) pair. An event is one timestamped typed
interaction between two entities.

Event-file format, one record per line, pipe separated:

    timestamp|<etype>:<id>|<relation>|<etype>:<id>|<sample_id>

Schema-file format, one declaration per line:

    entity <type_name>
    relation <name> <src_type> <dst_type>

Blank lines and ``#`` comments are allowed in schema files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

from .errors import (
    DanglingEndpointError,
    DegenerateSchemaError,
    MalformedRecordError,
    OutOfOrderStreamError,
    SchemaFileError,
    SchemaViolationError,
    UnknownEntityTypeError,
    UnknownRelationTypeError,
)


class EntityType(Enum):
    """The eight entity kinds, declared in their canonical sort order."""

    PROCESS = "process"
    FILE = "file"
    MEMORY = "memory"
    REGISTRY = "registry"
    SYSTEM = "system"
    MUTEX = "mutex"
    ATTRIBUTE = "attribute"
    NETWORK = "network"

    @property
    def rank(self) -> int:
        return _ENTITY_RANK[self]

    @property
    def token(self) -> str:
        """Short token used in event lines (``proc:P1``)."""
        return _ENTITY_TOKEN[self]


_ENTITY_RANK = {t: i for i, t in enumerate(EntityType)}

_ENTITY_TOKEN = {
    EntityType.PROCESS: "proc",
    EntityType.FILE: "file",
    EntityType.MEMORY: "mem",
    EntityType.REGISTRY: "reg",
    EntityType.SYSTEM: "sys",
    EntityType.MUTEX: "mutex",
    EntityType.ATTRIBUTE: "attr",
    EntityType.NETWORK: "net",
}

_TOKEN_ENTITY = {tok: t for t, tok in _ENTITY_TOKEN.items()}

_NAME_ENTITY = {t.value: t for t in EntityType}


@dataclass(frozen=True)
class RelationType:
    """A named relation with fixed endpoint typing."""

    name: str
    src: EntityType
    dst: EntityType


@dataclass(frozen=True, eq=False)
class EntityRef:
    """A node identity: (type, opaque id). Equality is exact string match.

    Hash is computed once; refs are dictionary keys in every hot loop.
    """

    etype: EntityType
    id: str

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.etype.value, self.id)))

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, EntityRef):
            return NotImplemented
        return self.id == other.id and self.etype is other.etype

    def sort_key(self) -> tuple[int, str]:
        return (self.etype.rank, self.id)

    def token(self) -> str:
        return f"{self.etype.token}:{self.id}"

    @staticmethod
    def from_token(text: str) -> "EntityRef":
        tok, sep, ident = text.partition(":")
        if not sep:
            raise MalformedRecordError(f"entity field missing ':': {text!r}")
        etype = _TOKEN_ENTITY.get(tok)
        if etype is None:
            raise UnknownEntityTypeError(f"unknown entity type token {tok!r}")
        if not ident:
            raise MalformedRecordError(f"empty entity id in {text!r}")
        return EntityRef(etype, ident)


@dataclass(frozen=True)
class Event:
    """One timestamped typed interaction between two entities."""

    ts: float
    src: EntityRef
    rel: RelationType
    dst: EntityRef
    sample_id: str


class NetworkSchema:
    """Entity-type set plus relation definitions with endpoint typing."""

    def __init__(self, entity_types: Iterable[EntityType], relations: Iterable[RelationType]):
        self.entity_types = frozenset(entity_types)
        self.relations: dict[str, RelationType] = {}
        for rel in relations:
            if rel.name in self.relations:
                raise SchemaFileError(f"duplicate relation name {rel.name!r}")
            self.relations[rel.name] = rel
        # Stable relation order: declaration order, used for kernel codes.
        self.relation_order = tuple(self.relations)

    def relation(self, name: str) -> RelationType:
        rel = self.relations.get(name)
        if rel is None:
            raise UnknownRelationTypeError(f"unknown relation {name!r}")
        return rel

    def validate(self) -> None:
        """Check heterogeneity cardinalities and endpoint declarations."""
        if len(self.entity_types) <= 1 or len(self.relations) <= 1:
            raise DegenerateSchemaError(
                f"schema needs >1 entity and >1 relation types, got "
                f"{len(self.entity_types)} / {len(self.relations)}"
            )
        for rel in self.relations.values():
            if rel.src not in self.entity_types or rel.dst not in self.entity_types:
                raise DanglingEndpointError(
                    f"relation {rel.name!r} references undeclared entity type"
                )


def validate_schema(schema: NetworkSchema) -> None:
    schema.validate()


def _default_relations() -> list[RelationType]:
    e = EntityType
    pairs = [
        ("proc_fork_proc", e.PROCESS, e.PROCESS),
        ("proc_open_file", e.PROCESS, e.FILE),
        ("proc_write_file", e.PROCESS, e.FILE),
        ("proc_alloc_memory", e.PROCESS, e.MEMORY),
        ("proc_set_registry", e.PROCESS, e.REGISTRY),
        ("proc_syscall_system", e.PROCESS, e.SYSTEM),
        ("proc_create_mutex", e.PROCESS, e.MUTEX),
        ("proc_set_attribute", e.PROCESS, e.ATTRIBUTE),
        ("proc_connect_network", e.PROCESS, e.NETWORK),
        ("proc_read_file", e.PROCESS, e.FILE),
    ]
    return [RelationType(n, s, d) for n, s, d in pairs]


DEFAULT_SCHEMA = NetworkSchema(list(EntityType), _default_relations())


def load_schema(path) -> NetworkSchema:
    """Parse a schema file; returns a validated NetworkSchema."""
    entities: list[EntityType] = []
    relations: list[RelationType] = []
    declared: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "entity" and len(parts) == 2:
                etype = _NAME_ENTITY.get(parts[1])
                if etype is None:
                    raise UnknownEntityTypeError(
                        f"{path}:{lineno}: unknown entity type {parts[1]!r}"
                    )
                entities.append(etype)
                declared.add(parts[1])
            elif parts[0] == "relation" and len(parts) == 4:
                name, src_name, dst_name = parts[1], parts[2], parts[3]
                for endpoint in (src_name, dst_name):
                    if endpoint not in declared:
                        raise DanglingEndpointError(
                            f"{path}:{lineno}: relation {name!r} references "
                            f"undeclared type {endpoint!r}"
                        )
                relations.append(
                    RelationType(name, _NAME_ENTITY[src_name], _NAME_ENTITY[dst_name])
                )
            else:
                raise SchemaFileError(f"{path}:{lineno}: unrecognized line {line!r}")
    schema = NetworkSchema(entities, relations)
    schema.validate()
    return schema


def dump_schema(schema: NetworkSchema) -> str:
    lines = [f"entity {t.value}" for t in EntityType if t in schema.entity_types]
    for name in schema.relation_order:
        rel = schema.relations[name]
        lines.append(f"relation {rel.name} {rel.src.value} {rel.dst.value}")
    return "\n".join(lines) + "\n"


def _format_ts(ts: float) -> str:
    return repr(ts)


def parse_event_line(line: str, schema: NetworkSchema = DEFAULT_SCHEMA) -> Event:
    """Parse and validate one event record.

    Raises MalformedRecordError, UnknownEntityTypeError,
    UnknownRelationTypeError, or SchemaViolationError.
    """
    stripped = line.rstrip("\n")
    fields = stripped.split("|")
    if len(fields) != 5:
        raise MalformedRecordError(
            f"expected 5 pipe-separated fields, got {len(fields)}: {stripped!r}"
        )
    ts_text, src_text, rel_name, dst_text, sample_id = fields
    try:
        ts = float(ts_text)
    except ValueError:
        raise MalformedRecordError(f"non-numeric timestamp {ts_text!r}") from None
    if not math.isfinite(ts) or ts < 0:
        raise MalformedRecordError(f"timestamp must be finite and >= 0, got {ts_text!r}")
    src = EntityRef.from_token(src_text)
    dst = EntityRef.from_token(dst_text)
    rel = schema.relation(rel_name)
    if src.etype is not rel.src or dst.etype is not rel.dst:
        raise SchemaViolationError(
            f"relation {rel_name!r} requires {rel.src.value}->{rel.dst.value}, "
            f"got {src.etype.value}->{dst.etype.value}"
        )
    if not sample_id:
        raise MalformedRecordError("empty sample_id")
    return Event(ts, src, rel, dst, sample_id)


def serialize_event(ev: Event) -> str:
    return "|".join(
        (_format_ts(ev.ts), ev.src.token(), ev.rel.name, ev.dst.token(), ev.sample_id)
    )


def normalize_event_line(line: str, schema: NetworkSchema = DEFAULT_SCHEMA) -> str:
    return serialize_event(parse_event_line(line, schema))


def read_events(lines: Iterable[str], schema: NetworkSchema = DEFAULT_SCHEMA) -> Iterator[Event]:
    """Parse an event stream, enforcing non-decreasing timestamps.

    Out-of-order events are rejected, not buffered.
    """
    last_ts = -math.inf
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        ev = parse_event_line(line, schema)
        if ev.ts < last_ts:
            raise OutOfOrderStreamError(
                f"line {lineno}: timestamp {ev.ts} precedes {last_ts}"
            )
        last_ts = ev.ts
        yield ev


def read_event_file(path, schema: NetworkSchema = DEFAULT_SCHEMA) -> list[Event]:
    with open(path, "r", encoding="utf-8") as fh:
        return list(read_events(fh, schema))


def write_event_file(path, events: Iterable[Event]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(serialize_event(ev) + "\n")
