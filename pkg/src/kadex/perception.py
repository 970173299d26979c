"""Deterministic stand-in for the vision encoder.

Observation records carry trait and context tokens instead of pixels; a
token activates the graph node whose label matches it exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import jsonschema
import numpy as np

from .skg import KnowledgeGraph, NodeKind

STREAM_SCHEMA = "kadex-stream"
STREAM_VERSION = 1


class StreamError(ValueError):
    """Malformed observation stream; the message carries the line number."""


@dataclass(frozen=True)
class ObservationRecord:
    obs_id: str
    slot: int
    site: str
    feature_tokens: tuple[str, ...]
    context_tokens: tuple[str, ...] = ()
    true_entity: str | None = None
    payload_bytes: int = 0

    def to_record(self) -> dict:
        rec = {
            "obs_id": self.obs_id,
            "slot": self.slot,
            "site": self.site,
            "feature_tokens": list(self.feature_tokens),
            "context_tokens": list(self.context_tokens),
            "payload_bytes": self.payload_bytes,
        }
        if self.true_entity is not None:
            rec["true_entity"] = self.true_entity
        return rec


@dataclass(frozen=True)
class Activation:
    a_feat: frozenset[str]
    a_ctx: frozenset[str] = frozenset()
    unmatched: tuple[str, ...] = ()
    dropped: tuple[str, ...] = field(default=(), compare=False)

    @property
    def nodes(self) -> frozenset[str]:
        return self.a_feat | self.a_ctx


_RECORD = {
    "type": "object",
    "properties": {
        "obs_id": {"type": "string", "minLength": 1},
        "slot": {"type": "integer", "minimum": 0},
        "site": {"type": "string"},
        "feature_tokens": {"type": "array", "items": {"type": "string"}},
        "context_tokens": {"type": "array", "items": {"type": "string"}},
        "true_entity": {"type": ["string", "null"]},
        "payload_bytes": {"type": "integer", "minimum": 0},
    },
    "required": ["obs_id", "slot", "site", "feature_tokens", "payload_bytes"],
    "additionalProperties": False,
}
_HEADER = {
    "type": "object",
    "properties": {"schema": {"const": STREAM_SCHEMA}, "version": {"const": STREAM_VERSION}},
    "required": ["schema", "version"],
    "additionalProperties": False,
}


def parse_stream(lines: Iterable[str]) -> list[ObservationRecord]:
    """Parse line-delimited records; an optional first line is the version header."""
    records: list[ObservationRecord] = []
    last_slot = -1
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StreamError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if isinstance(obj, dict) and "schema" in obj:
            if records or lineno != 1:
                raise StreamError(f"line {lineno}: header allowed only on the first line")
            _check(obj, _HEADER, lineno)
            continue
        _check(obj, _RECORD, lineno)
        if obj["slot"] < last_slot:
            raise StreamError(
                f"line {lineno}: slot {obj['slot']} decreases (previous {last_slot})")
        last_slot = obj["slot"]
        records.append(ObservationRecord(
            obs_id=obj["obs_id"],
            slot=obj["slot"],
            site=obj["site"],
            feature_tokens=tuple(obj["feature_tokens"]),
            context_tokens=tuple(obj.get("context_tokens", ())),
            true_entity=obj.get("true_entity"),
            payload_bytes=obj["payload_bytes"],
        ))
    return records


def _check(obj: object, schema: dict, lineno: int) -> None:
    try:
        jsonschema.validate(obj, schema)
    except jsonschema.ValidationError as exc:
        field_ = "/".join(str(p) for p in exc.absolute_path)
        where = f" field {field_!r}" if field_ else ""
        raise StreamError(f"line {lineno}:{where} {exc.message}") from None


def ingest_stream(source: str | Path | TextIO) -> list[ObservationRecord]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return parse_stream(fh)
    return parse_stream(source)


def dump_stream(records: Iterable[ObservationRecord]) -> str:
    lines = [json.dumps({"schema": STREAM_SCHEMA, "version": STREAM_VERSION})]
    lines += [json.dumps(r.to_record()) for r in records]
    return "\n".join(lines) + "\n"


def match_tokens(graph: KnowledgeGraph, feature_tokens: Iterable[str],
                 context_tokens: Iterable[str] = ()) -> Activation:
    """Exact label match of tokens to attribute and context nodes."""
    feat, ctx, unmatched = [], [], []
    for tokens, kind, hits in ((feature_tokens, NodeKind.ATTRIBUTE, feat),
                               (context_tokens, NodeKind.CONTEXT, ctx)):
        for tok in tokens:
            nid = graph.lookup(tok, kind)
            if nid is None:
                unmatched.append(tok)
            else:
                hits.append(nid)
    return Activation(frozenset(feat), frozenset(ctx), tuple(unmatched))


def activate(record: ObservationRecord, graph: KnowledgeGraph, p_drop: float = 0.0,
             rng: np.random.Generator | None = None) -> Activation:
    """Map a record onto graph nodes, optionally dropping matched attributes.

    Each matched attribute is dropped independently with probability
    ``p_drop``; draws happen in token order so a seeded generator makes the
    result reproducible.  With ``p_drop == 0`` no random numbers are consumed.
    """
    if not 0.0 <= p_drop <= 1.0:
        raise ValueError(f"p_drop must lie in [0, 1], got {p_drop}")
    base = match_tokens(graph, record.feature_tokens, record.context_tokens)
    if p_drop == 0.0 or not base.a_feat:
        return base
    if rng is None:
        raise ValueError("a random generator is required when p_drop > 0")
    kept, dropped = set(), []
    seen = set()
    for tok in record.feature_tokens:
        nid = graph.lookup(tok, NodeKind.ATTRIBUTE)
        if nid is None or nid in seen:
            continue
        seen.add(nid)
        if rng.random() < p_drop:
            dropped.append(tok)
        else:
            kept.add(nid)
    return Activation(frozenset(kept), base.a_ctx, base.unmatched, tuple(dropped))
