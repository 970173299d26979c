"""In-process cloud: master graph, scripted expert review and patch generation.

An uploaded packet is first re-interpreted against the master graph.  If the
master explains it, the relevant community is pushed back.  Otherwise the
expert script is consulted (first matching rule wins); its patches update the
master before anything is sent.  Packets nobody can explain become anomaly
records and never touch either graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal

import jsonschema

from .perception import ObservationRecord, match_tokens
from .skg import (
    CORE, FORMAT_VERSION, GraphError, KnowledgeGraph, KnowledgePatch, NodeKind,
    integrate_patch, read_patch,
)
from .trigger import DEFAULT_TAU, InsightPacket, evaluate

SCRIPT_SCHEMA = "kadex-expert-script"
DEFAULT_EXPERT_DELAY = 4


@dataclass(frozen=True)
class ExpertRule:
    name: str
    tokens: frozenset[str]
    patches: tuple[KnowledgePatch, ...]

    def matches(self, packet: InsightPacket) -> bool:
        return self.tokens <= packet.tokens


@dataclass
class ExpertScript:
    rules: list[ExpertRule] = field(default_factory=list)

    def match(self, packet: InsightPacket) -> ExpertRule | None:
        for rule in self.rules:
            if rule.matches(packet):
                return rule
        return None


@dataclass(frozen=True)
class AnomalyRecord:
    obs_id: str
    slot: int
    site: str
    feature_tokens: tuple[str, ...]
    context_tokens: tuple[str, ...]
    unmatched: tuple[str, ...]
    entropy: float
    resolved_at: int

    def to_record(self) -> dict:
        return {
            "obs_id": self.obs_id,
            "slot": self.slot,
            "site": self.site,
            "feature_tokens": list(self.feature_tokens),
            "context_tokens": list(self.context_tokens),
            "unmatched": list(self.unmatched),
            "entropy": self.entropy,
            "resolved_at": self.resolved_at,
        }


@dataclass(frozen=True)
class Resolution:
    kind: Literal["master", "expert", "anomaly"]
    obs_id: str
    community_ids: tuple[str, ...] = ()
    patches: tuple[KnowledgePatch, ...] = ()
    anomaly: AnomalyRecord | None = None
    master_entropy: float = 0.0
    rule: str | None = None


_SCRIPT_DOC = {
    "type": "object",
    "properties": {
        "schema": {"const": SCRIPT_SCHEMA},
        "version": {"const": FORMAT_VERSION},
        "rules": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string"},
                    "tokens": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                    "patches": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                },
                "required": ["name", "tokens", "patches"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["schema", "version", "rules"],
    "additionalProperties": False,
}


def read_script(path: str | Path) -> ExpertScript:
    """Load an expert script; patch paths resolve relative to the script file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        jsonschema.validate(doc, _SCRIPT_DOC)
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: invalid JSON ({exc.msg})") from None
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise GraphError(f"{path}: schema violation at {where}: {exc.message}") from None
    rules = []
    for rec in doc["rules"]:
        patches = []
        for rel in rec["patches"]:
            patch = read_patch(path.parent / rel)
            if patch.removed_node_ids or patch.removed_edge_keys:
                raise GraphError(f"rule {rec['name']!r}: expert patches may only add knowledge")
            patches.append(patch)
        rules.append(ExpertRule(rec["name"], frozenset(rec["tokens"]), tuple(patches)))
    return ExpertScript(rules)


def make_patch(master: KnowledgeGraph, community_ids: Iterable[str], now: int,
               resident: set[str] | None = None) -> list[KnowledgePatch]:
    """Full snapshot of each community, one patch per community.

    Edges incident to a community node are included when the other endpoint
    is in the same community or in the context core.  ``resident`` names
    nodes known to be present on the receiving device; edges reaching those
    are included too, which tailors the patch to that device.
    """
    patches = []
    for cid in community_ids:
        if cid not in master.communities:
            raise GraphError(f"unknown community {cid!r}")
        members = master.communities[cid].nodes
        edges, context = [], set()
        for e in master.incident_edges(members):
            other = e.source if e.target in members else e.target
            if other in members:
                edges.append(e)
            elif master.community_of(other) == CORE:
                edges.append(e)
                context.add(other)
            elif resident is not None and other in resident:
                edges.append(e)
        nodes = [master.node(n) for n in sorted(members | context)]
        patches.append(KnowledgePatch(cid, nodes, edges, issued_at=now))
    return patches


class Cloud:
    """Master graph plus expert script and the append-only anomaly store."""

    def __init__(self, master: KnowledgeGraph, script: ExpertScript | None = None,
                 tau: float = DEFAULT_TAU, context_support: bool = False):
        self.master = master
        self.script = script or ExpertScript()
        self.tau = tau
        self.context_support = context_support
        self.anomalies: list[AnomalyRecord] = []

    def resolve(self, packet: InsightPacket, now: int) -> Resolution:
        res = resolve(self.master, packet, self.script, self.tau, now,
                      context_support=self.context_support)
        if res.anomaly is not None:
            self.anomalies.append(res.anomaly)
        return res


def resolve(master: KnowledgeGraph, packet: InsightPacket, script: ExpertScript,
            tau: float = DEFAULT_TAU, now: int = 0,
            context_support: bool = False) -> Resolution:
    activation = match_tokens(master, packet.feature_tokens, packet.context_tokens)
    record = ObservationRecord(packet.obs_id, packet.slot, packet.site,
                               packet.feature_tokens, packet.context_tokens)
    decision = evaluate(master, record, activation, tau, now, context_support, touch=False)
    if not decision.is_insight:
        cid = master.community_of(decision.predicted)
        return Resolution("master", packet.obs_id, (cid,), tuple(make_patch(master, [cid], now)),
                          master_entropy=decision.entropy)

    rule = script.match(packet)
    if rule is not None:
        # the master graph learns first; the device gets the affected communities
        for patch in rule.patches:
            integrate_patch(master, patch, now)
        cids = tuple(dict.fromkeys(p.community_id for p in rule.patches))
        return Resolution("expert", packet.obs_id, cids, rule.patches,
                          master_entropy=decision.entropy, rule=rule.name)

    anomaly = AnomalyRecord(
        obs_id=packet.obs_id,
        slot=packet.slot,
        site=packet.site,
        feature_tokens=packet.feature_tokens,
        context_tokens=packet.context_tokens,
        unmatched=tuple(t for t in packet.feature_tokens + packet.context_tokens
                        if master.lookup(t, NodeKind.ATTRIBUTE) is None
                        and master.lookup(t, NodeKind.CONTEXT) is None),
        entropy=packet.entropy,
        resolved_at=now,
    )
    return Resolution("anomaly", packet.obs_id, anomaly=anomaly,
                      master_entropy=decision.entropy)
