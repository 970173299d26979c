"""On-site insight trigger.

Builds the activation-induced inference subgraph, scores candidate entities
(hard conflict exclusion, summed support weights), turns the scores into a
softmax distribution over the valid entities and gates each frame on the
Shannon entropy of that distribution.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Literal

from .perception import Activation, ObservationRecord
from .skg import EdgeKind, InferenceSubgraph, KnowledgeGraph

PACKET_SCHEMA = "kadex-packet"
PACKET_VERSION = 1
DEFAULT_TAU = 0.6


@dataclass(frozen=True)
class SupportScores:
    scores: dict[str, float]
    excluded: frozenset[str] = frozenset()
    # entity -> activated attributes whose conflict edges excluded it
    conflicts: dict[str, tuple[str, ...]] = field(default_factory=dict)


@dataclass(frozen=True)
class EntityDistribution:
    valid: tuple[str, ...]
    probs: dict[str, float]

    def prob(self, entity: str) -> float:
        return self.probs.get(entity, 0.0)


@dataclass(frozen=True)
class InsightPacket:
    obs_id: str
    slot: int
    site: str
    entropy: float
    feature_tokens: tuple[str, ...]
    context_tokens: tuple[str, ...]
    a_feat: tuple[str, ...]
    a_ctx: tuple[str, ...]
    unmatched: tuple[str, ...]
    scores: dict[str, float]
    excluded: tuple[str, ...]

    def body(self) -> dict:
        return {
            "schema": PACKET_SCHEMA,
            "version": PACKET_VERSION,
            "obs_id": self.obs_id,
            "slot": self.slot,
            "site": self.site,
            "entropy": self.entropy,
            "feature_tokens": list(self.feature_tokens),
            "context_tokens": list(self.context_tokens),
            "a_feat": list(self.a_feat),
            "a_ctx": list(self.a_ctx),
            "unmatched": list(self.unmatched),
            "scores": dict(sorted(self.scores.items())),
            "excluded": list(self.excluded),
        }

    def serialize(self) -> bytes:
        return json.dumps(self.body(), separators=(",", ":")).encode("utf-8")

    @property
    def size_bytes(self) -> int:
        return len(self.serialize())

    @property
    def tokens(self) -> frozenset[str]:
        return frozenset(self.feature_tokens) | frozenset(self.context_tokens)


@dataclass(frozen=True)
class TriggerDecision:
    kind: Literal["routine", "insight"]
    entropy: float
    predicted: str | None
    packet: InsightPacket | None
    candidates: tuple[str, ...]
    scores: SupportScores
    distribution: EntityDistribution

    @property
    def is_insight(self) -> bool:
        return self.kind == "insight"


def candidate_entities(graph: KnowledgeGraph, activation: Activation) -> set[str]:
    return graph.neighbors(activation.nodes) & graph.entities()


def support_scores(subgraph: InferenceSubgraph, activation: Activation,
                   context_support: bool = False) -> SupportScores:
    """Per-candidate support with hard conflict exclusion.

    Only activated attributes contribute weight unless ``context_support`` is
    set, in which case activated context nodes add their support too.
    """
    sources = set(activation.a_feat)
    if context_support:
        sources |= activation.a_ctx
    totals = {e: 0.0 for e in subgraph.entities}
    conflicts: dict[str, list[str]] = {}
    for edge in subgraph.edges:
        if edge.target not in totals:
            continue
        if edge.kind is EdgeKind.CONFLICT:
            if edge.source in activation.a_feat:
                conflicts.setdefault(edge.target, []).append(edge.source)
        elif edge.source in sources:
            totals[edge.target] += edge.weight
    for e in conflicts:
        totals[e] = 0.0
    return SupportScores(
        scores=totals,
        excluded=frozenset(conflicts),
        conflicts={e: tuple(sorted(a)) for e, a in sorted(conflicts.items())},
    )


def entity_distribution(scores: SupportScores) -> EntityDistribution:
    valid = tuple(sorted(e for e, s in scores.scores.items()
                         if s > 0 and e not in scores.excluded))
    probs = {e: 0.0 for e in scores.scores}
    if valid:
        # shift by the max score; softmax is invariant to it and exp cannot overflow
        top = max(scores.scores[e] for e in valid)
        exps = [math.exp(scores.scores[e] - top) for e in valid]
        total = math.fsum(exps)
        for e, x in zip(valid, exps):
            probs[e] = x / total
    return EntityDistribution(valid, probs)


def structural_entropy(dist: EntityDistribution, h_max: float = math.inf) -> float:
    """Shannon entropy in nats; ``h_max`` is returned when nothing is valid."""
    if not dist.valid:
        return h_max
    h = -math.fsum(p * math.log(p) for p in (dist.probs[e] for e in dist.valid) if p > 0)
    return h if h > 0 else 0.0


def max_entropy(graph: KnowledgeGraph) -> float:
    """Sentinel entropy for an empty valid set; exceeds any attainable value."""
    return math.log(max(len(graph.entities()), 1)) + 1.0


def argmax_entity(dist: EntityDistribution) -> str | None:
    if not dist.valid:
        return None
    # lexicographic tie-break: dist.valid is sorted and max keeps the first maximum
    return max(dist.valid, key=lambda e: dist.probs[e])


def evaluate(graph: KnowledgeGraph, record: ObservationRecord, activation: Activation,
             tau: float = DEFAULT_TAU, now: int = 0,
             context_support: bool = False, touch: bool = True) -> TriggerDecision:
    """Interpret one frame against the graph and decide routine vs insight.

    Unless ``touch`` is false, every community holding a node of the
    inference subgraph is touched at ``now``.
    """
    cands = candidate_entities(graph, activation)
    sub = graph.subgraph(activation.nodes | cands)
    scores = support_scores(sub, activation, context_support)
    dist = entity_distribution(scores)
    h = structural_entropy(dist, max_entropy(graph))

    if touch:
        for cid in sorted({graph.community_of(n) for n in sub.nodes}):
            graph.touch(cid, now)

    if dist.valid and h <= tau:
        return TriggerDecision("routine", h, argmax_entity(dist), None,
                               tuple(sorted(cands)), scores, dist)

    unmatched = set(activation.unmatched)
    packet = InsightPacket(
        obs_id=record.obs_id,
        slot=record.slot,
        site=record.site,
        entropy=h,
        # dropped attributes never reached the device's evidence summary
        feature_tokens=tuple(t for t in record.feature_tokens if t not in activation.dropped),
        context_tokens=tuple(record.context_tokens),
        a_feat=tuple(sorted(activation.a_feat)),
        a_ctx=tuple(sorted(activation.a_ctx)),
        unmatched=tuple(t for t in record.feature_tokens + record.context_tokens
                        if t in unmatched),
        scores=dict(sorted(scores.scores.items())),
        excluded=tuple(sorted(scores.excluded)),
    )
    return TriggerDecision("insight", h, None, packet, tuple(sorted(cands)), scores, dist)


def decision_trace(graph: KnowledgeGraph, decision: TriggerDecision,
                   activation: Activation) -> dict:
    """Evidence path for one frame, suitable for the event log."""
    label = lambda n: graph.node(n).label if n in graph else n  # noqa: E731
    return {
        "a_feat": sorted(activation.a_feat),
        "a_ctx": sorted(activation.a_ctx),
        "unmatched": list(activation.unmatched),
        "dropped": list(activation.dropped),
        "candidates": list(decision.candidates),
        "scores": dict(sorted(decision.scores.scores.items())),
        "conflicts": {e: [label(a) for a in src] for e, src in decision.scores.conflicts.items()},
        "valid": list(decision.distribution.valid),
        "probs": {e: decision.distribution.probs[e] for e in decision.distribution.valid},
        "entropy": decision.entropy,
        "decision": decision.kind,
        "predicted": decision.predicted,
    }

