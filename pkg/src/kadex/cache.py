"""Community-level LRU eviction for the edge knowledge graph.

Whole communities are evicted, oldest ``last_used`` first, so an inference
neighbourhood is either fully present or absent.  Pinned communities (the
context core) are never evicted.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .skg import KnowledgeGraph


class CapacityMetric(str, Enum):
    NODE_COUNT = "nodes"
    EDGE_COUNT = "edges"
    BYTES = "bytes"


class CapacityError(RuntimeError):
    pass


@dataclass(frozen=True)
class CapacityConfig:
    cap: int
    metric: CapacityMetric = CapacityMetric.NODE_COUNT

    def __post_init__(self):
        if self.cap <= 0:
            raise ValueError(f"cap must be positive, got {self.cap}")
        object.__setattr__(self, "metric", CapacityMetric(self.metric))


@dataclass(frozen=True)
class Evicted:
    community_id: str
    last_used: int
    size: int


@dataclass
class EvictionReport:
    evicted: list[Evicted] = field(default_factory=list)
    size_before: int = 0
    size_after: int = 0


def touch(graph: KnowledgeGraph, community_id: str, now: int) -> None:
    graph.touch(community_id, now)


def usage(graph: KnowledgeGraph, metric: CapacityMetric | str = CapacityMetric.NODE_COUNT) -> int:
    metric = CapacityMetric(metric)
    if metric is CapacityMetric.NODE_COUNT:
        return sum(len(c.nodes) for c in graph.communities.values())
    if metric is CapacityMetric.EDGE_COUNT:
        return len(graph.edges())
    return len(graph.dumps().encode("utf-8"))


def _pinned_only(graph: KnowledgeGraph) -> KnowledgeGraph:
    g = graph.copy()
    for cid in [c for c, comm in g.communities.items() if not comm.pinned]:
        g.remove_community(cid)
    return g


def pinned_usage(graph: KnowledgeGraph, metric: CapacityMetric | str) -> int:
    return usage(_pinned_only(graph), metric)


def enforce_eviction(graph: KnowledgeGraph, config: CapacityConfig,
                     protect: Iterable[str] = ()) -> EvictionReport:
    """Evict least-recently-used communities until usage fits under the cap.

    Ties on ``last_used`` go to the lexicographically smaller id.  Communities
    in ``protect`` (typically the ones just delivered) are evicted only after
    every other candidate.  Raises CapacityError, leaving the graph untouched,
    when even the pinned communities alone exceed the cap.
    """
    before = usage(graph, config.metric)
    report = EvictionReport(size_before=before, size_after=before)
    if before <= config.cap:
        return report
    if pinned_usage(graph, config.metric) > config.cap:
        raise CapacityError(
            f"capacity infeasible: pinned communities exceed cap {config.cap} "
            f"({config.metric.value})")

    protect = set(protect)
    order = sorted((c for c in graph.communities.values() if not c.pinned),
                   key=lambda c: (c.id in protect, c.last_used, c.id))
    size = before
    for comm in order:
        if size <= config.cap:
            break
        graph.remove_community(comm.id)
        new_size = usage(graph, config.metric)
        report.evicted.append(Evicted(comm.id, comm.last_used, size - new_size))
        size = new_size
    report.size_after = size
    return report
