from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kadex.skg import CORE, Edge, EdgeKind, KnowledgeGraph, Node, NodeKind  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def build_graph(communities, context=(), edges=()):
    """communities: {cid: [(node_id, kind), ...]}; edges: (src, tgt, kind, weight)."""
    g = KnowledgeGraph()
    for ctx in context:
        g.add_node(Node(ctx, NodeKind.CONTEXT, ctx), CORE)
    for cid, members in communities.items():
        g.add_community(cid)
        for nid, kind in members:
            g.add_node(Node(nid, NodeKind(kind), nid), cid)
    for src, tgt, kind, w in edges:
        g.add_edge(Edge(src, tgt, EdgeKind(kind), w))
    return g


def random_graph(rng: np.random.Generator, max_ent=6, max_attr=10, max_edges=25, max_ctx=2,
                 max_comms=3):
    """Random valid graph; returns (graph, entities, attributes, contexts, edge tuples)."""
    n_ent = int(rng.integers(1, max_ent + 1))
    n_attr = int(rng.integers(0, max_attr + 1))
    n_ctx = int(rng.integers(0, max_ctx + 1))
    n_comm = int(rng.integers(1, max_comms + 1))
    ents = [f"e{i}" for i in range(n_ent)]
    attrs = [f"a{i}" for i in range(n_attr)]
    ctxs = [f"c{i}" for i in range(n_ctx)]
    comms: dict[str, list] = {f"k{i}": [] for i in range(n_comm)}
    for nid, kind in [(e, "entity") for e in ents] + [(a, "attribute") for a in attrs]:
        comms[f"k{int(rng.integers(n_comm))}"].append((nid, kind))
    sources = attrs + ctxs
    edges, keys = [], set()
    if sources:
        for _ in range(int(rng.integers(0, max_edges + 1))):
            src = sources[int(rng.integers(len(sources)))]
            tgt = ents[int(rng.integers(n_ent))]
            kind = "conflict" if src in attrs and rng.random() < 0.25 else "support"
            if (src, tgt, kind) in keys:
                continue
            keys.add((src, tgt, kind))
            w = None if kind == "conflict" else round(float(rng.uniform(0.05, 3.0)), 6)
            edges.append((src, tgt, kind, w))
    g = build_graph(comms, ctxs, edges)
    return g, ents, attrs, ctxs, edges


SALMON_COMMUNITIES = {
    "chinook": [("chinook", "entity"), ("spots_back", "attribute")],
    "sockeye": [("sockeye", "entity"), ("hooked_jaw", "attribute"),
                ("silver_body", "attribute")],
}
SALMON_EDGES = [
    ("spots_back", "chinook", "support", 1.0),
    ("silver_body", "chinook", "support", 0.5),
    ("silver_body", "sockeye", "support", 0.5),
    ("hooked_jaw", "sockeye", "support", 1.5),
    ("hooked_jaw", "chinook", "support", 0.5),
    ("river_mouth", "chinook", "support", 0.2),
    ("river_mouth", "sockeye", "support", 0.2),
]


def salmon_graph():
    return build_graph(SALMON_COMMUNITIES, ["river_mouth", "night"], SALMON_EDGES)


@pytest.fixture
def salmon():
    return salmon_graph()
