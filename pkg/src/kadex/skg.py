"""Typed structured knowledge graph partitioned into semantic communities.

The same type backs the edge-resident graph and the cloud master graph.
Entity and attribute nodes each belong to exactly one community; context
nodes live in the pinned ``core`` community.  Edges point from an attribute
or context node to an entity and are owned by the community of their target.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

import jsonschema

CORE = "core"
FORMAT_VERSION = 1
GRAPH_SCHEMA = "kadex-graph"
PATCH_SCHEMA = "kadex-patch"


class GraphError(ValueError):
    """Raised when a document or mutation would break a graph invariant."""


class NodeKind(str, Enum):
    ENTITY = "entity"
    ATTRIBUTE = "attribute"
    CONTEXT = "context"


class EdgeKind(str, Enum):
    SUPPORT = "support"
    CONFLICT = "conflict"


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    label: str


@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    kind: EdgeKind
    weight: float | None = None

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.source, self.target, self.kind.value)

    def to_record(self) -> dict:
        rec = {"from": self.source, "to": self.target, "kind": self.kind.value}
        if self.kind is EdgeKind.SUPPORT:
            rec["weight"] = self.weight
        return rec


@dataclass
class Community:
    id: str
    nodes: set[str] = field(default_factory=set)
    last_used: int = 0
    pinned: bool = False


@dataclass(frozen=True)
class InferenceSubgraph:
    nodes: frozenset[str]
    edges: tuple[Edge, ...]
    entities: frozenset[str]


@dataclass
class KnowledgePatch:
    community_id: str
    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    removed_node_ids: list[str] = field(default_factory=list)
    removed_edge_keys: list[tuple[str, str, str]] = field(default_factory=list)
    issued_at: int = 0


@dataclass
class IntegrationReport:
    community_id: str
    created: bool = False
    added_nodes: list[str] = field(default_factory=list)
    replaced_nodes: list[str] = field(default_factory=list)
    removed_nodes: list[str] = field(default_factory=list)
    added_edges: list[tuple[str, str, str]] = field(default_factory=list)
    replaced_edges: list[tuple[str, str, str]] = field(default_factory=list)
    removed_edges: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def changed(self) -> bool:
        return bool(
            self.created or self.added_nodes or self.replaced_nodes or self.removed_nodes
            or self.added_edges or self.replaced_edges or self.removed_edges
        )


def check_edge(edge: Edge, nodes: dict[str, Node]) -> None:
    """Validate one edge against the node table; raises GraphError."""
    name = "{} -> {} ({})".format(*edge.key)
    for end in (edge.source, edge.target):
        if end not in nodes:
            raise GraphError(f"dangling edge {name}: unknown node {end!r}")
    if nodes[edge.target].kind is not NodeKind.ENTITY:
        raise GraphError(f"edge {name}: target must be an entity node")
    src_kind = nodes[edge.source].kind
    if src_kind is NodeKind.ENTITY:
        raise GraphError(f"edge {name}: source must be an attribute or context node")
    if edge.kind is EdgeKind.SUPPORT:
        w = edge.weight
        if w is None or not math.isfinite(w) or w <= 0:
            raise GraphError(f"edge {name}: non-positive weight {w!r}")
    else:
        if edge.weight is not None:
            raise GraphError(f"edge {name}: conflict edges carry no weight")
        if src_kind is NodeKind.CONTEXT:
            raise GraphError(f"edge {name}: conflict edges must originate at an attribute")


class KnowledgeGraph:
    """Community-partitioned graph of entity, attribute and context nodes."""

    def __init__(self) -> None:
        self._nodes: dict[str, Node] = {}
        self._member: dict[str, str] = {}
        self._labels: dict[tuple[NodeKind, str], str] = {}
        self._edges: dict[tuple[str, str, str], Edge] = {}
        self._out: dict[str, set[tuple[str, str, str]]] = {}
        self._in: dict[str, set[tuple[str, str, str]]] = {}
        self.communities: dict[str, Community] = {CORE: Community(CORE, pinned=True)}

    # -- read access -------------------------------------------------

    @property
    def core(self) -> Community:
        return self.communities[CORE]

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def node(self, node_id: str) -> Node:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise GraphError(f"unknown node {node_id!r}") from None

    def nodes(self) -> list[Node]:
        return [self._nodes[k] for k in sorted(self._nodes)]

    def edges(self) -> list[Edge]:
        return [self._edges[k] for k in sorted(self._edges)]

    def node_ids(self, kind: NodeKind | None = None) -> set[str]:
        if kind is None:
            return set(self._nodes)
        return {k for k, n in self._nodes.items() if n.kind is kind}

    def entities(self) -> set[str]:
        return self.node_ids(NodeKind.ENTITY)

    def edge(self, key: tuple[str, str, str]) -> Edge | None:
        return self._edges.get(key)

    def community_of(self, node_id: str) -> str:
        self.node(node_id)
        return self._member[node_id]

    def lookup(self, label: str, kind: NodeKind) -> str | None:
        """Node id carrying ``label`` for the given kind, if any."""
        return self._labels.get((kind, label))

    def community_edges(self, community_id: str) -> list[Edge]:
        """Edges owned by a community (those whose target it holds)."""
        comm = self.communities[community_id]
        keys = set()
        for nid in comm.nodes:
            keys |= self._in.get(nid, set())
        return [self._edges[k] for k in sorted(keys)]

    def incident_edges(self, node_ids: Iterable[str]) -> list[Edge]:
        keys: set[tuple[str, str, str]] = set()
        for nid in node_ids:
            keys |= self._in.get(nid, set())
            keys |= self._out.get(nid, set())
        return [self._edges[k] for k in sorted(keys)]

    def neighbors(self, seed: Iterable[str]) -> set[str]:
        """All nodes adjacent to any seed through any edge kind, minus the seeds."""
        seed = set(seed)
        out: set[str] = set()
        for nid in seed:
            self.node(nid)
            out.update(k[1] for k in self._out.get(nid, ()))
            out.update(k[0] for k in self._in.get(nid, ()))
        return out - seed

    def subgraph(self, node_ids: Iterable[str]) -> InferenceSubgraph:
        ids = frozenset(node_ids)
        for nid in ids:
            self.node(nid)
        keys: set[tuple[str, str, str]] = set()
        for nid in ids:
            keys.update(k for k in self._out.get(nid, ()) if k[1] in ids)
        edges = tuple(self._edges[k] for k in sorted(keys))
        ents = frozenset(n for n in ids if self._nodes[n].kind is NodeKind.ENTITY)
        return InferenceSubgraph(ids, edges, ents)

    # -- mutation ----------------------------------------------------

    def add_community(self, community_id: str, pinned: bool = False) -> Community:
        if community_id in self.communities:
            raise GraphError(f"duplicate community {community_id!r}")
        comm = Community(community_id, pinned=pinned or community_id == CORE)
        self.communities[community_id] = comm
        return comm

    def add_node(self, node: Node, community_id: str) -> None:
        if node.id in self._nodes:
            raise GraphError(f"duplicate node id {node.id!r}")
        if node.kind is NodeKind.CONTEXT:
            if community_id != CORE:
                raise GraphError(f"context node {node.id!r} must live in the core community")
        elif community_id == CORE:
            raise GraphError(f"{node.kind.value} node {node.id!r} cannot live in the core community")
        if community_id not in self.communities:
            raise GraphError(f"node {node.id!r}: unknown community {community_id!r}")
        owner = self._labels.get((node.kind, node.label))
        if owner is not None:
            raise GraphError(
                f"node {node.id!r}: label {node.label!r} already used by {owner!r}")
        self._nodes[node.id] = node
        self._member[node.id] = community_id
        self._labels[(node.kind, node.label)] = node.id
        self.communities[community_id].nodes.add(node.id)

    def add_edge(self, edge: Edge) -> None:
        if edge.key in self._edges:
            raise GraphError("duplicate edge {} -> {} ({})".format(*edge.key))
        check_edge(edge, self._nodes)
        self._put_edge(edge)

    def _put_edge(self, edge: Edge) -> None:
        self._edges[edge.key] = edge
        self._out.setdefault(edge.source, set()).add(edge.key)
        self._in.setdefault(edge.target, set()).add(edge.key)

    def remove_edge(self, key: tuple[str, str, str]) -> bool:
        edge = self._edges.pop(key, None)
        if edge is None:
            return False
        self._out.get(edge.source, set()).discard(key)
        self._in.get(edge.target, set()).discard(key)
        return True

    def remove_node(self, node_id: str) -> list[tuple[str, str, str]]:
        """Remove a node and every incident edge; returns removed edge keys."""
        node = self.node(node_id)
        dropped = sorted(self._out.pop(node_id, set()) | self._in.pop(node_id, set()))
        for key in dropped:
            self.remove_edge(key)
        del self._nodes[node_id]
        del self._labels[(node.kind, node.label)]
        self.communities[self._member.pop(node_id)].nodes.discard(node_id)
        return dropped

    def remove_community(self, community_id: str) -> tuple[int, int]:
        """Drop a whole community with its incident edges; returns (nodes, edges) removed."""
        if community_id == CORE:
            raise GraphError("the core community cannot be removed")
        comm = self.communities[community_id]
        n_nodes, n_edges = len(comm.nodes), 0
        for nid in sorted(comm.nodes):
            n_edges += len(self.remove_node(nid))
        del self.communities[community_id]
        return n_nodes, n_edges

    def touch(self, community_id: str, now: int) -> None:
        try:
            comm = self.communities[community_id]
        except KeyError:
            raise GraphError(f"unknown community {community_id!r}") from None
        comm.last_used = max(comm.last_used, now)

    # -- whole-graph helpers -----------------------------------------

    def copy(self) -> "KnowledgeGraph":
        g = KnowledgeGraph.__new__(KnowledgeGraph)
        g._nodes = dict(self._nodes)
        g._member = dict(self._member)
        g._labels = dict(self._labels)
        g._edges = dict(self._edges)
        g._out = {k: set(v) for k, v in self._out.items()}
        g._in = {k: set(v) for k, v in self._in.items()}
        g.communities = {
            k: Community(c.id, set(c.nodes), c.last_used, c.pinned)
            for k, c in self.communities.items()
        }
        return g

    def _adopt(self, other: "KnowledgeGraph") -> None:
        self.__dict__.update(other.__dict__)

    def check_integrity(self) -> None:
        """Full scan of every invariant; raises GraphError on the first breach."""
        if not self.communities.get(CORE, Community(CORE)).pinned:
            raise GraphError("core community must be pinned")
        seen: set[str] = set()
        for comm in self.communities.values():
            for nid in comm.nodes:
                if nid in seen or self._member.get(nid) != comm.id:
                    raise GraphError(f"node {nid!r} breaks the community partition")
                seen.add(nid)
        if seen != set(self._nodes):
            raise GraphError("community membership does not cover every node")
        for edge in self._edges.values():
            check_edge(edge, self._nodes)

    def signature(self) -> dict:
        """Comparable structural view (ignores last_used)."""
        return {
            "communities": {k: (sorted(c.nodes), c.pinned) for k, c in self.communities.items()},
            "nodes": self._nodes,
            "edges": self._edges,
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self.signature() == other.signature()

    def __repr__(self) -> str:
        return (f"KnowledgeGraph(communities={len(self.communities)}, "
                f"nodes={len(self._nodes)}, edges={len(self._edges)})")

    # -- documents ---------------------------------------------------

    def to_document(self) -> dict:
        return {
            "schema": GRAPH_SCHEMA,
            "version": FORMAT_VERSION,
            "communities": [
                {"id": c.id, "pinned": c.pinned}
                for c in sorted(self.communities.values(), key=lambda c: c.id)
            ],
            "nodes": [
                {"id": n.id, "kind": n.kind.value, "label": n.label,
                 "community": self._member[n.id]}
                for n in self.nodes()
            ],
            "edges": [e.to_record() for e in self.edges()],
        }

    def dumps(self) -> str:
        return dump_document(self.to_document())


def dump_document(doc: dict) -> str:
    """Canonical text form shared by every structured document."""
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


_NODE = {
    "type": "object",
    "properties": {
        "id": {"type": "string", "minLength": 1},
        "kind": {"enum": [k.value for k in NodeKind]},
        "label": {"type": "string", "minLength": 1},
        "community": {"type": "string", "minLength": 1},
    },
    "required": ["id", "kind", "label"],
    "additionalProperties": False,
}
_EDGE = {
    "type": "object",
    "properties": {
        "from": {"type": "string"},
        "to": {"type": "string"},
        "kind": {"enum": [k.value for k in EdgeKind]},
        "weight": {"type": "number"},
    },
    "required": ["from", "to", "kind"],
    "additionalProperties": False,
}
_EDGE_KEY = {
    "type": "object",
    "properties": {
        "from": {"type": "string"},
        "to": {"type": "string"},
        "kind": {"enum": [k.value for k in EdgeKind]},
    },
    "required": ["from", "to", "kind"],
    "additionalProperties": False,
}
GRAPH_DOC_SCHEMA = {
    "type": "object",
    "properties": {
        "schema": {"const": GRAPH_SCHEMA},
        "version": {"const": FORMAT_VERSION},
        "communities": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"id": {"type": "string", "minLength": 1},
                               "pinned": {"type": "boolean"}},
                "required": ["id"],
                "additionalProperties": False,
            },
        },
        "nodes": {"type": "array", "items": _NODE},
        "edges": {"type": "array", "items": _EDGE},
    },
    "required": ["schema", "version", "communities", "nodes", "edges"],
    "additionalProperties": False,
}
PATCH_DOC_SCHEMA = {
    "type": "object",
    "properties": {
        "schema": {"const": PATCH_SCHEMA},
        "version": {"const": FORMAT_VERSION},
        "community_id": {"type": "string", "minLength": 1},
        "issued_at": {"type": "integer", "minimum": 0},
        "nodes": {"type": "array", "items": _NODE},
        "edges": {"type": "array", "items": _EDGE},
        "removed_nodes": {"type": "array", "items": {"type": "string"}},
        "removed_edges": {"type": "array", "items": _EDGE_KEY},
    },
    "required": ["schema", "version", "community_id", "issued_at", "nodes", "edges",
                 "removed_nodes", "removed_edges"],
    "additionalProperties": False,
}


def _validate(doc: object, schema: dict, what: str) -> None:
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise GraphError(f"{what} schema violation at {where}: {exc.message}") from None


def _edge_from_record(rec: dict) -> Edge:
    kind = EdgeKind(rec["kind"])
    weight = rec.get("weight")
    if weight is not None:
        weight = float(weight)
    return Edge(rec["from"], rec["to"], kind, weight)


def _parse(document: str | bytes | dict, what: str) -> dict:
    if isinstance(document, dict):
        return document
    try:
        return json.loads(document)
    except json.JSONDecodeError as exc:
        raise GraphError(f"{what} is not valid JSON: {exc}") from None


def load_graph(document: str | bytes | dict) -> KnowledgeGraph:
    """Parse and validate a graph document."""
    doc = _parse(document, "graph document")
    _validate(doc, GRAPH_DOC_SCHEMA, "graph")
    g = KnowledgeGraph()
    for rec in doc["communities"]:
        if rec["id"] == CORE:
            if rec.get("pinned") is False:
                raise GraphError("core community must be pinned")
            continue
        g.add_community(rec["id"], rec.get("pinned", False))
    for rec in doc["nodes"]:
        kind = NodeKind(rec["kind"])
        comm = rec.get("community", CORE if kind is NodeKind.CONTEXT else None)
        if comm is None:
            raise GraphError(f"node {rec['id']!r}: missing community")
        g.add_node(Node(rec["id"], kind, rec["label"]), comm)
    for rec in doc["edges"]:
        g.add_edge(_edge_from_record(rec))
    return g


def read_graph(path: str | Path) -> KnowledgeGraph:
    return load_graph(Path(path).read_text(encoding="utf-8"))


def write_graph(graph: KnowledgeGraph, path: str | Path) -> None:
    Path(path).write_text(graph.dumps(), encoding="utf-8")


def patch_to_document(patch: KnowledgePatch) -> dict:
    return {
        "schema": PATCH_SCHEMA,
        "version": FORMAT_VERSION,
        "community_id": patch.community_id,
        "issued_at": patch.issued_at,
        "nodes": [{"id": n.id, "kind": n.kind.value, "label": n.label} for n in patch.nodes],
        "edges": [e.to_record() for e in patch.edges],
        "removed_nodes": list(patch.removed_node_ids),
        "removed_edges": [{"from": k[0], "to": k[1], "kind": k[2]} for k in patch.removed_edge_keys],
    }


def load_patch(document: str | bytes | dict) -> KnowledgePatch:
    doc = _parse(document, "patch document")
    _validate(doc, PATCH_DOC_SCHEMA, "patch")
    nodes = []
    for rec in doc["nodes"]:
        if "community" in rec:
            raise GraphError(f"patch node {rec['id']!r}: community is implied by the patch")
        nodes.append(Node(rec["id"], NodeKind(rec["kind"]), rec["label"]))
    edges = [_edge_from_record(rec) for rec in doc["edges"]]
    for e in edges:
        if (e.kind is EdgeKind.SUPPORT) != (e.weight is not None):
            raise GraphError("patch edge {} -> {} ({}): weight required for support only"
                             .format(*e.key))
    return KnowledgePatch(
        community_id=doc["community_id"],
        nodes=nodes,
        edges=edges,
        removed_node_ids=list(doc["removed_nodes"]),
        removed_edge_keys=[(r["from"], r["to"], r["kind"]) for r in doc["removed_edges"]],
        issued_at=doc["issued_at"],
    )


def read_patch(path: str | Path) -> KnowledgePatch:
    return load_patch(Path(path).read_text(encoding="utf-8"))


def dump_patch(patch: KnowledgePatch) -> str:
    return dump_document(patch_to_document(patch))


# -- module-level operations ------------------------------------------


def neighbors(graph: KnowledgeGraph, seed: Iterable[str]) -> set[str]:
    return graph.neighbors(seed)


def induced_subgraph(graph: KnowledgeGraph, node_ids: Iterable[str]) -> InferenceSubgraph:
    return graph.subgraph(node_ids)


def _apply(g: KnowledgeGraph, patch: KnowledgePatch, report: IntegrationReport) -> None:
    cid = patch.community_id
    if cid not in g.communities:
        g.add_community(cid)
        report.created = True

    for key in patch.removed_edge_keys:
        key = tuple(key)
        if g.remove_edge(key):
            report.removed_edges.append(key)
    for nid in patch.removed_node_ids:
        if nid not in g:
            continue
        if g.community_of(nid) != cid and g.node(nid).kind is not NodeKind.CONTEXT:
            raise GraphError(f"patch for {cid!r} cannot remove node {nid!r} "
                             f"of community {g.community_of(nid)!r}")
        report.removed_edges.extend(g.remove_node(nid))
        report.removed_nodes.append(nid)

    for node in patch.nodes:
        home = CORE if node.kind is NodeKind.CONTEXT else cid
        if node.id in g:
            old = g.node(node.id)
            if g.community_of(node.id) != home:
                raise GraphError(f"patch node {node.id!r} belongs to community "
                                 f"{g.community_of(node.id)!r}, not {home!r}")
            if old == node:
                continue
            # Replace in place, keeping incident edges; re-validated below.
            kept = g.incident_edges([node.id])
            g.remove_node(node.id)
            g.add_node(node, home)
            for e in kept:
                g._put_edge(e)
            report.replaced_nodes.append(node.id)
        else:
            g.add_node(node, home)
            report.added_nodes.append(node.id)

    for edge in patch.edges:
        old = g.edge(edge.key)
        if old == edge:
            continue
        check_edge(edge, g._nodes)
        if old is not None:
            g.remove_edge(edge.key)
            report.replaced_edges.append(edge.key)
        else:
            report.added_edges.append(edge.key)
        g._put_edge(edge)

    g.check_integrity()


def integrate_patch(graph: KnowledgeGraph, patch: KnowledgePatch, now: int) -> IntegrationReport:
    """Apply a community patch atomically; the graph is untouched on failure."""
    trial = graph.copy()
    report = IntegrationReport(patch.community_id)
    _apply(trial, patch, report)
    trial.touch(patch.community_id, now)
    graph._adopt(trial)
    return report
