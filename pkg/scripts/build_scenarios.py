"""Regenerate the bundled scenarios under src/kadex/scenarios.

Every file is written in its canonical form, so loading and re-dumping any of
them reproduces the same bytes.  Run from the repository root:

    python3 scripts/build_scenarios.py
"""

from __future__ import annotations

from pathlib import Path

from kadex import power as pw
from kadex.perception import ObservationRecord, dump_stream
from kadex.skg import (
    CORE, FORMAT_VERSION, Edge, EdgeKind, KnowledgeGraph, KnowledgePatch, Node, NodeKind,
    dump_document, dump_patch, write_graph,
)

ROOT = Path(__file__).resolve().parents[1] / "src" / "kadex" / "scenarios"
FRAME_BYTES = 1_500_000
S, C = EdgeKind.SUPPORT, EdgeKind.CONFLICT


def graph(communities: dict[str, list[tuple[str, NodeKind]]], context: list[str],
          edges: list[tuple[str, str, EdgeKind, float | None]]) -> KnowledgeGraph:
    g = KnowledgeGraph()
    for ctx in context:
        g.add_node(Node(ctx, NodeKind.CONTEXT, ctx), CORE)
    for cid, members in communities.items():
        g.add_community(cid)
        for nid, kind in members:
            g.add_node(Node(nid, kind, nid), cid)
    for src, tgt, kind, w in edges:
        if src in g and tgt in g:
            g.add_edge(Edge(src, tgt, kind, w))
    return g


def frame(obs_id, slot, feats, truth=None, ctx=(), site="weir-1"):
    return ObservationRecord(obs_id, slot, site, tuple(feats), tuple(ctx), truth, FRAME_BYTES)


def scenario_doc(name: str, **fields) -> dict:
    return {"schema": "kadex-scenario", "version": FORMAT_VERSION, "name": name, **fields}


def write(name: str, doc: dict, edge: KnowledgeGraph, master: KnowledgeGraph,
          stream: list[ObservationRecord], extra: dict[str, str] | None = None) -> None:
    d = ROOT / name
    d.mkdir(parents=True, exist_ok=True)
    write_graph(edge, d / "graph.json")
    write_graph(master, d / "master.json")
    (d / "stream.jsonl").write_text(dump_stream(stream), encoding="utf-8")
    for rel, text in (extra or {}).items():
        (d / rel).parent.mkdir(parents=True, exist_ok=True)
        (d / rel).write_text(text, encoding="utf-8")
    (d / "scenario.json").write_text(dump_document(doc), encoding="utf-8")


# -- salmon graph shared by three scenarios -------------------------------

SALMON = {
    "chinook": [("chinook", NodeKind.ENTITY), ("spots_back", NodeKind.ATTRIBUTE)],
    "sockeye": [("sockeye", NodeKind.ENTITY), ("hooked_jaw", NodeKind.ATTRIBUTE),
                ("silver_body", NodeKind.ATTRIBUTE)],
}
SALMON_CTX = ["river_mouth", "night"]
SALMON_EDGES = [
    ("spots_back", "chinook", S, 1.0),
    ("silver_body", "chinook", S, 0.5),
    ("silver_body", "sockeye", S, 0.5),
    ("hooked_jaw", "sockeye", S, 1.5),
    ("hooked_jaw", "chinook", S, 0.5),
    ("river_mouth", "chinook", S, 0.2),
    ("river_mouth", "sockeye", S, 0.2),
]
CHINOOK = ("spots_back", "silver_body")
SOCKEYE = ("silver_body", "hooked_jaw")
CONFUSER = ("spots_back", "silver_body", "hooked_jaw")   # spawning chinook with a hooked jaw
GLITTER = ("glitter_scales",)


def salmon_graph() -> KnowledgeGraph:
    return graph(SALMON, SALMON_CTX, SALMON_EDGES)


def build_demo_salmon() -> None:
    g = salmon_graph()
    patch = KnowledgePatch("sockeye", [], [Edge("spots_back", "sockeye", C)])
    script = {
        "schema": "kadex-expert-script",
        "version": FORMAT_VERSION,
        "rules": [{"name": "sockeye-have-no-back-spots",
                   "tokens": ["hooked_jaw", "spots_back"],
                   "patches": ["patches/sockeye-no-spots.json"]}],
    }
    cycle = [(CHINOOK, "chinook"), (SOCKEYE, "sockeye"), (CONFUSER, "chinook")]
    stream = []
    for i in range(60):
        feats, truth = cycle[i % 3]
        ctx = ("river_mouth",) if i % 2 else ("river_mouth", "night")
        stream.append(frame(f"s{i:03d}", i, feats, truth, ctx))
    stream.append(frame("s060", 60, GLITTER, None, ("river_mouth",)))
    for i in range(61, 90):
        feats, truth = cycle[i % 3]
        stream.append(frame(f"s{i:03d}", i, feats, truth, ("river_mouth",)))

    trace = pw.generate_trace(pw.TraceGenerator(days=1, peak=20.0))
    doc = scenario_doc(
        "demo-salmon",
        graph="graph.json", master="master.json", stream="stream.jsonl",
        trace={"file": "trace.txt"},
        power={"capacity_wh": 500.0, "b_safe_pct": 30.0, "initial_soc_pct": 80.0,
               "base_load_wh": 1.0, "e_pkt_wh": 2.0},
        policy="adaptive",
        tau_trigger=0.6,
        capacity={"cap": 64, "metric": "nodes"},
        expert_script="expert.json",
        expert_delay_slots=4,
        horizon=96, seed=7,
    )
    write("demo-salmon", doc, g, g, stream, {
        "trace.txt": pw.dump_trace(trace),
        "expert.json": dump_document(script),
        "patches/sockeye-no-spots.json": dump_patch(patch),
    })


def build_overcast_lolp() -> None:
    # no expert script: ambiguous frames stay ambiguous and keep the uplink busy
    g = salmon_graph()
    stream = []
    per_day = 96
    for t in range(14 * per_day):
        day = t // per_day
        overcast = 5 <= day < 9
        if t % 2 and not overcast:
            continue
        i = len(stream)
        if overcast:
            feats, truth = (CONFUSER, "chinook") if i % 5 else (CHINOOK, "chinook")
        else:
            feats, truth = [(CHINOOK, "chinook"), (SOCKEYE, "sockeye"),
                            (CONFUSER, "chinook")][i % 3]
        stream.append(frame(f"o{t:04d}", t, feats, truth, ("river_mouth",)))
    doc = scenario_doc(
        "overcast-lolp",
        graph="graph.json", master="master.json", stream="stream.jsonl",
        trace={"generator": {"days": 14, "peak_wh": 100.0, "sunrise_hour": 6.0,
                             "sunset_hour": 20.0,
                             "overcast": [{"start_day": 5, "days": 4, "factor": 0.05}],
                             "jitter": 0.0, "seed": 0}},
        power={"capacity_wh": 2000.0, "b_safe_pct": 50.0, "critical_pct": 30.0,
               "base_load_wh": 2.0, "e_pkt_wh": 6.0},
        policy="adaptive",
        fixed_window={"start_slot_of_day": 48, "window_slots": 8},
        tau_trigger=0.6,
        capacity={"cap": 64, "metric": "nodes"},
        horizon=14 * per_day, seed=11,
    )
    write("overcast-lolp", doc, g, g, stream)


def build_always_on() -> None:
    g = salmon_graph()
    stream = []
    for t in range(0, 3 * 96, 4):
        i = len(stream)
        feats, truth = [(CHINOOK, "chinook"), (SOCKEYE, "sockeye"), (CONFUSER, "chinook")][i % 3]
        stream.append(frame(f"a{t:04d}", t, feats, truth, ("river_mouth",)))
    doc = scenario_doc(
        "always-on",
        graph="graph.json", master="master.json", stream="stream.jsonl",
        # peak * factor stays below the link load in every slot
        trace={"generator": {"days": 3, "peak_wh": 100.0,
                             "overcast": [{"start_day": 0, "days": 3, "factor": 0.1}]}},
        power={"capacity_wh": 5000.0, "b_safe_pct": 30.0, "critical_pct": 30.0,
               "base_load_wh": 2.0, "e_pkt_wh": 6.0, "link_load_wh": 15.0},
        policy="always_on",
        capacity={"cap": 64, "metric": "nodes"},
        horizon=3 * 96, seed=3,
    )
    write("always-on", doc, g, g, stream)


# -- eviction / re-fetch ----------------------------------------------------

SPECIES = {
    "brown_bear": ("hump_shoulder", "dish_face"),
    "black_bear": ("straight_profile", "tall_ears"),
    "wolf": ("long_legs", "narrow_muzzle"),
    "lynx": ("ear_tufts", "short_tail"),
    "wolverine": ("side_stripe", "bushy_tail"),
}


def build_eviction_refetch() -> None:
    def species_graph(names):
        comms = {n: [(n, NodeKind.ENTITY)] + [(a, NodeKind.ATTRIBUTE) for a in SPECIES[n]]
                 for n in names}
        edges = [(a, n, S, 1.0) for n in names for a in SPECIES[n]]
        edges += [("forest_edge", n, S, 0.1) for n in names]
        return graph(comms, ["forest_edge", "dawn"], edges)

    master = species_graph(list(SPECIES))
    edge = species_graph(["brown_bear", "black_bear", "wolf"])
    order = ["brown_bear", "black_bear", "wolf", "lynx", "brown_bear", "brown_bear",
             "wolverine", "black_bear", "black_bear", "wolf", "lynx", "wolverine"]
    stream = []
    t = 0
    for _ in range(4):
        for sp in order:
            stream.append(frame(f"e{t:03d}", t, SPECIES[sp], sp, ("dawn",),
                                site="trail-3"))
            t += 2
    doc = scenario_doc(
        "eviction-refetch",
        graph="graph.json", master="master.json", stream="stream.jsonl",
        trace={"generator": {"days": 1, "peak_wh": 30.0}},
        power={"capacity_wh": 500.0, "b_safe_pct": 30.0, "initial_soc_pct": 90.0,
               "base_load_wh": 1.0, "e_pkt_wh": 2.0},
        policy="adaptive",
        tau_trigger=0.6,
        # two context nodes plus three species of three nodes each
        capacity={"cap": 11, "metric": "nodes"},
        horizon=96, seed=5,
    )
    write("eviction-refetch", doc, edge, master, stream)


if __name__ == "__main__":
    build_demo_salmon()
    build_overcast_lolp()
    build_always_on()
    build_eviction_refetch()
    print(f"wrote scenarios under {ROOT}")
