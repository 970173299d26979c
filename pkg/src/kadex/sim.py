"""Discrete-slot lifecycle engine: trigger, uplink scheduling, patching, eviction.

Each slot runs, in order: capture the slot's frame, charge the battery with the
slot's harvest minus the base load, interpret the frame (routine prediction or
queued insight), run the uplink policy and let the cloud resolve delivered
packets, integrate patches that are due (only in a slot with uplink contact)
and enforce the storage cap, then record the slot.  The loop is sequential and
seeded, so a scenario always produces the same bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import power as pw
from .cache import CapacityConfig, CapacityMetric, enforce_eviction, pinned_usage, usage
from .cloud import DEFAULT_EXPERT_DELAY, Cloud, ExpertScript, make_patch, read_script
from .perception import ObservationRecord, activate, ingest_stream
from .scheduler import (
    DEFAULT_QUEUE_CAP, UPLINK_MBPS, Adaptive, AlwaysOn, FixedWindow, InsightQueue,
    UplinkPolicy, transmit,
)
from .skg import FORMAT_VERSION, GraphError, KnowledgeGraph, integrate_patch, read_graph
from .trigger import DEFAULT_TAU, decision_trace, evaluate

SCENARIO_SCHEMA = "kadex-scenario"
SLOT_COLUMNS = (
    "slot", "soc", "budget", "H", "decision", "k", "queue_len", "usage", "evictions",
    "harvest", "energy_spent", "contact", "patches_applied", "generated", "uploaded", "dropped",
)


class ScenarioError(ValueError):
    pass


_POWER = {
    "type": "object",
    "properties": {
        "capacity_wh": {"type": "number", "exclusiveMinimum": 0},
        "b_safe_wh": {"type": "number", "minimum": 0},
        "b_safe_pct": {"type": "number", "minimum": 0, "maximum": 100},
        "critical_wh": {"type": "number", "minimum": 0},
        "critical_pct": {"type": "number", "minimum": 0, "maximum": 100},
        "initial_soc_wh": {"type": "number", "minimum": 0},
        "initial_soc_pct": {"type": "number", "minimum": 0, "maximum": 100},
        "base_load_wh": {"type": "number", "minimum": 0},
        "e_pkt_wh": {"type": "number", "exclusiveMinimum": 0},
        "link_load_wh": {"type": "number", "minimum": 0},
    },
    "required": ["capacity_wh", "base_load_wh", "e_pkt_wh"],
    "oneOf": [{"required": ["b_safe_wh"]}, {"required": ["b_safe_pct"]}],
    "additionalProperties": False,
}
_GENERATOR = {
    "type": "object",
    "properties": {
        "days": {"type": "integer", "minimum": 1},
        "peak_wh": {"type": "number", "minimum": 0},
        "sunrise_hour": {"type": "number"},
        "sunset_hour": {"type": "number"},
        "overcast": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"start_day": {"type": "number"}, "days": {"type": "number"},
                               "factor": {"type": "number", "minimum": 0}},
                "required": ["start_day", "days", "factor"],
                "additionalProperties": False,
            },
        },
        "jitter": {"type": "number", "minimum": 0},
        "seed": {"type": "integer"},
    },
    "required": ["days", "peak_wh"],
    "additionalProperties": False,
}
SCENARIO_DOC_SCHEMA = {
    "type": "object",
    "properties": {
        "schema": {"const": SCENARIO_SCHEMA},
        "version": {"const": FORMAT_VERSION},
        "name": {"type": "string", "minLength": 1},
        "graph": {"type": "string"},
        "master": {"type": "string"},
        "stream": {"type": "string"},
        "trace": {
            "type": "object",
            "properties": {"file": {"type": "string"}, "generator": _GENERATOR},
            "oneOf": [{"required": ["file"]}, {"required": ["generator"]}],
            "additionalProperties": False,
        },
        "power": _POWER,
        "policy": {"enum": ["adaptive", "fixed_window", "always_on"]},
        "fixed_window": {
            "type": "object",
            "properties": {"start_slot_of_day": {"type": "integer", "minimum": 0},
                           "window_slots": {"type": "integer", "minimum": 1}},
            "required": ["start_slot_of_day", "window_slots"],
            "additionalProperties": False,
        },
        "tau_trigger": {"type": "number", "minimum": 0},
        "context_support": {"type": "boolean"},
        "capacity": {
            "type": "object",
            "properties": {"cap": {"type": "integer", "minimum": 1},
                           "metric": {"enum": [m.value for m in CapacityMetric]}},
            "required": ["cap"],
            "additionalProperties": False,
        },
        "expert_script": {"type": "string"},
        "expert_delay_slots": {"type": "integer", "minimum": 0},
        "horizon": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "slot_minutes": {"type": "integer", "minimum": 1},
        "p_drop": {"type": "number", "minimum": 0, "maximum": 1},
        "queue_max_len": {"type": "integer", "minimum": 1},
    },
    "required": ["schema", "version", "name", "graph", "master", "stream", "trace", "power",
                 "policy", "capacity", "horizon", "seed"],
    "additionalProperties": False,
}


@dataclass(frozen=True)
class Scenario:
    name: str
    graph: KnowledgeGraph
    master: KnowledgeGraph
    stream: tuple[ObservationRecord, ...]
    trace: pw.EnergyTrace
    power: pw.PowerConfig
    policy: UplinkPolicy
    capacity: CapacityConfig
    horizon: int
    seed: int = 0
    tau: float = DEFAULT_TAU
    context_support: bool = False
    script: ExpertScript = field(default_factory=ExpertScript)
    expert_delay: int = DEFAULT_EXPERT_DELAY
    p_drop: float = 0.0
    queue_max_len: int = DEFAULT_QUEUE_CAP
    fixed_window: FixedWindow = FixedWindow(48, 8)
    stream_sha256: str = ""
    trace_sha256: str = ""

    def with_policy(self, policy: UplinkPolicy | str) -> "Scenario":
        if isinstance(policy, str):
            policy = policy_by_name(policy, self.fixed_window)
        return dataclasses.replace(self, policy=policy)

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, seed=seed)

    @property
    def slots_per_day(self) -> int:
        return self.trace.slots_per_day


def policy_by_name(name: str, window: FixedWindow) -> UplinkPolicy:
    name = name.replace("-", "_")
    if name == "adaptive":
        return Adaptive()
    if name in ("fixed_window", "fixed"):
        return window
    if name == "always_on":
        return AlwaysOn()
    raise ScenarioError(f"unknown policy {name!r}")


def bundled_scenarios() -> list[str]:
    root = resources.files("kadex") / "scenarios"
    return sorted(p.name for p in root.iterdir()
                  if p.is_dir() and (p / "scenario.json").is_file())


def scenario_path(name_or_path: str | Path) -> Path:
    """A filesystem path, or the scenario.json of a bundled scenario name."""
    p = Path(name_or_path)
    if p.is_dir():
        p = p / "scenario.json"
    if p.is_file():
        return p
    bundled = resources.files("kadex") / "scenarios" / str(name_or_path) / "scenario.json"
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"no scenario file or bundled scenario named {str(name_or_path)!r}")


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _resolve(base: Path, rel: str) -> Path:
    p = base / rel
    if not p.is_file():
        raise FileNotFoundError(f"referenced file not found: {p}")
    return p


def _energy(cfg: dict, key: str, capacity: float) -> float | None:
    if f"{key}_wh" in cfg:
        return float(cfg[f"{key}_wh"])
    if f"{key}_pct" in cfg:
        return capacity * float(cfg[f"{key}_pct"]) / 100.0
    return None


def load_scenario(name_or_path: str | Path) -> Scenario:
    path = scenario_path(name_or_path)
    base = path.parent
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc.msg})") from None
    try:
        jsonschema.validate(doc, SCENARIO_DOC_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"{path}: schema violation at {where}: {exc.message}") from None

    graph = read_graph(_resolve(base, doc["graph"]))
    master = read_graph(_resolve(base, doc["master"]))
    stream_file = _resolve(base, doc["stream"])
    stream = tuple(ingest_stream(stream_file))

    slot_minutes = doc.get("slot_minutes", pw.DEFAULT_SLOT_MINUTES)
    tr = doc["trace"]
    if "file" in tr:
        trace = pw.read_trace(_resolve(base, tr["file"]))
    else:
        g = tr["generator"]
        trace = pw.generate_trace(pw.TraceGenerator(
            days=g["days"],
            peak=g["peak_wh"],
            slot_minutes=slot_minutes,
            sunrise_hour=g.get("sunrise_hour", 6.0),
            sunset_hour=g.get("sunset_hour", 20.0),
            overcast=tuple(pw.Overcast(o["start_day"], o["days"], o["factor"])
                           for o in g.get("overcast", ())),
            jitter=g.get("jitter", 0.0),
            seed=g.get("seed", 0),
        ))
    if trace.slot_minutes != slot_minutes:
        raise ScenarioError(f"trace slot length {trace.slot_minutes} min differs from "
                            f"scenario slot length {slot_minutes} min")

    pc = doc["power"]
    cap_wh = float(pc["capacity_wh"])
    try:
        power = pw.PowerConfig(
            capacity=cap_wh,
            b_safe=_energy(pc, "b_safe", cap_wh),
            base_load=float(pc["base_load_wh"]),
            e_pkt=float(pc["e_pkt_wh"]),
            link_load=float(pc.get("link_load_wh", 0.0)),
            critical=_energy(pc, "critical", cap_wh),
            initial_soc=_energy(pc, "initial_soc", cap_wh),
        )
    except ValueError as exc:
        raise ScenarioError(f"{path}: power: {exc}") from None

    fw = doc.get("fixed_window", {"start_slot_of_day": 48, "window_slots": 8})
    window = FixedWindow(fw["start_slot_of_day"], fw["window_slots"])
    script = ExpertScript()
    if "expert_script" in doc:
        script = read_script(_resolve(base, doc["expert_script"]))

    scenario = Scenario(
        name=doc["name"],
        graph=graph,
        master=master,
        stream=stream,
        trace=trace,
        power=power,
        policy=policy_by_name(doc["policy"], window),
        capacity=CapacityConfig(doc["capacity"]["cap"],
                                CapacityMetric(doc["capacity"].get("metric", "nodes"))),
        horizon=doc["horizon"],
        seed=doc["seed"],
        tau=float(doc.get("tau_trigger", DEFAULT_TAU)),
        context_support=doc.get("context_support", False),
        script=script,
        expert_delay=doc.get("expert_delay_slots", DEFAULT_EXPERT_DELAY),
        p_drop=float(doc.get("p_drop", 0.0)),
        queue_max_len=doc.get("queue_max_len", DEFAULT_QUEUE_CAP),
        fixed_window=window,
        stream_sha256=_sha256(stream_file.read_bytes()),
        trace_sha256=_sha256(pw.dump_trace(trace).encode("utf-8")),
    )
    validate_scenario(scenario)
    return scenario


def validate_scenario(s: Scenario) -> list[str]:
    """Cross-file checks; raises ScenarioError on the first failure, returns notes."""
    notes = []
    if len(s.trace) < s.horizon:
        raise ScenarioError(f"trace has {len(s.trace)} slots, horizon needs {s.horizon}")
    if s.fixed_window.window_slots > s.slots_per_day:
        raise ScenarioError("fixed window longer than a day")
    seen = set()
    for rec in s.stream:
        if rec.slot >= s.horizon:
            raise ScenarioError(f"observation {rec.obs_id!r} at slot {rec.slot} is past the horizon")
        if rec.slot in seen:
            raise ScenarioError(f"more than one frame in slot {rec.slot}")
        if rec.obs_id in seen:
            raise ScenarioError(f"duplicate obs_id {rec.obs_id!r}")
        seen.add(rec.slot)
        seen.add(rec.obs_id)
    core = pinned_usage(s.graph, s.capacity.metric)
    if core > s.capacity.cap:
        raise ScenarioError(f"cap {s.capacity.cap} is below the pinned core size {core}")
    used = usage(s.graph, s.capacity.metric)
    if used > s.capacity.cap:
        raise ScenarioError(f"initial graph usage {used} exceeds cap {s.capacity.cap}")
    trial = s.master.copy()
    for rule in s.script.rules:
        for patch in rule.patches:
            try:
                integrate_patch(trial, patch, 0)
            except GraphError as exc:
                raise ScenarioError(f"expert rule {rule.name!r} does not apply to the master "
                                    f"graph: {exc}") from None
    notes.append(f"{len(s.stream)} frames over {s.horizon} slots")
    notes.append(f"edge graph usage {used}/{s.capacity.cap} {s.capacity.metric.value}")
    return notes


# -- metrics ----------------------------------------------------------------


def classification_report(pairs: list[tuple[str, str | None]]) -> dict | None:
    """Per-entity precision/recall/F1 and macro-F1; abstentions (None) count as misses."""
    if not pairs:
        return None
    labels = sorted({t for t, _ in pairs} | {p for _, p in pairs if p is not None})
    per = {}
    for lab in labels:
        tp = sum(1 for t, p in pairs if t == lab and p == lab)
        fp = sum(1 for t, p in pairs if t != lab and p == lab)
        fn = sum(1 for t, p in pairs if t == lab and p != lab)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        per[lab] = {"precision": prec, "recall": rec, "f1": f1, "support": tp + fn}
    return {
        "frames": len(pairs),
        "abstained": sum(1 for _, p in pairs if p is None),
        "per_entity": per,
        "macro_f1": sum(v["f1"] for v in per.values()) / len(per),
    }


@dataclass
class RunResult:
    metrics: dict
    rows: list[dict]
    events: list[dict]
    anomalies: list[dict]
    soc_history: list[float]
    edge: KnowledgeGraph
    master: KnowledgeGraph

    def summary_text(self) -> str:
        return json.dumps(self.metrics, indent=2, sort_keys=True) + "\n"

    def rows_text(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=SLOT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows)
        return buf.getvalue()

    def events_text(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)

    def anomalies_text(self) -> str:
        return "".join(json.dumps(a, sort_keys=True) + "\n" for a in self.anomalies)

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "summary": (out / "summary.json", self.summary_text()),
            "slots": (out / "slots.csv", self.rows_text()),
            "events": (out / "events.jsonl", self.events_text()),
            "anomalies": (out / "anomalies.jsonl", self.anomalies_text()),
        }
        for p, text in files.values():
            p.write_text(text, encoding="utf-8")
        return {k: v[0] for k, v in files.items()}


@dataclass
class _Pending:
    due: int
    seq: int
    kind: str
    community_ids: tuple[str, ...]
    obs_id: str
    resolved_at: int


def _policy_record(policy: UplinkPolicy) -> dict:
    if isinstance(policy, FixedWindow):
        return {"kind": policy.name, "start_slot_of_day": policy.start_slot_of_day,
                "window_slots": policy.window_slots}
    return {"kind": policy.name}


def run(scenario: Scenario) -> RunResult:
    s = scenario
    edge = s.graph.copy()
    cloud = Cloud(s.master.copy(), s.script, s.tau, s.context_support)
    rng = np.random.default_rng(s.seed)
    cfg = s.power
    battery = cfg.initial_state()
    queue = InsightQueue(s.queue_max_len)
    frames = {r.slot: r for r in s.stream}
    spd = s.slots_per_day

    events: list[dict] = []
    rows: list[dict] = []
    soc_hist: list[float] = []
    pending: list[_Pending] = []
    seq = 0
    truth: list[tuple[int, str, str | None]] = []
    routine_counts: dict[str, int] = {}
    resolutions = {"master": 0, "expert": 0, "anomaly": 0}
    n = dict(generated=0, uploaded=0, dropped=0, routine=0, insight=0, evictions=0,
             patches=0, rejected=0, bytes_up=0, bytes_raw=0)
    entropy_up = []
    first_patch_slot = None

    for t in range(s.horizon):
        rec = frames.get(t)
        harvest = float(s.trace.harvest[t])
        battery = pw.step_battery(battery, harvest, cfg.base_load)
        h_val, decision_kind = None, ""

        # Phase 1: interpret the frame against the edge graph
        if rec is not None:
            n["bytes_raw"] += rec.payload_bytes
            act = activate(rec, edge, s.p_drop, rng)
            dec = evaluate(edge, rec, act, s.tau, t, s.context_support)
            h_val, decision_kind = dec.entropy, dec.kind
            ev = {"event": "frame", "slot": t, "obs_id": rec.obs_id, "site": rec.site,
                  "true_entity": rec.true_entity, **decision_trace(edge, dec, act)}
            events.append(ev)
            if dec.is_insight:
                n["insight"] += 1
                n["generated"] += 1
                dropped = queue.enqueue(dec.packet)
                events.append({"event": "enqueue", "slot": t, "obs_id": rec.obs_id,
                               "entropy": dec.entropy, "size_bytes": dec.packet.size_bytes})
                if dropped is not None:
                    n["dropped"] += 1
                    events.append({"event": "queue_drop", "slot": t, "obs_id": dropped.obs_id,
                                   "entropy": dropped.entropy})
            else:
                n["routine"] += 1
                routine_counts[dec.predicted] = routine_counts.get(dec.predicted, 0) + 1
            if rec.true_entity is not None:
                truth.append((t, rec.true_entity, dec.predicted))

        # Phase 2: energy-aware uplink and cloud resolution
        battery, report, sent = transmit(queue, battery, cfg, s.policy, t, spd)
        if sent:
            n["uploaded"] += len(sent)
            n["bytes_up"] += report.bytes_sent
            entropy_up.extend(p.entropy for p in sent)
            events.append({"event": "transmit", "slot": t, "k": report.k_selected,
                           "budget": report.budget, "energy_spent": report.energy_spent,
                           "packets": report.packets_sent, "bytes": report.bytes_sent,
                           "total_entropy": report.total_entropy_sent})
        for packet in sent:
            res = cloud.resolve(packet, t)
            resolutions[res.kind] += 1
            ev = {"event": "resolution", "slot": t, "obs_id": packet.obs_id, "kind": res.kind,
                  "master_entropy": res.master_entropy, "communities": list(res.community_ids)}
            if res.rule is not None:
                ev["rule"] = res.rule
            if res.kind == "anomaly":
                ev["anomaly"] = res.anomaly.to_record()
            else:
                delay = s.expert_delay if res.kind == "expert" else 0
                pending.append(_Pending(t + delay, seq, res.kind, res.community_ids,
                                        packet.obs_id, t))
                seq += 1
                ev["due"] = t + delay
            events.append(ev)

        # Phase 3: patches arrive only while the link is up
        applied = evicted = 0
        delivered: list[str] = []
        if report.contact and pending:
            due = [p for p in pending if p.due <= t]
            pending = [p for p in pending if p.due > t]
            for p in sorted(due, key=lambda p: (p.due, p.seq)):
                for cid in p.community_ids:
                    patch = make_patch(cloud.master, [cid], t, resident=edge.node_ids())[0]
                    try:
                        rep = integrate_patch(edge, patch, t)
                    except GraphError as exc:
                        n["rejected"] += 1
                        events.append({"event": "patch_rejected", "slot": t, "community": cid,
                                       "obs_id": p.obs_id, "reason": str(exc)})
                        continue
                    applied += 1
                    delivered.append(cid)
                    if first_patch_slot is None:
                        first_patch_slot = t
                    events.append({"event": "patch_applied", "slot": t, "community": cid,
                                   "kind": p.kind, "obs_id": p.obs_id,
                                   "resolved_at": p.resolved_at,
                                   "added_nodes": rep.added_nodes,
                                   "added_edges": [list(k) for k in rep.added_edges],
                                   "replaced_edges": [list(k) for k in rep.replaced_edges]})
            if applied:
                ev_report = enforce_eviction(edge, s.capacity, protect=delivered)
                for item in ev_report.evicted:
                    evicted += 1
                    events.append({"event": "eviction", "slot": t, "community": item.community_id,
                                   "last_used": item.last_used, "size": item.size})
        n["patches"] += applied
        n["evictions"] += evicted

        soc_hist.append(battery.soc)
        rows.append({
            "slot": t,
            "soc": battery.soc,
            "budget": report.budget,
            "H": "" if h_val is None else h_val,
            "decision": decision_kind,
            "k": report.k_selected,
            "queue_len": len(queue),
            "usage": usage(edge, s.capacity.metric),
            "evictions": evicted,
            "harvest": harvest,
            "energy_spent": report.energy_spent,
            "contact": int(report.contact),
            "patches_applied": applied,
            "generated": n["generated"],
            "uploaded": n["uploaded"],
            "dropped": n["dropped"],
        })

    threshold = cfg.lolp_threshold
    below = [i for i, v in enumerate(soc_hist) if v < threshold]
    pairs = [(tr, pr) for _, tr, pr in truth]
    if first_patch_slot is None:
        pre, post = pairs, []
    else:
        pre = [(tr, pr) for t, tr, pr in truth if t <= first_patch_slot]
        post = [(tr, pr) for t, tr, pr in truth if t > first_patch_slot]

    metrics = {
        "scenario": s.name,
        "policy": _policy_record(s.policy),
        "seed": s.seed,
        "horizon": s.horizon,
        "slot_minutes": s.trace.slot_minutes,
        "stream_sha256": s.stream_sha256,
        "trace_sha256": s.trace_sha256,
        "lolp": pw.lolp(soc_hist, threshold),
        "lolp_threshold": threshold,
        "b_safe": cfg.b_safe,
        "slots_survived": below[0] if below else s.horizon,
        "min_soc": min(soc_hist),
        "final_soc": battery.soc,
        "frames_processed": n["routine"] + n["insight"],
        "routine_frames": n["routine"],
        "insight_frames": n["insight"],
        "routine_counts": dict(sorted(routine_counts.items())),
        "packets_generated": n["generated"],
        "packets_uploaded": n["uploaded"],
        "packets_dropped": n["dropped"],
        "packets_queued": len(queue),
        "total_entropy_uploaded": math.fsum(entropy_up),
        "bytes_uploaded": n["bytes_up"],
        "bytes_raw_stream": n["bytes_raw"],
        "upload_ratio": n["bytes_up"] / n["bytes_raw"] if n["bytes_raw"] else 0.0,
        "uplink_seconds": n["bytes_up"] * 8 / (UPLINK_MBPS * 1e6),
        "resolutions": resolutions,
        "anomalies": len(cloud.anomalies),
        "patches_applied": n["patches"],
        "patches_rejected": n["rejected"],
        "patches_pending": len(pending),
        "evictions": n["evictions"],
        "first_patch_slot": first_patch_slot,
        "classification": classification_report(pairs),
        "classification_pre_patch": classification_report(pre),
        "classification_post_patch": classification_report(post),
    }
    return RunResult(metrics, rows, events, [a.to_record() for a in cloud.anomalies],
                     soc_hist, edge, cloud.master)


# -- reporting ----------------------------------------------------------------

COMPARED = ("lolp", "slots_survived", "min_soc", "final_soc", "packets_uploaded",
            "total_entropy_uploaded", "bytes_uploaded", "insight_frames", "anomalies",
            "patches_applied", "evictions")


def _macro(m: dict) -> float | None:
    c = m.get("classification")
    return None if c is None else c["macro_f1"]


def compare(metrics_a: dict, metrics_b: dict) -> dict:
    """Side-by-side report with deltas ``b - a``; both runs must share stream and trace."""
    for key in ("stream_sha256", "trace_sha256"):
        if metrics_a.get(key) != metrics_b.get(key):
            raise ScenarioError(f"mismatched scenarios: {key} differs")
    fields = {}
    for key in COMPARED:
        a, b = metrics_a[key], metrics_b[key]
        fields[key] = {"a": a, "b": b, "delta": b - a}
    fa, fb = _macro(metrics_a), _macro(metrics_b)
    fields["macro_f1"] = {"a": fa, "b": fb,
                          "delta": None if fa is None or fb is None else fb - fa}
    return {
        "a": {"scenario": metrics_a["scenario"], "policy": metrics_a["policy"]},
        "b": {"scenario": metrics_b["scenario"], "policy": metrics_b["policy"]},
        "fields": fields,
    }


def format_comparison(report: dict) -> str:
    a, b = report["a"]["policy"]["kind"], report["b"]["policy"]["kind"]
    lines = [f"{'metric':<24}{a:>16}{b:>16}{'delta':>16}"]
    for key, v in report["fields"].items():
        cells = ["-" if x is None else (f"{x:.6g}" if isinstance(x, float) else str(x))
                 for x in (v["a"], v["b"], v["delta"])]
        lines.append(f"{key:<24}" + "".join(f"{c:>16}" for c in cells))
    return "\n".join(lines) + "\n"


def read_events(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def explain(events: list[dict], obs_id: str) -> str:
    """Evidence path of one observation, rebuilt from the event log alone."""
    frame = next((e for e in events if e["event"] == "frame" and e["obs_id"] == obs_id), None)
    if frame is None:
        raise KeyError(obs_id)
    out = [f"observation {obs_id} (slot {frame['slot']}, site {frame['site']})"]
    out.append(f"  activated attributes: {', '.join(frame['a_feat']) or '-'}")
    out.append(f"  activated context:    {', '.join(frame['a_ctx']) or '-'}")
    if frame["unmatched"]:
        out.append(f"  unmatched tokens:     {', '.join(frame['unmatched'])}")
    if frame["dropped"]:
        out.append(f"  dropped by noise:     {', '.join(frame['dropped'])}")
    out.append("  candidate scores:")
    for ent in frame["candidates"]:
        line = f"    {ent:<20} S={frame['scores'][ent]:.6g}"
        if ent in frame["conflicts"]:
            line += f"  excluded by conflict with {', '.join(frame['conflicts'][ent])}"
        out.append(line)
    if not frame["candidates"]:
        out.append("    (none)")
    out.append("  distribution:")
    for ent, p in frame["probs"].items():
        out.append(f"    P({ent}) = {p:.6f}")
    if not frame["probs"]:
        out.append("    (empty valid set)")
    out.append(f"  entropy: {frame['entropy']:.6f} nats")
    if frame["decision"] == "routine":
        out.append(f"  decision: routine -> {frame['predicted']}")
    else:
        out.append("  decision: insight (queued for uplink)")
    for e in events:
        kind = e["event"]
        if kind == "transmit":
            if obs_id in e["packets"]:
                out.append(f"  slot {e['slot']}: uploaded")
        elif e.get("obs_id") != obs_id or kind in ("frame", "enqueue"):
            continue
        elif kind == "resolution":
            extra = f" rule={e['rule']}" if "rule" in e else ""
            comms = f" communities={','.join(e['communities'])}" if e["communities"] else ""
            out.append(f"  slot {e['slot']}: cloud resolution {e['kind']}{extra}{comms}")
        elif kind == "patch_applied":
            out.append(f"  slot {e['slot']}: patch for {e['community']} applied on the edge")
        elif kind == "patch_rejected":
            out.append(f"  slot {e['slot']}: patch for {e['community']} rejected: {e['reason']}")
        elif kind == "queue_drop":
            out.append(f"  slot {e['slot']}: dropped from the full queue")
    return "\n".join(out) + "\n"
