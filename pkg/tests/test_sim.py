import dataclasses
import json
from pathlib import Path

import pytest

from kadex import power as pw
from kadex.perception import ObservationRecord
from kadex.scheduler import FixedWindow
from kadex.sim import (
    ScenarioError, bundled_scenarios, classification_report, compare, explain,
    format_comparison, load_scenario, run, scenario_path, validate_scenario,
)
from kadex.skg import dump_patch, load_graph, load_patch

BUNDLED = ["always-on", "demo-salmon", "eviction-refetch", "overcast-lolp"]


@pytest.fixture(scope="module")
def demo():
    return load_scenario("demo-salmon")


@pytest.fixture(scope="module")
def demo_run(demo):
    return run(demo)


def test_bundled_list():
    assert bundled_scenarios() == BUNDLED


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_files_are_canonical(name):
    base = scenario_path(name).parent
    for p in ("graph.json", "master.json"):
        text = (base / p).read_text()
        assert load_graph(text).dumps() == text
    for p in base.glob("patches/*.json"):
        assert dump_patch(load_patch(p.read_text())) == p.read_text()
    doc = json.loads((base / "scenario.json").read_text())
    assert json.dumps(doc, indent=2, ensure_ascii=False) + "\n" == \
        (base / "scenario.json").read_text()


def test_scenario_fields(demo):
    assert demo.horizon == 96 and demo.slots_per_day == 96
    assert demo.power.b_safe == pytest.approx(150.0)
    assert demo.power.initial_soc == pytest.approx(400.0)
    assert len(demo.script.rules) == 1
    assert demo.with_policy("fixed_window").policy == FixedWindow(48, 8)
    assert demo.with_seed(3).seed == 3


def test_validation_notes(demo):
    notes = validate_scenario(demo)
    assert notes[0] == "90 frames over 96 slots"


def _broken(demo, **kw):
    return dataclasses.replace(demo, **kw)


def test_validation_failures(demo):
    dup = demo.stream + (ObservationRecord("s000", 95, "w", (), (), None, 1),)
    with pytest.raises(ScenarioError, match="duplicate obs_id"):
        validate_scenario(_broken(demo, stream=dup))
    same_slot = demo.stream + (ObservationRecord("zz", 89, "w", (), (), None, 1),)
    with pytest.raises(ScenarioError, match="more than one frame"):
        validate_scenario(_broken(demo, stream=same_slot))
    with pytest.raises(ScenarioError, match="trace has"):
        validate_scenario(_broken(demo, horizon=500))
    late = demo.stream + (ObservationRecord("zz", 99, "w", (), (), None, 1),)
    with pytest.raises(ScenarioError, match="past the horizon"):
        validate_scenario(_broken(demo, stream=late))
    from kadex.cache import CapacityConfig
    with pytest.raises(ScenarioError, match="pinned core"):
        validate_scenario(_broken(demo, capacity=CapacityConfig(1)))
    with pytest.raises(ScenarioError, match="exceeds cap"):
        validate_scenario(_broken(demo, capacity=CapacityConfig(4)))


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "nope.json")
    (tmp_path / "s.json").write_text('{"schema": "kadex-scenario"}')
    with pytest.raises(ScenarioError, match="schema violation"):
        load_scenario(tmp_path / "s.json")
    base = scenario_path("demo-salmon").parent
    doc = json.loads((base / "scenario.json").read_text())
    doc["graph"] = "missing.json"
    for f in base.iterdir():
        if f.is_file():
            (tmp_path / f.name).write_bytes(f.read_bytes())
    (tmp_path / "patches").mkdir()
    for f in (base / "patches").iterdir():
        (tmp_path / "patches" / f.name).write_bytes(f.read_bytes())
    (tmp_path / "scenario.json").write_text(json.dumps(doc))
    with pytest.raises(FileNotFoundError, match="missing.json"):
        load_scenario(tmp_path)


def test_determinism(demo):
    a, b = run(demo), run(demo)
    assert a.summary_text() == b.summary_text()
    assert a.rows_text() == b.rows_text()
    assert a.events_text() == b.events_text()


def test_noisy_run_is_seeded(demo):
    noisy = dataclasses.replace(demo, p_drop=0.3)
    a, b = run(noisy), run(noisy)
    assert a.events_text() == b.events_text()
    c = run(noisy.with_seed(99))
    assert c.events_text() != a.events_text()
    assert any(e.get("dropped") for e in a.events if e["event"] == "frame")


def test_packet_conservation_every_slot(demo):
    small = dataclasses.replace(demo.with_policy("fixed_window"), queue_max_len=2)
    res = run(small)
    assert res.metrics["packets_dropped"] > 0
    for row in res.rows:
        assert row["generated"] == row["uploaded"] + row["queue_len"] + row["dropped"]
    m = res.metrics
    assert m["packets_generated"] == (m["packets_uploaded"] + m["packets_queued"]
                                      + m["packets_dropped"])


@pytest.mark.parametrize("name", BUNDLED)
def test_energy_ledger_every_slot(name):
    s = load_scenario(name)
    res = run(s)
    prev = s.power.initial_state().soc
    for row in res.rows:
        charged = prev + row["harvest"] - s.power.base_load
        clamped = not 0 <= charged <= s.power.capacity or charged < row["energy_spent"]
        if not clamped:
            assert row["soc"] == pytest.approx(charged - row["energy_spent"], abs=1e-9)
        prev = row["soc"]


def test_adaptive_keeps_reserve_on_transmit(demo_run, demo):
    for row in demo_run.rows:
        if row["k"]:
            assert row["soc"] >= demo.power.b_safe


def test_demo_outcome(demo_run):
    m = demo_run.metrics
    assert m["resolutions"] == {"anomaly": 1, "expert": 1, "master": 1}
    assert m["anomalies"] == 1 and len(demo_run.anomalies) == 1
    assert demo_run.anomalies[0]["obs_id"] == "s060"
    assert m["patches_applied"] == 2 and m["first_patch_slot"] == 5
    assert m["classification_post_patch"]["macro_f1"] == 1.0
    assert m["upload_ratio"] < 0.01
    assert demo_run.edge.edge(("spots_back", "sockeye", "conflict")) is not None


def test_expert_patch_waits_for_the_delay(demo_run):
    res = next(e for e in demo_run.events if e["event"] == "resolution" and e["kind"] == "expert")
    applied = next(e for e in demo_run.events
                   if e["event"] == "patch_applied" and e["obs_id"] == res["obs_id"])
    assert res["due"] == res["slot"] + 4
    assert applied["slot"] == res["due"]


def test_fixed_window_delays_patches(demo):
    res = run(demo.with_policy(FixedWindow(10, 2)))
    for e in res.events:
        if e["event"] == "patch_applied":
            assert 10 <= e["slot"] % 96 < 12


def test_write_outputs(demo_run, tmp_path):
    files = demo_run.write(tmp_path / "out")
    assert set(files) == {"summary", "slots", "events", "anomalies"}
    header = files["slots"].read_text().splitlines()[0].split(",")
    assert header[:9] == ["slot", "soc", "budget", "H", "decision", "k", "queue_len", "usage",
                          "evictions"]
    assert json.loads(files["summary"].read_text()) == json.loads(demo_run.summary_text())


def test_classification_report():
    rep = classification_report([("a", "a"), ("a", None), ("b", "a"), ("b", "b")])
    assert rep["abstained"] == 1
    # a: tp 1, fp 1, fn 1 -> 0.5 ; b: tp 1, fp 0, fn 1 -> 2/3
    assert rep["per_entity"]["a"]["f1"] == pytest.approx(0.5)
    assert rep["per_entity"]["b"]["f1"] == pytest.approx(2 / 3)
    assert rep["macro_f1"] == pytest.approx((0.5 + 2 / 3) / 2)
    assert classification_report([]) is None


def test_compare_identity_and_mismatch(demo_run):
    m = demo_run.metrics
    rep = compare(m, m)
    assert all(v["delta"] == 0 for v in rep["fields"].values())
    assert "lolp" in format_comparison(rep)
    other = dict(m, trace_sha256="0" * 64)
    with pytest.raises(ScenarioError, match="mismatched"):
        compare(m, other)


def test_explain_from_events(demo_run):
    text = explain(demo_run.events, "s002")
    assert "decision: insight" in text and "cloud resolution expert" in text
    assert "patch for sockeye applied" in text
    text = explain(demo_run.events, "s008")
    assert "excluded by conflict with spots_back" in text
    assert "decision: routine -> chinook" in text
    with pytest.raises(KeyError):
        explain(demo_run.events, "nope")


def test_trace_slot_length_must_match(tmp_path):
    base = scenario_path("demo-salmon").parent
    for f in base.rglob("*"):
        if f.is_file():
            dst = tmp_path / f.relative_to(base)
            dst.parent.mkdir(parents=True, exist_ok=True)
            dst.write_bytes(f.read_bytes())
    tr = pw.read_trace(tmp_path / "trace.txt")
    pw.write_trace(pw.EnergyTrace(tr.harvest, 30), tmp_path / "trace.txt")
    with pytest.raises(ScenarioError, match="slot length"):
        load_scenario(tmp_path)
    assert Path(tmp_path / "scenario.json").is_file()
