import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kadex.power import BatteryState, PowerConfig
from kadex.scheduler import (
    Adaptive, AlwaysOn, FixedWindow, InsightQueue, parse_policy, select_k, transmit,
)
from kadex.trigger import InsightPacket
from oracles import best_subset_entropy, best_subset_entropy_loops


def pkt(obs_id, entropy, slot=0):
    return InsightPacket(obs_id, slot, "s", entropy, ("t",), (), (), (), (), {}, ())


@pytest.mark.parametrize("n, budget, e_pkt, k", [
    (5, 10.0, 3.0, 3),
    (2, 10.0, 3.0, 2),
    (5, 2.9, 3.0, 0),
    (5, 0.0, 1.0, 0),
    (0, 10.0, 1.0, 0),
    (10, 0.3, 0.1, 2),   # 3 * 0.1 evaluates to 0.30000000000000004, above the budget
    (10, 0.5, 0.1, 5),
])
def test_select_k_examples(n, budget, e_pkt, k):
    assert select_k(n, budget, e_pkt) == k


@settings(max_examples=300, deadline=None)
@given(n=st.integers(0, 50), budget=st.floats(0, 100), e_pkt=st.floats(0.01, 10))
def test_select_k_is_largest_affordable(n, budget, e_pkt):
    k = select_k(n, budget, e_pkt)
    assert 0 <= k <= n and k * e_pkt <= budget
    assert k == n or (k + 1) * e_pkt > budget


def test_queue_order_and_ties():
    q = InsightQueue()
    for p in [pkt("b", 0.7, 2), pkt("a", 0.7, 2), pkt("c", 0.9, 5), pkt("d", 0.7, 1)]:
        q.enqueue(p)
    assert [p.obs_id for p in q] == ["c", "d", "a", "b"]


def test_queue_cap_drops_lowest_priority():
    q = InsightQueue(max_len=2)
    assert q.enqueue(pkt("a", 0.5)) is None
    assert q.enqueue(pkt("b", 0.9)) is None
    assert q.enqueue(pkt("c", 0.1)).obs_id == "c"
    assert q.enqueue(pkt("d", 0.7)).obs_id == "a"
    assert [p.obs_id for p in q] == ["b", "d"]


CFG = PowerConfig(capacity=100.0, b_safe=30.0, base_load=1.0, e_pkt=4.0, link_load=5.0)


def _queue(entropies):
    q = InsightQueue()
    for i, h in enumerate(entropies):
        q.enqueue(pkt(f"p{i}", h, i))
    return q


def test_adaptive_sends_top_entropy_prefix():
    q = _queue([0.1, 0.9, 0.5, 0.7])
    batt, rep, sent = transmit(q, BatteryState(41.0, 100.0), CFG, Adaptive(), 0)
    assert rep.k_selected == 2 and [p.entropy for p in sent] == [0.9, 0.7]
    assert batt.soc == 33.0 and rep.contact
    assert len(q) == 2


def test_adaptive_below_reserve_has_no_contact():
    q = _queue([0.9])
    batt, rep, sent = transmit(q, BatteryState(30.0, 100.0), CFG, Adaptive(), 0)
    assert not rep.contact and not sent and batt.soc == 30.0


def test_fixed_window_ignores_budget():
    pol = FixedWindow(start_slot_of_day=94, window_slots=4)
    assert [pol.is_open(s, 96) for s in (93, 94, 95, 96, 97, 98)] == [
        False, True, True, True, True, False]
    q = _queue([0.5] * 5)
    batt, rep, _ = transmit(q, BatteryState(35.0, 100.0), CFG, pol, 95)
    assert rep.k_selected == 5 and batt.soc == 15.0
    batt, rep, _ = transmit(_queue([0.5]), BatteryState(35.0, 100.0), CFG, pol, 50)
    assert rep.k_selected == 0 and not rep.contact


def test_always_on_pays_link_load():
    batt, rep, _ = transmit(_queue([0.5, 0.4]), BatteryState(50.0, 100.0), CFG, AlwaysOn(), 3)
    assert rep.energy_spent == 13.0 and batt.soc == 37.0
    batt, rep, _ = transmit(InsightQueue(), BatteryState(50.0, 100.0), CFG, AlwaysOn(), 3)
    assert rep.energy_spent == 5.0


def test_report_channel_time():
    _, rep, sent = transmit(_queue([0.5]), BatteryState(99.0, 100.0), CFG, Adaptive(), 0)
    assert rep.bytes_sent == sent[0].size_bytes
    assert rep.channel_seconds == pytest.approx(rep.bytes_sent * 8 / 14.84e6)


def test_parse_policy():
    assert parse_policy("adaptive") == Adaptive()
    assert parse_policy({"kind": "fixed_window", "start_slot_of_day": 4,
                         "window_slots": 8}) == FixedWindow(4, 8)
    with pytest.raises(ValueError):
        parse_policy("sometimes")


@settings(max_examples=200, deadline=None)
@given(entropies=st.lists(st.floats(0, 3), max_size=8), budget=st.floats(0, 40),
       e_pkt=st.floats(0.5, 10))
def test_prefix_matches_exhaustive_search(entropies, budget, e_pkt):
    q = _queue(entropies)
    k = select_k(len(q), budget, e_pkt)
    got = sum(p.entropy for p in q.pop_front(k))
    best, _ = best_subset_entropy(entropies, budget, e_pkt)
    assert got == pytest.approx(best, abs=1e-9)
    assert best == pytest.approx(best_subset_entropy_loops(entropies, budget, e_pkt), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(soc=st.floats(0, 100), n=st.integers(0, 30), e_pkt=st.floats(0.01, 20),
       b_safe=st.floats(0, 99))
def test_adaptive_never_spends_into_reserve(soc, n, e_pkt, b_safe):
    cfg = PowerConfig(100.0, b_safe, 0.0, e_pkt)
    batt, rep, _ = transmit(_queue([1.0] * n), BatteryState(soc, 100.0), cfg, Adaptive(), 0)
    if rep.k_selected:
        assert batt.soc >= b_safe
    assert batt.soc == soc or batt.soc >= b_safe


def test_bitmask_oracle_example():
    assert best_subset_entropy([0.2, 0.9, 0.4], 2.0, 1.0) == (pytest.approx(1.3), 2)
    assert best_subset_entropy(np.array([]), 5.0, 1.0) == (0.0, 0)
