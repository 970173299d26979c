import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_graph, random_graph, salmon_graph
from kadex.perception import Activation, ObservationRecord, match_tokens
from kadex.skg import Edge, EdgeKind, KnowledgePatch, integrate_patch
from kadex.trigger import (
    EntityDistribution, SupportScores, entity_distribution, evaluate, max_entropy,
    structural_entropy, support_scores,
)
from oracles import trigger_oracle

# softmax over {2.0, 1.0}: p = 1 / (1 + e^-1), H = -(p ln p + q ln q)
P_HIGH = 0.7310585786300049
H_TWO_ONE = 0.5822031088882179


def _score(graph, feats, ctx=(), context_support=False):
    act = match_tokens(graph, feats, ctx)
    cands = graph.neighbors(act.nodes) & graph.entities()
    return support_scores(graph.subgraph(act.nodes | cands), act, context_support), act


def _rec(feats, ctx=(), obs_id="x", slot=0):
    return ObservationRecord(obs_id, slot, "weir-1", tuple(feats), tuple(ctx), None, 10)


def test_conflict_fixture():
    g = salmon_graph()
    integrate_patch(g, KnowledgePatch("sockeye", [], [Edge("spots_back", "sockeye",
                                                           EdgeKind.CONFLICT)]), 0)
    scores, _ = _score(g, ["spots_back", "silver_body"])
    assert scores.scores["chinook"] == pytest.approx(1.5, abs=1e-12)
    assert scores.excluded == {"sockeye"}
    assert scores.scores["sockeye"] == 0.0
    assert scores.conflicts == {"sockeye": ("spots_back",)}
    dist = entity_distribution(scores)
    assert dist.valid == ("chinook",) and dist.prob("sockeye") == 0.0
    assert structural_entropy(dist) == 0.0


def test_empty_activation_scores_nothing():
    scores, _ = _score(salmon_graph(), [])
    assert scores.scores == {} and scores.excluded == frozenset()


def test_single_edge_sum():
    g = build_graph({"k": [("e", "entity"), ("a", "attribute")]}, [], [("a", "e", "support", 2.0)])
    scores, _ = _score(g, ["a"])
    assert scores.scores == {"e": 2.0}


def test_context_contributes_only_when_enabled():
    g = salmon_graph()
    off, _ = _score(g, ["spots_back"], ["river_mouth"])
    on, _ = _score(g, ["spots_back"], ["river_mouth"], context_support=True)
    assert off.scores == {"chinook": 1.0, "sockeye": 0.0}
    assert on.scores == pytest.approx({"chinook": 1.2, "sockeye": 0.2})


def test_two_one_distribution_and_entropy():
    dist = entity_distribution(SupportScores({"a": 2.0, "b": 1.0}))
    assert dist.probs["a"] == pytest.approx(P_HIGH, abs=1e-12)
    assert dist.probs["b"] == pytest.approx(1 - P_HIGH, abs=1e-12)
    assert structural_entropy(dist) == pytest.approx(H_TWO_ONE, abs=1e-12)


def test_sockeye_frame_is_the_two_one_fixture():
    g = salmon_graph()
    dec = evaluate(g, _rec(["silver_body", "hooked_jaw"]), match_tokens(g, ["silver_body",
                                                                             "hooked_jaw"]))
    assert dec.entropy == pytest.approx(H_TWO_ONE, abs=1e-12)
    assert dec.kind == "routine" and dec.predicted == "sockeye"


def test_confuser_is_ln2_and_triggers():
    g = salmon_graph()
    feats = ["spots_back", "silver_body", "hooked_jaw"]
    dec = evaluate(g, _rec(feats), match_tokens(g, feats))
    assert dec.entropy == pytest.approx(math.log(2), abs=1e-12)
    assert dec.is_insight and dec.predicted is None
    assert dec.packet.entropy == dec.entropy


@pytest.mark.parametrize("k", range(1, 7))
def test_symmetric_support_gives_ln_k(k):
    dist = entity_distribution(SupportScores({f"e{i}": 1.3 for i in range(k)}))
    assert structural_entropy(dist) == pytest.approx(math.log(k), abs=1e-12)


def test_empty_valid_set_uses_sentinel():
    g = salmon_graph()
    dec = evaluate(g, _rec(["glitter"]), match_tokens(g, ["glitter"]))
    assert dec.is_insight
    assert dec.entropy == pytest.approx(math.log(2) + 1.0)
    assert dec.packet.unmatched == ("glitter",)
    assert max_entropy(build_graph({}, [], [])) == 1.0


def test_sentinel_beats_any_distribution():
    g = salmon_graph()
    assert max_entropy(g) > math.log(len(g.entities()))


def test_softmax_survives_huge_scores():
    dist = entity_distribution(SupportScores({"a": 1000.0, "b": 999.0}))
    assert dist.probs["a"] == pytest.approx(P_HIGH, abs=1e-12)


def test_routine_boundary_is_inclusive():
    g = salmon_graph()
    feats = ["silver_body", "hooked_jaw"]
    assert evaluate(g, _rec(feats), match_tokens(g, feats), tau=H_TWO_ONE).kind == "routine"
    assert evaluate(g, _rec(feats), match_tokens(g, feats), tau=H_TWO_ONE - 1e-9).is_insight


def test_argmax_ties_go_to_smallest_id():
    dist = entity_distribution(SupportScores({"zeta": 1.0, "alpha": 1.0}))
    g = build_graph({"k": [("zeta", "entity"), ("alpha", "entity"), ("a", "attribute")]}, [],
                    [("a", "zeta", "support", 1.0), ("a", "alpha", "support", 1.0)])
    dec = evaluate(g, _rec(["a"]), match_tokens(g, ["a"]), tau=1.0)
    assert dist.valid == ("alpha", "zeta")
    assert dec.predicted == "alpha"


def test_evaluate_touches_subgraph_communities_only():
    g = salmon_graph()
    evaluate(g, _rec(["spots_back"]), match_tokens(g, ["spots_back"]), now=7)
    assert g.communities["chinook"].last_used == 7
    assert g.communities["sockeye"].last_used == 0
    evaluate(g, _rec(["hooked_jaw"]), match_tokens(g, ["hooked_jaw"]), now=9, touch=False)
    assert g.communities["sockeye"].last_used == 0


def test_packet_is_compact_and_excludes_dropped_tokens():
    g = salmon_graph()
    rec = ObservationRecord("f9", 4, "weir-1", ("spots_back", "silver_body", "hooked_jaw"),
                            ("river_mouth",), "chinook", 1_500_000)
    act = Activation(frozenset({"spots_back", "hooked_jaw"}), frozenset({"river_mouth"}),
                     (), ("silver_body",))
    dec = evaluate(g, rec, act, tau=0.0)
    body = json.loads(dec.packet.serialize())
    assert body["feature_tokens"] == ["spots_back", "hooked_jaw"]
    assert dec.packet.size_bytes == len(dec.packet.serialize())
    assert dec.packet.size_bytes < rec.payload_bytes / 1000


def _check_against_oracle(g, ents, edges, attrs_on, ctx_on, context_support):
    act = Activation(frozenset(attrs_on), frozenset(ctx_on))
    cands = g.neighbors(act.nodes) & g.entities()
    scores = support_scores(g.subgraph(act.nodes | cands), act, context_support)
    dist = entity_distribution(scores)
    h = structural_entropy(dist, max_entropy(g))
    o_cands, o_scores, o_excl, o_probs, o_h = trigger_oracle(ents, edges, attrs_on, ctx_on,
                                                             context_support)
    assert set(scores.scores) == o_cands
    assert scores.excluded == o_excl
    for e in o_cands:
        assert abs(scores.scores[e] - o_scores[e]) <= 1e-9
        assert abs(dist.prob(e) - o_probs[e]) <= 1e-9
    assert abs(h - o_h) <= 1e-9
    return scores, dist


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), ctx_support=st.booleans())
def test_random_graphs_match_oracle(seed, ctx_support):
    rng = np.random.default_rng(seed)
    g, ents, attrs, ctxs, edges = random_graph(rng)
    on = [a for a in attrs if rng.random() < 0.5]
    ctx_on = [c for c in ctxs if rng.random() < 0.5]
    scores, dist = _check_against_oracle(g, ents, edges, on, ctx_on, ctx_support)
    assert all(dist.prob(e) == 0.0 for e in scores.excluded)
    if dist.valid:
        assert abs(math.fsum(dist.probs.values()) - 1.0) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(scores=st.dictionaries(st.sampled_from("abcdefgh"), st.floats(0, 50), max_size=8),
       excluded=st.sets(st.sampled_from("abcdefgh")))
def test_distribution_invariants(scores, excluded):
    excluded = frozenset(e for e in excluded if e in scores)
    sc = SupportScores({e: (0.0 if e in excluded else s) for e, s in scores.items()}, excluded)
    dist = entity_distribution(sc)
    h = structural_entropy(dist, 99.0)
    for e in scores:
        assert 0.0 <= dist.prob(e) <= 1.0
        if e in excluded or sc.scores[e] <= 0:
            assert dist.prob(e) == 0.0 and e not in dist.valid
    if dist.valid:
        assert abs(math.fsum(dist.probs.values()) - 1.0) <= 1e-9
        assert 0.0 <= h <= math.log(len(dist.valid)) + 1e-9
    else:
        assert h == 99.0


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), tau=st.floats(0, 3))
def test_decision_respects_tau(seed, tau):
    rng = np.random.default_rng(seed)
    g, ents, attrs, ctxs, edges = random_graph(rng)
    on = [a for a in attrs if rng.random() < 0.5]
    dec = evaluate(g, _rec(on), match_tokens(g, on), tau=tau)
    if dec.kind == "routine":
        assert dec.entropy <= tau and dec.distribution.valid
        assert dec.predicted in dec.distribution.valid
    else:
        assert dec.entropy > tau or not dec.distribution.valid
        assert dec.packet is not None


def test_distribution_type_defaults():
    assert EntityDistribution((), {}).prob("x") == 0.0
