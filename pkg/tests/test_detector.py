import json
import math
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

import oracles
from sentistab.corpus import TextSample, generate_synthetic
from sentistab.detector import (
    DetectorConfig,
    calibrate,
    candidate_thresholds,
    detect,
    detect_batch,
    f1_from_counts,
    score_sample,
    verdict_for,
)
from sentistab.errors import ConfigError, DataError, DuplicateId, EmptyText, SingleClassInput
from sentistab.rewrite import PromptSet, make_rewriter
from sentistab.sentiment import LexiconAnalyzer


def cfg(rewriter="mock_neutralizing", lex=None, **kw):
    return DetectorConfig(LexiconAnalyzer(lex), make_rewriter(rewriter, lex), PromptSet(), **kw)


def test_identity_is_llm(tiny_lex):
    r = detect(TextSample("a", "What a good and lovely day!"), cfg("mock_identity", tiny_lex, threshold=0.5))
    assert r.score == 0.0 and r.verdict == "llm"


def test_good_good_bad_is_human(tiny_lex):
    r = detect(TextSample("a", "good good bad"), cfg(lex=tiny_lex, threshold=0.5))
    assert r.score == pytest.approx(1.098612, abs=1e-6)
    assert r.verdict == "human"
    assert r.threshold_used == 0.5 and r.metric_used == "sdc"
    assert r.llm_call_count == 0 and r.llm_calls == ()


def test_tie_goes_to_human():
    assert verdict_for(0.5, 0.5) == "human"
    assert verdict_for(0.0, 0.0) == "human"
    assert verdict_for(0.4999, 0.5) == "llm"


def test_detect_needs_threshold(tiny_lex):
    with pytest.raises(ConfigError):
        detect(TextSample("a", "x"), cfg(lex=tiny_lex))


def test_empty_text(tiny_lex):
    with pytest.raises(EmptyText):
        detect(TextSample("a", " ... "), cfg(lex=tiny_lex, threshold=0.5))


def test_metric_selection(tiny_lex):
    c = cfg("mock_lossy_pair", tiny_lex, threshold=0.5, metric="sdp")
    r = detect(TextSample("a", "good day"), c)
    assert r.scores.sdc == 0.0 and r.scores.sdp > 0
    assert r.score == r.scores.sdp and r.verdict == "human"
    with pytest.raises(ConfigError):
        cfg(metric="bogus")
    with pytest.raises(ConfigError):
        cfg(threshold=math.nan)


def test_serialized_verdict_is_consistent(tiny_lex):
    r = detect(TextSample("a", "good good bad"), cfg(lex=tiny_lex, threshold=0.5, with_sdp=True))
    d = json.loads(json.dumps(r.to_dict()))
    assert set(d) == {"sample_id", "metric", "threshold", "score", "verdict", "scores", "llm_call_count", "llm_calls"}
    assert d["verdict"] == verdict_for(d["score"], d["threshold"])
    # the round trip runs on the neutralized rewrite, so SDP sees the same shift
    assert d["scores"]["sdp"] == d["scores"]["sdc"]


def test_infinite_threshold_serializes():
    r = score_sample(TextSample("a", "good"), cfg())
    assert r.to_dict()["threshold"] == "inf"
    assert r.with_threshold(0.1).to_dict()["threshold"] == 0.1


def test_batch_empty():
    b = detect_batch([], cfg(threshold=0.5))
    assert b.results == [] and b.errors == []


def test_batch_fail_soft(tiny_lex):
    samples = [TextSample("a", "good day"), TextSample("b", "   "), TextSample("c", "bad day")]
    b = detect_batch(samples, cfg(lex=tiny_lex, threshold=0.5))
    assert [r.sample_id for r in b.results] == ["a", "c"]
    assert [(e.id, e.error_type) for e in b.errors] == [("b", "EmptyText")]
    assert b.summary()["failed"] == 1


def test_batch_duplicate_ids():
    with pytest.raises(DuplicateId):
        detect_batch([TextSample("a", "x"), TextSample("a", "y")], cfg(threshold=0.5))


def test_batch_parallel_matches_sequential():
    corpus = list(generate_synthetic(20, seed=3))
    c = cfg(threshold=0.5, with_sdp=True)
    one = [json.dumps(r.to_dict()) for r in detect_batch(corpus, c, parallelism=1).results]
    eight = [json.dumps(r.to_dict()) for r in detect_batch(corpus, c, parallelism=8).results]
    assert one == eight and len(one) == 40


# -- calibration ------------------------------------------------------------

def scored(llm, human):
    return [(s, "llm") for s in llm] + [(s, "human") for s in human]


def test_calibrate_separable():
    rep = calibrate(scored([0.1, 0.2], [0.9, 1.0]))
    assert rep.best_f1 == 1.0
    assert rep.best_threshold == pytest.approx(0.55)


def test_calibrate_fixture():
    data = scored([0.1, 0.4], [0.3, 0.9])
    rep = calibrate(data)
    assert rep.best_threshold == pytest.approx(0.65) and rep.best_f1 == 0.8
    assert Fraction(rep.best_f1).limit_denominator(1000) == oracles.best_f1_bruteforce(data)


def test_calibrate_single_class():
    with pytest.raises(SingleClassInput):
        calibrate(scored([0.1, 0.2], []))
    with pytest.raises(DataError):
        calibrate([(0.1, "llm"), (0.2, "maybe")])


def test_calibrate_ties_toward_smaller_threshold():
    # eps in (0.1, 0.2) and eps above 0.4 both give F1 = 2/3; pick the smaller
    rep = calibrate(scored([0.1, 0.4], [0.2, 0.3]))
    assert rep.best_f1 == f1_from_counts(1, 0, 1) == f1_from_counts(2, 2, 0)
    assert rep.best_threshold == pytest.approx(0.15)


def test_calibrate_report_shape():
    rep = calibrate(scored([0.1, 0.4], [0.3, 0.9]), ids=["a", "b", "c", "d"])
    fprs = [p[0] for p in rep.roc_points]
    assert fprs == sorted(fprs) and rep.roc_points[0] == (0.0, 0.0) and rep.roc_points[-1] == (1.0, 1.0)
    assert rep.score_table[0] == ("a", "llm", 0.1)
    assert 0 <= rep.best_f1 <= 1
    json.dumps(rep.to_dict())


def test_candidates_handle_adjacent_floats():
    a = 1.0
    b = math.nextafter(a, 2)
    cands = candidate_thresholds([a, b])
    assert a < cands[1] <= b
    assert calibrate([(a, "llm"), (b, "human")]).best_f1 == 1.0


def test_calibration_matches_bruteforce():
    rnd = random.Random(7)
    for _ in range(50):
        n = rnd.randint(2, 200)
        data = [(round(rnd.random(), rnd.choice([1, 2, 6])), rnd.choice(["llm", "human"])) for _ in range(n)]
        data[0] = (data[0][0], "llm")
        data[1] = (data[1][0], "human")
        rep = calibrate(data)
        assert Fraction(rep.best_f1) == Fraction(float(oracles.best_f1_bruteforce(data)))


grid = st.integers(-10**6, 10**6).map(lambda i: i / 1000)


@given(st.lists(st.tuples(grid, st.sampled_from(["llm", "human"])), min_size=2, max_size=40))
def test_rank_invariance(data):
    if len({y for _, y in data}) < 2:
        return
    moved = [(2 * s + 1, y) for s, y in data]
    assert calibrate(data).best_f1 == calibrate(moved).best_f1


@given(st.lists(st.floats(0, 10), min_size=1, max_size=30), st.floats(0, 10), st.floats(0, 10))
def test_llm_count_monotone_in_threshold(scores, e1, e2):
    lo, hi = sorted((e1, e2))
    assert sum(verdict_for(s, lo) == "llm" for s in scores) <= sum(verdict_for(s, hi) == "llm" for s in scores)


def test_separable_transform_moves_threshold():
    data = scored([0.1, 0.2], [0.9, 1.0])
    moved = [(math.exp(s), y) for s, y in data]
    rep = calibrate(moved)
    assert rep.best_f1 == 1.0
    assert rep.best_threshold == pytest.approx((math.exp(0.2) + math.exp(0.9)) / 2)
