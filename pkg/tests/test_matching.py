import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import lowe_matches
from rangeface.matching import (
    PROTOCOLS,
    EvaluationReport,
    FaceFeatures,
    MatcherConfig,
    Protocol,
    evaluate,
    get_protocol,
    match_descriptors,
    recognize,
    reports_to_json,
    similarity,
)


def rand_set(rng, n, d=16):
    return rng.normal(size=(n, d))


def test_ratio_validation():
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            MatcherConfig(bad)


def test_identical_sets_match_fully():
    a = rand_set(np.random.default_rng(0), 20)
    m = match_descriptors(a, a)
    assert [(x.probe_index, x.gallery_index) for x in m] == [(i, i) for i in range(20)]
    assert all(x.best_dist == 0 for x in m)


def test_duplicate_gallery_gives_no_match():
    g = np.ones((2, 4))
    assert match_descriptors(g, g) == []


def test_small_or_empty_galleries():
    p = np.ones((3, 4))
    assert match_descriptors(p, np.ones((1, 4))) == []
    assert match_descriptors(p, np.zeros((0, 0))) == []
    assert match_descriptors(np.zeros((0, 0)), p) == []
    assert similarity([], []) == 0


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("ratio", [0.6, 0.7, 0.8, 0.9])
def test_matches_equal_brute_force(seed, ratio):
    rng = np.random.default_rng(seed)
    g = rand_set(rng, 30, 8)
    p = np.vstack([g[:10] + rng.normal(scale=0.3, size=(10, 8)), rand_set(rng, 15, 8)])
    got = [(m.probe_index, m.gallery_index) for m in match_descriptors(p, g, MatcherConfig(ratio))]
    assert got == lowe_matches(p.tolist(), g.tolist(), ratio)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 25), st.integers(0, 25))
def test_match_invariants(seed, n, m):
    rng = np.random.default_rng(seed)
    p, g = rand_set(rng, n, 4), rand_set(rng, m, 4)
    counts = []
    for ratio in (0.6, 0.7, 0.8, 0.9):
        matches = match_descriptors(p, g, MatcherConfig(ratio))
        for x in matches:
            assert x.best_dist <= x.second_dist
            assert x.best_dist / x.second_dist < ratio
        counts.append(len(matches))
    assert counts == sorted(counts)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 3), elements=st.integers(-3, 3).map(float)))
def test_ties_follow_oracle(a):
    # small integer grids produce many exact distance ties
    g = a[::-1].copy()
    got = [(m.probe_index, m.gallery_index) for m in match_descriptors(a, g)]
    assert got == lowe_matches(a.tolist(), g.tolist(), 0.8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 30))
def test_self_similarity_is_maximal(seed, n):
    rng = np.random.default_rng(seed)
    a = rand_set(rng, n)
    b = rand_set(rng, n)
    assert similarity(a, a) == n
    assert similarity(a, a) >= similarity(a, b)


def test_mutual_mode_is_subset():
    rng = np.random.default_rng(9)
    g = rand_set(rng, 10, 4)
    p = np.vstack([g[:3] + 0.01, g[:3] + 0.02])
    one_way = match_descriptors(p, g)
    mutual = match_descriptors(p, g, MatcherConfig(mutual=True))
    assert set(mutual) <= set(one_way)
    assert len(one_way) == 6 and len(mutual) == 3


def test_recognize_ranks_and_ties():
    rng = np.random.default_rng(1)
    a, b = rand_set(rng, 10), rand_set(rng, 10)
    probe = a + rng.normal(scale=0.05, size=a.shape)
    res = recognize(probe, [("b", b), ("a", a)])
    assert res.rank1 == "a" and not res.zero_confidence
    # equal counts: smaller mean distance wins over gallery order
    res = recognize(a, [("noisy", probe), ("exact", a)])
    assert res.ranked[0].similarity == res.ranked[1].similarity == 10
    assert res.rank1 == "exact"


def test_recognize_zero_confidence_keeps_gallery_order():
    g = [("x", np.ones((1, 4))), ("y", np.ones((1, 4)))]
    res = recognize(np.ones((3, 4)), g)
    assert res.zero_confidence and res.rank1 == "x"
    with pytest.raises(ValueError):
        recognize(np.ones((3, 4)), [])


def test_recognize_agrees_with_recomputation():
    rng = np.random.default_rng(3)
    base = {s: rand_set(rng, 15, 12) for s in "abcde"}
    gallery = list(base.items())
    for s, d in base.items():
        probe = d + rng.normal(scale=0.2, size=d.shape)
        res = recognize(probe, gallery)
        sims = {k: len(lowe_matches(probe.tolist(), v.tolist(), 0.8)) for k, v in gallery}
        assert {e.identity: e.similarity for e in res.ranked} == sims
        assert res.rank1 == s


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.permutations(range(5)))
def test_recognize_permutation_invariance(seed, perm):
    rng = np.random.default_rng(seed)
    gallery = [(f"s{i}", rand_set(rng, 8, 6)) for i in range(5)]
    probe = gallery[2][1] + rng.normal(scale=0.3, size=(8, 6))
    a = recognize(probe, gallery)
    b = recognize(probe, [gallery[i] for i in perm])
    key = lambda r: [(e.identity, e.similarity) for e in r.ranked if e.similarity > 0]  # noqa: E731
    if len({e.similarity for e in a.ranked}) == 5:
        assert key(a) == key(b)
    assert a.rank1 == b.rank1 or a.ranked[0][1:3] == a.ranked[1][1:3]


def test_protocol_table():
    assert PROTOCOLS["T1"].train_scans == {1, 2, 3} and PROTOCOLS["T1"].test_scans == {4}
    assert PROTOCOLS["T4"].test_scans == {15, 16}
    assert get_protocol("loo").mode == "loo"
    with pytest.raises(ValueError, match="unknown protocol"):
        get_protocol("T9")
    with pytest.raises(ValueError):
        Protocol("bad", frozenset({1}), frozenset({1}))
    with pytest.raises(ValueError):
        Protocol("bad", mode="other")


def synthetic_features(subjects=4, scans=(1, 2, 3, 4), noise=0.1, seed=0):
    rng = np.random.default_rng(seed)
    feats = {}
    for s in range(subjects):
        base = rand_set(rng, 12, 10)
        for k in scans:
            feats[(f"s{s}", k)] = FaceFeatures(base + rng.normal(scale=noise, size=base.shape), 12, 0)
    return feats


def test_evaluate_loo_and_sanity():
    feats = synthetic_features()
    r = evaluate(feats, PROTOCOLS["LOO"])
    assert r.probes == 16 and r.correct == 16 and r.accuracy == 100.0
    assert r.mean_points == 12.0
    assert evaluate(feats, PROTOCOLS["SANITY"]).accuracy == 100.0


def test_evaluate_split_and_missing_scans():
    feats = synthetic_features()
    r = evaluate(feats, PROTOCOLS["T1"])
    assert (r.subjects, r.probes, r.correct) == (4, 4, 4)
    with pytest.raises(KeyError):
        evaluate(feats, PROTOCOLS["T2"])


def test_evaluate_subject_limit():
    feats = synthetic_features(subjects=5)
    r = evaluate(feats, PROTOCOLS["LOO"].limited(2))
    assert r.subjects == 2 and r.probes == 8
    with pytest.raises(ValueError):
        evaluate(feats, PROTOCOLS["LOO"].limited(9))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 3.0))
def test_accuracy_bounds(seed, noise):
    r = evaluate(synthetic_features(3, (1, 2, 3), noise, seed), PROTOCOLS["LOO"])
    assert 0.0 <= r.accuracy <= 100.0
    assert r.probes == 9


def test_report_formats():
    r = EvaluationReport("LOO", 10, 40, 37, 92.5, 23.725, 81)
    assert r.to_text() == "LOO\tsubjects=10\tprobes=40\tcorrect=37\taccuracy=92.50\tmean_points=23.73\tskipped=81"
    rec = json.loads(reports_to_json([r]))[0]
    assert rec["accuracy"] == 92.5 and rec["mean_points"] == 23.73 and rec["protocol"] == "LOO"
