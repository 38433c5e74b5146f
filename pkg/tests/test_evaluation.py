from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import roc_auc_score

from voiceface.evaluation import (
    DEFAULT_SCHEME,
    SCHEMES,
    aggregate_ratings,
    chance_accuracy,
    fleiss_kappa,
    fleiss_kappa_table,
    make_pairs,
    rating_table,
    roc,
    roc_from_scores,
)
from voiceface.structures import PairLabel, RatingRecord, Verdict

C, I, P, U = "Correct", "Incorrect", "PartiallyCorrect", "Unsure"


def mann_whitney_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def kappa_by_hand(table):
    """Fleiss' construction written out with exact rationals."""
    N = len(table)
    n = sum(table[0])
    k = len(table[0])
    P_i = [Fraction(sum(x * x for x in row) - n, n * (n - 1)) for row in table]
    P_bar = sum(P_i) / N
    p_j = [Fraction(sum(row[j] for row in table), N * n) for j in range(k)]
    P_e = sum(p * p for p in p_j)
    return (P_bar - P_e) / (1 - P_e)


# ----------------------------------------------------------------------- ROC


def test_perfect_separation():
    curve = roc_from_scores([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0])
    assert curve.auc == 1.0
    assert curve.points[0][:2] == (0.0, 0.0) and curve.points[-1][:2] == (1.0, 1.0)
    assert curve.points[0][2] == np.inf


def test_random_labels_near_half(rng):
    scores = rng.random(20000)
    labels = rng.random(20000) < 0.5
    assert roc_from_scores(scores, labels).auc == pytest.approx(0.5, abs=0.03)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=40))
def test_auc_equals_mann_whitney(rows):
    scores = [s / 6 for s, _ in rows]
    labels = [y for _, y in rows]
    if len(set(labels)) < 2:
        return
    curve = roc_from_scores(scores, labels)
    assert curve.auc == pytest.approx(mann_whitney_auc(scores, labels), abs=1e-12)
    assert curve.auc == pytest.approx(roc_auc_score(labels, scores), abs=1e-12)
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)
    assert len(curve.points) == len(set(scores)) + 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_auc_invariant_under_monotone_transform(seed):
    r = np.random.default_rng(seed)
    scores = r.uniform(-1, 1, 60)
    labels = r.random(60) < 0.5
    labels[:2] = [True, False]
    base = roc_from_scores(scores, labels).auc
    for f in (np.exp, lambda x: 3 * x - 7, lambda x: x**3, np.arctan):
        assert roc_from_scores(f(scores), labels).auc == pytest.approx(base, abs=1e-12)


def test_single_class_rejected():
    with pytest.raises(ValueError):
        roc_from_scores([0.1, 0.2], [1, 1])


def test_roc_on_pairs_and_csv(rng):
    a = rng.standard_normal(8)
    pairs = [PairLabel(a, a * 2, True), PairLabel(a, -a, False), PairLabel(a, a + 0.1, True), PairLabel(a, rng.standard_normal(8), False)]
    curve = roc(pairs)
    assert curve.auc == 1.0
    lines = curve.to_csv().splitlines()
    assert lines[0] == "fpr,tpr,threshold"
    assert len(lines) == len(curve.points) + 1


def test_make_pairs_balanced_and_deterministic(rng):
    X = rng.standard_normal((12, 4))
    spk = [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]
    pairs = make_pairs(X, spk, 100, seed=1)
    assert sum(p.same_speaker for p in pairs) == 50
    again = make_pairs(X, spk, 100, seed=1)
    assert all(np.array_equal(p.embedding_a, q.embedding_a) for p, q in zip(pairs, again))
    with pytest.raises(ValueError):
        make_pairs(X[:2], [0, 1], 10)


# ------------------------------------------------------------------- kappa


def test_kappa_worked_example():
    assert fleiss_kappa([("A", "A", "B"), ("B", "B", "B")]) == pytest.approx(0.25, abs=1e-12)
    assert kappa_by_hand([[2, 1], [0, 3]]) == Fraction(1, 4)


def test_kappa_unanimity_is_one():
    assert fleiss_kappa([(C, C, C), (I, I, I), (P, P, P)]) == 1.0
    # a single category everywhere makes the chance term 1 as well
    assert fleiss_kappa([(C, C, C)] * 4) == 1.0


def test_kappa_on_fleiss_style_table():
    # 10 subjects, 14 raters, 5 categories
    table = [
        [0, 0, 0, 0, 14],
        [0, 2, 6, 4, 2],
        [0, 0, 3, 5, 6],
        [0, 3, 9, 2, 0],
        [2, 2, 8, 1, 1],
        [7, 7, 0, 0, 0],
        [3, 2, 6, 3, 0],
        [2, 5, 3, 2, 2],
        [6, 5, 2, 1, 0],
        [0, 2, 2, 3, 7],
    ]
    expected = kappa_by_hand(table)
    assert fleiss_kappa_table(table) == pytest.approx(float(expected), abs=1e-12)
    assert float(expected) == pytest.approx(0.210, abs=1e-3)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(2, 6), st.integers(2, 4), st.integers(0, 2**31))
def test_kappa_matches_hand_formula(n_items, n_raters, n_cat, seed):
    r = np.random.default_rng(seed)
    table = [np.bincount(r.integers(0, n_cat, n_raters), minlength=n_cat).tolist() for _ in range(n_items)]
    P_bar = sum(Fraction(sum(x * x for x in row) - n_raters, n_raters * (n_raters - 1)) for row in table) / n_items
    got = fleiss_kappa_table(table)
    if P_bar == 1:
        assert got == 1.0
    else:
        assert got == pytest.approx(float(kappa_by_hand(table)), abs=1e-12)


def test_random_ratings_kappa_near_zero(rng):
    cats = list(Verdict)
    records = [tuple(cats[k] for k in rng.integers(0, 4, 3)) for _ in range(5000)]
    assert fleiss_kappa(records) == pytest.approx(0.0, abs=0.05)


def test_kappa_errors():
    with pytest.raises(ValueError):
        fleiss_kappa([])
    with pytest.raises(ValueError):
        fleiss_kappa([("A", "B"), ("A", "B", "B")])
    with pytest.raises(ValueError):
        fleiss_kappa([("A", "X")], categories=["A", "B"])


def test_rating_table_uses_all_verdicts():
    table, cats = rating_table([RatingRecord("c", (C, C, U))])
    assert cats == list(Verdict)
    assert table.tolist() == [[2, 0, 0, 1]]


# ------------------------------------------------------------- aggregation


def rec(*votes):
    return RatingRecord("clip", votes)


def test_all_correct_everywhere():
    for name in SCHEMES:
        assert aggregate_ratings([rec(C, C, C)] * 5, name).accuracy_pct == 100.0


def test_majority_vs_unanimous():
    assert aggregate_ratings([rec(C, C, I)], "MAJORITY").accuracy_pct == 100.0
    assert aggregate_ratings([rec(C, C, I)], "UNANIMOUS").accuracy_pct == 0.0


def test_partial_half():
    res = aggregate_ratings([rec(P, P, P)], "PARTIAL_HALF")
    assert (res.correct, res.incorrect) == (0.5, 0.5)
    res = aggregate_ratings([rec(C, P, U)], "PARTIAL_HALF")
    assert res.correct == pytest.approx(0.75)


def test_drop_unsure_default():
    assert DEFAULT_SCHEME == "STRICT_DROP_UNSURE"
    res = aggregate_ratings([rec(C, C, U), rec(C, C, I), rec(I, I, C)])
    assert res.excluded == 1
    assert res.accuracy_pct == 50.0


def test_majority_excludes_split_votes():
    res = aggregate_ratings([rec(C, I, P), rec(C, C, C)], "MAJORITY")
    assert res.excluded == 1 and res.accuracy_pct == 100.0


def test_all_excluded_is_nan():
    assert np.isnan(aggregate_ratings([rec(U, U, U)], "MAJORITY").accuracy_pct)


def test_unknown_scheme():
    with pytest.raises(ValueError):
        aggregate_ratings([rec(C, C, C)], "LENIENT")


votes = st.sampled_from([C, I, P, U])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(votes, votes, votes), min_size=1, max_size=30))
def test_unanimous_never_beats_majority(rows):
    recs = [rec(*r) for r in rows]
    maj = aggregate_ratings(recs, "MAJORITY").accuracy_pct
    una = aggregate_ratings(recs, "UNANIMOUS").accuracy_pct
    if not np.isnan(maj):
        assert una <= maj + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.tuples(votes, votes, votes), st.permutations(range(3)))
def test_rules_are_order_insensitive(votes3, perm):
    for scheme in SCHEMES.values():
        assert scheme.rule(tuple(Verdict(v) for v in votes3)) == scheme.rule(tuple(Verdict(votes3[i]) for i in perm))


def test_chance_baseline():
    assert chance_accuracy(5) == 0.2
