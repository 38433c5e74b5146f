"""Same/different ROC, Fleiss' kappa and rating aggregation."""

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .structures import PairLabel, RatingRecord, Verdict
from .vlad import cosine_similarity

C, I, P, U = Verdict.CORRECT, Verdict.INCORRECT, Verdict.PARTIALLY_CORRECT, Verdict.UNSURE


def chance_accuracy(n_prominent_faces=5):
    """Probability of picking the speaker's face uniformly at random."""
    return 1.0 / n_prominent_faces


# ----------------------------------------------------------------------- ROC


@dataclass
class RocCurve:
    points: List[Tuple[float, float, float]]
    auc: float

    @property
    def fpr(self):
        return np.array([p[0] for p in self.points])

    @property
    def tpr(self):
        return np.array([p[1] for p in self.points])

    @property
    def thresholds(self):
        return np.array([p[2] for p in self.points])

    def to_csv(self):
        rows = ["fpr,tpr,threshold"]
        rows += [f"{f!r},{t!r},{th!r}" for f, t, th in self.points]
        return "\n".join(rows) + "\n"


def roc_from_scores(scores, labels):
    """ROC over every distinct score; tied scores form one sweep step."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both same and different pairs")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[last_of_group]
    fp = np.cumsum(~y)[last_of_group]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s[last_of_group]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    points = [(float(a), float(b), float(c)) for a, b, c in zip(fpr, tpr, thresholds)]
    return RocCurve(points, auc)


def roc(pairs, similarity=cosine_similarity):
    scores = [similarity(p.embedding_a, p.embedding_b) for p in pairs]
    return roc_from_scores(scores, [p.same_speaker for p in pairs])


def make_pairs(embeddings, speakers, n_pairs=10000, seed=0):
    """Random same/different pairs, half of each when possible."""
    X = np.asarray([getattr(e, "vector", e) for e in embeddings], dtype=np.float64)
    speakers = np.asarray(speakers)
    rng = np.random.default_rng(seed)
    by_spk = {s: np.flatnonzero(speakers == s) for s in np.unique(speakers)}
    multi = [s for s, idx in by_spk.items() if len(idx) >= 2]
    if not multi or len(by_spk) < 2:
        raise ValueError("need two speakers and a speaker with two segments")
    pairs = []
    for k in range(n_pairs):
        if k % 2 == 0:
            s = multi[rng.integers(len(multi))]
            a, b = rng.choice(by_spk[s], size=2, replace=False)
            same = True
        else:
            a, b = rng.choice(len(X), size=2, replace=False)
            while speakers[a] == speakers[b]:
                a, b = rng.choice(len(X), size=2, replace=False)
            same = False
        pairs.append(PairLabel(X[a], X[b], same))
    return pairs


# ---------------------------------------------------------------- Fleiss' κ


def _rating_rows(records):
    rows = []
    for r in records:
        ratings = r.ratings if isinstance(r, RatingRecord) else tuple(r)
        rows.append(ratings)
    return rows


def rating_table(records, categories=None):
    """Item-by-category count matrix ``n_ij`` and the category list used."""
    rows = _rating_rows(records)
    if not rows:
        raise ValueError("no rating records")
    if categories is None:
        if all(isinstance(v, Verdict) for row in rows for v in row):
            categories = list(Verdict)
        else:
            categories = sorted({v for row in rows for v in row}, key=str)
    index = {c: j for j, c in enumerate(categories)}
    table = np.zeros((len(rows), len(categories)), dtype=np.int64)
    for i, row in enumerate(rows):
        for v in row:
            if v not in index:
                raise ValueError(f"rating {v!r} is not one of the categories")
            table[i, index[v]] += 1
    return table, categories


def fleiss_kappa_table(table):
    """Fleiss' kappa of an item-by-category count matrix, computed exactly."""
    table = np.asarray(table, dtype=np.int64)
    if table.ndim != 2 or table.shape[0] == 0:
        raise ValueError("need a non-empty 2-d count table")
    per_item = set(table.sum(axis=1).tolist())
    if len(per_item) != 1:
        raise ValueError(f"every item needs the same number of ratings, got {sorted(per_item)}")
    n = per_item.pop()
    if n < 2:
        raise ValueError("need at least two ratings per item")
    n_items = table.shape[0]
    agree = [Fraction(int((row * row).sum()) - n, n * (n - 1)) for row in table]
    p_bar = sum(agree) / n_items
    if p_bar == 1:
        return 1.0
    totals = table.sum(axis=0)
    p_e = sum(Fraction(int(t), n_items * n) ** 2 for t in totals)
    return float((p_bar - p_e) / (1 - p_e))


def fleiss_kappa(records, categories=None):
    """Fleiss' kappa over rating records (or plain label sequences)."""
    table, _ = rating_table(records, categories)
    return fleiss_kappa_table(table)


# -------------------------------------------------------- rating aggregation


@dataclass(frozen=True)
class AggregationScheme:
    """``rule`` maps one clip's verdicts to credit in [0, 1], or None to exclude it."""

    name: str
    rule: Callable[[Sequence[Verdict]], Optional[float]]
    partial_weight: float = 0.0


def _majority(v):
    counts = Counter(v)
    if counts[C] >= 2:
        return 1.0
    if counts[I] >= 2:
        return 0.0
    return None


def _unanimous(v):
    return 1.0 if all(x == C for x in v) else 0.0


def _partial(weight):
    credit = {C: 1.0, P: weight, I: 0.0}

    def rule(v):
        votes = [credit[x] for x in v if x != U]
        return sum(votes) / len(votes) if votes else None

    return rule


def _drop_unsure(v):
    return None if U in v else _majority(v)


SCHEMES = {
    "MAJORITY": AggregationScheme("MAJORITY", _majority),
    "UNANIMOUS": AggregationScheme("UNANIMOUS", _unanimous),
    "PARTIAL_HALF": AggregationScheme("PARTIAL_HALF", _partial(0.5), partial_weight=0.5),
    "STRICT_DROP_UNSURE": AggregationScheme("STRICT_DROP_UNSURE", _drop_unsure),
}
DEFAULT_SCHEME = "STRICT_DROP_UNSURE"


@dataclass(frozen=True)
class AggregateResult:
    scheme: str
    accuracy_pct: float
    correct: float
    incorrect: float
    excluded: int

    def __str__(self):
        return (
            f"{self.scheme}: {self.accuracy_pct:.2f}% "
            f"(correct={self.correct:g}, incorrect={self.incorrect:g}, excluded={self.excluded})"
        )


def aggregate_ratings(records, scheme=DEFAULT_SCHEME):
    """Clip-level accuracy under one aggregation scheme.

    ``accuracy_pct`` is ``100 * correct / (correct + incorrect)`` and is
    NaN when every record is excluded.
    """
    if isinstance(scheme, str):
        try:
            scheme = SCHEMES[scheme]
        except KeyError:
            raise ValueError(f"unknown scheme {scheme!r}; choose from {sorted(SCHEMES)}") from None
    correct = incorrect = 0.0
    excluded = 0
    for ratings in _rating_rows(records):
        credit = scheme.rule(tuple(Verdict(v) for v in ratings))
        if credit is None:
            excluded += 1
        else:
            correct += credit
            incorrect += 1.0 - credit
    judged = correct + incorrect
    pct = 100.0 * correct / judged if judged else float("nan")
    return AggregateResult(scheme.name, pct, correct, incorrect, excluded)
