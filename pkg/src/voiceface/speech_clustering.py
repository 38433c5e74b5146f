"""Conservative complete-linkage agglomerative clustering of speech segments."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array

from .structures import SpeechCluster
from .vlad import cosine_similarity_matrix, encode

DEFAULT_THRESHOLD = 0.75


@dataclass(frozen=True)
class Merge:
    left: Tuple[int, ...]
    right: Tuple[int, ...]
    similarity: float


def complete_linkage(similarity, threshold, ids=None):
    """Greedy agglomeration on a precomputed similarity matrix.

    The linkage between two clusters is the smallest pairwise similarity
    across them.  The most similar pair is merged while its linkage is at
    least ``threshold``.  Equal linkages are resolved by the smallest
    ``(min id, max id)`` of the two clusters' minimum ids.

    Returns ``(groups, merges)``: ``groups`` is a list of sorted id tuples
    ordered by smallest id, ``merges`` the merge sequence.
    """
    S = np.array(similarity, dtype=np.float64)
    n = S.shape[0]
    if S.shape != (n, n):
        raise ValueError("similarity matrix must be square")
    ids = list(range(n)) if ids is None else [int(i) for i in ids]
    if len(set(ids)) != n:
        raise ValueError("ids must be distinct")
    members = {i: [ids[i]] for i in range(n)}
    key = np.array(ids, dtype=np.int64)
    link = S.copy()
    np.fill_diagonal(link, -np.inf)
    active = np.ones(n, dtype=bool)
    merges = []
    while active.sum() > 1:
        sub = np.where(active[:, None] & active[None, :], link, -np.inf)
        best = sub.max()
        if not best >= threshold:
            break
        rows, cols = np.nonzero(np.triu(sub == best, k=1))
        lo = np.minimum(key[rows], key[cols])
        hi = np.maximum(key[rows], key[cols])
        pick = np.lexsort((hi, lo))[0]
        a, b = rows[pick], cols[pick]
        if key[b] < key[a]:
            a, b = b, a
        merges.append(Merge(tuple(sorted(members[a])), tuple(sorted(members[b])), float(best)))
        members[a].extend(members.pop(b))
        link[a, :] = np.minimum(link[a, :], link[b, :])
        link[:, a] = link[a, :]
        link[a, a] = -np.inf
        active[b] = False
    groups = sorted(tuple(sorted(m)) for m in members.values())
    return groups, merges


def _as_matrix(embeddings):
    vectors = [getattr(e, "vector", e) for e in embeddings]
    if len(vectors) == 0:
        raise ValueError("cannot cluster an empty set of segments")
    dims = {np.shape(v) for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"embedding dimension mismatch: {sorted(dims)}")
    return np.vstack(vectors).astype(np.float64)


def cluster_segments(embeddings, stop_threshold=DEFAULT_THRESHOLD, segment_ids=None):
    """Speech clusters from per-segment embeddings (singletons to start).

    ``segment_ids`` defaults to each embedding's ``segment_id`` when all
    are set, otherwise to positions.
    """
    X = _as_matrix(embeddings)
    if segment_ids is None:
        seg = [getattr(e, "segment_id", -1) for e in embeddings]
        segment_ids = seg if min(seg) >= 0 and len(set(seg)) == len(seg) else range(len(X))
    groups, _ = complete_linkage(cosine_similarity_matrix(X), stop_threshold, segment_ids)
    return [SpeechCluster(cid, g) for cid, g in enumerate(groups)]


def recompute_cluster_embedding(cluster, codebook, segment_features, power_norm=False):
    """VLAD embedding of all member segments' frames, in start-time order.

    ``segment_features`` maps segment id to its :class:`FeatureSequence`.
    """
    try:
        parts = [segment_features[sid] for sid in cluster.segment_ids]
    except KeyError as exc:
        raise KeyError(f"no features for segment {exc.args[0]} of cluster {cluster.cluster_id}") from None
    parts = sorted(parts, key=lambda f: f.start_s)
    frames = np.concatenate([p.frames for p in parts], axis=0)
    head = parts[0]
    seq = type(head)(frames, head.hop_s, head.start_s, head.kind, head.fingerprint)
    return encode(seq, codebook, cluster.cluster_id, power_norm)


class SpeechClusterer(BaseEstimator, ClusterMixin):
    """Complete-linkage HAC with a cosine similarity stopping threshold.

    Parameters
    ----------
    threshold : float, default=0.75
        Merging stops once the best complete-linkage similarity drops below
        this.  High values give more, purer clusters.

    Attributes
    ----------
    labels_ : ndarray of shape (n_segments,)
    clusters_ : list of SpeechCluster
    merges_ : list of Merge
    """

    def __init__(self, threshold=DEFAULT_THRESHOLD):
        self.threshold = threshold

    def fit(self, X, y=None, segment_ids=None):
        X = check_array(_as_matrix(X) if isinstance(X, list) else X, dtype=np.float64)
        ids = list(range(len(X))) if segment_ids is None else [int(i) for i in segment_ids]
        groups, self.merges_ = complete_linkage(cosine_similarity_matrix(X), self.threshold, ids)
        self.clusters_ = [SpeechCluster(cid, g) for cid, g in enumerate(groups)]
        where = {sid: i for i, sid in enumerate(ids)}
        self.labels_ = np.empty(len(X), dtype=np.intp)
        for c in self.clusters_:
            self.labels_[[where[s] for s in c.segment_ids]] = c.cluster_id
        return self
