"""Face clusters: connected components of the thresholded similarity graph."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array

from .structures import FACE_EMBEDDING_DIM, FaceCluster

DEFAULT_FACE_THRESHOLD = 0.85
_BLOCK = 1024


def _unit_rows(E):
    norms = np.linalg.norm(E, axis=1, keepdims=True)
    return E / np.where(norms > 0, norms, 1.0)


def similarity_edges(embeddings, threshold, n_jobs=1):
    """``(i, j)`` pairs, ``i < j``, whose cosine similarity is ``>= threshold``."""
    U = _unit_rows(np.asarray(embeddings, dtype=np.float64))
    n = len(U)

    def block(lo):
        hi = min(lo + _BLOCK, n)
        sim = U[lo:hi] @ U[lo:].T
        r, c = np.nonzero(sim >= threshold)
        r, c = r + lo, c + lo
        keep = r < c
        return r[keep], c[keep]

    starts = range(0, n, _BLOCK)
    if n_jobs > 1 and n > _BLOCK:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(block, starts))
    else:
        parts = [block(lo) for lo in starts]
    if not parts:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _cluster(embeddings, timestamps, threshold, track_ids=None, n_jobs=1):
    n = len(embeddings)
    if n == 0:
        return []
    rows, cols = similarity_edges(embeddings, threshold, n_jobs)
    if track_ids is not None:
        first_of_track = {}
        extra_r, extra_c = [], []
        for i, t in enumerate(track_ids):
            if t is None:
                continue
            if t in first_of_track:
                extra_r.append(first_of_track[t])
                extra_c.append(i)
            else:
                first_of_track[t] = i
        rows = np.concatenate([rows, np.array(extra_r, dtype=np.intp)])
        cols = np.concatenate([cols, np.array(extra_c, dtype=np.intp)])
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    timestamps = np.asarray(timestamps, dtype=np.float64)
    groups = {}
    for i, c in enumerate(comp):
        groups.setdefault(c, []).append(i)
    ranked = sorted(
        groups.values(), key=lambda idx: (-len(idx), timestamps[idx].min(), min(idx))
    )
    return [
        FaceCluster(cid, tuple(idx), np.sort(timestamps[idx])) for cid, idx in enumerate(ranked)
    ]


def cluster_faces(detections, threshold=DEFAULT_FACE_THRESHOLD, n_jobs=1):
    """Group detections whose L2-normalised embeddings have cosine >= ``threshold``.

    Clusters are the connected components of that graph.  Detections that
    share a non-null ``track_id`` are joined before thresholding.  Cluster
    ids rank clusters by member count (descending), then earliest
    appearance.
    """
    detections = list(detections)
    if not detections:
        return []
    E = np.vstack([d.embedding for d in detections])
    tracks = [d.track_id for d in detections]
    if all(t is None for t in tracks):
        tracks = None
    return _cluster(E, [d.timestamp_s for d in detections], threshold, tracks, n_jobs)


def presence_counts(cluster, start_s, end_s):
    """Number of member detections with timestamp in ``[start_s, end_s)``."""
    if not start_s < end_s:
        raise ValueError(f"invalid interval [{start_s}, {end_s})")
    lo = np.searchsorted(cluster.presence, start_s, side="left")
    hi = np.searchsorted(cluster.presence, end_s, side="left")
    return int(hi - lo)


class FaceClusterer(BaseEstimator, ClusterMixin):
    """Fixed-threshold face clustering.

    ``fit`` accepts either a list of :class:`FaceDetection` or an
    ``(n, 128)`` embedding array (with optional ``timestamps``).
    """

    def __init__(self, threshold=DEFAULT_FACE_THRESHOLD, n_jobs=1):
        self.threshold = threshold
        self.n_jobs = n_jobs

    def fit(self, X, y=None, timestamps=None):
        if isinstance(X, list) and not X:
            self.clusters_, self.labels_ = [], np.zeros(0, dtype=np.intp)
            return self
        if isinstance(X, list) and hasattr(X[0], "embedding"):
            self.clusters_ = cluster_faces(X, self.threshold, self.n_jobs)
            n = len(X)
        else:
            E = check_array(X, dtype=np.float64)
            if E.shape[1] != FACE_EMBEDDING_DIM:
                raise ValueError(f"face embeddings must be {FACE_EMBEDDING_DIM}-d")
            n = len(E)
            ts = np.arange(n, dtype=np.float64) if timestamps is None else timestamps
            self.clusters_ = _cluster(E, ts, self.threshold, None, self.n_jobs)
        self.labels_ = np.empty(n, dtype=np.intp)
        for c in self.clusters_:
            self.labels_[list(c.detection_indices)] = c.cluster_id
        return self
