"""k-means codebooks and VLAD segment embeddings."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import FingerprintMismatch
from .structures import FeatureSequence, VladCodebook, VladEmbedding

DEFAULT_K = 128
_CHUNK_FLOATS = 1 << 21


def _row_chunks(n_rows, k, d):
    step = max(1, _CHUNK_FLOATS // max(1, k * d))
    return [(lo, min(lo + step, n_rows)) for lo in range(0, n_rows, step)]


def squared_distances(X, centers):
    """Exact ``||x - c||**2`` table, shape ``(len(X), len(centers))``."""
    diff = X[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def assign(X, centers, n_jobs=1):
    """Nearest center per row (Euclidean); ties go to the lowest index.

    Returns ``(labels, squared_distance_to_assigned_center)``.  Rows are
    processed in chunks, optionally on several threads; every row's result
    is independent of the chunking so output is identical for any
    ``n_jobs``.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.empty(len(X), dtype=np.intp)
    dists = np.empty(len(X))

    def work(bounds):
        lo, hi = bounds
        d2 = squared_distances(X[lo:hi], centers)
        lab = np.argmin(d2, axis=1)
        labels[lo:hi] = lab
        dists[lo:hi] = d2[np.arange(hi - lo), lab]

    chunks = _row_chunks(len(X), *centers.shape)
    if n_jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(work, chunks))
    else:
        for c in chunks:
            work(c)
    return labels, dists


def _kmeans_plusplus(X, k, rng):
    n = len(X)
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        cum = np.cumsum(d2)
        r = rng.random() * cum[-1]
        idx = int(min(np.searchsorted(cum, r, side="right"), n - 1))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((X - X[idx]) ** 2, axis=1))
    return X[chosen].copy()


def train_codebook(features, k=DEFAULT_K, seed=0, max_iter=100, tol=1e-6, n_jobs=1, fingerprint="unknown"):
    """Lloyd's k-means with k-means++ seeding.

    ``features`` is an ``(n_frames, dim)`` array.  Stops when no center
    moves by ``tol`` or more, or after ``max_iter`` iterations.  A cluster
    that loses all its points is re-seeded at the point farthest from its
    own assigned center.  Deterministic for a given data order and seed.
    """
    X = check_array(features, dtype=np.float64)
    n_distinct = np.unique(X, axis=0).shape[0]
    if n_distinct < k:
        raise ValueError(f"need at least k={k} distinct frames, got {n_distinct}")
    rng = np.random.default_rng(seed)
    centers = _kmeans_plusplus(X, k, rng)
    for _ in range(max_iter):
        labels, d2 = assign(X, centers, n_jobs)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        counts = np.bincount(labels, minlength=k)
        new = centers.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        empty = np.flatnonzero(~filled)
        if empty.size:
            used = []
            for idx in np.argsort(-d2, kind="stable"):
                if len(used) == empty.size:
                    break
                if not any(np.array_equal(X[idx], u) for u in used):
                    used.append(X[idx])
            for j, point in zip(empty, used):
                new[j] = point
        shift = np.sqrt(np.max(np.sum((new - centers) ** 2, axis=1)))
        centers = new
        if shift < tol and empty.size == 0:
            break
    return VladCodebook(centers, fingerprint, seed)


def _check_fingerprint(features, codebook):
    fp = getattr(features, "fingerprint", None)
    book = codebook.frontend_fingerprint
    if fp and book and book != "unknown" and fp != book:
        raise FingerprintMismatch(
            f"features come from front-end {fp!r} but the codebook was trained on {book!r}"
        )


def vlad_vector(frames, centers, power_norm=False, n_jobs=1):
    """Residual aggregation, per-block then global L2 normalisation."""
    k, d = centers.shape
    blocks = np.zeros((k, d))
    if len(frames):
        labels, _ = assign(frames, centers, n_jobs)
        np.add.at(blocks, labels, frames - centers[labels])
    if power_norm:
        blocks = np.sign(blocks) * np.sqrt(np.abs(blocks))
    norms = np.linalg.norm(blocks, axis=1)
    nz = norms > 0
    blocks[nz] /= norms[nz, None]
    vec = blocks.ravel()
    total = np.linalg.norm(vec)
    return vec / total if total > 0 else vec


def encode(segment_features, codebook, segment_id=-1, power_norm=False, n_jobs=1):
    """VLAD embedding (length ``K * D``) of a variable-length segment."""
    frames = np.asarray(getattr(segment_features, "frames", segment_features), dtype=np.float64)
    if frames.size == 0:
        frames = frames.reshape(0, codebook.dim)
    if frames.ndim != 2 or frames.shape[1] != codebook.dim:
        raise ValueError(f"feature dim {frames.shape[-1]} does not match codebook dim {codebook.dim}")
    _check_fingerprint(segment_features, codebook)
    return VladEmbedding(vlad_vector(frames, codebook.centers, power_norm, n_jobs), segment_id)


def cosine_similarity(a, b):
    """Cosine of the angle between two embeddings; 0 if either is all-zero."""
    a = getattr(a, "vector", a)
    b = getattr(b, "vector", b)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def cosine_similarity_matrix(X):
    """Pairwise cosine similarities of the rows of ``X``; zero rows give 0."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    U = X / safe[:, None]
    return np.clip(U @ U.T, -1.0, 1.0)


class VladEncoder(BaseEstimator, TransformerMixin):
    """Learn a k-means codebook and map variable-length segments to VLAD vectors.

    Parameters
    ----------
    n_clusters : int, default=128
        Codebook size K.
    seed : int, default=0
        Seed for k-means++ initialisation.
    max_iter, tol :
        Lloyd's iteration limits.
    power_norm : bool, default=False
        Apply signed square-root to residual sums before normalisation.
    n_jobs : int, default=1
        Threads for the assignment step.

    Attributes
    ----------
    codebook_ : VladCodebook
    """

    def __init__(self, n_clusters=DEFAULT_K, seed=0, max_iter=100, tol=1e-6, power_norm=False, n_jobs=1):
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter
        self.tol = tol
        self.power_norm = power_norm
        self.n_jobs = n_jobs

    @classmethod
    def from_codebook(cls, codebook, **params):
        enc = cls(n_clusters=codebook.n_clusters, **params)
        enc.codebook_ = codebook
        return enc

    def fit(self, X, y=None):
        """``X``: a frame array or an iterable of :class:`FeatureSequence`."""
        fingerprint = "unknown"
        if isinstance(X, FeatureSequence):
            X = [X]
        if isinstance(X, (list, tuple)) and X and isinstance(X[0], FeatureSequence):
            prints = {s.fingerprint for s in X if s.fingerprint}
            if len(prints) > 1:
                raise FingerprintMismatch(f"training features mix front-ends: {sorted(prints)}")
            fingerprint = prints.pop() if prints else "unknown"
            X = np.concatenate([s.frames for s in X], axis=0)
        self.codebook_ = train_codebook(
            X, self.n_clusters, self.seed, self.max_iter, self.tol, self.n_jobs, fingerprint
        )
        return self

    def encode(self, segment, segment_id=-1):
        check_is_fitted(self, "codebook_")
        return encode(segment, self.codebook_, segment_id, self.power_norm, self.n_jobs)

    def transform(self, X):
        """Stack of embeddings, shape ``(n_segments, K * D)``."""
        check_is_fitted(self, "codebook_")
        if isinstance(X, FeatureSequence):
            X = [X]
        k, d = self.codebook_.centers.shape
        out = np.empty((len(X), k * d))
        for i, seg in enumerate(X):
            out[i] = self.encode(seg, i).vector
        return out
