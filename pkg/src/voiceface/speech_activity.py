"""Dense speech posteriors and their smoothing into speech segments."""

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigError
from .io import read_posterior
from .structures import POSTERIOR_RATE_HZ, SpeechPosterior, SpeechSegment

FRAME_S = 1.0 / POSTERIOR_RATE_HZ
MIN_SEGMENT_S = 1.0
MIN_GAP_S = 0.25


def _check_hop(features):
    if abs(features.hop_s - FRAME_S) > 1e-9:
        raise ValueError(
            f"speech detection needs features at a {FRAME_S * 1000:g} ms hop, got {features.hop_s * 1000:g} ms"
        )


class EnergySpeechDetector(BaseEstimator):
    """Frame log-energy detector with an adaptive threshold.

    A frame is speech when its energy is at least
    ``min(noise_floor + margin_db, absolute_db)``, where the noise floor is
    the ``floor_percentile``-th percentile of all frame energies.  The
    absolute cap keeps uniformly loud input from being judged against
    itself.  Output probabilities are hard 0/1 decisions.

    Expects ``kind="energy_db"`` features (see
    :func:`voiceface.frontend.frame_energy_db`).
    """

    def __init__(self, margin_db=9.0, absolute_db=-30.0, floor_percentile=10.0):
        self.margin_db = margin_db
        self.absolute_db = absolute_db
        self.floor_percentile = floor_percentile

    def fit(self, features=None, y=None):
        return self

    def threshold_db(self, energy_db):
        floor = np.percentile(energy_db, self.floor_percentile)
        return min(floor + self.margin_db, self.absolute_db)

    def predict_proba(self, features):
        _check_hop(features)
        if features.kind != "energy_db" or features.dim != 1:
            raise ValueError("EnergySpeechDetector needs 1-d energy_db features")
        energy = features.frames[:, 0]
        if energy.size == 0:
            return SpeechPosterior(np.zeros(0), features.start_s)
        probs = (energy >= self.threshold_db(energy)).astype(np.float64)
        return SpeechPosterior(probs, features.start_s)


class PrecomputedSpeechDetector(BaseEstimator):
    """Serves posteriors produced by an external model.

    ``posterior`` is either a :class:`SpeechPosterior` or a path to a
    posterior file.
    """

    def __init__(self, posterior=None):
        self.posterior = posterior

    def fit(self, features=None, y=None):
        return self

    def predict_proba(self, features=None):
        if features is not None:
            _check_hop(features)
        if self.posterior is None:
            raise ConfigError("PrecomputedSpeechDetector needs a posterior or a posterior file")
        if isinstance(self.posterior, SpeechPosterior):
            return self.posterior
        return read_posterior(self.posterior)


def detect_speech(features, detector):
    return detector.predict_proba(features)


def raw_runs(probs, on_threshold=0.5):
    """Half-open ``(start, end)`` frame-index runs where ``probs >= on_threshold``."""
    active = np.asarray(probs) >= on_threshold
    edges = np.diff(np.concatenate(([0], active.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), ends.tolist()))


def smooth_to_segments(posterior, on_threshold=0.5, min_duration_s=MIN_SEGMENT_S, min_gap_s=MIN_GAP_S):
    """Turn dense posteriors into speech segments.

    Runs of frames at or above ``on_threshold`` are found first.  Runs
    separated by less than ``min_gap_s`` are merged, and only then are
    segments shorter than ``min_duration_s`` dropped.  Times sit on the
    10 ms frame grid and ``end_s`` is exclusive.
    """
    min_len = int(round(min_duration_s * POSTERIOR_RATE_HZ))
    min_gap = int(round(min_gap_s * POSTERIOR_RATE_HZ))
    merged = []
    for start, end in raw_runs(posterior.probs, on_threshold):
        if merged and start - merged[-1][1] < min_gap:
            merged[-1][1] = end
        else:
            merged.append([start, end])
    kept = [(s, e) for s, e in merged if e - s >= min_len]
    t0 = posterior.start_s
    return [
        SpeechSegment(t0 + s / POSTERIOR_RATE_HZ, t0 + e / POSTERIOR_RATE_HZ, i)
        for i, (s, e) in enumerate(kept)
    ]


def segments_to_indicator(segments, n_frames, start_s=0.0):
    """0/1 posterior that is 1 exactly on ``segments``."""
    probs = np.zeros(n_frames)
    for seg in segments:
        lo = int(round((seg.start_s - start_s) * POSTERIOR_RATE_HZ))
        hi = int(round((seg.end_s - start_s) * POSTERIOR_RATE_HZ))
        probs[max(lo, 0):min(hi, n_frames)] = 1.0
    return SpeechPosterior(probs, start_s)
