"""Plain data containers shared across the pipeline stages."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np

FACE_EMBEDDING_DIM = 128
POSTERIOR_RATE_HZ = 100
OFF_SCREEN = "OFF_SCREEN"


def _as_finite_array(values, ndim, name):
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(eq=False)
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        self.samples = _as_finite_array(self.samples, 1, "samples")
        if self.samples.size == 0:
            raise ValueError("audio buffer is empty")
        if np.any(np.abs(self.samples) > 1.0):
            raise ValueError("samples must lie in [-1, 1]")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError("sample_rate_hz must be positive")
        self.sample_rate_hz = int(self.sample_rate_hz)

    @property
    def duration_s(self):
        return self.samples.size / self.sample_rate_hz


@dataclass(eq=False)
class FeatureSequence:
    """Frames of shape ``(n_frames, dim)`` on a regular hop grid.

    ``kind`` names the front-end ("logmel", "mfcc", "energy_db", ...) and
    ``fingerprint`` identifies its exact configuration; both are optional
    metadata used for compatibility checks.
    """

    frames: np.ndarray
    hop_s: float
    start_s: float = 0.0
    kind: str = "unknown"
    fingerprint: Optional[str] = None

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim == 1:
            frames = frames[:, None]
        self.frames = _as_finite_array(frames, 2, "frames")
        if self.hop_s <= 0:
            raise ValueError("hop_s must be positive")

    @property
    def dim(self):
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]

    def slice_time(self, start_s, end_s):
        """Frames whose start time lies in ``[start_s, end_s)``."""
        lo = int(np.ceil(round((start_s - self.start_s) / self.hop_s, 6)))
        hi = int(np.ceil(round((end_s - self.start_s) / self.hop_s, 6)))
        lo = min(max(lo, 0), len(self))
        hi = min(max(hi, lo), len(self))
        return FeatureSequence(
            self.frames[lo:hi],
            self.hop_s,
            self.start_s + lo * self.hop_s,
            self.kind,
            self.fingerprint,
        )


@dataclass(eq=False)
class SpeechPosterior:
    probs: np.ndarray
    start_s: float = 0.0

    rate_hz = POSTERIOR_RATE_HZ

    def __post_init__(self):
        self.probs = _as_finite_array(self.probs, 1, "probs")
        if np.any((self.probs < 0) | (self.probs > 1)):
            raise ValueError("posterior probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class SpeechSegment:
    start_s: float
    end_s: float
    segment_id: int

    def __post_init__(self):
        if self.start_s < 0 or self.end_s <= self.start_s:
            raise ValueError(f"invalid segment interval [{self.start_s}, {self.end_s})")

    @property
    def duration_s(self):
        return self.end_s - self.start_s


@dataclass(eq=False)
class FaceDetection:
    timestamp_s: float
    frame_index: int
    bbox: Tuple[float, float, float, float]
    embedding: np.ndarray
    track_id: Optional[int] = None

    def __post_init__(self):
        self.embedding = _as_finite_array(self.embedding, 1, "embedding")
        if self.embedding.size != FACE_EMBEDDING_DIM:
            raise ValueError(
                f"embedding length must be {FACE_EMBEDDING_DIM}, got {self.embedding.size}"
            )
        if not np.isfinite(self.timestamp_s) or self.timestamp_s < 0:
            raise ValueError("timestamp_s must be finite and non-negative")
        if int(self.frame_index) != self.frame_index or self.frame_index < 0:
            raise ValueError("frame_index must be a non-negative integer")
        self.frame_index = int(self.frame_index)
        x, y, w, h = (float(v) for v in self.bbox)
        if not all(np.isfinite(v) for v in (x, y, w, h)):
            raise ValueError("bbox contains non-finite values")
        if x < 0 or y < 0 or w < 0 or h < 0 or x + w > 1.0 or y + h > 1.0:
            raise ValueError(f"bbox {self.bbox} is outside the unit square")
        self.bbox = (x, y, w, h)


@dataclass(eq=False)
class VladCodebook:
    centers: np.ndarray
    frontend_fingerprint: str = "unknown"
    seed: Optional[int] = None

    def __post_init__(self):
        self.centers = _as_finite_array(self.centers, 2, "centers")
        if self.centers.shape[0] < 1:
            raise ValueError("codebook needs at least one center")
        if np.unique(self.centers, axis=0).shape[0] != self.centers.shape[0]:
            raise ValueError("codebook centers must be pairwise distinct")

    @property
    def n_clusters(self):
        return self.centers.shape[0]

    @property
    def dim(self):
        return self.centers.shape[1]


@dataclass(eq=False)
class VladEmbedding:
    vector: np.ndarray
    segment_id: int = -1


@dataclass(eq=False)
class SpeechCluster:
    cluster_id: int
    segment_ids: Tuple[int, ...]
    embedding: Optional[VladEmbedding] = None

    def __post_init__(self):
        if len(self.segment_ids) == 0:
            raise ValueError("speech cluster must be non-empty")
        self.segment_ids = tuple(sorted(self.segment_ids))


@dataclass(eq=False)
class FaceCluster:
    cluster_id: int
    detection_indices: Tuple[int, ...]
    presence: np.ndarray

    def __post_init__(self):
        if len(self.detection_indices) == 0:
            raise ValueError("face cluster must be non-empty")
        self.presence = np.asarray(self.presence, dtype=np.float64)
        if np.any(np.diff(self.presence) < 0):
            raise ValueError("presence timestamps must be sorted ascending")

    def __len__(self):
        return len(self.detection_indices)


Assignment = Union[int, str]


@dataclass(frozen=True)
class TimelineEntry:
    start_s: float
    end_s: float
    speech_cluster_id: int
    assignment: Assignment

    @property
    def off_screen(self):
        return self.assignment == OFF_SCREEN


@dataclass
class SpeakerTimeline:
    entries: Sequence[TimelineEntry] = field(default_factory=list)

    def __post_init__(self):
        self.entries = list(self.entries)
        for prev, cur in zip(self.entries, self.entries[1:]):
            if cur.start_s < prev.end_s:
                raise ValueError("timeline entries must be sorted and disjoint")
        for e in self.entries:
            if e.end_s <= e.start_s:
                raise ValueError(f"empty timeline interval [{e.start_s}, {e.end_s})")
            if not (e.assignment == OFF_SCREEN or isinstance(e.assignment, (int, np.integer))):
                raise ValueError(f"bad assignment {e.assignment!r}")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


class Verdict(str, Enum):
    CORRECT = "Correct"
    INCORRECT = "Incorrect"
    PARTIALLY_CORRECT = "PartiallyCorrect"
    UNSURE = "Unsure"


RATERS_PER_CLIP = 3


@dataclass(frozen=True)
class RatingRecord:
    clip_id: str
    ratings: Tuple[Verdict, ...]

    def __post_init__(self):
        ratings = tuple(Verdict(r) for r in self.ratings)
        if len(ratings) != RATERS_PER_CLIP:
            raise ValueError(f"expected {RATERS_PER_CLIP} ratings, got {len(ratings)}")
        object.__setattr__(self, "ratings", ratings)


@dataclass(eq=False)
class PairLabel:
    embedding_a: np.ndarray
    embedding_b: np.ndarray
    same_speaker: bool

    def __post_init__(self):
        self.embedding_a = _as_finite_array(self.embedding_a, 1, "embedding_a")
        self.embedding_b = _as_finite_array(self.embedding_b, 1, "embedding_b")
        if self.embedding_a.shape != self.embedding_b.shape:
            raise ValueError("pair embeddings must have equal dimension")
        self.same_speaker = bool(self.same_speaker)


@dataclass(frozen=True)
class Turn:
    start_s: float
    end_s: float
    speaker_id: int
    onscreen: bool


@dataclass
class GroundTruth:
    """Labels for a synthetic scenario.

    ``speaker_face_map`` maps every speaker whose face is ever shown to its
    face identity; ``detection_identities[i]`` is the identity behind the
    i-th face detection of the scenario's (time-sorted) track file.
    """

    turns: Sequence[Turn]
    speaker_face_map: dict
    duration_s: float
    detection_identities: Sequence[int] = field(default_factory=list)

    def __post_init__(self):
        self.turns = sorted(self.turns, key=lambda t: t.start_s)
        for prev, cur in zip(self.turns, self.turns[1:]):
            if cur.start_s < prev.end_s:
                raise ValueError("ground-truth turns overlap")
        faces = list(self.speaker_face_map.values())
        if len(set(faces)) != len(faces):
            raise ValueError("speaker_face_map must be injective")
        self.detection_identities = [int(i) for i in self.detection_identities]
