"""Audiovisual speaker association.

Speech is segmented, embedded with VLAD and conservatively clustered; faces
are clustered by embedding similarity; each speech cluster is then given the
face cluster it co-occurs with most, or ``OFF_SCREEN``.
"""

from .association import associate, choose_faces, merge_speech_clusters_by_face
from .errors import (
    ConfigError,
    FingerprintMismatch,
    InputFormatError,
    StageError,
    VoicefaceError,
)
from .evaluation import SCHEMES, aggregate_ratings, fleiss_kappa, roc, roc_from_scores
from .faces import FaceClusterer, cluster_faces, presence_counts
from .frontend import FeatureExtractor, FrameConfig, MelConfig
from .pipeline import PipelineConfig, run_on_data, run_pipeline
from .speech_activity import (
    EnergySpeechDetector,
    PrecomputedSpeechDetector,
    detect_speech,
    smooth_to_segments,
)
from .speech_clustering import SpeechClusterer, cluster_segments, recompute_cluster_embedding
from .structures import (
    OFF_SCREEN,
    AudioBuffer,
    FaceCluster,
    FaceDetection,
    FeatureSequence,
    GroundTruth,
    PairLabel,
    RatingRecord,
    SpeakerTimeline,
    SpeechCluster,
    SpeechPosterior,
    SpeechSegment,
    TimelineEntry,
    Turn,
    Verdict,
    VladCodebook,
    VladEmbedding,
)
from .synthetic import ScenarioConfig, generate, score_against_truth
from .vlad import VladEncoder, cosine_similarity, encode, train_codebook

__version__ = "0.1.0"
