"""End-to-end inference: features, speech segments, VLAD, HAC, faces, association."""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import io
from .association import associate, cooccurrence_table, speaker_summary
from .errors import ConfigError, FingerprintMismatch, StageError, VoicefaceError
from .faces import cluster_faces
from .frontend import FEATURE_KINDS, FeatureExtractor, frame_energy_db
from .speech_activity import (
    EnergySpeechDetector,
    PrecomputedSpeechDetector,
    detect_speech,
    smooth_to_segments,
)
from .speech_clustering import complete_linkage, recompute_cluster_embedding
from .structures import SpeakerTimeline, SpeechCluster
from .vlad import cosine_similarity_matrix, encode


@dataclass
class PipelineConfig:
    """Every tunable of the pipeline, flat so each key maps to one CLI flag."""

    feature: str = "logmel"
    sample_rate_hz: int = 16000
    frame_length_s: float = 0.025
    hop_s: float = 0.010
    fft_size: int = 512
    num_bands: int = 40
    min_freq_hz: float = 20.0
    max_freq_hz: float = 7600.0
    num_mfcc: int = 13
    log_floor: float = 1e-10
    sad: str = "energy"
    sad_file: Optional[str] = None
    sad_threshold: float = 0.5
    sad_margin_db: float = 9.0
    sad_absolute_db: float = -30.0
    sad_floor_percentile: float = 10.0
    min_segment_s: float = 1.0
    min_gap_s: float = 0.25
    vlad_k: int = 128
    vlad_power_norm: bool = False
    vlad_max_iter: int = 100
    vlad_tol: float = 1e-6
    speech_cluster_threshold: float = 0.75
    face_threshold: float = 0.85
    min_coverage: float = 0.0
    face_sample_rate_hz: Optional[float] = None
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(ok, msg):
            if not ok:
                raise ConfigError(msg)

        need(self.feature in FEATURE_KINDS, f"feature must be one of {FEATURE_KINDS}")
        need(self.sad in ("energy", "file"), "sad must be 'energy' or 'file'")
        need(self.sad != "file" or self.sad_file, "sad='file' needs sad_file")
        need(0.0 <= self.sad_threshold <= 1.0, "sad_threshold must be in [0, 1]")
        need(self.sad_margin_db >= 0, "sad_margin_db must be non-negative")
        need(0.0 <= self.sad_floor_percentile <= 100.0, "sad_floor_percentile must be in [0, 100]")
        need(abs(self.hop_s - 0.010) < 1e-12, "hop_s must be 0.010 (speech detection runs at 100 frames/s)")
        need(self.min_segment_s > 0 and self.min_gap_s > 0, "segment length and gap limits must be positive")
        need(self.vlad_k >= 1, "vlad_k must be >= 1")
        need(self.vlad_max_iter >= 1 and self.vlad_tol > 0, "vlad_max_iter >= 1 and vlad_tol > 0")
        need(-1.0 <= self.speech_cluster_threshold <= 1.0 + 1e-9, "speech_cluster_threshold must be in [-1, 1]")
        need(-1.0 <= self.face_threshold <= 1.0, "face_threshold must be in [-1, 1]")
        need(0.0 <= self.min_coverage <= 1.0, "min_coverage must be in [0, 1]")
        need(self.face_sample_rate_hz is None or self.face_sample_rate_hz > 0, "face_sample_rate_hz must be positive")
        need(self.jobs >= 1, "jobs must be >= 1")
        self.extractor()
        if self.feature != "power":
            self.extractor().mel_config.validate(self.sample_rate_hz)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**data)

    @classmethod
    def from_file(cls, path):
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self):
        return asdict(self)

    def extractor(self):
        try:
            ex = FeatureExtractor(
                kind=self.feature,
                frame_length_s=self.frame_length_s,
                hop_s=self.hop_s,
                fft_size=self.fft_size,
                sample_rate_hz=self.sample_rate_hz,
                num_bands=self.num_bands,
                min_freq_hz=self.min_freq_hz,
                max_freq_hz=self.max_freq_hz,
                num_mfcc=self.num_mfcc,
                log_floor=self.log_floor,
            )
            ex.frame_config
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return ex


@dataclass
class PipelineResult:
    timeline: SpeakerTimeline
    segments: list
    speech_clusters: list
    face_clusters: list
    merges: list = field(default_factory=list)
    cooccurrence: Optional[np.ndarray] = None


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, (StageError, FingerprintMismatch)):
            return False
        if isinstance(exc, (VoicefaceError, ValueError, KeyError, OSError)):
            raise StageError(self.name, exc) from exc
        return False


def check_fingerprint(codebook, fingerprint, dim):
    book = codebook.frontend_fingerprint
    if book != "unknown" and fingerprint and book != fingerprint:
        raise FingerprintMismatch(
            f"codebook was trained on front-end {book!r} but the input uses {fingerprint!r}"
        )
    if codebook.dim != dim:
        raise FingerprintMismatch(f"codebook dim {codebook.dim} does not match feature dim {dim}")


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def run_on_data(features, detections, codebook, config, posterior=None, sad_features=None):
    """Run every stage on in-memory inputs.

    Speech detection uses ``posterior`` when given, otherwise the energy
    detector on ``sad_features``.
    """
    check_fingerprint(codebook, features.fingerprint, features.dim)

    with _stage("speech_activity"):
        if posterior is None:
            if sad_features is None:
                raise ValueError("energy speech detection needs audio; pass a posterior instead")
            detector = EnergySpeechDetector(
                config.sad_margin_db, config.sad_absolute_db, config.sad_floor_percentile
            )
            posterior = detect_speech(sad_features, detector)
        segments = smooth_to_segments(
            posterior, config.sad_threshold, config.min_segment_s, config.min_gap_s
        )

    with _stage("vlad"):
        seg_feats = {s.segment_id: features.slice_time(s.start_s, s.end_s) for s in segments}
        embeddings = _map(
            lambda s: encode(seg_feats[s.segment_id], codebook, s.segment_id, config.vlad_power_norm),
            segments,
            config.jobs,
        )

    with _stage("speech_clustering"):
        merges = []
        speech_clusters = []
        if segments:
            X = np.vstack([e.vector for e in embeddings])
            groups, merges = complete_linkage(
                cosine_similarity_matrix(X), config.speech_cluster_threshold, [s.segment_id for s in segments]
            )
            speech_clusters = [SpeechCluster(cid, g) for cid, g in enumerate(groups)]
            for sc in speech_clusters:
                sc.embedding = recompute_cluster_embedding(sc, codebook, seg_feats, config.vlad_power_norm)

    with _stage("faces"):
        face_clusters = cluster_faces(detections, config.face_threshold, config.jobs)

    with _stage("association"):
        timeline = associate(
            speech_clusters, face_clusters, segments, config.min_coverage, config.face_sample_rate_hz
        )
        table = cooccurrence_table(speech_clusters, sorted(face_clusters, key=lambda f: f.cluster_id), segments)

    return PipelineResult(timeline, segments, speech_clusters, face_clusters, merges, table)


def write_diagnostics(result, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    seg_lines = ["segment_id\tstart_s\tend_s"]
    seg_lines += [f"{s.segment_id}\t{s.start_s!r}\t{s.end_s!r}" for s in result.segments]
    (d / "segments.tsv").write_text("\n".join(seg_lines) + "\n", encoding="utf-8")
    den = ["left\tright\tlinkage_similarity"]
    den += [
        f"{','.join(map(str, m.left))}\t{','.join(map(str, m.right))}\t{m.similarity!r}"
        for m in result.merges
    ]
    (d / "dendrogram.tsv").write_text("\n".join(den) + "\n", encoding="utf-8")
    faces = sorted(result.face_clusters, key=lambda f: f.cluster_id)
    scores = {
        "face_cluster_ids": [f.cluster_id for f in faces],
        "speech_clusters": [
            {
                "speech_cluster_id": sc.cluster_id,
                "segment_ids": list(sc.segment_ids),
                "face_counts": result.cooccurrence[i].tolist() if result.cooccurrence is not None else [],
            }
            for i, sc in enumerate(result.speech_clusters)
        ],
    }
    (d / "cluster_scores.json").write_text(json.dumps(scores, indent=1) + "\n", encoding="utf-8")
    face_obj = [
        {"cluster_id": f.cluster_id, "detection_indices": list(f.detection_indices)} for f in faces
    ]
    (d / "face_clusters.json").write_text(json.dumps(face_obj) + "\n", encoding="utf-8")
    (d / "summary.txt").write_text(speaker_summary(result.timeline) + "\n", encoding="utf-8")


def run_pipeline(face_track_path, codebook_path, config, audio_path=None, features_path=None,
                 out_path=None, diagnostics_dir=None):
    """Read inputs from disk, run all stages, write the timeline and diagnostics.

    Exactly one of ``audio_path`` and ``features_path`` must be given; a
    features file requires ``config.sad == "file"``.
    """
    if (audio_path is None) == (features_path is None):
        raise ConfigError("give exactly one of audio_path or features_path")
    with _stage("io"):
        codebook = io.read_codebook(codebook_path)
        detections = io.read_face_tracks(face_track_path)
    sad_features = None
    if audio_path is not None:
        extractor = config.extractor()
        check_fingerprint(codebook, extractor.fingerprint, extractor.n_features)
        with _stage("frontend"):
            audio = io.read_audio(audio_path)
            features = extractor.transform(audio)
            sad_features = frame_energy_db(audio, extractor.frame_config)
    else:
        with _stage("io"):
            features = io.read_features(features_path)
        if config.sad != "file":
            raise ConfigError("a features input has no audio for energy detection; use sad='file'")
    posterior = None
    if config.sad == "file":
        with _stage("speech_activity"):
            posterior = PrecomputedSpeechDetector(config.sad_file).predict_proba(features)
    result = run_on_data(features, detections, codebook, config, posterior, sad_features)
    if out_path is not None:
        with _stage("io"):
            io.write_timeline(result.timeline, out_path)
            diag = diagnostics_dir or Path(out_path).with_suffix("").as_posix() + "_diagnostics"
            write_diagnostics(result, diag)
    return result
