"""Labelled synthetic conversations: features or audio, face tracks, truth.

Each speaker has a Gaussian voice in feature space (``mode="features"``)
or a formant-filtered pulse-train timbre (``mode="waveform"``), plus a
unit-norm 128-d face prototype.  Turns follow a random speaker schedule;
within a turn a Poisson cut process switches shots, each showing the
speaker with probability ``camera_on_speaker_prob``.
"""

from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Tuple

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError
from .frontend import FeatureExtractor
from .structures import (
    FACE_EMBEDDING_DIM,
    OFF_SCREEN,
    AudioBuffer,
    FaceDetection,
    FeatureSequence,
    GroundTruth,
    SpeakerTimeline,
    SpeechPosterior,
    TimelineEntry,
    Turn,
)

FRAME_S = 0.01
VIDEO_FPS = 25.0


@dataclass(frozen=True)
class ScenarioConfig:
    num_speakers: int = 5
    num_turns: int = 20
    turn_length_s: Tuple[float, float] = (2.0, 5.0)
    gap_s: Tuple[float, float] = (0.3, 1.0)
    camera_on_speaker_prob: float = 0.9
    camera_cut_rate_hz: float = 0.5
    face_noise_sigma: float = 0.05
    voice_feature_separation: float = 4.0
    face_sample_rate_hz: float = 5.0
    offscreen_prob: float = 0.0
    seed: int = 0
    other_face_prob: float = 0.7
    two_shot_prob: float = 0.0
    num_extras: int = 0
    min_face_angle_deg: float = 60.0
    feature_dim: int = 16
    mode: str = "features"
    sample_rate_hz: int = 16000

    def __post_init__(self):
        for name in ("camera_on_speaker_prob", "offscreen_prob", "other_face_prob", "two_shot_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be a probability")
        for name in ("turn_length_s", "gap_s"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"{name} must be a positive (low, high) range")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.num_speakers < 1 or self.num_turns < 1:
            raise ConfigError("need at least one speaker and one turn")
        if self.camera_cut_rate_hz < 0 or self.face_sample_rate_hz <= 0:
            raise ConfigError("rates must be positive")
        if self.face_noise_sigma < 0 or self.voice_feature_separation < 0:
            raise ConfigError("noise and separation must be non-negative")
        if self.mode not in ("features", "waveform"):
            raise ConfigError("mode must be 'features' or 'waveform'")
        if self.mode == "features" and self.feature_dim < self.num_speakers + 1:
            raise ConfigError("feature_dim must exceed num_speakers")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("turn_length_s", "gap_s"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_dict(self):
        d = asdict(self)
        d["turn_length_s"] = list(self.turn_length_s)
        d["gap_s"] = list(self.gap_s)
        return d


@dataclass(eq=False)
class Scenario:
    """Everything :func:`generate` produces.

    ``posterior`` is a near-perfect speech posterior derived from the turns
    (for runs that bypass acoustic speech detection); ``audio`` is set only
    in waveform mode.
    """

    features: FeatureSequence
    detections: list
    truth: GroundTruth
    posterior: SpeechPosterior
    config: ScenarioConfig
    audio: Optional[AudioBuffer] = None
    face_prototypes: np.ndarray = field(default=None, repr=False)


def face_prototypes(n, rng, min_angle_deg=60.0, dim=FACE_EMBEDDING_DIM, max_tries=1000):
    """``n`` random unit vectors with pairwise angles of at least ``min_angle_deg``."""
    max_cos = np.cos(np.deg2rad(min_angle_deg))
    protos = []
    for _ in range(max_tries * max(n, 1)):
        if len(protos) == n:
            break
        v = rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        if all(abs(v @ p) <= max_cos for p in protos):
            protos.append(v)
    if len(protos) < n:
        raise ConfigError(f"could not place {n} face prototypes {min_angle_deg} degrees apart")
    return np.array(protos)


def noisy_face(prototype, sigma, rng):
    """Prototype plus isotropic noise whose expected norm is about ``sigma``."""
    return prototype + rng.standard_normal(prototype.size) * (sigma / np.sqrt(prototype.size))


def _schedule(cfg, rng):
    lead = round(float(rng.uniform(*cfg.gap_s)), 2)
    t = lead
    turns = []
    prev = None
    for _ in range(cfg.num_turns):
        if cfg.num_speakers == 1:
            spk = 0
        else:
            choices = [s for s in range(cfg.num_speakers) if s != prev]
            spk = int(rng.choice(choices))
        length = round(float(rng.uniform(*cfg.turn_length_s)), 2)
        turns.append((t, round(t + length, 2), spk))
        prev = spk
        t = round(t + length + float(rng.uniform(*cfg.gap_s)), 2)
    return turns, round(t, 2)


def _shots(start, end, rate, rng):
    cuts = [start]
    if rate > 0:
        t = start + rng.exponential(1.0 / rate)
        while t < end:
            cuts.append(t)
            t += rng.exponential(1.0 / rate)
    cuts.append(end)
    return list(zip(cuts[:-1], cuts[1:]))


def _random_box(rng):
    w = float(rng.uniform(0.1, 0.3))
    h = float(rng.uniform(0.15, 0.4))
    return (float(rng.uniform(0, 1 - w)), float(rng.uniform(0, 1 - h)), w, h)


def _faces(cfg, turns, rng, protos, has_face):
    """Face detections and their identities, time-sorted."""
    identities = [s for s in range(cfg.num_speakers) if has_face[s]]
    identities += list(range(cfg.num_speakers, cfg.num_speakers + cfg.num_extras))
    records = []
    period = 1.0 / cfg.face_sample_rate_hz
    for start, end, spk in turns:
        for s0, s1 in _shots(start, end, cfg.camera_cut_rate_hz, rng):
            others = [i for i in identities if i != spk]
            shown = []
            if has_face[spk] and rng.random() < cfg.camera_on_speaker_prob:
                shown.append(spk)
                if others and rng.random() < cfg.two_shot_prob:
                    shown.append(int(rng.choice(others)))
            elif others and rng.random() < cfg.other_face_prob:
                shown.append(int(rng.choice(others)))
            boxes = {ident: _random_box(rng) for ident in shown}
            k0 = int(np.ceil(round(s0 / period, 9)))
            k = k0
            while k * period < s1:
                ts = round(k * period, 6)
                for ident in shown:
                    emb = noisy_face(protos[ident], cfg.face_noise_sigma, rng)
                    records.append((ts, ident, boxes[ident], emb))
                k += 1
    records.sort(key=lambda r: r[0])
    detections = [
        FaceDetection(ts, int(round(ts * VIDEO_FPS)), box, emb) for ts, _, box, emb in records
    ]
    return detections, [r[1] for r in records]


def _indicator(turns, n_frames):
    speech = np.zeros(n_frames, dtype=bool)
    for start, end, _ in turns:
        speech[int(round(start / FRAME_S)):int(round(end / FRAME_S))] = True
    return speech


def _feature_frames(cfg, turns, n_frames, rng):
    d, s = cfg.feature_dim, cfg.num_speakers
    basis, _ = np.linalg.qr(rng.standard_normal((d, s + 1)))
    means = basis[:, :s].T * (cfg.voice_feature_separation / np.sqrt(2.0))
    silence = basis[:, s] * (cfg.voice_feature_separation + 3.0)
    frames = silence + 0.1 * rng.standard_normal((n_frames, d))
    for start, end, spk in turns:
        lo, hi = int(round(start / FRAME_S)), int(round(end / FRAME_S))
        frames[lo:hi] = means[spk] + rng.standard_normal((hi - lo, d))
    return FeatureSequence(frames, FRAME_S, 0.0, kind="synthetic", fingerprint=f"synthetic-d{d}")


def _resonator(freq, bandwidth, sr):
    r = np.exp(-np.pi * bandwidth / sr)
    theta = 2 * np.pi * freq / sr
    return [1 - r], [1.0, -2 * r * np.cos(theta), r * r]


def _voice(cfg, duration_s, spk_params, rng):
    sr = cfg.sample_rate_hz
    n = int(round(duration_s * sr))
    f0, formants = spk_params
    t = np.arange(n) / sr
    phase = np.cumsum(f0 * (1 + 0.03 * np.sin(2 * np.pi * 0.7 * t)) / sr)
    pulses = (np.diff(np.floor(phase), prepend=0) > 0).astype(float)
    src = pulses + 0.05 * rng.standard_normal(n)
    out = np.zeros(n)
    for freq, bw in formants:
        b, a = _resonator(freq, bw, sr)
        out += lfilter(b, a, src)
    env = 0.65 + 0.35 * np.sin(2 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi))
    out *= env
    rms = np.sqrt(np.mean(out**2)) or 1.0
    return out * (0.1 / rms)


def _waveform(cfg, turns, duration, rng):
    sr = cfg.sample_rate_hz
    n = int(round(duration * sr))
    audio = 1e-3 * rng.standard_normal(n)
    spread = cfg.voice_feature_separation
    base = [(600.0, 80.0), (1500.0, 120.0), (2800.0, 180.0)]
    params = []
    for _ in range(cfg.num_speakers):
        f0 = 140.0 * np.exp(0.08 * spread * rng.standard_normal())
        formants = [(f * np.exp(0.04 * spread * rng.standard_normal()), bw) for f, bw in base]
        params.append((f0, formants))
    for start, end, spk in turns:
        lo, hi = int(round(start * sr)), int(round(end * sr))
        audio[lo:hi] = _voice(cfg, (hi - lo) / sr, params[spk], rng)
    return AudioBuffer(np.clip(audio, -1.0, 1.0), sr)


def generate(config):
    """Build one deterministic scenario from ``config``."""
    cfg = config if isinstance(config, ScenarioConfig) else ScenarioConfig.from_dict(config)
    rng = np.random.default_rng(cfg.seed)
    turns, duration = _schedule(cfg, rng)
    n_frames = int(round(duration / FRAME_S))
    protos = face_prototypes(cfg.num_speakers + cfg.num_extras, rng, cfg.min_face_angle_deg)
    has_face = [bool(rng.random() >= cfg.offscreen_prob) for _ in range(cfg.num_speakers)]
    detections, idents = _faces(cfg, turns, rng, protos, has_face)

    speech = _indicator(turns, n_frames)
    noise = 0.03 * rng.standard_normal(n_frames)
    probs = np.clip(np.where(speech, 0.9, 0.1) + noise, 0.0, 1.0)
    posterior = SpeechPosterior(probs)

    audio = None
    if cfg.mode == "features":
        features = _feature_frames(cfg, turns, n_frames, rng)
    else:
        audio = _waveform(cfg, turns, duration, rng)
        features = FeatureExtractor(sample_rate_hz=cfg.sample_rate_hz).transform(audio)

    times = np.array([d.timestamp_s for d in detections])
    ids = np.array(idents, dtype=int)
    truth_turns = []
    for start, end, spk in turns:
        inside = (times >= start) & (times < end)
        truth_turns.append(Turn(start, end, spk, bool(np.any(ids[inside] == spk))))
    shown = set(idents)
    face_map = {s: s for s in range(cfg.num_speakers) if has_face[s] and s in shown}
    truth = GroundTruth(truth_turns, face_map, duration, idents)
    return Scenario(features, detections, truth, posterior, cfg, audio, protos)


# ------------------------------------------------------------------- scoring


def face_cluster_identities(face_clusters, detection_identities):
    """Majority true identity behind each face cluster id."""
    mapping = {}
    for fc in face_clusters:
        votes = np.bincount([detection_identities[i] for i in fc.detection_indices])
        mapping[fc.cluster_id] = int(np.argmax(votes))
    return mapping


def truth_timeline(truth):
    """The ground truth itself expressed as a speaker timeline (face ids = identities)."""
    entries = []
    for t in truth.turns:
        face = truth.speaker_face_map.get(t.speaker_id)
        assignment = face if (t.onscreen and face is not None) else OFF_SCREEN
        entries.append(TimelineEntry(t.start_s, t.end_s, t.speaker_id, assignment))
    return SpeakerTimeline(entries)


def random_assignment_timeline(truth, identities, seed=0):
    """Control: each true turn given a face identity drawn uniformly from ``identities``."""
    rng = np.random.default_rng(seed)
    identities = list(identities)
    entries = [
        TimelineEntry(t.start_s, t.end_s, i, int(identities[rng.integers(len(identities))]))
        for i, t in enumerate(truth.turns)
    ]
    return SpeakerTimeline(entries)


@dataclass(frozen=True)
class TruthScore:
    accuracy: float
    n_segments: int
    n_correct: int
    speech_precision: float
    speech_recall: float
    cluster_purity: float

    def as_dict(self):
        return asdict(self)


def _overlap(a0, a1, b0, b1):
    return max(0.0, min(a1, b1) - max(a0, b0))


def score_against_truth(predicted, truth, face_identity=None):
    """Segment accuracy plus speech-detection and cluster-purity figures.

    A predicted entry is correct when, over at least half of its overlap
    with true turns, its face maps to the true speaker's identity (or it is
    ``OFF_SCREEN`` while the true turn is off-screen).  Entries that
    overlap no true turn are wrong.  ``face_identity`` maps face cluster
    ids to identities; without it face ids are taken as identities.
    """
    if predicted.entries and predicted.entries[-1].end_s > truth.duration_s + FRAME_S:
        raise ValueError(
            f"prediction runs to {predicted.entries[-1].end_s}s but truth lasts {truth.duration_s}s"
        )
    n_correct = 0
    cluster_mass = {}
    for e in predicted.entries:
        total = matched = 0.0
        if e.off_screen:
            ident = None
        elif face_identity is None:
            ident = e.assignment
        else:
            ident = face_identity.get(e.assignment)
        for t in truth.turns:
            ov = _overlap(e.start_s, e.end_s, t.start_s, t.end_s)
            if ov <= 0:
                continue
            total += ov
            true_face = truth.speaker_face_map.get(t.speaker_id)
            if e.off_screen:
                hit = not t.onscreen
            else:
                hit = ident is not None and true_face is not None and ident == true_face
            matched += ov if hit else 0.0
            per = cluster_mass.setdefault(e.speech_cluster_id, {})
            per[t.speaker_id] = per.get(t.speaker_id, 0.0) + ov
        if total > 0 and matched >= 0.5 * total:
            n_correct += 1

    n_frames = int(round(truth.duration_s / FRAME_S)) + 1
    pred_mask = np.zeros(n_frames, dtype=bool)
    true_mask = np.zeros(n_frames, dtype=bool)
    for e in predicted.entries:
        pred_mask[int(round(e.start_s / FRAME_S)):int(round(e.end_s / FRAME_S))] = True
    for t in truth.turns:
        true_mask[int(round(t.start_s / FRAME_S)):int(round(t.end_s / FRAME_S))] = True
    tp = np.sum(pred_mask & true_mask)
    precision = tp / pred_mask.sum() if pred_mask.any() else float("nan")
    recall = tp / true_mask.sum() if true_mask.any() else float("nan")
    mass = sum(sum(v.values()) for v in cluster_mass.values())
    purity = sum(max(v.values()) for v in cluster_mass.values()) / mass if mass else float("nan")
    n = len(predicted.entries)
    return TruthScore(
        n_correct / n if n else float("nan"), n, n_correct, float(precision), float(recall), float(purity)
    )
