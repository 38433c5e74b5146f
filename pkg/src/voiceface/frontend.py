"""Frame-level spectral features: power spectrum, Mel spectra, log-Mel, MFCC."""

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ConfigError
from .structures import AudioBuffer, FeatureSequence

FEATURE_KINDS = ("power", "mel", "logmel", "mfcc")


@dataclass(frozen=True)
class FrameConfig:
    frame_length_s: float = 0.025
    hop_s: float = 0.010
    fft_size: int = 512
    sample_rate_hz: int = 16000

    def __post_init__(self):
        if not 0 < self.hop_s <= self.frame_length_s:
            raise ConfigError("need 0 < hop_s <= frame_length_s")
        if self.sample_rate_hz <= 0:
            raise ConfigError("sample_rate_hz must be positive")
        if self.fft_size < 1 or self.fft_size & (self.fft_size - 1):
            raise ConfigError("fft_size must be a power of two")
        if self.fft_size < self.frame_length:
            raise ConfigError("fft_size must be at least the frame length in samples")

    @property
    def frame_length(self):
        return int(round(self.frame_length_s * self.sample_rate_hz))

    @property
    def hop_length(self):
        return int(round(self.hop_s * self.sample_rate_hz))


@dataclass(frozen=True)
class MelConfig:
    num_bands: int = 40
    min_freq_hz: float = 20.0
    max_freq_hz: float = 7600.0
    num_mfcc: int = 13
    log_floor: float = 1e-10

    def validate(self, sample_rate_hz):
        if not 0 <= self.min_freq_hz < self.max_freq_hz <= sample_rate_hz / 2:
            raise ConfigError("need 0 <= min_freq_hz < max_freq_hz <= sample_rate_hz / 2")
        if not self.num_bands >= self.num_mfcc >= 1:
            raise ConfigError("need num_bands >= num_mfcc >= 1")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")


def hann_window(n):
    """Periodic Hann window of length ``n``."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(audio, cfg):
    """Slice ``audio`` into Hann-windowed frames, shape ``(n_frames, frame_length)``."""
    x = audio.samples
    n, hop = cfg.frame_length, cfg.hop_length
    if x.size < n:
        raise ValueError(f"audio has {x.size} samples, shorter than one frame ({n})")
    n_frames = (x.size - n) // hop + 1
    idx = np.arange(n)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx] * hann_window(n)


def power_spectrum(frames, fft_size):
    """``|DFT_k|**2`` for ``k = 0 .. fft_size/2``; works on one frame or a stack."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[-1] > fft_size:
        raise ValueError("frame longer than fft_size")
    spec = np.fft.rfft(frames, n=fft_size, axis=-1)
    return spec.real**2 + spec.imag**2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(mel, fft_size, sample_rate_hz):
    """Triangular filters, shape ``(num_bands, fft_size//2 + 1)``.

    Centers are equally spaced on the mel scale. Each filter is scaled so
    its largest weight is exactly 1.0.
    """
    mel.validate(sample_rate_hz)
    edges = mel_to_hz(
        np.linspace(hz_to_mel(mel.min_freq_hz), hz_to_mel(mel.max_freq_hz), mel.num_bands + 2)
    )
    bins = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins - lo) / (mid - lo)
    falling = (hi - bins) / (hi - mid)
    fb = np.clip(np.minimum(rising, falling), 0.0, None)
    peaks = fb.max(axis=1)
    if np.any(peaks <= 0):
        raise ConfigError("some mel filters contain no FFT bin; use fewer bands or a larger fft_size")
    return fb / peaks[:, None]


def mel_spectra(power, mel, fft_size=512, sample_rate_hz=16000, filterbank=None):
    fb = mel_filterbank(mel, fft_size, sample_rate_hz) if filterbank is None else filterbank
    return np.asarray(power) @ fb.T


def log_mel(mel_vec, floor=1e-10):
    return np.log(np.asarray(mel_vec, dtype=np.float64) + floor)


def dct_matrix(n_out, n_in):
    """Rows of the orthonormal DCT-II basis: ``y = M @ x``."""
    k = np.arange(n_out)[:, None]
    n = np.arange(n_in)[None, :]
    m = np.cos(np.pi * k * (2 * n + 1) / (2 * n_in)) * np.sqrt(2.0 / n_in)
    m[0] /= np.sqrt(2.0)
    return m


def mfcc(log_mel_vec, num_mfcc):
    log_mel_vec = np.asarray(log_mel_vec, dtype=np.float64)
    n_bands = log_mel_vec.shape[-1]
    if num_mfcc > n_bands:
        raise ValueError("num_mfcc cannot exceed the number of mel bands")
    return log_mel_vec @ dct_matrix(num_mfcc, n_bands).T


def frame_energy_db(audio, cfg=None, floor=1e-10):
    """Mean power of each windowed frame in dB, as a 1-d feature sequence."""
    cfg = cfg or FrameConfig(sample_rate_hz=audio.sample_rate_hz)
    frames = frame_signal(audio, cfg)
    energy = 10.0 * np.log10(np.mean(frames**2, axis=1) + floor)
    return FeatureSequence(energy[:, None], cfg.hop_s, 0.0, kind="energy_db")


class FeatureExtractor(BaseEstimator, TransformerMixin):
    """Stateless audio-to-features transformer.

    Parameters
    ----------
    kind : {"power", "mel", "logmel", "mfcc"}
    frame_length_s, hop_s, fft_size, sample_rate_hz :
        Framing; see :class:`FrameConfig`.
    num_bands, min_freq_hz, max_freq_hz, num_mfcc, log_floor :
        Mel analysis; see :class:`MelConfig`.
    """

    def __init__(
        self,
        kind="logmel",
        frame_length_s=0.025,
        hop_s=0.010,
        fft_size=512,
        sample_rate_hz=16000,
        num_bands=40,
        min_freq_hz=20.0,
        max_freq_hz=7600.0,
        num_mfcc=13,
        log_floor=1e-10,
    ):
        self.kind = kind
        self.frame_length_s = frame_length_s
        self.hop_s = hop_s
        self.fft_size = fft_size
        self.sample_rate_hz = sample_rate_hz
        self.num_bands = num_bands
        self.min_freq_hz = min_freq_hz
        self.max_freq_hz = max_freq_hz
        self.num_mfcc = num_mfcc
        self.log_floor = log_floor

    @property
    def frame_config(self):
        return FrameConfig(self.frame_length_s, self.hop_s, self.fft_size, self.sample_rate_hz)

    @property
    def mel_config(self):
        return MelConfig(self.num_bands, self.min_freq_hz, self.max_freq_hz, self.num_mfcc, self.log_floor)

    @property
    def fingerprint(self):
        """Short stable hash of every parameter that changes the features."""
        params = {"kind": self.kind, **asdict(self.frame_config)}
        if self.kind != "power":
            params.update(asdict(self.mel_config))
        if self.kind in ("power", "mel"):
            params.pop("log_floor", None)
        if self.kind != "mfcc":
            params.pop("num_mfcc", None)
        blob = json.dumps(params, sort_keys=True).encode()
        return f"{self.kind}-{hashlib.sha256(blob).hexdigest()[:16]}"

    @property
    def n_features(self):
        return {
            "power": self.fft_size // 2 + 1,
            "mel": self.num_bands,
            "logmel": self.num_bands,
            "mfcc": self.num_mfcc,
        }[self.kind]

    def _check(self):
        if self.kind not in FEATURE_KINDS:
            raise ConfigError(f"unknown feature kind {self.kind!r}; choose from {FEATURE_KINDS}")
        self.frame_config
        if self.kind != "power":
            self.mel_config.validate(self.sample_rate_hz)

    def fit(self, X=None, y=None):
        self._check()
        return self

    def transform(self, audio):
        """Features for one :class:`AudioBuffer`."""
        if not isinstance(audio, AudioBuffer):
            raise TypeError("transform expects an AudioBuffer")
        self._check()
        if audio.sample_rate_hz != self.sample_rate_hz:
            raise ConfigError(
                f"audio is {audio.sample_rate_hz} Hz but the front-end expects {self.sample_rate_hz} Hz"
            )
        feats = power_spectrum(frame_signal(audio, self.frame_config), self.fft_size)
        if self.kind != "power":
            fb = mel_filterbank(self.mel_config, self.fft_size, self.sample_rate_hz)
            feats = mel_spectra(feats, self.mel_config, filterbank=fb)
        if self.kind in ("logmel", "mfcc"):
            feats = log_mel(feats, self.log_floor)
        if self.kind == "mfcc":
            feats = mfcc(feats, self.num_mfcc)
        return FeatureSequence(feats, self.hop_s, 0.0, kind=self.kind, fingerprint=self.fingerprint)
