import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voiceface.errors import ConfigError
from voiceface.frontend import (
    FeatureExtractor,
    FrameConfig,
    MelConfig,
    dct_matrix,
    frame_signal,
    hann_window,
    hz_to_mel,
    log_mel,
    mel_filterbank,
    mel_spectra,
    mel_to_hz,
    mfcc,
    power_spectrum,
)
from voiceface.structures import AudioBuffer


def naive_power(frame, n_fft):
    x = np.zeros(n_fft)
    x[: len(frame)] = frame
    k = np.arange(n_fft // 2 + 1)[:, None]
    n = np.arange(n_fft)[None, :]
    dft = (x * np.exp(-2j * np.pi * k * n / n_fft)).sum(axis=1)
    return np.abs(dft) ** 2


# ------------------------------------------------------------------- framing


def test_one_second_gives_98_frames():
    frames = frame_signal(AudioBuffer(np.ones(16000) * 0.1, 16000), FrameConfig())
    assert frames.shape == (98, 400)


def test_exactly_one_frame():
    assert frame_signal(AudioBuffer(np.ones(400) * 0.1, 16000), FrameConfig()).shape == (1, 400)


def test_shorter_than_frame_errors():
    with pytest.raises(ValueError):
        frame_signal(AudioBuffer(np.ones(399) * 0.1, 16000), FrameConfig())


def test_zero_audio_zero_frames():
    assert not frame_signal(AudioBuffer(np.zeros(2000), 16000), FrameConfig()).any()


def test_frames_are_hann_windowed(rng):
    x = rng.uniform(-1, 1, 1000)
    frames = frame_signal(AudioBuffer(x, 16000), FrameConfig())
    np.testing.assert_array_equal(frames[2], x[320:720] * hann_window(400))


@settings(max_examples=50, deadline=None)
@given(st.integers(400, 5000))
def test_frame_count_formula(n):
    assert len(frame_signal(AudioBuffer(np.zeros(n), 16000), FrameConfig())) == (n - 400) // 160 + 1


@pytest.mark.parametrize(
    "kwargs",
    [dict(hop_s=0.0), dict(hop_s=0.03), dict(fft_size=500), dict(fft_size=256), dict(sample_rate_hz=0)],
)
def test_frame_config_invariants(kwargs):
    with pytest.raises(ConfigError):
        FrameConfig(**kwargs)


# ------------------------------------------------------------------ spectrum


def test_zero_frame_zero_spectrum():
    assert not power_spectrum(np.zeros(400), 512).any()


def test_power_spectrum_matches_naive_dft(rng):
    for _ in range(5):
        frame = rng.standard_normal(512)
        fast, slow = power_spectrum(frame, 512), naive_power(frame, 512)
        assert fast.shape == (257,)
        np.testing.assert_allclose(fast, slow, rtol=1e-6, atol=1e-9 * slow.max())


def test_bin_centred_sinusoid_concentrates_energy():
    n_fft, k0 = 512, 40
    t = np.arange(n_fft)
    frame = np.sin(2 * np.pi * k0 * t / n_fft)
    p = power_spectrum(frame, n_fft)
    np.testing.assert_allclose(p, naive_power(frame, n_fft), rtol=1e-6, atol=1e-6)
    assert p[k0] / p.sum() >= 0.99
    # with a Hann window the leakage lands on the two neighbouring bins only
    windowed = power_spectrum(frame * hann_window(n_fft), n_fft)
    assert windowed[k0 - 1 : k0 + 2].sum() / windowed.sum() >= 0.99


def test_parseval(rng):
    frame = rng.standard_normal(400) * hann_window(400)
    p = power_spectrum(frame, 512)
    total = p[0] + p[-1] + 2 * p[1:-1].sum()
    assert total == pytest.approx(512 * np.sum(frame**2), rel=1e-6)


def test_power_spectrum_non_negative(rng):
    assert (power_spectrum(rng.standard_normal((20, 512)), 512) >= 0).all()


# ----------------------------------------------------------------------- mel


def test_mel_of_1000_hz():
    assert float(hz_to_mel(1000.0)) == pytest.approx(2595 * np.log10(1 + 1000 / 700))
    assert float(hz_to_mel(1000.0)) == pytest.approx(999.99, abs=0.01)
    assert float(mel_to_hz(hz_to_mel(1234.5))) == pytest.approx(1234.5)


def test_filters_peak_at_one_near_centre():
    cfg = MelConfig()
    fb = mel_filterbank(cfg, 512, 16000)
    assert fb.shape == (40, 257)
    np.testing.assert_allclose(fb.max(axis=1), 1.0)
    assert (fb >= 0).all()
    centres = mel_to_hz(np.linspace(hz_to_mel(20.0), hz_to_mel(7600.0), 42))[1:-1]
    bin_hz = 16000 / 512
    assert np.all(np.abs(np.argmax(fb, axis=1) * bin_hz - centres) <= bin_hz)


def test_mel_of_zero_spectrum_is_zero():
    assert not mel_spectra(np.zeros(257), MelConfig()).any()


def test_mel_band_is_dot_product(rng):
    power = rng.random(257)
    fb = mel_filterbank(MelConfig(), 512, 16000)
    np.testing.assert_allclose(mel_spectra(power, MelConfig()), [row @ power for row in fb])


@pytest.mark.parametrize(
    "kwargs", [dict(min_freq_hz=9000.0), dict(max_freq_hz=9000.0), dict(num_mfcc=41), dict(num_mfcc=0)]
)
def test_mel_config_invariants(kwargs):
    with pytest.raises(ConfigError):
        MelConfig(**kwargs).validate(16000)


# ------------------------------------------------------------ log-mel, MFCC


def test_log_mel_fixed_points():
    eps = 1e-10
    assert log_mel(np.array([np.e - eps]), eps)[0] == pytest.approx(1.0, abs=1e-15)
    assert log_mel(np.zeros(1), eps)[0] == np.log(eps)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1e6), st.floats(0, 1e6))
def test_log_mel_monotone(a, b):
    lo, hi = sorted((a, b))
    assert log_mel(np.array([lo]))[0] <= log_mel(np.array([hi]))[0]


def test_dct_orthonormal():
    m = dct_matrix(40, 40)
    np.testing.assert_allclose(m @ m.T, np.eye(40), atol=1e-10)


def test_mfcc_of_constant_vector():
    c = mfcc(np.full(40, 3.0), 13)
    assert c[0] == pytest.approx(3.0 * np.sqrt(40))
    np.testing.assert_allclose(c[1:], 0.0, atol=1e-12)


def test_full_dct_round_trip(rng):
    x = rng.standard_normal(40)
    np.testing.assert_allclose(dct_matrix(40, 40).T @ mfcc(x, 40), x, atol=1e-8)


def test_mfcc_too_many_coefficients():
    with pytest.raises(ValueError):
        mfcc(np.zeros(10), 11)


# --------------------------------------------------------------- extractor


@pytest.mark.parametrize("kind,dim", [("power", 257), ("mel", 40), ("logmel", 40), ("mfcc", 13)])
def test_extractor_dims(rng, kind, dim):
    audio = AudioBuffer(rng.uniform(-0.5, 0.5, 8000), 16000)
    ex = FeatureExtractor(kind=kind).fit()
    feats = ex.transform(audio)
    assert feats.frames.shape == ((8000 - 400) // 160 + 1, dim)
    assert ex.n_features == dim
    assert feats.hop_s == 0.01
    assert feats.fingerprint == ex.fingerprint
    assert np.isfinite(feats.frames).all()


def test_extractor_deterministic(rng):
    audio = AudioBuffer(rng.uniform(-0.5, 0.5, 4000), 16000)
    a = FeatureExtractor(kind="mfcc").transform(audio).frames
    b = FeatureExtractor(kind="mfcc").transform(audio).frames
    assert a.tobytes() == b.tobytes()


def test_extractor_pipeline_consistency(rng):
    audio = AudioBuffer(rng.uniform(-0.5, 0.5, 4000), 16000)
    frames = frame_signal(audio, FrameConfig())
    expected = mfcc(log_mel(mel_spectra(power_spectrum(frames, 512), MelConfig())), 13)
    np.testing.assert_allclose(FeatureExtractor(kind="mfcc").transform(audio).frames, expected)


def test_fingerprint_tracks_parameters():
    base = FeatureExtractor()
    assert base.fingerprint == FeatureExtractor().fingerprint
    assert base.fingerprint != FeatureExtractor(num_bands=32).fingerprint
    assert base.fingerprint != FeatureExtractor(kind="mel").fingerprint
    # MFCC count is irrelevant to log-mel features
    assert base.fingerprint == FeatureExtractor(num_mfcc=20).fingerprint


def test_extractor_rejects_bad_config_and_rate(rng):
    with pytest.raises(ConfigError):
        FeatureExtractor(kind="carfac").fit()
    with pytest.raises(ConfigError):
        FeatureExtractor().transform(AudioBuffer(np.zeros(1000), 8000))


def test_extractor_sklearn_params():
    ex = FeatureExtractor(kind="mfcc", num_mfcc=20)
    assert ex.get_params()["num_mfcc"] == 20
    assert ex.set_params(num_bands=30).num_bands == 30
