import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import smoothing_reference
from voiceface.frontend import frame_energy_db
from voiceface.speech_activity import (
    EnergySpeechDetector,
    PrecomputedSpeechDetector,
    detect_speech,
    raw_runs,
    segments_to_indicator,
    smooth_to_segments,
)
from voiceface.structures import AudioBuffer, FeatureSequence, SpeechPosterior


def posterior_from_runs(runs_s, total_s):
    probs = np.zeros(int(round(total_s * 100)))
    for a, b in runs_s:
        probs[int(round(a * 100)) : int(round(b * 100))] = 1.0
    return SpeechPosterior(probs)


def spans(segments):
    return [(round(s.start_s, 6), round(s.end_s, 6)) for s in segments]


def test_small_gap_collapses():
    segs = smooth_to_segments(posterior_from_runs([(0.0, 1.5), (1.7, 3.0)], 4.0))
    assert spans(segs) == [(0.0, 3.0)]


def test_short_run_dropped():
    assert smooth_to_segments(posterior_from_runs([(0.0, 0.8)], 2.0)) == []


def test_merge_happens_before_length_filter():
    assert smooth_to_segments(posterior_from_runs([(0.0, 0.4), (0.5, 0.9)], 2.0)) == []
    # merged mass that reaches 1 s survives even though both pieces are short
    assert spans(smooth_to_segments(posterior_from_runs([(0.0, 0.6), (0.7, 1.2)], 2.0))) == [(0.0, 1.2)]


def test_gap_of_exactly_quarter_second_is_kept():
    segs = smooth_to_segments(posterior_from_runs([(0.0, 1.0), (1.25, 2.25)], 3.0))
    assert spans(segs) == [(0.0, 1.0), (1.25, 2.25)]


def test_threshold_is_inclusive():
    probs = np.full(150, 0.5)
    assert len(smooth_to_segments(SpeechPosterior(probs), on_threshold=0.5)) == 1
    assert smooth_to_segments(SpeechPosterior(probs), on_threshold=0.5000001) == []


def test_segment_times_offset_and_ids():
    post = SpeechPosterior(np.r_[np.ones(120), np.zeros(50), np.ones(130)], start_s=2.0)
    segs = smooth_to_segments(post)
    assert spans(segs) == [(2.0, 3.2), (3.7, 5.0)]
    assert [s.segment_id for s in segs] == [0, 1]


streams = st.lists(st.tuples(st.booleans(), st.integers(1, 160)), max_size=25)


def _expand(runs, rng_seed):
    r = np.random.default_rng(rng_seed)
    parts = [np.where(on, r.uniform(0.5, 1.0, n), r.uniform(0.0, 0.4999, n)) for on, n in runs]
    return np.concatenate(parts) if parts else np.zeros(0)


@settings(max_examples=200, deadline=None)
@given(streams, st.integers(0, 1000))
def test_matches_reference_and_invariants(runs, seed):
    probs = _expand(runs, seed)
    segs = smooth_to_segments(SpeechPosterior(probs))
    frames = [(int(round(s.start_s * 100)), int(round(s.end_s * 100))) for s in segs]
    assert frames == smoothing_reference(probs)
    for s in segs:
        assert s.duration_s >= 1.0 - 1e-9
    for a, b in zip(segs, segs[1:]):
        assert b.start_s - a.end_s >= 0.25 - 1e-9


@settings(max_examples=100, deadline=None)
@given(streams, st.integers(0, 1000))
def test_idempotent(runs, seed):
    probs = _expand(runs, seed)
    segs = smooth_to_segments(SpeechPosterior(probs))
    again = smooth_to_segments(segments_to_indicator(segs, len(probs)))
    assert spans(again) == spans(segs)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), max_size=300), st.floats(0, 1), st.floats(0, 1))
def test_raw_speech_monotone_in_threshold(probs, t1, t2):
    lo, hi = sorted((t1, t2))
    total = lambda t: sum(e - s for s, e in raw_runs(np.array(probs), t))  # noqa: E731
    assert total(hi) <= total(lo)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), max_size=300), st.floats(0.01, 1.0))
def test_raw_runs_cover_exactly_the_active_frames(probs, thr):
    probs = np.array(probs)
    mask = np.zeros(len(probs), dtype=bool)
    for s, e in raw_runs(probs, thr):
        assert not mask[s:e].any()
        mask[s:e] = True
    np.testing.assert_array_equal(mask, probs >= thr)


# ----------------------------------------------------------------- detectors


def energy_of(samples):
    return frame_energy_db(AudioBuffer(samples, 16000))


def test_energy_detector_on_silence():
    post = detect_speech(energy_of(np.zeros(16000)), EnergySpeechDetector())
    assert post.probs.size == 98
    assert not post.probs.any()


def test_energy_detector_on_full_scale_noise(rng):
    post = detect_speech(energy_of(rng.uniform(-1, 1, 16000)), EnergySpeechDetector())
    assert post.probs.all()


def test_energy_detector_finds_a_burst(rng):
    x = 1e-3 * rng.standard_normal(48000)
    x[16000:32000] += 0.1 * rng.standard_normal(16000)
    segs = smooth_to_segments(detect_speech(energy_of(x), EnergySpeechDetector()))
    assert len(segs) == 1
    assert segs[0].start_s == pytest.approx(1.0, abs=0.03)
    assert segs[0].end_s == pytest.approx(2.0, abs=0.03)


def test_energy_detector_needs_energy_features(rng):
    with pytest.raises(ValueError):
        EnergySpeechDetector().predict_proba(FeatureSequence(rng.random((10, 3)), 0.01, kind="logmel"))


def test_precomputed_detector_identity(tmp_path, rng):
    probs = rng.random(200)
    post = detect_speech(FeatureSequence(np.zeros((200, 2)), 0.01), PrecomputedSpeechDetector(SpeechPosterior(probs)))
    np.testing.assert_array_equal(post.probs, probs)
    path = tmp_path / "p.posterior"
    path.write_text("".join(f"{float(p)!r}\n" for p in probs))
    np.testing.assert_array_equal(PrecomputedSpeechDetector(str(path)).predict_proba().probs, probs)


def test_hop_mismatch_rejected():
    feats = FeatureSequence(np.zeros((10, 1)), 0.02, kind="energy_db")
    with pytest.raises(ValueError, match="hop"):
        detect_speech(feats, EnergySpeechDetector())
    with pytest.raises(ValueError, match="hop"):
        detect_speech(feats, PrecomputedSpeechDetector(SpeechPosterior(np.zeros(10))))


def test_posterior_range_enforced():
    with pytest.raises(ValueError):
        SpeechPosterior(np.array([0.2, 1.2]))
