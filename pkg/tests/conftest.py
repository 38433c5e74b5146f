import functools

import numpy as np
import pytest

from voiceface.pipeline import PipelineConfig, run_on_data
from voiceface.structures import FACE_EMBEDDING_DIM, FaceDetection
from voiceface.synthetic import ScenarioConfig, face_cluster_identities, generate, score_against_truth
from voiceface.vlad import train_codebook

# Synthetic voices live in a 16-d feature space with one Gaussian per
# speaker; a small codebook resolves them far better than the 128-center
# default meant for real front-ends.
HARNESS_K = 8
TRAIN_SEEDS = tuple(range(1000, 1005))


@functools.lru_cache(maxsize=None)
def harness_codebook(k=HARNESS_K, separation=4.0, seed=0):
    """Codebook trained on speech frames of scenarios disjoint from the test seeds."""
    frames = []
    for s in TRAIN_SEEDS:
        sc = generate(ScenarioConfig(seed=s, voice_feature_separation=separation))
        frames.append(sc.features.frames[sc.posterior.probs >= 0.5])
    return train_codebook(np.concatenate(frames), k, seed=seed, fingerprint=sc.features.fingerprint)


def run_scenario(scenario, codebook, **config):
    cfg = PipelineConfig(vlad_k=codebook.n_clusters, **config)
    result = run_on_data(scenario.features, scenario.detections, codebook, cfg, posterior=scenario.posterior)
    mapping = face_cluster_identities(result.face_clusters, scenario.truth.detection_identities)
    return result, score_against_truth(result.timeline, scenario.truth, mapping)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def face(ts, embedding, frame=None, track_id=None):
    emb = np.zeros(FACE_EMBEDDING_DIM)
    emb[: len(embedding)] = embedding
    return FaceDetection(ts, int(round(ts * 25)) if frame is None else frame, (0.1, 0.1, 0.2, 0.2), emb, track_id)


def axis(i, scale=1.0):
    e = np.zeros(FACE_EMBEDDING_DIM)
    e[i] = scale
    return e


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance criteria register their outcome here; the lines are printed
# in the terminal summary so they show up once per run.
CRITERIA = {}


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
