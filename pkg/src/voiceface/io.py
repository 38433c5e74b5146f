"""Readers and writers for every on-disk format.

All text formats are UTF-8 and line oriented.  Floats are written with
``repr`` so that ``read(write(x))`` reproduces every value bit for bit.

Face tracks (``*.faces``)::

    # voiceface-faces v1
    <timestamp_s> <frame_index> <x> <y> <w> <h> <e1> ... <e128> [<track_id>]

Timeline (``*.tsv``)::

    # voiceface-timeline v1
    start_s<TAB>end_s<TAB>speech_cluster_id<TAB>face_cluster_id
    0.5<TAB>2.75<TAB>0<TAB>3
    3.1<TAB>4.9<TAB>1<TAB>OFF_SCREEN

Speech posteriors: one probability per line at 100 values per second.

Ratings and pair labels are JSON lines::

    {"clip_id": "c1", "ratings": ["Correct", "Correct", "Unsure"]}
    {"embedding_a": [...], "embedding_b": [...], "same_speaker": true}

Codebooks are text: a ``# voiceface-codebook v1`` line, ``key value``
header lines for ``k``, ``d``, ``fingerprint`` and ``seed``, a ``centers``
line, then ``k`` rows of ``d`` floats.

Feature sequences are ``.npz`` archives and ground truth is JSON.
"""

import json
import wave
from pathlib import Path

import numpy as np

from .errors import (
    AudioFormatError,
    InputFormatError,
    RecordFormatError,
    UnsupportedChannelCount,
    UnsupportedEncoding,
)
from .structures import (
    FACE_EMBEDDING_DIM,
    OFF_SCREEN,
    AudioBuffer,
    FaceDetection,
    FeatureSequence,
    GroundTruth,
    PairLabel,
    RatingRecord,
    SpeakerTimeline,
    SpeechPosterior,
    TimelineEntry,
    Turn,
    VladCodebook,
)

PCM_SCALE = 32768.0

FACES_HEADER = "# voiceface-faces v1"
TIMELINE_HEADER = "# voiceface-timeline v1"
TIMELINE_COLUMNS = ("start_s", "end_s", "speech_cluster_id", "face_cluster_id")
CODEBOOK_HEADER = "# voiceface-codebook v1"


def _fmt(x):
    return repr(float(x))


def _require_file(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    return path


def _content_lines(path):
    """Yield ``(lineno, stripped_line)`` skipping blanks and ``#`` comments."""
    with open(_require_file(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line and not line.startswith("#"):
                yield lineno, line


# --------------------------------------------------------------------- audio


def read_audio(path):
    """Read a 16-bit mono PCM WAV file into an :class:`AudioBuffer`."""
    path = _require_file(path)
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        msg = str(exc)
        if "unknown format" in msg:
            raise UnsupportedEncoding(f"{path}: unsupported encoding ({msg})") from exc
        raise AudioFormatError(f"{path}: not a RIFF/WAVE file ({msg})") from exc
    except EOFError as exc:
        raise AudioFormatError(f"{path}: truncated WAV file") from exc
    if channels != 1:
        raise UnsupportedChannelCount(f"{path}: unsupported channel count {channels}")
    if width != 2:
        raise UnsupportedEncoding(f"{path}: unsupported encoding, {8 * width}-bit samples")
    ints = np.frombuffer(raw, dtype="<i2")
    if ints.size == 0:
        raise AudioFormatError(f"{path}: no audio samples")
    return AudioBuffer(ints.astype(np.float64) / PCM_SCALE, rate)


def write_audio(audio, path):
    """Write ``audio`` as 16-bit mono PCM, clipping to the int16 range."""
    ints = np.clip(np.round(audio.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate_hz)
        wf.writeframes(ints.tobytes())


# --------------------------------------------------------------- face tracks


def parse_face_line(line):
    tokens = line.split()
    n_fixed = 6 + FACE_EMBEDDING_DIM
    if len(tokens) not in (n_fixed, n_fixed + 1):
        n_emb = len(tokens) - 6
        raise ValueError(
            f"expected {FACE_EMBEDDING_DIM} embedding values, got {n_emb} "
            f"({len(tokens)} fields)"
        )
    values = [float(t) for t in tokens[:n_fixed]]
    track_id = int(tokens[n_fixed]) if len(tokens) > n_fixed else None
    frame = values[1]
    if frame != int(frame):
        raise ValueError(f"frame_index {tokens[1]!r} is not an integer")
    return FaceDetection(
        timestamp_s=values[0],
        frame_index=int(frame),
        bbox=tuple(values[2:6]),
        embedding=np.array(values[6:]),
        track_id=track_id,
    )


def read_face_tracks(path):
    """Read face detections, sorted by timestamp (stable on input order)."""
    detections = []
    for lineno, line in _content_lines(path):
        try:
            detections.append(parse_face_line(line))
        except ValueError as exc:
            raise RecordFormatError(path, lineno, exc) from exc
    return sorted(detections, key=lambda d: d.timestamp_s)


def format_face_line(det):
    fields = [_fmt(det.timestamp_s), str(det.frame_index)]
    fields += [_fmt(v) for v in det.bbox]
    fields += [_fmt(v) for v in det.embedding]
    if det.track_id is not None:
        fields.append(str(int(det.track_id)))
    return " ".join(fields)


def write_face_tracks(detections, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(FACES_HEADER + "\n")
        for det in detections:
            fh.write(format_face_line(det) + "\n")


# ------------------------------------------------------------------ timeline


def write_timeline(timeline, path):
    lines = [TIMELINE_HEADER, "\t".join(TIMELINE_COLUMNS)]
    for e in timeline.entries:
        face = OFF_SCREEN if e.off_screen else str(int(e.assignment))
        lines.append(f"{_fmt(e.start_s)}\t{_fmt(e.end_s)}\t{int(e.speech_cluster_id)}\t{face}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_timeline(path):
    path = _require_file(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if len(lines) < 2 or lines[0].strip() != TIMELINE_HEADER:
        raise RecordFormatError(path, 1, "missing timeline header")
    if tuple(lines[1].split("\t")) != TIMELINE_COLUMNS:
        raise RecordFormatError(path, 2, "unexpected timeline columns")
    entries = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split("\t")
        try:
            if len(parts) != 4:
                raise ValueError(f"expected 4 fields, got {len(parts)}")
            face = parts[3]
            assignment = OFF_SCREEN if face == OFF_SCREEN else int(face)
            entries.append(TimelineEntry(float(parts[0]), float(parts[1]), int(parts[2]), assignment))
        except ValueError as exc:
            raise RecordFormatError(path, lineno, exc) from exc
    try:
        return SpeakerTimeline(entries)
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------- posteriors


def read_posterior(path):
    probs = []
    for lineno, line in _content_lines(path):
        try:
            p = float(line)
        except ValueError as exc:
            raise RecordFormatError(path, lineno, exc) from exc
        if not 0.0 <= p <= 1.0:
            raise RecordFormatError(path, lineno, f"probability {p} outside [0, 1]")
        probs.append(p)
    return SpeechPosterior(np.array(probs, dtype=np.float64))


def write_posterior(posterior, path):
    body = "".join(_fmt(p) + "\n" for p in posterior.probs)
    Path(path).write_text(body, encoding="utf-8")


# ------------------------------------------------------------------- ratings


def read_ratings(path):
    records = []
    for lineno, line in _content_lines(path):
        try:
            obj = json.loads(line)
            records.append(RatingRecord(str(obj["clip_id"]), tuple(obj["ratings"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise RecordFormatError(path, lineno, exc) from exc
    return records


def write_ratings(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {"clip_id": r.clip_id, "ratings": [v.value for v in r.ratings]}
            fh.write(json.dumps(obj) + "\n")


# --------------------------------------------------------------- pair labels


def read_pairs(path):
    pairs = []
    for lineno, line in _content_lines(path):
        try:
            obj = json.loads(line)
            pairs.append(PairLabel(obj["embedding_a"], obj["embedding_b"], obj["same_speaker"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise RecordFormatError(path, lineno, exc) from exc
    return pairs


def write_pairs(pairs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            obj = {
                "embedding_a": p.embedding_a.tolist(),
                "embedding_b": p.embedding_b.tolist(),
                "same_speaker": p.same_speaker,
            }
            fh.write(json.dumps(obj) + "\n")


# ------------------------------------------------------------------ codebook


def write_codebook(codebook, path):
    k, d = codebook.centers.shape
    seed = "none" if codebook.seed is None else str(int(codebook.seed))
    lines = [
        CODEBOOK_HEADER,
        f"k {k}",
        f"d {d}",
        f"fingerprint {codebook.frontend_fingerprint}",
        f"seed {seed}",
        "centers",
    ]
    lines += [" ".join(_fmt(v) for v in row) for row in codebook.centers]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_codebook(path):
    path = _require_file(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != CODEBOOK_HEADER:
        raise RecordFormatError(path, 1, "missing codebook header")
    header = {}
    lineno = 1
    for lineno, line in enumerate(lines[1:], start=2):
        if line.strip() == "centers":
            break
        key, _, value = line.partition(" ")
        header[key] = value.strip()
    else:
        raise RecordFormatError(path, lineno, "missing 'centers' section")
    try:
        k, d = int(header["k"]), int(header["d"])
        seed = None if header.get("seed", "none") == "none" else int(header["seed"])
        fingerprint = header["fingerprint"]
    except (KeyError, ValueError) as exc:
        raise RecordFormatError(path, lineno, f"bad codebook header: {exc}") from exc
    rows = [ln for ln in lines[lineno:] if ln.strip()]
    if len(rows) != k:
        raise RecordFormatError(path, lineno, f"expected {k} center rows, got {len(rows)}")
    centers = np.array([[float(v) for v in row.split()] for row in rows])
    if centers.shape != (k, d):
        raise RecordFormatError(path, lineno, f"centers shape {centers.shape} != ({k}, {d})")
    return VladCodebook(centers, fingerprint, seed)


# ------------------------------------------------------------------ features


def write_features(features, path):
    with open(path, "wb") as fh:
        np.savez(
            fh,
            frames=features.frames,
            hop_s=np.float64(features.hop_s),
            start_s=np.float64(features.start_s),
            kind=np.str_(features.kind),
            fingerprint=np.str_(features.fingerprint or ""),
        )


def read_features(path):
    with np.load(_require_file(path), allow_pickle=False) as data:
        return FeatureSequence(
            frames=data["frames"],
            hop_s=float(data["hop_s"]),
            start_s=float(data["start_s"]),
            kind=str(data["kind"]),
            fingerprint=str(data["fingerprint"]) or None,
        )


# -------------------------------------------------------------- ground truth


def write_ground_truth(truth, path):
    obj = {
        "duration_s": truth.duration_s,
        "turns": [
            {"start_s": t.start_s, "end_s": t.end_s, "speaker_id": t.speaker_id, "onscreen": t.onscreen}
            for t in truth.turns
        ],
        "speaker_face_map": {str(k): v for k, v in sorted(truth.speaker_face_map.items())},
        "detection_identities": list(truth.detection_identities),
    }
    Path(path).write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")


def read_ground_truth(path):
    try:
        obj = json.loads(_require_file(path).read_text(encoding="utf-8"))
        return GroundTruth(
            turns=[Turn(t["start_s"], t["end_s"], int(t["speaker_id"]), bool(t["onscreen"])) for t in obj["turns"]],
            speaker_face_map={int(k): int(v) for k, v in obj["speaker_face_map"].items()},
            duration_s=float(obj["duration_s"]),
            detection_identities=obj.get("detection_identities", []),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise InputFormatError(f"{path}: bad ground-truth file: {exc}") from exc
