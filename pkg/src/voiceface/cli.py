"""Command-line entry point: ``voiceface {run|train|synth|eval|inspect}``."""

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigError, InputFormatError, VoicefaceError
from .evaluation import SCHEMES, DEFAULT_SCHEME, aggregate_ratings, fleiss_kappa, make_pairs, roc
from .frontend import frame_energy_db
from .pipeline import PipelineConfig, run_pipeline
from .speech_activity import EnergySpeechDetector, smooth_to_segments
from .structures import OFF_SCREEN, FaceCluster
from .synthetic import ScenarioConfig, generate, score_against_truth, face_cluster_identities
from .vlad import encode, train_codebook

EXIT_MISSING_FILE = 6


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _optional(kind):
    def parse(text):
        return None if text.lower() in ("none", "null", "") else kind(text)

    return parse


_OPTIONAL = {"sad_file": str, "face_sample_rate_hz": float}


def _flag_type(f):
    if f.name in _OPTIONAL:
        return _optional(_OPTIONAL[f.name])
    kind = type(f.default)
    return _parse_bool if kind is bool else kind


def add_config_flags(parser):
    """One ``--kebab-name`` flag per :class:`PipelineConfig` field."""
    group = parser.add_argument_group("pipeline configuration")
    group.add_argument("--config", help="JSON file of configuration keys")
    for f in fields(PipelineConfig):
        group.add_argument(
            "--" + f.name.replace("_", "-"),
            dest=f.name,
            type=_flag_type(f),
            default=argparse.SUPPRESS,
            help=f"(default: {f.default})",
        )


def config_from_args(args):
    data = {}
    if getattr(args, "config", None):
        data.update(PipelineConfig.from_file(args.config).to_dict())
    for f in fields(PipelineConfig):
        if hasattr(args, f.name):
            data[f.name] = getattr(args, f.name)
    return PipelineConfig.from_dict(data)


# ------------------------------------------------------------------- run


def cmd_run(args):
    config = config_from_args(args)
    result = run_pipeline(
        args.faces,
        args.codebook,
        config,
        audio_path=args.audio,
        features_path=args.features,
        out_path=args.out,
        diagnostics_dir=args.diagnostics,
    )
    n_off = sum(e.off_screen for e in result.timeline)
    print(
        f"{len(result.segments)} segments, {len(result.speech_clusters)} speech clusters, "
        f"{len(result.face_clusters)} face clusters, {n_off} off-screen entries -> {args.out}"
    )
    return 0


# ----------------------------------------------------------------- train


def _feature_files(paths):
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out += sorted(p.glob("*.npz")) + sorted(p.glob("*.wav"))
        else:
            out.append(p)
    if not out:
        raise InputFormatError("no .npz or .wav training inputs found")
    return out


def speech_frames(path, config):
    """Frames inside detected speech segments of one training input.

    ``.wav`` files go through the configured front-end and energy
    detector.  A ``.npz`` feature file uses ``<stem>.posterior`` next to it
    when present, else all of its frames.
    """
    if path.suffix == ".wav":
        audio = io.read_audio(path)
        extractor = config.extractor()
        feats = extractor.transform(audio)
        detector = EnergySpeechDetector(config.sad_margin_db, config.sad_absolute_db, config.sad_floor_percentile)
        posterior = detector.predict_proba(frame_energy_db(audio, extractor.frame_config))
    else:
        feats = io.read_features(path)
        post_path = path.with_suffix(".posterior")
        if not post_path.exists():
            return feats.frames, feats.fingerprint
        posterior = io.read_posterior(post_path)
    segs = smooth_to_segments(posterior, config.sad_threshold, config.min_segment_s, config.min_gap_s)
    parts = [feats.slice_time(s.start_s, s.end_s).frames for s in segs]
    frames = np.concatenate(parts) if parts else np.zeros((0, feats.dim))
    return frames, feats.fingerprint


def cmd_train(args):
    config = config_from_args(args)
    k = args.k if args.k is not None else config.vlad_k
    chunks, prints = [], set()
    for path in _feature_files(args.features):
        frames, fp = speech_frames(path, config)
        chunks.append(frames)
        if fp:
            prints.add(fp)
    if len(prints) > 1:
        raise ConfigError(f"training inputs mix front-ends: {sorted(prints)}")
    codebook = train_codebook(
        np.concatenate(chunks), k, config.seed, config.vlad_max_iter, config.vlad_tol, config.jobs,
        prints.pop() if prints else "unknown",
    )
    io.write_codebook(codebook, args.out)
    print(f"codebook K={codebook.n_clusters} D={codebook.dim} ({codebook.frontend_fingerprint}) -> {args.out}")
    return 0


# ----------------------------------------------------------------- synth


def write_scenario(scenario, directory, name="scenario"):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    stem = d / name
    io.write_features(scenario.features, stem.with_suffix(".npz"))
    io.write_posterior(scenario.posterior, stem.with_suffix(".posterior"))
    io.write_face_tracks(scenario.detections, stem.with_suffix(".faces"))
    io.write_ground_truth(scenario.truth, d / f"{name}.truth.json")
    if scenario.audio is not None:
        io.write_audio(scenario.audio, stem.with_suffix(".wav"))
    (d / f"{name}.config.json").write_text(json.dumps(scenario.config.to_dict(), indent=1) + "\n")
    return stem


def cmd_synth(args):
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read scenario config {args.config}: {exc}") from exc
    if args.seed is not None:
        data["seed"] = args.seed
    base = ScenarioConfig.from_dict(data)
    for i in range(args.count):
        cfg = ScenarioConfig.from_dict({**base.to_dict(), "seed": base.seed + i})
        name = args.name if args.count == 1 else f"{args.name}_{i:03d}"
        stem = write_scenario(generate(cfg), args.out, name)
        print(f"wrote {stem}.*")
    return 0


# ------------------------------------------------------------------ eval


def cmd_eval_roc(args):
    curve = roc(io.read_pairs(args.pairs))
    if args.out:
        Path(args.out).write_text(curve.to_csv(), encoding="utf-8")
    else:
        sys.stdout.write(curve.to_csv())
    print(f"AUC {curve.auc:.6f}", file=sys.stderr if not args.out else sys.stdout)
    return 0


def cmd_eval_kappa(args):
    print(f"fleiss_kappa {fleiss_kappa(io.read_ratings(args.ratings)):.6f}")
    return 0


def cmd_eval_aggregate(args):
    records = io.read_ratings(args.ratings)
    names = sorted(SCHEMES) if args.scheme == "all" else [args.scheme]
    for name in names:
        print(aggregate_ratings(records, name))
    return 0


def _read_face_clusters(path):
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return [FaceCluster(c["cluster_id"], tuple(c["detection_indices"]), []) for c in obj]


def cmd_eval_score(args):
    timeline = io.read_timeline(args.timeline)
    truth = io.read_ground_truth(args.truth)
    mapping = None
    if args.face_clusters:
        mapping = face_cluster_identities(_read_face_clusters(args.face_clusters), truth.detection_identities)
    score = score_against_truth(timeline, truth, mapping)
    print(json.dumps(score.as_dict(), sort_keys=True))
    return 0


def cmd_eval_pairs(args):
    """Same/different pairs from a synthetic scenario's true turns."""
    feats = io.read_features(args.features)
    truth = io.read_ground_truth(args.truth)
    codebook = io.read_codebook(args.codebook)
    vectors, speakers = [], []
    for i, t in enumerate(truth.turns):
        vectors.append(encode(feats.slice_time(t.start_s, t.end_s), codebook, i).vector)
        speakers.append(t.speaker_id)
    io.write_pairs(make_pairs(vectors, speakers, args.n_pairs, args.seed), args.out)
    print(f"{args.n_pairs} pairs -> {args.out}")
    return 0


# --------------------------------------------------------------- inspect


def _sniff(path):
    if path.suffix == ".npz":
        return "features"
    if path.suffix == ".wav":
        return "audio"
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().strip()
    if head == io.TIMELINE_HEADER:
        return "timeline"
    if head == io.CODEBOOK_HEADER:
        return "codebook"
    if head == io.FACES_HEADER or path.suffix == ".faces":
        return "faces"
    if path.suffix == ".posterior":
        return "posterior"
    if head.startswith("{"):
        if path.name.endswith(".truth.json"):
            return "truth"
        keys = json.loads(head) if head.endswith("}") else {}
        if "ratings" in keys:
            return "ratings"
        if "embedding_a" in keys:
            return "pairs"
        return "truth"
    raise InputFormatError(f"{path}: unrecognised file type")


def inspect_text(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    kind = _sniff(path)
    if kind == "timeline":
        tl = io.read_timeline(path)
        rows = [f"{'start_s':>10}  {'end_s':>10}  {'speech':>6}  face"]
        for e in tl:
            face = OFF_SCREEN if e.off_screen else str(e.assignment)
            rows.append(f"{e.start_s:10.2f}  {e.end_s:10.2f}  {e.speech_cluster_id:>6}  {face}")
        return "\n".join(rows)
    if kind == "codebook":
        cb = io.read_codebook(path)
        return f"codebook K={cb.n_clusters} D={cb.dim} fingerprint={cb.frontend_fingerprint} seed={cb.seed}"
    if kind == "faces":
        dets = io.read_face_tracks(path)
        span = f" from {dets[0].timestamp_s:.2f}s to {dets[-1].timestamp_s:.2f}s" if dets else ""
        return f"{len(dets)} face detections{span}"
    if kind == "posterior":
        post = io.read_posterior(path)
        return f"{post.probs.size} posterior frames ({post.probs.size / post.rate_hz:.2f}s), mean {post.probs.mean() if post.probs.size else 0:.3f}"
    if kind == "features":
        f = io.read_features(path)
        return f"{len(f)} frames x {f.dim} dims, kind={f.kind}, fingerprint={f.fingerprint}, hop={f.hop_s}s"
    if kind == "audio":
        a = io.read_audio(path)
        return f"{a.samples.size} samples at {a.sample_rate_hz} Hz ({a.duration_s:.2f}s)"
    if kind == "ratings":
        recs = io.read_ratings(path)
        return f"{len(recs)} rating records\n" + "\n".join(str(aggregate_ratings(recs, s)) for s in sorted(SCHEMES))
    if kind == "pairs":
        pairs = io.read_pairs(path)
        n_same = sum(p.same_speaker for p in pairs)
        return f"{len(pairs)} pairs ({n_same} same, {len(pairs) - n_same} different), dim {pairs[0].embedding_a.size if pairs else 0}"
    truth = io.read_ground_truth(path)
    rows = [f"ground truth: {len(truth.turns)} turns over {truth.duration_s:.2f}s"]
    rows += [f"{t.start_s:10.2f}  {t.end_s:10.2f}  speaker {t.speaker_id}  {'on' if t.onscreen else 'off'}-screen" for t in truth.turns]
    return "\n".join(rows)


def cmd_inspect(args):
    print(inspect_text(args.path))
    return 0


# ---------------------------------------------------------------- parser


def _add_train_args(p):
    p.add_argument("--features", nargs="+", required=True, help="feature .npz / .wav files or directories")
    p.add_argument("--k", type=int, default=None, help="codebook size (default: vlad_k)")
    p.add_argument("--out", required=True)
    add_config_flags(p)
    p.set_defaults(func=cmd_train)


def build_parser():
    parser = argparse.ArgumentParser(prog="voiceface", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="associate voices with faces for one video")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--audio", help="16-bit mono PCM WAV")
    src.add_argument("--features", help="precomputed feature .npz (needs --sad file)")
    p.add_argument("--faces", required=True, help="face-track file")
    p.add_argument("--codebook", required=True)
    p.add_argument("--out", required=True, help="timeline output path")
    p.add_argument("--diagnostics", help="diagnostics directory (default: <out stem>_diagnostics)")
    add_config_flags(p)
    p.set_defaults(func=cmd_run)

    _add_train_args(sub.add_parser("train", help="train a VLAD codebook"))
    vlad = sub.add_parser("vlad", help="VLAD tools").add_subparsers(dest="vlad_command", required=True)
    _add_train_args(vlad.add_parser("train", help="train a VLAD codebook"))

    synth = sub.add_parser("synth", help="synthetic scenarios").add_subparsers(dest="synth_command", required=True)
    p = synth.add_parser("generate", help="write a labelled synthetic scenario")
    p.add_argument("--config", help="JSON scenario config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--count", type=int, default=1, help="number of scenarios (consecutive seeds)")
    p.add_argument("--name", default="scenario")
    p.set_defaults(func=cmd_synth)

    ev = sub.add_parser("eval", help="evaluation tools").add_subparsers(dest="eval_command", required=True)
    p = ev.add_parser("roc", help="same/different ROC from a pair-label file")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", help="CSV output (default: stdout)")
    p.set_defaults(func=cmd_eval_roc)
    p = ev.add_parser("kappa", help="Fleiss' kappa of a ratings file")
    p.add_argument("--ratings", required=True)
    p.set_defaults(func=cmd_eval_kappa)
    p = ev.add_parser("aggregate", help="clip accuracy under a rating aggregation scheme")
    p.add_argument("--ratings", required=True)
    p.add_argument("--scheme", default=DEFAULT_SCHEME, choices=sorted(SCHEMES) + ["all"])
    p.set_defaults(func=cmd_eval_aggregate)
    p = ev.add_parser("score", help="score a timeline against synthetic ground truth")
    p.add_argument("--timeline", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--face-clusters", help="face_clusters.json from the run diagnostics")
    p.set_defaults(func=cmd_eval_score)
    p = ev.add_parser("pairs", help="build same/different pairs from a synthetic scenario")
    p.add_argument("--features", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--n-pairs", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_pairs)

    p = sub.add_parser("inspect", help="pretty-print any artifact file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VoicefaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
