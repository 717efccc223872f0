"""coverdet command line: synth / extract / train / evaluate / embed / nearest / selftest.

Every stage exits 0 on success. Expected failures print one
machine-parsable line `error: <Type>: <message>` to stderr and exit 1;
usage problems exit 2. COVERDET_THREADS caps the extract worker pool.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .audio import MAX_DURATION_S, MIN_DURATION_S, load_wav, peak_normalize
from .config import build_configs, read_config_file
from .cqt import compute_cqt, crop_or_pad, load_cqt, save_cqt
from .dataset import parse_manifest, positive_pairs, sample_negatives, split_validation
from .errors import (CoverdetError, InvalidParam, MissingFeature, UsageError)
from .evaluate import build_index, load_index, nearest, prec_at_1, save_index
from .seeds import derive_seed
from .siamese import SiameseModel, load_model, save_model, train
from .synth import SynthConfig, synthesize_corpus

log = logging.getLogger("coverdet.cli")


def worker_count() -> int:
    env = os.environ.get("COVERDET_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"COVERDET_THREADS={env!r} is not an integer") from None
    return max(1, os.cpu_count() or 1)


def _cmd_synth(args) -> int:
    cfg = SynthConfig(n_cliques=args.cliques, versions_per_clique=args.versions,
                      duration_seconds=args.duration, master_seed=args.seed)
    cs = synthesize_corpus(args.out, cfg)
    print(f"wrote {cs.n_tracks} clips in {cs.n_cliques} cliques to {args.out} "
          f"({cs.n_positive_pairs} positive pairs)")
    return 0


def _extract_one(task) -> str:
    wav_path, out_path, hop, frames, crop_seed = task
    clip = load_wav(wav_path)
    dur = clip.duration_seconds
    if not (MIN_DURATION_S <= dur <= MAX_DURATION_S):
        raise InvalidParam(
            f"{wav_path}: duration {dur:.2f}s outside "
            f"[{MIN_DURATION_S:.0f}, {MAX_DURATION_S:.0f}] s")
    clip = peak_normalize(clip)
    spec = compute_cqt(clip, hop_samples=hop)
    if frames:
        spec = crop_or_pad(spec, frames, derive_seed(crop_seed, "crop", clip.source_id))
    save_cqt(spec, out_path)
    return clip.source_id


def _cmd_extract(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.in_dir, "**", "*.wav"), recursive=True))
    if not paths:
        raise InvalidParam(f"no .wav files under {args.in_dir}")
    os.makedirs(args.out, exist_ok=True)
    tasks = []
    for p in paths:
        tid = os.path.splitext(os.path.basename(p))[0]
        tasks.append((p, os.path.join(args.out, tid + ".cqt"),
                      args.hop, args.frames, args.seed))
    workers = min(worker_count(), len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_extract_one, tasks))
    else:
        done = [_extract_one(t) for t in tasks]
    for tid in done:
        log.info("extracted %s", tid)
    print(f"extracted {len(done)} feature files to {args.out}")
    return 0


def _load_features(cs, feature_dir, target_frames, crop_seed=0) -> dict:
    feats = {}
    for tid in cs.all_tracks():
        path = os.path.join(feature_dir, tid + ".cqt")
        if not os.path.exists(path):
            raise MissingFeature(f"no feature file for track {tid!r} at {path}")
        spec = load_cqt(path)
        spec = crop_or_pad(spec, target_frames, derive_seed(crop_seed, "crop", tid))
        feats[tid] = spec.data
    return feats


def _cmd_train(args) -> int:
    overrides = read_config_file(args.config) if args.config else {}
    train_cfg, arch = build_configs(overrides)
    if args.seed is not None:
        train_cfg.seed = args.seed
    cs = parse_manifest(args.manifest)
    features = _load_features(cs, args.features, arch.input_shape[1])
    pos = positive_pairs(cs)
    seed = train_cfg.seed
    negs = sample_negatives(cs, len(pos), derive_seed(seed, "negatives"))
    val_pairs = None
    exclude = None
    train_pos = pos
    train_cliques = cs
    if args.holdout > 0:
        clique_of = cs.clique_of()
        train_pairs, val_pairs = split_validation(
            pos + negs, args.holdout, derive_seed(seed, "split"),
            clique_of=clique_of, by_clique=args.split_by_clique)
        train_pos = [p for p in train_pairs if p.label == 1]
        exclude = {p.key() for p in val_pairs if p.label == 0}
        if args.split_by_clique:
            val_cliques = {clique_of[p.track_a] for p in val_pairs if p.label == 1}
            train_cliques = cs.restricted_to(set(cs.cliques) - val_cliques)
    model = SiameseModel(arch, init_seed=seed)
    history = train(model, train_cliques, features, train_cfg,
                    val_pairs=val_pairs, exclude_pairs=exclude,
                    train_positives=train_pos)
    save_model(model, args.out)
    metrics_path = args.metrics or (args.out + ".metrics.jsonl")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        for record in history:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    last = history[-1]
    summary = f"trained {len(history)} epochs, train_loss={last['train_loss']:.4f}"
    if "val_prec_at_1" in last:
        summary += (f", val_loss={last['val_loss']:.4f}"
                    f", val_prec_at_1={last['val_prec_at_1']:.4f}")
    print(summary + f", checkpoint={args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    model = load_model(args.model)
    cs = parse_manifest(args.manifest)
    index = build_index(model, args.features, cs)
    report = prec_at_1(index, positive_pairs(cs), batch_size=args.batch,
                       rng_seed=args.seed)
    payload = json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    print(f"prec_at_1={report.prec_at_1:.4f} over {report.n_batches} batches "
          f"of {report.batch_size} (dropped {report.dropped_pairs} pairs, "
          f"random baseline 0.0667)")
    return 0


def _cmd_embed(args) -> int:
    model = load_model(args.model)
    cs = parse_manifest(args.manifest)
    index = build_index(model, args.features, cs)
    save_index(index, args.out)
    print(f"embedded {len(index.entries)} tracks (dim {index.dim}) to {args.out}")
    return 0


def _cmd_nearest(args) -> int:
    if args.index:
        index = load_index(args.index)
    elif args.model and args.manifest and args.features:
        model = load_model(args.model)
        cs = parse_manifest(args.manifest)
        index = build_index(model, args.features, cs)
    else:
        raise UsageError("nearest needs --index, or --model with --manifest and --features")
    for tid, dist in nearest(index, args.query, k=args.k):
        print(f"{tid}\t{dist:.6f}")
    return 0


def _cmd_selftest(args) -> int:
    from .selfcheck import run_selftest
    from ._kernels import backend_name
    print(f"kernel backend: {backend_name()}")
    return run_selftest()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coverdet",
        description="cover-song detection: CQT features, twin convnet, Prec@1 retrieval")
    parser.add_argument("--quiet", action="store_true", help="log warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic cover-song corpus")
    p.add_argument("--cliques", type=int, default=32)
    p.add_argument("--versions", type=int, default=4)
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("extract", help="WAV dir -> CQT feature dir")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hop", type=int, default=5120)
    p.add_argument("--frames", type=int, default=0,
                   help="crop/pad features to this many frames (0 = keep all)")
    p.add_argument("--seed", type=int, default=0, help="crop placement seed")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("train", help="train the twin network on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="key=value overrides file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--holdout", type=int, default=0,
                   help="pairs held out for validation (0 = train on everything)")
    p.add_argument("--split-by-clique", action="store_true",
                   help="strict split: whole cliques move to validation")
    p.add_argument("--metrics", default=None, help="metrics JSONL path")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="Prec@1 report for a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=None, help="report JSON path")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("embed", help="write an embedding index for a manifest")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("nearest", help="k nearest tracks to a query")
    p.add_argument("--index", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--manifest", default=None)
    p.add_argument("--features", default=None)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=_cmd_nearest)

    p = sub.add_parser("selftest", help="run gradient and CQT oracle suites")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format="%(name)s %(message)s",
                        level=logging.WARNING if args.quiet else logging.INFO)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (CoverdetError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
