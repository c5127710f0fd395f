"""Command-line entry points.

Exit codes: 0 success, 1 runtime failure (training crash, gradient check
over tolerance), 2 usage or configuration error, 3 self-test thresholds not
met.

When --out is omitted, outputs land under $VIDADAPT_OUT/<command>.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .data import (
    ClipEntry,
    ColorTransformSpec,
    DatasetManifest,
    load_manifest,
    load_clip,
    save_manifest,
    write_clip_frames,
    write_synthetic_dataset,
)
from .evaluation import evaluate_run
from .gradcheck import run_all_checks
from .networks import load_checkpoint
from .selftest import DEFAULT_STEPS, run_fusion_ablation, run_selftest
from .trainer import TrainConfig, train, translate_clip

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
OUTPUT_ROOT_ENV = "VIDADAPT_OUT"
FUSION_FLAGS = {"dense": "dense_fusion", "share": "weight_sharing", "none": "none"}
WEIGHT_KEYS = ("w_adv", "w_cyc", "w_idt", "w_hist", "w_iv")


def _resolve_out(args, command: str) -> Path:
    if args.out is not None:
        return Path(args.out)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if not root:
        raise ValueError(f"--out is required (or set {OUTPUT_ROOT_ENV} for a default root)")
    return Path(root) / command


def _cmd_prepare(args) -> int:
    root = Path(args.frames_root)
    if not root.is_dir():
        raise FileNotFoundError(f"frames root not found: {root}")
    entries = []
    for clip_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        frames = sorted(
            str(f.relative_to(root))
            for f in clip_dir.iterdir()
            if f.suffix.lower() in IMAGE_SUFFIXES
        )
        if frames:
            entries.append(ClipEntry(clip_dir.name, args.domain, frames, args.reference_index))
    if not entries:
        raise ValueError(f"no clip directories with images under {root}")
    manifest = DatasetManifest(root=root, clips=entries)
    out = _resolve_out(args, "prepare")
    save_manifest(manifest, out, root=str(root.resolve()))
    load_manifest(out)  # round-trip validation: every frame exists and decodes
    print(f"wrote {out}: {len(entries)} clips, {sum(len(e.frame_files) for e in entries)} frames")
    return 0


def _cmd_synth(args) -> int:
    transform = ColorTransformSpec(gain=tuple(args.gain), bias=tuple(args.bias), gamma=args.gamma)
    paths = write_synthetic_dataset(
        _resolve_out(args, "synth"),
        num_clips_per_domain=args.clips_per_domain,
        frames_per_clip=args.frames,
        size=args.size,
        transform=transform,
        rng_seed=args.seed,
        num_holdout=args.holdout,
    )
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def _merge_weights(target: dict, updates: dict) -> None:
    unknown = set(updates) - set(target)
    if unknown:
        raise ValueError(f"unknown weight keys: {sorted(unknown)}")
    target.update(updates)


def _resolve_train_config(args) -> TrainConfig:
    """Layer defaults < config file < command-line flags."""
    resolved = TrainConfig().to_dict()
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise FileNotFoundError(f"config file not found: {cfg_path}")
        try:
            file_cfg = json.loads(cfg_path.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file {cfg_path}: invalid JSON ({exc})") from exc
        if not isinstance(file_cfg, dict):
            raise ValueError(f"config file {cfg_path}: expected a JSON object")
        for key, value in file_cfg.items():
            if key == "weights":
                if not isinstance(value, dict):
                    raise ValueError("config file: weights must be an object")
                _merge_weights(resolved["weights"], value)
            else:
                resolved[key] = value
    overrides = {
        "learning_rate": args.learning_rate,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "seed": args.seed,
        "checkpoint_interval": args.checkpoint_interval,
        "frame_size": args.frame_size,
        "base_channels": args.base_channels,
        "bottleneck_channels": args.bottleneck_channels,
        "downsample_stages": args.downsample_stages,
    }
    if args.fusion is not None:
        overrides["fusion_mode"] = FUSION_FLAGS[args.fusion]
    for key, value in overrides.items():
        if value is not None:
            resolved[key] = value
    if args.weights is not None:
        resolved["weights"] = dict(zip(WEIGHT_KEYS, args.weights))
    return TrainConfig.from_dict(resolved)


def _cmd_train(args) -> int:
    config = _resolve_train_config(args)
    out = _resolve_out(args, "train")
    train(
        args.domain_a,
        args.domain_b,
        config,
        out,
        resume_from=args.resume,
        max_steps=args.max_steps,
        quiet=args.quiet,
    )
    print(f"done; artifacts in {out}")
    return 0


def _cmd_translate(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    clip_ids = args.clip or manifest.clip_ids()
    out = _resolve_out(args, "translate")
    divisor = 2**bundle.config.downsample_stages
    entries = []
    for clip_id in clip_ids:
        clip = load_clip(manifest, clip_id, size=bundle.config.frame_size, divisor=divisor)
        translated = translate_clip(bundle, clip, args.direction)
        files = write_clip_frames(translated, out)
        entries.append(ClipEntry(clip_id, translated.domain, files, translated.reference_index))
        print(f"translated {clip_id}: {len(files)} frames")
    save_manifest(DatasetManifest(root=out, clips=entries), out / "manifest.json")
    return 0


def _cmd_evaluate(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    transform = None
    if args.transform:
        transform = ColorTransformSpec.from_dict(json.loads(Path(args.transform).read_text()))
    report = evaluate_run(
        bundle,
        args.manifest,
        direction=args.direction,
        output_dir=_resolve_out(args, "evaluate"),
        transform=transform,
    )
    print(f"report: {report}")
    return 0


def _cmd_gradcheck(args) -> int:
    results = run_all_checks(seed=args.seed)
    worst = max(results.values())
    for name, err in sorted(results.items()):
        status = "ok" if err <= args.tolerance else "FAIL"
        print(f"{name:24s} max rel err {err:.3e}  {status}")
    if worst > args.tolerance:
        print(f"gradient check failed: worst {worst:.3e} > {args.tolerance:.0e}")
        return 1
    return 0


def _cmd_selftest(args) -> int:
    out = _resolve_out(args, "selftest")
    result = run_selftest(
        out,
        seed=args.seed,
        steps=args.steps,
        frame_size=args.frame_size,
        base_channels=args.base_channels,
        quiet=args.quiet,
    )
    for name, ok in result.checks.items():
        print(f"{name:20s} {'PASS' if ok else 'FAIL'}")
    for name, value in result.metrics.items():
        print(f"  {name}: {value}")
    print(f"elapsed {result.elapsed_seconds:.0f}s; report in {out}")
    if not result.passed:
        return 3
    return 0


def _cmd_ablation(args) -> int:
    summary = run_fusion_ablation(
        _resolve_out(args, "ablation"), seeds=tuple(args.seeds), steps=args.steps
    )
    for row in summary["rows"]:
        mark = "≤" if row["dense_at_most_none"] else ">"
        print(
            f"seed {row['seed']}: dense_fusion {row['dense_fusion']:.5f} "
            f"{mark} none {row['none']:.5f}"
        )
    print(f"dense fusion at least as steady in {summary['dense_wins']}/{len(summary['rows'])} seeds")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidadapt",
        description="Unpaired video-to-video color domain adaptation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="scan frame directories into a manifest")
    p.add_argument("--frames-root", required=True)
    p.add_argument("--out")
    p.add_argument("--domain", choices=("A", "B"), default="A")
    p.add_argument("--reference-index", type=int, default=0)
    p.set_defaults(func=_cmd_prepare)

    p = sub.add_parser("synth", help="emit a synthetic paired-domain dataset")
    p.add_argument("--out")
    p.add_argument("--clips-per-domain", type=int, default=4)
    p.add_argument("--frames", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", type=int, default=2)
    p.add_argument("--gain", type=float, nargs=3, default=[1.3, 1.0, 0.75])
    p.add_argument("--bias", type=float, nargs=3, default=[0.0, 0.0, 0.0])
    p.add_argument("--gamma", type=float, default=1.2)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train (or resume) a translation model")
    p.add_argument("--domain-a", required=True, help="manifest of domain A clips")
    p.add_argument("--domain-b", required=True, help="manifest of domain B clips")
    p.add_argument("--out")
    p.add_argument("--config", help="JSON config file layered over defaults")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--max-steps", type=int)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--fusion", choices=tuple(FUSION_FLAGS))
    p.add_argument("--checkpoint-interval", type=int)
    p.add_argument("--frame-size", type=int)
    p.add_argument("--base-channels", type=int)
    p.add_argument("--bottleneck-channels", type=int)
    p.add_argument("--downsample-stages", type=int)
    p.add_argument("--weights", type=float, nargs=5,
                   metavar=("ADV", "CYC", "IDT", "HIST", "IV"),
                   help="the five loss weights, in this order")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("translate", help="translate clips with a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--direction", choices=("ab", "ba"), default="ab")
    p.add_argument("--clip", action="append", help="clip id (repeatable; default all)")
    p.set_defaults(func=_cmd_translate)

    p = sub.add_parser("evaluate", help="metrics report for a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.add_argument("--direction", choices=("ab", "ba"), default="ab")
    p.add_argument("--transform", help="JSON sidecar with the ground-truth color transform")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss surface")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("selftest", help="tiny end-to-end run against a known transform")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--frame-size", type=int, default=64)
    p.add_argument("--base-channels", type=int, default=16)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_selftest)

    p = sub.add_parser("ablation", help="dense fusion vs independent streams")
    p.add_argument("--out")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--steps", type=int, default=300)
    p.set_defaults(func=_cmd_ablation)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
