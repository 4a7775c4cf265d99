"""Command line entry point.

Subcommands: make-dataset, train, infer, eval, estimate-memory.
Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from .cfa import RawPatch
from .checkpoint import load_checkpoint, model_from_checkpoint
from .ensemble import epoch_ensemble, self_ensemble
from .errors import ConfigError, DimensionError, HernError, ParameterError
from .memory import estimate_memory, hern_arch_spec, max_feasible_patch, rcan_like_arch_spec
from .metrics import psnr, ssim
from .model import infer_padded, init_params
from .presets import RunConfig, desk_preset, load_run_config, paper_preset
from .training import adam_state_from_checkpoint, progressive_train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _resolve_config(args) -> RunConfig:
    if args.config:
        cfg = load_run_config(args.config)
    elif args.preset == "desk":
        cfg = desk_preset()
    elif args.preset == "paper":
        cfg = paper_preset()
    else:
        raise ConfigError("either --config or --preset is required")
    if args.seed is not None:
        cfg = RunConfig(cfg.model, cfg.schedule, cfg.data, args.seed, cfg.output_dir)
    if getattr(args, "out", None):
        cfg = RunConfig(cfg.model, cfg.schedule, cfg.data, cfg.seed, args.out)
    return cfg


def _sub_seed(seed: int, stream: int) -> int:
    # named sub-seeds: 0 = dataset, 1 = init, 2 = training
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


def cmd_make_dataset(args) -> int:
    cfg = _resolve_config(args)
    d = cfg.data
    ids = ds.generate_dataset(
        d.root, d.count, d.size, d.gains, d.sigma, _sub_seed(cfg.seed, 0)
    )
    print(f"wrote {len(ids)} pairs to {d.root}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    print("schedule:")
    for s in cfg.schedule.stages:
        print(
            f"  patch {s.patch_size:4d}  epochs {s.epochs:4d}  "
            f"lr {s.learning_rate:g}  batch {s.batch_size}"
        )
    data = ds.load_dataset(cfg.data.root)
    state = None
    resume_cursor = None
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        if ckpt.config != cfg.model:
            raise ConfigError("resume checkpoint config differs from run config")
        model = model_from_checkpoint(ckpt)
        state = adam_state_from_checkpoint(ckpt, model)
        resume_cursor = (ckpt.stage_index, ckpt.epoch_index + 1)
    else:
        model = init_params(cfg.model, _sub_seed(cfg.seed, 1))
    timeline = progressive_train(
        model,
        data,
        cfg.schedule,
        _sub_seed(cfg.seed, 2),
        out_dir=cfg.output_dir,
        resume_cursor=resume_cursor,
        state=state,
    )
    if timeline:
        print(f"final mean L1: {timeline[-1]['mean_l1']:.5f}")
    print(f"checkpoints and metrics.csv in {cfg.output_dir}")
    return EXIT_OK


def _load_checkpoints(spec: str):
    paths = [p for p in spec.split(",") if p]
    if not paths:
        raise ConfigError("--checkpoints must list at least one path")
    return [load_checkpoint(p) for p in paths]


def cmd_infer(args) -> int:
    ckpts = _load_checkpoints(args.checkpoints)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for path in args.inputs:
        raw = ds.load_raw_png(path)
        if len(ckpts) == 1 and not args.self_ensemble:
            model = model_from_checkpoint(ckpts[0])
            out = infer_padded(model, raw)
        elif len(ckpts) == 1:
            model = model_from_checkpoint(ckpts[0])
            out = self_ensemble(lambda r: infer_padded(model, r), raw)
        else:
            out = epoch_ensemble(ckpts, raw, self_ens=args.self_ensemble)
        target = out_dir / f"{Path(path).stem}.png"
        ds.save_rgb_png(out, target)
        print(f"{path} -> {target}")
    return EXIT_OK


def cmd_eval(args) -> int:
    pred_dir, target_dir = Path(args.pred_dir), Path(args.target_dir)
    names = sorted(p.name for p in pred_dir.glob("*.png"))
    if not names:
        raise ParameterError(f"no PNG files in {pred_dir}")
    rows = []
    for name in names:
        a = ds.load_rgb_png(pred_dir / name).data
        b = ds.load_rgb_png(target_dir / name).data
        rows.append((name, psnr(a, b), ssim(a, b)))
    mean_psnr = (
        math.inf
        if any(math.isinf(r[1]) for r in rows)
        else float(np.mean([r[1] for r in rows]))
    )
    mean_ssim = float(np.mean([r[2] for r in rows]))
    writer = csv.writer(sys.stdout if not args.out else open(args.out, "w", newline=""))
    writer.writerow(["image", "psnr_db", "ssim"])
    for name, p, s in rows:
        writer.writerow([name, p, s])
    writer.writerow(["mean", mean_psnr, mean_ssim])
    return EXIT_OK


def cmd_estimate_memory(args) -> int:
    if args.arch == "hern":
        spec = hern_arch_spec()
    else:
        spec = rcan_like_arch_spec()
    est = estimate_memory(spec, args.side, args.batch, args.include_grad)
    out_prefix = Path(args.out) if args.out else None
    layer_rows = [["layer", "elements", "bytes"]] + [
        list(r) for r in est.per_layer
    ]
    curve_sides = range(
        spec.stride_granularity, args.curve_max + 1, spec.stride_granularity
    )
    curve_rows = [["side", "bytes"]] + [
        [s, estimate_memory(spec, s, args.batch, args.include_grad).total_bytes]
        for s in curve_sides
    ]
    if out_prefix:
        out_prefix.parent.mkdir(parents=True, exist_ok=True)
        with open(f"{out_prefix}_layers.csv", "w", newline="") as f:
            csv.writer(f).writerows(layer_rows)
        with open(f"{out_prefix}_curve.csv", "w", newline="") as f:
            csv.writer(f).writerows(curve_rows)
        print(f"wrote {out_prefix}_layers.csv and {out_prefix}_curve.csv")
    else:
        csv.writer(sys.stdout).writerows(layer_rows)
    print(f"total bytes at side {args.side}: {est.total_bytes}", file=sys.stderr)
    if args.budget:
        side = max_feasible_patch(spec, args.budget, args.batch)
        print(f"max feasible side under {args.budget} bytes: {side}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hern",
        description="RAW-to-RGB demosaicing and enhancement "
        "(dual-path network, progressive training, ensembling).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_args(p):
        p.add_argument("--config", help="run config JSON path")
        p.add_argument("--preset", choices=["desk", "paper"])
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="override output directory")

    p = sub.add_parser("make-dataset", help="write a synthetic paired dataset")
    add_run_args(p)
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("train", help="progressive-resolution training")
    add_run_args(p)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="RAW PNG -> RGB PNG inference")
    p.add_argument("inputs", nargs="+", help="raw mosaic PNG paths")
    p.add_argument("--checkpoints", required=True, help="comma-separated paths")
    p.add_argument("--self-ensemble", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser(
        "eval",
        help="PSNR/SSIM of prediction dir vs target dir (SSIM: 11x11 Gaussian "
        "window, sigma 1.5, K1=0.01, K2=0.03; PSNR peak 1 on clamped floats)",
    )
    p.add_argument("pred_dir")
    p.add_argument("target_dir")
    p.add_argument("--out", help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "estimate-memory",
        help="analytic activation-memory table and side-vs-bytes curve",
    )
    p.add_argument("--arch", choices=["hern", "rcan"], default="hern")
    p.add_argument("--side", type=int, default=312)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--include-grad", action="store_true")
    p.add_argument("--curve-max", type=int, default=320)
    p.add_argument("--budget", type=int, help="also report max feasible side")
    p.add_argument("--out", help="output CSV path prefix")
    p.set_defaults(func=cmd_estimate_memory)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ParameterError, DimensionError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except HernError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
