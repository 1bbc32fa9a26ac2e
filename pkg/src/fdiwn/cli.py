"""Command-line interface: train, upscale, eval, inspect, ablate.

Model/training settings come from a preset or a key=value config file;
explicit command-line flags win over file values.  Every subcommand exits
nonzero on error and all randomness is governed by --seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .data import PairedDataset, make_synthetic_dataset
from .metrics import evaluate_pairs
from .network import (
    FdiwnConfig,
    ablation_config,
    build_model,
    config_preset,
    count_multi_adds,
    count_params,
    load_weights,
    save_weights,
    ABLATION_VARIANTS,
)
from .ops import bicubic_upsample
from .pngio import load_png, save_png
from .tensor import Tensor
from .training import TrainConfig, load_checkpoint, train_loop, train_preset, write_loss_log

__all__ = ["main"]

_MODEL_FIELDS = {f.name: f.type for f in dataclasses.fields(FdiwnConfig)}
_TRAIN_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _parse_value(raw: str, typename: str):
    raw = raw.strip()
    if typename == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if typename == "int":
        return int(raw)
    if typename == "float":
        return float(raw)
    return raw


def read_config_file(path) -> tuple[dict, dict]:
    """Parse a key=value config file into (model kwargs, train kwargs)."""
    model_kwargs, train_kwargs = {}, {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key in _MODEL_FIELDS:
            model_kwargs[key] = _parse_value(raw, str(_MODEL_FIELDS[key]))
        elif key in _TRAIN_FIELDS:
            train_kwargs[key] = _parse_value(raw, str(_TRAIN_FIELDS[key]))
        else:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
    return model_kwargs, train_kwargs


def _resolve_configs(args) -> tuple[FdiwnConfig, TrainConfig]:
    preset = getattr(args, "preset", None)
    config_path = getattr(args, "config", None)
    if preset and config_path:
        raise ValueError("conflicting model sources: give --preset or --config, not both")
    if preset:
        model_cfg, tc = train_preset(preset, scale=getattr(args, "scale", None))
        return model_cfg, tc
    model_kwargs, train_kwargs = ({}, {})
    if config_path:
        model_kwargs, train_kwargs = read_config_file(config_path)
    if getattr(args, "scale", None):
        model_kwargs["scale"] = args.scale
    model_cfg = FdiwnConfig(**model_kwargs)
    model_cfg.validate()
    return model_cfg, TrainConfig(**train_kwargs)


def _sr_fn(model):
    def run(lr: Tensor) -> Tensor:
        return model(lr)
    return run


def _baseline_fn(scale: int):
    def run(lr: Tensor) -> Tensor:
        return bicubic_upsample(lr, scale)
    return run


# ---------------------------------------------------------------------------
# subcommands

def cmd_train(args) -> int:
    model_cfg, tc = _resolve_configs(args)
    if args.seed is not None:
        tc = dataclasses.replace(tc, seed=args.seed)
    state = None
    if args.weights:
        if args.preset or args.config:
            pass  # schedule may come from preset/config; the model comes from the file
        model, state = load_checkpoint(args.weights)
        if args.scale and model.cfg.scale != args.scale:
            raise ValueError(
                f"checkpoint is a x{model.cfg.scale} model; --scale {args.scale} conflicts"
            )
        model_cfg = model.cfg
    else:
        model = build_model(model_cfg, seed=tc.seed)
    dataset = PairedDataset.from_dir(args.hr_dir, model_cfg.scale, lr_dir=args.lr_dir)
    out_dir = args.out or "runs/latest"
    history = train_loop(model, dataset, tc, out_dir=out_dir, state=state, log_every=args.log_every)
    print(f"trained {len(history)} steps; final loss {history[-1][1]:.6f}" if history
          else "nothing to do: checkpoint already at total_steps")
    print(f"checkpoint and loss log written to {out_dir}")
    return 0


def cmd_upscale(args) -> int:
    if args.config:
        raise ValueError("upscale takes its model from --weights; --config conflicts")
    model, _ = load_weights(args.weights)
    if args.scale and model.cfg.scale != args.scale:
        raise ValueError(f"weight file is a x{model.cfg.scale} model; --scale {args.scale} conflicts")
    img = load_png(args.input)
    sr = model(img)
    out = args.out or str(Path(args.input).with_suffix("")) + f"_x{model.cfg.scale}.png"
    save_png(sr, out)
    print(f"{args.input} {img.shape[3]}x{img.shape[2]} -> {out} {sr.shape[3]}x{sr.shape[2]}")
    return 0


def cmd_eval(args) -> int:
    scale = args.scale
    if args.weights:
        model, _ = load_weights(args.weights)
        if scale and model.cfg.scale != scale:
            raise ValueError(f"weight file is a x{model.cfg.scale} model; --scale {scale} conflicts")
        scale = model.cfg.scale
        run = _sr_fn(model)
        label = f"model {args.weights}"
    else:
        if not scale:
            raise ValueError("baseline evaluation needs --scale")
        run = _baseline_fn(scale)
        label = "bicubic baseline"
    dataset = PairedDataset.from_dir(args.hr_dir, scale, lr_dir=args.lr_dir)
    report = evaluate_pairs(run, dataset.as_tensor_pairs(), scale)
    text = report.to_csv() if args.format == "csv" else f"{label}\n{report.to_text()}"
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"report written to {args.out}")
    else:
        print(text)
    return 0


def cmd_inspect(args) -> int:
    model_cfg, _ = _resolve_configs(args)
    width, height = _parse_resolution(args.resolution)
    model = build_model(model_cfg, seed=args.seed or 0)
    params = count_params(model)
    macs = count_multi_adds(model_cfg, (width, height))
    if args.format == "csv":
        print("scale,params,multi_adds,resolution")
        print(f"{model_cfg.scale},{params},{macs},{width}x{height}")
    else:
        print(f"config: {model_cfg}")
        print(f"parameters: {params} ({params / 1e3:.1f}K)")
        print(f"multi-adds @ {width}x{height} output: {macs} ({macs / 1e9:.2f}G)")
    return 0


def cmd_ablate(args) -> int:
    variants = sorted(ABLATION_VARIANTS) if args.variant == "all" else [args.variant]
    _, tc = _resolve_configs(args)
    if args.seed is not None:
        tc = dataclasses.replace(tc, seed=args.seed)
    base_name = args.preset or "smoke"
    base_cfg, _ = train_preset(base_name) if base_name in ("smoke", "tiny") else (config_preset("smoke"), tc)
    if args.hr_dir:
        dataset = PairedDataset.from_dir(args.hr_dir, base_cfg.scale)
        train_set, eval_set = dataset, dataset
    else:
        full = make_synthetic_dataset(10, base_cfg.scale, seed=tc.seed)
        train_set = PairedDataset(full.pairs[:-2], base_cfg.scale)
        eval_set = PairedDataset(full.pairs[-2:], base_cfg.scale)

    rows = []
    for variant in variants:
        cfg = ablation_config(variant, base=base_cfg)
        model = build_model(cfg, seed=tc.seed)
        history = train_loop(model, train_set, tc)
        report = evaluate_pairs(_sr_fn(model), eval_set.as_tensor_pairs(), cfg.scale)
        rows.append((variant, count_params(model), count_multi_adds(cfg),
                     report.mean_psnr, report.mean_ssim, history[-1][1] if history else float("nan")))

    if args.format == "csv":
        print("variant,params,multi_adds,psnr_db,ssim,final_loss")
        for row in rows:
            print(f"{row[0]},{row[1]},{row[2]},{row[3]:.4f},{row[4]:.6f},{row[5]:.6f}")
    else:
        print(f"{'variant':<16}{'params':>10}{'multi-adds':>14}{'PSNR':>9}{'SSIM':>9}{'loss':>10}")
        for row in rows:
            print(f"{row[0]:<16}{row[1]:>10}{row[2]:>14}{row[3]:>9.3f}{row[4]:>9.4f}{row[5]:>10.5f}")
    if args.out:
        lines = ["variant,params,multi_adds,psnr_db,ssim,final_loss"] + [
            f"{r[0]},{r[1]},{r[2]},{r[3]:.4f},{r[4]:.6f},{r[5]:.6f}" for r in rows
        ]
        Path(args.out).write_text("\n".join(lines) + "\n")
    return 0


def _parse_resolution(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except Exception:
        raise ValueError(f"bad --resolution {text!r}; expected WIDTHxHEIGHT like 1280x720")


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdiwn",
                                     description="Lightweight single-image super-resolution")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scale=True, seed=True, fmt=False):
        if scale:
            p.add_argument("--scale", type=int, choices=(2, 3, 4))
        if seed:
            p.add_argument("--seed", type=int, default=None)
        if fmt:
            p.add_argument("--format", choices=("text", "csv"), default="text")
        p.add_argument("--out", default=None)

    p = sub.add_parser("train", help="train a model on a directory of HR PNGs")
    p.add_argument("hr_dir")
    p.add_argument("--preset", choices=("smoke", "overfit", "tiny", "paper"))
    p.add_argument("--config")
    p.add_argument("--weights", help="resume from a training checkpoint")
    p.add_argument("--lr-dir", dest="lr_dir", default=None)
    p.add_argument("--log-every", dest="log_every", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("upscale", help="super-resolve one PNG image")
    p.add_argument("input")
    p.add_argument("--weights", required=True)
    p.add_argument("--config")
    common(p)
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("eval", help="evaluate on a directory of HR images")
    p.add_argument("hr_dir")
    p.add_argument("--weights", help="omit for the bicubic baseline")
    p.add_argument("--lr-dir", dest="lr_dir", default=None)
    common(p, fmt=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="report parameter count and multi-adds")
    p.add_argument("--preset", choices=("smoke", "overfit", "tiny", "paper"))
    p.add_argument("--config")
    p.add_argument("--resolution", default="1280x720")
    common(p, fmt=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("ablate", help="train and compare an architecture variant")
    p.add_argument("variant", help=f"one of {sorted(ABLATION_VARIANTS)} or 'all'")
    p.add_argument("--preset", choices=("smoke", "tiny"))
    p.add_argument("--config")
    p.add_argument("--hr-dir", dest="hr_dir", default=None)
    common(p, fmt=True)
    p.set_defaults(func=cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "ablate" and args.variant != "all" and args.variant not in ABLATION_VARIANTS:
        print(f"error: unknown variant {args.variant!r}; have {sorted(ABLATION_VARIANTS)}",
              file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except Exception as exc:  # CLI boundary: report and exit nonzero
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
