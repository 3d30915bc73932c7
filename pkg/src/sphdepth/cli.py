"""Command-line entry point.

Exit codes: 0 success, 1 configuration or validation error, 2 I/O error,
3 incompatible checkpoint.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import tomli

from .checkpoint import load_checkpoint
from .config import load_config
from .data import load_pair, read_depth, read_manifest, read_rgb, write_depth, write_manifest, write_rgb
from .errors import (AlignmentError, CheckpointError, ConfigError, FormatError, ParamError, ShapeError,
                     SizeError, SpecError, EmptyDatasetError, DomainError, EmptyMaskError)
from .geometry import KernelSpec, build_sampling_grid, write_grid
from .metrics import MetricAccumulator
from .model import build_model
from .synthesis import synthesize_underwater
from .training import predict, train


class CLIError(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def _parse_sets(pairs):
    out = {}
    for item in pairs or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            out[key.strip()] = tomli.loads(f"v = {val}")["v"]
        except tomli.TOMLDecodeError:
            out[key.strip()] = val
    return out


def _config(args, extra=None):
    overrides = _parse_sets(getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    overrides.update(extra or {})
    return load_config(args.config, overrides)


def _load_model(cfg, checkpoint):
    model = build_model(cfg.model_spec(), seed=cfg.seed)
    state = load_checkpoint(checkpoint)
    try:
        model.load_state_dict(state)
    except ShapeError as exc:
        raise CheckpointError(f"{checkpoint}: {exc}") from exc
    return model


def colorize(depth, d_max) -> np.ndarray:
    """Viridis rendering of ``depth`` clamped to ``[0, d_max]``."""
    from matplotlib import colormaps

    t = np.clip(np.asarray(depth, dtype=np.float64) / d_max, 0.0, 1.0)
    rgba = colormaps["viridis"](t)
    return np.rint(rgba[..., :3] * 255).astype(np.uint8)


# --- subcommands -----------------------------------------------------------

def cmd_synth(args):
    cfg = _config(args)
    params = cfg.synthesis()
    records = read_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    new = []
    for rec in records:
        pair = load_pair(rec)
        rgb_path = out / f"{rec.id}_uw.png"
        write_rgb(rgb_path, synthesize_underwater(pair, params))
        new.append(replace(rec, rgb=str(rgb_path)))
    write_manifest(out / "manifest.tsv", new)
    return 0


def cmd_grid(args):
    try:
        k = KernelSpec(args.n,
                       args.delta_theta if args.delta_theta is not None else 2 * np.pi / args.width,
                       args.delta_phi if args.delta_phi is not None else np.pi / args.height)
        grid = build_sampling_grid(args.width, args.height, k, args.stride)
    except (ParamError, DomainError) as exc:
        raise CLIError(1, str(exc)) from exc
    write_grid(grid, args.out)
    return 0


def _load_split(manifest, split):
    records = read_manifest(manifest)
    if split:
        records = [r for r in records if r.split == split]
    return records


def cmd_train(args):
    extra = {"train.epochs": args.epochs} if args.epochs is not None else {}
    cfg = _config(args, extra)
    hp = cfg.hyperparams()
    aug = cfg.augment() if cfg.augment_enabled else None
    model = build_model(cfg.model_spec(), seed=cfg.seed)
    pairs = [load_pair(r) for r in _load_split(args.manifest, args.split)]
    if not pairs:
        raise CLIError(1, f"no records with split {args.split!r} in {args.manifest}")
    rng = np.random.default_rng(cfg.seed)
    log = train(model, pairs, hp, rng, out_dir=args.out, augment_cfg=aug, norm_cfg=cfg.normalization())
    for rec in log.records:
        print(f"epoch {rec.epoch}: lr={rec.lr:.6g} l1={rec.l1:.6f}", file=sys.stderr)
    return 0


def cmd_eval(args):
    cfg = _config(args)
    records = _load_split(args.manifest, args.split)
    acc = MetricAccumulator()
    if args.predictions:
        preds = {r.id: r for r in read_manifest(args.predictions)}
        for rec in records:
            if rec.id not in preds:
                raise CLIError(1, f"no prediction for id {rec.id!r}")
            acc.accumulate(read_depth(preds[rec.id].depth), read_depth(rec.depth))
    else:
        if not args.checkpoint:
            raise CLIError(1, "eval needs --checkpoint or --predictions")
        model = _load_model(cfg, args.checkpoint)
        for rec in records:
            pair = load_pair(rec)
            acc.accumulate(predict(model, pair.rgb, cfg.normalization()), pair.depth)
    report = acc.finalize()
    sys.stdout.write(report.to_text())
    sys.stdout.write(report.to_csv())
    return 0


def cmd_predict(args):
    cfg = _config(args)
    model = _load_model(cfg, args.checkpoint)
    depth = predict(model, read_rgb(args.image), cfg.normalization())
    out = Path(args.out)
    write_depth(out, depth)
    viz = out.with_name(out.stem + "_viz.png")
    write_rgb(viz, colorize(depth, cfg.d_max))
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key, e.g. --set train.epochs=2")

    p = argparse.ArgumentParser(prog="sphdepth", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="underwater-style a manifest of RGB-D pairs")
    s.add_argument("manifest")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    g = sub.add_parser("grid", parents=[common], help="dump a spherical sampling grid")
    g.add_argument("--width", type=int, required=True)
    g.add_argument("--height", type=int, required=True)
    g.add_argument("--n", type=int, default=3, help="odd kernel side")
    g.add_argument("--stride", type=int, default=1)
    g.add_argument("--delta-theta", type=float)
    g.add_argument("--delta-phi", type=float)
    g.add_argument("--out", required=True, help="output text file")
    g.set_defaults(func=cmd_grid)

    t = sub.add_parser("train", parents=[common], help="train a depth network")
    t.add_argument("manifest")
    t.add_argument("--out", required=True, help="directory for checkpoints and train_log.jsonl")
    t.add_argument("--split", default="train")
    t.add_argument("--epochs", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="report RMSE/MAE/REL/delta1")
    e.add_argument("manifest")
    e.add_argument("--checkpoint")
    e.add_argument("--predictions", help="manifest whose depth column holds predicted maps")
    e.add_argument("--split")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", parents=[common], help="predict depth for one image")
    r.add_argument("checkpoint")
    r.add_argument("image")
    r.add_argument("--out", required=True, help="16-bit depth PNG (millimeters)")
    r.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CLIError as exc:
        code, msg = exc.code, str(exc)
    except CheckpointError as exc:
        code, msg = 3, str(exc)
    except (ConfigError, ParamError, SpecError, SizeError, EmptyDatasetError, EmptyMaskError) as exc:
        code, msg = 1, str(exc)
    except (OSError, FormatError, AlignmentError) as exc:
        code, msg = 2, str(exc)
    print(f"sphdepth {args.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
