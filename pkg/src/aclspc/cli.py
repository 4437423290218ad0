"""Command-line entry point: ``aclspc <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 compute error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from threadpoolctl import threadpool_limits

from .core import CloudError, SeededRng
from .data import SHAPE_KINDS, TOY_GRID, DataError, build_toy_dataset, load_manifest, read_cloud, write_cloud
from .loss import LossWeights
from .metrics import evaluate_dataset, write_report_csv, write_report_json
from .model import CheckpointError, forward_complete, load_params, save_params
from .train import TrainConfig, load_checkpoint, train
from .view import DEFAULT_GRID, ViewParams, sample_view, synthesize_partial

log = logging.getLogger("aclspc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_COMPUTE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# flag -> TrainConfig field (or weights field)
_OVERRIDES = {
    "epochs": "epochs", "batch_size": "batch_size", "n_syn_views": "n_syn_views",
    "lr": "lr0", "decay_factor": "decay_factor", "decay_every": "decay_every",
    "n_out": "n_out", "consistency_mode": "consistency_mode", "seed": "seed",
    "grid_resolution": "grid_resolution", "checkpoint_every": "checkpoint_every",
}
_WEIGHT_OVERRIDES = ("alpha", "beta", "lambda_cons")


def _add_train_flags(p):
    p.add_argument("--config", help="JSON file with TrainConfig fields")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--n-syn-views", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--decay-factor", type=float)
    p.add_argument("--decay-every", type=int)
    p.add_argument("--n-out", type=int)
    p.add_argument("--consistency-mode", choices=["mse", "chamfer"])
    p.add_argument("--grid-resolution", type=int)
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--lambda-cons", type=float)


def resolve_config(args) -> TrainConfig:
    """Config file values, then command-line overrides."""
    raw = {}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
    try:
        cfg = TrainConfig.from_dict(raw)
        changes = {field: getattr(args, flag) for flag, field in _OVERRIDES.items()
                   if getattr(args, flag, None) is not None}
        weights = {k: getattr(args, k) for k in _WEIGHT_OVERRIDES if getattr(args, k, None) is not None}
        if weights:
            changes["weights"] = LossWeights(**{**cfg.weights.__dict__, **weights})
        return cfg.replace(**changes)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _checkpoint_file(path) -> Path:
    path = Path(path)
    if path.is_dir():
        for name in ("best.ckpt", "last.ckpt"):
            if (path / name).exists():
                return path / name
    elif not path.exists() and Path(str(path) + ".ckpt").exists():
        return Path(str(path) + ".ckpt")
    return path


# --- commands -------------------------------------------------------------------

def cmd_gen_data(args):
    manifest = build_toy_dataset(args.shapes, args.views, args.points, args.seed, args.out,
                                 kinds=tuple(args.kinds), n_gt_points=args.gt_points,
                                 grid_resolution=args.grid)
    print(f"wrote {len(manifest.records)} partials to {args.out}")


def _save_run(out: Path, cfg: TrainConfig, result):
    save_params(result.best_params or result.params, out / "best.ckpt")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1))


def _train_run(partials, cfg, out: Path, **kwargs):
    return train(partials, cfg, checkpoint_dir=out, log_path=out / "loss.log", track_best=True,
                 **kwargs)


def cmd_train(args):
    cfg = resolve_config(args)
    samples = load_manifest(args.data).load_samples()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resume = load_checkpoint(_checkpoint_file(args.resume), cfg.n_out) if args.resume else None
    result = _train_run([s.partial for s in samples], cfg, out, resume=resume)
    _save_run(out, cfg, result)
    if result.history:
        print(f"trained {len(result.history)} epochs, final total loss {result.history[-1].total:.6g}")


def cmd_ttadapt(args):
    cfg = resolve_config(args)
    pretrained = load_params(_checkpoint_file(args.ckpt), cfg.n_out)
    samples = load_manifest(args.data).load_samples()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = _train_run([s.partial for s in samples], cfg, out, init=pretrained)
    _save_run(out, cfg, result)
    print(f"adapted for {len(result.history)} epochs")


def cmd_complete(args):
    params = load_params(_checkpoint_file(args.ckpt))
    write_cloud(forward_complete(params, read_cloud(args.input)), args.output)


def cmd_synth_view(args):
    cloud = read_cloud(args.input)
    rng = SeededRng(args.seed)
    if args.azimuth is not None or args.elevation is not None:
        if args.azimuth is None or args.elevation is None:
            raise UsageError("--azimuth and --elevation go together")
        try:
            view = ViewParams(args.azimuth, args.elevation, args.grid)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    else:
        view = sample_view(rng, args.grid)
    n_out = args.points or len(cloud)
    write_cloud(synthesize_partial(cloud, view, n_out, rng), args.output)
    print(json.dumps(view.to_dict()))


def cmd_eval(args):
    params = load_params(_checkpoint_file(args.ckpt))
    samples = load_manifest(args.data).load_samples()
    agg, per_sample = evaluate_dataset(params, samples, scale=args.scale)
    if args.report:
        write_report_csv(args.report, per_sample, agg)
    if args.json:
        write_report_json(args.json, per_sample, agg)
    fields = ["precision", "coverage", "cd", "ucd", "uhd"]
    print(" ".join(f"{k}={getattr(agg, k):.6g}" for k in fields if getattr(agg, k) is not None))


def build_parser() -> ArgumentParser:
    ap = ArgumentParser(prog="aclspc", description="Self-supervised point cloud completion.")
    ap.add_argument("--threads", type=int, default=1, help="cap on BLAS worker threads")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    p = sub.add_parser("gen-data", help="write a procedural toy dataset")
    p.add_argument("--shapes", type=int, default=40)
    p.add_argument("--views", type=int, default=5)
    p.add_argument("--points", type=int, default=1024, help="points per partial")
    p.add_argument("--gt-points", type=int, default=2048)
    p.add_argument("--kinds", nargs="+", choices=SHAPE_KINDS, default=list(SHAPE_KINDS))
    p.add_argument("--grid", type=int, default=TOY_GRID)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="self-supervised training on a dataset")
    _add_train_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ttadapt", help="test-time adaptation from a pretrained checkpoint")
    _add_train_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ttadapt)

    p = sub.add_parser("complete", help="complete a single partial cloud")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("synth-view", help="render a synthetic partial view of a cloud")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--azimuth", type=float)
    p.add_argument("--elevation", type=float)
    p.add_argument("--grid", type=int, default=DEFAULT_GRID)
    p.add_argument("--points", type=int, help="output size (default: input size)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_view)

    p = sub.add_parser("eval", help="score completions of a dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", help="CSV output path")
    p.add_argument("--json", help="JSON output path")
    p.add_argument("--scale", type=float, default=1.0, help="multiply reported distances")
    p.set_defaults(func=cmd_eval)
    return ap


def dispatch(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"aclspc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with threadpool_limits(limits=max(1, args.threads)):
            args.func(args)
    except UsageError as exc:
        print(f"aclspc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CloudError, CheckpointError, FileNotFoundError, OSError) as exc:
        print(f"aclspc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - top-level diagnostic
        print(f"aclspc: compute error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    return EXIT_OK


def main():
    sys.exit(dispatch())
