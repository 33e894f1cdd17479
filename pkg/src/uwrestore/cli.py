"""Command-line surface: train, infer, eval, selftest.

Exit codes: 0 success, 1 runtime failure (aborted training, bad checkpoint,
metric preconditions), 2 bad configuration key or value, 3 dataset/decoding
problems (every offending file is listed). Output files are written to a
temp file and renamed, so failures never leave partial artifacts.
"""

import argparse
import sys

from .data import DatasetSpec, encode_png, load_image, load_pairs
from .errors import (CheckpointError, ConfigError, DatasetError, DecodeError,
                     ParameterError, ShapeError)
from .fileio import atomic_write_bytes, atomic_write_text
from .metrics import MetricReport, psnr, ssim
from .network import restore_image
from .runconfig import parse_run_config, settings_from_values
from .selftest import run_all
from .trainer import TrainingAborted, load_checkpoint, train


def _fail(code, message):
    print(message, file=sys.stderr)
    return code


def cmd_train(args):
    try:
        values = parse_run_config(args.config) if args.config else {}
        if args.steps is not None:
            values["steps"] = args.steps
        if args.seed is not None:
            values["seed"] = args.seed
            values["data_seed"] = args.seed
        settings = settings_from_values(values)
    except ConfigError as exc:
        return _fail(2, f"config error: {exc}")
    spec = DatasetSpec(root=args.data, patch=settings.patch,
                       flips=settings.flips, seed=settings.data_seed)
    try:
        _, trace = train(
            settings.cfg, spec, settings.steps, args.out,
            batch=settings.batch, weights=settings.weights,
            schedule=settings.schedule,
            checkpoint_every=settings.checkpoint_every,
            trace_path=args.out + ".trace",
            log=(None if args.quiet else
                 lambda s, l, r: print(f"step {s} loss {l:.6e} lr {r:.3e}")))
    except (DatasetError, DecodeError) as exc:
        return _fail(3, f"data error: {exc}")
    except ConfigError as exc:
        return _fail(2, f"config error: {exc}")
    except TrainingAborted as exc:
        return _fail(1, f"training aborted: {exc}")
    except OSError as exc:
        return _fail(1, f"I/O error: {exc}")
    print(f"trained {len(trace)} steps, checkpoint at {args.out}")
    return 0


def cmd_infer(args):
    try:
        params, cfg = load_checkpoint(args.ckpt)
    except (CheckpointError, OSError) as exc:
        return _fail(1, f"checkpoint error: {exc}")
    try:
        img = load_image(args.input)
    except DecodeError as exc:
        return _fail(3, f"data error: {exc}")
    restored = restore_image(params, cfg, img)
    try:
        atomic_write_bytes(args.output, encode_png(restored))
    except OSError as exc:
        return _fail(1, f"I/O error: {exc}")
    return 0


def cmd_eval(args):
    try:
        params, cfg = load_checkpoint(args.ckpt)
    except (CheckpointError, OSError) as exc:
        return _fail(1, f"checkpoint error: {exc}")
    try:
        pairs = load_pairs(DatasetSpec(root=args.data))
    except (DatasetError, DecodeError) as exc:
        return _fail(3, f"data error: {exc}")
    report = MetricReport()
    try:
        for pair in pairs:   # load_pairs sorts by filename
            pred = restore_image(params, cfg, pair.input)
            report.add(pair.name, psnr(pred, pair.target), ssim(pred, pair.target))
    except (ParameterError, ShapeError) as exc:
        return _fail(1, f"metric error: {exc}")
    if args.report:
        try:
            atomic_write_text(args.report, report.to_text())
        except OSError as exc:
            return _fail(1, f"I/O error: {exc}")
    print(f"MEAN {report.mean_psnr:.4f} {report.mean_ssim:.6f}")
    return 0


def cmd_selftest(args):
    results = run_all(out=print)
    failing = sorted(name for name, ok in results.items() if not ok)
    if failing:
        return _fail(1, "failing suites: " + " ".join(failing))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="uwrestore",
        description="Underwater image restoration: train, infer, eval, selftest.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a paired dataset")
    p.add_argument("--config", help="key=value run configuration file")
    p.add_argument("--data", required=True, help="dataset root with input/ and target/")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--steps", type=int, help="override step count")
    p.add_argument("--seed", type=int, help="override model and data seeds")
    p.add_argument("--quiet", action="store_true", help="suppress per-step log lines")
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("infer", help="restore one PNG image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(run=cmd_infer)

    p = sub.add_parser("eval", help="PSNR/SSIM over a paired dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", help="write per-image metric rows to this file")
    p.set_defaults(run=cmd_eval)

    p = sub.add_parser("selftest", help="run built-in numerical health checks")
    p.set_defaults(run=cmd_selftest)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.run(args)


if __name__ == "__main__":
    sys.exit(main())
