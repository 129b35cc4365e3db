"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 failed budget check.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import baseline, data, quant, resource, training
from .errors import StreamTinyNetError
from .model import (
    DESK_CONFIG,
    GOLFDB_CONFIG,
    JESTER_CONFIG,
    build_model,
    load_config,
    load_weights,
    save_weights,
)
from .streaming import StreamEngine

PRESETS = {"desk": DESK_CONFIG, "golfdb": GOLFDB_CONFIG, "jester": JESTER_CONFIG}

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BUDGET = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _config(value, T=None):
    cfg = PRESETS[value] if value in PRESETS else load_config(value)
    return cfg.with_window(T) if T else cfg


def _split(ds, seed, which):
    if which == "all":
        return np.arange(len(ds))
    tr, va, te = data.split_indices(ds.labels, (8, 1, 1), seed)
    return {"train": tr, "val": va, "test": te}[which]


def _print_eval(result, out):
    out(f"accuracy,{result.accuracy:.6f},{int(np.trace(result.confusion))},{result.total}")
    for i, row in enumerate(result.confusion):
        out(f"confusion,{i}," + ",".join(str(v) for v in row))


# --------------------------------------------------------------------------
# subcommands

def cmd_gen_data(args, out):
    spec = data.DatasetSpec(
        clips_per_class=args.clips_per_class, frames=args.frames, height=args.height,
        width=args.width, channels=args.channels, classes=tuple(args.classes.split(",")),
        noise=args.noise, seed=args.seed,
    )
    ds = data.generate_dataset(spec)
    data.save_dataset(ds, args.out)
    out(f"wrote {len(ds)} clips of {ds.clip_shape} to {args.out}")
    return EXIT_OK


def cmd_train(args, out):
    ds = data.load_dataset(args.data)
    cfg = _config(args.config, args.T)
    tr, va, _ = data.split_indices(ds.labels, (8, 1, 1), args.split_seed)
    windows = data.uniform_windows(ds, cfg.T)
    hyper = training.Hyperparams(
        learning_rate=args.lr, momentum=args.momentum, batch_size=args.batch_size,
        epochs=args.epochs, seed=args.seed, augment=args.augment,
    )
    train_set, val_set = (windows[tr], ds.labels[tr]), (windows[va], ds.labels[va])
    if args.frame_model:
        model, history = baseline.train_frame_model(cfg, train_set, val_set, hyper, seed=args.seed,
                                                    flip_label_map=ds.flip_label_map)
    else:
        model, history = training.train(build_model(cfg, args.seed), train_set, val_set, hyper,
                                        flip_label_map=ds.flip_label_map)
    save_weights(model, args.out)
    lines = history.lines()
    if args.history:
        Path(args.history).write_text("\n".join(lines) + "\n")
    for line in lines:
        out(line)
    out(f"best epoch {history.best_epoch}; weights written to {args.out}")
    return EXIT_OK


def cmd_eval(args, out):
    model = load_weights(args.weights)
    ds = data.load_dataset(args.data)
    idx = _split(ds, args.split_seed, args.split)
    windows = data.uniform_windows(ds, model.config.T, idx)
    _print_eval(training.evaluate(model, windows, ds.labels[idx]), out)
    return EXIT_OK


def cmd_eval_baseline(args, out):
    fm = load_weights(args.weights)
    ds = data.load_dataset(args.data)
    idx = _split(ds, args.split_seed, args.split)
    windows = data.uniform_windows(ds, args.window, idx)
    _print_eval(baseline.evaluate_baseline(fm, windows, ds.labels[idx]), out)
    return EXIT_OK


def _stream_frames(args, model):
    if args.frames:
        frames = np.load(args.frames)
    else:
        ds = data.load_dataset(args.data)
        first, count = args.clip, args.clips
        frames = ds.frames[first:first + count].reshape((-1,) + ds.frames.shape[2:])
    if frames.dtype == np.uint8:
        frames = data.to_float(frames)
    return frames


def cmd_stream(args, out):
    model = load_weights(args.weights)
    frames = _stream_frames(args, model)
    engine = StreamEngine(model, args.stride)
    out("frame,label," + ",".join(f"p{i}" for i in range(model.config.k)))
    for frame in frames:
        pred = engine.push_frame(frame)
        if pred is not None:
            probs = ",".join(f"{p:.8f}" for p in pred.probabilities)
            out(f"{pred.frame_index},{pred.label},{probs}")
    out(f"# frames={engine.frames_pushed} g_invocations={engine.g_invocations} "
        f"peak_maps={engine.peak_maps_retained}")
    return EXIT_OK


def cmd_estimate(args, out):
    cfg = _config(args.config, args.T)
    report = resource.totals(cfg, args.bytes_per_value, args.conservative)
    out(report.format_table())
    for line in report.csv_lines():
        out(line)
    verdict = resource.check_budget(report, resource.DeviceBudget(args.mem_budget, args.ops_budget))
    out(f"verdict,{'pass' if verdict.passed else 'fail'},{verdict.describe()}")
    return EXIT_OK if verdict.passed else EXIT_BUDGET


def cmd_quantize(args, out):
    model = load_weights(args.weights)
    ds = data.load_dataset(args.data)
    tr, _, te = data.split_indices(ds.labels, (8, 1, 1), args.split_seed)
    windows = data.uniform_windows(ds, model.config.T)
    calib = windows[tr[: args.calibration]]
    qmodel = quant.calibrate(model, calib)
    quant.save_quantized(qmodel, args.out)
    labels = ds.labels[te]
    pf = training.predict_labels(model, windows[te])
    pq = quant.predict_labels_quantized(qmodel, windows[te])
    out(f"float_accuracy,{(pf == labels).mean():.6f}")
    out(f"quantized_accuracy,{(pq == labels).mean():.6f}")
    out(f"argmax_agreement,{(pf == pq).mean():.6f}")
    out(f"wrote quantized model to {args.out}")
    return EXIT_OK


def cmd_bench(args, out):
    model = load_weights(args.weights)
    rng = np.random.default_rng(args.seed)
    frames = rng.uniform(0, 1, size=(args.frames,) + model.config.input_shape).astype(np.float32)
    engine = StreamEngine(model, args.stride or model.config.T)
    emitted = 0
    start = time.perf_counter()
    for frame in frames:
        emitted += engine.push_frame(frame) is not None
    elapsed = time.perf_counter() - start
    out(f"frames,{args.frames}")
    out(f"predictions,{emitted}")
    out(f"frames_per_second,{args.frames / elapsed:.2f}")
    out(f"ms_per_frame,{1000 * elapsed / args.frames:.3f}")
    if emitted:
        out(f"ms_per_inference,{1000 * elapsed / emitted:.3f}")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="streamtinynet", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def config_args(sp):
        sp.add_argument("--config", default="desk",
                        help="preset (desk, golfdb, jester) or key = value config file")
        sp.add_argument("--T", type=int, default=None, help="override the observation window")

    sp = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    sp.add_argument("--out", required=True)
    sp.add_argument("--clips-per-class", type=int, default=600)
    sp.add_argument("--frames", type=int, default=24)
    sp.add_argument("--height", type=int, default=32)
    sp.add_argument("--width", type=int, default=32)
    sp.add_argument("--channels", type=int, default=1)
    sp.add_argument("--classes", default="static,up,down")
    sp.add_argument("--noise", type=float, default=8.0)
    sp.add_argument("--seed", type=int, default=7)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train", help="train a model on a dataset file")
    config_args(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--history", help="also write epoch,loss,train_acc,val_acc lines here")
    sp.add_argument("--epochs", type=int, default=12)
    sp.add_argument("--lr", type=float, default=0.01)
    sp.add_argument("--momentum", type=float, default=0.9)
    sp.add_argument("--batch-size", type=int, default=32)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--split-seed", type=int, default=7)
    sp.add_argument("--augment", action=argparse.BooleanOptionalAction, default=True)
    sp.add_argument("--frame-model", action="store_true",
                    help="train the T=1 frame model used by eval-baseline")
    sp.set_defaults(func=cmd_train)

    for name, func, text in (("eval", cmd_eval, "evaluate a multi-frame model"),
                             ("eval-baseline", cmd_eval_baseline,
                              "evaluate a frame model with majority voting")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--weights", required=True)
        sp.add_argument("--data", required=True)
        sp.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
        sp.add_argument("--split-seed", type=int, default=7)
        if name == "eval-baseline":
            sp.add_argument("--window", type=int, required=True, help="frames voted per window")
        sp.set_defaults(func=func)

    sp = sub.add_parser("stream", help="run the streaming engine over frames")
    sp.add_argument("--weights", required=True)
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="dataset file; clips are streamed back to back")
    src.add_argument("--frames", help=".npy array of (N, H, W, C) frames")
    sp.add_argument("--clip", type=int, default=0, help="first clip to stream")
    sp.add_argument("--clips", type=int, default=1, help="number of clips to stream")
    sp.add_argument("--stride", type=int, default=1)
    sp.set_defaults(func=cmd_stream)

    sp = sub.add_parser("estimate", help="analytical memory/compute report")
    config_args(sp)
    sp.add_argument("--bytes-per-value", type=int, default=1)
    sp.add_argument("--mem-budget", type=int, default=None, help="bytes")
    sp.add_argument("--ops-budget", type=int, default=None, help="operations per prediction")
    sp.add_argument("--conservative", action="store_true",
                    help="h activations as the largest two-consecutive-layer sum")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("quantize", help="int8 post-training quantization")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--calibration", type=int, default=256, help="training windows to calibrate on")
    sp.add_argument("--split-seed", type=int, default=7)
    sp.set_defaults(func=cmd_quantize)

    sp = sub.add_parser("bench", help="streaming throughput on random frames")
    sp.add_argument("--weights", required=True)
    sp.add_argument("--frames", type=int, default=200)
    sp.add_argument("--stride", type=int, default=None, help="default: T")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_bench)
    return p


def run(argv=None, out=print) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        return args.func(args, out)
    except (StreamTinyNetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
