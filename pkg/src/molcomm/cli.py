"""Command-line entry point: ``molcomm <subcommand> ...``.

Every successful run writes ``<output>.manifest.json`` next to its main
output with the resolved configuration, seed, paths and tool version.
Options given in a ``--config`` JSON file take precedence over command-line
flags; each override is logged as a warning.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, io
from .channel import ChannelConfigError, ChannelParams, SurrogateChannel, exponential_taps
from .detectors import ALL_DETECTORS, load_detector, save_detector
from .framing import STANDARD_SPECS, FrameSpec, as_bits, bit_strings, bits_to_text, text_to_bits
from .modem import Reception, SyncError, detect_sync, slice_symbols
from .pipeline import (Dataset, DatasetError, EvalReport, TrainConfig, detector_name, evaluate_ber,
                       generate_dataset, grid_search, split, train, transmit)

log = logging.getLogger("molcomm")

EXIT_USAGE = 2
EXIT_FAILURE = 1
DATA_DIR = Path(__file__).parent / "data"
BUNDLED = {  # detector tag -> bundled checkpoint file
    "baseline": "baseline.mcnn",
    "base-net": "base-net.mcnn",
    "cnn-net": "cnn-net.mcnn",
    "lstm3-net": "lstm3-net.mcnn",
    "cnn-lstm3-net": "cnn-lstm3-net.mcnn",
    "sblstm3-net": "sblstm3-net.mcnn",
}

# defaults for options a config file may also set
DEFAULTS = {
    "rate": None, "bins": None, "window": 10, "seed": 0, "threads": 1, "epochs": 200,
    "lr": 1e-3, "batch": 10, "noise": 0.0, "channel": "pde", "n": 24, "k": 120,
    "split": None, "detector": "sblstm3-net",
}


class UsageError(ValueError):
    """Bad input from the operator; exits with status 2."""


# -- configuration ----------------------------------------------------------------------

def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    unknown = set(cfg) - set(DEFAULTS) - {"channel_params"}
    if unknown:
        raise UsageError(f"unknown config key(s): {sorted(unknown)}")
    return cfg


def resolve(args, keys) -> dict:
    """Merge config file, explicit flags and defaults (in that order of precedence)."""
    cfg = load_config(getattr(args, "config", None))
    out = {}
    for key in keys:
        flag = getattr(args, key, None)
        if key in cfg:
            if flag is not None and flag != cfg[key]:
                log.warning("config file sets %s=%r, overriding --%s %r", key, cfg[key], key, flag)
            out[key] = cfg[key]
        else:
            out[key] = flag if flag is not None else DEFAULTS[key]
    out["channel_params"] = cfg.get("channel_params", {})
    return out


def build_channel(opts):
    noise = float(opts["noise"])
    if opts["channel"] == "surrogate":
        return SurrogateChannel(isi_taps=exponential_taps(4, 0.5), noise_std=noise)
    if opts["channel"] != "pde":
        raise UsageError(f"unknown channel {opts['channel']!r}; use 'pde' or 'surrogate'")
    try:
        params = ChannelParams.from_dict({**opts["channel_params"], "noise_std": noise})
        params.validate()
    except (ChannelConfigError, TypeError, ValueError) as exc:
        raise UsageError(f"bad channel configuration: {exc}") from exc
    return params


def specs_for(rate):
    if rate is None:
        return list(STANDARD_SPECS)
    try:
        return [FrameSpec.from_rate(float(rate))]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def write_manifest(output, subcommand, opts, inputs=(), outputs=()) -> Path:
    path = Path(str(output) + ".manifest.json")
    manifest = {
        "subcommand": subcommand,
        "config": opts,
        "seed": opts.get("seed"),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs] or [str(output)],
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path.write_text(json.dumps(manifest, indent=2, default=str))
    return path


def _bundled_path(tag):
    if tag not in BUNDLED:
        raise UsageError(f"no bundled checkpoint for {tag!r}; choose from {sorted(BUNDLED)}")
    return DATA_DIR / BUNDLED[tag]


# -- subcommands ------------------------------------------------------------------------

def cmd_simulate(args):
    opts = resolve(args, ("rate", "seed", "noise", "channel"))
    if (args.bits is None) == (args.random is None):
        raise UsageError("give exactly one of --bits or --random")
    rng = np.random.default_rng(opts["seed"])
    if args.bits is not None:
        try:
            bits = as_bits(args.bits)
        except ValueError as exc:
            raise UsageError(f"malformed bit string: {exc}") from exc
    else:
        if args.random < 1:
            raise UsageError("--random needs a positive symbol count")
        bits = rng.integers(0, 2, size=args.random).astype(np.int8)
    spec = specs_for(opts["rate"] if opts["rate"] is not None else 4)[0]
    channel = build_channel(opts)
    trace = transmit(channel, bits, spec, rng)
    trace.meta.update({"bits": bit_strings(bits), "symbol_ms": spec.symbol_ms})
    out = Path(args.out)
    io.write_trace(out, trace)
    outputs = [out]
    if args.csv:
        np.savetxt(args.csv, np.column_stack([trace.times, trace.samples]), delimiter=",",
                   header="t,ph", comments="", fmt="%.6f")
        outputs.append(Path(args.csv))
    write_manifest(out, "simulate", {**opts, "bits": bit_strings(bits)}, outputs=outputs)
    print(f"wrote {out} ({trace.duration:.2f} s, {len(bits)} bits at {spec.symbol_ms} ms)")


def cmd_gen_dataset(args):
    opts = resolve(args, ("rate", "seed", "noise", "channel", "n", "k", "threads", "split"))
    channel = build_channel(opts)
    try:
        ds = generate_dataset(channel, specs_for(opts["rate"]), int(opts["n"]), int(opts["k"]),
                              int(opts["seed"]), threads=int(opts["threads"]))
    except DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    out = Path(args.out)
    outputs = [ds.save(out)]
    if opts["split"] is not None:
        tr, te = split(ds, float(opts["split"]), seed=int(opts["seed"]))
        outputs += [tr.save(out.with_suffix(".train" + out.suffix)), te.save(out.with_suffix(".test" + out.suffix))]
    write_manifest(out, "gen-dataset", opts, outputs=outputs)
    print(f"wrote {len(ds)} sequences, {ds.n_symbols} symbols -> " + ", ".join(map(str, outputs)))


def _template(opts):
    tag = opts["detector"]
    if tag not in ALL_DETECTORS:
        raise UsageError(f"unknown detector {tag!r}; choose from {sorted(ALL_DETECTORS)}")
    det = ALL_DETECTORS[tag]()
    if opts.get("bins") is not None:
        det.set_params(n_bins=int(opts["bins"]))
    return det


def _train_config(opts):
    try:
        return TrainConfig(learning_rate=float(opts["lr"]), epochs=int(opts["epochs"]),
                           batch_size=int(opts["batch"]), seed=int(opts["seed"]), window=int(opts["window"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_dataset(path):
    try:
        return Dataset.load(path)
    except (OSError, io.ContainerError) as exc:
        raise UsageError(f"cannot read dataset {path}: {exc}") from exc


def cmd_train(args):
    opts = resolve(args, ("detector", "bins", "window", "seed", "epochs", "lr", "batch"))
    data = _load_dataset(args.data)
    model, curve = train(_template(opts), data, _train_config(opts))
    out = save_detector(model, args.out)
    write_manifest(out, "train", {**opts, "final_loss": curve[-1] if curve else None, "loss_curve": curve},
                   inputs=[args.data])
    print(f"trained {detector_name(model)} on {len(data)} sequences -> {out}")
    if curve:
        print(f"final training loss {curve[-1]:.5f}")


def _grid_values(text, cast):
    return [cast(v) for v in text.split(",")] if text else None


def cmd_grid(args):
    opts = resolve(args, ("detector", "bins", "window", "seed", "epochs", "lr", "batch"))
    grids = {}
    for key, text, cast in (("n_bins", args.bins_grid, int), ("window", args.window_grid, int),
                            ("learning_rate", args.lr_grid, float)):
        vals = _grid_values(text, cast)
        if vals:
            grids[key] = vals
    if not grids:
        raise UsageError("give at least one of --bins-grid, --window-grid, --lr-grid")
    data = _load_dataset(args.data)
    template = _template(opts)
    cfg = _train_config(opts)
    result = grid_search(template, grids, data, val_fraction=args.val_fraction, config=cfg, seed=cfg.seed)
    best = dict(result.best_params)
    if "n_bins" in best:
        template.set_params(n_bins=best["n_bins"])
    final_cfg = TrainConfig(learning_rate=best.get("learning_rate", cfg.learning_rate), epochs=cfg.epochs,
                            batch_size=cfg.batch_size, seed=cfg.seed, window=best.get("window", cfg.window))
    model, _ = train(template, data, final_cfg)
    out = save_detector(model, args.out)
    report = Path(str(out) + ".grid.json")
    report.write_text(json.dumps({"best": best, "best_val_ber": result.best_score, "cells": result.cells},
                                 indent=2))
    write_manifest(out, "grid", {**opts, "grids": grids}, inputs=[args.data], outputs=[out, report])
    print(f"best cell {best} (validation BER {result.best_score:.4f}) over {result.n_cells} cells -> {out}")


def cmd_eval(args):
    opts = resolve(args, ("seed", "noise", "channel", "n", "k", "threads"))
    paths = [Path(p) for p in args.models or []]
    if args.bundled:
        paths += [_bundled_path(t) for t in BUNDLED]
    if not paths:
        raise UsageError("give --models and/or --bundled")
    if args.data:
        data = _load_dataset(args.data)
        inputs = [args.data]
    else:
        data = generate_dataset(build_channel(opts), STANDARD_SPECS, int(opts["n"]), int(opts["k"]),
                                int(opts["seed"]), threads=int(opts["threads"]))
        inputs = []
    report = EvalReport()
    for p in paths:
        try:
            model = load_detector(p)
        except (OSError, io.ContainerError) as exc:
            raise UsageError(f"cannot load checkpoint {p}: {exc}") from exc
        report = report.merge(evaluate_ber(model, data))
    out = Path(args.out)
    report.to_csv(out)
    table_csv = out.with_suffix(".table.csv")
    table_csv.write_text(report.pivot_csv())
    outputs = [out, table_csv]
    if args.json:
        report.to_json(args.json)
        outputs.append(Path(args.json))
    write_manifest(out, "eval", opts, inputs=inputs + [str(p) for p in paths], outputs=outputs)
    print(report.table())


def cmd_demo_text(args):
    opts = resolve(args, ("rate", "seed", "noise", "channel"))
    try:
        bits = text_to_bits(args.message)
    except ValueError as exc:
        raise UsageError(f"cannot send message: {exc}") from exc
    spec = specs_for(opts["rate"] if opts["rate"] is not None else 2)[0]
    path = Path(args.model) if args.model else _bundled_path(args.bundled)
    try:
        model = load_detector(path)
    except (OSError, io.ContainerError) as exc:
        raise UsageError(f"cannot load checkpoint {path}: {exc}") from exc
    rng = np.random.default_rng(opts["seed"])
    trace = transmit(build_channel(opts), bits, spec, rng)
    try:
        onset = detect_sync(trace, spec)
        reception = Reception(slice_symbols(trace, onset, spec, len(bits)), spec, onset)
    except (SyncError, ValueError) as exc:
        print(f"error: reception failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    decided, pmfs = model.predict_sequence(reception)
    lines = [f"# {detector_name(model)} at {spec.rate_bps:g} bps, sync onset {onset:.3f} s",
             "#  k sent  p(0)    p(1)    got"]
    for k, (b, p, d) in enumerate(zip(bits, pmfs, decided)):
        flag = "" if b == d else "  <- error"
        lines.append(f"{k:4d}  {b}   {p[0]:.4f}  {p[1]:.4f}   {d}{flag}")
    sent = np.packbits(bits, bitorder="little")
    got = np.packbits(decided.astype(np.uint8), bitorder="little")
    bit_errors = int(np.sum(bits != decided))
    char_errors = int(np.sum(sent != got))
    text = bits_to_text(decided)
    lines += [f"sent:     {args.message!r}", f"received: {text!r}",
              f"bit errors: {bit_errors}/{len(bits)}  character errors: {char_errors}/{len(sent)}"]
    transcript = "\n".join(lines)
    print(transcript)
    if args.out:
        out = Path(args.out)
        out.write_text(json.dumps({"sent": args.message, "received": text, "bit_errors": bit_errors,
                                   "char_errors": char_errors, "bits": bit_strings(bits),
                                   "decided": bit_strings(decided), "pmfs": pmfs.tolist()}, indent=2))
        write_manifest(out, "demo-text", {**opts, "model": str(path)}, outputs=[out])
    return 0


# -- parser -----------------------------------------------------------------------------

def _common(p, *names):
    """Shared flags.  Defaults are None so explicit use can be told apart from config values."""
    helps = {
        "rate": ("--rate", dict(type=float, choices=[4.0, 3.0, 2.6, 2.0], help="bit rate in bps")),
        "bins": ("--bins", dict(type=int, help="bins per symbol B")),
        "window": ("--window", dict(type=int, help="SBRNN window length L (default 10)")),
        "seed": ("--seed", dict(type=int, help="single source of randomness (default 0)")),
        "threads": ("--threads", dict(type=int, help="worker threads for simulation (default 1)")),
        "epochs": ("--epochs", dict(type=int, help="training epochs (default 200)")),
        "lr": ("--lr", dict(type=float, help="Adam learning rate (default 1e-3)")),
        "batch": ("--batch", dict(type=int, help="batch size (default 10)")),
        "noise": ("--noise", dict(type=float, help="receiver noise std in pH (default 0)")),
        "channel": ("--channel", dict(help="'pde' (default) or 'surrogate'")),
        "n": ("--n", dict(type=int, help="sequences per symbol duration (default 24)")),
        "k": ("--k", dict(type=int, help="bits per sequence (default 120)")),
        "detector": ("--detector", dict(help=f"one of {sorted(ALL_DETECTORS)}")),
    }
    for name in names:
        flag, kw = helps[name]
        p.add_argument(flag, dest=name, default=None, **kw)
    p.add_argument("--config", help="JSON file of option values; wins over flags (with a warning)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="molcomm",
        description="Simulate, train and evaluate detectors for an acid/base molecular link.",
        epilog="Text messages are sent as UTF-8 bytes, least-significant bit first, with no channel code.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="transmit bits through the channel and save the received trace")
    p.add_argument("--bits", help="bit string such as 110011010001001")
    p.add_argument("--random", type=int, help="send this many random bits instead")
    p.add_argument("--out", required=True, help="trace file (.mctr)")
    p.add_argument("--csv", help="also export t,ph columns as CSV")
    _common(p, "rate", "seed", "noise", "channel")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-dataset", help="generate labelled receptions")
    p.add_argument("--out", required=True, help="dataset file (.mcds)")
    p.add_argument("--split", dest="split", type=float, default=None,
                   help="also write .train/.test files split at this training fraction")
    _common(p, "rate", "seed", "noise", "channel", "n", "k", "threads")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", help="train one detector on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint file (.mcnn)")
    _common(p, "detector", "bins", "window", "seed", "epochs", "lr", "batch")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="grid-search B / L / learning rate, then train the best cell")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins-grid", help="comma-separated B values")
    p.add_argument("--window-grid", help="comma-separated L values")
    p.add_argument("--lr-grid", help="comma-separated learning rates")
    p.add_argument("--val-fraction", type=float, default=0.2)
    _common(p, "detector", "bins", "window", "seed", "epochs", "lr", "batch")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("eval", help="bit error rates of checkpoints on a test set")
    p.add_argument("--models", nargs="*", help="checkpoint files")
    p.add_argument("--bundled", action="store_true", help="include the six bundled smoke checkpoints")
    p.add_argument("--data", help="test dataset; generated from --seed/--noise when omitted")
    p.add_argument("--out", required=True, help="long-form CSV report")
    p.add_argument("--json", help="also write the report as JSON")
    _common(p, "seed", "noise", "channel", "n", "k", "threads")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("demo-text", help="send a text message end to end and decode it")
    p.add_argument("message")
    p.add_argument("--model", help="detector checkpoint")
    p.add_argument("--bundled", default="sblstm3-net", help="bundled detector when --model is absent")
    p.add_argument("--out", help="write the transcript as JSON")
    _common(p, "rate", "seed", "noise", "channel")
    p.set_defaults(func=cmd_demo_text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return int(args.func(args) or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, SyncError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
