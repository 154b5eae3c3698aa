"""Dataset generation, training, grid search and BER evaluation."""

from __future__ import annotations

import csv
import dataclasses
import io as _io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import clone

from . import io
from .channel import ChannelParams, SurrogateChannel, simulate
from .detectors import BaselineDetector, BaselineParams, search_baseline
from .detectors.baseline import B_RANGE
from .framing import FrameSpec, modulate, random_bits
from .modem import Reception, SyncError, detect_sync, slice_symbols
from .validation import check_min_samples

log = logging.getLogger(__name__)

LEAD_RANGE_S = (0.4, 0.6)
TAIL_S = 0.25


class DatasetError(RuntimeError):
    """A sequence could not be received (sync or slicing failed)."""


# -- transmission ---------------------------------------------------------------------

def channel_digest(channel) -> str:
    return channel.digest()


def transmit(channel, bits, spec: FrameSpec, rng: np.random.Generator, return_noiseless=False):
    """Send ``bits`` through either channel model after a random silent lead-in.

    Returns the received trace (and the noiseless one for the PDE channel when
    asked).  The lead-in lets sync estimate the noise floor before the pulse.
    """
    if isinstance(channel, SurrogateChannel):
        trace = channel.transmit(bits, spec, rng=rng)
        if not return_noiseless:
            return trace
        clean = dataclasses.replace(channel, noise_std=0.0).transmit(bits, spec, rng=rng)
        return trace, clean
    if not isinstance(channel, ChannelParams):
        raise TypeError(f"unsupported channel type {type(channel).__name__}")
    lead = float(rng.uniform(*LEAD_RANGE_S))
    schedule = modulate(bits, spec, start=lead)
    delay = channel.transit_time if math.isfinite(channel.transit_time) else 2.0
    duration = lead + delay + spec.preamble_s + len(bits) * spec.symbol_s + TAIL_S
    return simulate(schedule, duration, channel, rng=rng, return_noiseless=return_noiseless)


# -- datasets -------------------------------------------------------------------------

@dataclass
class Dataset:
    """Labelled receptions.  Features are derived per detector from the stored windows."""

    receptions: list
    bits: list
    seq_ids: list
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.receptions) == len(self.bits) == len(self.seq_ids)):
            raise ValueError("receptions, bits and ids must have equal length")
        for sid, r, b in zip(self.seq_ids, self.receptions, self.bits):
            if len(r) != len(b):
                raise ValueError(f"sequence {sid}: {len(r)} windows but {len(b)} labels")

    def __len__(self):
        return len(self.receptions)

    @property
    def X(self):
        return self.receptions

    @property
    def y(self):
        return self.bits

    @property
    def spec_ms(self) -> list:
        return [r.spec.symbol_ms for r in self.receptions]

    @property
    def n_symbols(self) -> int:
        return int(sum(len(b) for b in self.bits))

    def specs(self) -> list:
        return sorted(set(self.spec_ms))

    def labels_one_hot(self, i: int, m: int = 2) -> np.ndarray:
        return np.eye(m)[np.asarray(self.bits[i], dtype=int)]

    def subset(self, idx) -> "Dataset":
        idx = list(idx)
        return Dataset([self.receptions[i] for i in idx], [self.bits[i] for i in idx],
                       [self.seq_ids[i] for i in idx], dict(self.provenance))

    def by_spec(self, symbol_ms) -> "Dataset":
        return self.subset(i for i, s in enumerate(self.spec_ms) if math.isclose(s, symbol_ms))

    # persistence -------------------------------------------------------------------
    def save(self, path) -> Path:
        seqs, arrays = [], []
        for sid, r, b in zip(self.seq_ids, self.receptions, self.bits):
            seqs.append({"id": int(sid), "spec": dataclasses.asdict(r.spec), "onset": r.onset,
                         "window_lengths": [len(w) for w in r.windows]})
            arrays.append((f"seq{sid}/samples", np.concatenate(r.windows)))
            arrays.append((f"seq{sid}/bits", np.asarray(b, dtype=np.float64)))
        meta = {"kind": "dataset", "provenance": self.provenance, "sequences": seqs}
        return io.write_container(path, io.MAGIC_DATASET, meta, arrays)

    @classmethod
    def load(cls, path) -> "Dataset":
        meta, arrays = io.read_container(path, io.MAGIC_DATASET)
        recs, bits, ids = [], [], []
        for s in meta["sequences"]:
            sid = s["id"]
            samples = arrays[f"seq{sid}/samples"]
            edges = np.cumsum([0] + s["window_lengths"])
            windows = [samples[a:b] for a, b in zip(edges[:-1], edges[1:])]
            recs.append(Reception(windows, FrameSpec(**s["spec"]), s["onset"]))
            bits.append(arrays[f"seq{sid}/bits"].astype(np.int8))
            ids.append(sid)
        return cls(recs, bits, ids, meta["provenance"])


def _receive_one(channel, spec, k, seq_seed, sid):
    rng = np.random.default_rng(seq_seed)
    bits = random_bits(k, rng)
    trace = transmit(channel, bits, spec, rng)
    try:
        onset = detect_sync(trace, spec)
        windows = slice_symbols(trace, onset, spec, k)
    except (SyncError, ValueError) as exc:
        raise DatasetError(f"sequence {sid} ({spec.symbol_ms:g} ms): {exc}") from exc
    return Reception(windows, spec, onset), bits


def generate_dataset(channel, specs, n: int, k: int, seed: int, threads: int = 1) -> Dataset:
    """``n`` sequences of ``k`` iid equiprobable bits per frame spec.

    Sequence ids run spec-major from 0; each sequence draws from its own child
    of ``SeedSequence(seed)`` so results do not depend on ``threads``.
    """
    specs = [specs] if isinstance(specs, FrameSpec) else list(specs)
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 sequences of k >= 1 bits")
    children = np.random.SeedSequence(seed).spawn(len(specs) * n)
    jobs = [(spec, sid) for sid, spec in enumerate(s for s in specs for _ in range(n))]

    def run(job):
        spec, sid = job
        return _receive_one(channel, spec, k, children[sid], sid)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    provenance = {"channel_digest": channel_digest(channel), "seed": int(seed), "n": int(n), "k": int(k),
                  "channel": type(channel).__name__, "specs_ms": [s.symbol_ms for s in specs]}
    return Dataset([r for r, _ in results], [b for _, b in results], list(range(len(jobs))), provenance)


def split(dataset: Dataset, train_fraction: float, seed: int = 0):
    """Per-spec split at sequence granularity; returns ``(train, test)``."""
    if not 0 < train_fraction < 1:
        raise ValueError("train fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    spec_ms = dataset.spec_ms
    train_idx, test_idx = [], []
    for s in dataset.specs():
        idx = [i for i, v in enumerate(spec_ms) if v == s]
        n_train = int(round(train_fraction * len(idx)))
        if n_train < 1 or n_train >= len(idx):
            raise ValueError(f"{len(idx)} sequence(s) at {s:g} ms cannot be split {train_fraction:g}")
        idx = [idx[j] for j in rng.permutation(len(idx))]
        train_idx += sorted(idx[:n_train])
        test_idx += sorted(idx[n_train:])
    return dataset.subset(sorted(train_idx)), dataset.subset(sorted(test_idx))


# -- training -------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    batch_size: int = 10
    seed: int = 0
    window: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.window < 1:
            raise ValueError("learning rate, batch size and window must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")


def configure(template, config: TrainConfig):
    """Unfitted copy of ``template`` carrying the training hyperparameters of ``config``."""
    model = clone(template)
    names = model.get_params(deep=False)
    updates = {"learning_rate": config.learning_rate, "epochs": config.epochs,
               "batch_size": config.batch_size, "random_state": config.seed, "window": config.window}
    model.set_params(**{k: v for k, v in updates.items() if k in names})
    return model


def train(template, train_set: Dataset, config: TrainConfig | None = None):
    """Fit a fresh copy of ``template``; returns ``(model, loss_curve)``."""
    model = configure(template, config or TrainConfig())
    model.fit(train_set.X, train_set.y)
    return model, list(getattr(model, "loss_curve_", None) or [])


@dataclass
class BaselineTuning:
    params: BaselineParams
    train_ber: float
    cells_visited: int


def tune_baseline(train_set: Dataset, b_range=B_RANGE) -> BaselineTuning:
    if len(train_set) == 0:
        raise ValueError("empty training set")
    params, ber, cells = search_baseline(train_set.X, train_set.y, b_range)
    return BaselineTuning(params, ber, cells)


# -- evaluation -----------------------------------------------------------------------

def detector_name(model) -> str:
    name = getattr(model, "architecture", None) or type(model).__name__
    if name == "sblstm3-net":
        name = f"sblstm3-net{model.window}"
    return name


@dataclass
class EvalReport:
    """Bit and error counts per (detector, symbol duration)."""

    rows: list = field(default_factory=list)
    seconds: dict = field(default_factory=dict)

    COLUMNS = ("detector", "spec_ms", "bits", "errors", "ber")

    def add(self, detector, spec_ms, bits, errors):
        if not 0 <= errors <= bits:
            raise ValueError("errors must lie in [0, bits]")
        self.rows.append({"detector": detector, "spec_ms": float(spec_ms), "bits": int(bits),
                          "errors": int(errors), "ber": errors / bits if bits else 0.0})

    def merge(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(self.rows + other.rows, {**self.seconds, **other.seconds})

    def detectors(self) -> list:
        return list(dict.fromkeys(r["detector"] for r in self.rows))

    def spec_columns(self) -> list:
        return sorted({r["spec_ms"] for r in self.rows}, reverse=True)

    def ber(self, detector, spec_ms=None) -> float:
        rows = [r for r in self.rows if r["detector"] == detector
                and (spec_ms is None or math.isclose(r["spec_ms"], spec_ms))]
        if not rows:
            raise KeyError(f"no rows for {detector!r} at {spec_ms}")
        bits = sum(r["bits"] for r in rows)
        return sum(r["errors"] for r in rows) / bits

    def pooled(self, detector) -> float:
        return self.ber(detector)

    def to_csv(self, path=None) -> str:
        buf = _io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(r)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_json(self, path=None) -> str:
        text = json.dumps({"rows": self.rows, "seconds": self.seconds}, indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "EvalReport":
        rep = cls()
        with open(path, newline="") as fh:
            for r in csv.DictReader(fh):
                rep.add(r["detector"], float(r["spec_ms"]), int(r["bits"]), int(r["errors"]))
        return rep

    def pivot_csv(self) -> str:
        """One row per detector, one BER column per symbol duration."""
        cols = self.spec_columns()
        lines = ["detector," + ",".join(f"{c:g}ms" for c in cols)]
        for d in self.detectors():
            cells = []
            for c in cols:
                try:
                    cells.append(f"{self.ber(d, c):.6f}")
                except KeyError:
                    cells.append("")
            lines.append(d + "," + ",".join(cells))
        return "\n".join(lines) + "\n"

    def table(self) -> str:
        """Detectors as rows, symbol durations as columns, BER in the cells."""
        cols = self.spec_columns()
        lines = ["detector".ljust(18) + "".join(f"{c:>10g}ms" for c in cols)]
        for d in self.detectors():
            cells = []
            for c in cols:
                try:
                    cells.append(f"{self.ber(d, c):12.4f}")
                except KeyError:
                    cells.append(" " * 11 + "-")
            lines.append(d.ljust(18) + "".join(cells))
        return "\n".join(lines)


def evaluate_ber(model, test_set: Dataset, name: str | None = None) -> EvalReport:
    """Stream every test sequence through ``model.predict_sequence`` and count errors per spec."""
    name = name or detector_name(model)
    n_bins = getattr(model, "n_bins", None)
    if isinstance(model, BaselineDetector):
        n_bins = model.params_.n_bins
    if n_bins is not None:
        check_min_samples(test_set.X, n_bins)
    counts = {}
    t0 = time.perf_counter()
    for r, bits in zip(test_set.X, test_set.y):
        pred, _ = model.predict_sequence(r)
        bits = np.asarray(bits)
        if pred.shape != bits.shape:
            raise ValueError(f"detector emitted {pred.shape} decisions for {bits.shape} bits")
        c = counts.setdefault(r.spec.symbol_ms, [0, 0])
        c[0] += bits.size
        c[1] += int(np.sum(pred != bits))
    report = EvalReport()
    for spec_ms in sorted(counts, reverse=True):
        report.add(name, spec_ms, *counts[spec_ms])
    report.seconds[name] = time.perf_counter() - t0
    return report


# -- grid search ----------------------------------------------------------------------

@dataclass
class GridResult:
    best_params: dict
    best_score: float
    cells: list

    @property
    def n_cells(self) -> int:
        return len(self.cells)


GRID_KEYS = {"n_bins", "window", "learning_rate"}


def grid_search(template, grids: dict, train_set: Dataset, val_fraction: float = 0.2,
                config: TrainConfig | None = None, seed: int = 0) -> GridResult:
    """Exhaustive search; the score is validation BER on a per-spec hold-out of the training set.

    Ties go to the model with fewer parameters, then the shorter window, then fewer bins.
    """
    config = config or TrainConfig()
    grids = {k: list(v) for k, v in grids.items()}
    if not grids or any(not v for v in grids.values()):
        raise ValueError("grids must be non-empty")
    unknown = set(grids) - GRID_KEYS
    if unknown:
        raise ValueError(f"unsupported grid parameter(s): {sorted(unknown)}")
    fit_set, val_set = split(train_set, 1.0 - val_fraction, seed=seed)
    keys = sorted(grids)
    cells = []
    for values in itertools.product(*(grids[k] for k in keys)):
        cell = dict(zip(keys, values))
        cfg = dataclasses.replace(config, **{k: v for k, v in cell.items() if k in ("learning_rate", "window")})
        model_params = {k: v for k, v in cell.items() if k == "n_bins"}
        model, _ = train(clone(template).set_params(**model_params), fit_set, cfg)
        score = evaluate_ber(model, val_set).pooled(detector_name(model))
        size = model.network_.n_parameters() if hasattr(model, "network_") else 0
        log.info("grid cell %s -> validation BER %.4f", cell, score)
        cells.append({"params": cell, "val_ber": score, "n_parameters": size})

    def rank(c):
        p = c["params"]
        return (c["val_ber"], c["n_parameters"], p.get("window", 0), p.get("n_bins", 0))

    best = min(cells, key=rank)
    return GridResult(dict(best["params"]), best["val_ber"], cells)
