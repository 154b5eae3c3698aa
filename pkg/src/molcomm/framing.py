"""Transmit-side framing: bit sequences, frame timing and injection schedules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ACID = "acid"
BASE = "base"

# bits per second -> guard band (ms); the injection itself is always 30 ms
RATE_TO_GUARD_MS = {4.0: 220, 3.0: 304, 2.6: 350, 2.0: 470}


@dataclass(frozen=True)
class FrameSpec:
    """Timing of one framed transmission, all durations in milliseconds."""

    guard_ms: int = 220
    injection_ms: int = 30
    sync_injection_ms: int = 100
    sync_silence_ms: int = 900

    def __post_init__(self):
        for name in ("guard_ms", "injection_ms", "sync_injection_ms", "sync_silence_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def symbol_ms(self) -> int:
        return self.injection_ms + self.guard_ms

    @property
    def symbol_s(self) -> float:
        return self.symbol_ms / 1000.0

    @property
    def preamble_s(self) -> float:
        return (self.sync_injection_ms + self.sync_silence_ms) / 1000.0

    @property
    def rate_bps(self) -> float:
        return 1000.0 / self.symbol_ms

    @classmethod
    def from_rate(cls, rate: float) -> "FrameSpec":
        for r, guard in RATE_TO_GUARD_MS.items():
            if abs(float(rate) - r) < 1e-9:
                return cls(guard_ms=guard)
        raise ValueError(f"unsupported rate {rate!r}; choose one of {sorted(RATE_TO_GUARD_MS)}")

    @classmethod
    def from_symbol_ms(cls, symbol_ms: int) -> "FrameSpec":
        spec = cls(guard_ms=int(symbol_ms) - 30)
        if spec.symbol_ms not in STANDARD_SYMBOL_MS:
            raise ValueError(f"non-standard symbol duration {symbol_ms} ms")
        return spec


STANDARD_SPECS = tuple(FrameSpec(guard_ms=g) for g in (220, 304, 350, 470))
STANDARD_SYMBOL_MS = tuple(s.symbol_ms for s in STANDARD_SPECS)


@dataclass(frozen=True)
class Injection:
    start: float
    duration: float
    species: str

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class InjectionSchedule:
    injections: tuple = field(default_factory=tuple)

    def __post_init__(self):
        starts = [inj.start for inj in self.injections]
        if starts != sorted(starts):
            raise ValueError("injections must be sorted by start time")
        for inj in self.injections:
            if inj.duration <= 0:
                raise ValueError(f"injection duration must be positive: {inj}")
            if inj.species not in (ACID, BASE):
                raise ValueError(f"unknown species {inj.species!r}")

    def __len__(self):
        return len(self.injections)

    def __iter__(self):
        return iter(self.injections)

    @property
    def end(self) -> float:
        return max((inj.end for inj in self.injections), default=0.0)


def as_bits(bits) -> np.ndarray:
    """Coerce a bit string or iterable of 0/1 into an int8 array, validating it."""
    if isinstance(bits, str):
        if not bits or set(bits) - {"0", "1"}:
            raise ValueError(f"malformed bit string {bits!r}")
        arr = np.fromiter((int(c) for c in bits), dtype=np.int8)
    else:
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("bit sequence must be one-dimensional and nonempty")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("bit sequence may only contain 0 and 1")
        arr = arr.astype(np.int8)
    return arr


def modulate(bits, spec: FrameSpec, start: float = 0.0) -> InjectionSchedule:
    """Map bits to pump events: sync acid pulse, then one 30 ms injection per bit.

    A 0-bit pumps acid and a 1-bit pumps base, each at the start of its symbol
    slot.  ``start`` delays the whole frame (the sync pulse begins there).
    """
    bits = as_bits(bits)
    if start < 0:
        raise ValueError("frame start must be non-negative")
    injections = [Injection(float(start), spec.sync_injection_ms / 1000.0, ACID)]
    t0 = start + spec.preamble_s
    for k, b in enumerate(bits):
        injections.append(
            Injection(t0 + k * spec.symbol_s, spec.injection_ms / 1000.0, BASE if b else ACID)
        )
    return InjectionSchedule(tuple(injections))


def random_bits(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 2, size=int(n)).astype(np.int8)


def text_to_bits(message: str) -> np.ndarray:
    """UTF-8 bytes to bits, least-significant bit of each byte first."""
    data = np.frombuffer(message.encode("utf-8"), dtype=np.uint8)
    if data.size == 0:
        raise ValueError("empty message")
    return np.unpackbits(data, bitorder="little").astype(np.int8)


def bits_to_text(bits: Sequence[int]) -> str:
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.size - bits.size % 8
    data = np.packbits(bits[:n], bitorder="little").tobytes()
    return data.decode("utf-8", errors="replace")


def bit_strings(bits: Iterable[int]) -> str:
    return "".join(str(int(b)) for b in bits)
