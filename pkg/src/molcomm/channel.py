"""Acid/base reaction-diffusion-advection channel along a single tube.

Concentrations are in mol/L, lengths in metres, times in seconds.  Transport
(diffusion + upwind advection) is explicit; the neutralization reaction is
integrated exactly per cell over each step, which keeps it stable for the
physical forward rate.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .framing import ACID, FrameSpec, InjectionSchedule, as_bits

WATER_KW = 1e-14
# injection amplitudes refer to a standard 30 ms pump event mixed into a 1 mm segment;
# longer events scale linearly and the injected mass does not depend on dx
REFERENCE_PUMP_S = 0.030
MIXING_LENGTH = 1e-3


class ChannelConfigError(ValueError):
    """Raised when channel parameters would make the solver unstable or ill-posed."""


def taylor_aris(d_molecular: float, radius: float, v: float) -> float:
    """Effective axial dispersion of a solute in laminar tube flow."""
    return d_molecular + radius**2 * v**2 / (48.0 * d_molecular)


@dataclass(frozen=True)
class ChannelParams:
    # effective (Taylor-Aris) axial dispersion of H+ and OH- in a 0.4 mm radius tube at 5 cm/s
    D_H: float = 8.96e-4
    D_OH: float = 1.57e-3
    v: float = 0.05
    k_f: float = 1.0e8
    k_r: float = 1.0e-6
    tube_length: float = 0.2
    rx_position: float = 0.15
    tx_position: float = 0.085
    dx: float = 1e-3
    dt: float = 2e-4
    background: tuple = (1e-7, 1e-7)
    injection_amplitude: tuple = (5e-4, 5e-4)
    noise_std: float = 0.0
    sample_rate: float = 200.0
    boundary: str = "flow"

    def __post_init__(self):
        object.__setattr__(self, "background", tuple(float(c) for c in self.background))
        object.__setattr__(
            self, "injection_amplitude", tuple(float(c) for c in self.injection_amplitude)
        )
        self.validate()

    def validate(self):
        for name in ("D_H", "D_OH", "k_f", "k_r", "noise_std"):
            if getattr(self, name) < 0:
                raise ChannelConfigError(f"{name} must be non-negative")
        if min(self.background) < 0 or min(self.injection_amplitude) < 0:
            raise ChannelConfigError("concentrations must be non-negative")
        if self.dx <= 0 or self.dt <= 0 or self.tube_length <= 0 or self.sample_rate <= 0:
            raise ChannelConfigError("dx, dt, tube_length and sample_rate must be positive")
        if not 0 < self.rx_position < self.tube_length:
            raise ChannelConfigError("rx_position must lie strictly inside the tube")
        if not 0 <= self.tx_position < self.tube_length:
            raise ChannelConfigError("tx_position must lie inside the tube")
        if self.boundary not in ("flow", "closed"):
            raise ChannelConfigError(f"unknown boundary mode {self.boundary!r}")
        d_max = max(self.D_H, self.D_OH)
        if d_max > 0 and self.dt > 0.4 * self.dx**2 / d_max:
            raise ChannelConfigError(
                f"diffusion stability violated: dt={self.dt} > 0.4*dx^2/D={0.4 * self.dx**2 / d_max:.3g}"
            )
        if self.v != 0 and self.dt > 0.9 * self.dx / abs(self.v):
            raise ChannelConfigError(
                f"advection stability violated: dt={self.dt} > 0.9*dx/|v|={0.9 * self.dx / abs(self.v):.3g}"
            )
        steps = 1.0 / (self.sample_rate * self.dt)
        if abs(steps - round(steps)) > 1e-6:
            raise ChannelConfigError("1/sample_rate must be an integer multiple of dt")

    @property
    def n_cells(self) -> int:
        return int(round(self.tube_length / self.dx))

    def _stencil(self, position):
        # left cell index and weight of the right neighbour, linear between cell centres
        u = position / self.dx - 0.5
        i = int(np.clip(np.floor(u), 0, self.n_cells - 2))
        return i, float(np.clip(u - i, 0.0, 1.0))

    @property
    def rx_cell(self) -> int:
        return self._stencil(self.rx_position)[0]

    @property
    def tx_cell(self) -> int:
        return self._stencil(self.tx_position)[0]

    @property
    def steps_per_sample(self) -> int:
        return int(round(1.0 / (self.sample_rate * self.dt)))

    @property
    def transit_time(self) -> float:
        return (self.rx_position - self.tx_position) / self.v if self.v else math.inf

    def replace(self, **changes) -> "ChannelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["background"] = list(self.background)
        d["injection_amplitude"] = list(self.injection_amplitude)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ChannelConfigError(f"unknown channel parameter(s): {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ConcentrationField:
    c_h: np.ndarray
    c_oh: np.ndarray
    time: float = 0.0

    @classmethod
    def uniform(cls, n_cells: int, c_h: float, c_oh: float) -> "ConcentrationField":
        return cls(np.full(n_cells, float(c_h)), np.full(n_cells, float(c_oh)), 0.0)

    def copy(self) -> "ConcentrationField":
        return ConcentrationField(self.c_h.copy(), self.c_oh.copy(), self.time)

    def total(self, dx: float) -> tuple:
        return float(self.c_h.sum() * dx), float(self.c_oh.sum() * dx)


@dataclass
class WaveformTrace:
    """Uniformly sampled receiver pH; ``t0`` is the time of the first sample."""

    sample_rate: float
    samples: np.ndarray
    t0: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate


def ph_from_concentration(c_h):
    c = np.asarray(c_h, dtype=np.float64)
    if np.any(c <= 0):
        raise ValueError("pH is undefined for non-positive H+ concentration")
    out = -np.log10(c)
    return float(out) if out.ndim == 0 else out


@numba.njit(cache=True, inline="always")
def _react_species(x, q, K, kf, dt):
    # exact solution of dx/dt = -kf*x*(x - q) + kf*K  (q = x - partner is conserved)
    s = math.sqrt(q * q + 4.0 * K)
    if s < 1e-300:
        return x / (1.0 + kf * x * dt)
    if q >= 0.0:
        hp = 0.5 * (q + s)
        hm = -2.0 * K / (q + s)
    else:
        hp = 2.0 * K / (s - q)
        hm = 0.5 * (q - s)
    r = (x - hp) / (x - hm) * math.exp(-kf * s * dt)
    return (hp - r * hm) / (1.0 - r)


@numba.njit(cache=True, nogil=True)
def _integrate(c_h, c_oh, n_steps, dt, dx, d_h, d_oh, v, kf, kr, bg_h, bg_oh,
               closed, tx, tx_w, src_h, src_oh, rx, rx_w, every, out):
    """Advance the field ``n_steps`` steps in place.

    ``src_h``/``src_oh`` hold the per-step source rate (mol/L/s), split between
    cells ``tx`` and ``tx+1`` with weight ``tx_w`` on the latter.  Every
    ``every`` steps the H+ concentration interpolated at the receiver
    (cells ``rx``/``rx+1``, weight ``rx_w``) is written to ``out``.
    """
    n = c_h.size
    fh = np.empty(n + 1)
    fo = np.empty(n + 1)
    K = kr / kf if kf > 0 else 0.0
    k_out = 0
    for step in range(n_steps):
        # face fluxes; face i sits between cell i-1 and cell i
        for i in range(1, n):
            if v >= 0:
                uh = c_h[i - 1]
                uo = c_oh[i - 1]
            else:
                uh = c_h[i]
                uo = c_oh[i]
            fh[i] = -d_h * (c_h[i] - c_h[i - 1]) / dx + v * uh
            fo[i] = -d_oh * (c_oh[i] - c_oh[i - 1]) / dx + v * uo
        if closed:
            fh[0] = 0.0
            fo[0] = 0.0
            fh[n] = 0.0
            fo[n] = 0.0
        else:
            # inflow face carries background water, outflow face is zero-gradient
            fh[0] = -d_h * (c_h[0] - bg_h) / (0.5 * dx) + v * bg_h if v >= 0 else v * c_h[0]
            fo[0] = -d_oh * (c_oh[0] - bg_oh) / (0.5 * dx) + v * bg_oh if v >= 0 else v * c_oh[0]
            fh[n] = v * c_h[n - 1] if v >= 0 else v * bg_h
            fo[n] = v * c_oh[n - 1] if v >= 0 else v * bg_oh
        for i in range(n):
            c_h[i] -= dt * (fh[i + 1] - fh[i]) / dx
            c_oh[i] -= dt * (fo[i + 1] - fo[i]) / dx
        if tx >= 0:
            c_h[tx] += (1.0 - tx_w) * dt * src_h[step]
            c_oh[tx] += (1.0 - tx_w) * dt * src_oh[step]
            c_h[tx + 1] += tx_w * dt * src_h[step]
            c_oh[tx + 1] += tx_w * dt * src_oh[step]
        for i in range(n):
            h = c_h[i] if c_h[i] > 0.0 else 0.0
            o = c_oh[i] if c_oh[i] > 0.0 else 0.0
            if kf > 0.0:
                q = h - o
                h2 = _react_species(h, q, K, kf, dt)
                o2 = _react_species(o, -q, K, kf, dt)
            else:
                h2 = h + kr * dt
                o2 = o + kr * dt
            c_h[i] = h2 if h2 > 0.0 else 0.0
            c_oh[i] = o2 if o2 > 0.0 else 0.0
        if every > 0 and (step + 1) % every == 0:
            out[k_out] = (1.0 - rx_w) * c_h[rx] + rx_w * c_h[rx + 1]
            k_out += 1
    return k_out


def equilibrium_concentration(params: ChannelParams) -> float:
    return math.sqrt(params.k_r / params.k_f) if params.k_f > 0 else params.background[0]


def _source_rates(schedule, params: ChannelParams, t_start: float, n_steps: int):
    src_h = np.zeros(n_steps)
    src_oh = np.zeros(n_steps)
    if schedule is None:
        return src_h, src_oh
    t = t_start + np.arange(n_steps) * params.dt
    amp_h, amp_oh = (a * MIXING_LENGTH / params.dx for a in params.injection_amplitude)
    for inj in schedule:
        active = (t >= inj.start - 1e-12) & (t < inj.end - 1e-12)
        if inj.species == ACID:
            src_h[active] += amp_h / REFERENCE_PUMP_S
        else:
            src_oh[active] += amp_oh / REFERENCE_PUMP_S
    return src_h, src_oh


def step_field(field: ConcentrationField, params: ChannelParams, active_injections=None,
               n_steps: int = 1) -> ConcentrationField:
    """Advance a copy of ``field`` by ``n_steps`` explicit steps.

    ``active_injections`` is an InjectionSchedule (or None); pumps whose interval
    covers a step's start time add source mass at the transmitter cell.
    """
    out = field.copy()
    src_h, src_oh = _source_rates(active_injections, params, field.time, n_steps)
    _integrate(out.c_h, out.c_oh, n_steps, params.dt, params.dx, params.D_H, params.D_OH,
               params.v, params.k_f, params.k_r, params.background[0], params.background[1],
               params.boundary == "closed", *params._stencil(params.tx_position), src_h, src_oh,
               *params._stencil(params.rx_position), 0, np.empty(1))
    out.time = field.time + n_steps * params.dt
    return out


def simulate(schedule: InjectionSchedule, duration: float, params: ChannelParams,
             seed=None, rng: np.random.Generator | None = None,
             return_noiseless: bool = False):
    """Integrate from background equilibrium and sample receiver pH.

    The first sample is taken at ``1/sample_rate``.  Gaussian noise with
    ``params.noise_std`` is added per sample.
    """
    if duration < schedule.end:
        raise ValueError(
            f"duration {duration:.3f} s ends before the last injection ({schedule.end:.3f} s)"
        )
    n_samples = int(round(duration * params.sample_rate))
    every = params.steps_per_sample
    n_steps = n_samples * every
    h0, oh0 = params.background
    field = ConcentrationField.uniform(params.n_cells, h0, oh0)
    src_h, src_oh = _source_rates(schedule, params, 0.0, n_steps)
    c_rx = np.empty(n_samples)
    _integrate(field.c_h, field.c_oh, n_steps, params.dt, params.dx, params.D_H, params.D_OH,
               params.v, params.k_f, params.k_r, h0, oh0, params.boundary == "closed",
               *params._stencil(params.tx_position), src_h, src_oh,
               *params._stencil(params.rx_position), every, c_rx)
    clean = ph_from_concentration(np.maximum(c_rx, 1e-14))
    if rng is None:
        rng = np.random.default_rng(seed)
    noisy = clean + rng.normal(0.0, params.noise_std, size=n_samples) if params.noise_std > 0 else clean.copy()
    noisy = np.clip(noisy, 0.0, 14.0)
    meta = {"params_digest": params.digest(), "seed": seed}
    trace = WaveformTrace(params.sample_rate, noisy, t0=1.0 / params.sample_rate, meta=meta)
    if return_noiseless:
        return trace, WaveformTrace(params.sample_rate, clean, t0=trace.t0, meta=dict(meta))
    return trace


@dataclass(frozen=True)
class SurrogateChannel:
    """Fast linear stand-in channel: one pulse per symbol plus scaled copies in later slots."""

    isi_taps: tuple = (1.0,)
    noise_std: float = 0.0
    sample_rate: float = 200.0
    amplitude: float = 1.0
    background_ph: float = 7.0
    lead_s: float = 0.5

    def transmit(self, bits, spec: FrameSpec, rng=None, seed=None) -> WaveformTrace:
        if rng is None:
            rng = np.random.default_rng(seed)
        return surrogate_channel(bits, spec, self.isi_taps, self.noise_std, rng=rng,
                                 sample_rate=self.sample_rate, amplitude=self.amplitude,
                                 background_ph=self.background_ph, lead_s=self.lead_s)

    def digest(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def exponential_taps(n: int, decay: float) -> tuple:
    return tuple(float(decay**i) for i in range(n))


def surrogate_channel(bits, spec: FrameSpec, isi_taps, noise_std: float, rng=None, seed=None,
                      sample_rate: float = 200.0, amplitude: float = 1.0,
                      background_ph: float = 7.0, lead_s: float = 0.5) -> WaveformTrace:
    """Linear superposition of half-sine pulses, signed by bit polarity (1 -> up).

    Symbol k's pulse occupies slot k; tap i places a copy scaled by ``isi_taps[i]``
    in slot k+i.  After ``lead_s`` seconds of background the frame starts with
    a downward sync pulse followed by silence up to the end of the preamble.
    Samples are taken at slot-aligned instants starting at t=0.
    """
    bits = as_bits(bits)
    taps = np.asarray(isi_taps, dtype=np.float64)
    if taps.size == 0:
        raise ValueError("isi_taps must be nonempty")
    if rng is None:
        rng = np.random.default_rng(seed)
    n_sym = int(round(spec.symbol_s * sample_rate))
    n_lead = int(round(lead_s * sample_rate))
    n_pre = n_lead + int(round(spec.preamble_s * sample_rate))
    n_slots = bits.size + taps.size  # one trailing slot of slack for sync jitter
    total = n_pre + n_slots * n_sym
    x = np.full(total, background_ph)
    u = (np.arange(n_sym) + 0.5) / n_sym
    pulse = amplitude * np.sin(np.pi * u)
    n_sync = int(round(1.5 * spec.sync_injection_ms / 1000.0 * sample_rate))
    x[n_lead:n_lead + n_sync] -= amplitude * np.sin(np.pi * (np.arange(n_sync) + 0.5) / n_sync)
    polarity = np.where(bits == 1, 1.0, -1.0)
    for k, s in enumerate(polarity):
        for i, tap in enumerate(taps):
            a = n_pre + (k + i) * n_sym
            x[a:a + n_sym] += s * tap * pulse
    if noise_std > 0:
        x = x + rng.normal(0.0, noise_std, size=total)
    return WaveformTrace(sample_rate, x, t0=0.0, meta={"channel": "surrogate"})
