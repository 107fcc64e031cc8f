"""Seeded simulator of the closed-loop channel.

The loop is a plug-flow path (everything except the reservoir) discretised
into segments that each hold the ON/OFF/bleached fractions of one
``Q * sim_step`` volume, closed through an ideally stirred reservoir of
volume ``V_R``. Positions are measured downstream from the reservoir outlet:

    reservoir -> ... -> [EX] [TX] --d_TX,RX--> [RX] -> ... -> reservoir
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _kernel
from .errors import ConfigurationError, DomainError
from .model import PhysicalConfig, Trace, TxSchedule, build_tx_schedule, ModulationConfig

MIN_SEGMENTS = 10


@dataclass(frozen=True)
class ChannelSimConfig:
    """Simulation parameters on top of the physical testbed description.

    Rate constants are calibration inputs (1/s). The defaults are not fitted to
    measurements: they give roughly a 50 % fluorescence dip for a full-power
    3 s irradiation and a few percent photobleaching over a 10^4 s run.
    """

    physical: PhysicalConfig
    sim_step: float = 0.01
    tx_rate_const: float = 0.33
    ex_rate_const: float = 3.0
    bleach_rate_tx: float = 1e-4
    bleach_rate_ex: float = 5e-5
    bleach_rate_rx: float = 1e-4
    dispersion_coefficient: float = 0.0
    rx_noise_sigma: float = 0.0
    ex_active: bool = True
    rng_seed: int = 0
    ex_start: float = 0.3
    rx_length: float = 0.01
    lead_in: float = 20.0
    lead_out: float = 10.0

    def __post_init__(self):
        if not self.sim_step > 0:
            raise ConfigurationError("sim_step must be positive")
        for name in ("tx_rate_const", "ex_rate_const", "bleach_rate_tx", "bleach_rate_ex",
                     "bleach_rate_rx", "dispersion_coefficient", "rx_noise_sigma",
                     "lead_in", "lead_out"):
            if not getattr(self, name) >= 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if not self.ex_start >= 0 or not self.rx_length > 0:
            raise ConfigurationError("ex_start must be >= 0 and rx_length > 0")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["physical"] = self.physical.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict, physical: PhysicalConfig | None = None) -> "ChannelSimConfig":
        data = dict(data)
        phys = data.pop("physical", None)
        if physical is None:
            if phys is None:
                raise ConfigurationError("channel config needs a physical section")
            physical = PhysicalConfig.from_dict(phys)
        known = {f for f in cls.__dataclass_fields__} - {"physical"}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown channel parameters: {sorted(unknown)}")
        return cls(physical=physical, **data)


@dataclass(frozen=True)
class LoopGeometry:
    n_segments: int
    segment_length: float
    ex: tuple[int, int]
    tx: tuple[int, int]
    rx: tuple[int, int]
    mix_fraction: float
    dispersion_alpha: float


def loop_geometry(cfg: ChannelSimConfig) -> LoopGeometry:
    """Discretise the loop; raises ConfigurationError if it is too coarse."""
    phys = cfg.physical
    q = phys.volumetric_flux / 60.0  # mL/s
    dx = phys.effective_velocity * cfg.sim_step
    plug_time = (phys.total_volume - phys.reservoir_volume) / q
    n = int(round(plug_time / cfg.sim_step))
    if n < MIN_SEGMENTS:
        raise ConfigurationError(f"loop resolves into {n} segments, need >= {MIN_SEGMENTS}")

    span = cfg.ex_start + phys.ex_length + phys.tx_length + phys.tx_rx_distance + cfg.rx_length
    if span > phys.tube_length:
        raise ConfigurationError(f"EX, TX and RX end {span:.3g} m downstream, beyond the {phys.tube_length} m tube")

    def cells(length):
        return max(1, int(round(length / dx)))

    ex_lo = int(round(cfg.ex_start / dx))
    ex = (ex_lo, ex_lo + cells(phys.ex_length))
    tx = (ex[1], ex[1] + cells(phys.tx_length))
    rx_lo = tx[1] + int(round(phys.tx_rx_distance / dx))
    rx = (rx_lo, rx_lo + cells(cfg.rx_length))
    if rx[1] > n:
        raise ConfigurationError("EX, TX and RX do not fit on the plug-flow path")
    mix = q * cfg.sim_step / phys.reservoir_volume
    if mix >= 1:
        raise ConfigurationError("sim_step exceeds the reservoir residence time")
    alpha = cfg.dispersion_coefficient * cfg.sim_step / dx**2
    if alpha > 0.5:
        raise ConfigurationError(f"dispersion number {alpha:.3g} > 0.5 is unstable")
    return LoopGeometry(n, dx, ex, tx, rx, mix, alpha)


@dataclass
class ChannelState:
    """Per-segment state fractions (loop position order) plus the reservoir."""

    segment_on: np.ndarray
    segment_off: np.ndarray
    segment_bleached: np.ndarray
    reservoir_on: float = 1.0
    reservoir_off: float = 0.0
    reservoir_bleached: float = 0.0
    time: float = 0.0
    step: int = 0

    def copy(self) -> "ChannelState":
        return replace(
            self,
            segment_on=self.segment_on.copy(),
            segment_off=self.segment_off.copy(),
            segment_bleached=self.segment_bleached.copy(),
        )

    def conservation_error(self) -> float:
        seg = np.abs(self.segment_on + self.segment_off + self.segment_bleached - 1.0).max()
        res = abs(self.reservoir_on + self.reservoir_off + self.reservoir_bleached - 1.0)
        return float(max(seg, res))

    def total(self, which: str, geometry: LoopGeometry, cfg: ChannelSimConfig) -> float:
        """Amount of one species in units of the full loop volume."""
        seg = getattr(self, f"segment_{which}")
        res = getattr(self, f"reservoir_{which}")
        seg_volume = cfg.physical.volumetric_flux / 60.0 * cfg.sim_step
        total = geometry.n_segments * seg_volume + cfg.physical.reservoir_volume
        return float((seg.sum() * seg_volume + res * cfg.physical.reservoir_volume) / total)


def init_state(cfg: ChannelSimConfig) -> ChannelState:
    """Equilibrium: every molecule ON."""
    n = loop_geometry(cfg).n_segments
    return ChannelState(np.ones(n), np.zeros(n), np.zeros(n))


def _rates(cfg: ChannelSimConfig):
    return math.log(2.0) / cfg.physical.relaxation_half_life


def channel_step(state: ChannelState, cfg: ChannelSimConfig, tx_intensity: float,
                 geometry: LoopGeometry | None = None) -> ChannelState:
    """Advance the channel by one ``sim_step``; returns a new state.

    Operator order: TX switching, EX switching, thermal relaxation,
    photobleaching, dispersion, advection through the reservoir.
    """
    if not 0.0 <= tx_intensity <= 1.0:
        raise DomainError(f"tx_intensity {tx_intensity} outside [0, 1]")
    g = geometry or loop_geometry(cfg)
    dt = cfg.sim_step
    s = state.copy()
    on, off, bl = s.segment_on, s.segment_off, s.segment_bleached
    tx = slice(*g.tx)
    ex = slice(*g.ex)
    rx = slice(*g.rx)

    moved = on[tx] * -math.expm1(-cfg.tx_rate_const * tx_intensity * dt)
    on[tx] -= moved
    off[tx] += moved
    if cfg.ex_active:
        moved = off[ex] * -math.expm1(-cfg.ex_rate_const * dt)
        off[ex] -= moved
        on[ex] += moved

    p_relax = -math.expm1(-_rates(cfg) * dt)
    moved = off * p_relax
    off -= moved
    on += moved
    moved = s.reservoir_off * p_relax
    s.reservoir_off -= moved
    s.reservoir_on += moved

    bleach = [(tx, cfg.bleach_rate_tx * tx_intensity), (rx, cfg.bleach_rate_rx)]
    if cfg.ex_active:
        bleach.append((ex, cfg.bleach_rate_ex))
    for region, rate in bleach:
        q = math.exp(-rate * dt)
        a, b = on[region], off[region]
        bl[region] += (a + b) - (a * q + b * q)
        on[region] = a * q
        off[region] = b * q

    if g.dispersion_alpha > 0:
        for arr in (on, off, bl):
            padded = np.concatenate(([arr[0]], arr, [arr[-1]]))
            arr += g.dispersion_alpha * (padded[:-2] - 2.0 * arr + padded[2:])

    out = (on[-1], off[-1], bl[-1])
    mix = g.mix_fraction
    s.segment_on = np.concatenate(([s.reservoir_on], on[:-1]))
    s.segment_off = np.concatenate(([s.reservoir_off], off[:-1]))
    s.segment_bleached = np.concatenate(([s.reservoir_bleached], bl[:-1]))
    s.reservoir_on = (1.0 - mix) * s.reservoir_on + mix * out[0]
    s.reservoir_off = (1.0 - mix) * s.reservoir_off + mix * out[1]
    s.reservoir_bleached = (1.0 - mix) * s.reservoir_bleached + mix * out[2]
    s.step += 1
    s.time = s.step * dt
    return s


def fluorescence_readout(state: ChannelState, cfg: ChannelSimConfig, rng=None,
                         geometry: LoopGeometry | None = None) -> float:
    """Mean ON fraction in the flow cell plus Gaussian noise, clamped at zero."""
    g = geometry or loop_geometry(cfg)
    value = float(state.segment_on[slice(*g.rx)].mean())
    if cfg.rx_noise_sigma > 0:
        if rng is None:
            raise DomainError("a random generator is required when rx_noise_sigma > 0")
        value += rng.normal(0.0, cfg.rx_noise_sigma)
    return max(value, 0.0)


def advance(state: ChannelState, cfg: ChannelSimConfig, levels, sample_every: int = 1,
            geometry: LoopGeometry | None = None):
    """Run ``len(levels)`` steps with the compiled kernel.

    Equivalent to calling :func:`channel_step` once per entry of ``levels``.
    Returns the final state and the noise-free readout taken before every
    ``sample_every``-th step.
    """
    g = geometry or loop_geometry(cfg)
    levels = np.ascontiguousarray(levels, dtype=float)
    if levels.size and (levels.min() < 0 or levels.max() > 1):
        raise DomainError("tx intensities must lie in [0, 1]")
    on = state.segment_on.copy()
    off = state.segment_off.copy()
    bl = state.segment_bleached.copy()
    age = np.full(on.size, state.step, dtype=np.int64)
    res = np.array([state.reservoir_on, state.reservoir_off, state.reservoir_bleached])
    readout = np.empty(-(-levels.size // sample_every))
    dt = cfg.sim_step
    lam_dt = _rates(cfg) * dt
    head = _kernel.run_loop(
        on, off, bl, age, 0, res, levels, state.step, sample_every,
        g.ex[0], g.ex[1], g.tx[0], g.tx[1], g.rx[0], g.rx[1],
        cfg.tx_rate_const * dt, cfg.ex_rate_const * dt, lam_dt,
        cfg.bleach_rate_tx * dt, cfg.bleach_rate_ex * dt, cfg.bleach_rate_rx * dt,
        cfg.ex_active, g.mix_fraction, g.dispersion_alpha, readout,
    )
    step = state.step + levels.size
    _kernel.sync_all(on, off, age, step, lam_dt)
    final = ChannelState(
        np.roll(on, -head), np.roll(off, -head), np.roll(bl, -head),
        float(res[0]), float(res[1]), float(res[2]), step * dt, step,
    )
    return final, readout


def _samples_per_step(cfg: ChannelSimConfig, sample_interval: float) -> int:
    ratio = sample_interval / cfg.sim_step
    every = int(round(ratio))
    if every < 1 or abs(ratio - every) > 1e-6 * ratio:
        raise ConfigurationError("sample_interval must be an integer multiple of sim_step")
    return every


@dataclass
class SimulationResult:
    trace: Trace
    raw: np.ndarray
    final_state: ChannelState
    lead_in: float
    config: ChannelSimConfig = field(repr=False)


def simulate(schedule: TxSchedule, cfg: ChannelSimConfig, normalize: bool = True) -> SimulationResult:
    """Simulate the RX trace for ``schedule`` after ``cfg.lead_in`` seconds of idle."""
    if not schedule.duration > 0:
        raise DomainError("schedule duration must be positive")
    g = loop_geometry(cfg)
    dt_s = schedule.modulation.sample_interval
    every = _samples_per_step(cfg, dt_s)
    levels = schedule.step_intensities(cfg.sim_step, cfg.lead_in, cfg.lead_out)
    final, clean = advance(init_state(cfg), cfg, levels, every, g)
    rng = np.random.default_rng(cfg.rng_seed)
    raw = clean
    if cfg.rx_noise_sigma > 0:
        raw = clean + rng.normal(0.0, cfg.rx_noise_sigma, clean.size)
    raw = np.maximum(raw, 0.0)
    trace = Trace(dt_s, raw)
    if normalize:
        trace = trace.normalize()
    return SimulationResult(trace, raw, final, cfg.lead_in, cfg)


def simulate_trace(schedule: TxSchedule, cfg: ChannelSimConfig) -> Trace:
    """Normalized RX trace; sample ``n`` is taken at ``n * dt`` from simulation start."""
    return simulate(schedule, cfg).trace


def single_responses(cfg: ChannelSimConfig, modulation: ModulationConfig, count: int = 11,
                     spacing: float = 60.0, symbol: int | None = None) -> list[Trace]:
    """Record isolated responses to one symbol repeated every ``spacing`` seconds.

    Each returned trace starts at the onset of an irradiation and spans
    ``spacing`` seconds. The highest-intensity symbol is used by default.
    """
    M = modulation.modulation_order
    symbol = M - 1 if symbol is None else symbol
    if spacing < modulation.symbol_duration:
        raise DomainError("spacing must cover at least one symbol")
    slot = ModulationConfig(M, modulation.irradiation_duration,
                            spacing - modulation.irradiation_duration,
                            modulation.sample_interval, modulation.max_intensity)
    run = simulate(build_tx_schedule([symbol] * count, slot), replace(cfg, lead_out=0.0))
    trace = run.trace
    per = int(round(spacing / modulation.sample_interval))
    first = int(round(cfg.lead_in / modulation.sample_interval))
    out = []
    for c in range(count):
        lo = first + c * per
        chunk = trace.samples[lo:lo + per]
        if chunk.size < per:
            break
        out.append(Trace(modulation.sample_interval, chunk, False, trace.start_time + lo * trace.sample_interval))
    return out


def apply_linear_decay(trace: Trace, fraction: float, start: float | None = None,
                       end: float | None = None) -> Trace:
    """Scale the trace by a ramp falling linearly from 1 to ``1 - fraction``.

    Emulates a slow fluorescence loss; the result is re-normalized when the
    input was.
    """
    t = trace.times
    start = t[0] if start is None else start
    end = t[-1] if end is None else end
    if not end > start:
        raise DomainError("decay end must follow its start")
    ramp = 1.0 - fraction * np.clip((t - start) / (end - start), 0.0, 1.0)
    out = Trace(trace.sample_interval, trace.samples * ramp, False, trace.start_time)
    return out.normalize() if trace.normalized else out
