"""Domain types, modulation mathematics and testbed characterization."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigurationError, DomainError

AVOGADRO = 6.02214076e23  # 1/mol
ML = 1e-6  # m^3 per mL


@dataclass(frozen=True)
class PhysicalConfig:
    """Geometry, pump and protein parameters of the closed-loop testbed.

    Lengths in m, volumes in mL, flux in mL/min, concentration in mg/mL,
    molecular weight in g/mol, diffusivities and viscosity in m^2/s.
    """

    tube_radius: float
    tube_length: float
    reservoir_volume: float
    volumetric_flux: float
    effective_velocity: float
    total_volume: float
    kinematic_viscosity: float
    diffusion_coefficient: float
    relaxation_half_life: float
    gfpd_concentration: float
    molecular_weight: float
    tx_length: float
    ex_length: float
    tx_rx_distance: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{f.name} must be a positive number, got {value!r}")
        if self.tx_rx_distance + self.tx_length + self.ex_length >= self.tube_length:
            raise ConfigurationError("EX, TX and the TX-RX channel must fit on the tube")
        if self.reservoir_volume >= self.total_volume:
            raise ConfigurationError("reservoir_volume must be smaller than total_volume")

    @property
    def flux_m3_per_s(self) -> float:
        return self.volumetric_flux * ML / 60.0

    @classmethod
    def from_dict(cls, data: dict) -> "PhysicalConfig":
        names = {f.name for f in fields(cls)}
        missing = names - data.keys()
        if missing:
            raise ConfigurationError(f"missing physical parameters: {sorted(missing)}")
        return cls(**{k: float(data[k]) for k in names})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ModulationConfig:
    """Intensity modulation parameters. Durations in seconds."""

    modulation_order: int
    irradiation_duration: float
    guard_duration: float
    sample_interval: float = 0.1
    max_intensity: float = 1.0

    def __post_init__(self):
        m = self.modulation_order
        if not isinstance(m, (int, np.integer)) or m < 2 or (m & (m - 1)):
            raise ConfigurationError(f"modulation order must be a power of two >= 2, got {m!r}")
        if not self.irradiation_duration > 0:
            raise ConfigurationError("irradiation_duration must be positive")
        if not self.guard_duration >= 0:
            raise ConfigurationError("guard_duration must be non-negative")
        if not 0 < self.sample_interval <= self.irradiation_duration:
            raise ConfigurationError("sample_interval must lie in (0, irradiation_duration]")
        if not self.max_intensity > 0:
            raise ConfigurationError("max_intensity must be positive")

    @property
    def bits_per_symbol(self) -> int:
        return int(self.modulation_order).bit_length() - 1

    @property
    def symbol_duration(self) -> float:
        return self.irradiation_duration + self.guard_duration

    @property
    def filter_length(self) -> int:
        """Correlation filter length floor(T_S / dt)."""
        return int(math.floor(self.symbol_duration / self.sample_interval + 1e-9))

    @property
    def data_rate(self) -> float:
        return data_rate(self.modulation_order, self.symbol_duration)

    @classmethod
    def from_dict(cls, data: dict) -> "ModulationConfig":
        return cls(
            modulation_order=int(data["modulation_order"]),
            irradiation_duration=float(data["irradiation_duration"]),
            guard_duration=float(data["guard_duration"]),
            sample_interval=float(data.get("sample_interval", 0.1)),
            max_intensity=float(data.get("max_intensity", 1.0)),
        )

    def to_dict(self) -> dict:
        return asdict(self)


def intensity_ratio(i: int, M: int) -> float:
    """Relative TX intensity for symbol ``i``: 3i/(4(M-1)) + 1/4.

    Never zero, so every symbol is distinguishable from an idle TX.
    """
    if M < 2:
        raise DomainError(f"modulation order must be >= 2, got {M}")
    if not 0 <= i <= M - 1:
        raise DomainError(f"symbol {i} outside 0..{M - 1}")
    return 3.0 * i / (4.0 * (M - 1)) + 0.25


def data_rate(M: int, symbol_duration: float) -> float:
    """Data rate in bit/s."""
    if M < 2:
        raise DomainError(f"modulation order must be >= 2, got {M}")
    if not symbol_duration > 0:
        raise DomainError("symbol duration must be positive")
    return math.log2(M) / symbol_duration


def _bits_per_symbol(M: int) -> int:
    if M < 2 or M & (M - 1):
        raise DomainError(f"modulation order must be a power of two >= 2, got {M}")
    return M.bit_length() - 1


def gray_code(i):
    """Binary-reflected Gray code of ``i`` (works elementwise on arrays)."""
    return i ^ (i >> 1)


def gray_inverse(g):
    """Inverse of :func:`gray_code` for non-negative integers below 2**32."""
    g = np.asarray(g, dtype=np.int64)
    b = g.copy()
    shift = 1
    while shift < 32:
        b ^= b >> shift
        shift <<= 1
    return b


def gray_encode(bits, M: int) -> np.ndarray:
    """Map a bit sequence to symbols; each MSB-first group is a Gray codeword."""
    eta = _bits_per_symbol(M)
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % eta:
        raise DomainError(f"bit count {bits.size} not divisible by log2(M)={eta}")
    if np.any((bits != 0) & (bits != 1)):
        raise DomainError("bits must be 0 or 1")
    groups = bits.reshape(-1, eta)
    weights = 1 << np.arange(eta - 1, -1, -1, dtype=np.int64)
    return gray_inverse(groups @ weights)


def gray_decode(symbols, M: int) -> np.ndarray:
    """Inverse of :func:`gray_encode`."""
    eta = _bits_per_symbol(M)
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    if np.any((symbols < 0) | (symbols >= M)):
        raise DomainError(f"symbols must lie in 0..{M - 1}")
    codes = gray_code(symbols)
    shifts = np.arange(eta - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).ravel()


@dataclass(frozen=True)
class TxSchedule:
    """Piecewise-constant TX intensity for a symbol sequence.

    Symbol ``k`` irradiates with ``intensity_ratio(i[k], M)`` on
    ``[s_k, s_k + T_I)`` and is dark until the next start. By default
    ``s_k = k T_S``; explicit ``starts`` model a drifting transmitter clock.
    """

    symbols: np.ndarray
    modulation: ModulationConfig
    levels: np.ndarray = field(repr=False)
    starts: np.ndarray | None = field(default=None, repr=False)

    def start_times(self) -> np.ndarray:
        if self.starts is not None:
            return self.starts
        return np.arange(len(self.symbols)) * self.modulation.symbol_duration

    @property
    def duration(self) -> float:
        if not len(self.symbols):
            return 0.0
        return float(self.start_times()[-1]) + self.modulation.symbol_duration

    def intensity_at(self, t):
        """Intensity ratio at time(s) ``t`` relative to the schedule start."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        if len(self.symbols):
            s = self.start_times()
            k = np.searchsorted(s, t, side="right") - 1
            kk = np.clip(k, 0, len(s) - 1)
            on = (k >= 0) & (t < self.duration) & (t - s[kk] < self.modulation.irradiation_duration)
            out = np.where(on, self.levels[kk], 0.0)
        return out if out.ndim else float(out)

    def step_intensities(self, dt: float, lead_in: float = 0.0, lead_out: float = 0.0) -> np.ndarray:
        """Intensity sampled at the start of every simulation step of length ``dt``."""
        n = int(round((lead_in + self.duration + lead_out) / dt))
        t = (np.arange(n) - round(lead_in / dt)) * dt
        # nudge so a step starting on a slot boundary is not lost to rounding
        return np.asarray(self.intensity_at(t + 1e-6 * dt), dtype=float)


def build_tx_schedule(symbols, modulation: ModulationConfig, drift=None) -> TxSchedule:
    """Schedule for ``symbols``; ``drift[k]`` lengthens (or shortens) slot ``k`` in seconds."""
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    M = modulation.modulation_order
    if np.any((symbols < 0) | (symbols >= M)):
        raise DomainError(f"symbols must lie in 0..{M - 1}")
    table = np.array([intensity_ratio(i, M) for i in range(M)])
    starts = None
    if drift is not None:
        drift = np.asarray(drift, dtype=float).ravel()
        if drift.size != symbols.size:
            raise DomainError("drift needs one entry per symbol")
        slots = modulation.symbol_duration + drift
        if np.any(slots < modulation.irradiation_duration):
            raise DomainError("drift shortens a slot below the irradiation duration")
        starts = np.concatenate(([0.0], np.cumsum(slots[:-1])))
    return TxSchedule(symbols=symbols, modulation=modulation, levels=table[symbols], starts=starts)


def reynolds(config: PhysicalConfig) -> float:
    """2 r_T v_eff / nu."""
    return 2.0 * config.tube_radius * config.effective_velocity / config.kinematic_viscosity


def peclet(config: PhysicalConfig) -> float:
    """r_T v_eff / D."""
    return config.tube_radius * config.effective_velocity / config.diffusion_coefficient


def loop_time(config: PhysicalConfig) -> float:
    """Mean circulation time V_tot / Q in seconds."""
    return config.total_volume / (config.volumetric_flux / 60.0)


def reservoir_residence_time(config: PhysicalConfig) -> float:
    return config.reservoir_volume / (config.volumetric_flux / 60.0)


def molecule_count(config: PhysicalConfig) -> float:
    """C V_tot N_A / M_w (mg/mL * mL = mg, hence the 1e-3 to grams)."""
    grams = config.gfpd_concentration * config.total_volume * 1e-3
    return grams * AVOGADRO / config.molecular_weight


def flux_velocity(config: PhysicalConfig) -> float:
    """Mean velocity implied by Q and the tube cross-section."""
    return config.flux_m3_per_s / (math.pi * config.tube_radius**2)


@dataclass(frozen=True)
class Trace:
    """Uniformly sampled fluorescence signal, sample ``n`` at ``start_time + n*dt``."""

    sample_interval: float
    samples: np.ndarray
    normalized: bool = False
    start_time: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 1:
            raise DomainError("a trace needs at least one sample")
        if not self.sample_interval > 0:
            raise DomainError("sample_interval must be positive")
        if self.normalized and (samples.max() != 1.0 or samples.min() < 0.0):
            raise DomainError("normalized traces must lie in [0, 1] with maximum 1")

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) * self.sample_interval

    @property
    def duration(self) -> float:
        return self.samples.size * self.sample_interval

    def normalize(self) -> "Trace":
        """Scale so that the maximum sample equals one."""
        peak = self.samples.max()
        if not peak > 0:
            raise DomainError("cannot normalize a trace without a positive sample")
        return Trace(self.sample_interval, np.clip(self.samples / peak, 0.0, 1.0), True, self.start_time)

    def index_of(self, t: float) -> int:
        """Nearest sample index for absolute time ``t``."""
        return int(round((t - self.start_time) / self.sample_interval))


def characterize(config: PhysicalConfig, orders=(2, 4, 8), symbol_durations=(5.0, 10.0, 15.0)) -> dict:
    """Dimensionless numbers, loop timing, molecule budget and data rates."""
    return {
        "reynolds": reynolds(config),
        "peclet": peclet(config),
        "loop_time_s": loop_time(config),
        "reservoir_residence_s": reservoir_residence_time(config),
        "molecule_count": molecule_count(config),
        "flux_velocity_m_s": flux_velocity(config),
        "flux_reynolds": 2.0 * config.tube_radius * flux_velocity(config) / config.kinematic_viscosity,
        "data_rates": [
            {"M": M, "symbol_duration_s": T, "bit_per_s": data_rate(M, T)}
            for M in orders for T in symbol_durations
        ],
    }
