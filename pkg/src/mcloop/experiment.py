"""Message framing and simulate-then-decode experiment runs."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelSimConfig, SimulationResult, simulate, single_responses
from .detect import DecodeReport, DetectorConfig, decode_trace, pilot_sequence
from .errors import ConfigurationError, DomainError, UndefinedMetric
from .metrics import amed, ber, group_by_symbol
from .model import ModulationConfig, PhysicalConfig, Trace, build_tx_schedule, gray_encode
from .sync import (DEFAULT_LOESS_SPAN, ReceiveFilter, build_blind_corr_filter,
                   build_blind_diff_filter, build_data_filter)

SR_COUNT = 11
SR_SPACING = 60.0


@dataclass(frozen=True)
class Frame:
    """Transmitted symbol stream: settle symbols, pilots, then data."""

    settle: np.ndarray
    pilots: np.ndarray
    data: np.ndarray
    bits: np.ndarray

    @property
    def symbols(self) -> np.ndarray:
        return np.concatenate((self.settle, self.pilots, self.data))


def build_frame(M: int, total_symbols: int, detector: DetectorConfig, seed: int,
                message_bits=None) -> Frame:
    """Seeded random settle symbols, cyclic pilots and Gray-coded data.

    Random data bits are drawn when ``message_bits`` is None; a supplied
    message is repeated or cut to fill the data part.
    """
    skip, P = detector.skip_count, detector.pilot_count
    n_data = total_symbols - skip - P
    if n_data < 1:
        raise DomainError(f"{total_symbols} symbols leave no room for data after {skip + P} settle/pilot symbols")
    eta = M.bit_length() - 1
    rng = np.random.default_rng(seed)
    settle = rng.integers(0, M, skip)
    if message_bits is None:
        bits = rng.integers(0, 2, n_data * eta)
    else:
        msg = np.asarray(message_bits, dtype=np.int64).ravel()
        if msg.size == 0:
            raise DomainError("message is empty")
        bits = np.resize(msg, n_data * eta)
    return Frame(settle, pilot_sequence(M, P), gray_encode(bits, M), bits)


def build_filter(kind: str, modulation: ModulationConfig, channel: ChannelSimConfig | None = None,
                 loess_span: float = DEFAULT_LOESS_SPAN, responses=None) -> ReceiveFilter:
    """Blind filters from the modulation timing; data-based ones from single responses.

    Without recorded ``responses`` the single responses are simulated with
    ``channel``.
    """
    T_I, T_S, dt = modulation.irradiation_duration, modulation.symbol_duration, modulation.sample_interval
    if kind == "BCF":
        return build_blind_corr_filter(T_I, T_S, dt)
    if kind == "BDCF":
        return build_blind_diff_filter(T_I, T_S, dt)
    if responses is None:
        if channel is None:
            raise ConfigurationError(f"{kind} needs single responses or a channel to simulate them")
        responses = single_responses(channel, modulation, SR_COUNT, SR_SPACING)
    return build_data_filter(responses, kind, T_S, loess_span)


@dataclass
class ExperimentSpec:
    channel: ChannelSimConfig
    modulation: ModulationConfig
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    symbols: int = 2000
    filter_kind: str = "SDCF"
    p_fa: float = 1e-9
    search_radius: float = 0.08
    block_length: int = 50
    loess_span: float = DEFAULT_LOESS_SPAN
    seed: int = 0
    message_bits: np.ndarray | None = None

    def __post_init__(self):
        if self.symbols < 1:
            raise ConfigurationError("symbols must be positive")
        if self.filter_kind not in ("SCF", "SDCF", "BCF", "BDCF"):
            raise ConfigurationError(f"unknown filter kind {self.filter_kind!r}")
        if not 0.0 < self.p_fa < 1.0:
            raise ConfigurationError("p_fa must lie in (0, 1)")
        if not 0.0 <= self.search_radius <= 1.0:
            raise ConfigurationError("search radius must lie in [0, 1]")
        self.detector.check(self.modulation.modulation_order)
        if self.symbols <= self.detector.skip_count + self.detector.pilot_count:
            raise ConfigurationError("symbols must exceed settle plus pilot symbols")

    def to_dict(self) -> dict:
        """Sectioned layout shared with the JSON config files."""
        channel = self.channel.to_dict()
        physical = channel.pop("physical")
        channel.pop("rng_seed")
        message = {"symbols": self.symbols, "seed": self.seed, "source": "random"}
        if self.message_bits is not None:
            message["source"] = "bits"
            message["bits"] = "".join(str(int(b)) for b in np.asarray(self.message_bits).ravel())
        return {
            "physical": physical,
            "channel": channel,
            "modulation": self.modulation.to_dict(),
            "detector": self.detector.to_dict(),
            "receiver": {
                "filter_kind": self.filter_kind,
                "p_fa": self.p_fa,
                "search_radius": self.search_radius,
                "block_length": self.block_length,
                "loess_span": self.loess_span,
            },
            "message": message,
        }

    @classmethod
    def from_config(cls, config: dict) -> "ExperimentSpec":
        """Build from a sectioned config (see ``data/paper_testbed.json``)."""
        try:
            physical = PhysicalConfig.from_dict(config["physical"])
            modulation = ModulationConfig.from_dict(config["modulation"])
        except KeyError as exc:
            raise ConfigurationError(f"config lacks section or field {exc}") from None
        detector = DetectorConfig(**config.get("detector", {}))
        message = dict(config.get("message", {}))
        seed = int(message.get("seed", 0))
        channel = ChannelSimConfig.from_dict({**config.get("channel", {}), "rng_seed": seed}, physical)
        bits = None
        if message.get("source", "random") == "bits":
            bits = parse_bits(message.get("bits", ""))
        receiver = config.get("receiver", {})
        known = {"filter_kind", "p_fa", "search_radius", "block_length", "loess_span"}
        unknown = set(receiver) - known
        if unknown:
            raise ConfigurationError(f"unknown receiver parameters: {sorted(unknown)}")
        return cls(channel, modulation, detector, int(message.get("symbols", 2000)),
                   seed=seed, message_bits=bits, **receiver)


def parse_bits(text: str) -> np.ndarray:
    """Bits from a string of 0/1 characters; whitespace is ignored."""
    chars = "".join(text.split())
    if not chars or set(chars) - {"0", "1"}:
        raise ConfigurationError("message bits must be a non-empty string of 0 and 1")
    return np.frombuffer(chars.encode(), dtype=np.uint8) - ord("0")


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    frame: Frame
    simulation: SimulationResult
    filter: ReceiveFilter
    report: DecodeReport

    @property
    def trace(self) -> Trace:
        return self.simulation.trace


def summarize(report: DecodeReport, frame_symbols, M: int, detector: DetectorConfig) -> dict:
    """BER over data symbols and AMED over the data detection samples."""
    skip, P = detector.skip_count, detector.pilot_count
    true = np.asarray(frame_symbols, dtype=np.int64)
    det = report.detected
    out = {"decoded_symbols": int(det.size)}
    n = min(true.size, det.size)
    if n > skip + P:
        out["ber"] = ber(true[skip:n], det[skip:n], M, P)
        out["evaluated_symbols"] = n - skip - P
        out["bit_errors"] = int(round(out["ber"] * (n - skip - P) * (M.bit_length() - 1)))
        try:
            out["amed"] = amed(group_by_symbol(report.samples[skip + P:n], true[skip + P:n], M))
        except UndefinedMetric:
            out["amed"] = None
    return out


def run_experiment(spec: ExperimentSpec, trace_hook=None, drift=None) -> ExperimentResult:
    """Simulate the framed message through the loop and decode it.

    ``trace_hook`` may transform the simulated trace (e.g. inject a decay)
    before decoding; ``drift`` perturbs the TX slot lengths (see
    :func:`build_tx_schedule`).
    """
    M = spec.modulation.modulation_order
    channel = replace(spec.channel, rng_seed=spec.seed)
    frame = build_frame(M, spec.symbols, spec.detector, spec.seed, spec.message_bits)
    sim = simulate(build_tx_schedule(frame.symbols, spec.modulation, drift), channel)
    trace = sim.trace if trace_hook is None else trace_hook(sim.trace)
    sim = replace(sim, trace=trace)
    filt = build_filter(spec.filter_kind, spec.modulation, channel, spec.loess_span)
    report = decode_trace(trace, spec.modulation, spec.detector, filt, spec.p_fa,
                          spec.search_radius, frame.pilots, spec.symbols, spec.block_length)
    for k, r in enumerate(report.records):
        r.true = int(frame.symbols[k])
    report.config = spec.to_dict()
    if report.status == "ok":
        report.metrics = summarize(report, frame.symbols, M, spec.detector)
    return ExperimentResult(spec, frame, sim, filt, report)
