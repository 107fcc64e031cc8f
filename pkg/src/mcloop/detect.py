"""Adaptive-threshold symbol detection and the end-to-end decode pipeline."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CalibrationError, DomainError, EndOfTrace
from .model import ModulationConfig, Trace
from .sync import (ReceiveFilter, SyncState, StartDetection, detect_transmission_start,
                   estimate_symbol_start, metric_at)


@dataclass(frozen=True)
class ThresholdSet:
    set_index: int
    values: tuple

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        object.__setattr__(self, "values", v)
        if self.set_index < 0:
            raise DomainError("set index must be non-negative")
        if any(not b > a for a, b in zip(v, v[1:])):
            raise DomainError(f"thresholds must be strictly ascending: {v}")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class DetectorConfig:
    skip_count: int = 80
    pilot_count: int = 130
    update_period: int = 1
    window_width: int = 50
    adaptive: bool = True

    def __post_init__(self):
        if self.skip_count < 0:
            raise DomainError("skip_count must be non-negative")
        if self.update_period < 1 or self.window_width < 1:
            raise DomainError("update_period and window_width must be >= 1")
        if self.update_period + self.pilot_count - self.window_width < 0:
            raise DomainError("update windows must not reach into the settle symbols (F + P - W >= 0)")

    def check(self, M: int):
        if self.pilot_count < M:
            raise DomainError(f"need at least M={M} pilots, got {self.pilot_count}")

    def window_indices(self, l: int) -> range:
        """Symbol indices feeding threshold set ``l`` (l >= 1)."""
        end = l * self.update_period + self.skip_count + self.pilot_count
        return range(end - self.window_width, end)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SymbolRecord:
    k: int
    start: float
    d: float
    detected: int
    true: int | None = None


def detection_sample(filt: ReceiveFilter, trace: Trace, start: float) -> float:
    """Metric value of the window beginning at ``start``."""
    n = trace.index_of(start)
    return metric_at(filt, trace.samples, n)


def class_means(samples, labels, M: int) -> list:
    """Per-class averages; None for classes without samples."""
    samples = np.asarray(samples, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    out = []
    for i in range(M):
        sel = samples[labels == i]
        out.append(float(sel.mean()) if sel.size else None)
    return out


def init_thresholds(pilot_samples, pilot_symbols, M: int) -> ThresholdSet:
    """Midpoints between the mean detection samples of adjacent pilot classes."""
    if len(pilot_samples) != len(pilot_symbols):
        raise DomainError("pilot samples and symbols differ in length")
    means = class_means(pilot_samples, pilot_symbols, M)
    missing = [i for i, m in enumerate(means) if m is None]
    if missing:
        raise DomainError(f"pilot classes without samples: {missing}")
    if any(not b > a for a, b in zip(means, means[1:])):
        raise CalibrationError(f"pilot class means are not ascending: {means}")
    return ThresholdSet(0, [(a + b) / 2 for a, b in zip(means, means[1:])])


def update_thresholds(previous: ThresholdSet, samples, detected, M: int) -> ThresholdSet:
    """Next threshold set from recent samples grouped by their detected symbol.

    Thresholds whose two neighbouring classes are both present are recomputed
    as midpoints; the rest move by the average change of the recomputed ones.
    If nothing can be recomputed, or the result is not ascending, the previous
    values are kept.
    """
    means = class_means(samples, detected, M)
    prev = np.asarray(previous.values)
    new = np.full(M - 1, np.nan)
    for q in range(M - 1):
        if means[q] is not None and means[q + 1] is not None:
            new[q] = (means[q] + means[q + 1]) / 2
    known = ~np.isnan(new)
    nxt = previous.set_index + 1
    if not known.any():
        return ThresholdSet(nxt, prev)
    shift = float(np.mean(new[known] - prev[known]))
    new[~known] = prev[~known] + shift
    if np.any(np.diff(new) <= 0):
        return ThresholdSet(nxt, prev)
    return ThresholdSet(nxt, new)


def detect_symbol(d: float, thresholds: ThresholdSet) -> int:
    """Number of thresholds at or below ``d``."""
    return int(np.searchsorted(np.asarray(thresholds.values), d, side="right"))


def pilot_sequence(M: int, count: int) -> np.ndarray:
    """0, 1, ..., M-1 repeated to ``count`` symbols."""
    return np.arange(count, dtype=np.int64) % M


@dataclass
class DecodeReport:
    status: str
    start: StartDetection | None
    records: list = field(default_factory=list)
    thresholds: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)

    @property
    def detected(self) -> np.ndarray:
        return np.array([r.detected for r in self.records], dtype=np.int64)

    @property
    def samples(self) -> np.ndarray:
        return np.array([r.d for r in self.records])

    @property
    def starts(self) -> np.ndarray:
        return np.array([r.start for r in self.records])

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "transmission_start": None if self.start is None else self.start.time,
            "config": self.config,
            "metrics": self.metrics,
            "records": [asdict(r) for r in self.records],
            "thresholds": [{"set_index": t.set_index, "values": list(t.values)} for t in self.thresholds],
        }


def decode_trace(trace: Trace, modulation: ModulationConfig, detector: DetectorConfig,
                 filt: ReceiveFilter, p_fa: float = 1e-9, search_radius: float = 0.08,
                 pilots=None, symbol_count: int | None = None, block_length: int = 50) -> DecodeReport:
    """Run start detection, timing recovery and adaptive detection on ``trace``.

    ``pilots`` defaults to the cyclic pilot sequence. When ``symbol_count`` is
    given, running out of trace before that many symbols raises
    :class:`EndOfTrace`; otherwise decoding stops at the end of the trace.
    A trace without a detectable start gives a report with status
    ``"start_not_detected"``.
    """
    M = modulation.modulation_order
    detector.check(M)
    if abs(filt.sample_interval - trace.sample_interval) > 1e-9 * trace.sample_interval:
        raise DomainError("filter and trace sample intervals differ")
    P, skip = detector.pilot_count, detector.skip_count
    pilots = pilot_sequence(M, P) if pilots is None else np.asarray(pilots, dtype=np.int64)
    if pilots.size != P:
        raise DomainError(f"expected {P} pilot symbols, got {pilots.size}")

    start = detect_transmission_start(trace, block_length, p_fa)
    if not start.detected:
        return DecodeReport("start_not_detected", start)

    state = SyncState(modulation.symbol_duration, search_radius, start_hint=start.time)
    starts, ds = [], []
    limit = symbol_count if symbol_count is not None else np.iinfo(np.int64).max
    while len(starts) < limit:
        try:
            t = estimate_symbol_start(state, trace, filt)
            d = detection_sample(filt, trace, t)
        except EndOfTrace:
            if symbol_count is not None:
                raise EndOfTrace(f"trace ends after {len(starts)} of {symbol_count} symbols") from None
            break
        starts.append(t)
        ds.append(d)
    if len(ds) < skip + P:
        raise EndOfTrace(f"trace holds {len(ds)} symbols, fewer than settle plus pilot symbols")

    ds = np.asarray(ds)
    xi = init_thresholds(ds[skip:skip + P], pilots, M)
    trajectory = [xi]
    detected = np.empty(len(ds), dtype=np.int64)
    for k in range(skip + P):
        detected[k] = detect_symbol(ds[k], xi)
    F = detector.update_period
    for k in range(skip + P, len(ds)):
        l = (k - skip - P) // F
        if detector.adaptive and l > xi.set_index:
            idx = detector.window_indices(l)
            xi = update_thresholds(xi, ds[idx.start:idx.stop], detected[idx.start:idx.stop], M)
            trajectory.append(xi)
        detected[k] = detect_symbol(ds[k], xi)

    records = [SymbolRecord(k, starts[k], float(ds[k]), int(detected[k])) for k in range(len(ds))]
    for k in range(skip, skip + P):
        records[k].true = int(pilots[k - skip])
    return DecodeReport("ok", start, records, trajectory)
