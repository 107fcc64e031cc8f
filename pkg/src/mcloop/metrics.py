"""Bit error rate, class separation and eye-diagram data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UndefinedMetric
from .model import Trace, gray_decode


def bit_errors(true_symbols, detected_symbols, M: int, P: int = 0) -> np.ndarray:
    """Per-bit error indicator for the symbols after the first ``P``."""
    a = np.asarray(true_symbols, dtype=np.int64).ravel()
    b = np.asarray(detected_symbols, dtype=np.int64).ravel()
    if a.size != b.size:
        raise DomainError(f"sequence lengths differ: {a.size} vs {b.size}")
    if not 0 <= P < a.size:
        raise DomainError(f"need more than P={P} symbols, got {a.size}")
    return gray_decode(a[P:], M) != gray_decode(b[P:], M)


def ber(true_symbols, detected_symbols, M: int, P: int = 0) -> float:
    """Fraction of Gray-mapped bits in error, ignoring the first ``P`` symbols."""
    return float(bit_errors(true_symbols, detected_symbols, M, P).mean())


def moving_ber(true_symbols, detected_symbols, M: int, window: int = 2000, P: int = 0) -> np.ndarray:
    """BER over sliding windows of ``window`` bits (one value per full window)."""
    errs = bit_errors(true_symbols, detected_symbols, M, P).astype(float)
    if not 1 <= window <= errs.size:
        raise DomainError(f"window must lie in 1..{errs.size}")
    c = np.concatenate(([0.0], np.cumsum(errs)))
    return (c[window:] - c[:-window]) / window


def amed(samples_by_class) -> float:
    """Smallest gap between the class means of the detection samples.

    ``samples_by_class`` is a sequence (or dict) of per-class sample sets;
    every class must be populated.
    """
    groups = list(samples_by_class.values()) if isinstance(samples_by_class, dict) else list(samples_by_class)
    if len(groups) < 2:
        raise UndefinedMetric("AMED needs at least two classes")
    means = []
    for i, g in enumerate(groups):
        g = np.asarray(g, dtype=float).ravel()
        if g.size == 0:
            raise UndefinedMetric(f"class {i} has no samples")
        means.append(g.mean())
    means = np.sort(means)
    return float(np.diff(means).min())


def group_by_symbol(samples, symbols, M: int) -> list:
    samples = np.asarray(samples, dtype=float)
    symbols = np.asarray(symbols, dtype=np.int64)
    return [samples[symbols == i] for i in range(M)]


def windowed_amed(samples, symbols, M: int, window: int = 500) -> np.ndarray:
    """AMED over consecutive non-overlapping windows; NaN where undefined."""
    samples = np.asarray(samples, dtype=float)
    symbols = np.asarray(symbols, dtype=np.int64)
    out = []
    for lo in range(0, samples.size - window + 1, window):
        try:
            out.append(amed(group_by_symbol(samples[lo:lo + window], symbols[lo:lo + window], M)))
        except UndefinedMetric:
            out.append(np.nan)
    return np.asarray(out)


@dataclass(frozen=True)
class EyeData:
    """Eye-diagram points; one row per sample of every traced symbol."""

    phase: np.ndarray
    value: np.ndarray
    symbol: np.ndarray
    k: np.ndarray
    symbol_duration: float
    sample_interval: float


def eye_diagram(trace: Trace, symbol_starts, symbol_duration: float, symbols,
                align_max_at: float | None = 1.0, indices=None) -> EyeData:
    """Fold the trace into one symbol duration per symbol.

    Phase zero is each estimated symbol start. With ``align_max_at`` set, every
    sweep is shifted so its largest sample sits at that phase (wrapped into
    the symbol duration). Sweeps running past the end of the trace are dropped.
    """
    starts = np.asarray(symbol_starts, dtype=float)
    symbols = np.asarray(symbols, dtype=np.int64)
    if starts.size != symbols.size:
        raise DomainError("symbol_starts and symbols differ in length")
    dt = trace.sample_interval
    n = int(np.floor(symbol_duration / dt + 1e-9))
    ks = range(starts.size) if indices is None else indices
    phase, value, sym, kk = [], [], [], []
    base = np.arange(n) * dt
    for k in ks:
        lo = trace.index_of(starts[k])
        if lo < 0 or lo + n > len(trace):
            continue
        sweep = trace.samples[lo:lo + n]
        ph = base
        if align_max_at is not None:
            ph = np.mod(base - base[int(np.argmax(sweep))] + align_max_at, n * dt)
        phase.append(ph)
        value.append(sweep)
        sym.append(np.full(n, symbols[k]))
        kk.append(np.full(n, k))
    if not phase:
        empty = np.empty(0)
        return EyeData(empty, empty, empty.astype(np.int64), empty.astype(np.int64), symbol_duration, dt)
    return EyeData(np.concatenate(phase), np.concatenate(value), np.concatenate(sym),
                   np.concatenate(kk), symbol_duration, dt)


def eye_gaps(eye: EyeData, M: int) -> np.ndarray:
    """Vertical gap between adjacent class bands at every phase bin.

    Classes are ordered by their mean value at each phase; the gap between two
    neighbours is the distance from the top of the lower band to the bottom of
    the upper one, clamped at zero. Returns an array of shape (phases, M - 1),
    NaN where a class has no samples.
    """
    bins = np.rint(eye.phase / eye.sample_interval).astype(np.int64)
    nbins = int(np.floor(eye.symbol_duration / eye.sample_interval + 1e-9))
    bins = np.mod(bins, nbins)
    out = np.full((nbins, M - 1), np.nan)
    for b in range(nbins):
        sel = bins == b
        bands = []
        for i in range(M):
            v = eye.value[sel & (eye.symbol == i)]
            if v.size == 0:
                break
            bands.append((v.mean(), v.min(), v.max()))
        else:
            bands.sort()
            out[b] = [max(0.0, hi[1] - lo[2]) for lo, hi in zip(bands, bands[1:])]
    return out


def eye_opening(eye: EyeData, M: int) -> tuple[float, float]:
    """Largest minimum class gap over all phases, and the phase where it occurs."""
    gaps = eye_gaps(eye, M)
    worst = np.min(gaps, axis=1)
    if np.all(np.isnan(worst)):
        raise UndefinedMetric("no phase holds samples of every class")
    b = int(np.nanargmax(worst))
    return float(worst[b]), b * eye.sample_interval
