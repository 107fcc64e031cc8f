"""Receiver front end: wake-up detection, receive filters and symbol timing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .errors import DegenerateError, DomainError, EndOfTrace
from .loess import loess, span_to_window
from .model import Trace

CORRELATION_KINDS = ("SCF", "BCF")
DIFFERENTIAL_KINDS = ("SDCF", "BDCF")
FILTER_KINDS = CORRELATION_KINDS + DIFFERENTIAL_KINDS
DEFAULT_LOESS_SPAN = 0.25
INITIAL_RADIUS = 0.5


@dataclass(frozen=True)
class NoiseModel:
    mean: float
    variance: float
    sample_count: int

    def __post_init__(self):
        if self.variance < 0:
            raise DomainError("variance must be non-negative")
        if self.sample_count < 2:
            raise DomainError("a noise model needs at least two samples")


def estimate_noise(samples) -> NoiseModel:
    """Sample mean and unbiased variance."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise DomainError("noise estimation needs at least two samples")
    return NoiseModel(float(x.mean()), float(x.var(ddof=1)), int(x.size))


def gaussian_cdf(x, mean: float = 0.0, variance: float = 1.0) -> float:
    if not variance > 0:
        raise DegenerateError("variance must be positive")
    return 0.5 * math.erfc(-(x - mean) / math.sqrt(2.0 * variance))


def gaussian_inv_cdf(p: float, mean: float = 0.0, variance: float = 1.0) -> float:
    """Quantile of N(mean, variance).

    Uses the stdlib rational approximation (Wichura's AS241), which is good to
    double precision, followed by a Newton step on the erfc-based CDF.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability {p} outside (0, 1)")
    if not variance > 0:
        raise DegenerateError("variance must be positive")
    z = NormalDist().inv_cdf(p)
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    if pdf > 0:
        z -= (0.5 * math.erfc(-z / math.sqrt(2.0)) - p) / pdf
    return mean + math.sqrt(variance) * z


@dataclass
class StartDetection:
    """Outcome of wake-up detection; ``index`` is None when nothing triggered."""

    index: int | None
    time: float | None
    thresholds: list = field(default_factory=list)

    @property
    def detected(self) -> bool:
        return self.index is not None


def block_thresholds(samples, block_length: int = 50, p_fa: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Threshold of every complete block, derived from the block before it.

    Returns ``(xi, strict)``: ``xi[j]`` applies to block ``j + 1``; ``strict[j]``
    marks zero-variance blocks, whose threshold is the block mean and which
    trigger only strictly below it.
    """
    L = int(block_length)
    if L < 2:
        raise DomainError("block_length must be at least 2")
    if not 0.0 < p_fa < 1.0:
        raise DomainError("p_fa must lie in (0, 1)")
    r = np.asarray(samples, dtype=float)
    blocks = r[:(r.size // L) * L].reshape(-1, L)
    mean = blocks.mean(axis=1)
    var = blocks.var(axis=1, ddof=1)
    z = gaussian_inv_cdf(p_fa)
    strict = var == 0
    xi = np.where(strict, mean, mean + z * np.sqrt(var))
    return xi, strict


def threshold_crossings(samples, block_length: int = 50, p_fa: float = 1e-9) -> np.ndarray:
    """Indicator of every sample at or below the threshold of its block.

    Samples of the first block (no threshold yet) are never flagged.
    """
    r = np.asarray(samples, dtype=float)
    L = int(block_length)
    xi, strict = block_thresholds(r, L, p_fa)
    hit = np.zeros(r.size, dtype=bool)
    if xi.size == 0:
        return hit
    # block j's threshold covers samples [(j+1)L, (j+2)L)
    idx = np.arange(L, r.size)
    j = np.minimum(idx // L - 1, xi.size - 1)
    below = r[idx] <= xi[j]
    below &= ~strict[j] | (r[idx] < xi[j])
    hit[L:] = below
    return hit


def detect_transmission_start(trace: Trace, block_length: int = 50, p_fa: float = 1e-9) -> StartDetection:
    """Find the first sample that drops below a noise-derived threshold.

    The noise statistics of every block of ``block_length`` samples set the
    threshold for the next block, so the threshold follows slow drifts of the
    idle level. A block with zero variance triggers on any sample strictly
    below its mean.
    """
    L = int(block_length)
    r = trace.samples
    xi, _ = block_thresholds(r, L, p_fa)
    # only samples that have a complete previous block are tested
    hits = np.flatnonzero(threshold_crossings(r[:(xi.size + 1) * L], L, p_fa))
    if hits.size == 0:
        applied = min(xi.size, -(-r.size // L) - 1)
        return StartDetection(None, None, xi[:applied].tolist())
    n = int(hits[0])
    return StartDetection(n, float(trace.times[n]), xi[:n // L].tolist())


@dataclass(frozen=True)
class ReceiveFilter:
    kind: str
    coefficients: np.ndarray
    sample_interval: float

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise DomainError(f"unknown filter kind {self.kind!r}")
        c = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", c)
        if c.ndim != 1 or c.size < 1:
            raise DomainError("filter needs at least one coefficient")

    @property
    def differential(self) -> bool:
        return self.kind in DIFFERENTIAL_KINDS

    @property
    def support(self) -> int:
        """Number of raw trace samples one metric evaluation consumes (N)."""
        return self.coefficients.size + (1 if self.differential else 0)

    def scaled(self, alpha: float) -> "ReceiveFilter":
        return ReceiveFilter(self.kind, alpha * self.coefficients, self.sample_interval)


def filter_length(symbol_duration: float, dt: float) -> int:
    return int(math.floor(symbol_duration / dt + 1e-9))


def _blind_grid(T_I, T_S, dt, count):
    if not 0 < T_I <= T_S:
        raise DomainError("blind filters need 0 < T_I <= T_S")
    if not dt > 0:
        raise DomainError("sample interval must be positive")
    n = np.arange(count)
    t = n * dt
    # branch by sample index so t = T_I is not lost to rounding of n * dt
    first = n <= math.floor(T_I / dt + 1e-9)
    return t, first


def build_blind_corr_filter(T_I: float, T_S: float, dt: float) -> ReceiveFilter:
    """Rises as -t^2/(2 T_I) + t to T_I/2 during irradiation, then decays quadratically to 0 at T_S."""
    N = filter_length(T_S, dt)
    t, first = _blind_grid(T_I, T_S, dt, N)
    g = -t**2 / (2 * T_I) + t
    if T_S > T_I:
        tail = 0.5 * T_I / (T_S - T_I) ** 2 * (t**2 - 2 * T_S * t + T_S**2)
        g = np.where(first, g, tail)
    return ReceiveFilter("BCF", g, dt)


def build_blind_diff_filter(T_I: float, T_S: float, dt: float) -> ReceiveFilter:
    """-1 -> 0 ramp during irradiation, then a jump to 1 decaying to 0 at T_S."""
    if not T_I < T_S:
        raise DomainError("the differential blind filter needs T_I < T_S")
    N = filter_length(T_S, dt)
    t, first = _blind_grid(T_I, T_S, dt, N - 1)
    g = np.where(first, t / T_I - 1.0, (T_S - t) / (T_S - T_I))
    return ReceiveFilter("BDCF", g, dt)


def average_responses(responses) -> np.ndarray:
    """Pointwise mean of the single responses, dropping the first one."""
    responses = list(responses)
    if len(responses) < 2:
        raise DomainError("need at least two single responses")
    dts = {round(r.sample_interval, 12) for r in responses}
    lengths = {len(r) for r in responses}
    if len(dts) != 1 or len(lengths) != 1:
        raise DomainError("single responses must share sample interval and length")
    return np.mean([r.samples for r in responses[1:]], axis=0)


def build_data_filter(responses, kind: str, symbol_duration: float,
                      loess_span: float = DEFAULT_LOESS_SPAN, offset: int = 0) -> ReceiveFilter:
    """Receive filter from recorded single responses.

    The responses are averaged (first one discarded), LOESS-smoothed and cut
    to the filter support starting ``offset`` samples into the response.
    """
    if kind not in ("SCF", "SDCF"):
        raise DomainError(f"data-based filters are SCF or SDCF, got {kind!r}")
    responses = list(responses)
    avg = average_responses(responses)
    dt = responses[0].sample_interval
    N = filter_length(symbol_duration, dt)
    if avg.size < offset + N:
        raise DomainError(f"single responses hold {avg.size} samples, need {offset + N}")
    smooth = loess(avg, span_to_window(loess_span, N))
    if kind == "SCF":
        g = 1.0 - smooth[offset:offset + N]
    else:
        g = np.diff(smooth)[offset:offset + N - 1]
    return ReceiveFilter(kind, g, dt)


def process_window(kind: str, raw) -> np.ndarray:
    """Map N raw samples to the filter input: 1 - r or forward differences."""
    raw = np.asarray(raw, dtype=float)
    if kind in DIFFERENTIAL_KINDS:
        return np.diff(raw)
    return 1.0 - raw


def sync_metric(filt: ReceiveFilter, processed) -> float:
    """Inner product of the filter with an already processed window."""
    processed = np.asarray(processed, dtype=float)
    if processed.shape != filt.coefficients.shape:
        raise DomainError(f"window length {processed.size} != filter length {filt.coefficients.size}")
    return float(filt.coefficients @ processed)


def metric_at(filt: ReceiveFilter, samples: np.ndarray, n: int) -> float:
    """Metric for the window of raw samples starting at index ``n``."""
    N = filt.support
    if n < 0 or n + N > samples.size:
        raise EndOfTrace(f"window [{n}, {n + N}) outside trace of {samples.size} samples")
    return sync_metric(filt, process_window(filt.kind, samples[n:n + N]))


def metric_range(filt: ReceiveFilter, samples: np.ndarray, lo: int, hi: int) -> np.ndarray:
    """Metric for every window start in ``lo..hi`` inclusive."""
    N = filt.support
    seg = np.asarray(samples[lo:hi + N], dtype=float)
    x = process_window(filt.kind, seg)
    return np.correlate(x, filt.coefficients, mode="valid")


@dataclass
class SyncState:
    """Symbol-by-symbol timing state.

    ``last_start`` is None until the first symbol has been located; the first
    search is centred on ``start_hint`` with radius ``INITIAL_RADIUS``.
    """

    symbol_duration: float
    search_radius: float = 0.08
    last_start: float | None = None
    start_hint: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.search_radius <= 1.0:
            raise DomainError("search radius must lie in [0, 1]")
        if not self.symbol_duration > 0:
            raise DomainError("symbol duration must be positive")

    def predicted(self) -> tuple[float, float]:
        if self.last_start is None:
            if self.start_hint is None:
                raise DomainError("no previous start and no start hint")
            return self.start_hint, INITIAL_RADIUS
        return self.last_start + self.symbol_duration, self.search_radius


def search_interval(state: SyncState, trace: Trace, filt: ReceiveFilter) -> tuple[int, int]:
    """Sample indices of the search interval, clipped to valid window starts."""
    centre, radius = state.predicted()
    dt = trace.sample_interval
    half = radius * state.symbol_duration
    lo = math.ceil((centre - half - trace.start_time) / dt - 1e-9)
    hi = math.floor((centre + half - trace.start_time) / dt + 1e-9)
    last = len(trace) - filt.support
    if lo > last or hi < 0:
        raise EndOfTrace(f"search interval around t={centre:.3f} s lies outside the trace")
    return max(lo, 0), min(hi, last)


def estimate_symbol_start(state: SyncState, trace: Trace, filt: ReceiveFilter) -> float:
    """Locate the next symbol start and record it in ``state``.

    Returns the time of the metric maximum in the search interval; the
    earliest sample wins ties.
    """
    lo, hi = search_interval(state, trace, filt)
    m = metric_range(filt, trace.samples, lo, hi)
    n = lo + int(np.argmax(m))
    t = float(trace.start_time + n * trace.sample_interval)
    state.last_start = t
    return t
