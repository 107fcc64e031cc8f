"""Measurements of inter-loop and offset ISI on single-symbol responses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .model import Trace


def deficit(trace: Trace, onset: float) -> tuple[np.ndarray, np.ndarray]:
    """Relative fluorescence loss ``1 - r / r_idle`` and time since ``onset``.

    ``r_idle`` is the mean of the samples before the onset.
    """
    t = trace.times - onset
    idle = trace.samples[t < 0]
    if idle.size == 0:
        raise DomainError("trace has no samples before the onset")
    return 1.0 - trace.samples / idle.mean(), t


def _trapezoid(y, t):
    return float(np.sum((y[1:] + y[:-1]) * np.diff(t)) / 2.0)


def _moment(u, t):
    w = np.clip(u, 0.0, None)
    return _trapezoid(w, t), _trapezoid(w * t, t)


@dataclass(frozen=True)
class Recurrence:
    """Position and size of the first and second passage of an OFF pulse.

    Times are relative to the irradiation onset. ``mean_delay`` is the
    difference of the deficit centroids, the second one completed with an
    exponential tail where the third passage starts to overlap. ``minima_delay``
    separates the two deepest points.
    """

    primary_depth: float
    primary_centroid: float
    primary_minimum: float
    secondary_depth: float
    secondary_centroid: float
    secondary_minimum: float
    window: tuple

    @property
    def mean_delay(self) -> float:
        return self.secondary_centroid - self.primary_centroid

    @property
    def minima_delay(self) -> float:
        return self.secondary_minimum - self.primary_minimum


def recurrence(trace: Trace, onset: float, level: float = 0.02, tail_fit: float = 15.0) -> Recurrence:
    """Locate the primary dip and its first recurrence after one loop.

    Lobe edges are where the deficit crosses ``level`` times the primary
    depth. The second lobe is cut where a third passage could begin, one
    first-return delay after its own start.
    """
    u, t = deficit(trace, onset)
    after = t >= 0
    u, t = u[after], t[after]
    depth1 = u.max()
    if not depth1 > 0:
        raise DomainError("no dip after the onset")
    thr = level * depth1
    above = u >= thr
    s1 = int(np.argmax(above))
    e1 = s1 + int(np.argmax(~above[s1:]))
    if e1 == s1:
        raise DomainError("primary dip does not end inside the trace")
    rest = np.flatnonzero(above[e1:])
    if rest.size == 0:
        raise DomainError("no recurrence above the detection level")
    s2 = e1 + int(rest[0])
    first_return = t[s2] - t[s1]
    e2 = int(np.searchsorted(t, t[s2] + first_return))
    if e2 >= t.size:
        raise DomainError("trace too short to isolate the recurrence")

    a1, m1 = _moment(u[s1:e1], t[s1:e1])
    a2, m2 = _moment(u[s2:e2], t[s2:e2])
    # exponential tail beyond the cut, from a log-linear fit of the decay
    fit = (t >= t[e2] - tail_fit) & (t <= t[e2]) & (u > 0)
    slope = np.polyfit(t[fit], np.log(u[fit]), 1)[0] if fit.sum() > 2 else 0.0
    if slope < 0:
        tau = -1.0 / slope
        ue, te = u[e2], t[e2]
        a2 += ue * tau
        m2 += ue * tau * (te + tau)

    return Recurrence(
        primary_depth=float(depth1),
        primary_centroid=float(m1 / a1),
        primary_minimum=float(t[s1 + int(np.argmax(u[s1:e1]))]),
        secondary_depth=float(u[s2:e2].max()),
        secondary_centroid=float(m2 / a2),
        secondary_minimum=float(t[s2 + int(np.argmax(u[s2:e2]))]),
        window=(float(t[s2]), float(t[e2])),
    )


def window_depth(trace: Trace, onset: float, start: float, end: float) -> float:
    """Largest deficit within ``[start, end]`` seconds after the onset."""
    u, t = deficit(trace, onset)
    sel = (t >= start) & (t <= end)
    if not sel.any():
        raise DomainError("window holds no samples")
    return float(u[sel].max())


def residual_offset(trace: Trace, onset: float, after: float = 90.0) -> float:
    """Smallest deficit from ``after`` seconds past the onset to the end of the trace."""
    u, t = deficit(trace, onset)
    sel = t >= after
    if not sel.any():
        raise DomainError("trace ends before the offset window")
    return float(u[sel].min())
