"""Locally weighted polynomial regression on a uniform grid."""

import math

import numpy as np


def loess(y, window: int, degree: int = 2, x=None) -> np.ndarray:
    """Smooth ``y`` with a local polynomial fit at every point.

    Each fit uses the ``window`` nearest points with tricube weights scaled to
    the distance of the farthest of them. Windows too small to determine the
    polynomial return ``y`` unchanged.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    x = np.arange(n, dtype=float) if x is None else np.asarray(x, dtype=float)
    window = min(int(window), n)
    if window <= degree + 1:
        return y.copy()
    out = np.empty(n)
    for i in range(n):
        dist = np.abs(x - x[i])
        idx = np.argpartition(dist, window - 1)[:window]
        h = dist[idx].max()
        # widen slightly so the farthest neighbour keeps a nonzero weight
        h = h * (1.0 + 1e-9) if h > 0 else 1.0
        w = (1.0 - (dist[idx] / h) ** 3) ** 3
        u = x[idx] - x[i]
        A = np.vander(u, degree + 1, increasing=True)
        sw = np.sqrt(w)
        coef, *_ = np.linalg.lstsq(A * sw[:, None], y[idx] * sw, rcond=None)
        out[i] = coef[0]
    return out


def span_to_window(span: float, support: int) -> int:
    """Number of neighbours for a span given as a fraction of ``support`` points."""
    return int(math.ceil(span * support))
