"""Numeric building blocks: bounded scalar search, PAVA, energy, Gaussian fit."""

import math

import numpy as np
from scipy.special import logsumexp

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
SIGMA_FLOOR = 1e-6


def minimize_scalar_nll(objective, lo, hi, tol=1e-4):
    """Golden-section search for the minimum of ``objective`` on ``[lo, hi]``.

    Returns the midpoint of the final bracket, whose width is at most ``tol``.
    Deterministic: the sequence of evaluation points only depends on the
    objective values.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")

    def f(x):
        v = float(objective(x))
        if not math.isfinite(v):
            raise FloatingPointError(f"objective is not finite at x={x!r}")
        return v

    a, b = float(lo), float(hi)
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def coordinate_search(objective, x0, bounds, tol=1e-4, max_passes=25):
    """Cyclic coordinate descent with golden-section line searches.

    A coordinate update is only kept when it lowers the objective, so the
    returned point is never worse than ``x0``.
    """
    x = np.array(x0, dtype=np.float64)
    best = float(objective(x))
    for _ in range(max_passes):
        moved = 0.0
        for j, (lo, hi) in enumerate(bounds):
            def along(v, j=j):
                trial = x.copy()
                trial[j] = v
                return objective(trial)

            cand = minimize_scalar_nll(along, lo, hi, tol)
            val = float(along(cand))
            if val < best:
                moved = max(moved, abs(cand - x[j]))
                x[j] = cand
                best = val
        if moved <= tol:
            break
    return x, best


def pava(y, w=None):
    """Weighted least-squares nondecreasing fit (pool adjacent violators)."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("pava needs a non-empty 1-D input")
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=np.float64)
    if w.shape != y.shape:
        raise ValueError("y and w must have equal lengths")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    # block means, weights and sizes on a stack
    means, weights, sizes = [], [], []
    for yi, wi in zip(y, w):
        means.append(yi)
        weights.append(wi)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            wt = weights[-2] + weights[-1]
            m = (weights[-2] * means[-2] + weights[-1] * means[-1]) / wt
            sizes[-2] += sizes[-1]
            means[-2], weights[-2] = m, wt
            del means[-1], weights[-1], sizes[-1]
    return np.repeat(means, sizes)


class IsotonicMap:
    """Piecewise-linear nondecreasing map, constant outside the fitted range."""

    def __init__(self, breakpoints, values):
        self.breakpoints = np.asarray(breakpoints, dtype=np.float64)
        self.values = np.asarray(values, dtype=np.float64)

    @classmethod
    def fit(cls, x, y, w=None):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        w = np.ones_like(x) if w is None else np.asarray(w, dtype=np.float64)
        order = np.argsort(x, kind="stable")
        xs, ys, ws = x[order], y[order], w[order]
        # tied inputs must share one fitted value
        ux, start = np.unique(xs, return_index=True)
        wsum = np.add.reduceat(ws, start)
        ymean = np.add.reduceat(ws * ys, start) / wsum
        return cls(ux, pava(ymean, wsum))

    def __call__(self, x):
        return np.interp(x, self.breakpoints, self.values)

    def to_dict(self):
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["breakpoints"], d["values"])


def energy(logits):
    """Free energy ``-logsumexp(z)``; vectorised over rows for 2-D input."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("energy input contains non-finite values")
    return -logsumexp(z, axis=-1)


def fit_gaussian(values):
    """Sample mean and population standard deviation, floored at 1e-6."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("cannot fit a Gaussian to an empty sample")
    return float(v.mean()), max(float(v.std()), SIGMA_FLOOR)


def gaussian_pdf(x, mu, sigma):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
