"""Friedman omnibus test and Nemenyi post-hoc comparison on a blocks x treatments matrix.

Lower metric values get lower (better) ranks.
"""

import math

import numpy as np
from scipy.special import gammaincc
from scipy.stats import rankdata

# Critical values q_{0.05} of the Nemenyi test (studentized range / sqrt(2), infinite df).
NEMENYI_Q_005 = {
    2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031, 9: 3.102, 10: 3.164,
    11: 3.219, 12: 3.268, 13: 3.313, 14: 3.354, 15: 3.391, 16: 3.426, 17: 3.458, 18: 3.489,
    19: 3.517, 20: 3.544,
}


def _check(values):
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError("values must be a blocks x treatments matrix")
    b, k = v.shape
    if b < 2 or k < 2:
        raise ValueError(f"need at least 2 blocks and 2 treatments, got {b} x {k}")
    if not np.all(np.isfinite(v)):
        raise ValueError("values must be finite")
    return v


def mean_ranks(values):
    v = _check(values)
    return rankdata(v, axis=1).mean(axis=0)


def friedman_test(values):
    """Return ``(chi2, p)`` using the chi-square approximation with ``K - 1`` df."""
    v = _check(values)
    b, k = v.shape
    r = mean_ranks(v)
    chi2 = 12.0 * b / (k * (k + 1)) * math.fsum((r - (k + 1) / 2.0) ** 2)
    p = float(gammaincc((k - 1) / 2.0, chi2 / 2.0))
    return chi2, p


def critical_difference(k, b, alpha=0.05):
    if alpha != 0.05:
        raise ValueError("only alpha=0.05 critical values are embedded")
    if k not in NEMENYI_Q_005:
        raise ValueError(f"no embedded critical value for {k} treatments (supported: 2..20)")
    return NEMENYI_Q_005[k] * math.sqrt(k * (k + 1) / (6.0 * b))


def nemenyi_test(values, alpha=0.05):
    """Boolean ``K x K`` matrix; ``True`` where mean ranks differ by more than the CD."""
    v = _check(values)
    b, k = v.shape
    cd = critical_difference(k, b, alpha)
    r = mean_ranks(v)
    sig = np.abs(r[:, None] - r[None, :]) > cd
    np.fill_diagonal(sig, False)
    return sig
