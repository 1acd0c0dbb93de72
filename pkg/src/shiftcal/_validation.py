"""Input validation helpers shared by estimators and metric functions."""

import numpy as np

SIMPLEX_ATOL = 1e-9


def check_logits(logits, name="logits"):
    """Return ``logits`` as a finite 2-D float array with at least 2 columns."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {z.shape}")
    if z.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if z.shape[1] < 2:
        raise ValueError(f"{name} needs at least 2 classes, got {z.shape[1]}")
    if not np.all(np.isfinite(z)):
        bad = int(np.flatnonzero(~np.isfinite(z).all(axis=1))[0])
        raise ValueError(f"{name} contains non-finite values at row {bad}")
    return z


def check_probs(probs, name="probs"):
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValueError(f"{name} must contain finite non-negative entries")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > SIMPLEX_ATOL):
        bad = int(np.flatnonzero(np.abs(sums - 1.0) > SIMPLEX_ATOL)[0])
        raise ValueError(f"{name} row {bad} does not sum to 1 (sum={sums[bad]!r})")
    return p


def check_labels(labels, n_samples, n_classes):
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {y.shape}")
    if y.shape[0] != n_samples:
        raise ValueError(f"dimension mismatch: {n_samples} predictions but {y.shape[0]} labels")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        if not np.all(np.equal(np.mod(y, 1), 0)):
            raise ValueError("labels must be integer class indices")
        y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes - 1}]")
    return y.astype(np.int64, copy=False)


def as_targets(y, n_samples, n_classes):
    """Turn hard labels or a soft-target matrix into an ``(n, C)`` float matrix.

    Soft rows are accepted if they lie in the simplex or are all zero (the
    zero-vector target used for outlier rows by energy-based scaling).
    """
    y = np.asarray(y)
    if y.ndim == 1:
        labels = check_labels(y, n_samples, n_classes)
        targets = np.zeros((n_samples, n_classes))
        targets[np.arange(n_samples), labels] = 1.0
        return targets
    t = np.asarray(y, dtype=np.float64)
    if t.shape != (n_samples, n_classes):
        raise ValueError(f"dimension mismatch: targets shape {t.shape}, expected {(n_samples, n_classes)}")
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise ValueError("targets must be finite and non-negative")
    sums = t.sum(axis=1)
    ok = (np.abs(sums - 1.0) <= SIMPLEX_ATOL) | (sums == 0.0)
    if not np.all(ok):
        bad = int(np.flatnonzero(~ok)[0])
        raise ValueError(f"target row {bad} is neither a probability vector nor all-zero")
    return t


def argmax_rows(a):
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(a, axis=1)
