"""Calibration with semantic outlier exposure.

Outlier rows are drawn from an unlabeled pool and appended to the ID
calibration set with uniform targets (TS, ETS, IRM, IROVaTS) or all-zero
targets (energy-based scaling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .calibrators import make_calibrator
from .data import CalibSet, EvalSet, Role, subsample

UNIFORM = "uniform"
ZERO = "zero"
DEFAULT_RATIO = 0.10
OOD_METHODS = {"TS": UNIFORM, "ETS": UNIFORM, "IRM": UNIFORM, "IROVATS": UNIFORM, "EBS": ZERO}


@dataclass(frozen=True)
class OodPolicy:
    ratio: float = DEFAULT_RATIO
    label_mode: Optional[str] = None  # None picks the method's convention
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.ratio <= 1:
            raise ValueError(f"OOD ratio must lie in (0, 1], got {self.ratio}")
        if self.label_mode not in (None, UNIFORM, ZERO):
            raise ValueError(f"label mode must be 'uniform' or 'zero', got {self.label_mode!r}")


def ood_count(n_id, ratio):
    return int(math.floor(ratio * n_id + 0.5))


def make_ood_calibset(id_set: EvalSet, ood_pool: EvalSet, policy: OodPolicy = OodPolicy()) -> CalibSet:
    if ood_pool.role is not Role.OOD_POOL:
        raise ValueError("ood_pool must have role OOD_POOL")
    if id_set.role is Role.OOD_POOL:
        raise ValueError("id_set must be a labeled set")
    if ood_pool.class_count != id_set.class_count:
        raise ValueError(f"class count mismatch: ID set has {id_set.class_count}, pool has {ood_pool.class_count}")
    n_id = len(id_set)
    n_ood = ood_count(n_id, policy.ratio)
    if n_ood == 0:
        raise ValueError("OOD count is zero")
    if len(ood_pool) < n_ood:
        raise ValueError(f"insufficient pool: need {n_ood} OOD records, pool has {len(ood_pool)}")
    drawn = subsample(ood_pool, n_ood, policy.seed)
    c = id_set.class_count
    mode = policy.label_mode or UNIFORM
    fill = 1.0 / c if mode == UNIFORM else 0.0

    targets = np.zeros((n_id + n_ood, c))
    targets[np.arange(n_id), id_set.labels] = 1.0
    targets[n_id:] = fill
    logits = np.vstack([id_set.logits, drawn.logits])
    is_ood = np.r_[np.zeros(n_id, dtype=bool), np.ones(n_ood, dtype=bool)]

    embeddings = None
    if id_set.embeddings is not None:
        extra = drawn.embeddings
        if extra is None or extra.shape[1] != id_set.embeddings.shape[1]:
            extra = np.full((n_ood, id_set.embeddings.shape[1]), np.nan)
        embeddings = np.vstack([id_set.embeddings, extra])
    return CalibSet(logits, targets, is_ood, embeddings)


def fit_with_ood(method, id_set: EvalSet, ood_pool: EvalSet, policy: OodPolicy = OodPolicy()):
    """Fit ``method`` on the ID calibration set augmented with pool outliers."""
    key = str(method).upper()
    if key not in OOD_METHODS:
        raise ValueError(f"unknown method {method!r} for OOD exposure; choose from TS, ETS, IRM, IROVaTS, EBS")
    mode = policy.label_mode or OOD_METHODS[key]
    if key == "EBS" and mode != ZERO:
        raise ValueError("energy-based scaling needs zero-vector OOD targets")
    calib = make_ood_calibset(id_set, ood_pool, OodPolicy(policy.ratio, mode, policy.seed))
    cal = make_calibrator(key).fit(calib.logits, calib.targets)
    cal.ood_exposed_ = True
    return cal
