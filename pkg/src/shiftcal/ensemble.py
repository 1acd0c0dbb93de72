"""Probability-space ensembles and the two calibration orderings.

``pre``: every member is calibrated on its own calibration logits, then the
calibrated probabilities are averaged. ``post``: raw member probabilities are
averaged first and one calibrator is fitted on ``log(mean probs)``, which
serve as pseudo-logits (softmax is shift-invariant, so the normalisation
constant of the log does not matter).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .calibrators import make_calibrator
from .data import CalibSet
from .metrics import LOG_FLOOR, softmax

PRE, POST = "pre", "post"


@dataclass(frozen=True)
class Member:
    eval_logits: np.ndarray
    calib: CalibSet


@dataclass(frozen=True)
class MemberSet:
    members: tuple

    def __post_init__(self):
        members = tuple(self.members)
        if len(members) < 2:
            raise ValueError("an ensemble needs at least 2 members")
        ref = members[0]
        for i, m in enumerate(members[1:], start=1):
            if np.shape(m.eval_logits) != np.shape(ref.eval_logits):
                raise ValueError(f"member {i}: evaluation logits shape differs from member 0")
            if m.calib.logits.shape != ref.calib.logits.shape:
                raise ValueError(f"member {i}: calibration logits shape differs from member 0")
            if not np.array_equal(m.calib.targets, ref.calib.targets):
                raise ValueError(f"member {i}: calibration targets differ from member 0")
        object.__setattr__(self, "members", members)

    def __len__(self):
        return len(self.members)


def mean_probs(prob_matrices: Sequence[np.ndarray]) -> np.ndarray:
    if len(prob_matrices) == 0:
        raise ValueError("no members to average")
    mats = [np.asarray(p, dtype=np.float64) for p in prob_matrices]
    shape = mats[0].shape
    for i, m in enumerate(mats):
        if m.shape != shape:
            raise ValueError(f"shape mismatch: member {i} has shape {m.shape}, expected {shape}")
    total = np.zeros(shape)
    for m in mats:
        total += m
    return total / len(mats)


def pseudo_logits(probs):
    return np.log(np.maximum(probs, LOG_FLOOR))


Fitter = Callable[[CalibSet], object]


def _as_fitter(method: Union[str, Fitter]) -> Fitter:
    if callable(method):
        return method

    def fit(calib):
        cal = make_calibrator(method).fit(calib.logits, calib.targets)
        cal.ood_exposed_ = bool(calib.is_ood.any())
        return cal

    return fit


class CalibratedEnsemble:
    """Ensemble of logit-producing members with calibration before or after averaging.

    ``method`` is a calibrator name or a callable mapping a ``CalibSet`` to a
    fitted calibrator.
    """

    def __init__(self, method: Union[str, Fitter] = "TS", order: str = PRE):
        if order not in (PRE, POST):
            raise ValueError(f"order must be 'pre' or 'post', got {order!r}")
        self.method = method
        self.order = order

    def fit(self, calib_sets: Sequence[CalibSet]):
        fit = _as_fitter(self.method)
        if self.order == PRE:
            self.calibrators_ = []
            for i, calib in enumerate(calib_sets):
                try:
                    self.calibrators_.append(fit(calib))
                except Exception as exc:
                    raise ValueError(f"member {i}: {exc}") from exc
        else:
            ref = calib_sets[0]
            avg = mean_probs([softmax(c.logits) for c in calib_sets])
            self.calibrators_ = [fit(CalibSet(pseudo_logits(avg), ref.targets, ref.is_ood))]
        return self

    def predict_proba(self, member_logits: Sequence[np.ndarray]):
        if self.order == PRE:
            if len(member_logits) != len(self.calibrators_):
                raise ValueError("one logit matrix per member is required")
            return mean_probs([c.predict_proba(z) for c, z in zip(self.calibrators_, member_logits)])
        avg = mean_probs([softmax(z) for z in member_logits])
        return self.calibrators_[0].predict_proba(pseudo_logits(avg))


def calibrate_then_ensemble(members: MemberSet, method: Union[str, Fitter] = "TS") -> np.ndarray:
    model = CalibratedEnsemble(method, PRE).fit([m.calib for m in members.members])
    return model.predict_proba([m.eval_logits for m in members.members])


def ensemble_then_calibrate(members: MemberSet, method: Union[str, Fitter] = "TS") -> np.ndarray:
    model = CalibratedEnsemble(method, POST).fit([m.calib for m in members.members])
    return model.predict_proba([m.eval_logits for m in members.members])


def sample_member_combinations(pool_size, ensemble_size=3, n_draws=1, seed=0):
    """Distinct unordered index combinations drawn uniformly without replacement."""
    if not 1 <= ensemble_size <= pool_size:
        raise ValueError(f"ensemble size {ensemble_size} must lie in [1, {pool_size}]")
    total = math.comb(pool_size, ensemble_size)
    if not 1 <= n_draws <= total:
        raise ValueError(f"n_draws={n_draws} exceeds the {total} distinct combinations")
    combos = list(itertools.combinations(range(pool_size), ensemble_size))
    picks = np.random.default_rng(seed).choice(total, size=n_draws, replace=False)
    return [combos[i] for i in picks]
