"""Isotonic calibrators: top-label (IRM), one-vs-all (IROVa) and IROVa on ETS."""

import numpy as np

from ..metrics import softmax
from ._base import PosthocCalibrator
from ._primitives import IsotonicMap
from .scaling import EnsembleTemperatureScaling

ROW_SUM_FLOOR = 1e-12
_TIE_MARGIN = 1e-12


def _require_two(z):
    if z.shape[0] < 2:
        raise ValueError("isotonic calibration needs at least 2 samples")


def remap_top_label(probs, new_conf):
    """Replace each row's top-label confidence, keeping the predicted class on top.

    The remaining mass ``1 - c'`` is split across the other classes in
    proportion to their original probabilities. ``c'`` is floored at the
    value where the largest other class would catch up.
    """
    p = np.asarray(probs, dtype=np.float64)
    n, c = p.shape
    rows = np.arange(n)
    top = np.argmax(p, axis=1)
    others = p.copy()
    others[rows, top] = 0.0
    # the actual remaining mass, not 1 - conf, which loses digits when conf ~ 1
    rest = others.sum(axis=1)
    max_other = others.max(axis=1)
    # c' >= max_other * (1 - c') / (1 - c)  <=>  c' >= max_other / (1 - c + max_other)
    with np.errstate(invalid="ignore", divide="ignore"):
        floor = np.where(rest + max_other > 0, max_other / (rest + max_other), 0.0)
    new_conf = np.clip(np.asarray(new_conf, dtype=np.float64), 0.0, 1.0)
    bump = new_conf <= floor
    new_conf = np.where(bump & (max_other > 0), np.minimum(floor + _TIE_MARGIN, 1.0), new_conf)
    new_conf = np.where(bump & (max_other == 0) & (new_conf < 1.0 / c), 1.0 / c + _TIE_MARGIN, new_conf)
    out = np.empty_like(p)
    saturated = rest <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(saturated, 0.0, (1.0 - new_conf) / np.where(saturated, 1.0, rest))
    out[:] = others * scale[:, None]
    if saturated.any():
        # all mass was on the top class: spread the new remainder evenly
        k = np.flatnonzero(saturated)
        spread = (1.0 - new_conf[k]) / (c - 1)
        out[k] = spread[:, None]
    out[rows, top] = new_conf
    return out


class IsotonicTopLabel(PosthocCalibrator):
    """Isotonic regression from top-label confidence to expected accuracy.

    The regression target for a row is its target mass on the predicted
    class: the correctness indicator for one-hot rows, ``1/C`` for uniform
    outlier rows. Accuracy-preserving by construction.
    """

    method = "IRM"
    _state_fields = ("map_",)

    def fit(self, X, y):
        z, t = self._validate_fit_inputs(X, y)
        _require_two(z)
        p = softmax(z)
        pred = np.argmax(p, axis=1)
        rows = np.arange(z.shape[0])
        self.regression_inputs_ = p[rows, pred]
        self.regression_targets_ = t[rows, pred]
        self.map_ = IsotonicMap.fit(self.regression_inputs_, self.regression_targets_)
        return self

    def predict_proba(self, X):
        z = self._check_input(X)
        p = softmax(z)
        return remap_top_label(p, self.map_(p.max(axis=1)))

    def _set_state(self, state):
        self.map_ = IsotonicMap.from_dict(state["map_"])


class IsotonicOneVsAll(PosthocCalibrator):
    """One isotonic map per class on that class's probability, then row renormalisation.

    Not accuracy-preserving.
    """

    method = "IROVa"
    accuracy_preserving = False
    _state_fields = ("maps_",)

    def fit_probs(self, probs, targets):
        _require_two(probs)
        self.maps_ = [IsotonicMap.fit(probs[:, k], targets[:, k]) for k in range(probs.shape[1])]
        return self

    def apply_probs(self, probs):
        q = np.column_stack([m(probs[:, k]) for k, m in enumerate(self.maps_)])
        s = q.sum(axis=1)
        out = np.full_like(q, 1.0 / q.shape[1])
        ok = s >= ROW_SUM_FLOOR
        out[ok] = q[ok] / s[ok, None]
        return out

    def fit(self, X, y):
        z, t = self._validate_fit_inputs(X, y)
        return self.fit_probs(softmax(z), t)

    def predict_proba(self, X):
        return self.apply_probs(softmax(self._check_input(X)))

    def _set_state(self, state):
        self.maps_ = [IsotonicMap.from_dict(d) for d in state["maps_"]]


class IrovaTS(PosthocCalibrator):
    """IROVa fitted on the outputs of ensemble temperature scaling."""

    method = "IROVaTS"
    accuracy_preserving = False
    _state_fields = ("ets_", "irova_")

    def __init__(self, tol=1e-4):
        self.tol = tol

    def fit(self, X, y):
        z, t = self._validate_fit_inputs(X, y)
        _require_two(z)
        self.ets_ = EnsembleTemperatureScaling(tol=self.tol).fit(z, t)
        self.irova_ = IsotonicOneVsAll().fit_probs(self.ets_.predict_proba(z), t)
        self.irova_.n_classes_ = self.n_classes_
        return self

    def predict_proba(self, X):
        z = self._check_input(X)
        return self.irova_.apply_probs(self.ets_.predict_proba(z))

    def _set_state(self, state):
        from . import calibrator_from_dict

        self.ets_ = calibrator_from_dict(state["ets_"])
        self.irova_ = calibrator_from_dict(state["irova_"])
