import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .._validation import as_targets, check_logits
from ..metrics import LOG_FLOOR

T_MIN = 0.05
T_MAX = 20.0


class PosthocCalibrator(TransformerMixin, BaseEstimator):
    """Common surface of the post-hoc calibrators.

    ``fit(X, y)`` takes calibration logits ``X`` of shape ``(n_samples,
    n_classes)`` and either integer labels or an ``(n_samples, n_classes)``
    matrix of target rows. ``predict_proba(X)`` maps logits to calibrated
    probabilities; ``transform`` is an alias so calibrators slot into
    pipelines.
    """

    method = None
    accuracy_preserving = True
    _state_fields = ()

    def _validate_fit_inputs(self, X, y):
        z = check_logits(X)
        t = as_targets(y, z.shape[0], z.shape[1])
        self.n_classes_ = z.shape[1]
        return z, t

    def _check_input(self, X):
        if not hasattr(self, "n_classes_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")
        z = check_logits(X)
        if z.shape[1] != self.n_classes_:
            raise ValueError(f"expected {self.n_classes_} classes, got {z.shape[1]}")
        return z

    def predict_proba(self, X):
        raise NotImplementedError

    def transform(self, X):
        return self.predict_proba(X)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    @property
    def name(self):
        suffix = "+OOD" if getattr(self, "ood_exposed_", False) else ""
        return f"{self.method}{suffix}"

    def _get_state(self):
        return {k: getattr(self, k) for k in self._state_fields}

    def _set_state(self, state):
        for k in self._state_fields:
            setattr(self, k, state[k])

    def to_dict(self):
        state = {k: _jsonable(v) for k, v in self._get_state().items()}
        state["n_classes_"] = self.n_classes_
        state["ood_exposed_"] = bool(getattr(self, "ood_exposed_", False))
        return {"method": self.method, "params": self.get_params(deep=False), "state": state}


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if hasattr(v, "to_dict"):
        return v.to_dict()
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def soft_nll(probs, targets):
    logp = np.log(np.maximum(probs, LOG_FLOOR))
    return math.fsum(-(targets * logp).sum(axis=1)) / probs.shape[0]
