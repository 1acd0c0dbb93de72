"""Temperature scaling and its three-component ensemble variant."""

import numpy as np

from ..metrics import softmax
from ._base import T_MAX, T_MIN, PosthocCalibrator, soft_nll
from ._primitives import minimize_scalar_nll


def fit_temperature(z, targets, t_min=T_MIN, t_max=T_MAX, tol=1e-4):
    """Temperature minimising the soft-target NLL of ``softmax(z / T)``."""
    return minimize_scalar_nll(lambda t: soft_nll(softmax(z, t), targets), t_min, t_max, tol)


class TemperatureScaling(PosthocCalibrator):
    """Single-temperature scaling of the logits.

    Parameters
    ----------
    t_min, t_max : float
        Search range for the temperature.
    tol : float
        Final bracket width of the golden-section search.

    Attributes
    ----------
    temperature_ : float
    """

    method = "TS"
    _state_fields = ("temperature_",)

    def __init__(self, t_min=T_MIN, t_max=T_MAX, tol=1e-4):
        self.t_min = t_min
        self.t_max = t_max
        self.tol = tol

    def fit(self, X, y):
        z, t = self._validate_fit_inputs(X, y)
        self.temperature_ = fit_temperature(z, t, self.t_min, self.t_max, self.tol)
        return self

    def temperature(self, X):
        z = self._check_input(X)
        return np.full(z.shape[0], self.temperature_)

    def predict_proba(self, X):
        z = self._check_input(X)
        return softmax(z, self.temperature_)


class EnsembleTemperatureScaling(PosthocCalibrator):
    """Convex mixture of temperature-scaled, raw and uniform predictions.

    ``p = w[0] * softmax(z / T) + w[1] * softmax(z) + w[2] / C``. The
    temperature comes from plain temperature scaling; the weights are then
    fitted on the 2-simplex by pairwise coordinate moves starting from
    ``(1, 0, 0)``, so the fitted NLL never exceeds the TS one.
    """

    method = "ETS"
    _state_fields = ("temperature_", "weights_")

    def __init__(self, t_min=T_MIN, t_max=T_MAX, tol=1e-4, max_passes=50):
        self.t_min = t_min
        self.t_max = t_max
        self.tol = tol
        self.max_passes = max_passes

    @staticmethod
    def _components(z, temperature):
        c = z.shape[1]
        return softmax(z, temperature), softmax(z), np.full_like(z, 1.0 / c)

    def fit(self, X, y):
        z, t = self._validate_fit_inputs(X, y)
        self.temperature_ = fit_temperature(z, t, self.t_min, self.t_max, self.tol)
        comps = self._components(z, self.temperature_)

        def objective(w):
            return soft_nll(w[0] * comps[0] + w[1] * comps[1] + w[2] * comps[2], t)

        w = np.array([1.0, 0.0, 0.0])
        best = objective(w)
        for _ in range(self.max_passes):
            moved = 0.0
            for i, j in ((0, 1), (0, 2), (1, 2)):
                lo, hi = -w[i], w[j]
                if hi - lo <= 0:
                    continue

                def shift(s, i=i, j=j):
                    trial = w.copy()
                    trial[i] += s
                    trial[j] -= s
                    return objective(np.clip(trial, 0.0, 1.0))

                s = minimize_scalar_nll(shift, lo, hi, self.tol)
                val = shift(s)
                if val < best:
                    w[i] += s
                    w[j] -= s
                    w = np.clip(w, 0.0, 1.0)
                    best = val
                    moved = max(moved, abs(s))
            if moved <= self.tol:
                break
        self.weights_ = w / w.sum()
        return self

    def temperature(self, X):
        z = self._check_input(X)
        return np.full(z.shape[0], self.temperature_)

    def predict_proba(self, X):
        z = self._check_input(X)
        w = np.asarray(self.weights_)
        p_ts, p_raw, p_uni = self._components(z, self.temperature_)
        return w[0] * p_ts + w[1] * p_raw + w[2] * p_uni
