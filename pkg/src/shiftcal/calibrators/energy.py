"""Energy-based sample-wise temperature scaling (EBS / EBS-)."""

import math

import numpy as np

from ..metrics import softmax
from ._base import T_MAX, T_MIN, PosthocCalibrator
from ._primitives import coordinate_search, energy, fit_gaussian, gaussian_pdf
from .scaling import fit_temperature


class EnergyBasedScaling(PosthocCalibrator):
    """Per-sample temperature driven by the logit energy ``-logsumexp(z)``.

    ``T(z) = T_ts - theta[0] * P1(F(z)) + theta[1] * P2(F(z))`` where ``P1``
    is a Gaussian density fitted to energies of correctly classified ID rows
    and ``P2`` one fitted to misclassified ID rows plus outlier rows. Rows
    whose target is the all-zero vector are treated as outliers. ``theta``
    minimises the mean squared error between calibrated probabilities and
    targets over all rows.

    Parameters
    ----------
    use_ood : bool, default=True
        Keep outlier rows during fitting. ``False`` gives EBS-.
    theta_bound : float, default=5.0
        ``theta`` is searched in ``[-theta_bound, theta_bound]^2``.
    """

    method = "EBS"
    _state_fields = ("t_ts_", "theta_", "p1_", "p2_")

    def __init__(self, use_ood=True, t_min=T_MIN, t_max=T_MAX, theta_bound=5.0, tol=1e-4):
        self.use_ood = use_ood
        self.t_min = t_min
        self.t_max = t_max
        self.theta_bound = theta_bound
        self.tol = tol

    @property
    def name(self):
        return "EBS" if self.use_ood else "EBS-"

    def fit(self, X, y):
        z, t = self._validate_fit_inputs(X, y)
        is_ood = t.sum(axis=1) == 0.0
        if not self.use_ood:
            z, t, is_ood = z[~is_ood], t[~is_ood], is_ood[~is_ood]
        z_id, t_id = z[~is_ood], t[~is_ood]
        if z_id.shape[0] == 0:
            raise ValueError("energy-based scaling needs at least one ID row")
        self.t_ts_ = fit_temperature(z_id, t_id, self.t_min, self.t_max, self.tol)

        f = energy(z)
        f_id = f[~is_ood]
        correct = np.argmax(z_id, axis=1) == np.argmax(t_id, axis=1)
        if not correct.any():
            raise ValueError("cannot fit P1: no correctly classified ID rows")
        if correct.all():
            raise ValueError("cannot fit P2: no misclassified ID rows")
        self.p1_ = fit_gaussian(f_id[correct])
        self.p2_ = fit_gaussian(np.concatenate([f_id[~correct], f[is_ood]]))

        d1 = gaussian_pdf(f, *self.p1_)
        d2 = gaussian_pdf(f, *self.p2_)

        def mse(theta):
            temps = np.clip(self.t_ts_ - d1 * theta[0] + d2 * theta[1], self.t_min, self.t_max)
            sq = ((softmax(z, temps) - t) ** 2).sum(axis=1)
            return math.fsum(sq) / z.shape[0]

        b = float(self.theta_bound)
        theta, _ = coordinate_search(mse, [0.0, 0.0], [(-b, b), (-b, b)], self.tol)
        self.theta_ = theta
        self.ood_exposed_ = bool(self.use_ood and is_ood.any())
        return self

    def temperature(self, X):
        z = self._check_input(X)
        f = energy(z)
        raw = self.t_ts_ - gaussian_pdf(f, *self.p1_) * self.theta_[0] + gaussian_pdf(f, *self.p2_) * self.theta_[1]
        return np.clip(raw, self.t_min, self.t_max)

    def predict_proba(self, X):
        z = self._check_input(X)
        return softmax(z, self.temperature(z))

    def _set_state(self, state):
        self.t_ts_ = state["t_ts_"]
        self.theta_ = np.asarray(state["theta_"], dtype=np.float64)
        self.p1_ = tuple(state["p1_"])
        self.p2_ = tuple(state["p2_"])
