"""Density-aware calibration: kNN distances in embedding space scale the temperature.

The modulation used here is a reconstruction. For a base calibrator with
per-sample temperature ``t_base(z)`` the logits are divided by
``t_base(z) * softplus(w . d + b) / softplus(0)``, where ``d`` holds one
standardised mean-kNN-distance feature per embedding layer. With ``w = 0``
and ``b = 0`` the model is exactly the base calibrator, and fitting starts
from there. Bases without a temperature (IRM, IROVa, IROVaTS) receive the
rescaled logits before their own probability map.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .calibrators import EnergyBasedScaling, calibrator_from_dict
from .calibrators._base import T_MAX, T_MIN, soft_nll
from .calibrators._primitives import coordinate_search
from .data import CalibSet
from .metrics import softmax

DEFAULT_K = 10
_SOFTPLUS_0 = math.log(2.0)


def softplus(x):
    return np.logaddexp(0.0, x)


def knn_mean_distance(query, reference, k):
    """Mean Euclidean distance from ``query`` to its ``k`` nearest reference rows."""
    q = np.asarray(query, dtype=np.float64)
    return float(knn_mean_distances(q[None, :], reference, k)[0])


def knn_mean_distances(queries, reference, k, exclude_self=False, chunk=1024):
    """Brute-force mean kNN distance for every query row.

    With ``exclude_self`` the queries must be the reference rows themselves;
    row ``i`` then skips reference row ``i`` (leave-one-out).
    """
    q = np.asarray(queries, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    if q.ndim != 2 or r.ndim != 2 or q.shape[1] != r.shape[1]:
        raise ValueError(f"dimension mismatch: queries {q.shape}, reference {r.shape}")
    available = r.shape[0] - (1 if exclude_self else 0)
    if not 1 <= k <= available:
        raise ValueError(f"k={k} but only {available} reference rows are available")
    if exclude_self and q.shape[0] != r.shape[0]:
        raise ValueError("leave-one-out needs queries identical to the reference rows")
    r_sq = (r ** 2).sum(axis=1)
    out = np.empty(q.shape[0])
    for start in range(0, q.shape[0], chunk):
        block = q[start:start + chunk]
        d2 = (block ** 2).sum(axis=1)[:, None] + r_sq[None, :] - 2.0 * block @ r.T
        d = np.sqrt(np.maximum(d2, 0.0))
        if exclude_self:
            rows = np.arange(block.shape[0])
            d[rows, start + rows] = np.inf
        nearest = np.partition(d, k - 1, axis=1)[:, :k]
        out[start:start + block.shape[0]] = np.sort(nearest, axis=1).mean(axis=1)
    return out


def _as_layers(embeddings):
    if embeddings is None:
        return None
    if isinstance(embeddings, (list, tuple)):
        return [np.asarray(e, dtype=np.float64) for e in embeddings]
    return [np.asarray(embeddings, dtype=np.float64)]


class DensityAwareCalibration(TransformerMixin, BaseEstimator):
    """Plug-in wrapper around an already fitted calibrator.

    Parameters
    ----------
    base : PosthocCalibrator
        Fitted base calibrator. It is not refitted.
    k : int, default=10
        Neighbour count for the distance features.
    bound : float, default=5.0
        Box bound for every weight and the bias.
    """

    method = "DAC"

    def __init__(self, base, k=DEFAULT_K, bound=5.0, tol=1e-4, max_passes=25):
        self.base = base
        self.k = k
        self.bound = bound
        self.tol = tol
        self.max_passes = max_passes

    @property
    def accuracy_preserving(self):
        return self.base.accuracy_preserving

    @property
    def name(self):
        return f"{self.base.name}+DAC"

    def _features(self, layers, loo=False):
        if layers is None:
            raise ValueError("density-aware calibration needs embeddings for every row")
        if len(layers) != len(self.references_):
            raise ValueError(f"expected {len(self.references_)} embedding layers, got {len(layers)}")
        cols = [knn_mean_distances(e, ref, self.k, exclude_self=loo) for e, ref in zip(layers, self.references_)]
        d = np.column_stack(cols)
        return (d - self.feature_mean_) / self.feature_scale_

    def _scale(self, feats, params):
        return softplus(feats @ params[:-1] + params[-1]) / _SOFTPLUS_0

    def _proba(self, z, scale):
        if isinstance(self.base, EnergyBasedScaling):
            temps = np.clip(self.base.temperature(z) * scale, T_MIN, T_MAX)
            return softmax(z, temps)
        return self.base.predict_proba(z / scale[:, None])

    def fit(self, X, y, embeddings=None):
        calib = CalibSet(X, y, None, None)
        layers = _as_layers(embeddings)
        if layers is None:
            raise ValueError("density-aware calibration needs embeddings for every row")
        if any(np.isnan(e).any() for e in layers):
            raise ValueError("missing embeddings (NaN rows); pass ID rows only")
        z, t = calib.logits, calib.targets
        self.n_classes_ = z.shape[1]
        self.references_ = layers
        raw = np.column_stack([knn_mean_distances(e, e, self.k, exclude_self=True) for e in layers])
        self.feature_mean_ = raw.mean(axis=0)
        self.feature_scale_ = np.maximum(raw.std(axis=0), 1e-12)
        feats = (raw - self.feature_mean_) / self.feature_scale_

        def objective(params):
            return soft_nll(self._proba(z, self._scale(feats, params)), t)

        n_params = len(layers) + 1
        bounds = [(-self.bound, self.bound)] * n_params
        self.params_, _ = coordinate_search(objective, np.zeros(n_params), bounds, self.tol, self.max_passes)
        return self

    def temperature_scale(self, X, embeddings):
        self._check_fitted()
        return self._scale(self._features(_as_layers(embeddings)), self.params_)

    def predict_proba(self, X, embeddings=None):
        self._check_fitted()
        z = np.asarray(X, dtype=np.float64)
        layers = _as_layers(embeddings)
        if layers is None or any(e.shape[0] != z.shape[0] for e in layers):
            raise ValueError("density-aware calibration needs embeddings for every row")
        return self._proba(z, self._scale(self._features(layers), self.params_))

    def transform(self, X, embeddings=None):
        return self.predict_proba(X, embeddings)

    def predict(self, X, embeddings=None):
        return np.argmax(self.predict_proba(X, embeddings), axis=1)

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("DensityAwareCalibration is not fitted yet")

    def to_dict(self):
        return {
            "method": self.method,
            "params": {"k": self.k, "bound": self.bound, "tol": self.tol, "max_passes": self.max_passes},
            "state": {
                "base": self.base.to_dict(),
                "n_classes_": self.n_classes_,
                "references_": [r.tolist() for r in self.references_],
                "feature_mean_": self.feature_mean_.tolist(),
                "feature_scale_": self.feature_scale_.tolist(),
                "params_": self.params_.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d):
        state = d["state"]
        model = cls(calibrator_from_dict(state["base"]), **d["params"])
        model.n_classes_ = state["n_classes_"]
        model.references_ = [np.asarray(r, dtype=np.float64) for r in state["references_"]]
        model.feature_mean_ = np.asarray(state["feature_mean_"], dtype=np.float64)
        model.feature_scale_ = np.asarray(state["feature_scale_"], dtype=np.float64)
        model.params_ = np.asarray(state["params_"], dtype=np.float64)
        return model


def fit_dac(base, calib: CalibSet, k=DEFAULT_K) -> DensityAwareCalibration:
    """Fit the distance weights on the ID rows of ``calib``; references are those rows."""
    part = calib.id_part()
    if part.embeddings is None:
        raise ValueError("density-aware calibration needs embeddings for every row")
    return DensityAwareCalibration(base, k=k).fit(part.logits, part.targets, part.embeddings)


def apply_dac(model: DensityAwareCalibration, logits, embeddings):
    return model.predict_proba(logits, embeddings)
