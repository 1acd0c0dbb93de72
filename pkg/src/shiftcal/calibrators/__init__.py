"""Post-hoc calibrators with a uniform fit/predict_proba contract.

The estimator classes follow scikit-learn conventions. The ``fit_*`` /
``apply_*`` functions are thin wrappers taking a :class:`~shiftcal.data.CalibSet`.
"""

import json

from ..data import CalibSet
from ._base import T_MAX, T_MIN, PosthocCalibrator
from ._primitives import (
    IsotonicMap,
    coordinate_search,
    energy,
    fit_gaussian,
    gaussian_pdf,
    minimize_scalar_nll,
    pava,
)
from .energy import EnergyBasedScaling
from .isotonic import IrovaTS, IsotonicOneVsAll, IsotonicTopLabel, remap_top_label
from .scaling import EnsembleTemperatureScaling, TemperatureScaling

__all__ = [
    "T_MIN", "T_MAX", "PosthocCalibrator", "TemperatureScaling", "EnsembleTemperatureScaling",
    "IsotonicTopLabel", "IsotonicOneVsAll", "IrovaTS", "EnergyBasedScaling", "IsotonicMap",
    "minimize_scalar_nll", "coordinate_search", "pava", "energy", "fit_gaussian", "gaussian_pdf",
    "remap_top_label", "make_calibrator", "calibrator_from_dict", "save_calibrator", "load_calibrator",
    "fit_ts", "apply_ts", "fit_ets", "apply_ets", "fit_irm", "apply_irm", "fit_irova", "apply_irova",
    "fit_irovats", "apply_irovats", "fit_ebs", "apply_ebs",
]

_CLASSES = {
    "TS": TemperatureScaling,
    "ETS": EnsembleTemperatureScaling,
    "IRM": IsotonicTopLabel,
    "IROVA": IsotonicOneVsAll,
    "IROVATS": IrovaTS,
    "EBS": EnergyBasedScaling,
}

METHODS = ("TS", "ETS", "IRM", "IROVa", "IROVaTS", "EBS", "EBS-")


def make_calibrator(method, **params):
    """Unfitted calibrator for a method name (``"EBS-"`` sets ``use_ood=False``)."""
    key = str(method).upper()
    if key == "EBS-":
        return EnergyBasedScaling(use_ood=False, **params)
    if key not in _CLASSES:
        raise ValueError(f"unknown method {method!r}")
    return _CLASSES[key](**params)


def calibrator_from_dict(d):
    method = d["method"]
    if method == "DAC":
        from ..dac import DensityAwareCalibration

        return DensityAwareCalibration.from_dict(d)
    cal = _CLASSES[method.upper()](**d.get("params", {}))
    state = d["state"]
    cal.n_classes_ = state["n_classes_"]
    cal.ood_exposed_ = state.get("ood_exposed_", False)
    cal._set_state(state)
    return cal


def save_calibrator(cal, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cal.to_dict(), fh)


def load_calibrator(path):
    with open(path, "r", encoding="utf-8") as fh:
        return calibrator_from_dict(json.load(fh))


def fit_ts(calib: CalibSet) -> TemperatureScaling:
    return TemperatureScaling().fit(calib.logits, calib.targets)


def apply_ts(ts, logits):
    return ts.predict_proba(logits)


def fit_ets(calib: CalibSet) -> EnsembleTemperatureScaling:
    return EnsembleTemperatureScaling().fit(calib.logits, calib.targets)


def apply_ets(ets, logits):
    return ets.predict_proba(logits)


def fit_irm(calib: CalibSet) -> IsotonicTopLabel:
    return IsotonicTopLabel().fit(calib.logits, calib.targets)


def apply_irm(irm, logits):
    return irm.predict_proba(logits)


def fit_irova(calib: CalibSet) -> IsotonicOneVsAll:
    return IsotonicOneVsAll().fit(calib.logits, calib.targets)


def apply_irova(model, logits):
    return model.predict_proba(logits)


def fit_irovats(calib: CalibSet) -> IrovaTS:
    return IrovaTS().fit(calib.logits, calib.targets)


def apply_irovats(model, logits):
    return model.predict_proba(logits)


def fit_ebs(calib: CalibSet, use_ood=True) -> EnergyBasedScaling:
    return EnergyBasedScaling(use_ood=use_ood).fit(calib.logits, calib.targets)


def apply_ebs(ebs, logits):
    return ebs.predict_proba(logits)
