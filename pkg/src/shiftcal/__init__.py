"""Post-hoc calibration under dataset shift: calibrators, metrics, losses and a benchmark harness."""

from .data import CalibSet, EvalSet, Record, Role, load_records, save_records, subsample, validate_set
from .metrics import MetricReport, brier, balanced_accuracy, ece, evaluate, nll, reliability_bins, softmax

__version__ = "0.1.0"

__all__ = [
    "CalibSet", "EvalSet", "Record", "Role", "load_records", "save_records", "subsample", "validate_set",
    "MetricReport", "brier", "balanced_accuracy", "ece", "evaluate", "nll", "reliability_bins", "softmax",
]
