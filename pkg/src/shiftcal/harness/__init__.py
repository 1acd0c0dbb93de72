from .experiment import (
    EnsembleSpec,
    ExperimentPlan,
    ResultRow,
    emit_report,
    parse_calibrator,
    read_results_csv,
    run_experiment,
    treatment_matrix,
)
from .stats import NEMENYI_Q_005, critical_difference, friedman_test, mean_ranks, nemenyi_test
from .synth import SynthConfig, synth_generate, synth_members, synth_train_set

__all__ = [
    "EnsembleSpec", "ExperimentPlan", "ResultRow", "emit_report", "parse_calibrator", "read_results_csv",
    "run_experiment", "treatment_matrix", "NEMENYI_Q_005", "critical_difference", "friedman_test",
    "mean_ranks", "nemenyi_test", "SynthConfig", "synth_generate", "synth_members", "synth_train_set",
]
