"""Parameter inference: Phase I ODE matching, the EM update and multi-chain runs."""
from .data import DataError, DataSet, Interval, ObservedPath, extract_intervals
from .diagnostics import (
    UndefinedDiagnostic,
    moving_avg_stat,
    relative_moving_avg_stat,
    rhat,
    rhat_per_coordinate,
)
from .em import DegenerateDataError, complete_loglik, em_update
from .frem import ConvergenceWarning, EnsembleSummary, FREMConfig, FREMFailure, FREMResult, ensemble_run, frem_run
from .phase1 import (
    Phase1Config,
    Phase1Result,
    Phase1Warning,
    phase1_global,
    phase1_objective,
    phase1_per_interval,
    run_phase1,
)

__all__ = [
    "DataError", "DataSet", "Interval", "ObservedPath", "extract_intervals", "UndefinedDiagnostic",
    "moving_avg_stat", "relative_moving_avg_stat", "rhat", "rhat_per_coordinate", "DegenerateDataError",
    "complete_loglik", "em_update", "ConvergenceWarning", "EnsembleSummary", "FREMConfig", "FREMFailure",
    "FREMResult", "ensemble_run", "frem_run", "Phase1Config", "Phase1Result", "Phase1Warning",
    "phase1_global", "phase1_objective", "phase1_per_interval", "run_phase1",
]
