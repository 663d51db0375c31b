"""Annealed, interval-constrained skewed SGD for training quantized models."""

from .grids import (CELL_BELOW, ConfigError, ConstraintParams, QuantGrid,
                    cell_index, constraint_slack, constraint_slack_prime,
                    distance_to_grid, feasibility_gap, feasible_intervals,
                    grid_penalty, grid_penalty_prime, project_to_grid,
                    slack_vectors, validate_params)
from .skew import SkewStep, active_set, kkt_residual, qp_oracle, skew_direction
from .schedules import AnnealSchedule, PlateauTracker, StepSchedule
from .models import (DiffModel, FDReport, LogisticModel, MoonsMlpModel,
                     QuadraticToyModel, fd_check)
from .datasets import Dataset, gen_logistic, gen_two_moons, minibatches, rng_for
from .optimizers import (Iterate, RunAbortError, RunResult, askew_step,
                         bc_ste_step, evaluate_quantized, projected_sgd_step,
                         run_training, sgd_step)
from .records import (RunRecord, read_run_csv, read_snapshots_csv,
                      write_config_json, write_run_csv, write_snapshots_csv)
from .estimators import ASkewSGDClassifier

__version__ = "0.1.0"

__all__ = [
    "ASkewSGDClassifier",
    "AnnealSchedule",
    "CELL_BELOW",
    "ConfigError",
    "ConstraintParams",
    "Dataset",
    "DiffModel",
    "FDReport",
    "Iterate",
    "LogisticModel",
    "MoonsMlpModel",
    "PlateauTracker",
    "QuadraticToyModel",
    "QuantGrid",
    "RunAbortError",
    "RunRecord",
    "RunResult",
    "SkewStep",
    "StepSchedule",
    "active_set",
    "askew_step",
    "bc_ste_step",
    "cell_index",
    "constraint_slack",
    "constraint_slack_prime",
    "distance_to_grid",
    "evaluate_quantized",
    "fd_check",
    "feasibility_gap",
    "feasible_intervals",
    "gen_logistic",
    "gen_two_moons",
    "grid_penalty",
    "grid_penalty_prime",
    "kkt_residual",
    "minibatches",
    "project_to_grid",
    "projected_sgd_step",
    "qp_oracle",
    "read_run_csv",
    "read_snapshots_csv",
    "rng_for",
    "run_training",
    "sgd_step",
    "skew_direction",
    "slack_vectors",
    "validate_params",
    "write_config_json",
    "write_run_csv",
    "write_snapshots_csv",
]
