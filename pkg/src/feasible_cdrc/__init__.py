"""Positivity diagnostics and feasible dose-response curves for continuous treatments."""

from .data import (
    BootstrapSpec,
    Dataset,
    DensitySpec,
    GridSpec,
    InterventionGrid,
    RunConfig,
    Schema,
    load_config,
    load_dataset,
    make_grid,
    write_dataset,
)
from .density import (
    DensityMatrix,
    density_matrix,
    eval_density,
    eval_marginal,
    fit_cond_density,
)
from .estimands import CurveSet, bootstrap_curves, plugin_curves, run_pipeline
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DataError,
    FeasibleCDRCError,
    NumericalError,
    ReplicateFailureError,
    SeparationError,
    SingularDesignError,
    SupportError,
)
from .outcome import Basis, OutcomeModel, fit_outcome, predict
from .simulate import SimLaw, generate, monte_carlo_bias, oracle_curves, oracle_truth
from .support import (
    SupportProfile,
    assign_interventions,
    hdr_thresholds,
    nearest_feasible,
    non_overlap_ratio,
)

__version__ = "0.1.0"
