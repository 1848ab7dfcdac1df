"""PINN vs finite-difference workbench for 2D advection-diffusion transport."""

from ._version import __version__
from .domain import (DomainSpec, GridSpec, GridSolution, NoiseSpec,
                     StabilityReport, StabilityViolation, add_field_noise,
                     analytic_solution, check_stability, initial_condition,
                     solve_fdm)
from .experiment import (ScenarioConfig, ScenarioResult, benchmark_suite,
                         infer_field, relative_l2_error, run_scenario)
from .loss import (LossBreakdown, LossWeights, SamplingPlan, TrainingData,
                   field_data_loss, ic_data_loss, pde_residual, physics_loss,
                   sample_collocation_lhs, total_loss)
from .network import (Jet, NetworkConfig, NetworkParams, forward, init_params,
                      jet, loss_and_param_gradient)
from .optimizer import (AdamConfig, DivergenceDetected, LbfgsConfig,
                        OptimTrace, adam_run, lbfgs_run, two_stage_run)

__all__ = [
    "__version__",
    "DomainSpec", "GridSpec", "GridSolution", "NoiseSpec",
    "StabilityReport", "StabilityViolation",
    "initial_condition", "analytic_solution", "solve_fdm",
    "add_field_noise", "check_stability",
    "NetworkConfig", "NetworkParams", "Jet",
    "init_params", "forward", "jet", "loss_and_param_gradient",
    "LossWeights", "SamplingPlan", "TrainingData", "LossBreakdown",
    "pde_residual", "sample_collocation_lhs", "physics_loss",
    "ic_data_loss", "field_data_loss", "total_loss",
    "AdamConfig", "LbfgsConfig", "OptimTrace", "DivergenceDetected",
    "adam_run", "lbfgs_run", "two_stage_run",
    "ScenarioConfig", "ScenarioResult", "relative_l2_error",
    "run_scenario", "benchmark_suite", "infer_field",
]
