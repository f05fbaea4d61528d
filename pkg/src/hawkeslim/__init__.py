"""Simulation and verification toolkit for nonlinear Hawkes processes in
the small-excitation scaling regime.

The package simulates the scaled counting path and the mean path of the
exchangeable N-node system, solves the deterministic limit equation,
builds the Gaussian fluctuation limit with its covariance, evaluates and
minimizes the large/moderate-deviation path costs, and estimates tail
probabilities by exact formula, plain Monte Carlo, or importance sampling.
The ``hawkeslim`` command runs config-driven experiments that check these
limits against simulation.
"""

__version__ = "0.1.0"

from .config import (
    CONFIG_SCHEMA_VERSION,
    DEFAULT_THRESHOLDS,
    EXPERIMENT_KINDS,
    ExperimentConfig,
    build_model,
    load_config,
)
from .deviations import (
    ConstraintSpec,
    DiscreteRate,
    OptimReport,
    OptimResult,
    RatePoint,
    TailEstimate,
    discretize_rate,
    ell,
    minimize_rate,
    rate_I,
    rate_J,
    tail_probability,
)
from .errors import (
    AssumptionViolationError,
    CapabilityError,
    ConfigurationError,
    ConstraintError,
    DegenerateEstimateWarning,
    DivergenceError,
    DomainError,
    ExplosionGuardError,
    HawkesLimError,
    InternalLogicError,
    InvalidKernelError,
    ModelViolationError,
    SchemaError,
    StagnationError,
    UnstableISWarning,
)
from .experiments import (
    ExperimentOutput,
    audit_for,
    required_assumptions,
    run_experiment,
    sup_deviation,
)
from .fluctuation import (
    CovarianceMatrix,
    GaussianLimitModel,
    build_gaussian_model,
    clt_check,
    covariance_by_resolvent,
    phi_derivative_values,
    simulate_gaussian_limit,
)
from .limit import (
    VolterraSolveReport,
    excitation_input,
    limit_intensity,
    solve_limit,
    trapezoid_convolution,
)
from .model import (
    IntensityFn,
    Kernel,
    ModelAudit,
    audit_assumptions,
    builtin_models,
    constant_intensity,
    constant_kernel,
    exponential_kernel,
    kernel_l1_norm,
    kernel_sup_norm,
    linear_intensity,
    lipschitz_probe,
    polynomial_kernel,
    table_intensity,
    table_kernel,
    tanh_intensity,
    zero_kernel,
)
from .paths import GridPath, uniform_grid
from .report import (
    Check,
    ExperimentReport,
    events_to_csv,
    gridpath_to_csv,
    make_check,
    write_csv,
)
from .rng import DrawBuffer, replica_rng
from .simulate import (
    EventPath,
    MultiEventPath,
    SimConfig,
    integrated_intensity,
    martingale_residual,
    replica_statistics,
    simulate_mean_field,
    simulate_scaled_hawkes,
    step_path,
)
from .svg import Figure, Series, render, write_svg

__all__ = [name for name in dir() if not name.startswith("_")]
