"""Quantum parameter estimation toolkit.

Metrological bounds (Fisher/Holevo/Bayesian families), open-system
dynamics with parameter derivatives, design optimization over controls,
probe states, and measurements, and an adaptive measurement loop with a
serving layer.  See README.md for a tour.
"""

from ._fastpath import BACKEND
from .adaptive import AdaptiveSession, XOptResult, find_x_opt
from .bayes import (
    BiasSpec,
    PriorGrid,
    avg_cfim,
    avg_qfim,
    bayes_cost,
    bayes_update,
    bcb,
    bcrb,
    bqcrb,
    gaussian_prior,
    grid_states,
    mle,
    qvtb,
    qzzb,
    simulate_outcomes,
    uniform_prior,
    vtb,
)
from .config import ScenarioConfig, config_hash, load_config, parse_config
from .dynamics import (
    DynamicsSpec,
    KrausChannel,
    adjust_steps,
    augmented_generator,
    dissipator_generator,
    hamiltonian_generator,
    kraus_apply,
    lindblad_endpoint,
    lindblad_propagate,
    liouvillian,
    total_propagator,
    uniform_tspan,
)
from .engines import (
    AlgoParams,
    GrapeResult,
    ObjectiveSpec,
    OptRun,
    PullbackResult,
    cfi_pullback,
    de_run,
    grape_gradient,
    nm_run,
    pso_run,
    qfi_pullback,
    ri_run,
    scalar_objective,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DegeneracyError,
    DimensionError,
    DomainError,
    InfeasibilityError,
    InvalidChannelError,
    NonExistenceError,
    QmetroError,
    UnsupportedError,
)
from .fisher import (
    InfoMatrix,
    LogDerivative,
    TargetTimeResult,
    WeightMatrix,
    cfi,
    cfim,
    fim,
    lld,
    qfi,
    qfim,
    qfim_kraus,
    rld,
    sld,
    sld_vec,
    target_time,
)
from .holevo import HcrbProblem, HcrbSolution, hcrb
from .models import Model, ModelGrid, coherent_spin_state, model_grid, preset
from .operators import operator_basis, paulis, sic_povm, spin_operators, su_generators
from .scenarios import (
    ComprehensiveProblem,
    ComprehensiveResult,
    ControlProblem,
    ControlResult,
    MeasurementProblem,
    MeasurementResult,
    MinTimeResult,
    StateProblem,
    StateResult,
    comprehensive_opt,
    control_opt,
    measurement_opt,
    mintime,
    state_opt,
)
from .states import (
    DerivedState,
    HermitianOperator,
    OperatorBasis,
    Povm,
    QuantumState,
    ket_state,
)
from .tasks import TaskReport, build_prior_grid, build_session, run_task

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "__version__",
    # states and operators
    "QuantumState", "DerivedState", "Povm", "HermitianOperator",
    "OperatorBasis", "ket_state", "paulis", "su_generators",
    "operator_basis", "spin_operators", "sic_povm",
    # dynamics
    "DynamicsSpec", "KrausChannel", "hamiltonian_generator",
    "dissipator_generator", "liouvillian", "augmented_generator",
    "lindblad_propagate", "lindblad_endpoint", "total_propagator",
    "kraus_apply", "adjust_steps", "uniform_tspan",
    # asymptotic bounds
    "InfoMatrix", "LogDerivative", "WeightMatrix", "sld", "sld_vec",
    "rld", "lld", "qfim", "qfi", "qfim_kraus", "cfim", "cfi", "fim",
    "TargetTimeResult", "target_time", "HcrbProblem", "HcrbSolution", "hcrb",
    # Bayesian
    "PriorGrid", "BiasSpec", "uniform_prior", "gaussian_prior",
    "grid_states", "simulate_outcomes", "bayes_update", "mle",
    "bayes_cost", "bcb", "bcrb", "bqcrb", "vtb", "qvtb", "qzzb",
    "avg_cfim", "avg_qfim",
    # engines and scenarios
    "ObjectiveSpec", "AlgoParams", "OptRun", "PullbackResult",
    "GrapeResult", "scalar_objective", "qfi_pullback", "cfi_pullback",
    "grape_gradient", "pso_run", "de_run", "nm_run", "ri_run",
    "ControlProblem", "ControlResult", "StateProblem", "StateResult",
    "MeasurementProblem", "MeasurementResult", "ComprehensiveProblem",
    "ComprehensiveResult", "MinTimeResult", "control_opt", "state_opt",
    "measurement_opt", "comprehensive_opt", "mintime",
    # adaptive
    "XOptResult", "find_x_opt", "AdaptiveSession",
    # models
    "Model", "ModelGrid", "preset", "model_grid", "coherent_spin_state",
    # configuration and tasks
    "ScenarioConfig", "load_config", "parse_config", "config_hash",
    "TaskReport", "run_task", "build_prior_grid", "build_session",
    # errors
    "QmetroError", "DimensionError", "DomainError", "ConfigError",
    "ConvergenceError", "NonExistenceError", "InvalidChannelError",
    "InfeasibilityError", "DegeneracyError", "UnsupportedError",
]
