"""Age-structured SIRS dynamics with a renewal boundary: solvers and checks."""

from .errors import (
    AgeSIRSError,
    ConditioningError,
    DomainError,
    NonConvergenceError,
    NumericalFailure,
    PositivityFailure,
    ScenarioError,
    StructuralError,
)
from .model import (
    AgeGrid,
    ForceSpec,
    MixingKernel,
    Model,
    ModelConstants,
    MortalityModel,
    RateSet,
    StateField,
    derive_constants,
    l1_norm,
    validate_hypotheses,
)
from .scenario import ScenarioConfig, bundled_scenario, load_scenario
from .solver import PicardSettings, Trajectory, picard_solve, simulate_direct

__version__ = "0.1.0"
