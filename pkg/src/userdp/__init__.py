"""User-level differentially private stochastic convex optimization."""

from .concentrated_mean import HALTED, MeanSession, QueryResult, noise_variance, open_session
from .core import (
    InvalidParameterError,
    NoiseHook,
    PrivacyBudget,
    RngStream,
    UsageError,
    UserDataset,
    sample_gaussian_vector,
    sample_laplace,
    sample_uniform_ball,
)
from .harness import ExperimentConfig, ExperimentReport, run, sweep, verify
from .losses import (
    BallDomain,
    LinearLoss,
    NormLoss,
    PopulationSpec,
    QuadraticLoss,
    excess_risk,
    population_risk,
)
from .optimizer import (
    SGDConfig,
    default_config,
    dpsgd,
    localization_schedule,
    localized_dpsgd,
    nonprivate_sgd,
)
from .sparse_vector import Answer, at_init, at_step
from .verify import CheckReport

__version__ = "0.1.0"
