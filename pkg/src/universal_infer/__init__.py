"""Split likelihood ratio tests with Monte Carlo power and split-ratio studies."""

from .mixture import EmConfig, MixtureParams, em_fit, mixture_loglik, mixture_slrt
from .models import (
    ContractError,
    Dataset,
    LinearHypothesis,
    ModelKind,
    ModelSpec,
    constrained_mle,
    loglik,
    mle,
    project,
)
from .montecarlo import SimCell, TuneResult, run_cell, sweep_delta, sweep_gamma, tune_gamma
from .slrt import (
    SplitData,
    SplitSpec,
    TestConfig,
    TestResult,
    cross_fit_statistic,
    decide,
    slrt_statistic,
    split,
    swapped_statistic,
)

__version__ = "0.1.0"
