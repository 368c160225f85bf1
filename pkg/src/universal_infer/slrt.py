"""Split likelihood ratio statistic and its Markov-inequality decision rule.

Orientation: ``gamma`` is the fraction of rows placed in the evaluation fold
D1, where the ratio is evaluated and the null MLE is fitted. The complement D0
is used only to fit the unrestricted estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .models import (
    ContractError,
    Dataset,
    LinearHypothesis,
    ModelKind,
    ModelSpec,
    as_dataset,
    constrained_mle,
    loglik,
    mle,
)

GAMMA_ORIENTATION = "gamma = n1/n, the evaluation-fold fraction"
GUARANTEE_VOID = "universal guarantee void: critical value overridden"

_LOG2 = math.log(2.0)


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def fold_sizes(n: int, gamma: float) -> tuple[int, int]:
    """Return ``(n0, n1)`` with ``n1 = clamp(round(gamma * n), 1, n - 1)``."""
    if n < 2:
        raise ContractError(f"splitting needs n >= 2, got n={n}")
    if not 0.0 < gamma < 1.0:
        raise ContractError(f"gamma must lie in (0, 1), got {gamma}")
    n1 = min(max(round_half_away(gamma * n), 1), n - 1)
    return n - n1, n1


@dataclass(frozen=True)
class SplitSpec:
    gamma: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ContractError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0 <= int(self.seed) < 2**64:
            raise ContractError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True, eq=False)
class SplitData:
    estimation: Dataset  # D0
    evaluation: Dataset  # D1
    permutation: np.ndarray  # first n1 entries index the evaluation fold

    @property
    def n0(self) -> int:
        return self.estimation.n

    @property
    def n1(self) -> int:
        return self.evaluation.n

    @property
    def gamma_effective(self) -> float:
        return self.n1 / (self.n0 + self.n1)

    def swapped(self) -> "SplitData":
        perm = np.concatenate([self.permutation[self.n1:], self.permutation[: self.n1]])
        return SplitData(self.evaluation, self.estimation, perm)


def _split_by_permutation(data: Dataset, perm: np.ndarray, n1: int) -> SplitData:
    perm = np.asarray(perm, dtype=np.int64)
    perm.flags.writeable = False
    rows = data.rows
    return SplitData(
        estimation=Dataset._trusted(rows[perm[n1:]]),
        evaluation=Dataset._trusted(rows[perm[:n1]]),
        permutation=perm,
    )


def split(data, spec: SplitSpec) -> SplitData:
    """Seeded shuffle of row indices; the first n1 go to the evaluation fold."""
    data = as_dataset(data)
    _, n1 = fold_sizes(data.n, spec.gamma)
    perm = np.random.default_rng(int(spec.seed)).permutation(data.n)
    return _split_by_permutation(data, perm, n1)


def split_by_assignment(data, evaluation_indices) -> SplitData:
    """Split with an explicit list of (0-based) evaluation-fold row indices."""
    data = as_dataset(data)
    idx = [int(i) for i in evaluation_indices]
    if len(set(idx)) != len(idx):
        raise ContractError("evaluation indices contain duplicates")
    if any(i < 0 or i >= data.n for i in idx):
        raise ContractError(f"evaluation indices must lie in [0, {data.n})")
    if not 1 <= len(idx) <= data.n - 1:
        raise ContractError("both folds must be nonempty")
    chosen = set(idx)
    rest = [i for i in range(data.n) if i not in chosen]
    return _split_by_permutation(data, np.array(idx + rest), len(idx))


def _check_gaussian(sd: SplitData, h: LinearHypothesis, model: Optional[ModelSpec]):
    if model is not None and model.kind is not ModelKind.GAUSSIAN_LOCATION:
        raise ContractError(f"closed-form statistic needs a Gaussian location model, got {model.kind}")
    if h is None:
        raise ContractError("the Gaussian location model needs a LinearHypothesis")
    d = sd.evaluation.d
    if sd.estimation.d != d or h.d != d or (model is not None and model.dim != d):
        raise ContractError("dimension mismatch between folds, hypothesis and model")


def gaussian_log_t(sd: SplitData, h: LinearHypothesis) -> float:
    """Closed form ``(n1/2) * (|X1bar - theta0|^2 - |X1bar - theta1|^2)``."""
    xbar1 = sd.evaluation.mean()
    theta1 = sd.estimation.mean()
    theta0 = constrained_mle(sd.evaluation, h)
    a = xbar1 - theta0
    b = xbar1 - theta1
    return 0.5 * sd.n1 * float(a @ a - b @ b)


def generic_log_t(sd: SplitData, h: LinearHypothesis) -> float:
    """Same statistic through two full log-likelihood evaluations on D1."""
    theta1 = mle(sd.estimation)
    theta0 = constrained_mle(sd.evaluation, h)
    return loglik(theta1, sd.evaluation) - loglik(theta0, sd.evaluation)


def slrt_statistic(sd: SplitData, h: Optional[LinearHypothesis], model: Optional[ModelSpec] = None,
                   *, method: str = "closed", em=None) -> float:
    """Log of the split likelihood ratio evaluated on D1.

    For the mixture model pass ``h=None``; the null is the single unit-variance
    Gaussian and ``em`` configures the fit on D0.
    """
    if model is not None and model.kind is ModelKind.GAUSSIAN_MIXTURE2:
        if h is not None:
            raise ContractError("the mixture model tests against a single Gaussian; h must be None")
        from .mixture import EmConfig, mixture_log_t

        return mixture_log_t(sd, em or EmConfig())
    _check_gaussian(sd, h, model)
    if method == "closed":
        return gaussian_log_t(sd, h)
    if method == "generic":
        return generic_log_t(sd, h)
    raise ContractError(f"unknown method {method!r}")


def swapped_statistic(sd: SplitData, h, model=None, **kwargs) -> float:
    return slrt_statistic(sd.swapped(), h, model, **kwargs)


def cross_fit_statistic(log_t: float, log_t_swap: float) -> float:
    """``log((exp(a) + exp(b)) / 2)`` without overflow or underflow."""
    if not (math.isfinite(log_t) and math.isfinite(log_t_swap)):
        raise ContractError("cross-fit inputs must be finite")
    hi, lo = (log_t, log_t_swap) if log_t >= log_t_swap else (log_t_swap, log_t)
    # Grouping keeps cross_fit_statistic(x, x) == x exactly.
    return hi + (math.log1p(math.exp(lo - hi)) - _LOG2)


@dataclass(frozen=True)
class TestConfig:
    alpha: float = 0.05
    critical_value_override: Optional[float] = None

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ContractError(f"alpha must lie in (0, 1), got {self.alpha}")
        c = self.critical_value_override
        if c is not None and not (math.isfinite(c) and c > 0):
            raise ContractError(f"critical value override must be positive, got {c}")

    @property
    def guarantee_void(self) -> bool:
        return self.critical_value_override is not None

    @property
    def log_crit(self) -> float:
        if self.critical_value_override is not None:
            return math.log(self.critical_value_override)
        return math.log(1.0 / self.alpha)


@dataclass(frozen=True)
class TestResult:
    log_t: float
    log_crit: float
    reject: bool
    n0: Optional[int] = None
    n1: Optional[int] = None
    gamma_effective: Optional[float] = None
    guarantee_void: bool = False

    __test__ = False

    def format_line(self) -> str:
        parts = [
            f"log_t={self.log_t!r}",
            f"log_crit={self.log_crit!r}",
            f"reject={int(self.reject)}",
            f"n0={self.n0}",
            f"n1={self.n1}",
        ]
        if self.guarantee_void:
            parts.append("guarantee=void")
        return " ".join(parts)


def decide(log_t: float, cfg: TestConfig, sd: Optional[SplitData] = None) -> TestResult:
    """Reject when ``log_t >= log(1/alpha)`` (or the overridden threshold)."""
    log_crit = cfg.log_crit
    return TestResult(
        log_t=float(log_t),
        log_crit=log_crit,
        reject=bool(log_t >= log_crit),
        n0=None if sd is None else sd.n0,
        n1=None if sd is None else sd.n1,
        gamma_effective=None if sd is None else sd.gamma_effective,
        guarantee_void=cfg.guarantee_void,
    )


def run_test(data, h: LinearHypothesis, spec: Optional[SplitSpec], cfg: TestConfig, *,
             cross_fit: bool = False, assignment=None) -> TestResult:
    """Split (or use ``assignment``), compute the statistic, and decide."""
    data = as_dataset(data)
    model = ModelSpec(ModelKind.GAUSSIAN_LOCATION, data.d)
    sd = split_by_assignment(data, assignment) if assignment is not None else split(data, spec)
    log_t = slrt_statistic(sd, h, model)
    if cross_fit:
        log_t = cross_fit_statistic(log_t, swapped_statistic(sd, h, model))
    return decide(log_t, cfg, sd)
