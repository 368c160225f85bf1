"""Two-component unit-variance Gaussian mixture on the real line.

Used as an irregular alternative: the null (a single N(mu, 1)) sits on the
boundary of the mixture family, where the classical LRT asymptotics break down
but the split statistic keeps its finite-sample guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .models import LOG_2PI, ContractError, as_dataset, loglik
from .slrt import SplitData, SplitSpec, TestConfig, TestResult, decide, split


@dataclass(frozen=True)
class MixtureParams:
    weight: float
    mu1: float
    mu2: float

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ContractError(f"weight must lie in [0, 1], got {self.weight}")
        if not (math.isfinite(self.mu1) and math.isfinite(self.mu2)):
            raise ContractError("mixture means must be finite")

    def swapped(self) -> "MixtureParams":
        return MixtureParams(1.0 - self.weight, self.mu2, self.mu1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        first = rng.random(n) < self.weight
        return np.where(first, self.mu1, self.mu2) + rng.standard_normal(n)


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 500
    tol: float = 1e-8
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1 or self.restarts < 1:
            raise ContractError("max_iters and restarts must be positive")
        if not self.tol > 0:
            raise ContractError("tol must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ContractError("seed must be an unsigned 64-bit integer")


def _as_1d(data) -> np.ndarray:
    data = as_dataset(data)
    if data.d != 1:
        raise ContractError(f"the mixture model is one-dimensional, got d={data.d}")
    return data.rows[:, 0]


def _component_logs(x, weight, mu1, mu2):
    lw1 = math.log(weight) if weight > 0 else -np.inf
    lw2 = math.log(1.0 - weight) if weight < 1 else -np.inf
    l1 = lw1 - 0.5 * (x - mu1) ** 2
    l2 = lw2 - 0.5 * (x - mu2) ** 2
    return l1, l2


def mixture_loglik(p: MixtureParams, data) -> float:
    x = _as_1d(data)
    l1, l2 = _component_logs(x, p.weight, p.mu1, p.mu2)
    return float(np.sum(np.logaddexp(l1, l2)) - 0.5 * x.shape[0] * LOG_2PI)


@njit(cache=True)
def _em_loop(x, w, mu1, mu2, max_iters, tol, history):
    n = x.shape[0]
    half_log2pi = 0.5 * math.log(2.0 * math.pi)
    r1 = np.empty(n)
    prev = -np.inf
    it = 0
    while True:
        lw1 = math.log(w) if w > 0.0 else -np.inf
        lw2 = math.log(1.0 - w) if w < 1.0 else -np.inf
        ll = 0.0
        for i in range(n):
            a = lw1 - 0.5 * (x[i] - mu1) ** 2
            b = lw2 - 0.5 * (x[i] - mu2) ** 2
            m = a if a > b else b
            lse = m + math.log(math.exp(a - m) + math.exp(b - m))
            r1[i] = math.exp(a - lse)
            ll += lse - half_log2pi
        history[it] = ll
        if it > 0 and ll - prev < tol:
            break
        if it == max_iters:
            break
        prev = ll
        s1 = 0.0
        sx1 = 0.0
        sx2 = 0.0
        for i in range(n):
            s1 += r1[i]
            sx1 += r1[i] * x[i]
            sx2 += (1.0 - r1[i]) * x[i]
        s2 = n - s1
        w = s1 / n
        if s1 > 0.0:
            mu1 = sx1 / s1
        if s2 > 0.0:
            mu2 = sx2 / s2
        it += 1
    return w, mu1, mu2, it


def em_iterate(data, start: MixtureParams, max_iters: int = 500, tol: float = 1e-8):
    """Run EM from ``start``; return ``(params, loglik_history)``.

    ``history[k]`` is the log-likelihood after k M-steps.
    """
    x = np.ascontiguousarray(_as_1d(data))
    history = np.empty(max_iters + 1)
    w, mu1, mu2, it = _em_loop(x, float(start.weight), float(start.mu1), float(start.mu2),
                               int(max_iters), float(tol), history)
    w = min(max(w, 0.0), 1.0)
    return MixtureParams(w, mu1, mu2), history[: it + 1].copy()


def _starts(x: np.ndarray, cfg: EmConfig) -> list[MixtureParams]:
    lo, hi = np.quantile(x, [0.25, 0.75])
    scale = 0.5 * float(np.std(x))
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed)))
    out = [MixtureParams(0.5, float(lo), float(hi))]
    for _ in range(1, cfg.restarts):
        j1, j2 = rng.normal(0.0, scale, size=2)
        out.append(MixtureParams(0.5, float(lo + j1), float(hi + j2)))
    return out


def em_fit(data, cfg: EmConfig = EmConfig()) -> MixtureParams:
    """Best of ``cfg.restarts`` EM runs started from jittered quartiles.

    Ties in log-likelihood go to the lowest restart index. The collapsed fit
    ``(0.5, xbar, xbar)`` is returned when no run beats it, including for
    constant data.
    """
    x = _as_1d(data)
    if x.shape[0] < 2:
        raise ContractError("EM needs at least two observations")
    if np.all(x == x[0]):
        return MixtureParams(0.5, float(x[0]), float(x[0]))
    best, best_ll = None, -np.inf
    for start in _starts(x, cfg):
        params, _ = em_iterate(x, start, cfg.max_iters, cfg.tol)
        ll = mixture_loglik(params, x)
        if best is None or ll > best_ll:
            best, best_ll = params, ll
    # EM creeps towards the boundary; the collapsed fit keeps the null nested.
    xbar = float(x.mean())
    collapsed = MixtureParams(0.5, xbar, xbar)
    if mixture_loglik(collapsed, x) > best_ll:
        best = collapsed
    return best


def mixture_log_t(sd: SplitData, em: EmConfig) -> float:
    theta1 = em_fit(sd.estimation, em)
    x1 = sd.evaluation
    _as_1d(x1)
    return mixture_loglik(theta1, x1) - loglik(x1.mean(), x1)


def mixture_slrt(data, spec: SplitSpec, cfg: TestConfig, em: Optional[EmConfig] = None) -> TestResult:
    """Mixture alternative fitted on D0 against the exact Gaussian null MLE on D1."""
    data = as_dataset(data)
    _as_1d(data)
    sd = split(data, spec)
    return decide(mixture_log_t(sd, em or EmConfig()), cfg, sd)


def parse_truth(text: str) -> Optional[MixtureParams]:
    """``"null"`` -> None (standard normal); ``"mix:w,mu1,mu2"`` -> MixtureParams."""
    text = text.strip()
    if text == "null":
        return None
    if not text.startswith("mix:"):
        raise ContractError(f"truth must be 'null' or 'mix:<w>,<mu1>,<mu2>', got {text!r}")
    try:
        w, mu1, mu2 = (float(t) for t in text[4:].split(","))
    except ValueError:
        raise ContractError(f"cannot parse mixture truth {text!r}") from None
    return MixtureParams(w, mu1, mu2)

