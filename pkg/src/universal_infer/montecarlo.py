"""Replicated power/size simulation over departure and split-ratio grids.

Every replicate draws its randomness from seeds derived from
``(master_seed, replicate_index, stream)``, so a cell's result does not depend
on how replicates are scheduled across workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import Executor, ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, replace
from typing import Iterator, Optional, Sequence

import numpy as np

from .mixture import EmConfig, MixtureParams, mixture_log_t
from .models import ContractError, Dataset, LinearHypothesis
from .slrt import (
    SplitSpec,
    TestConfig,
    cross_fit_statistic,
    gaussian_log_t,
    round_half_away,
    split,
)

STREAM_DATA = 0
STREAM_SPLIT = 1
STREAM_EM = 2

STATISTICS = ("plain", "crossfit")


def derive_seed(master_seed: int, index: int, stream: int) -> int:
    """64-bit child seed for one (replicate, stream) pair.

    Uses numpy's SeedSequence with ``spawn_key=(index, stream)``; its hashing is
    fixed across numpy versions and platforms.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(index), int(stream)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def stream_rng(master_seed: int, index: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, index, stream))


@dataclass(frozen=True)
class SimCell:
    """One Monte Carlo configuration plus, once run, its rejection rate.

    The truth is N((delta,...,delta), I_d) and the null leaves the first q
    coordinates free and pins the rest at 0. For ``model="mixture"`` (d = 1,
    q = 0) the truth is ``mixture`` or N(0, 1) when that is None.
    """

    n: int
    d: int
    q: int
    delta: float
    gamma: float
    alpha: float
    reps: int
    seed: int
    statistic: str = "plain"
    kind: str = "power"
    model: str = "gaussian"
    critical_value: Optional[float] = None
    mixture: Optional[MixtureParams] = None
    reject_rate: Optional[float] = None
    stderr: Optional[float] = None
    mean_t: Optional[float] = None
    mean_t_stderr: Optional[float] = None

    def __post_init__(self):
        if self.n < 2:
            raise ContractError(f"n must be >= 2, got {self.n}")
        if self.d < 1 or not 0 <= self.q < self.d:
            raise ContractError(f"need 0 <= q < d, got d={self.d}, q={self.q}")
        if self.reps < 1:
            raise ContractError("reps must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ContractError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.gamma < 1.0:
            raise ContractError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not math.isfinite(self.delta):
            raise ContractError("delta must be finite")
        if self.statistic not in STATISTICS:
            raise ContractError(f"statistic must be one of {STATISTICS}")
        if self.model not in ("gaussian", "mixture"):
            raise ContractError(f"unknown model {self.model!r}")
        if self.model == "mixture" and (self.d != 1 or self.q != 0):
            raise ContractError("mixture cells have d=1, q=0")
        if not 0 <= int(self.seed) < 2**64:
            raise ContractError("seed must be an unsigned 64-bit integer")
        TestConfig(self.alpha, self.critical_value)

    @property
    def test_config(self) -> TestConfig:
        return TestConfig(self.alpha, self.critical_value)

    @property
    def guarantee_void(self) -> bool:
        return self.critical_value is not None

    def hypothesis(self) -> LinearHypothesis:
        return LinearHypothesis.coordinate(self.d, range(self.q))

    def truth_mean(self) -> np.ndarray:
        return np.full(self.d, float(self.delta))

    def signal_norm(self) -> float:
        """Norm of the truth's component orthogonal to the null, delta * sqrt(d - q)."""
        return abs(self.delta) * math.sqrt(self.d - self.q)


def check_fold_sizes(n: int, gamma: float) -> None:
    n1 = round_half_away(gamma * n)
    if not 1 <= n1 <= n - 1:
        raise ContractError(f"gamma={gamma} gives n1={n1} outside [1, {n - 1}] for n={n}")


# Worker side.

def _replicate_data(cell: SimCell, r: int) -> np.ndarray:
    rng = stream_rng(cell.seed, r, STREAM_DATA)
    if cell.model == "mixture":
        if cell.mixture is None:
            return rng.standard_normal((cell.n, 1))
        return cell.mixture.sample(rng, cell.n).reshape(-1, 1)
    x = rng.standard_normal((cell.n, cell.d))
    x += cell.delta
    return x


def replicate_log_t(cell: SimCell, r: int, h: Optional[LinearHypothesis] = None) -> float:
    """Statistic for replicate ``r`` of ``cell``."""
    x = _replicate_data(cell, r)
    sd = split(Dataset._trusted(x), SplitSpec(cell.gamma, derive_seed(cell.seed, r, STREAM_SPLIT)))
    if cell.model == "mixture":
        em = EmConfig(seed=derive_seed(cell.seed, r, STREAM_EM))
        log_t = mixture_log_t(sd, em)
        if cell.statistic == "crossfit":
            log_t = cross_fit_statistic(log_t, mixture_log_t(sd.swapped(), em))
        return log_t
    h = h if h is not None else cell.hypothesis()
    log_t = gaussian_log_t(sd, h)
    if cell.statistic == "crossfit":
        log_t = cross_fit_statistic(log_t, gaussian_log_t(sd.swapped(), h))
    return log_t


def _simulate_block(cell: SimCell, start: int, stop: int) -> np.ndarray:
    h = cell.hypothesis()
    return np.array([replicate_log_t(cell, r, h) for r in range(start, stop)])


# Driver side.

def resolve_workers(workers: Optional[int]) -> int:
    """``None`` falls back to $UNIVERSAL_INFER_THREADS, then 1; 0 means all CPUs."""
    if workers is None:
        env = os.environ.get("UNIVERSAL_INFER_THREADS")
        workers = int(env) if env else 1
    if workers < 0:
        raise ContractError("workers must be >= 0")
    return workers or (os.cpu_count() or 1)


@contextmanager
def worker_pool(workers: Optional[int]) -> Iterator[Optional[Executor]]:
    workers = resolve_workers(workers)
    if workers <= 1:
        yield None
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield pool


def simulate_log_t(cell: SimCell, executor: Optional[Executor] = None, blocks: int = 1) -> np.ndarray:
    """Per-replicate statistics, in replicate order."""
    check_fold_sizes(cell.n, cell.gamma)
    if executor is None or blocks <= 1:
        return _simulate_block(cell, 0, cell.reps)
    edges = np.linspace(0, cell.reps, blocks + 1).round().astype(int)
    futures = [executor.submit(_simulate_block, cell, int(a), int(b))
               for a, b in zip(edges[:-1], edges[1:]) if b > a]
    return np.concatenate([f.result() for f in futures])


def summarize(cell: SimCell, log_t: np.ndarray) -> SimCell:
    reps = cell.reps
    rejections = int(np.count_nonzero(log_t >= cell.test_config.log_crit))
    p = rejections / reps
    # T overflows under strong alternatives; the mean of T only matters under the null.
    with np.errstate(over="ignore", invalid="ignore"):
        t = np.exp(log_t)
        mean_t = float(np.mean(t))
        mean_t_se = float(np.std(t, ddof=1) / math.sqrt(reps)) if reps > 1 else float("nan")
    return replace(
        cell,
        reject_rate=p,
        stderr=math.sqrt(p * (1.0 - p) / reps),
        mean_t=mean_t,
        mean_t_stderr=mean_t_se,
    )


def run_cell(cell: SimCell, workers: Optional[int] = 1, executor: Optional[Executor] = None) -> SimCell:
    """Estimate the rejection rate of ``cell`` by ``cell.reps`` replicates."""
    check_fold_sizes(cell.n, cell.gamma)
    if executor is not None:
        n_workers = getattr(executor, "_max_workers", 1)
        return summarize(cell, simulate_log_t(cell, executor, blocks=4 * n_workers))
    with worker_pool(workers) as pool:
        n_workers = resolve_workers(workers)
        return summarize(cell, simulate_log_t(cell, pool, blocks=4 * n_workers))


def _run_many(cells: Sequence[SimCell], workers: Optional[int]) -> list[SimCell]:
    with worker_pool(workers) as pool:
        return [run_cell(c, executor=pool) if pool is not None else run_cell(c, workers=1)
                for c in cells]


def sweep_delta(base: SimCell, delta_grid: Sequence[float], workers: Optional[int] = 1) -> list[SimCell]:
    """Power as a function of delta with every other setting held at ``base``."""
    if len(delta_grid) == 0:
        raise ContractError("delta grid is empty")
    check_fold_sizes(base.n, base.gamma)
    cells = [replace(base, delta=float(dl)) for dl in sorted(delta_grid)]
    return _run_many(cells, workers)


def sweep_gamma(base: SimCell, gamma_grid: Sequence[float], workers: Optional[int] = 1) -> list[SimCell]:
    """Rejection rate as a function of the split ratio."""
    if len(gamma_grid) == 0:
        raise ContractError("gamma grid is empty")
    bad = []
    for g in gamma_grid:
        try:
            check_fold_sizes(base.n, g) if 0.0 < g < 1.0 else bad.append(g)
        except ContractError:
            bad.append(g)
    if bad:
        raise ContractError(f"gamma values {bad} give an empty fold for n={base.n}")
    cells = [replace(base, gamma=float(g)) for g in sorted(gamma_grid)]
    return _run_many(cells, workers)


@dataclass(frozen=True)
class TuneResult:
    gamma_grid: tuple
    power_at: tuple
    gamma_star: float
    achieved_power: float
    target_power: float
    meets_target: bool
    cells: tuple = ()


def pick_gamma(gamma_grid: Sequence[float], power: Sequence[float], target_power: float) -> TuneResult:
    """Argmax of estimated power; ties go to the smaller gamma."""
    if len(gamma_grid) == 0:
        raise ContractError("gamma grid is empty")
    if len(gamma_grid) != len(power):
        raise ContractError("grid and power estimates differ in length")
    order = sorted(range(len(gamma_grid)), key=lambda i: gamma_grid[i])
    grid = tuple(float(gamma_grid[i]) for i in order)
    pw = tuple(float(power[i]) for i in order)
    best = max(range(len(grid)), key=lambda i: (pw[i], -i))
    return TuneResult(
        gamma_grid=grid,
        power_at=pw,
        gamma_star=grid[best],
        achieved_power=pw[best],
        target_power=target_power,
        meets_target=pw[best] >= target_power,
    )


def tune_gamma(base: SimCell, gamma_grid: Sequence[float], target_power: float,
               workers: Optional[int] = 1) -> TuneResult:
    """Choose the split ratio with the highest simulated power at ``base.delta``.

    Only the split changes; the critical value stays at 1/alpha, so the tuned
    test keeps its finite-sample validity.
    """
    if not 0.0 < target_power < 1.0:
        raise ContractError(f"target power must lie in (0, 1), got {target_power}")
    if base.critical_value is not None:
        raise ContractError("tuning never alters the critical value; drop the override")
    cells = sweep_gamma(replace(base, kind="tune"), gamma_grid, workers)
    res = pick_gamma([c.gamma for c in cells], [c.reject_rate for c in cells], target_power)
    return replace(res, cells=tuple(cells))


def parse_grid(spec: str) -> list[float]:
    """``start:stop:step`` with stop included when within half a step."""
    parts = spec.split(":")
    if len(parts) == 1:
        return [float(v) for v in spec.split(",") if v.strip()]
    if len(parts) != 3:
        raise ContractError(f"grid must be start:stop:step, got {spec!r}")
    start, stop, step = (float(p) for p in parts)
    if not step > 0:
        raise ContractError("grid step must be positive")
    if stop < start:
        raise ContractError("grid stop is below start")
    count = int(math.floor((stop - start) / step + 0.5)) + 1
    return [round(start + i * step, 12) for i in range(count)]
