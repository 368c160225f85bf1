"""Gaussian location model with identity covariance and affine-subspace nulls.

Everything here is closed form: the unrestricted MLE is the sample mean and the
null-restricted MLE is the orthogonal projection of that mean onto the null set.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)
ORTHONORMAL_TOL = 1e-10


class ContractError(ValueError):
    """Raised when inputs violate an operation's preconditions."""


class ModelKind(enum.Enum):
    GAUSSIAN_LOCATION = "gaussian-location"
    GAUSSIAN_MIXTURE2 = "gaussian-mixture2"


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ContractError(f"model dimension must be >= 1, got {self.dim}")
        if self.kind is ModelKind.GAUSSIAN_MIXTURE2 and self.dim != 1:
            raise ContractError("the two-component mixture is one-dimensional")

    def check(self, data: "Dataset") -> None:
        if data.d != self.dim:
            raise ContractError(f"model has dim {self.dim}, data has d={data.d}")


class Dataset:
    """Immutable n x d matrix of observations.

    Any nonempty matrix is accepted; operations that need two or more rows
    (splitting) check that themselves.
    """

    __slots__ = ("_rows",)

    def __init__(self, rows):
        arr = np.array(rows, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ContractError(f"rows must form a 2-D array, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ContractError("dataset is empty")
        if arr.shape[1] < 1:
            raise ContractError("observations must have dimension >= 1")
        if not np.all(np.isfinite(arr)):
            raise ContractError("dataset contains non-finite values")
        arr.flags.writeable = False
        self._rows = arr

    @classmethod
    def _trusted(cls, arr: np.ndarray) -> "Dataset":
        # Skips validation for arrays produced internally (folds, simulated draws).
        obj = cls.__new__(cls)
        arr = arr.view()
        arr.flags.writeable = False
        obj._rows = arr
        return obj

    @property
    def rows(self) -> np.ndarray:
        return self._rows

    @property
    def n(self) -> int:
        return self._rows.shape[0]

    @property
    def d(self) -> int:
        return self._rows.shape[1]

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"Dataset(n={self.n}, d={self.d})"

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self._rows.shape == other._rows.shape and bool(np.all(self._rows == other._rows))

    __hash__ = None

    def mean(self) -> np.ndarray:
        return self._rows.mean(axis=0)


def as_dataset(data) -> Dataset:
    return data if isinstance(data, Dataset) else Dataset(data)


def read_csv(path, header: bool = False) -> Dataset:
    """Load one observation per line; ``header`` skips the first line."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if header:
            next(reader, None)
        rows = []
        for lineno, rec in enumerate(reader, start=2 if header else 1):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                rows.append([float(c) for c in rec])
            except ValueError as exc:
                raise ContractError(f"{path}:{lineno}: non-numeric field ({exc})") from None
    if not rows:
        raise ContractError(f"{path}: no observations")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ContractError(f"{path}: rows have differing column counts {sorted(widths)}")
    return Dataset(rows)


@dataclass(frozen=True, eq=False)
class LinearHypothesis:
    """Null set ``{offset + basis.T @ c}``: an affine subspace of dimension q.

    ``basis`` holds q orthonormal rows of length d. q = 0 gives a point null.
    """

    offset: np.ndarray
    basis: np.ndarray = field(default=None)

    def __post_init__(self):
        offset = np.array(self.offset, dtype=float).reshape(-1)
        d = offset.shape[0]
        if d < 1:
            raise ContractError("offset must have dimension >= 1")
        basis = self.basis
        if basis is None:
            basis = np.zeros((0, d))
        basis = np.array(basis, dtype=float)
        if basis.size == 0:
            basis = basis.reshape(0, d)
        if basis.ndim == 1:
            basis = basis.reshape(1, -1)
        if basis.shape[1] != d:
            raise ContractError(f"basis vectors have length {basis.shape[1]}, offset has {d}")
        q = basis.shape[0]
        if q >= d:
            raise ContractError(f"null dimension q={q} must be < d={d}")
        if not (np.all(np.isfinite(offset)) and np.all(np.isfinite(basis))):
            raise ContractError("hypothesis contains non-finite values")
        gram = basis @ basis.T
        if q and np.max(np.abs(gram - np.eye(q))) > ORTHONORMAL_TOL:
            raise ContractError("basis is not orthonormal (within 1e-10)")
        offset.flags.writeable = False
        basis.flags.writeable = False
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "basis", basis)

    @property
    def d(self) -> int:
        return self.offset.shape[0]

    @property
    def q(self) -> int:
        return self.basis.shape[0]

    @classmethod
    def coordinate(cls, d: int, free: Iterable[int], offset=None) -> "LinearHypothesis":
        """Coordinate subspace in which only the (0-based) ``free`` coordinates vary."""
        free = sorted(set(int(i) for i in free))
        if any(i < 0 or i >= d for i in free):
            raise ContractError(f"free coordinates must lie in [0, {d})")
        basis = np.zeros((len(free), d))
        basis[np.arange(len(free)), free] = 1.0
        return cls(np.zeros(d) if offset is None else offset, basis)

    @classmethod
    def point(cls, theta0) -> "LinearHypothesis":
        return cls(theta0)

    def contains(self, theta, tol: float = 1e-9) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.linalg.norm(theta - project(theta, self)) <= tol)


def _check_dim(d: int, expected: int, what: str) -> None:
    if d != expected:
        raise ContractError(f"dimension mismatch: {what} has d={d}, expected {expected}")


def loglik(theta, data) -> float:
    """Unit-covariance Gaussian log-likelihood of ``theta`` summed over rows."""
    data = as_dataset(data)
    theta = np.asarray(theta, dtype=float).reshape(-1)
    _check_dim(theta.shape[0], data.d, "theta")
    resid = data.rows - theta
    return float(-0.5 * data.n * data.d * LOG_2PI - 0.5 * np.sum(resid * resid))


def mle(data) -> np.ndarray:
    return as_dataset(data).mean()


def project(x, h: LinearHypothesis) -> np.ndarray:
    """Orthogonal projection of ``x`` onto the null affine subspace."""
    x = np.asarray(x, dtype=float).reshape(-1)
    _check_dim(x.shape[0], h.d, "x")
    centred = x - h.offset
    return h.offset + h.basis.T @ (h.basis @ centred)


def constrained_mle(data, h: LinearHypothesis) -> np.ndarray:
    data = as_dataset(data)
    _check_dim(data.d, h.d, "data")
    return project(data.mean(), h)


def residual_norm(x, h: LinearHypothesis) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x - project(x, h)))


def parse_coords(spec: str | Sequence[int]) -> list[int]:
    """Parse 1-based coordinate lists such as ``"1..45"``, ``"[1..45]"``, ``"1,3,7"``.

    Returns 0-based indices. ``""``, ``"none"`` and ``"[]"`` give an empty list.
    """
    if not isinstance(spec, str):
        return [int(i) - 1 for i in spec]
    text = spec.strip().strip("[]").strip()
    if text.lower() in ("", "none"):
        return []
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            lo_i, hi_i = int(lo), int(hi)
            if hi_i < lo_i:
                raise ContractError(f"empty coordinate range {part!r}")
            out.extend(range(lo_i - 1, hi_i))
        else:
            out.append(int(part) - 1)
    if any(i < 0 for i in out):
        raise ContractError("coordinates are 1-based")
    return out


def _parse_vector(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def read_hypothesis(path, d: int) -> LinearHypothesis:
    """Read a flat ``key = value`` hypothesis file.

    Keys: ``offset`` (d numbers), ``basis`` (rows separated by ``;``) or
    ``free_coords`` (1-based coordinate list). Lines starting with ``#`` are
    ignored.
    """
    entries: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ContractError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            entries[key.strip().replace("-", "_")] = value.strip()
    unknown = set(entries) - {"offset", "basis", "free_coords"}
    if unknown:
        raise ContractError(f"{path}: unknown keys {sorted(unknown)}")
    offset = _parse_vector(entries["offset"]) if "offset" in entries else [0.0] * d
    if len(offset) != d:
        raise ContractError(f"{path}: offset has {len(offset)} entries, data has d={d}")
    if "free_coords" in entries and "basis" in entries:
        raise ContractError(f"{path}: give either basis or free_coords, not both")
    if "free_coords" in entries:
        return LinearHypothesis.coordinate(d, parse_coords(entries["free_coords"]), offset)
    rows = [_parse_vector(r) for r in entries.get("basis", "").split(";") if r.strip()]
    return LinearHypothesis(offset, np.array(rows) if rows else None)
