"""Observations, datasets, three-fold splits and empirical measures.

Datasets are stored column-wise (numpy arrays) and never mutated after
construction, so they can be shared freely between grid cells.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

SCHEMA_PREFIX = "# pluc-schema:"


@dataclass(frozen=True)
class Observation:
    x: np.ndarray
    a: int
    y: float
    xi: int

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("covariates must be finite")
        if self.a not in (0, 1) or self.xi not in (0, 1):
            raise ValueError("a and xi must be 0 or 1")
        if not 0.0 <= self.y <= 1.0:
            raise ValueError(f"y={self.y} outside [0, 1]")
        object.__setattr__(self, "x", x)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """n observations O = (X, A, Y, xi) held as arrays.

    ``check_ranges=False`` admits raw data whose covariates / outcomes live
    outside [0, 1] (the realistic scenario before preprocessing).
    """

    X: np.ndarray
    a: np.ndarray
    y: np.ndarray
    xi: np.ndarray
    check_ranges: bool = field(default=True, compare=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        n = X.shape[0]
        a = np.asarray(self.a, dtype=float).reshape(-1)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        xi = np.asarray(self.xi, dtype=float).reshape(-1)
        if n == 0:
            raise ValueError("dataset must be nonempty")
        if not (len(a) == len(y) == len(xi) == n):
            raise ValueError("column lengths disagree")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite values in dataset")
        if not (np.isin(a, (0.0, 1.0)).all() and np.isin(xi, (0.0, 1.0)).all()):
            raise ValueError("a and xi must be 0/1")
        if self.check_ranges and ((y < 0).any() or (y > 1).any()):
            raise ValueError("y must lie in [0, 1]")
        for name, arr in (("X", X), ("a", a), ("y", y), ("xi", xi)):
            object.__setattr__(self, name, _frozen(arr))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Observation:
        return Observation(self.X[i], int(self.a[i]), float(self.y[i]), int(self.xi[i]))

    def __iter__(self) -> Iterator[Observation]:
        return (self[i] for i in range(self.n))

    @property
    def observations(self) -> list[Observation]:
        return list(self)

    @classmethod
    def from_observations(cls, obs: Sequence[Observation]) -> "Dataset":
        if not obs:
            raise ValueError("dataset must be nonempty")
        d = len(obs[0].x)
        if any(len(o.x) != d for o in obs):
            raise ValueError("observations disagree on covariate dimension")
        return cls(
            np.vstack([o.x for o in obs]),
            [o.a for o in obs],
            [o.y for o in obs],
            [o.xi for o in obs],
        )

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.a[idx], self.y[idx], self.xi[idx], self.check_ranges)

    # -- CSV ---------------------------------------------------------------
    def to_csv(self, path: str | Path | None = None, schema: str = "dataset/1") -> str:
        buf = io.StringIO()
        buf.write(f"{SCHEMA_PREFIX} {schema}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(self.d)] + ["a", "y", "xi"])
        for i in range(self.n):
            w.writerow(
                [repr(float(v)) for v in self.X[i]]
                + [int(self.a[i]), repr(float(self.y[i])), int(self.xi[i])]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path, check_ranges: bool = True) -> "Dataset":
        rows = read_csv_rows(path)
        header, body = rows[0], rows[1:]
        xcols = [j for j, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()]
        try:
            ia, iy, ixi = header.index("a"), header.index("y"), header.index("xi")
        except ValueError as exc:
            raise ValueError(f"{path}: header must be x1,...,xd,a,y,xi") from exc
        if not xcols:
            raise ValueError(f"{path}: no covariate columns")
        X, a, y, xi = [], [], [], []
        for lineno, row in enumerate(body, start=2):
            try:
                X.append([float(row[j]) for j in xcols])
                av, xv = row[ia].strip(), row[ixi].strip()
                if av not in ("0", "1") or xv not in ("0", "1"):
                    raise ValueError("a and xi must be 0 or 1")
                a.append(int(av))
                xi.append(int(xv))
                y.append(float(row[iy]))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}: data row {lineno}: {exc}") from exc
        return cls(np.array(X), a, y, xi, check_ranges=check_ranges)


def read_csv_rows(path: str | Path) -> list[list[str]]:
    """Read a CSV file, skipping ``#`` schema/comment lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return [r for r in csv.reader(lines) if r]


@dataclass(frozen=True)
class FoldSplit:
    n1: np.ndarray
    n2: np.ndarray
    n3: np.ndarray

    def __iter__(self):
        return iter((self.n1, self.n2, self.n3))


def split_folds(data: Dataset | int, seed: int) -> FoldSplit:
    """Random partition of {0..n-1} into three folds of sizes equal up to one.

    Indices are shuffled once and dealt round-robin.
    """
    n = data if isinstance(data, (int, np.integer)) else data.n
    if n < 3:
        raise ValueError("insufficient data for three folds")
    perm = np.random.default_rng(seed).permutation(n)
    return FoldSplit(*(np.sort(perm[k::3]) for k in range(3)))


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform weights 1/|indices| on the indexed observations of ``data``."""

    data: Dataset
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int).reshape(-1)
        if idx.size == 0:
            raise ValueError("empirical measure needs at least one point")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def full(cls, data: Dataset) -> "EmpiricalMeasure":
        return cls(data, np.arange(data.n))

    @classmethod
    def of_covariates(cls, X: np.ndarray) -> "EmpiricalMeasure":
        """Measure over bare covariate draws (placeholder a, y, xi)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = X.shape[0]
        return cls(Dataset(X, np.zeros(n), np.zeros(n), np.zeros(n)), np.arange(n))

    @property
    def size(self) -> int:
        return self.indices.size

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.size, 1.0 / self.size)

    @property
    def X(self) -> np.ndarray:
        return self.data.X[self.indices]

    @property
    def points(self) -> Dataset:
        return self.data.subset(self.indices)

    def mean(self, values) -> float:
        values = np.broadcast_to(np.asarray(values, dtype=float), (self.size,))
        return float(np.mean(values))


def empirical_mean(m: EmpiricalMeasure, f: Callable[[Dataset], np.ndarray]) -> float:
    """Mean of ``f`` over the indexed observations.

    ``f`` is vectorised: it receives the indexed observations as a Dataset
    and returns one value per row (a scalar is broadcast).
    """
    if m.size == 0:
        raise ValueError("empty measure")
    return m.mean(f(m.points))
