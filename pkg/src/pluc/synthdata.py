"""Synthetic scenarios with counterfactuals and their analytic oracles.

Every scenario exposes its conditional means m_a(x) = E[Y(a) | x], the
adverse-event means nu_a(x) and the propensity e(x) in closed form; the data
generator and the oracle nuisances share these functions.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .core import Dataset
from .nuisance import NuisanceModel

KINDS = ("linear", "threshold", "small", "realistic")
PROPENSITY_VARIANTS = ("x2", "x5")
N_COVARIATES = 10
# E[expit(eps)] for eps ~ N(0, 1): exactly 1/2, since expit(e) + expit(-e) = 1
MEAN_EXPIT_NOISE = 0.5


@dataclass(frozen=True)
class Scenario:
    kind: str = "linear"
    with_baseline: bool = False
    propensity_variant: str = "x2"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario {self.kind!r}; choose from {KINDS}")
        if self.propensity_variant not in PROPENSITY_VARIANTS:
            raise ValueError(f"unknown propensity variant {self.propensity_variant!r}")

    # -- mechanism --------------------------------------------------------

    def effect(self, a, X) -> np.ndarray:
        """f(a, x)."""
        X = np.atleast_2d(X)
        s = 2.0 * np.asarray(a, dtype=float) - 1.0
        if self.kind in ("linear", "small"):
            return 2.0 * s * (1.0 - X[:, 0] - X[:, 1])
        if self.kind == "threshold":
            hi = (X[:, 0] > 0.4) & (X[:, 1] > 0.6)
            lo = (X[:, 0] <= 0.4) & (X[:, 1] <= 0.6)
            return s * np.where(hi, 1.1, np.where(lo, -0.9, 0.1))
        return s * (-4.0 + 0.1 * X[:, 0])

    def m(self, a, X) -> np.ndarray:
        """E[Y(a) | X = x] with the outcome noise integrated out."""
        X = np.atleast_2d(X)
        f = self.effect(a, X)
        if self.kind == "realistic":
            return 0.4 * X[:, 3] - 0.2 * X[:, 4] + f
        if self.with_baseline:
            return 0.55 * expit(f) + 0.35 * expit(3.0 * X[:, 2] - X[:, 3]) + 0.05 * MEAN_EXPIT_NOISE
        return 0.95 * expit(f) + 0.05 * MEAN_EXPIT_NOISE

    def nu0(self, X) -> np.ndarray:
        n = np.atleast_2d(X).shape[0]
        base = {"linear": 0.25, "threshold": 0.1, "small": 0.01, "realistic": 0.01}[self.kind]
        return np.full(n, base)

    def p(self, X) -> np.ndarray:
        """P(xi(1) = 1 | xi(0) = 0, x)."""
        X = np.atleast_2d(X)
        if self.kind == "linear":
            return expit(4.0 * (X[:, 1] - 0.5))
        if self.kind == "threshold":
            box = (0.2 < X[:, 2]) & (X[:, 2] < 0.8) & (0.25 < X[:, 3]) & (X[:, 3] < 0.75)
            return 0.1 + 0.9 * box
        if self.kind == "small":
            return np.full(X.shape[0], 0.04)
        x2, x3 = X[:, 1], X[:, 2]
        return (x3 == 1).astype(float) + 0.35 * ((x2 == 1) & (x3 == 0))

    def nu(self, a, X) -> np.ndarray:
        n0 = self.nu0(X)
        a = np.broadcast_to(np.asarray(a, dtype=float), n0.shape)
        return np.where(a == 1, n0 + (1.0 - n0) * self.p(X), n0)

    def delta_mu(self, X) -> np.ndarray:
        return self.m(1, X) - self.m(0, X)

    def delta_nu(self, X) -> np.ndarray:
        return (1.0 - self.nu0(X)) * self.p(X)

    def e(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.kind == "realistic":
            return expit(-0.5 * X[:, 1] + 0.2 * X[:, 4] + 0.6 * (X[:, 3] - 5.5))
        col = 1 if self.propensity_variant == "x2" else 4
        return expit(4.0 * (X[:, col] - 0.5))

    def covariates(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind != "realistic":
            return rng.uniform(0.0, 1.0, size=(n, N_COVARIATES))
        age = rng.uniform(16.0, 65.0, n)
        sex = rng.binomial(1, 0.5, n).astype(float)
        eligible = (age >= 18) & (age <= 45) & (sex == 1)
        x3 = rng.binomial(1, 0.3 * eligible).astype(float)
        x4 = rng.uniform(0.0, 10.0, n)
        x5 = rng.uniform(0.0, 10.0, n)
        return np.column_stack([age, sex, x3, x4, x5])

    def oracle_nuisances(self) -> NuisanceModel:
        if self.kind == "realistic":
            raise ValueError("oracle nuisances need outcomes in [0, 1]; preprocess realistic data")
        return NuisanceModel(self.m, self.nu, self.e, label=f"oracle[{self.kind}]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CounterfactualRow:
    x: np.ndarray
    y0: float
    y1: float
    xi0: int
    xi1: int
    a: int


@dataclass(frozen=True)
class Counterfactuals:
    """Columnar potential outcomes, aligned with the observed dataset."""

    y0: np.ndarray
    y1: np.ndarray
    xi0: np.ndarray
    xi1: np.ndarray

    def rows(self, data: Dataset) -> list[CounterfactualRow]:
        return [CounterfactualRow(data.X[i], float(self.y0[i]), float(self.y1[i]),
                                  int(self.xi0[i]), int(self.xi1[i]), int(data.a[i]))
                for i in range(data.n)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("# pluc-schema: counterfactuals/1\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y0", "y1", "xi0", "xi1"])
            for r in zip(self.y0, self.y1, self.xi0, self.xi1):
                w.writerow([repr(float(r[0])), repr(float(r[1])), int(r[2]), int(r[3])])


def generate(sc: Scenario, n: int, seed) -> tuple[Dataset, Counterfactuals]:
    """Draw n rows of (X, A, Y, xi) together with both potential outcomes."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    X = sc.covariates(rng, n)
    a = rng.binomial(1, sc.e(X)).astype(float)
    if sc.kind == "realistic":
        noise = rng.standard_normal((n, 2))
        y0 = sc.m(0, X) + 0.5 * noise[:, 0]
        y1 = sc.m(1, X) + 0.5 * noise[:, 1]
    else:
        noise = 0.05 * (expit(rng.standard_normal((n, 2))) - MEAN_EXPIT_NOISE)
        y0 = sc.m(0, X) + noise[:, 0]
        y1 = sc.m(1, X) + noise[:, 1]
    xi0 = rng.binomial(1, sc.nu0(X))
    xi1 = np.where(xi0 == 1, 1, rng.binomial(1, np.clip(sc.p(X), 0.0, 1.0)))
    y = np.where(a == 1, y1, y0)
    xi = np.where(a == 1, xi1, xi0).astype(float)
    data = Dataset(X, a, y, xi, check_ranges=sc.kind != "realistic")
    return data, Counterfactuals(y0, y1, xi0.astype(int), xi1.astype(int))


def oracle_metrics(sc: Scenario, policy: Callable, alpha: float, mc_n: int = 100_000,
                   seed=0) -> tuple[float, float]:
    """(value, constraint) of a policy under fresh covariates and analytic means.

    For the realistic scenario ``policy`` sees raw covariates; compose it with
    the preprocessing transform if it was learned on scaled data.
    """
    if mc_n < 1:
        raise ValueError("mc_n must be at least 1")
    X = sc.covariates(np.random.default_rng(seed), mc_n)
    pi = np.asarray(policy(X), dtype=float).reshape(-1)
    value = float(np.mean(pi * sc.m(1, X) + (1.0 - pi) * sc.m(0, X)))
    constraint = float(np.mean(pi * sc.delta_nu(X)) - alpha)
    return value, constraint


def surrogate_unconstrained_value(sc: Scenario, mc_n: int = 100_000, seed=0) -> float:
    """Value of the rule 1{Delta mu_0(x) > 0}."""
    return oracle_metrics(sc, lambda X: (sc.delta_mu(X) > 0).astype(float), 0.0, mc_n, seed)[0]


# -- preprocessing for the realistic scenario ----------------------------------


@dataclass(frozen=True)
class MinMaxTransform:
    x_min: tuple[float, ...]
    x_max: tuple[float, ...]
    y_min: float
    y_max: float

    @classmethod
    def fit(cls, data: Dataset) -> "MinMaxTransform":
        lo, hi = data.X.min(axis=0), data.X.max(axis=0)
        for j in np.flatnonzero(hi - lo <= 0):
            raise ValueError(f"covariate x{j + 1} is constant; cannot min-max scale")
        ylo, yhi = float(data.y.min()), float(data.y.max())
        if yhi <= ylo:
            raise ValueError("outcome y is constant; cannot min-max scale")
        return cls(tuple(map(float, lo)), tuple(map(float, hi)), ylo, yhi)

    def scale_x(self, X) -> np.ndarray:
        lo, hi = np.asarray(self.x_min), np.asarray(self.x_max)
        return np.clip((np.atleast_2d(X) - lo) / (hi - lo), 0.0, 1.0)

    def scale_y(self, y) -> np.ndarray:
        return np.clip((np.asarray(y, dtype=float) - self.y_min) / (self.y_max - self.y_min), 0.0, 1.0)

    def unscale_y(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) * (self.y_max - self.y_min) + self.y_min

    def apply(self, data: Dataset) -> Dataset:
        return Dataset(self.scale_x(data.X), data.a, self.scale_y(data.y), data.xi)

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "MinMaxTransform":
        d = json.loads(text)
        return cls(tuple(d["x_min"]), tuple(d["x_max"]), float(d["y_min"]), float(d["y_max"]))


def preprocess_realistic(data: Dataset, fit_on=None) -> tuple[Dataset, MinMaxTransform]:
    """Min-max scale covariates and outcome into [0, 1].

    Statistics come from the rows ``fit_on`` (default: all rows); values of
    other rows falling outside the fitted range are clipped.
    """
    ref = data if fit_on is None else data.subset(fit_on)
    tr = MinMaxTransform.fit(ref)
    return tr.apply(data), tr
