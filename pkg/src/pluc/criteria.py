"""Risk, constraint, value and Lagrangian criteria, the Lagrangian gradient,
and the influence-curve expressions used for targeting."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .core import Dataset, EmpiricalMeasure, Observation
from .nuisance import NuisanceModel, check_positivity
from .policy import ScoreFunction, SmoothPolicy
from .scaling import sigma, sigma_prime

Fn = Callable[[np.ndarray], np.ndarray]
ScoreLike = Union[ScoreFunction, Callable, np.ndarray]


def _points(measure) -> np.ndarray:
    if isinstance(measure, EmpiricalMeasure):
        return measure.X
    return np.atleast_2d(np.asarray(measure, dtype=float))


def _values(f, X: np.ndarray) -> np.ndarray:
    """Evaluate ``f`` at the rows of X; arrays are taken as precomputed."""
    if isinstance(f, np.ndarray) or np.isscalar(f):
        return np.broadcast_to(np.asarray(f, dtype=float), (X.shape[0],)).copy()
    return np.asarray(f(X), dtype=float).reshape(-1)


@dataclass(frozen=True)
class CriterionContext:
    """Empirical covariate law plus Delta mu / Delta nu evaluators.

    The evaluators are materialised once at the measure points (``dmu``,
    ``dnu``); the callables are kept for off-measure evaluation.
    """

    measure: EmpiricalMeasure | np.ndarray
    delta_mu: Fn | np.ndarray
    delta_nu: Fn | np.ndarray
    alpha: float
    X: np.ndarray = field(init=False, repr=False)
    dmu: np.ndarray = field(init=False, repr=False)
    dnu: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 0.5:
            raise ValueError("alpha must lie in [0, 1/2]")
        X = _points(self.measure)
        dmu, dnu = _values(self.delta_mu, X), _values(self.delta_nu, X)
        if np.any(dnu < -1e-12):
            raise ValueError("delta_nu must be nonnegative")
        if not (np.all(np.isfinite(dmu)) and np.all(np.isfinite(dnu))):
            raise ValueError("non-finite Delta mu / Delta nu")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "dmu", dmu)
        object.__setattr__(self, "dnu", np.maximum(dnu, 0.0))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def psi_values(self, psi: ScoreLike) -> np.ndarray:
        if isinstance(psi, np.ndarray):
            if psi.shape != (self.n,):
                raise ValueError("score values do not match the measure")
            return psi
        return _values(psi, self.X)


@dataclass(frozen=True)
class LagrangianProblem:
    ctx: CriterionContext
    lam: float
    beta: float

    def __post_init__(self):
        if self.lam < 0 or self.beta < 0:
            raise ValueError("lambda and beta must be nonnegative")


def risk(ctx: CriterionContext, psi: ScoreLike) -> float:
    v = ctx.psi_values(psi)
    return float(np.mean(v * v - 2.0 * v * ctx.dmu))


def constraint(ctx: CriterionContext, p) -> float:
    """Mean of pi * Delta nu minus alpha; ``p`` is a policy or its values."""
    pi = p if isinstance(p, np.ndarray) else _values(p, ctx.X)
    return float(np.mean(pi * ctx.dnu) - ctx.alpha)


def value(ctx_mu, p) -> float:
    """Mean of pi mu1 + (1 - pi) mu0 over the measure.

    ``ctx_mu`` is a triple (measure, mu1, mu0) of a measure and arm-specific
    evaluators (callables or values at the measure points).
    """
    measure, mu1, mu0 = ctx_mu
    X = _points(measure)
    pi = _values(p, X)
    return float(np.mean(pi * _values(mu1, X) + (1.0 - pi) * _values(mu0, X)))


def lagrangian_values(prob: LagrangianProblem, v: np.ndarray) -> float:
    ctx = prob.ctx
    r = np.mean(v * v - 2.0 * v * ctx.dmu)
    if prob.lam == 0.0:
        return float(r)
    s = np.mean(sigma(prob.beta, v) * ctx.dnu) - ctx.alpha
    return float(r + prob.lam * s)


def lagrangian(prob: LagrangianProblem, psi: ScoreLike) -> float:
    return lagrangian_values(prob, prob.ctx.psi_values(psi))


def gradient_values(prob: LagrangianProblem, v: np.ndarray, dmu=None, dnu=None) -> np.ndarray:
    dmu = prob.ctx.dmu if dmu is None else dmu
    dnu = prob.ctx.dnu if dnu is None else dnu
    g = 2.0 * (v - dmu)
    if prob.lam != 0.0:
        g = g + prob.lam * sigma_prime(prob.beta, v) * dnu
    return g


class Gradient:
    """Pointwise gradient 2 (psi - Dmu) + lam sigma'(psi) Dnu as a function of x.

    ``values`` holds the gradient at the problem's measure points.
    """

    def __init__(self, prob: LagrangianProblem, psi: ScoreLike):
        self.prob = prob
        self.psi = psi
        self.values = gradient_values(prob, prob.ctx.psi_values(psi))

    def __call__(self, X) -> np.ndarray:
        ctx = self.prob.ctx
        X = np.atleast_2d(X)
        if callable(ctx.delta_mu) and callable(ctx.delta_nu) and callable(self.psi):
            dnu = np.maximum(_values(ctx.delta_nu, X), 0.0)
            return gradient_values(self.prob, _values(self.psi, X), _values(ctx.delta_mu, X), dnu)
        if X.shape == ctx.X.shape and np.array_equal(X, ctx.X):
            return self.values
        raise ValueError("gradient built from precomputed arrays is only known at the measure points")


def lagrangian_gradient(prob: LagrangianProblem, psi: ScoreLike) -> Gradient:
    return Gradient(prob, psi)


# -- influence curves ---------------------------------------------------------


def _obs_arrays(o: Observation | Dataset):
    if isinstance(o, Observation):
        return np.atleast_2d(o.x), np.array([float(o.a)]), np.array([o.y]), np.array([float(o.xi)])
    return o.X, o.a, o.y, o.xi


def _squeeze(out, o):
    return float(out[0]) if isinstance(o, Observation) else out


def _pi_values(p, X):
    return _values(p, X)


def eic_value(nuis: NuisanceModel, p, v_hat: float, o):
    """Efficient influence curve of the policy value at (nuis, v_hat)."""
    X, a, y, _ = _obs_arrays(o)
    pi = _pi_values(p, X)
    e = nuis.propensity(a, X)
    check_positivity(e)
    plug = pi * nuis.mu(1, X) + (1.0 - pi) * nuis.mu(0, X)
    weight = (a * pi + (1.0 - a) * (1.0 - pi)) / e
    return _squeeze(plug - v_hat + weight * (y - nuis.mu(a, X)), o)


def eic_constraint(nuis: NuisanceModel, p, alpha: float, s_hat: float, o):
    X, a, _, xi = _obs_arrays(o)
    pi = _pi_values(p, X)
    e = nuis.propensity(a, X)
    check_positivity(e)
    out = pi * nuis.delta_nu(X) - alpha - s_hat + (2.0 * a - 1.0) / e * pi * (xi - nuis.nu(a, X))
    return _squeeze(out, o)


def score_D(nuis: NuisanceModel, psi: ScoreLike, lam: float, beta: float, o):
    """Bias term D of the Lagrangian's influence curve."""
    X, a, y, xi = _obs_arrays(o)
    v = _values(psi, X)
    e = nuis.propensity(a, X)
    check_positivity(e)
    pi = sigma(beta, v)
    out = (2.0 * a - 1.0) / e * (-2.0 * v * (y - nuis.mu(a, X)) + lam * pi * (xi - nuis.nu(a, X)))
    return _squeeze(out, o)


def smooth_policy_values(p: SmoothPolicy, X) -> np.ndarray:
    return p(X)
