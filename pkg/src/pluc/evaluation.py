"""Targeted assessment of a fixed policy on the held-out fold: scalar
fluctuations of mu and nu, influence-curve variances, one-sided 95% bounds."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from statistics import NormalDist
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit

from .core import Dataset
from .nuisance import check_positivity
from .targeting import FluctuationError

EPS_BRACKET = 10.0
STATIONARITY_TOL = 1e-8
ASSESSMENT_COLUMNS = ("lambda", "beta", "s_star", "s_upper", "v_star", "v_lower", "var_s", "var_v")


def normal_quantile(p: float) -> float:
    """Standard normal quantile (the stdlib's rational approximation is
    accurate to about 1e-15)."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie strictly between 0 and 1")
    return NormalDist().inv_cdf(p)


Q95 = normal_quantile(0.95)


@dataclass(frozen=True)
class PolicyAssessment:
    s_star: float
    v_star: float
    var_s: float
    var_v: float
    s_upper: float
    v_lower: float
    eps_mu_star: float
    eps_nu_star: float
    n3: int

    @property
    def feasible(self) -> bool:
        return self.s_upper <= 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def row(self, lam: float, beta: float) -> list:
        return [lam, beta, self.s_star, self.s_upper, self.v_star, self.v_lower, self.var_s, self.var_v]


def _score(eps, offset, H, target):
    return float(np.mean(H * (expit(offset + eps * H) - target)))


def fit_scalar_fluctuation(offset, H, target, bracket: float = EPS_BRACKET,
                           tol: float = STATIONARITY_TOL, max_bracket: float = 1e8) -> float:
    """Root of the (increasing) score of the scalar logistic fluctuation loss.

    Brent's method keeps the iterate inside a sign-changing bracket, so it
    cannot diverge; a Newton polish step follows if needed.  The bracket
    starts at [-10, 10] and widens when the root lies outside, which happens
    for policies that treat almost nobody.  Under separation the score has
    no finite root and only tends to zero; the bracket endpoint is then
    returned if the score there already meets ``tol``.
    """
    if abs(_score(0.0, offset, H, target)) <= tol:
        return 0.0
    b = bracket
    lo, hi = _score(-b, offset, H, target), _score(b, offset, H, target)
    while (lo > 0 or hi < 0) and b < max_bracket:
        b *= 4.0
        lo, hi = _score(-b, offset, H, target), _score(b, offset, H, target)
    if lo > 0 or hi < 0:
        # the root lies beyond the side where the score is closest to zero
        end, g = (-b, lo) if lo > 0 else (b, hi)
        if abs(g) <= tol:
            return float(end)
        raise FluctuationError(f"no fluctuation root in [-{b:g}, {b:g}]", abs(g))
    eps = brentq(_score, -b, b, args=(offset, H, target), xtol=1e-15, rtol=1e-15,
                 maxiter=500)
    for _ in range(5):
        g = _score(eps, offset, H, target)
        if abs(g) <= tol:
            return float(eps)
        mu = expit(offset + eps * H)
        slope = float(np.mean(H * H * mu * (1.0 - mu)))
        if slope <= 0:
            break
        eps -= g / slope
    g = _score(eps, offset, H, target)
    if abs(g) > tol:
        raise FluctuationError("scalar fluctuation did not reach stationarity", abs(g))
    return float(eps)


@dataclass(frozen=True)
class TargetedNuisance:
    """Arm-specific targeted means at the fold points."""

    mu1: np.ndarray
    mu0: np.ndarray
    nu1: np.ndarray
    nu0: np.ndarray
    mu_obs: np.ndarray
    nu_obs: np.ndarray
    eps_mu: float
    eps_nu: float


def target_nuisances(pi: np.ndarray, nuis, fold: Dataset) -> TargetedNuisance:
    X, a = fold.X, fold.a
    e1 = nuis.e(X)
    check_positivity(e1)
    mu1, mu0 = nuis.mu(1, X), nuis.mu(0, X)
    nu1, nu0 = nuis.nu(1, X), nuis.nu(0, X)
    # clever covariates per arm
    hm1, hm0 = pi / e1, (1.0 - pi) / (1.0 - e1)
    hn1, hn0 = pi / e1, -pi / (1.0 - e1)
    hm = np.where(a == 1, hm1, hm0)
    hn = np.where(a == 1, hn1, hn0)
    mu_a, nu_a = np.where(a == 1, mu1, mu0), np.where(a == 1, nu1, nu0)
    eps_mu = fit_scalar_fluctuation(logit(mu_a), hm, fold.y)
    eps_nu = fit_scalar_fluctuation(logit(nu_a), hn, fold.xi)

    def upd(base, h, eps):
        return base if eps == 0.0 else expit(logit(base) + eps * h)

    m1, m0 = upd(mu1, hm1, eps_mu), upd(mu0, hm0, eps_mu)
    n1, n0 = upd(nu1, hn1, eps_nu), upd(nu0, hn0, eps_nu)
    return TargetedNuisance(m1, m0, n1, n0, np.where(a == 1, m1, m0), np.where(a == 1, n1, n0),
                            eps_mu, eps_nu)


def assess_policy(policy, nuis3, fold3: Dataset, alpha: float, q: float = Q95) -> PolicyAssessment:
    """Targeted constraint and value estimates for ``policy`` on fold 3, with
    a one-sided upper bound on the constraint and lower bound on the value."""
    if fold3.n == 0:
        raise ValueError("assessment fold is empty")
    X, a, y, xi = fold3.X, fold3.a, fold3.y, fold3.xi
    pi = np.asarray(policy(X), dtype=float).reshape(-1)
    t = target_nuisances(pi, nuis3, fold3)
    e_obs = nuis3.propensity(a, X)
    s_star = float(np.mean(pi * (t.nu1 - t.nu0)) - alpha)
    v_star = float(np.mean(pi * t.mu1 + (1.0 - pi) * t.mu0))
    phi_s = (pi * (t.nu1 - t.nu0) - alpha - s_star
             + (2.0 * a - 1.0) / e_obs * pi * (xi - t.nu_obs))
    phi_v = (pi * t.mu1 + (1.0 - pi) * t.mu0 - v_star
             + (a * pi + (1.0 - a) * (1.0 - pi)) / e_obs * (y - t.mu_obs))
    var_s, var_v = float(np.var(phi_s)), float(np.var(phi_v))
    n3 = fold3.n
    return PolicyAssessment(
        s_star, v_star, var_s, var_v,
        s_star + q * math.sqrt(var_s / n3), v_star - q * math.sqrt(var_v / n3),
        t.eps_mu, t.eps_nu, n3,
    )


def targeted_residual_means(policy, nuis3, fold3: Dataset) -> tuple[float, float]:
    """Fold means of the two targeted residual terms (zero at the optimum)."""
    X, a = fold3.X, fold3.a
    pi = np.asarray(policy(X), dtype=float).reshape(-1)
    t = target_nuisances(pi, nuis3, fold3)
    e_obs = nuis3.propensity(a, X)
    r_nu = float(np.mean((2.0 * a - 1.0) / e_obs * pi * (fold3.xi - t.nu_obs)))
    r_mu = float(np.mean((a * pi + (1.0 - a) * (1.0 - pi)) / e_obs * (fold3.y - t.mu_obs)))
    return r_mu, r_nu


def assessments_csv(rows: Sequence[tuple[float, float, PolicyAssessment]], path=None) -> str:
    buf = io.StringIO()
    buf.write("# pluc-schema: assessment/1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ASSESSMENT_COLUMNS)
    for lam, beta, pa in rows:
        w.writerow([repr(float(v)) for v in pa.row(lam, beta)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
