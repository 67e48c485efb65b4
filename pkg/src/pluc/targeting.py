"""The alternating procedure: fluctuate mu and nu along the landmark scores,
re-minimise the corrected Lagrangian, repeat until consecutive minimisers agree.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, logit

from .core import Dataset
from .criteria import CriterionContext, LagrangianProblem, lagrangian_values, score_D
from .frankwolfe import FWConfig, frank_wolfe, with_seed
from .nuisance import NuisanceModel, check_positivity
from .policy import ScoreFunction
from .scaling import sigma

log = logging.getLogger(__name__)

STATIONARITY_TOL = 1e-8


class FluctuationError(RuntimeError):
    def __init__(self, msg: str, grad_norm: float):
        super().__init__(msg if "gradient norm" in msg else f"{msg} (final gradient norm {grad_norm:.3e})")
        self.grad_norm = grad_norm


@dataclass(frozen=True)
class LandmarkSet:
    landmarks: tuple[ScoreFunction, ...]
    lam: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "landmarks", tuple(self.landmarks))
        dims = {p.theta_dim for p in self.landmarks if p.theta_dim is not None}
        if len(dims) > 1:
            raise ValueError("landmarks disagree on covariate dimension")

    def __len__(self):
        return len(self.landmarks)

    def scores(self, X) -> np.ndarray:
        """n x k matrix of psi^l(x)."""
        return np.column_stack([p(X) for p in self.landmarks])

    def probabilities(self, X) -> np.ndarray:
        """n x k matrix of sigma_beta(psi^l(x))."""
        return sigma(self.beta, self.scores(X))


@dataclass(frozen=True)
class FluctuatedNuisance:
    """mu^k(eps), nu^k(eps) on top of a base model; e is left untouched."""

    base: NuisanceModel
    eps_mu: np.ndarray
    eps_nu: np.ndarray
    landmarks: LandmarkSet

    def _signed_weight(self, a, X):
        X = np.atleast_2d(X)
        a = np.broadcast_to(np.asarray(a, dtype=float), (X.shape[0],))
        e = self.base.propensity(a, X)
        check_positivity(e)
        return (2.0 * a - 1.0) / e

    def mu(self, a, X) -> np.ndarray:
        if not np.any(self.eps_mu):
            return self.base.mu(a, X)
        off = self._signed_weight(a, X) * (self.landmarks.scores(X) @ self.eps_mu)
        return expit(logit(self.base.mu(a, X)) + off)

    def nu(self, a, X) -> np.ndarray:
        if not np.any(self.eps_nu):
            return self.base.nu(a, X)
        off = self._signed_weight(a, X) * (self.landmarks.probabilities(X) @ self.eps_nu)
        return expit(logit(self.base.nu(a, X)) + off)

    def e(self, X):
        return self.base.e(X)

    def propensity(self, a, X):
        return self.base.propensity(a, X)

    def delta_mu(self, X):
        return self.mu(1, X) - self.mu(0, X)

    def delta_nu(self, X):
        return self.nu(1, X) - self.nu(0, X)


def fluctuated_mu(f: FluctuatedNuisance, a, x):
    out = f.mu(a, x)
    return float(out[0]) if np.ndim(x) == 1 else out


def fluctuated_nu(f: FluctuatedNuisance, a, x):
    out = f.nu(a, x)
    return float(out[0]) if np.ndim(x) == 1 else out


# -- fitting ------------------------------------------------------------------


def offset_loss(eps, offset, H, target) -> float:
    """Mean binomial cross-entropy of target against expit(offset + H eps)."""
    eta = offset + H @ eps
    return float(np.mean(np.logaddexp(0.0, eta) - target * eta))


def offset_gradient(eps, offset, H, target) -> np.ndarray:
    return H.T @ (expit(offset + H @ eps) - target) / H.shape[0]


def fit_offset_logistic(offset, H, target, eps0=None, max_iter: int = 200,
                        tol: float = STATIONARITY_TOL) -> np.ndarray:
    """Minimise the cross-entropy over eps by damped Newton.

    The Hessian may be singular (repeated or inert landmarks), so the Newton
    direction is the least-squares solution; a gradient step is used when it
    fails to be a descent direction.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n, k = H.shape
    eps = np.zeros(k) if eps0 is None else np.asarray(eps0, dtype=float).copy()
    loss = offset_loss(eps, offset, H, target)
    grad = offset_gradient(eps, offset, H, target)
    for _ in range(max_iter):
        if np.max(np.abs(grad)) <= tol:
            return eps
        mu = expit(offset + H @ eps)
        hess = (H * (mu * (1.0 - mu))[:, None]).T @ H / n
        step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)) or step @ grad <= 0:
            step = grad
        gnorm = np.max(np.abs(grad))
        t = 1.0
        while t > 1e-14:
            cand = eps - t * step
            new_loss = offset_loss(cand, offset, H, target)
            new_grad = offset_gradient(cand, offset, H, target)
            if new_loss < loss:
                break
            # near the optimum loss changes drop below rounding; accept a
            # step that is flat in loss and shrinks the gradient
            if new_loss <= loss + 1e-13 * max(1.0, abs(loss)) and np.max(np.abs(new_grad)) < gnorm:
                break
            t *= 0.5
        else:
            break
        eps, loss, grad = cand, new_loss, new_grad
    if np.max(np.abs(grad)) <= tol:
        return eps
    raise FluctuationError("fluctuation fit did not reach stationarity", float(np.max(np.abs(grad))))


def fit_fluctuation(base: NuisanceModel, landmarks: LandmarkSet, fold: Dataset,
                    eps_mu0=None, eps_nu0=None) -> FluctuatedNuisance:
    if fold.n == 0:
        raise ValueError("fluctuation fold is empty")
    if len(landmarks) == 0:
        raise ValueError("need at least one landmark")
    X, a = fold.X, fold.a
    e = base.propensity(a, X)
    check_positivity(e)
    w = ((2.0 * a - 1.0) / e)[:, None]
    H_mu = w * landmarks.scores(X)
    H_nu = w * landmarks.probabilities(X)
    eps_mu = fit_offset_logistic(logit(base.mu(a, X)), H_mu, fold.y, eps_mu0)
    eps_nu = fit_offset_logistic(logit(base.nu(a, X)), H_nu, fold.xi, eps_nu0)
    return FluctuatedNuisance(base, eps_mu, eps_nu, landmarks)


# -- alternating procedure ----------------------------------------------------


@dataclass(frozen=True)
class TargetingConfig:
    gamma_tol: float = 0.025
    K: int = 5

    def __post_init__(self):
        if self.gamma_tol < 0 or self.K < 0:
            raise ValueError("gamma_tol and K must be nonnegative")


@dataclass(frozen=True)
class TargetingStep:
    k: int
    eps_mu: tuple[float, ...]
    eps_nu: tuple[float, ...]
    stop_stat: float
    lagrangian: float
    d_means: tuple[float, ...]


@dataclass
class AlternatingResult:
    psi: ScoreFunction
    iterations: int
    nuisance: FluctuatedNuisance
    steps: list[TargetingStep] = field(default_factory=list)

    def diagnostics_csv(self) -> str:
        k_max = max((len(s.eps_mu) for s in self.steps), default=0)
        buf = io.StringIO()
        buf.write("# pluc-schema: targeting/1\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k"] + [f"eps_mu{i}" for i in range(k_max)] + [f"eps_nu{i}" for i in range(k_max)]
                   + ["stop_stat", "lagrangian"])
        for s in self.steps:
            pad = [""] * (k_max - len(s.eps_mu))
            w.writerow([s.k] + [repr(v) for v in s.eps_mu] + pad + [repr(v) for v in s.eps_nu] + pad
                       + [repr(s.stop_stat), repr(s.lagrangian)])
        return buf.getvalue()


def corrected_context(nuis, X: np.ndarray, alpha: float) -> CriterionContext:
    """Lagrangian context with Delta nu clipped at zero (monotonicity)."""
    return CriterionContext(X, nuis.delta_mu(X), np.maximum(nuis.delta_nu(X), 0.0), alpha)


def _step_seed(base: int, k: int) -> int:
    return int(np.random.SeedSequence([int(base) % 2**63, 7919, k]).generate_state(1)[0])


def alternating_procedure(init: NuisanceModel, fold2: Dataset, lam: float, beta: float,
                          alpha: float, fw_cfg: FWConfig = FWConfig(),
                          cfg: TargetingConfig = TargetingConfig()) -> AlternatingResult:
    """Alternate correction and minimisation steps on the fold ``fold2``.

    psi^0 minimises the initial Lagrangian; each correction fits
    k-dimensional fluctuations against psi^0..psi^{k-1}, and the next
    minimiser uses the fluctuated Delta mu^k, Delta nu^k.  Stops once the
    raw squared change over fold2 is at most ``gamma_tol`` or after K
    corrections.
    """
    X = fold2.X
    prob = LagrangianProblem(corrected_context(init, X, alpha), lam, beta)
    psi, _ = frank_wolfe(prob, fw_cfg)
    prev_vals = -np.ones(fold2.n)
    vals = psi(X)
    stop = float(np.sum((vals - prev_vals) ** 2))
    landmarks = [psi]
    nuis = FluctuatedNuisance(init, np.zeros(1), np.zeros(1), LandmarkSet((psi,), lam, beta))
    steps = [TargetingStep(0, (), (), stop, lagrangian_values(prob, vals), ())]
    k = 0
    eps_mu = eps_nu = np.zeros(0)
    while stop > cfg.gamma_tol and k < cfg.K:
        k += 1
        lm = LandmarkSet(tuple(landmarks), lam, beta)
        try:
            nuis = fit_fluctuation(init, lm, fold2, np.append(eps_mu, 0.0), np.append(eps_nu, 0.0))
        except FluctuationError as exc:
            raise FluctuationError(f"correction step {k}: {exc}", exc.grad_norm) from exc
        eps_mu, eps_nu = nuis.eps_mu, nuis.eps_nu
        d_means = tuple(float(np.mean(score_D(nuis, p, lam, beta, fold2))) for p in landmarks)
        prob = LagrangianProblem(corrected_context(nuis, X, alpha), lam, beta)
        psi, _ = frank_wolfe(prob, with_seed(fw_cfg, _step_seed(fw_cfg.sgd.seed, k)))
        new_vals = psi(X)
        stop = float(np.sum((new_vals - vals) ** 2))
        vals = new_vals
        landmarks.append(psi)
        steps.append(TargetingStep(k, tuple(map(float, eps_mu)), tuple(map(float, eps_nu)), stop,
                                   lagrangian_values(prob, vals), d_means))
        log.debug("correction %d: stop statistic %.4g", k, stop)
    return AlternatingResult(psi, k, nuis, steps)


def landmark_score_means(nuis: FluctuatedNuisance, fold: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-landmark empirical means of the mu and nu score equations."""
    X, a = fold.X, fold.a
    w = ((2.0 * a - 1.0) / nuis.propensity(a, X))[:, None]
    lm = nuis.landmarks
    s_mu = np.mean(w * lm.scores(X) * (fold.y - nuis.mu(a, X))[:, None], axis=0)
    s_nu = np.mean(w * lm.probabilities(X) * (fold.xi - nuis.nu(a, X))[:, None], axis=0)
    return s_mu, s_nu


__all__: Sequence[str] = [
    "LandmarkSet", "FluctuatedNuisance", "FluctuationError", "TargetingConfig", "TargetingStep",
    "AlternatingResult", "fluctuated_mu", "fluctuated_nu", "fit_fluctuation",
    "fit_offset_logistic", "offset_loss", "alternating_procedure", "landmark_score_means",
    "corrected_context",
]
