"""Nuisance regressions mu(a, x), nu(a, x), e(x): a quasi-binomial GLM fitted
by damped Newton, oracle injection from scenarios, and clamping."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .core import Dataset

log = logging.getLogger(__name__)

CLAMP_LO, CLAMP_HI = 0.01, 0.99


def clamp01(p, lo: float = CLAMP_LO, hi: float = CLAMP_HI):
    arr = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot clamp non-finite probabilities")
    out = np.minimum(hi, np.maximum(lo, arr))
    return float(out) if np.ndim(p) == 0 else out


class PositivityError(ValueError):
    pass


def check_positivity(e) -> None:
    e = np.asarray(e)
    if np.any(e <= 0.0) or np.any(e >= 1.0):
        raise PositivityError("propensity must lie strictly inside (0, 1)")


ArmFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class NuisanceModel:
    """Evaluators for mu(a, x), nu(a, x) and e(x) = P(A = 1 | x).

    ``a`` may be a scalar or an array matching the rows of X.  All outputs are
    clamped to [lo, hi].
    """

    mu_fn: ArmFn
    nu_fn: ArmFn
    e_fn: Callable[[np.ndarray], np.ndarray]
    lo: float = CLAMP_LO
    hi: float = CLAMP_HI
    label: str = "custom"

    def _arm(self, fn, a, X):
        X = np.atleast_2d(X)
        a = np.broadcast_to(np.asarray(a, dtype=float), (X.shape[0],))
        return clamp01(np.asarray(fn(a, X), dtype=float).reshape(-1), self.lo, self.hi)

    def mu(self, a, X) -> np.ndarray:
        return self._arm(self.mu_fn, a, X)

    def nu(self, a, X) -> np.ndarray:
        return self._arm(self.nu_fn, a, X)

    def e(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return clamp01(np.asarray(self.e_fn(X), dtype=float).reshape(-1), self.lo, self.hi)

    def propensity(self, a, X) -> np.ndarray:
        """e(a, x): probability of the observed arm."""
        e1 = self.e(X)
        a = np.broadcast_to(np.asarray(a, dtype=float), e1.shape)
        return np.where(a == 1, e1, 1.0 - e1)

    def delta_mu(self, X) -> np.ndarray:
        return self.mu(1, X) - self.mu(0, X)

    def delta_nu(self, X) -> np.ndarray:
        return self.nu(1, X) - self.nu(0, X)


# -- logistic regression ------------------------------------------------------


@dataclass(frozen=True)
class GlmFit:
    coefficients: np.ndarray
    intercept: float
    converged: bool
    losses: tuple[float, ...] = ()

    def predict(self, F: np.ndarray) -> np.ndarray:
        return expit(self.intercept + np.atleast_2d(F) @ self.coefficients)

    def to_json(self) -> str:
        return json.dumps(
            {"intercept": self.intercept, "coefficients": [float(c) for c in self.coefficients],
             "converged": self.converged}
        )

    @classmethod
    def from_json(cls, text: str) -> "GlmFit":
        d = json.loads(text)
        return cls(np.asarray(d["coefficients"], dtype=float), float(d["intercept"]),
                   bool(d.get("converged", True)))


def _xent(eta, y):
    # mean of log(1 + e^eta) - y * eta, the binomial cross-entropy in eta
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta))


def fit_logistic(features, labels, max_iter: int = 100, tol: float = 1e-8,
                 ridge: float = 1e-8) -> GlmFit:
    """Quasi-binomial regression of labels in [0, 1] on features.

    Damped Newton with backtracking, so the training loss never increases.
    A tiny ridge keeps the Hessian invertible under separation; if the solve
    still fails the step falls back to the negative gradient.
    """
    F = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(labels, dtype=float).reshape(-1)
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input to fit_logistic")
    if F.shape[0] != y.size:
        raise ValueError("features and labels disagree in length")
    if np.any(y < 0) or np.any(y > 1):
        raise ValueError("labels must lie in [0, 1]")
    n, p = F.shape
    Z = np.hstack([np.ones((n, 1)), F])
    w = np.zeros(p + 1)
    loss = _xent(Z @ w, y) + 0.5 * ridge * w @ w
    losses = [loss]
    converged = False
    for _ in range(max_iter):
        eta = Z @ w
        mu = expit(eta)
        grad = Z.T @ (mu - y) / n + ridge * w
        if np.max(np.abs(grad)) < tol:
            converged = True
            break
        H = (Z * (mu * (1 - mu))[:, None]).T @ Z / n + ridge * np.eye(p + 1)
        try:
            step = np.linalg.solve(H, grad)
            if not np.all(np.isfinite(step)) or step @ grad <= 0:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = grad
        t = 1.0
        while True:
            w_new = w - t * step
            new_loss = _xent(Z @ w_new, y) + 0.5 * ridge * w_new @ w_new
            if new_loss <= loss or t < 1e-12:
                break
            t *= 0.5
        if new_loss > loss:
            break
        w, loss = w_new, new_loss
        losses.append(loss)
    return GlmFit(w[1:], float(w[0]), converged, tuple(losses))


def arm_features(a, X) -> np.ndarray:
    """Design (x, a, a * x) for the outcome / adverse-event regressions."""
    X = np.atleast_2d(X)
    a = np.broadcast_to(np.asarray(a, dtype=float), (X.shape[0],))[:, None]
    return np.hstack([X, a, a * X])


def glm_nuisances(data: Dataset, fold=None, label: str = "glm") -> NuisanceModel:
    sub = data if fold is None else data.subset(fold)
    fits = {}
    for name, F, target in (
        ("mu", arm_features(sub.a, sub.X), sub.y),
        ("nu", arm_features(sub.a, sub.X), sub.xi),
        ("e", sub.X, sub.a),
    ):
        fit = fit_logistic(F, target)
        if not fit.converged:
            log.debug("%s regression on %s did not reach tolerance", name, label)
        fits[name] = fit
    mu, nu, e = fits["mu"], fits["nu"], fits["e"]
    return NuisanceModel(
        lambda a, X: mu.predict(arm_features(a, X)),
        lambda a, X: nu.predict(arm_features(a, X)),
        lambda X: e.predict(X),
        label=label,
    )


def estimate_nuisances(data: Dataset, fold, spec) -> NuisanceModel:
    """``spec`` is "glm" or a synthdata Scenario (oracle mode)."""
    fold = np.asarray(fold, dtype=int)
    if fold.size == 0:
        raise ValueError("nuisance fold is empty")
    if spec == "glm":
        try:
            return glm_nuisances(data, fold, label=f"glm[{fold.size}]")
        except Exception as exc:  # re-raise with fold context
            raise RuntimeError(f"nuisance fit failed on fold of size {fold.size}: {exc}") from exc
    oracle = getattr(spec, "oracle_nuisances", None)
    if oracle is None:
        raise ValueError(f"unknown nuisance spec {spec!r}")
    return oracle()
