"""Scaling family sigma_beta mapping scores in [-1, 1] to probabilities.

sigma_beta(u) = c(beta)^-1 * log((1 + e^{beta u}) / (1 + e^{-beta})) with
c(beta) = log(1 + e^beta) - log(1 + e^-beta), which simplifies to beta.
Hence sigma_beta'(t) = expit(beta t) and sigma_beta''(t) = beta expit(beta t)
(1 - expit(beta t)).  beta = 0 is the linear map (1 + u) / 2.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

BETA_LINEAR_CUTOFF = 1e-8
_DOMAIN_SLACK = 1e-9


@dataclass(frozen=True)
class ScalingParams:
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")


def _check(beta, u):
    if not (np.isfinite(beta) and beta >= 0):
        raise ValueError(f"beta must be finite and >= 0, got {beta}")
    u = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(u)) or np.any(np.abs(u) > 1 + _DOMAIN_SLACK):
        raise ValueError("sigma is defined on [-1, 1] only")
    return np.clip(u, -1.0, 1.0)


def _out(v, like):
    return float(v) if np.ndim(like) == 0 else v


def c_beta(beta: float) -> float:
    """Normalisation log(1+e^b) - log(1+e^-b); equals beta."""
    return float(np.logaddexp(0.0, beta) - np.logaddexp(0.0, -beta))


def sigma(beta: float, u):
    u_ = _check(beta, u)
    if beta < BETA_LINEAR_CUTOFF:
        v = 0.5 * (1.0 + u_)
    else:
        v = (np.logaddexp(0.0, beta * u_) - np.logaddexp(0.0, -beta)) / beta
        v = np.clip(v, 0.0, 1.0)
    return _out(v, u)


def sigma_prime(beta: float, t):
    t_ = _check(beta, t)
    v = np.full_like(t_, 0.5) if beta < BETA_LINEAR_CUTOFF else expit(beta * t_)
    return _out(v, t)


def sigma_second(beta: float, t):
    t_ = _check(beta, t)
    if beta < BETA_LINEAR_CUTOFF:
        v = np.zeros_like(t_)
    else:
        p = expit(beta * t_)
        v = beta * p * (1.0 - p)
    return _out(v, t)
