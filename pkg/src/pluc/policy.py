"""Score functions in the convex hull of logistic atoms and -1, and the
policies built from them."""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import expit

from .scaling import sigma

WEIGHT_SUM_TOL = 1e-10


def add_intercept(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([np.ones((X.shape[0], 1)), X])


@dataclass(frozen=True)
class Atom:
    """x -> 2 expit(theta' x) - 1, or the constant -1 when ``theta`` is None."""

    theta: tuple[float, ...] | None = None

    @classmethod
    def logistic(cls, theta) -> "Atom":
        theta = tuple(float(t) for t in np.asarray(theta, dtype=float).reshape(-1))
        if not all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        return cls(theta)

    @classmethod
    def minus_one(cls) -> "Atom":
        return cls(None)

    @property
    def is_minus_one(self) -> bool:
        return self.theta is None

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        """Evaluate on feature rows ``Z`` (intercept already applied)."""
        Z = np.atleast_2d(Z)
        if self.is_minus_one:
            return -np.ones(Z.shape[0])
        if Z.shape[1] != len(self.theta):
            raise ValueError(f"dimension mismatch: x has {Z.shape[1]}, theta has {len(self.theta)}")
        return 2.0 * expit(Z @ np.asarray(self.theta)) - 1.0

    def to_json(self):
        return "minus_one" if self.is_minus_one else list(self.theta)


@dataclass(frozen=True)
class ScoreFunction:
    """psi = sum_k w_k atom_k with w on the simplex.

    With ``intercept`` set, a constant-1 column is prepended to x before the
    logistic atoms see it, so thetas have length d + 1.
    """

    atoms: tuple[Atom, ...]
    weights: tuple[float, ...]
    intercept: bool = False

    def __post_init__(self):
        atoms, weights = tuple(self.atoms), tuple(float(w) for w in self.weights)
        if len(atoms) != len(weights) or not atoms:
            raise ValueError("atoms and weights must be nonempty and of equal length")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("weights must be nonnegative and sum to one")
        dims = {len(a.theta) for a in atoms if not a.is_minus_one}
        if len(dims) > 1:
            raise ValueError("logistic atoms disagree on dimension")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def minus_one(cls, intercept: bool = False) -> "ScoreFunction":
        return cls((Atom.minus_one(),), (1.0,), intercept)

    @classmethod
    def single(cls, atom: Atom, intercept: bool = False) -> "ScoreFunction":
        return cls((atom,), (1.0,), intercept)

    @cached_property
    def _packed(self):
        thetas, wl, wm = [], [], 0.0
        for a, w in zip(self.atoms, self.weights):
            if a.is_minus_one:
                wm += w
            else:
                thetas.append(a.theta)
                wl.append(w)
        theta = np.array(thetas, dtype=float) if thetas else None
        return theta, np.array(wl), wm

    @property
    def theta_dim(self) -> int | None:
        theta = self._packed[0]
        return None if theta is None else theta.shape[1]

    def features(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return add_intercept(X) if self.intercept else X

    def __call__(self, X) -> np.ndarray:
        Z = self.features(X)
        theta, wl, wm = self._packed
        out = np.full(Z.shape[0], -wm)
        if theta is not None:
            if Z.shape[1] != theta.shape[1]:
                raise ValueError(
                    f"dimension mismatch: features have {Z.shape[1]} columns, thetas {theta.shape[1]}"
                )
            out += (2.0 * expit(Z @ theta.T) - 1.0) @ wl
        return np.clip(out, -1.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "atoms": [{"weight": w, "theta": a.to_json()} for a, w in zip(self.atoms, self.weights)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreFunction":
        atoms, weights = [], []
        for rec in d["atoms"]:
            th = rec["theta"]
            atoms.append(Atom.minus_one() if th == "minus_one" else Atom.logistic(th))
            weights.append(float(rec["weight"]))
        return cls(tuple(atoms), tuple(weights), bool(d.get("intercept", False)))

    @classmethod
    def from_json(cls, text: str) -> "ScoreFunction":
        return cls.from_dict(json.loads(text))


def eval_score(psi: ScoreFunction, x) -> np.ndarray | float:
    out = psi(x)
    return float(out[0]) if np.ndim(x) == 1 else out


def combine(psi: ScoreFunction, s: Atom, gamma: float) -> ScoreFunction:
    """(1 - gamma) psi + gamma s, merging bit-identical atoms and dropping
    atoms whose weight becomes exactly zero."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if gamma == 0.0:
        return psi
    if s.theta is not None and psi.theta_dim is not None and len(s.theta) != psi.theta_dim:
        raise ValueError("atom dimension does not match score function")
    atoms = list(psi.atoms)
    weights = [(1.0 - gamma) * w for w in psi.weights]
    if s in atoms:
        weights[atoms.index(s)] += gamma
    else:
        atoms.append(s)
        weights.append(gamma)
    kept = [(a, w) for a, w in zip(atoms, weights) if w > 0.0]
    total = sum(w for _, w in kept)
    return ScoreFunction(
        tuple(a for a, _ in kept), tuple(w / total for _, w in kept), psi.intercept
    )


@dataclass(frozen=True)
class SmoothPolicy:
    beta: float
    score: ScoreFunction

    def __call__(self, X) -> np.ndarray:
        return sigma(self.beta, self.score(X))

    def to_dict(self) -> dict:
        return {"kind": "smooth", "beta": self.beta, "score": self.score.to_dict()}


@dataclass(frozen=True)
class ThresholdPolicy:
    base: SmoothPolicy
    t: float

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")

    def __call__(self, X) -> np.ndarray:
        return (self.base(X) >= self.t).astype(float)

    def to_dict(self) -> dict:
        return {"kind": "threshold", "t": self.t, "base": self.base.to_dict()}


@dataclass(frozen=True)
class ConstantPolicy:
    """Treat with a fixed probability; ``ConstantPolicy(0.0)`` never treats."""

    p: float = 0.0

    def __call__(self, X) -> np.ndarray:
        return np.full(np.atleast_2d(X).shape[0], float(self.p))

    def to_dict(self) -> dict:
        return {"kind": "constant", "p": self.p}


NEVER_TREAT = ConstantPolicy(0.0)


def eval_policy(p: SmoothPolicy, x):
    out = p(x)
    return float(out[0]) if np.ndim(x) == 1 else out


def eval_threshold(p: ThresholdPolicy, x):
    out = p(x)
    return int(out[0]) if np.ndim(x) == 1 else out.astype(int)


def policy_from_dict(d: dict):
    kind = d.get("kind")
    if kind == "smooth":
        return SmoothPolicy(float(d["beta"]), ScoreFunction.from_dict(d["score"]))
    if kind == "threshold":
        return ThresholdPolicy(policy_from_dict(d["base"]), float(d["t"]))
    if kind == "constant":
        return ConstantPolicy(float(d["p"]))
    raise ValueError(f"unknown policy kind {kind!r}")


def closed_form_weights(J: int) -> np.ndarray:
    """Weights 2j / [J (J + 1)], j = 1..J, of atoms s_0..s_{J-1} after J
    Frank-Wolfe steps with step sizes 2 / (2 + j)."""
    j = np.arange(1, J + 1, dtype=float)
    return 2.0 * j / (J * (J + 1.0))


def policy_dim_check(policy, d: int) -> None:
    score = getattr(policy, "score", None) or getattr(getattr(policy, "base", None), "score", None)
    if score is None or score.theta_dim is None:
        return
    expected = d + (1 if score.intercept else 0)
    if score.theta_dim != expected:
        raise ValueError(
            f"policy expects {score.theta_dim - score.intercept} covariates, data has {d}"
        )


__all__: Sequence[str] = [
    "Atom", "ScoreFunction", "SmoothPolicy", "ThresholdPolicy", "ConstantPolicy",
    "NEVER_TREAT", "add_intercept", "eval_score", "eval_policy", "eval_threshold",
    "combine", "policy_from_dict", "closed_form_weights", "policy_dim_check",
]
