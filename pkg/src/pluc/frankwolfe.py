"""Frank-Wolfe minimisation of a Lagrangian criterion over the score hull.

Each iteration linearises the criterion at psi^j, picks an extreme point s_j
(a logistic atom fitted by mini-batch SGD, or the constant -1), and moves to
(1 - gamma_j) psi^j + gamma_j s_j with gamma_j = 2 / (2 + j).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numba import njit
from scipy.special import expit

from .criteria import LagrangianProblem, gradient_values, lagrangian_values
from .policy import Atom, ScoreFunction, add_intercept, combine
from .scaling import sigma_second

TIE_TOL = 1e-12


@dataclass(frozen=True)
class SGDConfig:
    tolerance: float = 1e-3
    learning_rate: float = 1e-2
    batch_fraction: float = 0.2
    max_iterations: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not (self.tolerance > 0 and self.learning_rate > 0 and self.max_iterations > 0):
            raise ValueError("SGD hyperparameters must be positive")
        if not 0 < self.batch_fraction <= 1:
            raise ValueError("batch_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class FWConfig:
    iterations: int = 40
    sgd: SGDConfig = field(default_factory=SGDConfig)
    record_certificate: bool = False
    warm_start: bool = False
    intercept: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("Frank-Wolfe needs at least one iteration")

    @classmethod
    def from_precision(cls, precision: float, **kw) -> "FWConfig":
        """0.025 -> 40 iterations."""
        return cls(iterations=int(math.ceil(1.0 / precision - 1e-9)), **kw)


@njit(cache=True, nogil=True)
def _shuffle(idx, state):  # pragma: no cover - jitted
    """In-place Fisher-Yates driven by xorshift64*; returns the new state."""
    for i in range(idx.size - 1, 0, -1):
        state ^= state >> np.uint64(12)
        state ^= state << np.uint64(25)
        state ^= state >> np.uint64(27)
        r = (state * np.uint64(2685821657736338717)) >> np.uint64(11)
        j = np.int64(r % np.uint64(i + 1))
        idx[i], idx[j] = idx[j], idx[i]
    return state


@njit(cache=True, nogil=True)
def _sgd_kernel(Z, g, theta0, lr, batch, max_iter, tol, seed):  # pragma: no cover - jitted
    n, d = Z.shape
    state = seed
    idx = np.arange(n)
    theta = theta0.copy()
    it = 0
    while it < max_iter:
        state = _shuffle(idx, state)
        Zp = Z[idx]
        gp = g[idx]
        start = 0
        while start < n and it < max_iter:
            stop = min(start + batch, n)
            Zb = Zp[start:stop]
            p = 1.0 / (1.0 + np.exp(-np.dot(Zb, theta)))
            w = gp[start:stop] * 2.0 * p * (1.0 - p)
            upd = (lr / (stop - start)) * np.dot(w, Zb)
            theta -= upd
            it += 1
            start = stop
            if np.max(np.abs(upd)) < tol:
                return theta, it
    return theta, it


def _rng_state(seed: int) -> np.uint64:
    state = np.random.SeedSequence(int(seed) % 2**63).generate_state(1, np.uint64)[0]
    return np.uint64(state | np.uint64(1))


def sgd_theta(Z: np.ndarray, g: np.ndarray, cfg: SGDConfig, seed: int,
              theta0: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """Mini-batch SGD on theta -> mean[g * (2 expit(Z theta) - 1)].

    The linear objective is invariant to positive rescaling of g, so g is
    normalised to unit mean magnitude first; this makes the learning rate and
    the step tolerance scale-free.
    """
    n, d = Z.shape
    scale = float(np.mean(np.abs(g)))
    theta0 = np.zeros(d) if theta0 is None else np.asarray(theta0, dtype=float)
    if scale == 0.0:
        return theta0, 0
    batch = max(1, int(math.ceil(cfg.batch_fraction * n)))
    theta, it = _sgd_kernel(np.ascontiguousarray(Z, dtype=np.float64), g / scale, theta0,
                            cfg.learning_rate, batch, cfg.max_iterations, cfg.tolerance,
                            _rng_state(seed))
    return theta, int(it)


def linear_objective(atom: Atom, Z: np.ndarray, g: np.ndarray) -> float:
    return float(np.mean(atom(Z) * g))


def solve_linear_subproblem(grad, measure, cfg: SGDConfig, intercept: bool = True,
                            seed: int | None = None, theta0=None) -> Atom:
    """Approximate argmin over atoms of mean[s(X) grad(X)].

    ``grad`` is a function of x or its values at the measure points.  Returns
    the better of the SGD logistic atom and -1 (ties go to -1).
    """
    X = measure.X if hasattr(measure, "X") else np.atleast_2d(measure)
    g = np.asarray(grad(X) if callable(grad) else grad, dtype=float).reshape(-1)
    if g.shape[0] != X.shape[0]:
        raise ValueError("gradient values do not match the measure")
    if not np.all(np.isfinite(g)):
        raise ValueError("non-finite gradient values")
    Z = add_intercept(X) if intercept else X
    return _best_atom(Z, g, cfg, cfg.seed if seed is None else seed, theta0)[0]


def _best_atom(Z, g, cfg, seed, theta0=None):
    minus = Atom.minus_one()
    obj_minus = -float(np.mean(g))
    theta, _ = sgd_theta(Z, g, cfg, seed, theta0)
    s_vals = 2.0 * expit(Z @ theta) - 1.0
    obj = float(np.mean(s_vals * g))
    if obj < obj_minus - TIE_TOL:
        return Atom.logistic(theta), s_vals, obj
    return minus, -np.ones(Z.shape[0]), obj_minus


class EnumerationOracle:
    """Exact linear-subproblem oracle over a finite atom set (the first atom
    wins ties, so list -1 first to mirror the SGD tie-break)."""

    def __init__(self, atoms: Sequence[Atom], Z: np.ndarray):
        self.atoms = list(atoms)
        self.S = np.vstack([a(Z) for a in self.atoms])

    def objectives(self, g: np.ndarray) -> np.ndarray:
        return self.S @ g / g.size

    def __call__(self, g: np.ndarray, j: int):
        objs = self.objectives(g)
        k = int(np.argmin(objs))
        return self.atoms[k], self.S[k], float(objs[k])


@dataclass(frozen=True)
class CertificateRecord:
    j: int
    gamma: float
    criterion: float
    lin_obj: float
    gap: float


@dataclass
class CertificateTrace:
    records: list[CertificateRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("# pluc-schema: fw_trace/1\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "gamma", "criterion", "lin_obj", "gap"])
        for r in self.records:
            w.writerow([r.j, repr(r.gamma), repr(r.criterion), repr(r.lin_obj), repr(r.gap)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


Subproblem = Callable[[np.ndarray, int], tuple]


def _iteration_seed(base: int, j: int) -> int:
    return int(np.random.SeedSequence([int(base) % 2**63, j]).generate_state(1)[0])


def frank_wolfe(prob: LagrangianProblem, cfg: FWConfig = FWConfig(),
                subproblem: Subproblem | None = None) -> tuple[ScoreFunction, CertificateTrace]:
    """Run ``cfg.iterations`` Frank-Wolfe steps from psi^0 = -1.

    ``subproblem(g, j) -> (atom, atom values, objective)`` overrides the SGD
    solver (used with an exact oracle when auditing the convergence bound).
    """
    ctx = prob.ctx
    Z = add_intercept(ctx.X) if cfg.intercept else ctx.X
    psi = ScoreFunction.minus_one(cfg.intercept)
    v = -np.ones(ctx.n)
    trace = CertificateTrace()
    theta_prev = None

    def solve(g, j):
        nonlocal theta_prev
        if subproblem is not None:
            return subproblem(g, j)
        theta0 = theta_prev if cfg.warm_start else None
        atom, s_vals, obj = _best_atom(Z, g, cfg.sgd, _iteration_seed(cfg.sgd.seed, j), theta0)
        if not atom.is_minus_one:
            theta_prev = np.asarray(atom.theta)
        return atom, s_vals, obj

    J = cfg.iterations
    for j in range(J + (1 if cfg.record_certificate else 0)):
        g = gradient_values(prob, v)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient at Frank-Wolfe iteration {j}")
        atom, s_vals, obj = solve(g, j)
        gamma = 2.0 / (2.0 + j)
        if cfg.record_certificate:
            trace.records.append(CertificateRecord(
                j, gamma if j < J else float("nan"), lagrangian_values(prob, v), obj,
                float(np.mean(g * (v - s_vals)))))
        if j == J:
            break
        psi = combine(psi, atom, gamma)
        v = (1.0 - gamma) * v + gamma * s_vals
    return psi, trace


def duality_gap(prob: LagrangianProblem, psi, candidate_atoms: Sequence[Atom],
                intercept: bool | None = None) -> float:
    """max over candidates s of mean[grad(psi) * (psi - s)]."""
    if not candidate_atoms:
        raise ValueError("need at least one candidate atom")
    ctx = prob.ctx
    if intercept is None:
        intercept = getattr(psi, "intercept", False)
    v = ctx.psi_values(psi)
    g = gradient_values(prob, v)
    Z = add_intercept(ctx.X) if intercept else ctx.X
    return float(max(np.mean(g * (v - a(Z))) for a in candidate_atoms))


def curvature_constant(lam: float, beta: float) -> float:
    """C = 4 [1 + (lam / 2) sigma_beta''(1)]."""
    return 4.0 * (1.0 + 0.5 * lam * sigma_second(beta, 1.0))


def with_seed(cfg: FWConfig, seed: int) -> FWConfig:
    return replace(cfg, sgd=replace(cfg.sgd, seed=int(seed)))


# -- convergence-certificate harness ------------------------------------------


@dataclass(frozen=True)
class ToySpec:
    """Tiny one-covariate problem whose hull minimiser can be brute-forced."""

    n: int = 50
    lam: float = 2.0
    beta: float = 0.5
    alpha: float = 0.1
    iterations: int = 40
    grid_size: int = 21
    grid_radius: float = 8.0
    seed: int = 0


@dataclass(frozen=True)
class CertificateRow:
    j: int
    gamma: float
    criterion: float
    lin_obj: float
    gap: float
    delta_j: float
    excess: float
    bound: float
    bound_ok: bool
    step_ok: bool


@dataclass(frozen=True)
class CertificateReport:
    spec: ToySpec
    C: float
    delta: float
    optimum: float
    rows: tuple[CertificateRow, ...]

    @property
    def all_ok(self) -> bool:
        return all(r.bound_ok and r.step_ok for r in self.rows)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("# pluc-schema: fw_certificate/1\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "gamma", "criterion", "lin_obj", "gap", "delta_j", "excess", "bound",
                    "bound_ok", "step_ok"])
        for r in self.rows:
            w.writerow([r.j, repr(r.gamma), repr(r.criterion), repr(r.lin_obj), repr(r.gap),
                        repr(r.delta_j), repr(r.excess), repr(r.bound),
                        str(r.bound_ok).lower(), str(r.step_ok).lower()])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def toy_problem(spec: ToySpec) -> tuple[LagrangianProblem, list[Atom]]:
    from .criteria import CriterionContext

    rng = np.random.default_rng(spec.seed)
    X = np.sort(rng.uniform(0.0, 1.0, size=(spec.n, 1)), axis=0)
    dmu = 0.8 * np.sin(2.0 * np.pi * X[:, 0])
    dnu = 0.5 * X[:, 0]
    ctx = CriterionContext(X, dmu, dnu, spec.alpha)
    grid = np.linspace(-spec.grid_radius, spec.grid_radius, spec.grid_size)
    atoms = [Atom.minus_one()] + [Atom.logistic((a, b)) for a in grid for b in grid]
    return LagrangianProblem(ctx, spec.lam, spec.beta), atoms


def hull_minimum(prob: LagrangianProblem, S: np.ndarray) -> float:
    """Minimum of the Lagrangian over the convex hull of the rows of S."""
    import cvxpy as cp

    ctx = prob.ctx
    m, n = S.shape
    w = cp.Variable(m, nonneg=True)
    psi = S.T @ w
    obj = cp.sum_squares(psi) / n - 2.0 * (ctx.dmu @ psi) / n
    if prob.lam > 0:
        if prob.beta < 1e-8:
            sig = 0.5 * (1.0 + psi)
        else:
            sig = (cp.logistic(prob.beta * psi) - float(np.logaddexp(0.0, -prob.beta))) / prob.beta
        obj = obj + prob.lam * ((ctx.dnu @ sig) / n - ctx.alpha)
    problem = cp.Problem(cp.Minimize(obj), [cp.sum(w) == 1])
    problem.solve(solver=cp.CLARABEL)
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"brute-force hull search failed: {problem.status}")
    v = np.clip(S.T @ np.clip(w.value, 0.0, None) / max(np.sum(np.clip(w.value, 0.0, None)), 1e-300),
                -1.0, 1.0)
    return lagrangian_values(prob, v)


def certify(spec: ToySpec = ToySpec(), slack: float = 1e-7) -> CertificateReport:
    """Run Frank-Wolfe with an exact oracle and audit the convergence bound
    and the per-step descent inequality against a brute-forced optimum.

    ``slack`` absorbs the conic solver's accuracy in the optimum.
    """
    prob, atoms = toy_problem(spec)
    Z = add_intercept(prob.ctx.X)
    oracle = EnumerationOracle(atoms, Z)
    cfg = FWConfig(iterations=spec.iterations, record_certificate=True, intercept=True)
    _, trace = frank_wolfe(prob, cfg, subproblem=oracle)
    C = curvature_constant(prob.lam, prob.beta)
    recs = trace.records
    # with an exact oracle the chosen objective is the minimum, so delta_j = 0
    # up to rounding; it is measured rather than assumed
    v = -np.ones(prob.ctx.n)
    deltas, exact_gaps = [], []
    for r in recs:
        g = gradient_values(prob, v)
        objs = oracle.objectives(g)
        deltas.append(max(0.0, (r.lin_obj - float(objs.min())) * (r.j + 2) / C))
        exact_gaps.append(float(np.mean(g * v)) - float(objs.min()))
        k = int(np.argmin(objs))
        if r.j < spec.iterations:
            v = (1 - r.gamma) * v + r.gamma * oracle.S[k]
    delta = max(deltas)
    optimum = min(hull_minimum(prob, oracle.S), min(r.criterion for r in recs))
    rows = []
    for i, r in enumerate(recs):
        excess = r.criterion - optimum
        if r.j == 0:
            bound, bound_ok = float("inf"), True
        else:
            bound = 4.0 * C * (1.0 + delta / 2.0) / (r.j + 2)
            bound_ok = excess <= bound + slack
        if i + 1 < len(recs):
            rhs = -r.gamma * exact_gaps[i] + C * (1.0 + delta / 2.0) * r.gamma**2
            step_ok = recs[i + 1].criterion - r.criterion <= rhs + 1e-12
        else:
            step_ok = True
        rows.append(CertificateRow(r.j, r.gamma, r.criterion, r.lin_obj, r.gap, deltas[i], excess,
                                   bound, bool(bound_ok), bool(step_ok)))
    return CertificateReport(spec, C, delta, optimum, tuple(rows))
