"""The main algorithm: nuisances on folds 1 and 3, policy learning over a
(lambda, beta) grid on fold 2, targeted assessment on fold 3 and selection."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import Dataset, FoldSplit, split_folds
from .criteria import CriterionContext, LagrangianProblem
from .evaluation import PolicyAssessment, assess_policy
from .frankwolfe import FWConfig, frank_wolfe, with_seed
from .nuisance import NuisanceModel, estimate_nuisances
from .policy import NEVER_TREAT, ScoreFunction, SmoothPolicy, ThresholdPolicy
from .synthdata import Scenario
from .targeting import FluctuationError, TargetingConfig, alternating_procedure, corrected_context

log = logging.getLogger(__name__)

MODES = ("naive", "pluc", "oracle")


@dataclass(frozen=True)
class GridConfig:
    lambdas: tuple[float, ...] = tuple(float(v) for v in range(1, 11))
    betas: tuple[float, ...] = (0.0, 0.05, 0.1, 0.25, 0.5)
    alpha: float = 0.1
    mode: str = "pluc"
    fw: FWConfig = field(default_factory=FWConfig)
    targeting: TargetingConfig = field(default_factory=TargetingConfig)
    exhaustive_grid: bool = False
    t_grid_size: int = 101
    oracle_grid_n: int = 20_000

    def __post_init__(self):
        lams = tuple(float(v) for v in self.lambdas)
        betas = tuple(float(v) for v in self.betas)
        if not lams or not betas:
            raise ValueError("lambda and beta grids must be nonempty")
        if any(v < 0 for v in lams) or any(b > a for a, b in zip(lams[1:], lams)):
            raise ValueError("lambdas must be nonnegative and ascending")
        if any(v < 0 for v in betas):
            raise ValueError("betas must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0.0 <= self.alpha <= 0.5:
            raise ValueError("alpha must lie in [0, 1/2]")
        if self.t_grid_size < 1 or self.oracle_grid_n < 1:
            raise ValueError("grid sizes must be positive")
        object.__setattr__(self, "lambdas", lams)
        object.__setattr__(self, "betas", betas)

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.t_grid_size)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CellResult:
    lam: float
    beta: float
    score: ScoreFunction | None = None
    assessment: PolicyAssessment | None = None
    iterations: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def policy(self) -> SmoothPolicy:
        return SmoothPolicy(self.beta, self.score)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam, "beta": self.beta, "iterations": self.iterations,
            "error": self.error,
            "score": None if self.score is None else self.score.to_dict(),
            "assessment": None if self.assessment is None else self.assessment.to_dict(),
        }


@dataclass(frozen=True)
class ThresholdChoice:
    t: float
    assessment: PolicyAssessment


@dataclass
class GridResult:
    config: GridConfig
    seed: int
    cells: list[CellResult]
    selected: CellResult | None
    threshold: ThresholdChoice | None = None

    @property
    def never_treat(self) -> bool:
        return self.selected is None

    def smooth_policy(self):
        return NEVER_TREAT if self.selected is None else self.selected.policy

    def threshold_policy(self):
        if self.selected is None or self.threshold is None:
            return None
        return ThresholdPolicy(self.selected.policy, self.threshold.t)

    def recommended_policy(self):
        """The threshold rule when one is feasible, else the smooth policy,
        else never-treat."""
        return self.threshold_policy() or self.smooth_policy()

    def to_dict(self) -> dict:
        out = {
            "config": self.config.to_dict(),
            "seed": self.seed,
            "cells": [c.to_dict() for c in self.cells],
        }
        if self.selected is None:
            out["selection"] = "never_treat"
        else:
            out["selection"] = "selected"
            out["lambda"] = self.selected.lam
            out["beta"] = self.selected.beta
            out["policy"] = self.selected.policy.to_dict()
            out["threshold"] = None if self.threshold is None else {
                "t": self.threshold.t, "assessment": self.threshold.assessment.to_dict()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def summary_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# pluc-schema: grid_summary/1\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda", "beta", "status", "s_star", "s_upper", "v_star", "v_lower", "selected"])
        for c in self.cells:
            pa = c.assessment
            vals = ["", "", "", ""] if pa is None else [repr(pa.s_star), repr(pa.s_upper),
                                                        repr(pa.v_star), repr(pa.v_lower)]
            w.writerow([repr(c.lam), repr(c.beta), "ok" if c.ok else "failed", *vals,
                        int(c is self.selected)])
        return buf.getvalue()


def cell_seed(seed: int, bi: int, li: int) -> int:
    return int(np.random.SeedSequence([int(seed) % 2**63, bi, li]).generate_state(1)[0])


def oracle_context(sc: Scenario, alpha: float, n: int, seed: int) -> CriterionContext:
    """Dense fresh-covariate stand-in for the true marginal, with analytic
    Delta mu_0 and Delta nu_0."""
    if sc.kind == "realistic":
        raise ValueError("oracle mode is not available for the realistic scenario")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) % 2**63, 104729]))
    X = sc.covariates(rng, n)
    return CriterionContext(X, sc.delta_mu(X), sc.delta_nu(X), alpha)


def learn_cell(lam: float, beta: float, mode: str, nuis1: NuisanceModel, fold2: Dataset,
               alpha: float, fw_cfg: FWConfig, targeting_cfg: TargetingConfig = TargetingConfig(),
               oracle_ctx: CriterionContext | None = None) -> tuple[ScoreFunction, int]:
    """Learn the score for one grid cell; returns (psi, correction steps)."""
    if mode == "naive":
        prob = LagrangianProblem(corrected_context(nuis1, fold2.X, alpha), lam, beta)
        return frank_wolfe(prob, fw_cfg)[0], 0
    if mode == "pluc":
        res = alternating_procedure(nuis1, fold2, lam, beta, alpha, fw_cfg, targeting_cfg)
        return res.psi, res.iterations
    if mode == "oracle":
        if oracle_ctx is None:
            raise ValueError("oracle mode needs an oracle context")
        return frank_wolfe(LagrangianProblem(oracle_ctx, lam, beta), fw_cfg)[0], 0
    raise ValueError(f"unknown mode {mode!r}")


def select_threshold(policy: SmoothPolicy, nuis3, fold3: Dataset, alpha: float,
                     t_grid: Sequence[float]) -> ThresholdChoice | None:
    """Feasible threshold with the largest value lower bound (smallest t on
    ties); None when no threshold rule is confidently feasible.  Thresholds
    whose targeted fit has no finite solution are skipped."""
    t_grid = [float(t) for t in t_grid]
    if not t_grid or any(not 0.0 <= t <= 1.0 for t in t_grid):
        raise ValueError("t_grid must be a nonempty subset of [0, 1]")
    best = None
    for t in t_grid:
        try:
            pa = assess_policy(ThresholdPolicy(policy, t), nuis3, fold3, alpha)
        except FluctuationError as exc:
            log.debug("threshold %.3f skipped: %s", t, exc)
            continue
        if pa.s_upper <= 0 and (best is None or pa.v_lower > best.assessment.v_lower):
            best = ThresholdChoice(t, pa)
    return best


def select_cell(cells: Sequence[CellResult]) -> CellResult | None:
    feasible = [c for c in cells if c.ok and c.assessment.s_upper <= 0]
    if not feasible:
        return None
    return min(feasible, key=lambda c: (-c.assessment.v_lower, c.lam, c.beta))


def run(data: Dataset, cfg: GridConfig, nuisance_spec="glm", seed: int = 0,
        scenario: Scenario | None = None, folds: FoldSplit | None = None) -> GridResult:
    """Full grid run.  ``nuisance_spec`` is "glm" or a Scenario (oracle
    nuisances); mode "oracle" additionally needs ``scenario``."""
    folds = split_folds(data, seed) if folds is None else folds
    nuis1 = estimate_nuisances(data, folds.n1, nuisance_spec)
    nuis3 = estimate_nuisances(data, folds.n3, nuisance_spec)
    fold2, fold3 = data.subset(folds.n2), data.subset(folds.n3)
    octx = None
    if cfg.mode == "oracle":
        if scenario is None:
            raise ValueError("mode 'oracle' requires a scenario")
        octx = oracle_context(scenario, cfg.alpha, cfg.oracle_grid_n, seed)
    cells: list[CellResult] = []
    for bi, beta in enumerate(cfg.betas):
        for li, lam in enumerate(cfg.lambdas):
            cell = CellResult(lam, beta)
            cells.append(cell)
            fw = with_seed(cfg.fw, cell_seed(seed, bi, li))
            try:
                cell.score, cell.iterations = learn_cell(lam, beta, cfg.mode, nuis1, fold2, cfg.alpha,
                                                         fw, cfg.targeting, octx)
                cell.assessment = assess_policy(cell.policy, nuis3, fold3, cfg.alpha)
            except (ArithmeticError, ValueError, RuntimeError) as exc:
                cell.error = f"{type(exc).__name__}: {exc}"
                log.warning("cell lambda=%g beta=%g failed: %s", lam, beta, cell.error)
                continue
            if cell.assessment.s_upper <= 0 and not cfg.exhaustive_grid:
                break
    if all(not c.ok for c in cells):
        raise RuntimeError("every grid cell failed; first error: " + cells[0].error)
    selected = select_cell(cells)
    threshold = None
    if selected is not None:
        threshold = select_threshold(selected.policy, nuis3, fold3, cfg.alpha, cfg.t_grid)
    return GridResult(cfg, int(seed), cells, selected, threshold)
