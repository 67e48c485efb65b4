"""Policy learning under a constraint on adverse events.

Scores live in the convex hull of logistic atoms and -1; Frank-Wolfe
minimises a Lagrangian over that hull, targeted estimation corrects the
plug-in criteria, and held-out targeted bounds pick a confidently feasible
policy.
"""
from .core import Dataset, EmpiricalMeasure, FoldSplit, Observation, split_folds
from .criteria import CriterionContext, LagrangianProblem, constraint, lagrangian, risk, value
from .evaluation import PolicyAssessment, assess_policy, normal_quantile
from .frankwolfe import FWConfig, SGDConfig, certify, duality_gap, frank_wolfe, solve_linear_subproblem
from .nuisance import NuisanceModel, clamp01, estimate_nuisances, fit_logistic
from .pipeline import GridConfig, GridResult, run, select_threshold
from .policy import Atom, ConstantPolicy, ScoreFunction, SmoothPolicy, ThresholdPolicy
from .scaling import sigma, sigma_prime, sigma_second
from .synthdata import Scenario, generate, oracle_metrics, preprocess_realistic
from .targeting import TargetingConfig, alternating_procedure, fit_fluctuation

__version__ = "0.1.0"
