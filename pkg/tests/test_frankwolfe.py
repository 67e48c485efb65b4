import numpy as np
import pytest

from pluc.core import EmpiricalMeasure
from pluc.criteria import CriterionContext, LagrangianProblem, lagrangian_values
from pluc.frankwolfe import (
    EnumerationOracle, FWConfig, SGDConfig, ToySpec, certify, curvature_constant, duality_gap,
    frank_wolfe, solve_linear_subproblem, toy_problem,
)
from pluc.policy import Atom, add_intercept, closed_form_weights
from pluc.scaling import sigma_second


def _problem(rng, n=120, lam=1.0, beta=0.25):
    X = rng.uniform(size=(n, 2))
    ctx = CriterionContext(X, 0.7 * (1 - 2 * X[:, 0]), 0.4 * X[:, 1], 0.1)
    return LagrangianProblem(ctx, lam, beta)


def test_subproblem_nonnegative_gradient_returns_minus_one(rng):
    X = rng.uniform(size=(50, 2))
    m = EmpiricalMeasure.of_covariates(X)
    assert solve_linear_subproblem(np.ones(50), m, SGDConfig()).is_minus_one
    assert solve_linear_subproblem(rng.uniform(0, 1, 50), m, SGDConfig()).is_minus_one
    assert solve_linear_subproblem(np.zeros(50), m, SGDConfig()).is_minus_one


def test_subproblem_negative_gradient_points_toward_treatment(rng):
    X = rng.uniform(size=(200, 1))
    atom = solve_linear_subproblem(lambda X: -X[:, 0] + 0.5, EmpiricalMeasure.of_covariates(X),
                                   SGDConfig(tolerance=1e-6, max_iterations=5000))
    assert not atom.is_minus_one
    # s should be increasing in x (treat where the gradient is negative)
    assert atom.theta[1] > 0


def test_subproblem_rejects_bad_gradients(rng):
    m = EmpiricalMeasure.of_covariates(rng.uniform(size=(5, 1)))
    with pytest.raises(ValueError):
        solve_linear_subproblem(np.ones(4), m, SGDConfig())
    with pytest.raises(ValueError):
        solve_linear_subproblem(np.array([1, 2, np.nan, 0, 0.0]), m, SGDConfig())


@pytest.mark.parametrize("J", [1, 2, 3, 10])
def test_iterate_matches_closed_form_weights(J):
    prob, atoms = toy_problem(ToySpec())
    Z = add_intercept(prob.ctx.X)
    oracle = EnumerationOracle(atoms, Z)
    chosen = []

    def recording(g, j):
        out = oracle(g, j)
        chosen.append(out[1])
        return out

    psi, _ = frank_wolfe(prob, FWConfig(iterations=J), subproblem=recording)
    w = closed_form_weights(J)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    direct = sum(wj * s for wj, s in zip(w, chosen))
    assert np.allclose(psi(prob.ctx.X), direct, atol=1e-12)


def test_single_step_is_the_atom(rng):
    prob = _problem(rng)
    psi, _ = frank_wolfe(prob, FWConfig(iterations=1))
    assert len(psi.atoms) == 1 and psi.weights[0] == 1.0


def test_frank_wolfe_is_deterministic(rng):
    prob = _problem(rng)
    a, _ = frank_wolfe(prob, FWConfig(iterations=8))
    b, _ = frank_wolfe(prob, FWConfig(iterations=8))
    assert a.to_json() == b.to_json()


def test_frank_wolfe_decreases_criterion_with_exact_oracle():
    prob, atoms = toy_problem(ToySpec())
    oracle = EnumerationOracle(atoms, add_intercept(prob.ctx.X))
    values = []
    for J in (1, 5, 20, 60):
        psi, _ = frank_wolfe(prob, FWConfig(iterations=J), subproblem=oracle)
        values.append(lagrangian_values(prob, psi(prob.ctx.X)))
    assert values[-1] < values[0]
    assert values[-1] <= min(values) + 1e-9


def test_duality_gap_nonnegative_and_shrinks():
    prob, atoms = toy_problem(ToySpec())
    oracle = EnumerationOracle(atoms, add_intercept(prob.ctx.X))
    gaps = []
    for J in (2, 40):
        psi, _ = frank_wolfe(prob, FWConfig(iterations=J), subproblem=oracle)
        gaps.append(duality_gap(prob, psi, atoms))
    assert all(g >= -1e-12 for g in gaps)
    assert gaps[1] < gaps[0]


def test_trace_rows_and_gap_consistency(rng):
    prob = _problem(rng)
    _, trace = frank_wolfe(prob, FWConfig(iterations=5, record_certificate=True))
    assert len(trace) == 6
    assert np.isnan(trace.records[-1].gamma)
    assert [r.gamma for r in trace.records[:3]] == [1.0, 2 / 3, 0.5]
    assert trace.to_csv().startswith("# pluc-schema: fw_trace/1\nj,gamma,criterion,lin_obj,gap\n")


def test_curvature_constant_formula():
    assert curvature_constant(0.0, 1.0) == 4.0
    assert curvature_constant(2.0, 0.5) == pytest.approx(4 * (1 + sigma_second(0.5, 1.0)))


def test_certificate_holds_on_toy_problem():
    rep = certify(ToySpec(iterations=25))
    assert rep.all_ok
    assert rep.delta == pytest.approx(0.0, abs=1e-12)
    assert rep.to_csv().splitlines()[0] == "# pluc-schema: fw_certificate/1"


def test_minus_one_atom_values():
    Z = np.ones((3, 2))
    assert np.array_equal(Atom.minus_one()(Z), -np.ones(3))
