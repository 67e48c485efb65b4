import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import expit

from pluc.scaling import c_beta, sigma, sigma_prime, sigma_second

BETAS = [0.0, 0.05, 0.1, 0.25, 0.5, 1.0, 5.0]


def test_reference_value():
    # (log(2) - log(1 + e^-1)) / 1
    assert sigma(1.0, 0.0) == pytest.approx(np.log(2) - np.log1p(np.exp(-1)), abs=1e-15)
    assert sigma(1.0, 0.0) == pytest.approx(0.379885, abs=1e-6)


def test_c_beta_is_beta():
    for b in BETAS[1:]:
        assert c_beta(b) == pytest.approx(b, rel=1e-14)


@pytest.mark.parametrize("beta", BETAS)
def test_endpoints(beta):
    assert abs(sigma(beta, -1.0)) <= 1e-12
    assert abs(sigma(beta, 1.0) - 1.0) <= 1e-12


def test_linear_limit():
    u = np.linspace(-1, 1, 11)
    assert np.allclose(sigma(0.0, u), (1 + u) / 2)
    assert np.allclose(sigma(1e-6, u), (1 + u) / 2, atol=1e-6)


def test_domain_is_enforced():
    with pytest.raises(ValueError):
        sigma(1.0, 1.5)
    with pytest.raises(ValueError):
        sigma(-1.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(BETAS[1:]), st.floats(-0.999, 0.999))
def test_derivatives_match_finite_differences(beta, t):
    h = 1e-6
    fd = (sigma(beta, t + h) - sigma(beta, t - h)) / (2 * h)
    assert abs(fd - sigma_prime(beta, t)) < 1e-6
    assert sigma_prime(beta, t) == pytest.approx(expit(beta * t), abs=1e-12)
    fd2 = (sigma_prime(beta, t + h) - sigma_prime(beta, t - h)) / (2 * h)
    assert abs(fd2 - sigma_second(beta, t)) < 1e-6


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(BETAS), st.lists(st.floats(-1, 1), min_size=2, max_size=20))
def test_monotone(beta, us):
    u = np.sort(np.array(us))
    assert np.all(np.diff(sigma(beta, u)) >= -1e-15)


@pytest.mark.parametrize("beta", [0.0, 0.05, 0.5, 2.0, 5.0])
def test_second_order_remainder_with_peak_curvature(beta):
    # sigma'' peaks at t = 0 with value beta / 4, which bounds the remainder everywhere
    rng = np.random.default_rng(17)
    u, v = rng.uniform(-1, 1, 10_000), rng.uniform(-1, 1, 10_000)
    rem = np.abs(sigma(beta, v) - sigma(beta, u) - sigma_prime(beta, u) * (v - u))
    assert np.all(rem <= 0.5 * (beta / 4) * (v - u) ** 2 + 1e-15)
    assert sigma_second(beta, 0.0) == pytest.approx(beta / 4, abs=1e-15)
    assert sigma_second(beta, 1.0) <= sigma_second(beta, 0.0)
