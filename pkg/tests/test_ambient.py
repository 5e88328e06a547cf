import math

import numpy as np
import pytest

from fermiflow import numerics
from fermiflow.ambient import (
    Custom,
    PinchedSynthetic,
    RadialProfile,
    SpaceForm,
    curvature_block,
    jacobi_batch,
    jacobi_scalar,
    s_kappa,
    s_kappa_prime,
)
from fermiflow.errors import InvalidInput, OutOfRange


def test_s_kappa_branches():
    assert s_kappa(1.0, math.pi / 2) == pytest.approx(1.0, abs=1e-15)
    assert s_kappa(0.0, 0.7) == 0.7
    assert s_kappa(-1.0, 1.0) == pytest.approx(math.sinh(1.0), rel=1e-15)
    assert s_kappa(4.0, 0.3) == pytest.approx(math.sin(0.6) / 2, rel=1e-14)
    assert s_kappa_prime(1.0, math.pi) == pytest.approx(-1.0, abs=1e-15)
    assert s_kappa_prime(0.0, 5.0) == 1.0
    assert s_kappa_prime(-4.0, 0.3) == pytest.approx(math.cosh(0.6), rel=1e-14)


def test_s_kappa_continuous_near_zero_curvature():
    for k in (1e-9, -1e-9, 1e-6, -1e-6):
        for r in (0.1, 1.0, 3.0):
            root = math.sqrt(abs(k))
            exact = math.sin(root * r) / root if k > 0 else math.sinh(root * r) / root
            assert s_kappa(k, r) == pytest.approx(exact, rel=1e-12)


def test_s_kappa_vectorized_and_identity():
    r = np.linspace(0, 2, 50)
    for k in (-2.0, 0.0, 1.5):
        s, sp = s_kappa(k, r), s_kappa_prime(k, r)
        # s'^2 + k s^2 = 1
        assert np.abs(sp**2 + k * s**2 - 1).max() <= 1e-13


def test_space_form_block():
    sigma = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert np.allclose(curvature_block(SpaceForm(0.5), 1.0, sigma), 0.5 * sigma)


def test_radial_profile():
    m = RadialProfile(2.0, 1.0)
    assert m.multiplier(1.0) == pytest.approx(0.5)
    assert np.allclose(m.block(1.0, np.eye(2)), 0.5 * np.eye(2))
    assert RadialProfile(1.0, 2.0, p=1.5).multiplier(1.0) == pytest.approx(3**-1.5)
    with pytest.raises(InvalidInput):
        RadialProfile(1.0, 0.0)


def test_pinched_block_within_eps(rng):
    model = PinchedSynthetic(0.7, 0.05, seed=4)
    for _ in range(20):
        a = rng.normal(size=(3, 3))
        sigma = a @ a.T + 0.5 * np.eye(3)
        r = rng.uniform(0, 3)
        w = numerics.gen_eigvals(model.block(r, sigma), sigma)
        assert np.all(np.abs(w - 0.7) <= 0.05 * abs(math.sin(r)) + 1e-12)
        # traceless against sigma
        assert np.trace(np.linalg.solve(sigma, model.perturbation(r, sigma))) == pytest.approx(0.0, abs=1e-12)
    w = numerics.gen_eigvals(model.block(math.pi / 2, np.eye(3)), np.eye(3))
    assert np.max(np.abs(w - 0.7)) == pytest.approx(0.05, rel=1e-12)


def test_pinched_one_dimensional_is_space_form():
    model = PinchedSynthetic(0.3, 0.1)
    assert np.allclose(model.block(1.0, np.array([[2.0]])), [[0.6]])


def test_custom_spline_and_range():
    r = np.linspace(0, 2, 21)
    model = Custom(tuple(r), tuple(1.0 + 0 * r))
    assert model.multiplier(1.234) == pytest.approx(1.0)
    lin = Custom(tuple(r), tuple(2 * r))
    assert lin.multiplier(0.55) == pytest.approx(1.1, rel=1e-12)
    with pytest.raises(OutOfRange):
        model.multiplier(2.5)
    with pytest.raises(InvalidInput):
        Custom((0.0, 0.0), (1.0, 1.0))


def test_jacobi_scalar_cos():
    sol = jacobi_scalar(1.0, 1.0, 0.0, 2.0, 1e-3)
    assert np.abs(sol.f - np.cos(sol.r)).max() <= 1e-12
    assert sol.first_zero == pytest.approx(math.pi / 2, abs=1e-10)


def test_jacobi_scalar_linear_and_no_zero():
    sol = jacobi_scalar(0.0, 1.0, -0.5, 3.0, 1e-3)
    assert sol.first_zero == pytest.approx(2.0, abs=1e-12)
    sol = jacobi_scalar(-1.0, 1.0, 0.0, 3.0, 1e-3)
    assert sol.first_zero is None
    assert np.abs(sol.f - np.cosh(sol.r)).max() <= 1e-10 * math.cosh(3.0)
    assert sol.positive_until(0.95) == math.inf


def test_jacobi_batch_profile_arrays():
    mus = np.array([1.0, 4.0, 0.0])
    sols = jacobi_batch(lambda r: mus, 1.0, np.array([0.0, 0.0, -1.0]), 2.0, 1e-3)
    assert sols[0].first_zero == pytest.approx(math.pi / 2, abs=1e-10)
    assert sols[1].first_zero == pytest.approx(math.pi / 4, abs=1e-10)
    assert sols[2].first_zero == pytest.approx(1.0, abs=1e-10)


def test_jacobi_comparison_monotone(rng):
    # larger curvature gives a smaller log-derivative and an earlier zero
    c = np.sort(rng.uniform(-1, 3, (100, 2)), axis=1)
    a = rng.uniform(0.2, 2, 100)
    b = rng.uniform(-1, 1, 100)
    hi = jacobi_batch(lambda r: c[:, 1] / (1 + a * r) ** 2, 1.0, b, 3.0, 1e-3)
    lo = jacobi_batch(lambda r: c[:, 0] / (1 + a * r) ** 2, 1.0, b, 3.0, 1e-3)
    for s_hi, s_lo in zip(hi, lo):
        both = (s_hi.f > 0) & (s_lo.f > 0)
        assert np.all(s_hi.log_derivative()[both] <= s_lo.log_derivative()[both] + 1e-8)
        z_hi = math.inf if s_hi.first_zero is None else s_hi.first_zero
        z_lo = math.inf if s_lo.first_zero is None else s_lo.first_zero
        assert z_hi <= z_lo + 1e-8
