import math

import numpy as np
import pytest
from scipy.integrate import quad

from fermiflow.ambient import JacobiSolution, PinchedSynthetic, SpaceForm, jacobi_scalar, s_kappa
from fermiflow.errors import HypothesisViolated, InvalidInput
from fermiflow.estimates import (
    SteinerCoefficients,
    VolumeBoundInput,
    export_bound_csv,
    grad_bound_envelope,
    pinching_check,
    shell_volume,
    steiner_area,
    steiner_eta,
    traceless_eigenvalues,
    umbilic_drift_check,
    volume_lower_bound,
)
from fermiflow.flow import evolve_eta, evolve_many, flow_area
from fermiflow.surface import SurfacePoint, ellipsoid_2d, pinch_constant, random_surface, round_sphere

H = 1e-3


# --- Steiner ----------------------------------------------------------------------


def test_steiner_eta_examples():
    p = SurfacePoint(np.diag([2.0, 1.0]), np.array([[0.5, 0.1], [0.1, -0.3]]))
    assert np.array_equal(steiner_eta(1.0, p, 0.0), p.rho)
    assert np.allclose(steiner_eta(0.0, p, 0.7), p.rho + 0.7 * p.lam, atol=1e-15)
    q = SurfacePoint(np.eye(2), np.zeros((2, 2)))
    assert np.abs(steiner_eta(1.0, q, math.pi / 2)).max() <= 1e-15


def test_steiner_area_examples():
    circle = round_sphere(1.0, 1, 0.0, sampling=64)
    assert steiner_area(circle, 0.0, 1.0) == pytest.approx(4 * math.pi, rel=1e-12)
    sphere = round_sphere(1.0, 2, 0.0, sampling=400)
    ratio = steiner_area(sphere, 0.0, 2.0) / sphere.area
    assert ratio * 4 * math.pi == pytest.approx(36 * math.pi, rel=1e-12)
    s = random_surface(3, 5, seed=2)
    assert steiner_area(s, -1.0, 0.0) == pytest.approx(s.weights.sum(), rel=1e-14)


def test_steiner_coefficients():
    s = random_surface(2, 8, seed=3)
    co = SteinerCoefficients.of(s, 0.5)
    assert co.dim == 2 and co.integrals[0] == pytest.approx(float(np.sum(s.weights)))
    r = np.linspace(0, 1, 5)
    assert np.allclose(co.area(r), [steiner_area(s, 0.5, x) for x in r], rtol=1e-14)


def test_steiner_matches_flow():
    for kappa in (-1.0, 0.0, 1.0):
        s = random_surface(2, 10, seed=4, curvature_scale=0.4)
        r, area = flow_area(s, SpaceForm(kappa), 0.6, h=H)
        assert np.abs(area / steiner_area(s, kappa, r) - 1).max() <= 1e-9


def test_steiner_eta_matches_evolve_eta():
    s = random_surface(3, 4, seed=9, curvature_scale=0.5)
    for kappa in (-1.0, 1.0):
        for p in s.points:
            t = evolve_eta(p, SpaceForm(kappa), 0.6, h=H)
            ref = np.stack([steiner_eta(kappa, p, x) for x in t.r])
            assert np.abs(t.eta - ref).max() <= 1e-7


# --- pinching and umbilic drift -----------------------------------------------


def test_pinching_examples():
    r = np.linspace(0, 3, 61)
    sigma = np.diag([1.0, 2.0, 0.5])
    rep = pinching_check(SpaceForm(0.7), 0.7, 0.1, r, sigma)
    assert rep.holds and np.allclose(rep.margins, 0.1, atol=1e-14)
    rep = pinching_check(PinchedSynthetic(0.7, 0.1, seed=3), 0.7, 0.1, r, sigma)
    assert rep.holds
    assert rep.min_margin == pytest.approx(0.1 * (1 - max(abs(math.sin(x)) for x in r)), abs=1e-12)
    assert not pinching_check(SpaceForm(0.9), 0.7, 0.1, r, sigma).holds
    with pytest.raises(InvalidInput):
        pinching_check(SpaceForm(0.0), 0.0, 0.1, r, np.stack([sigma] * 3))


def test_umbilic_drift_sphere():
    s = round_sphere(0.5, 2, 1.0, sampling=4)
    rep = umbilic_drift_check(evolve_many(s, SpaceForm(1.0), 1.0, h=0.01), 0.0, 0.0)
    assert rep.holds and np.abs(rep.margins).max() <= 1e-12


def test_umbilic_drift_flat_ellipsoid():
    s = ellipsoid_2d(1.0, 1.5, 2.0, sampling=100)
    c = max(pinch_constant(p) for p in s.points)
    rep = umbilic_drift_check(evolve_many(s, SpaceForm(0.0), 3.0, h=0.01), c, 0.0)
    assert rep.holds and rep.checked_r[-1] == 3.0


def test_umbilic_drift_large_eps_and_violation():
    s = random_surface(2, 3, seed=5, curvature_scale=0.2)
    s = type(s)(s.rho, s.lam + 2 * s.rho, s.weights)
    trajs = evolve_many(s, PinchedSynthetic(0.5, 0.2), 1.0, h=0.01)
    c = max(pinch_constant(p) for p in s.points)
    assert umbilic_drift_check(trajs, c, 10.0).holds
    assert not umbilic_drift_check(trajs, 0.5 * c, 0.0).holds


def test_drift_stops_at_loss_of_convexity():
    p = SurfacePoint(np.eye(2), np.diag([-0.5, 1.0]))
    t = evolve_many([p], SpaceForm(0.0), 1.0, h=0.1)
    assert len(umbilic_drift_check(t, 10.0, 0.0).checked_r) == 0
    w = traceless_eigenvalues(p.rho, p.lam)
    assert np.allclose(w, [-0.75, 0.75])


# --- volume bound -----------------------------------------------------------------


def test_volume_flat_annulus():
    n, r1, r2 = 2, 1.0, 2.0
    area = 4 * math.pi * r1**2
    bound, zero = volume_lower_bound(VolumeBoundInput(n / r1, 0.0, 0.0, 0.0, n, r1, r2, area))
    exact = area * (r2 ** (n + 1) - r1 ** (n + 1)) / ((n + 1) * r1**n)
    assert bound == pytest.approx(exact, rel=1e-10)
    assert zero == math.inf


@pytest.mark.parametrize("kappa", [1.0, -1.0])
def test_volume_space_form_equality(kappa):
    n, r1, r2 = 2, 0.4, 1.2
    area = lambda r: 4 * math.pi * s_kappa(kappa, r) ** n
    tau = n * math.cos(r1) / math.sin(r1) if kappa > 0 else n / math.tanh(r1)
    bound, _ = volume_lower_bound(VolumeBoundInput(tau, 0.0, n * kappa, 0.0, n, r1, r2, area(r1)))
    exact = quad(area, r1, r2, epsabs=0, epsrel=1e-13)[0]
    assert bound == pytest.approx(exact, rel=1e-9)


def test_volume_truncates_at_u_zero():
    inp = VolumeBoundInput(-20.0, 0.0, 0.0, 0.0, 2, 1.0, 1.5, 1.0)
    bound, zero = volume_lower_bound(inp)
    assert zero == pytest.approx(0.1)
    assert bound >= 0
    ref = quad(lambda r: (1 - 10 * r) ** 2, 0, 0.1)[0]
    assert bound == pytest.approx(ref, rel=1e-10)


def test_volume_monotone_in_tau_and_r2():
    base = dict(c=0.1, d=0.5, eps=0.05, n=3, r1=0.5, area_r1=2.0)
    taus = np.linspace(-5, 5, 21)
    vals = [volume_lower_bound(VolumeBoundInput(tau_minus=t, r2=1.2, **base))[0] for t in taus]
    assert np.all(np.diff(vals) >= -1e-12)
    r2s = np.linspace(0.6, 1.5, 19)
    vals = [volume_lower_bound(VolumeBoundInput(tau_minus=1.0, r2=x, **base))[0] for x in r2s]
    assert np.all(np.diff(vals) >= -1e-12)


def test_volume_input_validation():
    with pytest.raises(InvalidInput):
        VolumeBoundInput(1.0, 0.0, 0.0, 0.0, 2, 2.0, 1.0, 1.0)
    with pytest.raises(InvalidInput):
        VolumeBoundInput(1.0, 0.0, 0.0, -0.1, 2, 1.0, 2.0, 1.0)
    with pytest.raises(HypothesisViolated):
        volume_lower_bound(VolumeBoundInput(1.0, 0.0, 2.0, 0.0, 2, 0.5, 1.6, 1.0))


def test_shell_volume_of_flat_spheres():
    r = np.linspace(1, 2, 101)
    assert shell_volume(r, 4 * math.pi * r**2) == pytest.approx(4 * math.pi * 7 / 3, rel=1e-12)


# --- gradient envelope --------------------------------------------------------------


def test_gradient_envelope_examples():
    f = jacobi_scalar(0.0, 1.0, 1.0, 2.0, 0.01)
    a1, a2, env = grad_bound_envelope(1.0, 1.0, 1.0, f, 7.0)
    assert a2 == 5.0 and a1 == 2.0
    assert env(0.0) == pytest.approx(7.0)
    assert env(1.0) == pytest.approx(2.0 * 2.0**-1 + 5.0)
    a1, a2, env = grad_bound_envelope(1.0, 1.0, 1.0, f, 5.0)
    assert a1 == 0.0 and np.allclose(env.on_grid()[1], 5.0)
    flat = JacobiSolution(f.r, np.ones_like(f.r), np.zeros_like(f.r))
    a1, a2, env = grad_bound_envelope(1.0, 0.5, 0.5, flat, 3.0)
    assert np.allclose(env(f.r), a1 + a2)


def test_gradient_envelope_regimes():
    up = jacobi_scalar(0.0, 1.0, 1.0, 1.0, 0.01)
    down = jacobi_scalar(1.0, 1.0, -0.5, 1.0, 0.01)
    assert grad_bound_envelope(1, 1, 0.5, up, 1).envelope.regime == "increasing"
    assert grad_bound_envelope(1, 1, -0.5, down, 1).envelope.regime == "decreasing"
    for eps in (0.0, 1.2, 1.5, -0.1):
        with pytest.raises(InvalidInput):
            grad_bound_envelope(1, 1, eps, up, 1)
    with pytest.raises(InvalidInput):
        grad_bound_envelope(1, 1, 0.5, down, 1)
    with pytest.raises(InvalidInput):
        grad_bound_envelope(1, 1, -0.5, jacobi_scalar(1.0, 1.0, -0.5, 3.0, 0.01), 1)
    sign_change = jacobi_scalar(1.0, 1.0, 0.5, 1.0, 0.01)
    with pytest.raises(InvalidInput):
        grad_bound_envelope(1, 1, 0.5, sign_change, 1)


def test_space_form_envelope_dominates_constant():
    # increasing regime: a1 <= 0 exactly when a2 >= grad0
    f = jacobi_scalar(-1.0, 1.0, 1.0, 2.0, 0.01)
    grad0 = 2.0
    a1, a2, env = grad_bound_envelope(2.0, 0.5, 0.8, f, grad0)
    assert a1 <= 0 and np.all(env.on_grid()[1] >= grad0 - 1e-12)
    # decreasing regime: f^(5 eps - 6) grows, so any a1 = grad0 - a2 works
    g = jacobi_scalar(0.0, 1.0, -0.3, 2.0, 0.01)
    for c1 in (0.1, 5.0):
        a1, a2, env = grad_bound_envelope(c1, 0.2, -0.4, g, grad0)
        assert np.all(env.on_grid()[1] >= grad0 - 1e-12)


def test_export_bound_csv(tmp_path):
    path = tmp_path / "b.csv"
    export_bound_csv(path, [0.0, 1.0], [1.0, 2.0], [1.5, 2.0])
    lines = path.read_text().splitlines()
    assert lines[1] == "r,bound,observed,slack"
    assert lines[2].split(",")[3] == "0.5"
