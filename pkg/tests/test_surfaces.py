import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mpp import Hyperbolic, Sphere, Torus, UnsupportedManifoldError, riemannian_geodesic, sup_distance
from mpp.development import CovarianceSpec
from mpp.dynamics import integrate_mpp
from mpp.elliptic import elliptic_K
from mpp.errors import DomainError
from mpp.surfaces import bending_statistic, constant_curvature, mpp_constant_curvature, pendulum_energy, pendulum_mpp

from conftest import aniso_cov


def _reduced_oracle(kappa, lambdas, theta_T, T, t):
    """theta' = kappa h, h' = -(l1^2 - l2^2)/2 sin 2theta, h(T) = 0, integrated backward (c = 1)."""
    l1, l2 = lambdas
    rhs = lambda s, y: [kappa * y[1], -0.5 * (l1**2 - l2**2) * math.sin(2 * y[0])]
    sol = solve_ivp(rhs, (T, 0.0), [theta_T, 0.0], method="LSODA", rtol=1e-12, atol=1e-12, dense_output=True)
    th = sol.sol(t)[0]
    return np.column_stack([l1 * np.cos(th), l2 * np.sin(th)])


def test_k_zero_is_geodesic():
    sol = pendulum_mpp(1.0, (2.0, 1.0), 0.0, 1.0)
    t = np.linspace(0, 1, 11)
    np.testing.assert_allclose(sol.v(t), np.tile([2.0, 0.0], (11, 1)), atol=1e-15)


def test_isotropic_any_angle_is_geodesic():
    sol = pendulum_mpp(-1.0, (1.5, 1.5), 1.2, 2.0)
    assert sol.alpha == 0.0
    v = sol.v(np.linspace(0, 2, 9))
    assert np.max(np.abs(v - v[0])) <= 1e-15


@pytest.mark.parametrize("kappa", [1.0, -1.0, 0.25])
@pytest.mark.parametrize("branch", [1, -1])
@pytest.mark.parametrize("psi0", [-2.0, 0.7, math.pi / 2])
def test_closed_form_matches_reduced_ode(kappa, branch, psi0):
    T = 0.5 if kappa == 1.0 else 1.7
    sol = pendulum_mpp(kappa, (2.0, 1.0), psi0, T, branch)
    t = np.linspace(0, T, 201)
    ref = _reduced_oracle(kappa, (2.0, 1.0), float(sol.theta(T)), T, t)
    assert np.max(np.abs(sol.v(t) - ref)) <= 1e-6
    v = sol.v(t)
    assert np.max(np.abs(v[:, 0] ** 2 / 4 + v[:, 1] ** 2 - 1)) <= 1e-10
    assert abs(sol.h(T)) <= 1e-8
    e = pendulum_energy(sol, t)
    assert np.max(np.abs(e - e[0])) <= 1e-7 * max(1.0, abs(e[0]))


def test_terminal_angle_convention():
    assert pendulum_mpp(1.0, (2.0, 1.0), 1.0, 0.5).theta(0.5) == pytest.approx(0.5, abs=1e-14)
    assert pendulum_mpp(-1.0, (2.0, 1.0), 1.0, 0.5).theta(0.5) == pytest.approx(math.pi / 2 - 0.5, abs=1e-14)


def test_period():
    sol = pendulum_mpp(1.0, (2.0, 1.0), 2.2, 1.0)
    P = sol.period
    assert P == pytest.approx(4 * elliptic_K(math.sin(1.1)) / math.sqrt(3.0), rel=1e-14)
    # flow the reduced system over one period from t = 0 with an independent integrator
    th0, hd0 = float(sol.theta(0.0)), float(sol.h(0.0))
    rhs = lambda s, y: [y[1], -1.5 * math.sin(2 * y[0])]
    end = solve_ivp(rhs, (0.0, P), [th0, hd0], method="LSODA", rtol=1e-12, atol=1e-12).y[:, -1]
    assert end[0] == pytest.approx(th0, abs=1e-6 * P)
    assert end[1] == pytest.approx(hd0, abs=1e-6 * P)


def test_separatrix_uses_ode():
    sol = pendulum_mpp(1.0, (2.0, 1.0), math.pi - 1e-5, 1.0)
    assert sol.method == "ode"
    v = sol.v(np.linspace(0, 1, 50))
    assert np.max(np.abs(v[:, 0] ** 2 / 4 + v[:, 1] ** 2 - 1)) <= 1e-10


def test_input_validation():
    with pytest.raises(DomainError):
        pendulum_mpp(0.0, (2.0, 1.0), 0.3, 1.0)
    with pytest.raises(DomainError):
        pendulum_mpp(1.0, (1.0, 2.0), 0.3, 1.0)
    with pytest.raises(DomainError):
        pendulum_mpp(1.0, (2.0, 1.0), 3.2, 1.0)
    with pytest.raises(DomainError):
        pendulum_mpp(1.0, (2.0, 1.0), 0.3, 1.0, branch=0)


def test_constant_curvature_only():
    assert constant_curvature(Sphere(2.0))[0] == pytest.approx(0.25)
    assert constant_curvature(Hyperbolic(1.0))[0] == -1.0
    with pytest.raises(UnsupportedManifoldError):
        constant_curvature(Torus(2.0, 1.0))
    with pytest.raises(UnsupportedManifoldError):
        mpp_constant_curvature(Torus(2.0, 1.0), CovarianceSpec.isotropic(Torus(2.0, 1.0)), 0.3)


@pytest.mark.parametrize("m", [Sphere(1.0), Hyperbolic(1.0)], ids=["sphere", "hyperbolic"])
def test_isotropic_group_path_is_geodesic(m):
    cov = CovarianceSpec.isotropic(m)
    rec = mpp_constant_curvature(m, cov, 0.9, 1, 1.5, 1500)
    g = riemannian_geodesic(m, cov.base, cov.vectors @ rec.v[0], 1.5, 1500)
    assert sup_distance(rec, g) <= 1e-9


@pytest.mark.parametrize("m", [Sphere(1.0), Sphere(2.0), Hyperbolic(1.0), Hyperbolic(0.5)], ids=["S1", "S2", "H1", "H05"])
def test_group_path_matches_generic_integrator(m, rng):
    cov = aniso_cov(m, (2.0, 1.0), angle=0.5)
    for _ in range(4):
        psi0 = rng.uniform(-3.0, 3.0)
        T = rng.uniform(0.2, 2.0)
        br = int(rng.choice([1, -1]))
        cf = mpp_constant_curvature(m, cov, psi0, br, T, 1000)
        assert cf.meta["group_residual"] <= 1e-9
        rk = integrate_mpp(m, cov, cf.v[0], cf.chi[0], T, 1000)
        assert sup_distance(cf, rk) <= 1e-5
        assert abs(cf.chi[-1, 0]) <= 1e-8


def test_fan_reflection_symmetry():
    # psi0 -> -psi0 flips v2 on the sphere: the path is mirrored in the f1 geodesic plane
    m = Sphere(1.0)
    cov = aniso_cov(m, (2.0, 1.0))
    f2 = cov.vectors[:, 1]
    mirror = np.eye(3) - 2 * np.outer(f2, f2)
    for psi0 in (0.5, 1.5, 2.5):
        a = mpp_constant_curvature(m, cov, psi0, 1, 0.5, 500)
        b = mpp_constant_curvature(m, cov, -psi0, 1, 0.5, 500)
        assert np.max(np.abs(a.points @ mirror.T - b.points)) <= 1e-12


def test_bending_statistic_signs():
    S, H = Sphere(1.0), Hyperbolic(1.0)
    cs, ch = aniso_cov(S), aniso_cov(H)
    ys = S.default_point() * math.cos(0.8) + math.sin(0.8) * (cs.vectors @ np.array([math.cos(0.9), math.sin(0.9)]))
    assert bending_statistic(S, cs, ys, n_steps=500) > 0
    w = ch.vectors @ np.array([math.cos(0.9), math.sin(0.9)])
    yh = math.cosh(0.8) * H.default_point() + math.sinh(0.8) * w
    assert bending_statistic(H, ch, yh, n_steps=500) < 0
    iso = CovarianceSpec.isotropic(S)
    assert abs(bending_statistic(S, iso, ys, n_steps=500)) <= 1e-6
