import math

import numpy as np
import pytest

from mpp import Euclidean, Hyperbolic, IntegrationError, OrthoFrame, Sphere, Torus, riemannian_geodesic, sup_distance
from mpp.development import CovarianceSpec, EuclideanPath, develop
from mpp.dynamics import (
    MppState,
    anisotropic_length,
    chi_matrix,
    chi_upper,
    hamiltonian_flow,
    integrate_mpp,
    integrate_mpp_normalized,
    mpp_rhs,
    path_energy,
    sphere_lie_invariant,
)
from mpp.errors import DomainError

from conftest import SURFACES, aniso_cov


def _state(m, cov, v, chi):
    return MppState(cov.base, cov.vectors, np.asarray(v, float), chi_upper(chi, m.dim))


def test_chi_storage():
    A = np.asarray(chi_matrix(np.array([1.0, 2.0, 3.0]), 3))
    np.testing.assert_array_equal(A, -A.T)
    np.testing.assert_array_equal(chi_upper(A, 3), [1.0, 2.0, 3.0])
    assert chi_upper(0.5, 2).tolist() == [0.5]
    with pytest.raises(DomainError):
        chi_upper(np.ones((3, 3)), 3)


def test_rhs_isotropic_chi_constant():
    m = Sphere(1.0)
    cov = CovarianceSpec.isotropic(m, lam=1.3)
    ds = mpp_rhs(m, _state(m, cov, [0.4, -1.2], 0.7), cov)
    assert np.all(ds.chi == 0.0)


def test_rhs_flat_velocity_constant():
    m = Euclidean(3)
    cov = CovarianceSpec.create(m, np.zeros(3), np.eye(3), [3.0, 2.0, 1.0])
    ds = mpp_rhs(m, _state(m, cov, [1.0, 2.0, -1.0], [0.3, -0.2, 0.9]), cov)
    assert np.all(ds.v == 0.0)


@pytest.mark.parametrize("theta,chi12", [(0.3, 0.5), (2.0, -1.1), (-1.2, 0.25)])
def test_rhs_matches_surface_reduction(theta, chi12):
    # 2D reduction with c = 1 and kappa = 1:
    #   v1' = -l1^2 kappa chi12 v2,  v2' = l2^2 kappa chi12 v1,
    #   chi12' = (l2^2 - l1^2) / (l1^2 l2^2) v1 v2   (from h' = -(l1^2 - l2^2)/2 sin 2theta)
    m = Sphere(1.0)
    l1, l2 = 2.0, 1.0
    cov = aniso_cov(m, (l1, l2))
    v = np.array([l1 * math.cos(theta), l2 * math.sin(theta)])
    ds = mpp_rhs(m, _state(m, cov, v, chi12), cov)
    assert ds.v[0] == pytest.approx(-(l1**2) * chi12 * v[1], abs=1e-13)
    assert ds.v[1] == pytest.approx(l2**2 * chi12 * v[0], abs=1e-13)
    h = chi12 * l1 * l2
    hdot = -(l1**2 - l2**2) / 2 * math.sin(2 * theta)
    assert ds.chi[0] == pytest.approx(hdot / (l1 * l2), abs=1e-13)
    # and theta' = kappa h
    thetadot = (v[0] * ds.v[1] / l1 / l2 - v[1] * ds.v[0] / l1 / l2) / (v[0] ** 2 / l1**2 + v[1] ** 2 / l2**2) / (l1 * l2) * (l1 * l2)
    assert thetadot == pytest.approx(h, abs=1e-12)


@pytest.mark.parametrize("name", list(SURFACES))
def test_rhs_preserves_first_integral(name, rng):
    m = SURFACES[name]
    for _ in range(10):
        x = m.random_point(rng)
        cov = CovarianceSpec.create(m, x, m.tangent_basis(x), np.sort(rng.uniform(0.5, 2.0, 2))[::-1])
        v, chi = rng.normal(size=2), rng.normal()
        ds = mpp_rhs(m, _state(m, cov, v, chi), cov)
        assert abs(np.sum(2 * v * ds.v / cov.lambdas**2)) <= 1e-12


def test_rhs_general_frame_preserves_first_integral(rng):
    m = Sphere(1.0, 3)
    x = m.default_point()
    B = m.tangent_basis(x)
    cov = CovarianceSpec.create(m, x, B, [2.0, 1.5, 0.5])
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    S2 = Q.T @ np.diag(cov.lambdas**2) @ Q
    v, chi = rng.normal(size=3), rng.normal(size=3)
    ds = mpp_rhs(m, MppState(x, B @ Q, v, chi), cov, S2=S2)
    assert abs(2 * v @ np.linalg.solve(S2, ds.v)) <= 1e-12


def test_isotropic_great_circle():
    m = Sphere(1.0)
    cov = CovarianceSpec.isotropic(m)
    rec = integrate_mpp(m, cov, [1.0, 0.0], 0.0, math.pi, 4000)
    np.testing.assert_allclose(rec.endpoint, -cov.base, atol=1e-9)
    g = riemannian_geodesic(m, cov.base, cov.vectors[:, 0], math.pi, 4000)
    assert sup_distance(rec, g) <= 1e-7


@pytest.mark.parametrize("name", ["sphere", "hyperbolic", "torus"])
def test_isotropic_is_geodesic(name, rng):
    m = SURFACES[name]
    cov = CovarianceSpec.isotropic(m, lam=0.8)
    v0 = rng.normal(size=2)
    rec = integrate_mpp(m, cov, v0, 0.0, 1.5, 1500)
    assert np.max(np.abs(rec.chi)) <= 1e-15
    g = riemannian_geodesic(m, cov.base, cov.vectors @ v0, 1.5, 1500)
    assert sup_distance(rec, g) <= 1e-7


def test_flat_paths_are_straight(rng):
    m = Euclidean(3)
    cov = CovarianceSpec.create(m, np.array([1.0, 0, -1]), np.eye(3), [2.0, 1.0, 0.3])
    v0, chi0 = rng.normal(size=3), rng.normal(size=3)
    rec = integrate_mpp(m, cov, v0, chi0, 2.0, 200)
    line = cov.base + rec.t[:, None] * v0
    assert np.max(np.abs(rec.points - line)) <= 1e-10


@pytest.mark.parametrize("name", list(SURFACES))
def test_first_integral_drift(name, rng):
    m = SURFACES[name]
    cov = aniso_cov(m, (2.0, 1.0), angle=0.3)
    for _ in range(5):
        T = rng.uniform(0.5, 2.0)
        rec = integrate_mpp(m, cov, rng.normal(size=2), rng.normal(), T, 1000)
        assert rec.first_integral_drift() <= 1e-7
        assert rec.energy[-1] == pytest.approx(0.5 * rec.c[0] ** 2 * T, rel=1e-7)


def test_drift_monitor_raises():
    m = Sphere(1.0)
    cov = aniso_cov(m, (3.0, 0.5))
    with pytest.raises(IntegrationError) as info:
        integrate_mpp(m, cov, [6.0, 1.0], 1.0, 2.0, 12)
    assert info.value.suggested_steps == 48


def test_normalized_integration():
    m = Sphere(1.0)
    cov = aniso_cov(m)
    a = integrate_mpp(m, cov, [1.0, 1.0], 0.4, 1.0, 1000)
    b = integrate_mpp_normalized(m, cov, [1.0, 1.0], 0.4, 1.0, 1000)
    assert b.c[0] == pytest.approx(1.0)
    np.testing.assert_allclose(a.points, b.points, atol=1e-10)


@pytest.mark.parametrize("name", ["sphere", "hyperbolic", "torus"])
def test_hamiltonian_oracle(name, rng):
    m = SURFACES[name]
    cov = aniso_cov(m, (2.0, 1.0), angle=-0.2)
    for _ in range(3):
        v0, chi0 = rng.normal(size=2), rng.normal()
        a = integrate_mpp(m, cov, v0, chi0, 1.5, 1500)
        b = hamiltonian_flow(m, cov, v0, chi0, 1.5, 1500)
        assert sup_distance(a, b) <= 1e-7


def test_hamiltonian_isotropic_geodesic_and_conservation():
    m = Sphere(1.0)
    cov = CovarianceSpec.isotropic(m)
    b = hamiltonian_flow(m, cov, [0.6, 0.8], 0.0, 2.0, 200)
    g = riemannian_geodesic(m, cov.base, cov.vectors @ np.array([0.6, 0.8]), 2.0, 200)
    assert sup_distance(b, g) <= 1e-8
    cov = aniso_cov(Hyperbolic(1.0), (2.0, 1.0))
    h = hamiltonian_flow(Hyperbolic(1.0), cov, [1.0, -0.5], 0.8, 5.0, 500)
    assert np.max(np.abs(h.energy / h.energy[0] - 1)) <= 1e-7


def test_path_energy_and_length_on_mpp():
    m = Sphere(1.0)
    cov = aniso_cov(m)
    rec = integrate_mpp(m, cov, [0.8, -0.6], 0.3, 1.2, 1200)
    c = rec.c[0]
    assert path_energy(m, cov, rec) == pytest.approx(0.5 * c**2 * 1.2, rel=1e-9)
    L = anisotropic_length(m, cov, rec)
    assert L == pytest.approx(c * 1.2, rel=1e-6)
    # Cauchy-Schwarz with equality on constant speed
    assert L**2 == pytest.approx(2 * 1.2 * path_energy(m, cov, rec), rel=1e-6)


def test_path_energy_examples():
    m = Sphere(1.0)
    cov = CovarianceSpec.isotropic(m)
    g = riemannian_geodesic(m, cov.base, cov.vectors[:, 0], 1.0, 1000)
    assert path_energy(m, cov, g) == pytest.approx(0.5, abs=1e-9)
    # scaling Sigma -> C Sigma divides energy by C and length by sqrt(C)
    cov2 = aniso_cov(m, (2.0, 1.0))
    for C in (0.25, 4.0):
        assert path_energy(m, cov2.scaled(C), g) == pytest.approx(path_energy(m, cov2, g) / C, rel=1e-12)
        assert anisotropic_length(m, cov2.scaled(C), g) == pytest.approx(anisotropic_length(m, cov2, g) / math.sqrt(C), rel=1e-12)


def _driven(m, cov, n):
    # b(t) = (sin 2t, t^2 / 2) on [0, 1.5]
    b = EuclideanPath.from_function(lambda s: np.array([math.sin(2 * s), 0.5 * s * s]), 1.5, n)
    return develop(m, OrthoFrame(cov.base, cov.vectors), b)


def test_path_energy_arbitrary_path_quadrature():
    m = Hyperbolic(1.0)
    cov = aniso_cov(m, (2.0, 0.5), angle=0.4)
    l1, l2 = cov.lambdas
    # 1/2 int_0^1.5 (4 cos^2 2t / l1^2 + t^2 / l2^2) dt
    exact = 0.5 * ((1.5 + math.sin(6.0) / 4) * 2 / l1**2 + 1.5**3 / 3 / l2**2)
    e1 = path_energy(m, cov, _driven(m, cov, 1000))
    e2 = path_energy(m, cov, _driven(m, cov, 2000))
    # the discrete energy is second order in the step
    richardson = (4 * e2 - e1) / 3
    assert richardson == pytest.approx(exact, rel=1e-8)
    g = _driven(m, cov, 2000)
    L = anisotropic_length(m, cov, g)
    # reparametrisation invariance: the same points on a stretched clock
    g.t = g.t**2 / 1.5
    assert anisotropic_length(m, cov, g) == pytest.approx(L, rel=1e-12)
    assert L**2 <= 2 * 1.5 * path_energy(m, cov, _driven(m, cov, 2000))


def test_sphere_lie_invariant(rng):
    m = Sphere(1.0)
    cov = aniso_cov(m, (2.0, 1.0), angle=0.7)
    for _ in range(3):
        rec = integrate_mpp(m, cov, rng.normal(size=2), rng.normal(), 2.0, 2000)
        X = sphere_lie_invariant(rec, cov)
        assert np.max(np.abs(X - X[0])) <= 1e-6
