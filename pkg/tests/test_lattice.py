import math

import numpy as np
import pytest

from mpp import ConfigError, DomainError, Sphere, riemannian_distance
from mpp.dynamics import integrate_mpp
from mpp.s2lattice import (
    MIRRORS,
    build_s2_lattice,
    estimate_s2,
    euler_grid,
    lattice_argmin,
    lattice_distance,
    lattice_initial_guesses,
    lattice_seed,
    load_lattice,
    save_lattice,
)
from mpp.shooting import mpp_distance
from mpp.surfaces import mpp_constant_curvature

N = np.array([0.0, 0.0, 1.0])


@pytest.fixture(scope="module")
def lat():
    return build_s2_lattice(1.0, 4, 8, 12)


def _unit(v):
    return v / np.linalg.norm(v)


def test_validation():
    with pytest.raises(DomainError):
        build_s2_lattice(-1.0, 4, 8, 12)
    with pytest.raises(DomainError):
        build_s2_lattice(1.0, 0, 8, 12)


def test_grids(lat):
    np.testing.assert_allclose(lat.a, np.arange(5) * 0.25, rtol=1e-15)
    np.testing.assert_allclose(lat.T[:, -1], 2 * math.pi * np.exp(lat.a), rtol=1e-15)
    np.testing.assert_allclose(lat.k, np.sin(0.5 * lat.psi), rtol=1e-15)
    assert np.all(lat.T[:, 0] == 0) and np.all(lat.Z[:, :, 0] == N)


def test_unit_norm_and_group_residual(lat):
    assert np.max(np.abs(np.linalg.norm(lat.Z, axis=-1) - 1.0)) <= 1e-9
    assert lat.meta["group_residual"] <= 1e-12


def test_mirrors_exact(lat):
    M = lat.mirrored(2).reshape(lat.n_T + 1, 4, lat.n_psi + 1, 3)
    for s in range(4):
        assert np.array_equal(M[:, s], lat.Z[2].transpose(1, 0, 2) * MIRRORS[s])


def test_isotropic_row_is_great_circles(lat):
    for i in range(lat.n_psi + 1):
        for j in range(lat.n_T + 1):
            z = lat.Z[0, i, j]
            T = lat.T[0, j]
            assert z[2] == pytest.approx(math.cos(T), abs=1e-9)
            # isotropic rows start along e_1 and stay in the (e_1, e_3)-plane or (e_2, e_3)-plane per angle
            assert np.linalg.norm(z[:2]) == pytest.approx(abs(math.sin(T)), abs=1e-9)


def test_spot_check_against_generic_integrator(lat):
    m = Sphere(1.0)
    for (i, j, l) in [(3, 4, 2), (5, 7, 4), (1, 11, 1)]:
        cov = lat.cov_unit(l)
        T = lat.T[l, j]
        cf = mpp_constant_curvature(m, cov, lat.psi[i], 1, T, 2000)
        rk = integrate_mpp(m, cov, cf.v[0], cf.chi[0], T, 4000)
        assert np.linalg.norm(rk.endpoint - lat.Z[l, i, j]) <= 1e-5


def test_seeds_reach_their_lattice_points(lat):
    m = Sphere(1.0)
    n = lat.n_psi + 1
    for (l, i, j, mirror) in [(2, 3, 4, 0), (4, 5, 7, 3), (1, lat.n_psi, 6, 1), (3, 0, 9, 2)]:
        v0, chi0 = lattice_seed(lat, l, i, j, mirror, T=1.0)
        rk = integrate_mpp(m, lat.cov_unit(l), v0, chi0, 1.0, 4000)
        assert np.linalg.norm(rk.endpoint - lat.mirrored(l)[j, mirror * n + i]) <= 1e-6
    y = _unit(np.array([0.3, -0.5, 0.2]))
    seeds = lattice_initial_guesses(lat, 3, y, k=3)
    assert len(seeds) == 3 and all(v.shape == (2,) and c.shape == (1,) for v, c in seeds)


def test_io_roundtrip(lat, tmp_path):
    p = tmp_path / "lat.bin"
    save_lattice(lat, p)
    raw = p.read_bytes()
    assert raw[:8] == b"MPPS2LAT"
    assert len(raw) == 32 + 8 * (5 + 5 * 13 + 5 * 9 * 13 * 3)
    back = load_lattice(p)
    assert (back.n_a, back.n_psi, back.n_T, back.a_max) == (4, 8, 12, 1.0)
    for name in ("a", "T", "Z"):
        assert np.array_equal(getattr(back, name), getattr(lat, name))
    (tmp_path / "bad.bin").write_bytes(b"NOTALATTICE" + raw[11:])
    with pytest.raises(ConfigError):
        load_lattice(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(raw[:-8])
    with pytest.raises(ConfigError):
        load_lattice(tmp_path / "short.bin")


def test_north_pole_and_isotropic_row(lat, rng):
    for l in range(lat.n_a + 1):
        assert lattice_distance(lat, l, N) == 0.0
        assert lattice_argmin(lat, l, N)[1] == 0
    step = lat.T[0, 1]
    for _ in range(20):
        y = _unit(rng.normal(size=3))
        d = math.acos(np.clip(y[2], -1, 1))
        assert d - 1e-12 <= lattice_distance(lat, 0, y) <= d + step


def test_lattice_points_attain_their_time(lat):
    for l in range(lat.n_a + 1):
        M = lat.mirrored(l)
        vals = lattice_distance(lat, l, M.reshape(-1, 3)).reshape(M.shape[:2])
        # arccos near 1 amplifies unit-norm round-off to ~sqrt(eps)
        assert np.all(vals <= lat.T[l][:, None] + 1e-7)


def test_bound_and_refinement(lat):
    m = Sphere(1.0)
    fine = build_s2_lattice(1.0, 4, 24, 36)
    rng = np.random.default_rng(7)
    gaps, fine_gaps = [], []
    for _ in range(3):
        y = _unit(rng.normal(size=3) + [0, 0, 1.0])
        for l in (1, 3):
            d = mpp_distance(m, lat.cov_unit(l), y, n_steps=500)
            coarse, refined = lattice_distance(lat, l, y), lattice_distance(fine, l, y)
            assert coarse >= d - 1e-6 and refined >= d - 1e-6
            gaps.append(coarse - d)
            fine_gaps.append(refined - d)
    assert np.mean(fine_gaps) < np.mean(gaps)


def test_refinement_never_increases(lat):
    fine = build_s2_lattice(1.0, 4, 16, 24)  # contains every coarse lattice point
    Y = np.random.default_rng(3).normal(size=(50, 3))
    Y /= np.linalg.norm(Y, axis=1)[:, None]
    for l in range(lat.n_a + 1):
        assert np.all(lattice_distance(fine, l, Y) <= lattice_distance(lat, l, Y) + 1e-9)


def test_euler_grid():
    R = euler_grid(3, 4, 5)
    assert R.shape == (60, 3, 3)
    np.testing.assert_allclose(R @ R.transpose(0, 2, 1), np.broadcast_to(np.eye(3), R.shape), atol=1e-14)
    np.testing.assert_allclose(np.linalg.det(R), 1.0, atol=1e-14)
    np.testing.assert_allclose(R[0], np.eye(3), atol=0)


def test_estimate_s2_errors(lat):
    with pytest.raises(DomainError):
        estimate_s2(lat, np.zeros((0, 3)))
    with pytest.raises(DomainError):
        estimate_s2(lat, [[0.0, 0.0, 2.0]])


def test_clustered_samples_find_their_centre(lat):
    rng = np.random.default_rng(2)
    p = _unit(np.array([0.3, -0.5, 0.8]))
    Y = p + 1e-3 * rng.normal(size=(10, 3))
    Y /= np.linalg.norm(Y, axis=1)[:, None]
    res = estimate_s2(lat, Y, grid=(6, 6, 6))
    assert riemannian_distance(Sphere(1.0), res.mean, p) <= lat.T[0, 1]
    assert res.C > 0
    assert np.prod(res.cov_unit.lambdas**2) == pytest.approx(1.0, abs=1e-12)
    assert res.C == pytest.approx(np.mean(res.sq_dists) / 2, rel=1e-12)


def test_row_endpoints_estimate_is_optimal(lat):
    # endpoint fans are not samples of Sigma_l, so l itself need not minimise; check optimality instead
    for l in (0, 2):
        Y = lat.mirrored(l)[1:4].reshape(-1, 3)
        res = estimate_s2(lat, Y, grid=(6, 6, 6))
        truth = float(np.sum(lattice_distance(lat, l, Y) ** 2))
        assert res.meta["sum_sq"] <= truth + 1e-9
    res = estimate_s2(lat, lat.mirrored(0)[1:4].reshape(-1, 3), grid=(6, 6, 6))
    assert res.meta["row"] == 0
    assert riemannian_distance(Sphere(1.0), res.mean, N) <= 1e-6
