"""Property-based checks with hypothesis."""
import math

import jax.numpy as jnp
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from mpp import Euclidean, Hyperbolic, PathRecord, Sphere
from mpp.development import CovarianceSpec
from mpp.dynamics import chi_matrix, chi_upper
from mpp.elliptic import elliptic_K, jacobi_sncndn
from mpp.estimation import decompose_scale, objective_split, optimal_scale
from mpp.io import read_path_csv, write_path_csv

# XLA on CPU flushes subnormals to zero
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_subnormal=False)
settings.register_profile("mpp", deadline=None, max_examples=40)
settings.load_profile("mpp")


@given(st.integers(2, 5), st.data())
def test_chi_storage_roundtrip(d, data):
    cu = np.array(data.draw(st.lists(finite, min_size=d * (d - 1) // 2, max_size=d * (d - 1) // 2)))
    A = np.asarray(chi_matrix(cu, d))
    assert np.array_equal(A, -A.T)
    assert np.array_equal(chi_upper(A, d), cu)


@given(st.floats(0.0, 0.999), st.floats(-20.0, 20.0))
def test_elliptic_identities(k, u):
    sn, cn, dn = (float(np.asarray(a)) for a in jacobi_sncndn(u, k))
    assert abs(sn * sn + cn * cn - 1) <= 1e-12
    assert abs(dn * dn + k * k * sn * sn - 1) <= 1e-12
    K = float(elliptic_K(k))
    sn_K = float(np.asarray(jacobi_sncndn(K, k)[0]))
    assert abs(sn_K - 1) <= 1e-10
    # odd extension
    assert abs(float(np.asarray(jacobi_sncndn(-u, k)[0])) + sn) <= 1e-12


@given(st.lists(st.floats(0.05, 20.0), min_size=3, max_size=3))
def test_decompose_scale_roundtrip(lam):
    lam = sorted(lam, reverse=True)
    E = Euclidean(3)
    cov = CovarianceSpec.create(E, np.zeros(3), np.eye(3), lam)
    C, unit = decompose_scale(cov)
    assert abs(np.sum(np.log(unit.lambdas))) <= 1e-12
    np.testing.assert_allclose(unit.scaled(C).lambdas, cov.lambdas, rtol=1e-12)


@given(st.lists(st.floats(1e-6, 1e3), min_size=1, max_size=20), st.integers(1, 4))
def test_optimal_scale_minimises(sq, d):
    C = optimal_scale(sq, d)
    f = objective_split(sq, d, C)
    for r in (0.9, 1.1):
        assert f <= objective_split(sq, d, C * r) + 1e-12 * abs(f)


@given(st.sampled_from([Sphere(1.0), Sphere(2.0), Sphere(0.5), Hyperbolic(1.0), Hyperbolic(0.5), Hyperbolic(2.0)]), st.floats(0.05, 1.2), st.floats(0, 2 * math.pi))
def test_exp_log_roundtrip(m, r, phi):
    x = m.default_point()
    w = m.tangent_basis(x) @ (r * np.array([math.cos(phi), math.sin(phi)]))
    y = m.exp(jnp.asarray(x), jnp.asarray(w))
    np.testing.assert_allclose(np.asarray(m.log(jnp.asarray(x), y)), w, atol=1e-9)
    assert abs(float(m.dist(jnp.asarray(x), y)) - r) <= 1e-9


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False), min_size=6, max_size=6))
def test_csv_roundtrip_exact(vals):
    import tempfile
    from pathlib import Path

    t = np.array([0.0, 1.0])
    pts = np.array(vals).reshape(2, 3)
    with tempfile.TemporaryDirectory() as tmp:
        p = Path(tmp) / "p.csv"
        write_path_csv(PathRecord(t=t, points=pts), p)
        back = read_path_csv(p)
    assert np.array_equal(back.points, pts) and np.array_equal(back.t, t)
