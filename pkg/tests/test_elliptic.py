import math

import numpy as np
import pytest
from scipy.integrate import quad

from mpp import DomainError
from mpp.elliptic import elliptic_F, elliptic_K, jacobi_cn, jacobi_dn, jacobi_sn, jacobi_sncndn


def _F_quad(y, k):
    return quad(lambda s: 1.0 / math.sqrt(1.0 - (k * math.sin(s)) ** 2), 0.0, y, epsabs=1e-15, epsrel=1e-13, limit=200)[0]


def test_degenerate_modulus():
    assert elliptic_K(0.0) == math.pi / 2
    u = np.linspace(-5, 5, 41)
    np.testing.assert_allclose(jacobi_sn(u, 0.0), np.sin(u), atol=1e-15)
    np.testing.assert_allclose(jacobi_cn(u, 0.0), np.cos(u), atol=1e-15)
    np.testing.assert_allclose(jacobi_dn(u, 0.0), 1.0)


@pytest.mark.parametrize("k", [0.0, 0.1, 0.3, 0.5, 0.7, 0.95, 0.999])
def test_quarter_period(k):
    K = elliptic_K(k)
    assert K >= math.pi / 2
    assert jacobi_sn(K, k) == pytest.approx(1.0, abs=1e-12)
    assert jacobi_cn(K, k) == pytest.approx(0.0, abs=1e-7)
    assert elliptic_F(math.pi / 2, k) == pytest.approx(K, abs=1e-13)


@pytest.mark.parametrize("k", [0.0, 0.3, 0.5, 0.7, 0.95])
def test_K_against_quadrature(k):
    assert elliptic_K(k) == pytest.approx(_F_quad(math.pi / 2, k), abs=1e-12)


@pytest.mark.parametrize("k", [0.0, 0.3, 0.7, 0.95])
def test_identities(k):
    u = np.linspace(0.0, 4.0 * elliptic_K(k), 801)
    sn, cn, dn = jacobi_sncndn(u, k)
    assert np.max(np.abs(dn**2 + k**2 * sn**2 - 1.0)) <= 1e-12
    assert np.max(np.abs(sn**2 + cn**2 - 1.0)) <= 1e-12


@pytest.mark.parametrize("k", [0.2, 0.6, 0.9])
def test_F_inverts_sn(k):
    y = np.linspace(-1.4, 1.4, 15)
    for yy in y:
        assert elliptic_F(yy, k) == pytest.approx(_F_quad(yy, k) if yy >= 0 else -_F_quad(-yy, k), abs=1e-12)
        assert math.asin(jacobi_sn(elliptic_F(yy, k), k)) == pytest.approx(yy, abs=1e-12)


def test_odd_extension():
    u = np.linspace(0, 3, 7)
    np.testing.assert_allclose(jacobi_sn(-u, 0.6), -jacobi_sn(u, 0.6), atol=1e-15)


def test_separatrix_rejected():
    with pytest.raises(DomainError):
        elliptic_K(1.0)
    with pytest.raises(DomainError):
        jacobi_sn(0.3, 1.0 - 1e-13)
    with pytest.raises(DomainError):
        elliptic_K(1.5)
