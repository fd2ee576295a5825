"""Elliptic integral of the first kind and the Jacobi functions sn, cn, dn.

The modulus ``k`` may be signed; every function depends on k only through
m = k^2.  Values of |k| within 1e-12 of 1 are rejected: the quarter period
diverges there.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

__all__ = ["elliptic_K", "elliptic_F", "jacobi_sn", "jacobi_cn", "jacobi_dn", "jacobi_sncndn", "carlson_rf"]

SEPARATRIX_TOL = 1e-12
_MAX_ITER = 64


def _check_modulus(k):
    k = float(k)
    if not math.isfinite(k) or abs(k) > 1.0 - SEPARATRIX_TOL:
        raise DomainError(f"modulus |k| = {abs(k)!r} too close to 1 (separatrix, infinite period)")
    return k


def _agm_sequence(k):
    """Arithmetic-geometric mean ladder starting from (1, k', k)."""
    a, b, c = 1.0, math.sqrt((1.0 - k) * (1.0 + k)), abs(k)
    A, C = [a], [c]
    for _ in range(_MAX_ITER):
        if abs(c) <= 1e-17 * a:
            break
        a, b, c = 0.5 * (a + b), math.sqrt(a * b), 0.5 * (a - b)
        A.append(a)
        C.append(c)
    return A, C


def elliptic_K(k):
    """Complete integral K(k) = F(pi/2, k) from the AGM: K = pi / (2 agm(1, k'))."""
    k = _check_modulus(k)
    A, _ = _agm_sequence(k)
    return math.pi / (2.0 * A[-1])


def carlson_rf(x, y, z):
    """Carlson's symmetric integral R_F by the duplication theorem (vectorised)."""
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    x, y, z = x.copy(), y.copy(), z.copy()
    for _ in range(_MAX_ITER):
        mu = (x + y + z) / 3.0
        dev = np.max(np.abs(np.stack([x, y, z]) - mu) / mu, initial=0.0)
        if dev < 1e-4:
            break
        sx, sy, sz = np.sqrt(x), np.sqrt(y), np.sqrt(z)
        lam = sx * sy + sy * sz + sz * sx
        x, y, z = 0.25 * (x + lam), 0.25 * (y + lam), 0.25 * (z + lam)
    mu = (x + y + z) / 3.0
    X, Y, Z = 1.0 - x / mu, 1.0 - y / mu, 1.0 - z / mu
    E2 = X * Y - Z * Z
    E3 = X * Y * Z
    return (1.0 - E2 / 10.0 + E3 / 14.0 + E2 * E2 / 24.0 - 3.0 * E2 * E3 / 44.0) / np.sqrt(mu)


def elliptic_F(y, k):
    """Incomplete integral F(y, k) = int_0^y ds / sqrt(1 - k^2 sin^2 s).

    Defined for all real ``y`` through F(y + n pi) = F(y) + 2 n K.
    """
    k = _check_modulus(k)
    y = np.asarray(y, dtype=float)
    n = np.round(y / math.pi)
    r = y - n * math.pi
    s, c = np.sin(r), np.cos(r)
    val = s * carlson_rf(c * c, 1.0 - k * k * s * s, 1.0)
    out = val + 2.0 * n * elliptic_K(k)
    return float(out) if out.ndim == 0 else out


def jacobi_sncndn(u, k):
    """(sn, cn, dn)(u, k) by the descending Landen / AGM scheme."""
    k = _check_modulus(k)
    u = np.asarray(u, dtype=float)
    if k == 0.0:
        out = (np.sin(u), np.cos(u), np.ones_like(u))
    else:
        A, C = _agm_sequence(k)
        N = len(A) - 1
        phi = (2.0**N) * A[N] * u
        for n in range(N, 0, -1):
            phi = 0.5 * (phi + np.arcsin(np.clip(C[n] / A[n] * np.sin(phi), -1.0, 1.0)))
        sn, cn = np.sin(phi), np.cos(phi)
        out = (sn, cn, np.sqrt(1.0 - k * k * sn * sn))
    if u.ndim == 0:
        return tuple(float(v) for v in out)
    return out


def jacobi_sn(u, k):
    return jacobi_sncndn(u, k)[0]


def jacobi_cn(u, k):
    return jacobi_sncndn(u, k)[1]


def jacobi_dn(u, k):
    return jacobi_sncndn(u, k)[2]
