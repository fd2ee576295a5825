"""Lattice of MPP endpoints on the unit sphere and the lattice-based estimator.

For unit-determinant covariances at the north pole N with eigenvalues
e^{2a} (along e_1) and e^{-2a} (along e_2), unit-speed MPPs are known in
closed form.  Their endpoints z_{i,j,l} after times T_{j,l} give the upper
bound

    d(y; N, Sigma_l) <= T_{j,l} + e^{a_l} arccos(y . z_{i,j,l}),

whose minimum over the lattice, Dist_l(y), replaces the distance in the
estimator.  The lattice is computed once and reused for any data set.

Binary layout (all little-endian):
    8 bytes   magic b"MPPS2LAT"
    4 x u32   version (1), n_a, n_psi, n_T
    f64       a_max
    f64[n_a+1]                       a_l
    f64[(n_a+1)(n_T+1)]              T_{j,l} (row-major in l, j)
    f64[(n_a+1)(n_psi+1)(n_T+1)3]    z_{i,j,l} (row-major in l, i, j, xyz)
Only the i >= 0 endpoints are stored; the mirror images
diag(+-1, +-1, 1) z are applied on load.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.transform import Rotation

from .development import CovarianceSpec
from .elliptic import elliptic_K, jacobi_sncndn
from .errors import ConfigError, DomainError
from .estimation import EstimationResult, optimal_scale, objective_split
from .geometry import OrthoFrame

__all__ = [
    "S2Lattice",
    "build_s2_lattice",
    "lattice_distance",
    "lattice_argmin",
    "lattice_initial_guesses",
    "lattice_seed",
    "euler_grid",
    "estimate_s2",
    "save_lattice",
    "load_lattice",
    "MIRRORS",
]

MAGIC = b"MPPS2LAT"
VERSION = 1
MIRRORS = np.array([[1.0, 1.0, 1.0], [-1.0, 1.0, 1.0], [1.0, -1.0, 1.0], [-1.0, -1.0, 1.0]])


@dataclass(eq=False)
class S2Lattice:
    a_max: float
    n_a: int
    n_psi: int
    n_T: int
    a: np.ndarray  # (n_a+1,)
    T: np.ndarray  # (n_a+1, n_T+1), T[:, 0] = 0
    Z: np.ndarray  # (n_a+1, n_psi+1, n_T+1, 3)
    meta: dict = field(default_factory=dict)

    @property
    def psi(self):
        return np.arange(self.n_psi + 1) * math.pi / self.n_psi

    @property
    def k(self):
        return np.sin(0.5 * self.psi)

    def mirrored(self, l):
        """All endpoints of row l as (n_T+1, 4 (n_psi+1), 3), ordered by time first."""
        Zl = self.Z[l][None] * MIRRORS[:, None, None, :]  # (4, psi, T, 3)
        return np.transpose(Zl, (2, 0, 1, 3)).reshape(self.n_T + 1, -1, 3)

    def cov_unit(self, l, q=None):
        """Sigma'_l at q N with frame (q e_1, q e_2) and square-root eigenvalues (e^{a_l}, e^{-a_l})."""
        q = np.eye(3) if q is None else np.asarray(q, dtype=float)
        a = self.a[l]
        return CovarianceSpec(OrthoFrame(q[:, 2].copy(), q[:, :2].copy()), np.array([math.exp(a), math.exp(-a)]))


def _velocity(a, k, T, t):
    """(v, w) of the closed form for row parameter a, modulus k and horizon T at times t."""
    l1, l2 = math.exp(a), math.exp(-a)
    if k >= 1.0 - 1e-12:
        # psi = pi: the constant solution along the e_2 axis
        return np.zeros_like(t), np.full_like(t, l2)
    alpha = math.sqrt(max(l1 * l1 - l2 * l2, 0.0))
    sn, _, dn = jacobi_sncndn(elliptic_K(k) + alpha * (T - t), k)
    return l1 * dn, l2 * k * sn


def _batched_so3(V, W, T, n_steps):
    """RK4 for q' = q Omega(v, w) on the normalised time s in [0, 1] for a batch of problems.

    V, W: (B, 2 n_steps + 1) velocities at s = 0, 1/(2n), ..., 1; T: (B,).
    Returns q(1) e_3 for every problem and the worst group residual.
    """
    B = V.shape[0]
    h = 1.0 / n_steps

    def omega(idx):
        O = np.zeros((B, 3, 3))
        O[:, 0, 2] = V[:, idx] * T
        O[:, 1, 2] = W[:, idx] * T
        O[:, 2, 0] = -O[:, 0, 2]
        O[:, 2, 1] = -O[:, 1, 2]
        return O

    q = np.broadcast_to(np.eye(3), (B, 3, 3)).copy()
    I = np.eye(3)
    for n in range(n_steps):
        O0, Om, O1 = omega(2 * n), omega(2 * n + 1), omega(2 * n + 2)
        k1 = q @ O0
        k2 = (q + 0.5 * h * k1) @ Om
        k3 = (q + 0.5 * h * k2) @ Om
        k4 = (q + h * k3) @ O1
        q = q + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        X = np.swapaxes(q, 1, 2) @ q - I
        q = q @ (I - 0.5 * X + 0.375 * X @ X)
    res = float(np.max(np.abs(np.swapaxes(q, 1, 2) @ q - I)))
    return q[:, :, 2], res


def build_s2_lattice(a_max=1.0, n_a=8, n_psi=16, n_T=24, max_step=0.01) -> S2Lattice:
    """Endpoints z_{i,j,l} = q_{i,j,l}(T_{j,l}) N for a_l = l a_max / n_a, psi_i = i pi / n_psi, T_{j,l} = j T_max,l / n_T.

    T_max,l = 2 pi e^{a_l}.  Row i = 0 is the geodesic along e_1 and
    i = n_psi the constant solution along e_2; j = 0 is the pole itself.
    """
    if not a_max >= 0 or n_a < 1 or n_psi < 1 or n_T < 1:
        raise DomainError("need a_max >= 0 and positive grid sizes")
    a = np.arange(n_a + 1) * a_max / n_a
    T = np.outer(2.0 * math.pi * np.exp(a), np.arange(n_T + 1) / n_T)
    Z = np.zeros((n_a + 1, n_psi + 1, n_T + 1, 3))
    Z[:, :, 0, 2] = 1.0
    k_grid = np.sin(0.5 * np.arange(n_psi + 1) * math.pi / n_psi)
    worst = 0.0
    for l in range(n_a + 1):
        n_steps = max(8, int(math.ceil(T[l, -1] / max_step)))
        s = np.linspace(0.0, 1.0, 2 * n_steps + 1)
        Vs, Ws, Ts = [], [], []
        for k in k_grid:
            for j in range(1, n_T + 1):
                Tj = T[l, j]
                v, w = _velocity(a[l], k, Tj, s * Tj)
                Vs.append(v)
                Ws.append(w)
                Ts.append(Tj)
        z, res = _batched_so3(np.array(Vs), np.array(Ws), np.array(Ts), n_steps)
        worst = max(worst, res)
        Z[l, :, 1:, :] = z.reshape(n_psi + 1, n_T, 3)
    return S2Lattice(float(a_max), int(n_a), int(n_psi), int(n_T), a, T, Z, meta={"group_residual": worst})


def lattice_distance(lat: S2Lattice, l, y):
    """Dist_l(y) = min over the row-l lattice of T_{j,l} + e^{a_l} arccos(y . z); vectorised over y."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    Zm = lat.mirrored(l)  # (n_T+1, P, 3)
    cos = np.clip(np.einsum("nc,jpc->njp", Y, Zm), -1.0, 1.0)
    vals = lat.T[l][None, :, None] + math.exp(lat.a[l]) * np.arccos(cos)
    out = vals.reshape(len(Y), -1).min(axis=1)
    return float(out[0]) if single else out


def lattice_argmin(lat: S2Lattice, l, y):
    """(value, j, mirror, i) of the minimising lattice point; ties go to the smallest T."""
    Zm = lat.mirrored(l)
    cos = np.clip(Zm @ np.asarray(y, dtype=float), -1.0, 1.0)
    vals = lat.T[l][:, None] + math.exp(lat.a[l]) * np.arccos(cos)
    flat = int(np.argmin(vals))
    j, p = divmod(flat, Zm.shape[1])
    mirror, i = divmod(p, lat.n_psi + 1)
    return float(vals.flat[flat]), j, mirror, i


def lattice_seed(lat: S2Lattice, l, i, j, mirror=0, T=1.0):
    """(v0, chi0) on [0, T] of the closed-form MPP ending at lattice point (i, j, l) under ``MIRRORS[mirror]``.

    The closed form runs over [0, T_j]; rescaling to [0, T] multiplies both
    v and chi by T_j / T.  A reflection diag(s1, s2, 1) maps v to
    (s1 v1, s2 v2) and chi_12 to s1 s2 chi_12.
    """
    from .surfaces import pendulum_mpp

    Tj = lat.T[l, j]
    l1, l2 = math.exp(lat.a[l]), math.exp(-lat.a[l])
    if i == lat.n_psi:
        v, chi = np.array([0.0, l2]), 0.0
    else:
        sol = pendulum_mpp(1.0, (l1, l2), lat.psi[i], Tj, 1)
        v = np.asarray(sol.v(np.array([0.0])), dtype=float).reshape(2)
        chi = float(np.ravel(sol.chi(np.array([0.0])))[0])
    s1, s2 = MIRRORS[mirror, :2]
    return np.array([s1 * v[0], s2 * v[1]]) * Tj / T, np.array([s1 * s2 * chi * Tj / T])


def lattice_initial_guesses(lat: S2Lattice, l, y, k=4, T=1.0):
    """Shooting starts from (N, Sigma'_l) to y: seeds of the k lattice points (pole excluded) with the smallest bound.

    The lattice samples the unit-speed MPPs from N, so shooting from a seed
    ending near y tends to reach the short MPP through that region, which
    the geodesic guess can miss under strong anisotropy.
    """
    Zm = lat.mirrored(l)[1:]
    cos = np.clip(Zm @ np.asarray(y, dtype=float), -1.0, 1.0)
    vals = lat.T[l, 1:][:, None] + math.exp(lat.a[l]) * np.arccos(cos)
    out = []
    for flat in np.argsort(vals, axis=None, kind="stable")[:k]:
        j, q = divmod(int(flat), Zm.shape[1])
        mirror, i = divmod(q, lat.n_psi + 1)
        out.append(lattice_seed(lat, l, i, j + 1, mirror, T))
    return out


def euler_grid(n1, n2, n3):
    """Rotations Rz(2 pi i / n1) Ry(2 pi j / n2) Rx(2 pi k / n3) for all grid indices."""

    def rz(t):
        c, s = math.cos(t), math.sin(t)
        return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])

    def ry(t):
        c, s = math.cos(t), math.sin(t)
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])

    def rx(t):
        c, s = math.cos(t), math.sin(t)
        return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])

    out = [
        rz(2 * math.pi * i / n1) @ ry(2 * math.pi * j / n2) @ rx(2 * math.pi * k / n3)
        for i in range(n1) for j in range(n2) for k in range(n3)
    ]
    return np.array(out)


def _row_costs(lat, l, Y, rots, chunk=64):
    costs = np.empty(len(rots))
    for lo in range(0, len(rots), chunk):
        R = rots[lo:lo + chunk]
        local = np.einsum("rca,nc->rna", R, Y)  # q^{-1} y = q^T y
        d = lattice_distance(lat, l, local.reshape(-1, 3)).reshape(len(R), len(Y))
        costs[lo:lo + chunk] = np.sum(d**2, axis=1)
    return costs


def estimate_s2(lat: S2Lattice, samples, grid=(10, 10, 10), refine=True) -> EstimationResult:
    """Lattice estimator of (x, Sigma) on the unit sphere.

    Minimises sum_r Dist_l(q^{-1} y_r)^2 over the rows l and rotations q
    (Euler-angle grid, then Nelder-Mead on the rotation vector when
    ``refine``).  The mean is q N and Sigma' has eigenvalues e^{+-2a} along
    q e_1, q e_2; C follows from the optimal-scale formula.
    """
    Y = np.atleast_2d(np.asarray(samples, dtype=float))
    if len(Y) == 0 or Y.size == 0:
        raise DomainError("empty sample set")
    if np.max(np.abs(np.linalg.norm(Y, axis=1) - 1.0)) > 1e-8:
        raise DomainError("samples must lie on the unit sphere")
    rots = euler_grid(*grid)
    best = None
    for l in range(lat.n_a + 1):
        costs = _row_costs(lat, l, Y, rots)
        idx = int(np.argmin(costs))
        cand = (float(costs[idx]), l, rots[idx])
        if refine:
            q0 = rots[idx]
            f = lambda w: float(_row_costs(lat, l, Y, (q0 @ Rotation.from_rotvec(w).as_matrix())[None])[0])
            r = minimize(f, np.zeros(3), method="Nelder-Mead",
                         options={"xatol": 1e-6, "fatol": 1e-10, "initial_simplex": 0.1 * np.vstack([np.zeros(3), np.eye(3)])})
            if r.fun < cand[0]:
                cand = (float(r.fun), l, q0 @ Rotation.from_rotvec(r.x).as_matrix())
        if best is None or cand[0] < best[0] - 1e-15:
            best = cand
    D, l, q = best
    sq = lattice_distance(lat, l, Y @ q) ** 2
    C = optimal_scale(sq, 2)
    cov_unit = lat.cov_unit(l, q)
    return EstimationResult(
        mean=q[:, 2].copy(), cov=cov_unit.scaled(C), C=C, cov_unit=cov_unit, objective=objective_split(sq, 2, C),
        per_sample=[], sq_dists=sq, coverage=1.0, iterations=0, converged=True,
        meta={"row": l, "a": float(lat.a[l]), "rotation": q, "at_boundary": l == lat.n_a, "sum_sq": D},
    )


def save_lattice(lat: S2Lattice, path):
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<4I", VERSION, lat.n_a, lat.n_psi, lat.n_T))
        fh.write(struct.pack("<d", lat.a_max))
        for arr in (lat.a, lat.T, lat.Z):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_lattice(path) -> S2Lattice:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ConfigError(f"{path}: not a lattice file")
    version, n_a, n_psi, n_T = struct.unpack_from("<4I", data, 8)
    if version != VERSION:
        raise ConfigError(f"{path}: unsupported lattice version {version}")
    (a_max,) = struct.unpack_from("<d", data, 24)
    sizes = [n_a + 1, (n_a + 1) * (n_T + 1), (n_a + 1) * (n_psi + 1) * (n_T + 1) * 3]
    if len(data) != 32 + 8 * sum(sizes):
        raise ConfigError(f"{path}: truncated or corrupt lattice file")
    flat = np.frombuffer(data, dtype="<f8", offset=32).astype(float)
    a = flat[: sizes[0]]
    T = flat[sizes[0]: sizes[0] + sizes[1]].reshape(n_a + 1, n_T + 1)
    Z = flat[sizes[0] + sizes[1]:].reshape(n_a + 1, n_psi + 1, n_T + 1, 3)
    return S2Lattice(a_max, n_a, n_psi, n_T, a, T, Z)
