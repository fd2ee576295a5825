"""Initial-value integration of the most-probable-path equations in a parallel frame.

State: point x, parallel frame F, frame components v of the velocity and
the antisymmetric multiplier chi (stored as its strict upper triangle).  With
S^2 = F^{-1} Sigma F the equations are

    v'      = 1/2 S^2 (sum_ijk R_jikl chi_ij v_k)_l
    chi'_ij = w_i v_j - v_i w_j,    w = S^{-2} v,

and an MPP is a solution with chi(T) = 0.  c^2 = v . S^{-2} v is a first
integral.  ``hamiltonian_flow`` integrates the equivalent normal-geodesic
system in momentum form with an adaptive scipy integrator and serves as an
independent check.
"""
from __future__ import annotations

from functools import partial
from typing import NamedTuple

import jax
import jax.numpy as jnp
import numpy as np
from scipy.integrate import solve_ivp

from .development import CovarianceSpec, anti_develop
from .errors import DomainError, IntegrationError, NumericalError, UnsupportedManifoldError
from .geometry import Manifold, OrthoFrame, Sphere, rk4_step
from .records import PathRecord

__all__ = [
    "MppState",
    "chi_upper",
    "chi_matrix",
    "mpp_rhs",
    "mpp_flow",
    "integrate_mpp",
    "normalize_initial",
    "integrate_mpp_normalized",
    "hamiltonian_flow",
    "path_energy",
    "anisotropic_length",
    "sphere_lie_invariant",
    "DRIFT_LIMIT",
]

DRIFT_LIMIT = 1e-4


class MppState(NamedTuple):
    point: jnp.ndarray
    frame: jnp.ndarray
    v: jnp.ndarray
    chi: jnp.ndarray  # strict upper triangle, row-major


def chi_matrix(cu, d):
    """Antisymmetric d x d matrix from its strict upper triangle (jax or numpy)."""
    iu = np.triu_indices(d, 1)
    A = jnp.zeros((d, d), dtype=jnp.result_type(cu, jnp.float64)).at[iu].set(cu)
    return A - A.T


def chi_upper(chi, d):
    """Normalise a chi argument (scalar for d = 2, upper-triangle vector or full matrix) to the upper triangle."""
    a = np.asarray(chi, dtype=float)
    n = d * (d - 1) // 2
    if a.ndim == 0 and n == 1:
        return a.reshape(1)
    if a.shape == (n,):
        return a.copy()
    if a.shape == (d, d):
        if np.max(np.abs(a + a.T), initial=0.0) > 1e-12:
            raise DomainError("chi must be antisymmetric")
        return a[np.triu_indices(d, 1)]
    raise DomainError(f"chi must be a scalar (d=2), a vector of length {n} or a {d}x{d} matrix; got shape {a.shape}")


def _rhs(m, S2, S2inv, s: MppState):
    x, F, v, cu = s
    d = v.shape[0]
    chi = chi_matrix(cu, d)
    R = m.curvature_in_frame(x, F)
    vdot = S2 @ (0.5 * jnp.einsum("jikl,ij,k->l", R, chi, v))
    w = S2inv @ v
    cdot = jnp.outer(w, v) - jnp.outer(v, w)
    xdot = F @ v
    return MppState(xdot, m.transport_rhs(x, xdot, F), vdot, cdot[np.triu_indices(d, 1)])


def mpp_rhs(m: Manifold, s: MppState, cov: CovarianceSpec, S2=None):
    """Time derivative of the MPP state.

    By default ``s.frame`` is taken to be the transported eigenframe of
    ``cov`` (S = Lambda); pass ``S2`` for a general parallel frame.
    """
    S2 = np.diag(cov.lambdas**2) if S2 is None else np.asarray(S2, dtype=float)
    st = MppState(*(jnp.asarray(a, dtype=float) for a in s))
    out = _rhs(m, jnp.asarray(S2), jnp.asarray(np.linalg.inv(S2)), st)
    return MppState(*(np.asarray(a) for a in out))


def _step(m, S2, S2inv, s, h):
    s = rk4_step(partial(_rhs, m, S2, S2inv), s, h)
    x = m.project(s.point)
    return MppState(x, m.orthonormalize(x, s.frame), s.v, s.chi)


@partial(jax.jit, static_argnums=(0, 6))
def _mpp_scan(m, S2, x0, F0, v0, cu0, n_steps, T):
    S2inv = jnp.linalg.inv(S2)
    h = T / n_steps

    def body(s, _):
        s = _step(m, S2, S2inv, s, h)
        return s, s

    s0 = MppState(x0, F0, v0, cu0)
    _, traj = jax.lax.scan(body, s0, None, length=n_steps)
    return jax.tree_util.tree_map(lambda a, b: jnp.concatenate([a[None], b]), s0, traj)


def mpp_flow(m, S2, x0, F0, v0, cu0, T, n_steps):
    """Final MPP state after ``n_steps`` RK4 steps (pure jax, differentiable in all array arguments)."""
    S2inv = jnp.linalg.inv(S2)
    h = T / n_steps

    def body(_, s):
        return _step(m, S2, S2inv, s, h)

    return jax.lax.fori_loop(0, n_steps, body, MppState(x0, F0, v0, cu0))


def _frame_setup(m, cov, frame):
    if frame is None:
        return cov.vectors, np.diag(cov.lambdas**2)
    F = np.asarray(frame.vectors if isinstance(frame, OrthoFrame) else frame, dtype=float)
    Q = np.asarray(m.gram(jnp.asarray(F), jnp.asarray(cov.vectors)))
    return F, (Q * cov.lambdas**2) @ Q.T


def integrate_mpp(m: Manifold, cov: CovarianceSpec, v0, chi0, T, n_steps=None, frame=None) -> PathRecord:
    """RK4 trajectory of the MPP system from (x, v0, chi0) over [0, T].

    ``v0`` and ``chi0`` are components in the eigenframe of ``cov`` (or in
    ``frame`` when a different orthonormal frame at x is given).  The default
    step is T / 1000.  Raises IntegrationError when the first integral c
    drifts by more than 1e-4 relative.
    """
    T = float(T)
    if not T > 0:
        raise DomainError("T must be positive")
    n_steps = 1000 if n_steps is None else int(n_steps)
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    d = m.dim
    v0 = np.asarray(v0, dtype=float).reshape(-1)
    if v0.shape != (d,):
        raise DomainError(f"v0 must have {d} components")
    cu0 = chi_upper(chi0, d)
    F0, S2 = _frame_setup(m, cov, frame)
    traj = _mpp_scan(m, jnp.asarray(S2), jnp.asarray(cov.base), jnp.asarray(F0), jnp.asarray(v0),
                     jnp.asarray(cu0), n_steps, T)
    xs, Fs, vs, cus = (np.asarray(a) for a in traj)
    if not np.all(np.isfinite(xs)) or not np.all(np.isfinite(vs)):
        raise NumericalError("non-finite state during MPP integration")
    S2inv = np.linalg.inv(S2)
    c = np.sqrt(np.einsum("ti,ij,tj->t", vs, S2inv, vs))
    t = np.linspace(0.0, T, n_steps + 1)
    rec = PathRecord(
        t=t, points=xs, frames=Fs, v=vs, chi=cus, c=c,
        energy=_cumulative_simpson_like(t, 0.5 * c**2), speed=np.linalg.norm(vs, axis=1), manifold=m,
        meta={"eigen_components": frame is None, "n_steps": n_steps},
    )
    drift = rec.first_integral_drift()
    if drift > DRIFT_LIMIT:
        raise IntegrationError(
            f"first integral drifted by {drift:.2e} (> {DRIFT_LIMIT:.0e}); reduce the step",
            suggested_steps=4 * n_steps,
        )
    rec.meta["drift"] = drift
    return rec


def _cumulative_simpson_like(t, f):
    # cumulative trapezoid; exact for the constant integrand of exact solutions
    out = np.zeros_like(t)
    out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))
    return out


def normalize_initial(v0, chi0, lambdas):
    """Rescale (v0, chi0) to c = 1; returns (v0/c, chi0/c, c).

    The rescaled solution traverses the same curve, so a path over [0, T]
    corresponds to the normalised path over [0, cT].
    """
    v0 = np.asarray(v0, dtype=float)
    c = float(np.sqrt(np.sum(v0**2 / np.asarray(lambdas, dtype=float) ** 2)))
    if c == 0:
        raise DomainError("v0 = 0 cannot be normalised")
    return v0 / c, np.asarray(chi0, dtype=float) / c, c


def integrate_mpp_normalized(m, cov, v0, chi0, T, n_steps=None):
    """``integrate_mpp`` for the unit-speed (c = 1) reparametrisation; the time span becomes cT."""
    v, chi, c = normalize_initial(v0, chi0, cov.lambdas)
    rec = integrate_mpp(m, cov, v, chi, c * T, n_steps)
    rec.meta["c_original"] = c
    return rec


# ---------------------------------------------------------------------------
# Normal-geodesic (Hamiltonian) system
# ---------------------------------------------------------------------------


def _ham_rhs_factory(m: Manifold, lam2, d, n):
    def curv_action(x, F, A, v):
        # RA v = 1/2 sum_ij A_ij F^{-1} R(f_j, f_i) (F v)
        Fv = F @ v

        def term(i, j):
            return m.curvature_operator(x, F[:, j], F[:, i], Fv)

        idx = jnp.arange(d)
        terms = jax.vmap(lambda i: jax.vmap(lambda j: term(i, j))(idx))(idx)  # (d, d, n)
        amb = 0.5 * jnp.einsum("ij,ijn->n", A, terms)
        return m.frame_coords(F, amb)

    @jax.jit
    def rhs(y):
        x = y[:n]
        F = y[n:n + n * d].reshape(n, d)
        p = y[n + n * d:n + n * d + d]
        A = y[n + n * d + d:].reshape(d, d)
        v = lam2 * p
        xdot = F @ v
        Fdot = m.transport_rhs(x, xdot, F)
        pdot = curv_action(x, F, A, v)
        Adot = jnp.outer(p, v) - jnp.outer(v, p)
        return jnp.concatenate([xdot, Fdot.reshape(-1), pdot, Adot.reshape(-1)])

    return rhs


def hamiltonian_flow(m: Manifold, cov: CovarianceSpec, v0, A0, T, n_steps=1000, rtol=1e-12, atol=1e-12) -> PathRecord:
    """Integrate f' = H_v, v' = S^2 R(A) v, A' = v ^ S^{-2} v with an adaptive Runge-Kutta method.

    The momentum p = S^{-2} v is the integrated variable and the
    Hamiltonian P = |S^{-1} v|^2 / 2 = |S p|^2 / 2 is recorded per sample
    (in ``energy``).  Samples are taken on the same uniform grid as
    ``integrate_mpp``.
    """
    d, n = m.dim, m.ambient_dim
    lam2 = np.asarray(cov.lambdas, dtype=float) ** 2
    A0 = np.asarray(A0, dtype=float)
    if A0.ndim < 2:
        A0 = np.asarray(chi_matrix(chi_upper(A0, d), d))
    elif np.max(np.abs(A0 + A0.T), initial=0.0) > 1e-12:
        raise DomainError("A0 must be antisymmetric")
    v0 = np.asarray(v0, dtype=float)
    rhs = _ham_rhs_factory(m, jnp.asarray(lam2), d, n)
    y0 = np.concatenate([cov.base, cov.vectors.reshape(-1), v0 / lam2, A0.reshape(-1)])
    t = np.linspace(0.0, float(T), n_steps + 1)
    sol = solve_ivp(lambda _, y: np.asarray(rhs(jnp.asarray(y))), (0.0, float(T)), y0, method="DOP853",
                    t_eval=t, rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(f"Hamiltonian integration failed: {sol.message}", suggested_steps=None)
    Y = sol.y.T
    xs = Y[:, :n]
    Fs = Y[:, n:n + n * d].reshape(-1, n, d)
    ps = Y[:, n + n * d:n + n * d + d]
    As = Y[:, n + n * d + d:].reshape(-1, d, d)
    vs = ps * lam2
    P = 0.5 * np.sum(lam2 * ps**2, axis=1)
    iu = np.triu_indices(d, 1)
    return PathRecord(
        t=t, points=xs, frames=Fs, v=vs, chi=As[:, iu[0], iu[1]], c=np.sqrt(2 * P), energy=P,
        speed=np.linalg.norm(vs, axis=1), manifold=m, meta={"hamiltonian": P, "nfev": sol.nfev},
    )


# ---------------------------------------------------------------------------
# Functionals
# ---------------------------------------------------------------------------


def _driving_increments(m, cov, gamma: PathRecord):
    b = anti_develop(m, OrthoFrame(cov.base, cov.vectors), gamma)
    return np.diff(b.values, axis=0), np.diff(b.times)


def path_energy(m: Manifold, cov: CovarianceSpec, gamma: PathRecord) -> float:
    """E = 1/2 int |Lambda^{-1} b'(t)|^2 dt for the anti-development b of ``gamma`` in the eigenframe.

    For MPP records carrying eigenframe velocities the integral is taken
    directly (Simpson); otherwise the path is treated as piecewise geodesic
    between samples.
    """
    if gamma.v is not None and gamma.meta.get("eigen_components") and len(gamma.t) >= 3:
        from scipy.integrate import simpson

        return float(0.5 * simpson(np.sum(gamma.v**2 / cov.lambdas**2, axis=1), x=gamma.t))
    db, dt = _driving_increments(m, cov, gamma)
    return float(0.5 * np.sum(np.sum((db / cov.lambdas) ** 2, axis=1) / dt))


def anisotropic_length(m: Manifold, cov: CovarianceSpec, gamma: PathRecord) -> float:
    """L^Sigma = int |Lambda^{-1} b'(t)| dt; independent of the time parametrisation."""
    db, _ = _driving_increments(m, cov, gamma)
    return float(np.sum(np.linalg.norm(db / cov.lambdas, axis=1)))


def sphere_lie_invariant(gamma: PathRecord, cov: CovarianceSpec):
    """Ad(Phi(t)) (Lambda^{-2} v, B) along an MPP on the unit sphere, as (d+1)x(d+1) matrices.

    Phi(t) = Q(0)^T Q(t) with Q = (f_1 ... f_d x) in SO(d+1) and
    B_lk = 1/2 sum_ij R_jikl chi_ij.  The returned array should be constant in t.
    """
    m = gamma.manifold
    if not (isinstance(m, Sphere) and m.r == 1.0):
        raise UnsupportedManifoldError("the conserved quantity is implemented for the unit sphere")
    if gamma.frames is None or gamma.chi is None:
        raise DomainError("need frames and chi along the path")
    d = m.dim
    Q = np.concatenate([gamma.frames, gamma.points[:, :, None]], axis=2)
    Phi = np.einsum("ji,tjk->tik", Q[0], Q)
    lam2 = cov.lambdas**2
    chis = np.zeros((len(gamma.t), d, d))
    iu = np.triu_indices(d, 1)
    chis[:, iu[0], iu[1]] = gamma.chi
    chis -= np.transpose(chis, (0, 2, 1))
    R = np.asarray(jax.vmap(m.curvature_in_frame)(jnp.asarray(gamma.points), jnp.asarray(gamma.frames)))
    X = np.zeros_like(Phi)
    X[:, :d, :d] = 0.5 * np.einsum("tjikl,tij->tlk", R, chis)
    X[:, :d, d] = gamma.v / lam2
    X[:, d, :d] = -gamma.v / lam2
    return np.einsum("tij,tjk,tlk->til", Phi, X, Phi)
