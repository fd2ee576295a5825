"""Mean and covariance estimation with most probable paths.

The small-time surrogate of the likelihood is

    F(x, Sigma) = 1/(2n) sum_i ( d(y_i; x, Sigma)^2 + ln det Sigma ).

Writing Sigma = C Sigma' with det Sigma' = 1, the optimal scale is
C = sum_i d(y_i; x, Sigma')^2 / (n d), so only (x, Sigma') has to be searched
and the quantity to minimise is D = sum_i d(y_i; x, Sigma')^2.

Each d_i is the anisotropic length of the MPP from (x, Sigma') to y_i on
[0, 1], i.e. d_i^2 = v_i . Sigma'^{-1} v_i where (v_i, chi_i) solve the
square system G = (chart coordinates of gamma(1) - y_i, chi(1)) = 0.  The
gradient of D follows from the implicit function theorem.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import partial

import jax
import jax.numpy as jnp
import numpy as np

from .development import CovarianceSpec
from .dynamics import mpp_flow
from .errors import DomainError
from .geometry import Manifold, OrthoFrame
from .shooting import ShootingProblem, ShootingResult, shoot

__all__ = [
    "SampleSet",
    "EstimationResult",
    "decompose_scale",
    "objective",
    "objective_split",
    "optimal_scale",
    "estimate",
    "C_FLOOR",
]

log = logging.getLogger(__name__)

C_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class SampleSet:
    points: np.ndarray

    @classmethod
    def checked(cls, m: Manifold, points, tol=1e-8):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if len(pts) == 0:
            raise DomainError("empty sample set")
        for p in pts:
            m.check_point(p, tol=tol)
        return cls(pts)

    def __len__(self):
        return len(self.points)


@dataclass(eq=False)
class EstimationResult:
    mean: np.ndarray
    cov: CovarianceSpec
    C: float
    cov_unit: CovarianceSpec
    objective: float
    per_sample: list
    sq_dists: np.ndarray = None
    coverage: float = 1.0
    iterations: int = 0
    converged: bool = False
    history: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def decompose_scale(cov: CovarianceSpec):
    """Split Sigma = C Sigma' with det Sigma' = 1; C = det(Sigma)^{1/d}."""
    d = cov.dim
    logC = 2.0 * float(np.sum(np.log(cov.lambdas))) / d
    C = math.exp(logC)
    return C, CovarianceSpec(cov.frame, cov.lambdas * math.exp(-0.5 * logC))


def optimal_scale(sq_dists, d):
    """Minimiser of (d/2) ln C + sum(d_i^2) / (2 n C): C = mean(d_i^2) / d, floored."""
    sq = np.asarray(sq_dists, dtype=float)
    return max(float(np.sum(sq)) / (len(sq) * d), C_FLOOR)


def objective_split(sq_dists_unit, d, C):
    """(d/2) ln C + 1/(2 n C) sum_i d(y_i, Sigma')^2."""
    sq = np.asarray(sq_dists_unit, dtype=float)
    return 0.5 * d * math.log(C) + float(np.sum(sq)) / (2.0 * len(sq) * C)


def objective(m: Manifold, samples, x, cov: CovarianceSpec, return_dists=False, **shoot_kw):
    """1/(2n) sum_i (d(y_i; x, Sigma)^2 + ln det Sigma) with distances from the shooting solver (T = 1)."""
    pts = SampleSet.checked(m, samples).points
    if np.linalg.norm(np.asarray(x) - cov.base) > 1e-12:
        raise DomainError("covariance must live at x")
    shoot_kw.setdefault("n_starts", 1)
    sq = []
    for y in pts:
        if np.linalg.norm(y - cov.base) < 1e-14:
            sq.append(0.0)
            continue
        r = shoot(ShootingProblem(m, cov, y, T=1.0, **shoot_kw))
        sq.append(r.length**2)
    sq = np.array(sq)
    val = 0.5 * float(np.mean(sq + math.log(cov.det)))
    return (val, sq) if return_dists else val


# ---------------------------------------------------------------------------
# Constrained estimator
# ---------------------------------------------------------------------------


def _sum_zero_basis(d):
    # orthonormal basis of {l in R^d : sum l = 0}
    Q, _ = np.linalg.qr(np.eye(d) - 1.0 / d)
    return Q[:, : d - 1]


def _split_theta(theta, d):
    na = d * (d - 1) // 2
    return theta[:d], theta[d:d + na], theta[d + na:]


def _antisym(a, d):
    iu = np.triu_indices(d, 1)
    A = jnp.zeros((d, d), dtype=a.dtype).at[iu].set(a)
    return A - A.T


def _state_from_theta(m, centre, Fc, P, theta):
    d = m.dim
    xi, om, ell = _split_theta(theta, d)
    Frot = Fc @ jax.scipy.linalg.expm(_antisym(om, d))
    x, F = m.exp_transport(centre, Frot, Fc @ xi)
    x = m.project(x)
    F = m.orthonormalize(x, F)
    lam2 = jnp.exp(2.0 * (P @ ell))
    return x, F, lam2


def _sample_eval(m, n_steps, centre, Fc, P, theta, z, y, Ey):
    d = m.dim
    x, F, lam2 = _state_from_theta(m, centre, Fc, P, theta)
    s = mpp_flow(m, jnp.diag(lam2), x, F, z[:d], z[d:], 1.0, n_steps)
    G = jnp.concatenate([m.frame_coords(Ey, s.point - y), s.chi])
    h = jnp.sum(z[:d] ** 2 / lam2)
    return G, h


@partial(jax.jit, static_argnums=(0, 1))
def _batch_G(m, n_steps, centre, Fc, P, theta, Z, Y, EY):
    f = lambda z, y, E: _sample_eval(m, n_steps, centre, Fc, P, theta, z, y, E)[0]
    return jax.vmap(f)(Z, Y, EY)


@partial(jax.jit, static_argnums=(0, 1))
def _batch_full(m, n_steps, centre, Fc, P, theta, Z, Y, EY):
    p = theta.shape[0]

    def one(z, y, E):
        def g(w):
            G, h = _sample_eval(m, n_steps, centre, Fc, P, w[:p], w[p:], y, E)
            out = jnp.concatenate([G, h[None]])
            return out, out

        J, val = jax.jacfwd(g, has_aux=True)(jnp.concatenate([theta, z]))
        return val, J

    return jax.vmap(one)(Z, Y, EY)


class _Problem:
    def __init__(self, m, pts, n_steps):
        self.m = m
        self.d = m.dim
        self.k = self.d + self.d * (self.d - 1) // 2
        self.n_steps = n_steps
        self.P = jnp.asarray(_sum_zero_basis(self.d))
        self.Y = jnp.asarray(pts)
        self.EY = jnp.asarray(np.stack([m.tangent_basis(y) for y in pts]))

    def set_centre(self, centre, Fc):
        self.centre, self.Fc = jnp.asarray(centre), jnp.asarray(Fc)

    def G(self, theta, Z, mask=None):
        out = np.asarray(_batch_G(self.m, self.n_steps, self.centre, self.Fc, self.P, jnp.asarray(theta),
                                  jnp.asarray(Z), self.Y, self.EY))
        return out

    def full(self, theta, Z):
        val, J = _batch_full(self.m, self.n_steps, self.centre, self.Fc, self.P, jnp.asarray(theta),
                             jnp.asarray(Z), self.Y, self.EY)
        return np.asarray(val), np.asarray(J)

    def newton(self, theta, Z, steps, tol):
        """Damped Newton on G(theta, z_i) = 0 for all samples; returns (Z, |G| per sample)."""
        k, p = self.k, len(theta)
        Z = np.array(Z, dtype=float)
        val, J = self.full(theta, Z)
        res = np.linalg.norm(val[:, :k], axis=1)
        for _ in range(steps):
            active = res > tol
            if not np.any(active):
                break
            Jz = J[:, :k, p:]
            try:
                dz = -np.linalg.solve(Jz, val[:, :k, None])[..., 0]
            except np.linalg.LinAlgError:
                dz = -np.stack([np.linalg.lstsq(a, b, rcond=None)[0] for a, b in zip(Jz, val[:, :k])])
            dz[~active] = 0.0
            step = np.ones(len(Z))
            newZ = Z.copy()
            done = ~active
            for _ in range(12):
                cand = Z + step[:, None] * dz
                r_c = np.linalg.norm(self.G(theta, cand), axis=1)
                ok = (~done) & np.isfinite(r_c) & (r_c < res)
                newZ[ok] = cand[ok]
                done |= ok
                if np.all(done):
                    break
                step[~done] *= 0.5
            Z = newZ
            val, J = self.full(theta, Z)
            res = np.linalg.norm(val[:, :k], axis=1)
        return Z, res, val, J

    def value_grad(self, val, J, mask, p):
        k = self.k
        h = val[:, k]
        D = float(np.sum(h[mask]))
        grad = np.zeros(p)
        for i in np.nonzero(mask)[0]:
            Gt, Gz = J[i, :k, :p], J[i, :k, p:]
            ht, hz = J[i, k, :p], J[i, k, p:]
            lam = np.linalg.solve(Gz.T, hz)
            grad += ht - lam @ Gt
        return D, grad


def _tangent_pca(m, x, pts):
    E = m.tangent_basis(x)
    logs = np.array([np.asarray(m.frame_coords(jnp.asarray(E), m.log(jnp.asarray(x), jnp.asarray(y)))) for y in pts])
    S = logs.T @ logs / max(len(pts), 1)
    w, V = np.linalg.eigh(S + 1e-12 * np.eye(m.dim))
    V = V[:, ::-1]
    if np.linalg.det(V) < 0:
        V[:, -1] *= -1
    return E @ V, np.sqrt(np.maximum(w[::-1], 1e-12))


def estimate(m: Manifold, samples, init=None, max_iters=100, tol=1e-6, n_steps=300, inner_steps=5,
             newton_tol=1e-10) -> EstimationResult:
    """Estimate (x, Sigma = C Sigma') from samples by the constrained MPP formulation.

    Outer BFGS iterations update the mean (geodesic retraction), the
    eigenframe (rotation) and the log-eigenvalues of Sigma' (summing to
    zero); after each trial update every sample's MPP is re-solved with up
    to ``inner_steps`` Newton steps, warm-started from the previous
    solution.  ``init`` is ``(x0, CovarianceSpec)`` or ``None`` for the
    extrinsic mean with tangent PCA.  Samples whose MPP cannot be solved at
    the initial guess are excluded and reported through ``coverage``.
    """
    pts = SampleSet.checked(m, samples).points
    n, d = len(pts), m.dim
    if init is None:
        x0 = np.asarray(m.project(jnp.asarray(pts.mean(axis=0))))
        F0, lam0 = _tangent_pca(m, x0, pts)
    else:
        x0, cov0 = init
        x0 = m.check_point(x0)
        F0, lam0 = cov0.vectors, cov0.lambdas
    prob = _Problem(m, pts, n_steps)
    P = np.asarray(prob.P)
    loglam = np.log(lam0)
    ell = P.T @ (loglam - loglam.mean())
    na = d * (d - 1) // 2
    p = d + na + (d - 1)
    prob.set_centre(x0, F0)
    theta = np.concatenate([np.zeros(d + na), ell])

    # initial per-sample solutions from the geodesic guess
    Z = np.zeros((n, prob.k))
    for i, y in enumerate(pts):
        Z[i, :d] = np.asarray(m.frame_coords(jnp.asarray(F0), m.log(jnp.asarray(x0), jnp.asarray(y))))
    Z, res, val, J = prob.newton(theta, Z, 50, newton_tol)
    mask = res <= max(1e3 * newton_tol, 1e-8)
    if not np.all(mask):
        log.warning("excluding %d of %d samples whose MPP could not be solved", int(np.sum(~mask)), n)
    if not np.any(mask):
        raise DomainError("no sample is reachable from the initial guess")

    D, g = prob.value_grad(val, J, mask, p)
    H = np.eye(p) * 0.1 / max(1.0, D / n)
    history = [D]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        if np.linalg.norm(g) <= tol * max(1.0, D):
            converged = True
            break
        dirn = -H @ g
        if g @ dirn >= 0:
            H = np.eye(p) * 0.1 / max(1.0, D / n)
            dirn = -H @ g
        step, accepted = 1.0, False
        for _ in range(30):
            th_new = theta + step * dirn
            Zn, res_n, val_n, J_n = prob.newton(th_new, Z, inner_steps, newton_tol)
            if np.all(res_n[mask] <= max(1e3 * newton_tol, 1e-8)):
                D_new, g_new = prob.value_grad(val_n, J_n, mask, p)
                if D_new <= D + 1e-4 * step * (g @ dirn):
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            # no decrease possible beyond rounding: treat as stationary
            converged = abs(g @ dirn) <= 1e-10 * max(1.0, D)
            break
        s, yv = th_new - theta, g_new - g
        sy = s @ yv
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            rho = 1.0 / sy
            V = np.eye(p) - rho * np.outer(s, yv)
            H = V @ H @ V.T + rho * np.outer(s, s)
        # re-centre at the new mean and frame so that xi = 0, omega = 0 again
        xc, Fc, _ = _state_from_theta(m, prob.centre, prob.Fc, prob.P, jnp.asarray(th_new))
        prob.set_centre(np.asarray(xc), np.asarray(Fc))
        theta = np.concatenate([np.zeros(d + na), th_new[d + na:]])
        Z, D, g, res = Zn, D_new, g_new, res_n
        history.append(D)
        if len(history) > 3 and abs(history[-4] - D) <= 1e-14 * max(1.0, D):
            converged = True
            break

    x = np.asarray(prob.centre)
    lam_unit = np.exp(P @ theta[d + na:])
    order = np.argsort(lam_unit)[::-1]
    F, lam_unit = np.asarray(prob.Fc)[:, order], lam_unit[order]
    V = Z[:, :d][:, order]
    iu = np.triu_indices(d, 1)
    A = np.zeros((n, d, d))
    A[:, iu[0], iu[1]] = Z[:, d:]
    A = A - A.transpose(0, 2, 1)
    chis = A[:, order][:, :, order][:, iu[0], iu[1]]
    sq = np.sum(V**2 / lam_unit**2, axis=1)
    C = optimal_scale(sq[mask], d)
    cov_unit = CovarianceSpec(OrthoFrame(x, F), lam_unit)
    cov = cov_unit.scaled(C)
    # under Sigma' -> C Sigma' the same path solves the MPP system with chi scaled by C
    per = [ShootingResult(V[i], C * chis[i], float(res[i]), it, None, bool(mask[i])) for i in range(n)]
    return EstimationResult(
        mean=x, cov=cov, C=C, cov_unit=cov_unit, objective=objective_split(sq[mask], d, C), per_sample=per,
        sq_dists=sq, coverage=float(np.mean(mask)), iterations=it, converged=converged, history=history,
    )
