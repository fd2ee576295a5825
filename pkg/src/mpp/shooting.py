"""Boundary-value solver for most probable paths.

Find (v0, chi0) such that the MPP trajectory from (x, Sigma) reaches y at
time T with chi(T) = 0, by minimising

    |gamma(T) - y|^2 + |chi(T)|^2

(embedding-space distance).  Sensitivities are forward-mode derivatives
through the fixed-step RK4 integrator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import jax
import jax.numpy as jnp
import numpy as np

from .development import CovarianceSpec
from .dynamics import integrate_mpp, mpp_flow
from .errors import DomainError, IntegrationError, NumericalError
from .geometry import Manifold
from .records import PathRecord

__all__ = [
    "ShootingProblem",
    "ShootingResult",
    "shoot",
    "shoot_objective",
    "shoot_gradient",
    "mpp_distance",
    "initial_guess",
]


@dataclass(frozen=True, eq=False)
class ShootingProblem:
    manifold: Manifold
    cov: CovarianceSpec
    target: np.ndarray
    T: float = 1.0
    tol: float = 1e-12
    max_iters: int = 200
    n_steps: int = 1000
    n_starts: int = 8
    method: str = "bfgs"
    learning_rate: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "target", self.manifold.check_point(self.target))
        if not self.T > 0:
            raise DomainError("T must be positive")
        if not self.tol > 0:
            raise DomainError("tolerance must be positive")
        if self.max_iters < 1 or self.n_steps < 1 or self.n_starts < 1:
            raise DomainError("max_iters, n_steps and n_starts must be >= 1")
        if self.method not in ("bfgs", "gd"):
            raise DomainError(f"unknown method {self.method!r}")

    @property
    def n_params(self):
        d = self.manifold.dim
        return d + d * (d - 1) // 2


@dataclass(eq=False)
class ShootingResult:
    v0: np.ndarray
    chi0: np.ndarray
    residual: float
    iterations: int
    path: PathRecord | None
    converged: bool
    history: list = field(default_factory=list)
    solutions: list = field(default_factory=list)

    @property
    def c(self):
        return float(self.path.c[0]) if self.path is not None else math.nan

    @property
    def energy(self):
        return 0.5 * self.c**2 * self.path.T

    @property
    def length(self):
        return self.c * self.path.T


@partial(jax.jit, static_argnums=(0, 1))
def _residual(m, n_steps, S2, x0, F0, y, T, z):
    d = m.dim
    s = mpp_flow(m, S2, x0, F0, z[:d], z[d:], T, n_steps)
    return jnp.concatenate([s.point - y, s.chi])


@partial(jax.jit, static_argnums=(0, 1))
def _residual_jac(m, n_steps, S2, x0, F0, y, T, z):
    f = lambda w: (lambda r: (r, r))(_residual(m, n_steps, S2, x0, F0, y, T, w))
    J, r = jax.jacfwd(f, has_aux=True)(z)
    return r, J


class _Evaluator:
    def __init__(self, p: ShootingProblem):
        self.p = p
        self.args = (
            jnp.asarray(np.diag(p.cov.lambdas**2)), jnp.asarray(p.cov.base), jnp.asarray(p.cov.vectors),
            jnp.asarray(p.target), jnp.asarray(float(p.T)),
        )

    def f(self, z):
        r = np.asarray(_residual(self.p.manifold, self.p.n_steps, *self.args, jnp.asarray(z)))
        return float(r @ r)

    def rj(self, z):
        r, J = _residual_jac(self.p.manifold, self.p.n_steps, *self.args, jnp.asarray(z))
        r, J = np.asarray(r), np.asarray(J)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(J))):
            raise NumericalError("non-finite residual or sensitivity in shooting")
        return r, J


def _pack(v0, chi0, d):
    from .dynamics import chi_upper

    return np.concatenate([np.asarray(v0, dtype=float).reshape(d), chi_upper(chi0, d)])


def shoot_objective(p: ShootingProblem, v0, chi0) -> float:
    return _Evaluator(p).f(_pack(v0, chi0, p.manifold.dim))


def shoot_gradient(p: ShootingProblem, v0, chi0) -> np.ndarray:
    """Gradient of the shooting objective with respect to (v0, upper triangle of chi0)."""
    r, J = _Evaluator(p).rj(_pack(v0, chi0, p.manifold.dim))
    return 2.0 * J.T @ r


def initial_guess(p: ShootingProblem):
    """v0 = eigenframe components of log_x(y) / T, chi0 = 0 (the geodesic guess)."""
    m, cov = p.manifold, p.cov
    w = m.log(jnp.asarray(cov.base), jnp.asarray(p.target))
    v0 = np.asarray(m.frame_coords(jnp.asarray(cov.vectors), w)) / p.T
    return v0, np.zeros(m.dim * (m.dim - 1) // 2)


def _start_points(p: ShootingProblem):
    v0, c0 = initial_guess(p)
    starts = [np.concatenate([v0, c0])]
    nrm = np.linalg.norm(v0)
    if p.n_starts > 1 and nrm == 0:
        nrm = 1.0 / p.T
    for k in range(1, p.n_starts if len(v0) >= 2 else 1):
        phi = 2.0 * math.pi * k / p.n_starts
        u = np.zeros_like(v0)
        base = v0 if np.linalg.norm(v0) > 0 else np.eye(len(v0))[0] * nrm
        u[0] = math.cos(phi) * base[0] - math.sin(phi) * base[1]
        u[1] = math.sin(phi) * base[0] + math.cos(phi) * base[1]
        u[2:] = base[2:]
        starts.append(np.concatenate([u, c0]))
    return starts


def _minimise(ev: _Evaluator, z, p: ShootingProblem):
    n = len(z)
    r, J = ev.rj(z)
    f = float(r @ r)
    g = 2.0 * J.T @ r
    history = [f]

    def gn_inverse(J):
        A = 2.0 * J.T @ J
        mu = 1e-12 * max(1.0, np.trace(A))
        return np.linalg.inv(A + mu * np.eye(n))

    def polish(z, f, r, J):
        # a few Gauss-Newton steps once within tolerance: delta bounds the squared
        # residual, so without this distances would only be accurate to ~sqrt(delta)
        for _ in range(3):
            z_new = z - np.linalg.lstsq(J, r, rcond=None)[0]
            r_new, J_new = ev.rj(z_new)
            f_new = float(r_new @ r_new)
            if not f_new < f:
                break
            z, f, r, J = z_new, f_new, r_new, J_new
        return z, f

    H = gn_inverse(J) if p.method == "bfgs" else None
    it = 0
    for it in range(1, p.max_iters + 1):
        if f <= p.tol:
            z, f = polish(z, f, r, J)
            return z, f, it - 1, history
        if p.method == "bfgs":
            d = -H @ g
            if g @ d >= 0:
                H = gn_inverse(J)
                d = -H @ g
            step = 1.0
        else:
            d = -g
            step = p.learning_rate
        slope = g @ d
        accepted = False
        for _ in range(50):
            z_new = z + step * d
            f_new = ev.f(z_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        r, J = ev.rj(z_new)
        f_new = float(r @ r)
        g_new = 2.0 * J.T @ r
        if p.method == "bfgs":
            s, yv = z_new - z, g_new - g
            sy = s @ yv
            if sy > 1e-14 * np.linalg.norm(s) * np.linalg.norm(yv):
                rho = 1.0 / sy
                V = np.eye(n) - rho * np.outer(s, yv)
                H = V @ H @ V.T + rho * np.outer(s, s)
        z, f, g = z_new, f_new, g_new
        history.append(f)
    return z, f, it, history


def shoot(p: ShootingProblem, init=None, extra_starts=()) -> ShootingResult:
    """Solve the MPP boundary-value problem with multi-start BFGS.

    Starts are the geodesic guess (or ``init``) followed by ``n_starts - 1``
    rotations of its direction in the (f_1, f_2)-plane and any
    ``extra_starts`` (pairs (v0, chi0)).  All converged starts
    are de-duplicated into ``solutions``; the minimal-energy one is returned.
    Without any converged start the best iterate is returned with
    ``converged=False``.
    """
    m, d = p.manifold, p.manifold.dim
    ev = _Evaluator(p)
    starts = _start_points(p)
    if init is not None:
        starts[0] = _pack(init[0], init[1], d)
    starts += [_pack(v, c, d) for v, c in extra_starts]
    runs = []
    for z0 in starts:
        z, f, it, hist = _minimise(ev, np.asarray(z0, dtype=float), p)
        runs.append((z, f, it, hist))
    lam2 = p.cov.lambdas**2
    energy = lambda z: 0.5 * float(np.sum(z[:d] ** 2 / lam2)) * p.T
    good = [r for r in runs if r[1] <= p.tol]
    distinct = []
    for r in sorted(good, key=lambda r: (round(energy(r[0]), 10), tuple(r[0]))):
        if all(np.linalg.norm(r[0] - s[0]) > 1e-4 * (1.0 + np.linalg.norm(s[0])) for s in distinct):
            distinct.append(r)
    if distinct:
        z, f, it, hist = distinct[0]
        converged = True
    else:
        z, f, it, hist = min(runs, key=lambda r: (r[1], tuple(r[0])))
        converged = False
    try:
        path = integrate_mpp(m, p.cov, z[:d], z[d:], p.T, p.n_steps)
    except IntegrationError:
        if converged:
            raise
        path = None  # a diverged best iterate need not be integrable at this step
    sols = [(s[0][:d].copy(), s[0][d:].copy(), energy(s[0])) for s in distinct]
    return ShootingResult(z[:d].copy(), z[d:].copy(), float(f), int(it), path, converged, hist, sols)


def mpp_distance(m: Manifold, cov: CovarianceSpec, y, T=1.0, extra_starts=(), **kw) -> float:
    """Anisotropic distance L^Sigma = c T of the minimal converged MPP from (x, Sigma) to y.

    Shooting is local, so this is the shortest MPP among those reached from
    the starts; ``extra_starts`` can supply further (v0, chi0) guesses.
    """
    res = shoot(ShootingProblem(m, cov, y, T=T, **kw), extra_starts=extra_starts)
    if not res.converged:
        raise NumericalError(f"shooting did not converge (residual {res.residual:.3e})")
    return res.length
