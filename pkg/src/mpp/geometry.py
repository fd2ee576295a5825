"""Built-in Riemannian manifolds, represented in embedding coordinates.

Points and tangent vectors live in the ambient space (R^{d+1} for spheres,
Minkowski space R^{d,1} for the hyperboloid model, R^3 for the torus and R^d
for flat space).  A frame is an ``(n, d)`` array whose columns are tangent
vectors at a common base point.

All per-point methods are written with :mod:`jax.numpy` so they can be traced
inside the jitted integrators; they take a single point (no batch axis) and
are vectorised with :func:`jax.vmap` by the callers.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import partial

import jax
import jax.numpy as jnp
import numpy as np

from .errors import ConfigError, DomainError
from .records import PathRecord

__all__ = [
    "Manifold",
    "Sphere",
    "Hyperbolic",
    "Torus",
    "Euclidean",
    "OrthoFrame",
    "manifold_from_config",
    "metric",
    "parallel_transport_step",
    "curvature_in_frame",
    "riemannian_geodesic",
    "riemannian_distance",
    "polar_orthonormalize",
    "rk4_step",
]

POINT_TOL = 1e-10


def rk4_step(rhs, y, h):
    """One classical Runge-Kutta step for an autonomous pytree ODE."""
    add = lambda a, k, s: jax.tree_util.tree_map(lambda u, w: u + s * w, a, k)
    k1 = rhs(y)
    k2 = rhs(add(y, k1, h / 2))
    k3 = rhs(add(y, k2, h / 2))
    k4 = rhs(add(y, k3, h))
    return jax.tree_util.tree_map(
        lambda u, a, b, c, d: u + h / 6 * (a + 2 * b + 2 * c + d), y, k1, k2, k3, k4
    )


def _inv_sqrt_near_identity(G):
    # Truncated binomial series; G = I + O(drift) so the error is O(drift^4).
    # Polynomial (not eigh) so it stays differentiable at repeated eigenvalues.
    E = G - jnp.eye(G.shape[-1], dtype=G.dtype)
    E2 = E @ E
    return jnp.eye(G.shape[-1], dtype=G.dtype) - 0.5 * E + 0.375 * E2 - 0.3125 * E2 @ E


def _safe_norm2(w2):
    return jnp.where(w2 > 0, w2, 1.0)


def _sinc(theta2):
    # sin(t)/t as a function of t^2, smooth at 0
    th = jnp.sqrt(_safe_norm2(theta2))
    return jnp.where(theta2 > 1e-12, jnp.sin(th) / th, 1.0 - theta2 / 6.0)


def _cosm1(theta2):
    # (cos t - 1)/t^2
    th = jnp.sqrt(_safe_norm2(theta2))
    return jnp.where(theta2 > 1e-8, (jnp.cos(th) - 1.0) / _safe_norm2(theta2), -0.5 + theta2 / 24.0)


def _sinhc(theta2):
    th = jnp.sqrt(_safe_norm2(theta2))
    return jnp.where(theta2 > 1e-12, jnp.sinh(th) / th, 1.0 + theta2 / 6.0)


def _coshm1(theta2):
    th = jnp.sqrt(_safe_norm2(theta2))
    return jnp.where(theta2 > 1e-8, (jnp.cosh(th) - 1.0) / _safe_norm2(theta2), 0.5 + theta2 / 24.0)


class Manifold:
    """Common interface of the built-in manifolds.

    Subclasses provide the ambient metric signature, projections onto the
    manifold and its tangent spaces, the parallel-transport vector field and
    the Gaussian/sectional curvature.  Everything else is derived here.
    """

    dim: int
    ambient_dim: int
    kind: str = "abstract"

    # --- ambient metric -------------------------------------------------
    @property
    def signature(self):
        return jnp.ones(self.ambient_dim)

    def inner(self, u, w):
        sig = self.signature.reshape((-1,) + (1,) * (max(jnp.ndim(u), jnp.ndim(w)) - 1))
        return jnp.sum(u * sig * w, axis=0)

    def gram(self, F, G=None):
        G = F if G is None else G
        return F.T @ (self.signature[:, None] * G)

    def frame_coords(self, F, u):
        """Components of tangent vector ``u`` in the orthonormal frame ``F``."""
        return F.T @ (self.signature * u)

    # --- subclass hooks ---------------------------------------------------
    def project(self, x):
        raise NotImplementedError

    def to_tangent(self, x, u):
        raise NotImplementedError

    def transport_rhs(self, x, xdot, F):
        """Time derivative of a frame ``F`` kept parallel along a curve with velocity ``xdot``."""
        raise NotImplementedError

    def sectional_curvature(self, x):
        raise NotImplementedError

    def residual(self, x):
        """On-manifold defect of an ambient point (numpy)."""
        raise NotImplementedError

    def default_point(self):
        raise NotImplementedError

    def outward(self, x):
        """Vector completing a tangent frame to a positively oriented ambient basis."""
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    # --- derived geometry -------------------------------------------------
    def geodesic_accel(self, x, xdot):
        return self.transport_rhs(x, xdot, xdot[:, None])[:, 0]

    def orthonormalize(self, x, F):
        """Project ``F`` to the tangent space at ``x`` and restore orthonormality (polar factor)."""
        F = self.to_tangent(x, F)
        return F @ _inv_sqrt_near_identity(self.gram(F))

    def curvature_operator(self, x, X, Y, Z):
        """R(X, Y)Z for the Levi-Civita connection.

        All built-in manifolds are either surfaces or of constant curvature,
        so R(X,Y)Z = K(x) (<Y,Z> X - <X,Z> Y) holds exactly.
        """
        k = self.sectional_curvature(x)
        return k * (self.inner(Y, Z) * X - self.inner(X, Z) * Y)

    def curvature_in_frame(self, x, F):
        """R_ijkl = <f_l, R(f_i, f_j) f_k> for the columns of ``F``."""
        k = self.sectional_curvature(x)
        G = self.gram(F)
        return k * (jnp.einsum("jk,il->ijkl", G, G) - jnp.einsum("ik,jl->ijkl", G, G))

    def exp_transport(self, x, F, w):
        """Follow the geodesic with initial velocity ``w`` for unit time, transporting ``F``.

        Generic fallback: RK4 on the geodesic-plus-transport system.
        """
        n_sub = 16
        h = 1.0 / n_sub

        def rhs(s):
            p, pd, G = s
            acc = self.transport_rhs(p, pd, jnp.concatenate([pd[:, None], G], axis=1))
            return pd, acc[:, 0], acc[:, 1:]

        def body(_, s):
            p, pd, G = rk4_step(rhs, s, h)
            p = self.project(p)
            return p, self.to_tangent(p, pd), self.to_tangent(p, G)

        p, _, G = jax.lax.fori_loop(0, n_sub, body, (x, w, F))
        return p, G

    def exp(self, x, w):
        return self.exp_transport(x, jnp.zeros((self.ambient_dim, 0)), w)[0]

    def log(self, x, y):
        raise NotImplementedError

    def log_local(self, x, y):
        """Inverse exponential for nearby points (anti-development steps)."""
        return self.log(x, y)

    def dist(self, x, y):
        raise NotImplementedError

    # --- numpy-side helpers -------------------------------------------------
    def check_point(self, x, tol=POINT_TOL):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.ambient_dim,):
            raise DomainError(f"expected a point of shape ({self.ambient_dim},), got {x.shape}")
        res = float(self.residual(x))
        if not np.isfinite(res) or res > tol:
            raise DomainError(f"point is off the manifold (residual {res:.3e} > {tol:.0e})")
        return x

    def check_tangent(self, x, u, tol=1e-8):
        u = np.asarray(u, dtype=float)
        defect = np.max(np.abs(np.asarray(self.to_tangent(jnp.asarray(x), jnp.asarray(u))) - u), initial=0.0)
        if defect > tol * max(1.0, float(np.max(np.abs(u), initial=0.0))):
            raise DomainError(f"vector is not tangent at the base point (defect {defect:.3e})")
        return u

    def tangent_basis(self, x):
        """Positively oriented orthonormal basis of T_xM (numpy ``(n, d)``)."""
        x = np.asarray(self.project(jnp.asarray(x, dtype=float)))
        sig = np.asarray(self.signature)
        cols = []
        for e in np.eye(self.ambient_dim):
            u = np.asarray(self.to_tangent(jnp.asarray(x), jnp.asarray(e)))
            for c in cols:
                u = u - np.sum(c * sig * u) * c
            nrm2 = np.sum(u * sig * u)
            if nrm2 > 1e-6:
                cols.append(u / math.sqrt(nrm2))
            if len(cols) == self.dim:
                break
        F = np.stack(cols, axis=1)
        out = self.outward(x)
        if out is not None and np.linalg.det(np.column_stack([F, out])) < 0:
            F[:, -1] *= -1
        return F

    def random_point(self, rng):
        raise NotImplementedError

    def spec_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class Sphere(Manifold):
    """Round sphere of radius ``r`` in R^{d+1}; curvature 1/r^2."""

    r: float = 1.0
    d: int = 2
    kind = "sphere"

    def __post_init__(self):
        if not self.r > 0:
            raise DomainError("sphere radius must be positive")
        if self.d < 1:
            raise DomainError("sphere dimension must be >= 1")

    @property
    def dim(self):
        return self.d

    @property
    def ambient_dim(self):
        return self.d + 1

    def project(self, x):
        return self.r * x / jnp.sqrt(jnp.sum(x * x))

    def to_tangent(self, x, u):
        return u - jnp.outer(x, x @ u) / self.r**2 if u.ndim == 2 else u - x * (x @ u) / self.r**2

    def transport_rhs(self, x, xdot, F):
        return -jnp.outer(x, xdot @ F) / self.r**2

    def sectional_curvature(self, x):
        return 1.0 / self.r**2

    def residual(self, x):
        return abs(float(np.dot(x, x)) - self.r**2)

    def default_point(self):
        return np.eye(self.ambient_dim)[-1] * self.r

    def outward(self, x):
        return np.asarray(x) / self.r

    def exp_transport(self, x, F, w):
        t2 = jnp.sum(w * w) / self.r**2
        s, cm1 = _sinc(t2), _cosm1(t2)
        y = (1.0 + cm1 * t2) * x + s * w
        coef = (w @ F) / self.r**2
        G = F + jnp.outer(cm1 * w - s * x, coef)
        return y, G

    def log(self, x, y):
        u = y - x * (x @ y) / self.r**2
        nu = jnp.sqrt(_safe_norm2(jnp.sum(u * u)))
        d = self.dist(x, y)
        return jnp.where(jnp.sum(u * u) > 0, d / nu, 0.0) * u

    def dist(self, x, y):
        u = y - x * (x @ y) / self.r**2
        return self.r * jnp.arctan2(jnp.sqrt(jnp.sum(u * u)), (x @ y) / self.r)

    def random_point(self, rng):
        z = rng.standard_normal(self.ambient_dim)
        return self.r * z / np.linalg.norm(z)

    def to_dict(self):
        out = {"kind": "sphere", "r": float(self.r)}
        if self.d != 2:
            out["d"] = int(self.d)
        return out


@dataclass(frozen=True)
class Hyperbolic(Manifold):
    """Hyperboloid model {<x,x>_L = -r^2, x_last > 0} in Minkowski space; curvature -1/r^2."""

    r: float = 1.0
    d: int = 2
    kind = "hyperbolic"

    def __post_init__(self):
        if not self.r > 0:
            raise DomainError("hyperbolic radius must be positive")
        if self.d < 1:
            raise DomainError("hyperbolic dimension must be >= 1")

    @property
    def dim(self):
        return self.d

    @property
    def ambient_dim(self):
        return self.d + 1

    @property
    def signature(self):
        return jnp.concatenate([jnp.ones(self.d), -jnp.ones(1)])

    def project(self, x):
        return self.r * x / jnp.sqrt(-self.inner(x, x))

    def to_tangent(self, x, u):
        xu = self.inner(x[:, None], u) if u.ndim == 2 else self.inner(x, u)
        return u + (jnp.outer(x, xu) if u.ndim == 2 else x * xu) / self.r**2

    def transport_rhs(self, x, xdot, F):
        return jnp.outer(x, self.inner(xdot[:, None], F)) / self.r**2

    def sectional_curvature(self, x):
        return -1.0 / self.r**2

    def residual(self, x):
        x = np.asarray(x)
        q = float(np.dot(x[:-1], x[:-1]) - x[-1] ** 2)
        return abs(q + self.r**2) / max(1.0, float(np.dot(x, x))) if x[-1] > 0 else float("inf")

    def default_point(self):
        return np.eye(self.ambient_dim)[-1] * self.r

    def outward(self, x):
        return np.asarray(x) / self.r

    def exp_transport(self, x, F, w):
        t2 = self.inner(w, w) / self.r**2
        s, cm1 = _sinhc(t2), _coshm1(t2)
        y = (1.0 + cm1 * t2) * x + s * w
        coef = self.inner(w[:, None], F) / self.r**2
        G = F + jnp.outer(cm1 * w + s * x, coef)
        return y, G

    def log(self, x, y):
        u = y + x * self.inner(x, y) / self.r**2
        nu2 = self.inner(u, u)
        d = self.dist(x, y)
        return jnp.where(nu2 > 0, d / jnp.sqrt(_safe_norm2(nu2)), 0.0) * u

    def dist(self, x, y):
        diff = x - y
        q = jnp.maximum(self.inner(diff, diff), 0.0)
        return 2.0 * self.r * jnp.arcsinh(jnp.sqrt(q) / (2.0 * self.r))

    def random_point(self, rng, scale=1.0):
        z = rng.standard_normal(self.d) * scale
        return np.asarray(self.exp(jnp.asarray(self.default_point()), jnp.concatenate([jnp.asarray(z), jnp.zeros(1)])))

    def to_poincare(self, x):
        """Map hyperboloid points (..., d+1) to the Poincare ball of radius r (plotting only)."""
        x = np.asarray(x, dtype=float)
        return self.r * x[..., :-1] / (self.r + x[..., -1:])

    def to_dict(self):
        out = {"kind": "hyperbolic", "r": float(self.r)}
        if self.d != 2:
            out["d"] = int(self.d)
        return out


TORUS_MAX_SUBSTEP = 0.05


@dataclass(frozen=True)
class Torus(Manifold):
    """Torus of revolution in R^3 with centre-line radius ``R`` and tube radius ``a``."""

    R: float = 2.0
    a: float = 1.0
    kind = "torus"
    dim = 2
    ambient_dim = 3

    def __post_init__(self):
        if not (self.R > 0 and self.a > 0):
            raise DomainError("torus radii must be positive")
        if not self.a < self.R:
            raise DomainError("torus requires a < R")

    def _centre(self, x):
        rho = jnp.sqrt(x[0] ** 2 + x[1] ** 2)
        c = jnp.array([x[0] / rho, x[1] / rho, 0.0])
        return rho, c

    def normal(self, x):
        _, c = self._centre(x)
        return (x - self.R * c) / self.a

    def project(self, x):
        _, c = self._centre(x)
        q = x - self.R * c
        return self.R * c + self.a * q / jnp.sqrt(jnp.sum(q * q))

    def to_tangent(self, x, u):
        n = self.normal(x)
        return u - jnp.outer(n, n @ u) if u.ndim == 2 else u - n * (n @ u)

    def _shape(self, x, w, F):
        # <f, dn(w)> for each column f of F; dn is the differential of the unit normal
        rho, c = self._centre(x)
        wh = w.at[2].set(0.0)
        Fh = F.at[2].set(0.0)
        fdc = (wh @ Fh - (c @ F) * (c @ w)) / rho
        return (w @ F - self.R * fdc) / self.a

    def transport_rhs(self, x, xdot, F):
        return -jnp.outer(self.normal(x), self._shape(x, xdot, F))

    def sectional_curvature(self, x):
        rho, _ = self._centre(x)
        return (rho - self.R) / (self.a**2 * rho)

    def residual(self, x):
        x = np.asarray(x)
        rho = math.hypot(x[0], x[1])
        return abs((rho - self.R) ** 2 + x[2] ** 2 - self.a**2)

    def default_point(self):
        return np.array([self.R + self.a, 0.0, 0.0])

    def outward(self, x):
        return np.asarray(self.normal(jnp.asarray(x)))

    def embed(self, theta, phi):
        """Embedding map; ``theta`` is the azimuth about the z-axis, ``phi`` the tube angle."""
        rr = self.R + self.a * np.cos(phi)
        return np.array([rr * np.cos(theta), rr * np.sin(theta), self.a * np.sin(phi)])

    def _shoot_log(self, x, y, c0, n_iter):
        # Damped Gauss-Newton on the exponential map in a tangent basis at x.
        B = jnp.stack(_torus_basis(self, x), axis=1)

        def resid(c):
            return self.exp(x, B @ c) - y

        def body(state):
            k, c, _ = state
            J = jax.jacfwd(resid)(c)
            rv = resid(c)
            step = jnp.linalg.solve(J.T @ J + 1e-14 * jnp.eye(2), J.T @ rv)
            nrm = jnp.sqrt(jnp.sum(step * step))
            return k + 1, c - step * jnp.minimum(1.0, 0.5 * self.a / jnp.maximum(nrm, 1e-300)), nrm

        def cond(state):
            k, _, nrm = state
            return (k < n_iter) & (nrm > 1e-14 * (1.0 + self.R))

        _, c, _ = jax.lax.while_loop(cond, body, (0, c0, jnp.inf))
        r = resid(c)
        return B @ c, jnp.sum(r * r)

    def log_local(self, x, y, n_iter=30):
        """Geodesic shooting from the chordal guess; adequate for nearby points."""
        B = jnp.stack(_torus_basis(self, x), axis=1)
        return self._shoot_log(x, y, B.T @ (y - x), n_iter)[0]

    def _angles(self, x):
        rho, _ = self._centre(x)
        return jnp.arctan2(x[1], x[0]), jnp.arctan2(x[2], rho - self.R)

    def log(self, x, y, n_iter=60):
        """Shortest of the geodesics shot from the nine lifted coordinate differences.

        Candidate initial velocities are (rho dtheta, a dphi) for the angle
        differences wrapped by -2pi, 0, +2pi; the converged candidate of
        minimal length wins.  This is a multi-start search, not a cut-locus
        computation, so it can miss the global minimiser in rare cases.
        """
        tx, px = self._angles(x)
        ty, py = self._angles(y)
        wrap = lambda a: jnp.arctan2(jnp.sin(a), jnp.cos(a))
        dt, dp = wrap(ty - tx), wrap(py - px)
        rho, _ = self._centre(x)
        rho_y, _ = self._centre(y)
        shifts = 2.0 * jnp.pi * jnp.array([-1.0, 0.0, 1.0])
        DT, DP = jnp.meshgrid(dt + shifts, dp + shifts, indexing="ij")
        # mean azimuthal radius along the way is a better scale than rho at x alone
        C0 = jnp.stack([0.5 * (rho + rho_y) * DT.ravel(), self.a * DP.ravel()], axis=1)
        W, res = jax.vmap(lambda c: self._shoot_log(x, y, c, n_iter))(C0)
        lengths = jnp.sqrt(jnp.sum(W * W, axis=1))
        ok = res <= 1e-16 * (1.0 + self.R) ** 2
        key = jnp.where(ok, lengths, jnp.inf)
        best = jnp.where(jnp.any(ok), jnp.argmin(key), jnp.argmin(res))
        return W[best]

    def exp_transport(self, x, F, w):
        return _torus_exp_transport(self, x, F, w)

    def _exp_transport_impl(self, x, F, w):
        # Long geodesics: sub-step proportionally to the length (forward-mode
        # differentiable; the trip count is data dependent).
        n_sub = jnp.maximum(4, jnp.ceil(jnp.sqrt(jnp.sum(w * w)) / TORUS_MAX_SUBSTEP)).astype(jnp.int32)
        h = 1.0 / n_sub

        def rhs(s):
            p, pd, G = s
            acc = self.transport_rhs(p, pd, jnp.concatenate([pd[:, None], G], axis=1))
            return pd, acc[:, 0], acc[:, 1:]

        def body(_, s):
            p, pd, G = rk4_step(rhs, s, h)
            p = self.project(p)
            return p, self.to_tangent(p, pd), self.to_tangent(p, G)

        p, _, G = jax.lax.fori_loop(0, n_sub, body, (x, w, F))
        return p, G

    def dist(self, x, y):
        # shortest geodesic found shooting from either end
        w1, w2 = _torus_log(self, x, y), _torus_log(self, y, x)
        return jnp.minimum(jnp.sqrt(jnp.sum(w1 * w1)), jnp.sqrt(jnp.sum(w2 * w2)))

    def random_point(self, rng):
        th, ph = rng.uniform(0, 2 * np.pi, size=2)
        return self.embed(th, ph)

    def to_dict(self):
        return {"kind": "torus", "R": float(self.R), "a": float(self.a)}


@partial(jax.jit, static_argnums=0)
def _torus_log(m, x, y):
    return m.log(x, y)


# compiled once per torus; eager calls would re-trace the loop every time
@partial(jax.jit, static_argnums=0)
def _torus_exp_transport(m, x, F, w):
    return m._exp_transport_impl(x, F, w)


def _torus_basis(m, x):
    rho, c = m._centre(x)
    e_th = jnp.array([-c[1], c[0], 0.0])
    n = m.normal(x)
    e_ph = jnp.cross(n, e_th)
    return e_th, e_ph


@dataclass(frozen=True)
class Euclidean(Manifold):
    """Flat R^d."""

    d: int = 2
    kind = "euclidean"

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("dimension must be >= 1")

    @property
    def dim(self):
        return self.d

    @property
    def ambient_dim(self):
        return self.d

    def project(self, x):
        return x

    def to_tangent(self, x, u):
        return u

    def transport_rhs(self, x, xdot, F):
        return jnp.zeros_like(F)

    def sectional_curvature(self, x):
        return 0.0

    def residual(self, x):
        return 0.0 if np.all(np.isfinite(x)) else float("inf")

    def default_point(self):
        return np.zeros(self.d)

    def outward(self, x):
        return None

    def exp_transport(self, x, F, w):
        return x + w, F

    def log(self, x, y):
        return y - x

    def dist(self, x, y):
        return jnp.sqrt(jnp.sum((y - x) ** 2))

    def random_point(self, rng):
        return rng.standard_normal(self.d)

    def to_dict(self):
        return {"kind": "euclidean", "d": int(self.d)}


@dataclass(frozen=True, eq=False)
class OrthoFrame:
    """Orthonormal frame: ``vectors[:, i]`` is f_i, tangent at ``base``."""

    base: np.ndarray
    vectors: np.ndarray

    @classmethod
    def checked(cls, m: Manifold, base, vectors, tol=1e-10):
        base = m.check_point(base)
        F = np.asarray(vectors, dtype=float)
        if F.shape != (m.ambient_dim, m.dim):
            raise DomainError(f"frame must have shape ({m.ambient_dim}, {m.dim}), got {F.shape}")
        for i in range(m.dim):
            m.check_tangent(base, F[:, i], tol=tol)
        G = np.asarray(m.gram(jnp.asarray(F)))
        if np.max(np.abs(G - np.eye(m.dim))) > tol:
            raise DomainError("frame is not orthonormal")
        return cls(base, F)

    @classmethod
    def default(cls, m: Manifold, base=None):
        base = m.default_point() if base is None else m.check_point(base)
        return cls(base, m.tangent_basis(base))


def manifold_from_config(cfg) -> Manifold:
    """Build a manifold from ``{"kind": ..., "r"/"R"/"a"/"d": ...}``."""
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ConfigError("manifold config must be an object with a 'kind' key")
    allowed = {
        "sphere": {"kind", "r", "d"},
        "hyperbolic": {"kind", "r", "d"},
        "torus": {"kind", "R", "a"},
        "euclidean": {"kind", "d"},
    }
    kind = cfg["kind"]
    if kind not in allowed:
        raise ConfigError(f"unknown manifold kind {kind!r}")
    extra = set(cfg) - allowed[kind]
    if extra:
        raise ConfigError(f"unknown keys for {kind}: {sorted(extra)}")
    try:
        if kind == "sphere":
            return Sphere(float(cfg.get("r", 1.0)), int(cfg.get("d", 2)))
        if kind == "hyperbolic":
            return Hyperbolic(float(cfg.get("r", 1.0)), int(cfg.get("d", 2)))
        if kind == "torus":
            return Torus(float(cfg.get("R", 2.0)), float(cfg.get("a", 1.0)))
        return Euclidean(int(cfg.get("d", 2)))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def metric(m: Manifold, p, u, v):
    """<u, v>_g at ``p``."""
    p = m.check_point(p)
    u = m.check_tangent(p, u)
    v = m.check_tangent(p, v)
    return float(m.inner(jnp.asarray(u), jnp.asarray(v)))


@partial(jax.jit, static_argnums=0)
def _transport_step(m, p, F, w):
    q, G = m.exp_transport(p, F, w)
    q = m.project(q)
    return q, m.orthonormalize(q, G)


def parallel_transport_step(m: Manifold, p, F, v, h):
    """Move from ``p`` along the geodesic with velocity ``v`` for time ``h``; transport ``F``.

    The frame is re-orthonormalised (polar factor) after the step.
    """
    if not h > 0:
        raise DomainError("step h must be positive")
    q, G = _transport_step(m, jnp.asarray(p, dtype=float), jnp.asarray(F, dtype=float), h * jnp.asarray(v, dtype=float))
    return np.asarray(q), np.asarray(G)


def curvature_in_frame(m: Manifold, F: OrthoFrame | tuple):
    """Full d^4 array R_ijkl = <f_l, R(f_i, f_j) f_k> for the frame."""
    base, vecs = (F.base, F.vectors) if isinstance(F, OrthoFrame) else F
    return np.asarray(m.curvature_in_frame(jnp.asarray(base, dtype=float), jnp.asarray(vecs, dtype=float)))


@partial(jax.jit, static_argnums=(0, 4))
def _geodesic_scan(m, x0, w0, F0, n_steps, T):
    h = T / n_steps

    def rhs(s):
        x, xd, F = s
        acc = m.transport_rhs(x, xd, jnp.concatenate([xd[:, None], F], axis=1))
        return xd, acc[:, 0], acc[:, 1:]

    def step(s, _):
        x, xd, F = rk4_step(rhs, s, h)
        x = m.project(x)
        F = m.orthonormalize(x, F)
        xd = m.to_tangent(x, xd)
        return (x, xd, F), (x, xd, F)

    _, (xs, xds, Fs) = jax.lax.scan(step, (x0, w0, F0), None, length=n_steps)
    cat = lambda a, b: jnp.concatenate([a[None], b], axis=0)
    return cat(x0, xs), cat(w0, xds), cat(F0, Fs)


def riemannian_geodesic(m: Manifold, p, v, T=1.0, n_steps=1000, frame=None) -> PathRecord:
    """Integrate the geodesic from ``p`` with initial velocity ``v`` (ambient tangent vector)."""
    p = m.check_point(p)
    v = m.check_tangent(p, v)
    F0 = m.tangent_basis(p) if frame is None else np.asarray(frame, dtype=float)
    xs, xds, Fs = _geodesic_scan(m, jnp.asarray(p), jnp.asarray(v), jnp.asarray(F0), int(n_steps), float(T))
    xs, xds, Fs = np.asarray(xs), np.asarray(xds), np.asarray(Fs)
    sig = np.asarray(m.signature)
    comps = np.einsum("tnd,tn->td", Fs, sig * xds)
    speed = np.sqrt(np.einsum("tn,tn->t", xds, sig * xds))
    t = np.linspace(0.0, T, n_steps + 1)
    return PathRecord(t=t, points=xs, frames=Fs, v=comps, speed=speed, manifold=m)


def riemannian_distance(m: Manifold, p, q) -> float:
    p = m.check_point(p)
    q = m.check_point(q)
    return float(m.dist(jnp.asarray(p), jnp.asarray(q)))


def polar_orthonormalize(m: Manifold, p, F):
    return np.asarray(m.orthonormalize(jnp.asarray(p, dtype=float), jnp.asarray(F, dtype=float)))
