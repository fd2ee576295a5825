"""Deterministic and stochastic development through parallel frames.

A Euclidean path ``b`` is rolled onto the manifold by moving along
``gamma' = f(t) b'`` while the frame ``f`` is parallel transported.  The
stochastic version drives the same construction with Brownian increments
``S dB`` (Stratonovich sense) and samples the anisotropic normal law.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import jax
import jax.numpy as jnp
import numpy as np

from .errors import DomainError, NumericalError
from .geometry import Manifold, OrthoFrame
from .records import PathRecord

__all__ = [
    "CovarianceSpec",
    "EuclideanPath",
    "develop",
    "anti_develop",
    "brownian_increments",
    "sample_anisotropic",
    "develop_with_frame",
    "equivalence_check_prop_YX",
]


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    """Sigma in Sym+ T_xM as an orthonormal eigenframe plus square-root eigenvalues.

    ``frame.vectors[:, i]`` is the eigenvector with eigenvalue ``lambdas[i]**2``;
    lambdas are sorted in descending order.
    """

    frame: OrthoFrame
    lambdas: np.ndarray

    @classmethod
    def create(cls, m: Manifold, base, vectors, lambdas):
        frame = OrthoFrame.checked(m, base, vectors)
        lam = np.asarray(lambdas, dtype=float)
        if lam.shape != (m.dim,):
            raise DomainError(f"need {m.dim} lambdas, got shape {lam.shape}")
        if not np.all(lam > 0) or not np.all(np.isfinite(lam)):
            raise DomainError("lambdas must be finite and strictly positive")
        if np.any(np.diff(lam) > 0):
            raise DomainError("lambdas must be sorted in descending order")
        return cls(frame, lam)

    @classmethod
    def isotropic(cls, m: Manifold, base=None, lam=1.0):
        fr = OrthoFrame.default(m, base)
        return cls(fr, np.full(m.dim, float(lam)))

    @classmethod
    def from_tangent_matrix(cls, m: Manifold, base, sigma, basis=None):
        """Eigendecompose ``sigma`` given in an orthonormal tangent ``basis`` (default: ``tangent_basis``)."""
        base = m.check_point(base)
        basis = m.tangent_basis(base) if basis is None else np.asarray(basis, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        if not np.allclose(sigma, sigma.T, atol=1e-12):
            raise DomainError("sigma must be symmetric")
        w, V = np.linalg.eigh(sigma)
        if w[0] <= 0:
            raise DomainError("sigma must be positive definite")
        order = np.argsort(w)[::-1]
        w, V = w[order], V[:, order]
        if np.linalg.det(V) < 0:
            V[:, -1] *= -1
        return cls.create(m, base, basis @ V, np.sqrt(w))

    @property
    def base(self):
        return self.frame.base

    @property
    def vectors(self):
        return self.frame.vectors

    @property
    def dim(self):
        return len(self.lambdas)

    @property
    def det(self):
        """det_g Sigma = prod lambda_i^2."""
        return float(np.prod(self.lambdas**2))

    def scaled(self, C):
        """The covariance C * Sigma."""
        if not C > 0:
            raise DomainError("scale must be positive")
        return CovarianceSpec(self.frame, self.lambdas * np.sqrt(C))

    def matrix(self, m: Manifold):
        """Sigma as an ambient matrix acting on tangent vectors: sum lambda_i^2 f_i f_i^flat."""
        F = self.vectors
        sig = np.asarray(m.signature)
        return (F * self.lambdas**2) @ (F.T * sig)

    def tangent_matrix(self, basis):
        """Sigma in the coordinates of another orthonormal basis of the same tangent space (Euclidean metric)."""
        Q = basis.T @ self.vectors
        return (Q * self.lambdas**2) @ Q.T


@dataclass(frozen=True, eq=False)
class EuclideanPath:
    """Samples b(t_k) of a path in R^d with b(0) = 0 on a strictly increasing grid."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        b = np.asarray(self.values, dtype=float)
        if b.ndim != 2 or b.shape[0] != t.shape[0]:
            raise DomainError("values must have shape (len(times), d)")
        if np.any(np.diff(t) <= 0):
            raise DomainError("time grid must be strictly increasing")
        if np.max(np.abs(b[0]), initial=0.0) > 1e-14:
            raise DomainError("b(0) must be 0")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", b)

    @classmethod
    def from_function(cls, fun, T, n_steps):
        t = np.linspace(0.0, T, n_steps + 1)
        vals = np.array([fun(s) for s in t], dtype=float)
        return cls(t, vals - vals[0])

    def length(self):
        return float(np.sum(np.linalg.norm(np.diff(self.values, axis=0), axis=1)))


@partial(jax.jit, static_argnums=0)
def _develop_scan(m, x0, F0, db):
    def step(s, inc):
        x, F = s
        y, G = m.exp_transport(x, F, F @ inc)
        y = m.project(y)
        G = m.orthonormalize(y, G)
        return (y, G), (y, G)

    _, (xs, Fs) = jax.lax.scan(step, (x0, F0), db)
    return jnp.concatenate([x0[None], xs]), jnp.concatenate([F0[None], Fs])


def develop(m: Manifold, F0: OrthoFrame, b: EuclideanPath) -> PathRecord:
    """Roll ``b`` onto ``m`` starting at the frame ``F0``.

    ``b`` is treated as piecewise linear, so each grid interval maps to a
    geodesic segment along which the frame is transported exactly.
    """
    if b.values.shape[1] != m.dim:
        raise DomainError(f"path dimension {b.values.shape[1]} does not match manifold dimension {m.dim}")
    db = np.diff(b.values, axis=0)
    xs, Fs = _develop_scan(m, jnp.asarray(F0.base), jnp.asarray(F0.vectors), jnp.asarray(db))
    dt = np.diff(b.times)
    vel = db / dt[:, None]
    vel = np.vstack([vel, vel[-1:]])
    return PathRecord(
        t=b.times.copy(), points=np.asarray(xs), frames=np.asarray(Fs), v=vel,
        speed=np.linalg.norm(vel, axis=1), manifold=m,
    )


@partial(jax.jit, static_argnums=0)
def _anti_develop_scan(m, F0, pts):
    def step(F, pair):
        x, y = pair
        w = m.log_local(x, y)
        inc = m.frame_coords(F, w)
        _, G = m.exp_transport(x, F, w)
        G = m.orthonormalize(y, G)
        return G, (inc, G)

    _, (incs, Fs) = jax.lax.scan(step, F0, (pts[:-1], pts[1:]))
    return incs, jnp.concatenate([F0[None], Fs])


def anti_develop(m: Manifold, F0: OrthoFrame, gamma, times=None, tol=1e-8) -> EuclideanPath:
    """Recover the Euclidean driving path of a sampled manifold path.

    Consecutive samples are joined by minimising geodesics, so
    ``develop(anti_develop(gamma))`` reproduces the samples exactly when the
    sampling is fine enough for those geodesics to be unique.
    """
    if isinstance(gamma, PathRecord):
        pts, times = np.asarray(gamma.points, dtype=float), np.asarray(gamma.t, dtype=float)
    else:
        pts = np.asarray(gamma, dtype=float)
        times = np.arange(len(pts), dtype=float) if times is None else np.asarray(times, dtype=float)
    for p in pts:
        m.check_point(p, tol=tol)
    if np.linalg.norm(pts[0] - F0.base) > tol:
        raise DomainError("path does not start at the frame's base point")
    incs, _ = _anti_develop_scan(m, jnp.asarray(F0.vectors), jnp.asarray(pts))
    b = np.vstack([np.zeros((1, m.dim)), np.cumsum(np.asarray(incs), axis=0)])
    return EuclideanPath(times, b)


# ---------------------------------------------------------------------------
# Stochastic development
# ---------------------------------------------------------------------------

_CHUNK = 8192


def brownian_increments(seed, n_samples, n_steps, d, dt, start=0):
    """Standard Brownian increments, shape ``(n_samples, n_steps, d)``.

    Each sample has its own counter-based stream keyed by (seed, sample index),
    so the result for a given index does not depend on batching.
    """
    key = jax.random.PRNGKey(np.uint64(seed) if seed >= 0 else seed)
    idx = jnp.arange(start, start + n_samples)
    keys = jax.vmap(lambda i: jax.random.fold_in(key, i))(idx)
    z = jax.vmap(lambda k: jax.random.normal(k, (n_steps, d), dtype=jnp.float64))(keys)
    return np.asarray(z) * np.sqrt(dt)


def _heun_step(m, x, U, dx, S_inv, S):
    """Stratonovich-Heun step for dU = H_{dx}(U), renormalised so that U stays in F^S M."""

    def drift(p, V):
        vel = V @ dx
        return vel, m.transport_rhs(p, vel, V)

    k1x, k1F = drift(x, U)
    k2x, k2F = drift(x + k1x, U + k1F)
    y = m.project(x + 0.5 * (k1x + k2x))
    V = U + 0.5 * (k1F + k2F)
    V = m.orthonormalize(y, V @ S_inv) @ S
    return y, V


def _geodesic_step(m, x, U, dx, S_inv, S):
    y, V = m.exp_transport(x, U, U @ dx)
    y = m.project(y)
    return y, m.orthonormalize(y, V @ S_inv) @ S


@partial(jax.jit, static_argnums=(0, 1, 6))
def _rollout(m, scheme, x0, U0, S_inv, S, keep_path, incs):
    stepper = _heun_step if scheme == "heun" else _geodesic_step

    def one(inc_seq):
        def step(s, dx):
            y, V = stepper(m, s[0], s[1], dx, S_inv, S)
            return (y, V), (y if keep_path else None)

        (y, V), path = jax.lax.scan(step, (x0, U0), inc_seq)
        return y, V, path

    return jax.vmap(one)(incs)


def develop_with_frame(m: Manifold, base, U, increments, scheme="heun", keep_path=False):
    """Drive a (not necessarily orthonormal) frame ``U`` with given increments.

    ``increments`` has shape ``(n_samples, n_steps, d)`` and multiplies ``U``:
    the point moves by ``U dB``.  Returns end points (and full paths when
    ``keep_path``).  The frame keeps its initial Gram matrix, as exact
    transport does.
    """
    if scheme not in ("heun", "geodesic"):
        raise ValueError(f"unknown scheme {scheme!r}")
    U = np.asarray(U, dtype=float)
    G = np.asarray(m.gram(jnp.asarray(U)))
    w, V = np.linalg.eigh(G)
    if w[0] <= 0:
        raise DomainError("frame is degenerate")
    S = (V * np.sqrt(w)) @ V.T
    S_inv = (V / np.sqrt(w)) @ V.T
    ends, paths = [], []
    incs = np.asarray(increments, dtype=float)
    for lo in range(0, incs.shape[0], _CHUNK):
        y, _, p = _rollout(m, scheme, jnp.asarray(base, dtype=float), jnp.asarray(U), jnp.asarray(S_inv),
                           jnp.asarray(S), bool(keep_path), jnp.asarray(incs[lo:lo + _CHUNK]))
        ends.append(np.asarray(y))
        if keep_path:
            paths.append(np.asarray(p))
    ends = np.concatenate(ends)
    if not np.all(np.isfinite(ends)):
        raise NumericalError("non-finite sample (explosion on a non-compact manifold?)")
    if keep_path:
        return ends, np.concatenate(paths)
    return ends


def sample_anisotropic(m: Manifold, cov: CovarianceSpec, t=1.0, n_steps=100, n_samples=1, rng_seed=0,
                       increments=None, scheme="heun", return_paths=False):
    """Samples of X_t(Sigma): development of S B_t through the eigenframe.

    With ``increments`` (shape ``(n_samples, n_steps, d)``, standard Brownian
    increments over steps of ``t / n_steps``) the driving noise is supplied
    instead of drawn from ``rng_seed``.
    """
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    if not t > 0:
        raise DomainError("t must be positive")
    d = m.dim
    if increments is None:
        increments = np.concatenate([
            brownian_increments(rng_seed, min(_CHUNK, n_samples - lo), n_steps, d, t / n_steps, start=lo)
            for lo in range(0, n_samples, _CHUNK)
        ])
    incs = np.asarray(increments, dtype=float) * cov.lambdas
    return develop_with_frame(m, cov.base, cov.vectors, incs, scheme=scheme, keep_path=return_paths)


def equivalence_check_prop_YX(m: Manifold, base, U, t=1.0, n_samples=100, seed=0, n_steps=100, scheme="heun"):
    """Max deviation between X_t(u) and hat X_t(S_u, u S_u^{-1}) under shared noise.

    The first process develops B_t through the general frame ``U``; the
    second develops S_u B_t through the orthonormal frame u S_u^{-1}.
    """
    U = np.asarray(U, dtype=float)
    G = np.asarray(m.gram(jnp.asarray(U)))
    w, V = np.linalg.eigh(G)
    S = (V * np.sqrt(w)) @ V.T
    f = U @ ((V / np.sqrt(w)) @ V.T)
    incs = brownian_increments(seed, n_samples, n_steps, m.dim, t / n_steps)
    _, paths_u = develop_with_frame(m, base, U, incs, scheme=scheme, keep_path=True)
    _, paths_f = develop_with_frame(m, base, f, incs @ S.T, scheme=scheme, keep_path=True)
    return float(np.max(np.linalg.norm(paths_u - paths_f, axis=-1)))
