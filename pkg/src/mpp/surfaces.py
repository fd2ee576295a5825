"""Most probable paths on surfaces.

In dimension two the MPP equations reduce to a pendulum for the angle
theta of the normalised velocity v = (lambda_1 cos theta, lambda_2 sin theta).
On constant curvature the pendulum is solved by Jacobi elliptic functions and
the path itself is obtained by integrating in SO(3) or SO(2,1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .development import CovarianceSpec
from .elliptic import elliptic_K, jacobi_sncndn
from .errors import DomainError, NumericalError, UnsupportedManifoldError
from .geometry import Hyperbolic, Manifold, Sphere
from .records import PathRecord

__all__ = [
    "PendulumSolution",
    "pendulum_mpp",
    "pendulum_energy",
    "constant_curvature",
    "mpp_constant_curvature",
    "bending_statistic",
    "SEPARATRIX_GUARD",
]

SEPARATRIX_GUARD = 1e-8
GROUP_TOL = 1e-9


@dataclass(frozen=True)
class PendulumSolution:
    """Velocity of a unit-speed (c = 1) MPP on a constant-curvature surface.

    ``v(t)`` gives the eigenframe components, ``chi(t)`` the coefficient
    chi_12 and ``theta(t)`` the angle with v = (l1 cos theta, l2 sin theta).
    ``method`` is ``"elliptic"`` for the closed form and ``"ode"`` when the
    modulus is too close to the separatrix and the reduced system is
    integrated instead.
    """

    kappa: float
    lambdas: tuple
    psi0: float
    T: float
    branch: int
    k: float
    K: float
    alpha: float
    method: str = "elliptic"
    _ode: object = None

    @property
    def period(self):
        """Period 4K/alpha of theta (infinite for the isotropic case)."""
        return math.inf if self.alpha == 0 else 4.0 * self.K / self.alpha

    def _u(self, t):
        return self.K + self.alpha * (self.T - np.asarray(t, dtype=float))

    def theta(self, t):
        if self.method == "ode":
            return self._ode(np.asarray(t, dtype=float))[0]
        sn, _, dn = jacobi_sncndn(self._u(t), self.k)
        th = np.arctan2(self.k * sn, dn)
        if self.kappa < 0:
            th = 0.5 * np.pi - th
        return th if self.branch > 0 else self._flip(th)

    def _flip(self, th):
        # the second family: v1 -> -v1 (positive curvature) or v2 -> -v2 (negative)
        return np.pi - th if self.kappa > 0 else -th

    def h(self, t):
        """h = theta' / kappa (with c = 1), vanishing at t = T."""
        return self.theta_dot(t) / self.kappa

    def theta_dot(self, t):
        if self.method == "ode":
            return self.kappa * self._ode(np.asarray(t, dtype=float))[1]
        _, cn, _ = jacobi_sncndn(self._u(t), self.k)
        td = -self.alpha * self.k * cn
        if self.kappa < 0:
            td = -td
        return td if self.branch > 0 else -td

    def v(self, t):
        l1, l2 = self.lambdas
        th = self.theta(t)
        return np.stack([l1 * np.cos(th), l2 * np.sin(th)], axis=-1)

    def vdot(self, t):
        l1, l2 = self.lambdas
        th, td = self.theta(t), self.theta_dot(t)
        return np.stack([-l1 * np.sin(th) * td, l2 * np.cos(th) * td], axis=-1)

    def chi(self, t):
        """chi_12(t) = h / (l1 l2)."""
        l1, l2 = self.lambdas
        return self.h(t) / (l1 * l2)


def pendulum_energy(sol: PendulumSolution, t):
    """(2 theta')^2 / (2 alpha^2) -+ cos(2 theta); constant along solutions."""
    th, td = sol.theta(t), sol.theta_dot(t)
    s = 1.0 if sol.kappa > 0 else -1.0
    return 2.0 * td**2 / sol.alpha**2 - s * np.cos(2.0 * th)


def pendulum_mpp(kappa, lambdas, psi0, T, branch=1) -> PendulumSolution:
    """Closed-form unit-speed MPP velocity on a surface of constant curvature ``kappa``.

    ``psi0`` fixes the terminal angle: theta(T) = psi0 / 2 for kappa > 0 and
    theta(T) = pi/2 - psi0/2 for kappa < 0, with modulus k = sin(psi0 / 2).
    ``branch`` (+1 or -1) selects the sign of the dn-component.
    """
    kappa = float(kappa)
    l1, l2 = (float(v) for v in lambdas)
    psi0, T = float(psi0), float(T)
    if kappa == 0 or not math.isfinite(kappa):
        raise DomainError("curvature must be finite and non-zero")
    if not (l1 >= l2 > 0):
        raise DomainError("need lambda_1 >= lambda_2 > 0")
    if not abs(psi0) < math.pi:
        raise DomainError("psi0 must lie in (-pi, pi)")
    if branch not in (1, -1):
        raise DomainError("branch must be +1 or -1")
    if not T >= 0:
        raise DomainError("T must be non-negative")
    alpha = math.sqrt((l1 * l1 - l2 * l2) * abs(kappa))
    k = math.sin(0.5 * psi0)
    if abs(k) <= 1.0 - SEPARATRIX_GUARD:
        return PendulumSolution(kappa, (l1, l2), psi0, T, branch, k, elliptic_K(k), alpha)
    return _pendulum_ode(kappa, (l1, l2), psi0, T, branch, k, alpha)


def _pendulum_ode(kappa, lambdas, psi0, T, branch, k, alpha):
    # reduced system theta' = kappa h, h' = -(l1^2 - l2^2)/2 sin(2 theta), solved backward from T
    l1, l2 = lambdas
    th_T = 0.5 * psi0 if kappa > 0 else 0.5 * math.pi - 0.5 * psi0
    if branch < 0:
        th_T = math.pi - th_T if kappa > 0 else -th_T
    rhs = lambda t, y: [kappa * y[1], -0.5 * (l1 * l1 - l2 * l2) * math.sin(2.0 * y[0])]
    if T > 0:
        sol = solve_ivp(rhs, (T, 0.0), [th_T, 0.0], method="DOP853", rtol=1e-12, atol=1e-13, dense_output=True)
        if not sol.success:
            raise NumericalError(f"pendulum integration failed: {sol.message}")
        dense = sol.sol
    else:
        dense = lambda t: np.array([np.full_like(t, th_T), np.zeros_like(t)])
    return PendulumSolution(kappa, lambdas, psi0, T, branch, k, math.inf, alpha, "ode", dense)


def constant_curvature(m: Manifold):
    """(kappa, radius, sign) of a supported constant-curvature surface."""
    if isinstance(m, Sphere) and m.d == 2:
        return 1.0 / m.r**2, m.r, 1.0
    if isinstance(m, Hyperbolic) and m.d == 2:
        return -1.0 / m.r**2, m.r, -1.0
    raise UnsupportedManifoldError(f"closed-form MPPs need S^2(r) or H^2(r), got {type(m).__name__}")


def _group_residual(q, J):
    return float(np.max(np.abs(q.T @ J @ q - J)))


def _reproject(q, J):
    # q <- q M^{-1/2} with M = J q^T J q; M is within rounding of the identity
    X = J @ q.T @ J @ q - np.eye(3)
    return q @ (np.eye(3) - 0.5 * X + 0.375 * X @ X - 0.3125 * X @ X @ X)


def mpp_constant_curvature(m: Manifold, cov: CovarianceSpec, psi0, branch_sign=1, T=1.0, n_steps=1000) -> PathRecord:
    """Unit-speed MPP on S^2(r) or H^2(r) from the closed-form velocity.

    The path is gamma(t) = r E q(t) e_3 with E = (f_1 f_2 x/r) and q solving
    q^{-1} q' = (1/r) [[0, 0, v1], [0, 0, v2], [-+v1, -+v2, 0]] in SO(3)
    (sphere) or SO(2,1) (hyperboloid), integrated by RK4 with projection back
    onto the group after each step.
    """
    kappa, r, s = constant_curvature(m)
    if n_steps < 1:
        raise DomainError("n_steps must be >= 1")
    sol = pendulum_mpp(kappa, cov.lambdas, psi0, T, branch_sign)
    J = np.diag([1.0, 1.0, s])
    E = np.column_stack([cov.vectors, cov.base / r])

    def omega(v):
        W = np.zeros((3, 3))
        W[0, 2], W[1, 2] = v[0] / r, v[1] / r
        W[2, 0], W[2, 1] = -s * v[0] / r, -s * v[1] / r
        return W

    t = np.linspace(0.0, T, n_steps + 1)
    h = T / n_steps
    vs = sol.v(np.concatenate([t, t[:-1] + 0.5 * h]))
    v_grid, v_mid = vs[: n_steps + 1], vs[n_steps + 1:]
    q = np.eye(3)
    qs = [q]
    worst = 0.0
    for i in range(n_steps):
        W0, Wm, W1 = omega(v_grid[i]), omega(v_mid[i]), omega(v_grid[i + 1])
        k1 = q @ W0
        k2 = (q + 0.5 * h * k1) @ Wm
        k3 = (q + 0.5 * h * k2) @ Wm
        k4 = (q + h * k3) @ W1
        q = q + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        q = _reproject(q, J)
        worst = max(worst, _group_residual(q, J))
        qs.append(q)
    if worst > GROUP_TOL:
        raise NumericalError(f"group constraint residual {worst:.2e} exceeds {GROUP_TOL:.0e}")
    qs = np.array(qs)
    Eq = np.einsum("ij,tjk->tik", E, qs)
    points = r * Eq[:, :, 2]
    frames = Eq[:, :, :2]
    l1, l2 = cov.lambdas
    c = np.sqrt(v_grid[:, 0] ** 2 / l1**2 + v_grid[:, 1] ** 2 / l2**2)
    return PathRecord(
        t=t, points=points, frames=frames, v=v_grid, chi=sol.chi(t)[:, None], c=c,
        energy=0.5 * t, speed=np.linalg.norm(v_grid, axis=1), manifold=m,
        meta={"group_residual": worst, "method": sol.method, "k": sol.k, "alpha": sol.alpha},
    )


def bending_statistic(m: Manifold, cov: CovarianceSpec, y, path: PathRecord | None = None, **shoot_kw):
    """Signed area between the MPP from (x, Sigma) to ``y`` and the geodesic x -> y.

    Both curves are mapped to normal coordinates at x (eigenframe components
    of log_x), where the geodesic is the chord from 0 to log_x(y).  The area is
    positive when the MPP lies on the side of the chord facing the f_1 axis.
    Pass ``path`` to reuse an already computed MPP.
    """
    if m.dim != 2:
        raise UnsupportedManifoldError("bending statistic is defined for surfaces")
    import jax.numpy as jnp

    x = cov.base
    y = m.check_point(y)
    Y = np.asarray(m.frame_coords(jnp.asarray(cov.vectors), m.log(jnp.asarray(x), jnp.asarray(y))))
    L = float(np.linalg.norm(Y))
    if L == 0:
        return 0.0
    if path is None:
        from .shooting import ShootingProblem, shoot

        path = shoot(ShootingProblem(m, cov, y, **shoot_kw)).path
    logs = np.array([np.asarray(m.log(jnp.asarray(x), jnp.asarray(p))) for p in path.points])
    P = logs @ (np.asarray(m.signature)[:, None] * cov.vectors)
    u = Y / L
    side = -np.sign(Y[0] * Y[1]) if Y[0] * Y[1] != 0 else 1.0
    n = side * np.array([-u[1], u[0]])
    along, off = P @ u, P @ n
    return float(np.sum(0.5 * (off[1:] + off[:-1]) * np.diff(along)))
