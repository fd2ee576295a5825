"""Solving the MPP boundary-value problem and the anisotropic distance.

Shooting finds (v0, chi0) so that the MPP from (x, Sigma) reaches y at time T
with chi(T) = 0.  The length c T of the minimal solution is the anisotropic
distance; it reduces to the Riemannian distance for Sigma = id and scales as
C^{-1/2} under Sigma -> C Sigma.
"""
import math

import numpy as np

from mpp import Sphere, riemannian_distance
from mpp.development import CovarianceSpec
from mpp.shooting import ShootingProblem, mpp_distance, shoot

m = Sphere(1.0)
x = m.default_point()
y = np.array([0.3, 0.5, math.sqrt(1 - 0.34)])
iso = CovarianceSpec.isotropic(m)
cov = CovarianceSpec.create(m, x, m.tangent_basis(x), [2.0, 1.0])

res = shoot(ShootingProblem(m, cov, y, n_steps=500))
print(f"converged {res.converged} after {res.iterations} iterations, residual {res.residual:.1e}")
print(f"v0 = {res.v0}, chi0 = {res.chi0}, distinct solutions found: {len(res.solutions)}")
print(f"first integral drift along the solution: {res.path.first_integral_drift():.1e}")

print(f"\nRiemannian distance          {riemannian_distance(m, x, y):.10f}")
print(f"MPP distance, Sigma = id      {mpp_distance(m, iso, y, n_steps=500, n_starts=1):.10f}")
d = mpp_distance(m, cov, y, n_steps=500)
print(f"MPP distance, lambdas (2, 1)  {d:.10f}")
for C in (0.25, 4.0, 100.0):
    dc = mpp_distance(m, cov.scaled(C), y, n_steps=500)
    print(f"  C = {C:6.2f}: d = {dc:.10f}, d sqrt(C) = {dc * math.sqrt(C):.10f}")
