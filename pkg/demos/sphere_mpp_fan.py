"""Closed-form MPP fans on the sphere and the hyperbolic plane.

With Sigma = diag(4, 1) in the frame (f_1, f_2), unit-speed MPPs from the
base point are given by Jacobi elliptic functions.  On the sphere they bend
towards the high-variance direction f_1; on the hyperbolic plane towards f_2.
The bending statistic (signed area between MPP and geodesic, positive
towards f_1) makes this quantitative.
"""
import numpy as np

from mpp import Hyperbolic, Sphere
from mpp.development import CovarianceSpec
from mpp.dynamics import integrate_mpp
from mpp.records import sup_distance
from mpp.surfaces import bending_statistic, mpp_constant_curvature

for m in (Sphere(1.0), Hyperbolic(1.0)):
    x = m.default_point()
    cov = CovarianceSpec.create(m, x, m.tangent_basis(x), [2.0, 1.0])
    print(f"\n{m}: lambdas {cov.lambdas}")
    print("  psi0   branch  endpoint                       closed form vs RK4")
    for psi0 in (-2.0, -0.5, 0.5, 2.0):
        for branch in (1, -1):
            cf = mpp_constant_curvature(m, cov, psi0, branch, 1.0, 1000)
            rk = integrate_mpp(m, cov, cf.v[0], cf.chi[0], 1.0, 1000)
            print(f"  {psi0:+.1f}   {branch:+d}      {np.array2string(cf.endpoint, precision=4):30s} {sup_distance(cf, rk):.1e}")
    w = cov.vectors @ np.array([0.6, 0.6])
    y = np.asarray(m.exp(x, w))
    print(f"  bending statistic towards the diagonal target: {bending_statistic(m, cov, y, n_steps=500, n_starts=2):+.4f}")
