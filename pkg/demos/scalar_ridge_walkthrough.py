"""Hypergradients on the one-dimensional ridge problem.

The lower problem is ``min_y (y - 1)^2 / 2 + x y^2 / 2`` with solution
``y*(x) = 1 / (1 + x)``; the upper objective is ``y^2 / 2``, so
``Phi(x) = 1 / (2 (1 + x)^2)`` and ``Phi'(1) = -1/8``.  The script compares
the exact hypergradient with finite differences, then shows how the AID
and ITD estimates approach it as the inner loop lengthens, and finally runs
the stochastic solver for a few hundred steps.
"""

import numpy as np

from aidstab.aid import SolverConfig, aid_run
from aidstab.analysis import exact_hypergradient, fd_hypergradient, k_sweep
from aidstab.problems import make_scalar_ridge

inst = make_scalar_ridge()
p, s = inst.problem, inst.samples
x = np.array([1.0])

print("exact hypergradient at x = 1:", exact_hypergradient(p, s, x)[0])
print("central differences        :", fd_hypergradient(p, s, x)[0])
print()
print(f"{'K':>3}  {'AID rel err':>12}  {'ITD rel err':>12}")
for row in k_sweep(p, s, x, [0, 1, 2, 4, 8, 16, 32], eta_z=0.5, eta_y=0.5):
    print(f"{row.K:>3}  {row.aid_rel_err:12.3e}  {row.itd_rel_err:12.3e}")

cfg = SolverConfig(T=300, K=10, eta_z=0.5, eta_x=0.5, eta_y=0.5, eta_m=0.5, x0=np.array([1.0]), record_every=50)
trace = aid_run(p, s, cfg)
print()
print("AID run from x = 1 (Phi decreases as x grows):")
for t, xt, ph in zip(trace.t, trace.x, trace.phi):
    print(f"  t={t:4d}  x={xt[0]:7.3f}  Phi={ph:.5f}")
