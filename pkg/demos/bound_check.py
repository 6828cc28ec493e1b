"""Step-size conditions and the stability bound for a coupled quadratic.

Estimates the smoothness constants on a ball, prints the resulting bound
report for an admissible schedule, and shows which condition breaks when
the inner step exceeds 1/L1.
"""

import numpy as np

from aidstab.analysis import bound_report
from aidstab.core import Schedule
from aidstab.problems import analytic_constants, make_quadratic

Q, _ = np.linalg.qr(np.random.default_rng(3).standard_normal((3, 3)))
inst = make_quadratic(h=(0.6, 0.8, 1.0), B=0.8 * Q, c=(1.0, -1.0, 0.5), w_y=1.0, s_u=1.0, s_l=1.0, n=50, q=50)
c = analytic_constants(inst.problem, inst.samples, 4.0, y_radius=6.0)
print(f"L0={c.L0:.3f} L1={c.L1:.3f} L2={c.L2:.3f} mu={c.mu:.3f}")

T = 4000
eta_x, eta_y = Schedule.horizon_scaled(0.7, T), Schedule.horizon_scaled(10, T)
print(bound_report(eta_x, eta_y, eta_y, c, 0.5, T, 50).to_text())

bad = bound_report(eta_x, eta_y, eta_y, c, 1.5 / c.L1, T, 50)
print("with eta_z = 1.5/L1, failed:", [cd.name for cd in bad.conditions if cd.gating and not cd.satisfied])
