"""
Channel flow convergence
========================

Drive a periodic channel with a uniform body force and compare the steady
profile with the parabola u = G y (H - y) / (2 mu). The error drops by about
four when the number of cells doubles.
"""

import numpy as np

from varfsi import scenarios as sc

errors = []
for cells in (8, 16, 32, 64):
    spec = sc.PoiseuilleSpec(cells=cells)
    scenario = sc.build(spec)
    _, traj = sc.run(scenario, until_steady=sc.STEADY_TOL)
    errors.append(sc.poiseuille_error(traj, spec, scenario.grid))
    print(f"{cells:4d} cells  {len(traj.records):5d} steps  error {errors[-1]:.3e}")

orders = np.log2(np.array(errors[:-1]) / errors[1:])
print("observed order:", np.round(orders, 3))
