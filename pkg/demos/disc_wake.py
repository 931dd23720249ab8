"""
Wake behind a fixed disc
========================

A coarse Re = 100 run: 64 x 64 cells, so it finishes in about a minute and
the numbers are only indicative. The same code at 128 x 128 (``configs/``)
gives a Strouhal number near 0.166.
"""

from varfsi import scenarios as sc

spec = sc.DiscSpec(Re=100, cells=64, duration=120.0)
scenario = sc.build(spec)
print(f"{scenario.n_steps} steps of h = {scenario.config.h:.4f} s, "
      f"{scenario.meta['n_segments']} boundary segments")

problem, traj = sc.run(scenario)
history = sc.ForceHistory.from_trajectory(traj)
c = sc.aero_coefficients(history, spec)

print(f"mean drag coefficient  {c.drag:.3f}")
if c.steady:
    print("no shedding detected")
else:
    print(f"lift amplitude         {c.lift_amplitude:.3f}")
    print(f"Strouhal number        {c.strouhal:.4f}  ({c.periods:.1f} periods analysed)")
