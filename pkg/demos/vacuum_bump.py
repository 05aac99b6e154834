"""A compactly supported density bump surrounded by vacuum.

The initial velocity comes from the compatibility solve with g = 0, so the
data are admissible even though rho vanishes on most of the domain.  Grid mode
handles the vacuum cells with a static viscous balance.  We track mass, the
vacuum fraction and the energy-identity residual.
"""

import numpy as np

from nematicflow import Grid, LameParams, State, StepConfig, Stepper
from nematicflow.scenarios import build_scenario
from nematicflow import grid as G
from nematicflow.diagnostics import compute_record
from nematicflow.pressure import Isentropic

params, law = LameParams(1.0, 0.0), Isentropic(1.0, 1.4)
grid = Grid.box([128], 2 * np.pi)

sc = build_scenario("vacuum-bump", grid, params, law, "periodic", 0.0, height=1.0, width=0.3)
ini = sc.initial
s = State(0.0, ini.rho0, ini.u0, ini.d0)
stepper = Stepper(StepConfig(bc="periodic"), params, law, grid)
m0 = G.integrate(s.rho)

print(sc.notes[0])
print(f"{'t':>7} {'mass drift':>11} {'vacuum frac':>11} {'max rho':>8} {'residual':>10}")
k = 0
while s.t < 1.0:
    prev = s
    s, dt, drift = stepper.step(s)
    k += 1
    if k % 10 == 0:
        rec = compute_record(s, prev, dt, params, law, "periodic")
        vac = np.mean(s.rho.values <= 1e-10)
        print(f"{s.t:7.3f} {abs(rec.mass - m0) / m0:11.2e} {vac:11.3f} {rec.max_rho:8.4f} "
              f"{rec.energy_residual:10.2e}")
# upwind transport spreads mass into the vacuum only as fast as the flow reaches it
