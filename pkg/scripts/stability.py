"""Energy decay, scalar drift and energy-offset spread on the 100x15 baseline grid.

Usage: python3 scripts/stability.py [steps]
"""
import sys
from types import SimpleNamespace

import numpy as np

from dropform.diagnostics import energy_offset
from dropform.harness import BASELINE, Simulation, run

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 500
print("dt          E_M increases   max scalar drift   offset spread / E_O range")
for k in (1, 2, 4, 8):
    dt = k * 1.37e-3
    sc = BASELINE.updated(n_z=100, n_r=15, dt=dt, end_time=steps * dt)
    res = run(sc)
    params = Simulation(sc).params
    em = np.array([r.E_M for r in res.records])
    drift = max(max(abs(r.Q - 1), abs(r.R - 1), abs(r.T - 1)) for r in res.records)
    gaps = [r.E_M - r.E_O - energy_offset(SimpleNamespace(Q_scalar=r.Q, R_scalar=r.R, T_scalar=r.T),
                                           params) for r in res.records]
    e_o = [r.E_O for r in res.records]
    spread = (max(gaps) - min(gaps)) / (max(e_o) - min(e_o))
    print(f"{dt:<12.4g}{int(np.sum(np.diff(em) >= 0)):<16d}{drift:<19.4g}{spread:.2%}")
