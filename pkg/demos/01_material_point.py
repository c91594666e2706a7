"""Single material point under triaxial loading, dense vs loose.

Runs drained compression at three initial densities plus undrained
shearing at two, prints the end states, and writes SVG charts next to
this script. No trained networks involved, just the constitutive model.
"""

import os

import numpy as np

from sandlab import (
    WGParams,
    critical_void_ratio,
    drained_triaxial_compression,
    strain_invariants,
    stress_invariants,
)
from sandlab.charts import line_chart
from sandlab.simulate import Driver, axisym_eps_for_magnitude, ground_truth

OUT = os.path.dirname(os.path.abspath(__file__))

params = WGParams.ottawa_sand()
p_in = 225.0

print("drained triaxial compression to gamma = 0.25 at p_cell = 225 kPa")
print(f"{'e_in':>6} {'steps':>6} {'p_end':>9} {'q_end':>9} {'e_end':>8} {'e_cs(p)':>8}")
drained_series = []
for e_in in (0.55, 0.62, 0.72):
    states, results, incs = drained_triaxial_compression(params, p_in, e_in, 0.25)
    end = states[-1]
    si = stress_invariants(end.sigma)
    print(
        f"{e_in:>6.2f} {len(results):>6d} {si.p:>9.1f} {si.q:>9.1f} "
        f"{end.e:>8.4f} {critical_void_ratio(si.p, params):>8.4f}"
    )
    gam = np.array([strain_invariants(s.eps).gamma for s in states])
    q = np.array([stress_invariants(s.sigma).q for s in states])
    e = np.array([s.e for s in states])
    drained_series.append((f"e_in={e_in}", gam, q, e))

line_chart(
    [(label, gam, q) for label, gam, q, _ in drained_series],
    "distortion",
    "q [kPa]",
    "drained triaxial, three densities",
    os.path.join(OUT, "demo01_drained_q.svg"),
)
line_chart(
    [(label, gam, e) for label, gam, _, e in drained_series],
    "distortion",
    "void ratio",
    "densification and dilation toward critical state",
    os.path.join(OUT, "demo01_drained_e.svg"),
)

print()
print("undrained shearing (constant volume), 150 steps")
eps = axisym_eps_for_magnitude(-2.0, 0.8e-3)
driver = Driver.axisymmetric(alpha=-2.0, step_eps=-eps, n_steps=150)
undrained = []
for e_in, label in ((0.55, "dense"), (0.72, "loose")):
    traj = ground_truth(driver, p_in, e_in, params)
    s = traj.series()
    print(
        f"  {label}: p {s['p'][0]:.0f} -> {s['p'][-1]:.1f} kPa, "
        f"q_end {s['q'][-1]:.1f} kPa, e drift {np.abs(s['e'] - e_in).max():.1e}"
    )
    undrained.append((label, s))

line_chart(
    [(label, s["p"], s["q"]) for label, s in undrained],
    "p [kPa]",
    "q [kPa]",
    "undrained stress paths: dense hardens, loose collapses",
    os.path.join(OUT, "demo01_undrained_pq.svg"),
)
print(f"\ncharts written to {OUT}/demo01_*.svg")
