"""Feed a trained surrogate its own predictions, step after step.

The network was only ever fitted to one-step increments. Here it drives
a full undrained trajectory from its previous outputs (the recall loop),
which is where error accumulation would show up if there were any.
Ground truth from the implicit integrator is plotted alongside.
"""

import argparse
import os

import numpy as np

from sandlab import GenConfig, TrainConfig, assemble, generate_dataset, split, train
from sandlab.charts import trajectory_charts
from sandlab.simulate import (
    Driver,
    axisym_eps_for_magnitude,
    compare,
    ground_truth,
    simulate,
)

OUT = os.path.dirname(os.path.abspath(__file__))

parser = argparse.ArgumentParser()
parser.add_argument("--epochs", type=int, default=2000)
parser.add_argument("--steps", type=int, default=70)
args = parser.parse_args()

ds = generate_dataset(GenConfig.desk_scale(master_seed=11))
tc = TrainConfig(epochs=args.epochs, seed=1)
splits = split(ds, tc)
print(f"training the physics-informed net for {args.epochs} epochs...")
ckpt, _ = train(assemble("epnn", seed=1), splits, tc)

# undrained shearing at an initial condition that sits between the
# training grid points, so the net has never seen this exact path
eps = axisym_eps_for_magnitude(-2.0, 0.8e-3)
driver = Driver.axisymmetric(alpha=-2.0, step_eps=-eps, n_steps=args.steps)
p_in, e_in = 225.0, 0.62

traj = simulate(ckpt, driver, p_in, e_in)
truth = ground_truth(driver, p_in, e_in)
rep = compare(traj, truth)

s, st = traj.series(), truth.series()
print(f"\n{args.steps} recall steps from p = {p_in} kPa, e = {e_in}:")
print(f"  end q: net {s['q'][-1]:.1f} kPa vs truth {st['q'][-1]:.1f} kPa")
print(f"  end p: net {s['p'][-1]:.1f} kPa vs truth {st['p'][-1]:.1f} kPa")
print(f"  void-ratio drift (should be ~0, undrained): {np.abs(s['e'] - e_in).max():.2e}")
if traj.extrapolation_steps:
    print(f"  scaler extrapolation on {len(traj.extrapolation_steps)} steps")
worst = max(rep.max_errors().items(), key=lambda kv: kv[1])
print(f"  worst pointwise error: {worst[0]} at {100 * worst[1]:.2f}%")

names = trajectory_charts([("recall", s), ("truth", st)], OUT, "demo04")
print(f"\ncharts: {', '.join(names)}")
