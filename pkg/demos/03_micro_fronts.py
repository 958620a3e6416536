"""
Free boundaries at the microscopic scale
========================================

Each connected component of the support is an interval whose endpoints move
with speed ``B |p'| + G``.  Components merge when they touch.
"""

import math

from heleshaw.microsim import simulate
from heleshaw.rand_fields import FieldModel, sample_realization

const = sample_realization(FieldModel.from_json({"kind": "Constant",
                                                 "params": {"A": 1.0, "B": 0.5, "F": 2.0, "G": 0.0}}), 0)

# With these constants the right endpoint solves R' = R.
traj = simulate(const, 0.1, [(-1.0, 1.0)], 0.5)
print("R(0.5) =", traj.final.support.intervals[0][1], " exact:", math.exp(0.5))

# Two blobs grow until they merge.
traj = simulate(const, 0.1, [(-3.0, -2.0), (2.0, 3.0)], 3.0, sample_times=[1.0, 2.0])
for s in traj.samples():
    print(f"t={s.time:.2f} support={s.support.intervals}")
for ev in traj.events:
    print(f"merge at t={ev.time:.4f} of components {ev.merged}")

# A random medium: the support still grows monotonically.
model = FieldModel.from_json({"kind": "Checkerboard",
                              "params": {"cell": 1.0, "A": {"levels": [1.0, 1.2], "probs": [0.5, 0.5]},
                                         "B": 0.5, "F": {"levels": [1.8, 2.2], "probs": [0.5, 0.5]}, "G": 0.0}})
traj = simulate(sample_realization(model, 0), 0.05, [(-1.0, 1.0)], 1.0, sample_times=[0.25, 0.5, 0.75])
for s in traj.samples():
    print(f"t={s.time:.2f} support={s.support.intervals[0]}")
