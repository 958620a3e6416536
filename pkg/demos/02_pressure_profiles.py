"""
Pressure on one interval
========================

The one-dimensional elliptic problem ``-(A p')' = F`` with Dirichlet data is
solved exactly up to quadrature.  Compare a homogeneous interval with a
rapidly oscillating one and with its homogenized counterpart.
"""

import numpy as np

from heleshaw.elliptic import EffectiveCoefficients, effective_profile, solve_zero_dirichlet
from heleshaw.rand_fields import FieldModel, sample_realization

const = sample_realization(FieldModel.from_json({"kind": "Constant",
                                                 "params": {"A": 1.0, "B": 0.5, "F": 2.0, "G": 0.0}}), 0)
p = solve_zero_dirichlet(const, 1.0, (0.0, 1.0))
print("homogeneous: p(0.25) =", p(0.25), " slopes:", p.grad_left, p.grad_right)

model = FieldModel.from_json({"kind": "Checkerboard",
                              "params": {"cell": 1.0, "A": {"levels": [1.0, 2.0], "probs": [0.5, 0.5]},
                                         "B": 1.0, "F": {"levels": [1.0, 3.0], "probs": [0.5, 0.5]},
                                         "G": 0.0}})
homog = effective_profile(EffectiveCoefficients([0.0], [4 / 3], [2.0]), (0.0, 1.0), 0.0, 0.0)
xs = np.linspace(0.0, 1.0, 2001)

# As the cell size shrinks the oscillating solution approaches the homogenized
# one.  The error is a random fluctuation of size about sqrt(eps), so a single
# realization is noisy; average over a few.
for eps in (0.1, 0.01, 0.001, 0.0001):
    errs = [np.max(np.abs(solve_zero_dirichlet(sample_realization(model, s), eps, (0.0, 1.0))(xs) - homog(xs)))
            for s in range(8)]
    print(f"eps={eps:<7g} mean sup |p_eps - p_bar| = {np.mean(errs):.4f}")
