"""
Random media and model validation
=================================

A medium is a JSON-describable model; a realization is a pure function of
``(model, seed)``.  Coefficients can be queried at any point in any order.
"""

import numpy as np

from heleshaw.rand_fields import FieldModel, sample_realization, shift, validate_model

model = FieldModel.from_json({
    "kind": "Checkerboard",
    "params": {"cell": 1.0,
               "A": {"levels": [1.0, 2.0], "probs": [0.5, 0.5]},
               "B": 0.5,
               "F": {"levels": [1.0, 3.0], "probs": [0.5, 0.5]},
               "G": 0.0},
})

# The validation report lists every structural check with its margin.
for line in validate_model(model).lines():
    print(line)

# One realization, sampled along the fast variable.
omega = sample_realization(model, seed=7)
ys = np.linspace(0.0, 6.0, 13)
print("A(0, y):", omega.coeff("A", 0.0, ys))

# Shifting the environment is the same as shifting the query point.
moved = shift(omega, 2.5)
print("shift check:", np.array_equal(moved.coeff("A", 0.0, ys), omega.coeff("A", 0.0, ys + 2.5)))

# The harmonic and arithmetic means are known in closed form for this model.
print("A_bar =", 1.0 / model.marginal_mean("A", 0.0, lambda v: 1.0 / v))
print("F_bar =", model.marginal_mean("F", 0.0))
