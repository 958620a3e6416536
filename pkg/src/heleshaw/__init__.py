"""Homogenization of a one-dimensional Hele-Shaw free-boundary problem in random media.

Modules
-------
rand_fields
    Stationary ergodic coefficient models and counter-based realizations.
elliptic
    Exact quadrature solution of the interior pressure problem.
microsim
    Front tracking at scale ``eps``.
cell
    Harmonic means, effective coefficients and the effective front velocity.
macrosim
    Front tracking for the homogenized problem and micro/macro comparison.
harness
    Config-driven experiments and metrics reports.
"""

__version__ = "0.1.0"
