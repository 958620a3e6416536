import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import checkerboard, constant, two
from heleshaw.cell import (
    EffVelTable, analytic_a_bar, arrival_curve, arrival_time, build_vel_table, effective_coeffs, estimate_vbar,
    g_anchor, harmonic_mean_A, pava, preprojection_violations, rescale_front, solve_frozen_ode, speed_bounds,
    vbar_oracle, velocity_lookup,
)
from heleshaw.errors import NoConvergence, OutOfTable, StalledFront
from heleshaw.rand_fields import FieldModel, sample_realization, shift
from oracles import harmonic_speed

TWO_LEVEL = checkerboard(A=1.0, B=two(1.0, 3.0), F=1.0)
TWO_LEVEL_G = FieldModel.from_json({"kind": "Checkerboard",
                                    "params": {"cell": 1.0, "A": 1.0, "B": two(1.0, 3.0), "F": 1.0, "G": 0.5},
                                    "g_mode": {"StrictlyPositive": {"G_min": 0.5}}})
CHECKER = checkerboard(A=two(1.0, 2.0), B=two(0.5, 1.0), F=two(1.0, 3.0))
PERIODIC = FieldModel.from_json({"kind": "Periodic", "params": {"period": 1.0, "A": {"base": 1.0, "amp": 0.5},
                                                                 "B": 1.0, "F": 2.0, "G": 0.0}})
SMOOTH = FieldModel.from_json({"kind": "SmoothBumps",
                               "params": {"width": 1.0, "A": {"lo": 1.0, "hi": 2.0}, "B": {"lo": 0.5, "hi": 1.0},
                                          "F": 1.0, "G": 0.0}})
A2B3 = constant(A=2.0, B=3.0, F=1.0)
SHORT = (2**10, 2**11, 2**12)


def test_harmonic_mean_examples():
    assert harmonic_mean_A(sample_realization(constant(A=2.0), 0), 0.0, window=64.0) == pytest.approx(2.0, rel=1e-14)
    assert harmonic_mean_A(sample_realization(PERIODIC, 0), 0.0, window=64.0) == pytest.approx(1.0, rel=1e-10)
    assert analytic_a_bar(CHECKER) == pytest.approx(4 / 3, rel=1e-14)
    est = np.mean([harmonic_mean_A(sample_realization(CHECKER, s), 0.0, window=2.0**14) for s in range(8)])
    assert est == pytest.approx(4 / 3, rel=5e-3)


def test_harmonic_mean_doubling_and_failure():
    w = sample_realization(PERIODIC, 3)
    assert harmonic_mean_A(w, 0.0, tol=1e-8) == pytest.approx(1.0, rel=1e-7)
    with pytest.raises(NoConvergence):
        harmonic_mean_A(sample_realization(CHECKER, 0), 0.0, tol=1e-12, max_window=2.0**8)


def test_effective_coeffs():
    c = effective_coeffs(constant(A=1.0, F=2.0), [0.0, 1.0], n_seeds=2, window=64.0)
    assert np.all(c.a_bar == 1.0) and np.all(c.f_bar == 2.0)
    r = effective_coeffs(CHECKER, [0.0], n_seeds=8, window=2.0**14)
    assert r.a_bar[0] == pytest.approx(4 / 3) and r.f_bar[0] == pytest.approx(2.0)
    assert abs(r.a_bar_mc[0] - 4 / 3) <= 3 * r.a_bar_se[0] + 1e-12
    assert abs(r.f_bar_mc[0] - 2.0) <= 3 * r.f_bar_se[0] + 1e-12
    curves = r.curves()
    assert curves.a_bar[0] == r.a_bar[0]


def test_frozen_ode_constant_speed():
    t, S = solve_frozen_ode(sample_realization(A2B3, 0), 0.4, 1.0, 2.0, 0.1)
    assert np.allclose(S, 0.4 + 3 * t, rtol=0, atol=1e-12)
    t, S = solve_frozen_ode(sample_realization(TWO_LEVEL, 0), 0.4, 0.0, 1.0, 0.1)
    assert np.all(S == 0.4)
    with pytest.raises(ValueError):
        solve_frozen_ode(sample_realization(A2B3, 0), 0.0, -1.0, 1.0, 0.1)


def test_frozen_ode_long_run_average():
    # smooth field so RK4 converges; compare with the quadrature arrival time
    w = sample_realization(SMOOTH, 2)
    t, S = solve_frozen_ode(w, 0.0, 1.0, 50.0, 0.01)
    T = arrival_time(w, 0.0, 1.0, S[-1])
    assert T == pytest.approx(50.0, rel=1e-6)


def test_frozen_ode_two_level_rate():
    # RK4 is first order across cell jumps; the quadrature arrival time is the reference
    w = sample_realization(TWO_LEVEL, 0)
    errs = []
    for dt in (0.1, 0.05):
        t, S = solve_frozen_ode(w, 0.0, 1.0, 200.0, dt)
        errs.append(abs(arrival_time(w, 0.0, 1.0, S[-1]) - 200.0) / 200.0)
    assert errs[1] <= errs[0] < 0.02
    T = sum(arrival_time(sample_realization(TWO_LEVEL, s), 0.0, 1.0, 1e4) for s in range(4))
    assert 4e4 / T == pytest.approx(1.5, rel=0.01)


def test_arrival_time_examples():
    assert arrival_time(sample_realization(A2B3, 0), 0.0, 1.0, 6.0) == pytest.approx(2.0, rel=1e-14)
    # seed-pooled Birkhoff average; one seed at n = 1000 fluctuates by about 1.6%
    per_unit = np.mean([arrival_time(sample_realization(TWO_LEVEL, s), 0.0, 1.0, 1000.0) / 1000.0 for s in range(16)])
    assert per_unit == pytest.approx(2 / 3, rel=0.01)
    w = sample_realization(TWO_LEVEL, 5)
    with pytest.raises(StalledFront):
        arrival_time(w, 0.0, 0.0, 1.0)
    assert arrival_curve(w, 0.0, 1.0, [0.0])[0] == 0.0


@settings(max_examples=20)
@given(seed=st.integers(0, 2**31), x0=st.floats(-50, 50), n=st.floats(0.1, 40), m=st.floats(0.1, 40),
       q=st.floats(0.1, 5))
def test_additivity(seed, x0, n, m, q):
    w = sample_realization(CHECKER, seed)
    whole = arrival_time(w, x0, q, n + m)
    parts = arrival_time(w, x0, q, n) + arrival_time(w, x0 + n, q, m, x_slow=x0)
    assert whole == pytest.approx(parts, rel=1e-9)


@settings(max_examples=20)
@given(seed=st.integers(0, 2**31), x0=st.floats(-5, 5), z=st.floats(-50, 50), q=st.floats(0.1, 5))
def test_shift_covariance(seed, x0, z, q):
    w = sample_realization(CHECKER, seed)
    a = arrival_time(shift(w, z), x0, q, 7.5)
    b = arrival_time(w, x0 + z, q, 7.5, x_slow=x0)
    assert a == pytest.approx(b, rel=1e-9)


def test_rescaling_identity_bitwise():
    t, S = solve_frozen_ode(sample_realization(SMOOTH, 0), 0.3, 1.0, 5.0, 0.05)
    te, Se = rescale_front(t, S, 0.3, 0.01)
    assert np.array_equal(te, 0.01 * t)
    assert np.array_equal(Se, 0.01 * (S - 0.3) + 0.3)


def test_vbar_constant_is_exact():
    r = estimate_vbar(A2B3, 0.0, 1.0, SHORT, n_seeds=2)
    assert r.v_bar == pytest.approx(3.0, rel=1e-12)
    assert r.within_bounds()


def test_vbar_two_level_and_oracle():
    r = estimate_vbar(TWO_LEVEL, 0.0, 1.0, (2**12, 2**13, 2**14), n_seeds=8)
    assert r.v_bar == pytest.approx(harmonic_speed([1.0, 3.0]), rel=0.01)
    o = vbar_oracle(TWO_LEVEL, 0.0, 1.0)
    assert o.value == pytest.approx(1.5, abs=max(0.015, 3 * o.stderr))
    assert abs(r.v_bar - o.value) <= max(0.01 * o.value, 3 * o.stderr)


def test_vbar_with_positive_g():
    assert harmonic_speed([1.5, 3.5]) == pytest.approx(2.1, rel=1e-12)
    o = vbar_oracle(TWO_LEVEL_G, 0.0, 1.0)
    assert o.value == pytest.approx(2.1, abs=3 * o.stderr + 2e-3)
    r = estimate_vbar(TWO_LEVEL_G, 0.0, 1.0, (2**12, 2**13, 2**14), n_seeds=8)
    assert r.v_bar == pytest.approx(2.1, rel=0.01)
    assert g_anchor(TWO_LEVEL_G) == pytest.approx(0.5)
    assert estimate_vbar(TWO_LEVEL_G, 0.0, 0.0).v_bar == pytest.approx(0.5)


def test_vbar_linear_in_q_without_g():
    r1 = estimate_vbar(CHECKER, 0.0, 1.0, SHORT)
    r2 = estimate_vbar(CHECKER, 0.0, 2.0, SHORT)
    assert r2.v_bar == pytest.approx(2 * r1.v_bar, rel=1e-12)


@settings(max_examples=10)
@given(seed=st.integers(0, 2**31), q=st.floats(0.2, 4), gamma=st.floats(0.01, 1.0))
def test_pathwise_scaling_and_monotonicity(seed, q, gamma):
    w = sample_realization(TWO_LEVEL_G, seed)
    n = 200.0
    T1 = arrival_time(w, 0.0, q, n)
    T2 = arrival_time(w, 0.0, (1 + gamma) * q, n)
    v1, v2 = n / T1, n / T2
    assert v2 >= v1
    assert (1 + gamma) * v1 >= v2 * (1 - 1e-12)


def test_bounds():
    lo, hi = speed_bounds(CHECKER, 2.0)
    a_bar = 4 / 3
    assert lo == pytest.approx(2 * a_bar * 0.5 / 2.0)
    assert hi == pytest.approx(2 * a_bar * 1.0 / 1.0)
    for q in (-3.0, 0.5, 4.0):
        assert estimate_vbar(CHECKER, 0.0, q, SHORT).within_bounds()
    lo, hi = speed_bounds(TWO_LEVEL_G, 1.0)
    assert (lo, hi) == pytest.approx((1.0, 3.5))


def test_strict_convergence_failure():
    with pytest.raises(NoConvergence):
        estimate_vbar(CHECKER, 0.0, 1.0, (16, 32), n_seeds=2, tol=1e-9)
    r = estimate_vbar(CHECKER, 0.0, 1.0, (16, 32), n_seeds=2, tol=1e-9, strict=False)
    assert r.diagnostics["converged"] is False


def test_reflection_symmetric_model():
    r_plus = estimate_vbar(PERIODIC, 0.0, 1.5, SHORT, n_seeds=4)
    r_minus = estimate_vbar(PERIODIC, 0.0, -1.5, SHORT, n_seeds=4)
    assert r_plus.v_bar == pytest.approx(r_minus.v_bar, abs=r_plus.ci_halfwidth + r_minus.ci_halfwidth + 1e-9)


def test_pava_examples():
    assert np.array_equal(pava([1, 3, 2, 4]), [1, 2.5, 2.5, 4])
    assert np.array_equal(pava([3, 2, 1]), [2, 2, 2])
    assert np.array_equal(pava([1, 2, 3]), [1, 2, 3])
    assert preprojection_violations([1.0, 0.9, 2.0]) == pytest.approx(0.1)
    assert preprojection_violations([1.0, 2.0]) == 0.0


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30))
def test_pava_is_the_isotonic_projection(vals):
    out = pava(vals)
    assert np.all(np.diff(out) >= -1e-9)
    assert sum(vals) == pytest.approx(out.sum(), abs=1e-7)
    # projection: residual is orthogonal to the fitted value and no nondecreasing
    # perturbation of the blocks lowers the squared error
    r = np.asarray(vals) - out
    assert abs(float(r @ out)) <= 1e-6 * (1 + float(np.abs(out).max()) * len(vals) * 100)
    for k in range(1, len(vals)):
        assert r[k:].sum() <= 1e-7


def test_table_constant_model():
    t = build_vel_table(constant(A=1.0, B=0.5, F=2.0), [0.0, 1.0], [0.5, 1.0, 2.0], n_seeds=2, n_schedule=(64, 128))
    assert np.allclose(t.v_plus, [[0.25, 0.5, 1.0]] * 2, rtol=1e-12)
    assert np.array_equal(t.v_plus, t.v_minus)
    assert t.diagnostics["projected_entries"] == 0 and not t.failures
    assert velocity_lookup(t, 0.3, -2.0) == pytest.approx(1.0)
    assert velocity_lookup(t, 0.0, 1.0) == t.v_minus[0, 1]
    assert velocity_lookup(t, 0.5, -1.5) == pytest.approx(0.75, rel=1e-12)
    assert velocity_lookup(t, 0.5, -0.25) == pytest.approx(0.125, rel=1e-12)
    with pytest.raises(OutOfTable):
        velocity_lookup(t, 0.5, 2.5)
    with pytest.raises(OutOfTable):
        velocity_lookup(t, 1.5, 1.0)


def test_table_x_independent_and_json_round_trip(tmp_path):
    t = build_vel_table(CHECKER, [0.0, 2.0], [1.0, 2.0], n_seeds=4, n_schedule=SHORT)
    ci = np.asarray(t.diagnostics["ci_plus"])
    assert np.all(np.abs(t.v_plus[0] - t.v_plus[1]) <= ci[0] + ci[1] + 1e-12)
    path = tmp_path / "t.json"
    path.write_text(json.dumps(t.to_json()))
    again = EffVelTable.from_json(json.loads(path.read_text()))
    assert np.array_equal(again.v_plus, t.v_plus) and np.array_equal(again.v_minus, t.v_minus)
    assert again.to_json() == t.to_json()


def test_single_x_node_is_valid_everywhere():
    t = EffVelTable([0.0], [1.0, 2.0], [[1.0, 2.0]], [[1.5, 2.5]], [1.0], [1.0], [0.0])
    assert velocity_lookup(t, 123.0, -1.5) == pytest.approx(1.5)
    assert velocity_lookup(t, -9.0, 1.5) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        EffVelTable([0.0], [2.0, 1.0], [[1.0, 2.0]], [[1.0, 2.0]], [1.0], [1.0], [0.0])


def test_continuity_in_b_is_reported():
    base = estimate_vbar(CHECKER, 0.0, 1.0, SHORT)
    deltas = [0.05, 0.1]
    consts = []
    for d in deltas:
        m = checkerboard(A=two(1.0, 2.0), B=two(0.5 + d, 1.0 + d), F=two(1.0, 3.0))
        consts.append(abs(estimate_vbar(m, 0.0, 1.0, SHORT).v_bar - base.v_bar) / (d * 2.0))
    assert all(math.isfinite(c) for c in consts)
