"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion still reports its measured value.
"""

import math
import time

import numpy as np
import pytest

from conftest import checkerboard, constant, two
from heleshaw.cell import arrival_time, build_vel_table, effective_coeffs, estimate_vbar, speed_bounds
from heleshaw.cli import bundled_config, main
from heleshaw.elliptic import solve_zero_dirichlet
from heleshaw.harness import ExperimentConfig, check_table, default_jobs, load_config, run_experiment
from heleshaw.microsim import simulate
from heleshaw.rand_fields import sample_realization, shift
from oracles import harmonic_speed

BUNDLED = ("constant.json", "periodic.json", "checkerboard.json", "bumps_gpos.json",
           "checkerboard_comparison.json", "checkerboard_interior.json", "two_level_cell.json")
SHORT = (2**10, 2**11, 2**12)
JOBS = default_jobs()


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def bundled_tables():
    """One short-schedule velocity table per bundled config (common seeds)."""
    out = {}
    for name in BUNDLED:
        cfg = load_config(bundled_config(name))
        out[name] = (cfg, build_vel_table(cfg.model, cfg.x_grid, cfg.q_grid, seeds=cfg.seeds[:8],
                                          n_schedule=SHORT, jobs=JOBS))
    return out


def test_criterion_01_constant_dynamics(acceptance):
    w = sample_realization(constant(A=1.0, B=0.5, F=2.0), 0)
    traj, dt = timed(lambda: simulate(w, 0.1, [(-1.0, 1.0)], 0.5))
    R = traj.final.support.intervals[0][1]
    err = abs(R - math.exp(0.5))
    ok = err < 1e-4 and dt < 5
    acceptance(1, ok, f"R(0.5)={R:.8f} |err|={err:.2e} (<1e-4) runtime {dt:.2f}s (<5s)")
    assert ok


def test_criterion_02_elliptic_closed_form(acceptance):
    w = sample_realization(constant(A=1.0, F=2.0), 0)
    prof, dt = timed(lambda: solve_zero_dirichlet(w, 1.0, (0.0, 1.0)))
    xs = np.linspace(0, 1, 1001)
    err = max(float(np.max(np.abs(prof(xs) - xs * (1 - xs)))), abs(prof.grad_left - 1), abs(prof.grad_right + 1))
    ok = err < 1e-8 and dt < 1
    acceptance(2, ok, f"max error {err:.2e} (<1e-8) runtime {dt:.3f}s (<1s)")
    assert ok


def test_criterion_03_effective_coefficients(acceptance):
    model = checkerboard(A=two(1.0, 2.0), F=two(1.0, 3.0))
    r, dt = timed(lambda: effective_coeffs(model, [0.0], n_seeds=8, window=2.0**14))
    ea = abs(r.a_bar_mc[0] - 4 / 3) / (4 / 3)
    ef = abs(r.f_bar_mc[0] - 2.0) / 2.0
    exact = r.a_bar[0] == pytest.approx(4 / 3, rel=1e-14) and r.f_bar[0] == pytest.approx(2.0, rel=1e-14)
    ok = ea < 5e-3 and ef < 5e-3 and exact and dt < 5
    acceptance(3, ok, f"A_bar={r.a_bar_mc[0]:.5f} ({ea:.2%}) F_bar={r.f_bar_mc[0]:.5f} ({ef:.2%}) (<0.5%) "
                      f"runtime {dt:.2f}s (<5s)")
    assert ok


def test_criterion_04_vbar_oracle_and_bounds(acceptance, bundled_tables):
    model = checkerboard(A=1.0, B=two(1.0, 3.0), F=1.0)
    r, dt = timed(lambda: estimate_vbar(model, 0.0, 1.0, (2**12, 2**13, 2**14), n_seeds=8))
    target = harmonic_speed([1.0, 3.0])
    rel = abs(r.v_bar - target) / target
    out_of_bounds = 0
    for cfg, table in bundled_tables.values():
        for i, x in enumerate(table.x_grid):
            for j, q in enumerate(table.q_grid):
                lo, hi = speed_bounds(cfg.model, q, x, table.a_bar[i])
                for v in (table.v_plus[i, j], table.v_minus[i, j]):
                    out_of_bounds += not (lo * (1 - 1e-12) <= v <= hi * (1 + 1e-12))
    ok = rel < 0.01 and dt < 30 and out_of_bounds == 0
    acceptance(4, ok, f"V_bar={r.v_bar:.5f} vs {target} ({rel:.2%}, <1%) runtime {dt:.2f}s (<30s); "
                      f"{out_of_bounds} bound violations over {len(bundled_tables)} bundled models")
    assert ok


def test_criterion_05_scaling_and_monotonicity(acceptance, bundled_tables):
    from heleshaw.harness import DEFAULT_THRESHOLDS, MetricsReport
    worst_pre, bad = 0.0, []
    for name, (cfg, table) in bundled_tables.items():
        rep = MetricsReport("Cell", {})
        check_table(table, cfg.model, rep, dict(DEFAULT_THRESHOLDS))
        for c in rep.checks:
            if c.name == "pre-projection violation magnitude":
                worst_pre = max(worst_pre, c.value)
            if not c.passed:
                bad.append(f"{name}: {c.name}")
    ok = not bad
    acceptance(5, ok, f"post-projection violations: {len(bad)}; worst pre-projection {worst_pre:.2e} (<=2%)"
                      + (f" [{'; '.join(bad)}]" if bad else ""))
    assert ok


def test_criterion_06_additivity_and_shift(acceptance):
    model = checkerboard(A=two(1.0, 2.0), B=two(0.5, 1.0), F=two(1.0, 3.0))
    rng = np.random.default_rng(20240601)
    worst_add = worst_shift = 0.0
    for _ in range(20):
        seed = int(rng.integers(0, 2**31))
        x0, z = rng.uniform(-20, 20, 2)
        n, m = rng.uniform(0.5, 30, 2)
        q = rng.uniform(0.2, 5)
        w = sample_realization(model, seed)
        total = arrival_time(w, x0, q, n + m)
        first = arrival_time(w, x0, q, n)
        shifted = arrival_time(shift(w, n), x0, q, m)
        worst_add = max(worst_add, abs(total - first - shifted))
        worst_shift = max(worst_shift, abs(arrival_time(shift(w, z), x0, q, n) - arrival_time(w, x0 + z, q, n,
                                                                                              x_slow=x0)))
    ok = worst_add <= 1e-9 and worst_shift <= 1e-9
    acceptance(6, ok, f"additivity residual {worst_add:.2e}, shift residual {worst_shift:.2e} (<=1e-9, 20 cases)")
    assert ok


def _run_bundled(name, tmp_path):
    cfg = load_config(bundled_config(name))
    return timed(lambda: run_experiment(cfg, tmp_path, JOBS))


def test_criterion_07_comparison_principle(acceptance, tmp_path):
    rep, dt = _run_bundled("checkerboard_comparison.json", tmp_path)
    v = rep.summary["violations"]
    ok = rep.passed and v == 0 and dt < 300
    acceptance(7, ok, f"{v} nesting violations over {rep.summary['n_cases']} seeds; min gap "
                      f"{min(g for _, g in rep.summary['min_gap_by_time']):.3f}; runtime {dt:.1f}s (<300s)")
    assert ok


def test_criterion_08_interior_homogenization(acceptance, tmp_path):
    rep, dt = _run_bundled("checkerboard_interior.json", tmp_path)
    means = rep.summary["mean_sup_error"]
    ok = rep.passed and dt < 60
    acceptance(8, ok, f"mean sup errors {', '.join(f'{m:.4f}' for m in means)} (strictly decreasing, "
                      f"final <0.02); runtime {dt:.1f}s (<60s)")
    assert ok


@pytest.mark.slow
def test_criterion_09_full_sweep(acceptance, tmp_path):
    rep, dt = _run_bundled("checkerboard.json", tmp_path)
    rows = [r for r in rep.summary["summary"] if r["time"] == rep.summary["sample_times"][-1]]
    means = [r["hausdorff_mean"] for r in rows]
    ok = rep.passed and dt < 900
    acceptance(9, ok, f"mean Hausdorff at T {', '.join(f'{m:.4f}' for m in means)} (decreasing, one "
                      f"inversion allowed; final <0.05); runtime {dt:.1f}s (<900s)")
    assert ok


def _reduced(name, **patch):
    cfg = load_config(bundled_config(name))
    raw = dict(cfg.raw)
    raw.update(patch)
    return raw


def test_criterion_10_reproducibility(acceptance, tmp_path):
    cases = {
        "interior": _reduced("checkerboard_interior.json"),
        "comparison": _reduced("checkerboard_comparison.json", seeds=[0, 1, 2], T=0.3, sample_times=[0.1, 0.2]),
        "cell": _reduced("two_level_cell.json"),
        "sweep": _reduced("checkerboard.json", eps_list=[0.2, 0.1], seeds=[0, 1], T=0.4, sample_times=[0.2, 0.4],
                          n_schedule=[1024, 2048]),
    }
    mismatches = []
    for label, raw in cases.items():
        for run, jobs in (("a", 1), ("b", JOBS)):
            run_experiment(ExperimentConfig.from_json(raw), tmp_path / label / run, jobs)
        mismatches += _compare_dirs(tmp_path / label, label)
    for run in ("a", "b"):
        assert main(["simulate", "--config", "checkerboard.json", "--out", str(tmp_path / "cli" / run),
                     "--set", "eps_list=[0.1]", "--set", "seeds=[0, 1]", "--set", "T=0.3",
                     "--set", "sample_times=[0.1]", "--jobs", "1"]) == 0
    mismatches += _compare_dirs(tmp_path / "cli", "cli simulate")
    ok = not mismatches
    acceptance(10, ok, f"{len(cases) + 1} experiments rerun; byte mismatches: {mismatches or 'none'}")
    assert ok


def data_files(d):
    """Artifact names under ``d``; the environment stamp carries runtimes and is excluded."""
    return sorted(p.name for p in d.iterdir() if p.name != "environment.json")


def _compare_dirs(root, label):
    a, b = root / "a", root / "b"
    names = data_files(a)
    if names != data_files(b) or not names:
        return [f"{label}: file sets differ"]
    return [f"{label}/{n}" for n in names if (a / n).read_bytes() != (b / n).read_bytes()]
