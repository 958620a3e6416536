"""Experiment runners: configs in, metrics reports and data files out.

Every experiment is fully determined by one JSON config.  Data files
(``metrics.json``, CSVs, two-column ``.dat`` series) are byte-identical across
reruns; timings and versions go to ``environment.json`` only.
"""

from __future__ import annotations

import copy
import csv
import enum
import json
import logging
import math
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .cell import EffVelTable, build_vel_table, effective_coeffs, speed_bounds, vbar_oracle
from .elliptic import EffectiveCoefficients, effective_profile, solve_dirichlet
from .errors import ConfigError, NoConvergence
from .macrosim import cross_scale_compare, support_distance
from .microsim import SupportSet, simulate, write_trajectory_csv
from .rand_fields import FieldModel, sample_realization

log = logging.getLogger(__name__)

SCHEMA = "heleshaw.experiment/1"
REPORT_SCHEMA = "heleshaw.metrics/1"

__all__ = [
    "Check", "ExperimentConfig", "ExperimentKind", "MetricsReport", "load_config", "run_cell_suite",
    "run_comparison", "run_experiment", "run_full_sweep", "run_interior_homog", "support_distance",
]


class ExperimentKind(str, enum.Enum):
    INTERIOR_HOMOG = "InteriorHomog"
    COMPARISON = "Comparison"
    CELL = "Cell"
    FULL_SWEEP = "FullSweep"


DEFAULT_THRESHOLDS = {
    "final_error": 0.02,
    "final_distance": 0.05,
    "oracle_rel": 0.01,
    "preprojection_violation": 0.02,
    "scaling_rtol": 1e-9,
}
DEFAULT_TOLERANCES = {"elliptic": 1e-10, "vbar": 1e-3}


def _intervals(data, name):
    try:
        ivs = [(float(a), float(b)) for a, b in data]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of [left, right] pairs") from exc
    try:
        return SupportSet.of(ivs)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc


@dataclass
class ExperimentConfig:
    kind: ExperimentKind
    model: FieldModel
    eps_list: list[float]
    seeds: list[int]
    T: float = 1.0
    omega0: SupportSet | None = None
    omega0_inner: SupportSet | None = None
    sample_times: list[float] = field(default_factory=list)
    interval: tuple[float, float] = (0.0, 1.0)
    bc: tuple[float, float] = (0.0, 1.0)
    n_points: int = 4001
    x_grid: list[float] = field(default_factory=lambda: [0.0])
    q_grid: list[float] = field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0])
    n_schedule: list[int] = field(default_factory=lambda: [2**k for k in range(10, 15)])
    oracle_q: list[float] = field(default_factory=lambda: [1.0])
    table: str | None = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    output: str = "out"
    raw: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for k, v in self.tolerances.items():
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"tolerance {k!r} must be positive, got {v!r}")
        for k, v in self.thresholds.items():
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"threshold {k!r} must be positive, got {v!r}")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigError("seeds must be a nonempty list of distinct integers")
        if not self.eps_list or any(e <= 0 for e in self.eps_list):
            raise ConfigError("eps_list must be a nonempty list of positive numbers")
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise ConfigError("eps_list must be strictly decreasing")
        if not self.T >= 0:
            raise ConfigError("T must be nonnegative")
        if any(not 0 <= t <= self.T for t in self.sample_times):
            raise ConfigError("sample_times must lie in [0, T]")
        if not self.interval[0] < self.interval[1]:
            raise ConfigError("interval must have left < right")
        if self.kind in (ExperimentKind.COMPARISON, ExperimentKind.FULL_SWEEP) and self.omega0 is None:
            raise ConfigError(f"{self.kind.value} needs omega0")

    @property
    def tol_elliptic(self):
        return self.tolerances.get("elliptic", DEFAULT_TOLERANCES["elliptic"])

    def threshold(self, name):
        return self.thresholds.get(name, DEFAULT_THRESHOLDS[name])

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a JSON object")
        known = {"schema", "kind", "model", "eps_list", "seeds", "T", "omega0", "omega0_inner", "sample_times",
                 "interval", "bc", "n_points", "x_grid", "q_grid", "n_schedule", "oracle_q", "table",
                 "tolerances", "thresholds", "output", "description"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if data.get("schema") != SCHEMA:
            raise ConfigError(f"config schema must be {SCHEMA!r}, got {data.get('schema')!r}")
        for req in ("kind", "model", "eps_list", "seeds"):
            if req not in data:
                raise ConfigError(f"config is missing {req!r}")
        try:
            kind = ExperimentKind(data["kind"])
        except ValueError as exc:
            raise ConfigError(f"unknown experiment kind {data['kind']!r}") from exc
        thresholds = dict(DEFAULT_THRESHOLDS)
        thresholds.update(data.get("thresholds", {}))
        tolerances = dict(DEFAULT_TOLERANCES)
        tolerances.update(data.get("tolerances", {}))
        try:
            kw = dict(
                kind=kind,
                model=FieldModel.from_json(data["model"]),
                eps_list=[float(e) for e in data["eps_list"]],
                seeds=[int(s) for s in data["seeds"]],
                T=float(data.get("T", 1.0)),
                omega0=_intervals(data["omega0"], "omega0") if "omega0" in data else None,
                omega0_inner=_intervals(data["omega0_inner"], "omega0_inner") if "omega0_inner" in data else None,
                sample_times=[float(t) for t in data.get("sample_times", [])],
                interval=tuple(map(float, data.get("interval", (0.0, 1.0)))),
                bc=tuple(map(float, data.get("bc", (0.0, 1.0)))),
                n_points=int(data.get("n_points", 4001)),
                tolerances=tolerances,
                thresholds=thresholds,
                output=str(data.get("output", "out")),
                table=data.get("table"),
                raw=copy.deepcopy(dict(data)),
            )
            for key in ("x_grid", "q_grid", "oracle_q"):
                if key in data:
                    kw[key] = [float(v) for v in data[key]]
            if "n_schedule" in data:
                kw["n_schedule"] = [int(v) for v in data["n_schedule"]]
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"malformed config value: {exc}") from exc
        return cls(**kw)

    def with_seed_offset(self, k: int) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw["seeds"] = [s + k for s in self.seeds]
        return ExperimentConfig.from_json(raw)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return ExperimentConfig.from_json(data)


# ---------------------------------------------------------------------------
# reports


@dataclass
class Check:
    name: str
    value: Any
    threshold: Any
    rule: str
    passed: bool

    def to_json(self):
        return {"name": self.name, "value": self.value, "threshold": self.threshold, "rule": self.rule,
                "passed": bool(self.passed)}

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value} ({self.rule} {self.threshold})"


@dataclass
class MetricsReport:
    experiment: str
    config: dict
    checks: list[Check] = field(default_factory=list)
    records: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)
    table: EffVelTable | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name, value, threshold, rule, passed) -> Check:
        c = Check(name, value, threshold, rule, bool(passed))
        self.checks.append(c)
        return c

    def to_json(self) -> dict:
        return {"schema": REPORT_SCHEMA, "experiment": self.experiment, "config": self.config,
                "checks": [c.to_json() for c in self.checks], "passed": self.passed,
                "summary": self.summary, "records": self.records}


def environment_stamp(config: ExperimentConfig, runtime: float, jobs: int) -> dict:
    return {"package_version": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "seeds": config.seeds, "jobs": jobs, "runtime_s": round(runtime, 3)}


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _write_series(path, xs, ys, header):
    with open(path, "w") as fh:
        fh.write(f"# {header}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{float(x):.17g} {float(y):.17g}\n")


def _write_records_csv(path, records, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in records:
            w.writerow([format(r[c], ".17g") if isinstance(r[c], float) else r[c] for c in columns])


def write_report(report: MetricsReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", report.to_json())
    _write_json(out / "environment.json", report.environment)
    return out


def _map(fn, work, jobs):
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, work))
    return [fn(w) for w in work]


def decreasing_with_allowance(means, spreads, allowed: int = 1):
    """Count adjacent increases; each must sit within the larger of the two spreads.

    Returns ``(ok, n_inversions)``.
    """
    inv, ok = 0, True
    for i in range(len(means) - 1):
        if means[i + 1] >= means[i]:
            inv += 1
            if means[i + 1] - means[i] > max(spreads[i], spreads[i + 1]):
                ok = False
    return ok and inv <= allowed, inv


def effective_curves(config: ExperimentConfig, lo: float, hi: float) -> EffectiveCoefficients:
    model = config.model
    xs = np.arange(lo, hi + 0.05, 0.1) if model.x_dependent else np.array([0.0])
    return effective_coeffs(model, xs, n_seeds=1, window=16.0).curves()


# ---------------------------------------------------------------------------
# interior homogenization


def _interior_case(args):
    model, eps, seed, interval, bc, tol, xs, pbar = args
    p = solve_dirichlet(sample_realization(model, seed), eps, interval, bc[0], bc[1], tol)
    return float(np.max(np.abs(p(xs) - pbar)))


def run_interior_homog(config: ExperimentConfig, out_dir=None, jobs: int = 1) -> MetricsReport:
    """Dirichlet problems at each ``eps`` against the homogenized solution."""
    t0 = time.perf_counter()
    l, r = config.interval
    curves = effective_curves(config, l, r)
    pbar_prof = effective_profile(curves, config.interval, config.bc[0], config.bc[1], config.tol_elliptic)
    xs = np.linspace(l, r, config.n_points)
    pbar = pbar_prof(xs)
    work = [(config.model, e, s, config.interval, config.bc, config.tol_elliptic, xs, pbar)
            for e in config.eps_list for s in config.seeds]
    errs = _map(_interior_case, work, jobs)
    rep = MetricsReport(config.kind.value, config.raw)
    it = iter(errs)
    means, stds = [], []
    for e in config.eps_list:
        vals = [next(it) for _ in config.seeds]
        for s, v in zip(config.seeds, vals):
            rep.records.append({"eps": e, "seed": s, "sup_error": v})
        means.append(float(np.mean(vals)))
        stds.append(float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0)
    rep.summary = {"eps": config.eps_list, "mean_sup_error": means, "std_sup_error": stds}
    strictly = all(b < a for a, b in zip(means, means[1:]))
    rep.check("mean sup error strictly decreasing in eps", means, "strict", "decreasing", strictly)
    thr = config.threshold("final_error")
    rep.check("final mean sup error", means[-1], thr, "<", means[-1] < thr)
    rep.environment = environment_stamp(config, time.perf_counter() - t0, jobs)
    if out_dir is not None:
        out = write_report(rep, out_dir)
        _write_records_csv(out / "interior_errors.csv", rep.records, ("eps", "seed", "sup_error"))
        _write_series(out / "error_vs_eps.dat", config.eps_list, means, "eps mean_sup_error")
    return rep


# ---------------------------------------------------------------------------
# comparison principle


def _nesting_gap(inner: SupportSet, outer: SupportSet) -> float:
    """Smallest distance from the closure of ``inner`` to the complement of ``outer``.

    Negative when some inner interval is not covered by one outer interval.
    """
    gap = math.inf
    for l, r in inner:
        best = -math.inf
        for L, R in outer:
            best = max(best, min(l - L, R - r))
        gap = min(gap, best)
    return gap


def _comparison_case(args):
    model, eps, seed, inner, outer, T, samples, tol = args
    w = sample_realization(model, seed)
    a = simulate(w, eps, inner, T, sample_times=samples, tol=tol)
    b = simulate(w, eps, outer, T, sample_times=samples, tol=tol)
    out = []
    for t in [0.0] + samples:
        si, so = a.at(t).support, b.at(t).support
        out.append((t, _nesting_gap(si, so), so.contains(si, strict=True)))
    return out


def run_comparison(config: ExperimentConfig, out_dir=None, jobs: int = 1) -> MetricsReport:
    """Nested initial supports stay strictly nested at every sample time."""
    t0 = time.perf_counter()
    inner, outer = config.omega0_inner, config.omega0
    if inner is None:
        raise ConfigError("Comparison needs omega0_inner")
    if not outer.contains(inner, strict=True) or _nesting_gap(inner, outer) <= 0:
        raise ConfigError("omega0_inner must be compactly contained in omega0")
    samples = sorted(set(config.sample_times) | {config.T})
    work = [(config.model, e, s, inner, outer, config.T, samples, config.tol_elliptic)
            for e in config.eps_list for s in config.seeds]
    results = _map(_comparison_case, work, jobs)
    rep = MetricsReport(config.kind.value, config.raw)
    violations = 0
    times = [0.0] + samples
    worst = {t: math.inf for t in times}
    for (model, e, s, *_), res in zip(work, results):
        for t, gap, nested in res:
            violations += not nested
            worst[t] = min(worst[t], gap)
            rep.records.append({"eps": e, "seed": s, "time": t, "gap": gap, "nested": int(nested)})
    rep.summary = {"min_gap_by_time": [[t, worst[t]] for t in times], "violations": violations,
                   "n_cases": len(work)}
    rep.check("nesting violations", violations, 0, "==", violations == 0)
    rep.environment = environment_stamp(config, time.perf_counter() - t0, jobs)
    if out_dir is not None:
        out = write_report(rep, out_dir)
        _write_records_csv(out / "nesting.csv", rep.records, ("eps", "seed", "time", "gap", "nested"))
        _write_series(out / "min_gap_vs_time.dat", times, [worst[t] for t in times], "time min_gap")
    return rep


# ---------------------------------------------------------------------------
# cell problem


def scaling_violations(q_grid, row, rtol: float):
    """Relative violations of ``(1 + g) V(q) >= V((1 + g) q)`` for adjacent ``q``."""
    out = []
    for k in range(len(q_grid) - 1):
        ratio = q_grid[k + 1] / q_grid[k]
        lhs, rhs = ratio * row[k], row[k + 1]
        out.append(max(0.0, (rhs - lhs) / max(abs(lhs), 1e-300)))
    return [v for v in out if v > rtol], max(out, default=0.0)


def check_table(table: EffVelTable, model: FieldModel, rep: MetricsReport, thresholds) -> None:
    rtol = thresholds["scaling_rtol"]
    raw = {"plus": np.asarray(table.diagnostics["raw_plus"]), "minus": np.asarray(table.diagnostics["raw_minus"])}
    proj = {"plus": table.v_plus, "minus": table.v_minus}
    qs = table.q_grid
    out_of_bounds = 0
    for i, x in enumerate(table.x_grid):
        for j, q in enumerate(qs):
            lo, hi = speed_bounds(model, q, x, table.a_bar[i])
            for mat in proj.values():
                v = mat[i, j]
                out_of_bounds += not (lo * (1 - 1e-12) <= v <= hi * (1 + 1e-12))
    rep.check("V_bar outside [q c_min, q C_max + G_max]", out_of_bounds, 0, "==", out_of_bounds == 0)
    n_scale = n_mono = 0
    pre = 0.0
    for key in ("plus", "minus"):
        for i in range(len(table.x_grid)):
            bad, _ = scaling_violations(qs, proj[key][i], rtol)
            n_scale += len(bad)
            n_mono += int(np.sum(np.diff(proj[key][i]) < 0))
            _, worst_scale = scaling_violations(qs, raw[key][i], 0.0)
            drops = np.diff(raw[key][i]) / np.maximum(np.abs(raw[key][i][:-1]), 1e-300)
            pre = max(pre, worst_scale, float(max(0.0, -drops.min())) if len(drops) else 0.0)
    rep.check("scaling violations after projection", n_scale, 0, "==", n_scale == 0)
    rep.check("monotonicity violations after projection", n_mono, 0, "==", n_mono == 0)
    thr = thresholds["preprojection_violation"]
    rep.check("pre-projection violation magnitude", pre, thr, "<=", pre <= thr)


def run_cell_suite(config: ExperimentConfig, out_dir=None, jobs: int = 1) -> MetricsReport:
    """Build the velocity table and check bounds, monotonicity, scaling and the oracle.

    Non-converged cells are written to the report before
    :class:`NoConvergence` is raised.
    """
    t0 = time.perf_counter()
    model = config.model
    table = build_vel_table(model, config.x_grid, config.q_grid, seeds=config.seeds,
                            n_schedule=config.n_schedule, tol=config.tolerances["vbar"], jobs=jobs)
    rep = MetricsReport(config.kind.value, config.raw, table=table)
    thresholds = {k: config.threshold(k) for k in DEFAULT_THRESHOLDS}
    check_table(table, model, rep, thresholds)
    thr = thresholds["oracle_rel"]
    for x in config.x_grid:
        for q in config.oracle_q:
            orc = vbar_oracle(model, x, q)
            j = int(np.argmin(np.abs(table.q_grid - q)))
            if not math.isclose(table.q_grid[j], q):
                raise ConfigError(f"oracle_q {q} is not on q_grid")
            i = list(table.x_grid).index(x)
            for key, mat in (("+", table.v_plus), ("-", table.v_minus)):
                rel = abs(mat[i, j] - orc.value) / orc.value
                rep.records.append({"x": x, "q": q, "direction": key, "v_bar": float(mat[i, j]),
                                    "oracle": orc.value, "oracle_stderr": orc.stderr, "rel_diff": rel})
                rep.check(f"oracle agreement x={x:g} q={key}{q:g}", rel, thr, "<=", rel <= thr)
    rep.summary = {"table": table.to_json(), "failures": table.failures}
    rep.environment = environment_stamp(config, time.perf_counter() - t0, jobs)
    if out_dir is not None:
        out = write_report(rep, out_dir)
        _write_json(out / "vel_table.json", table.to_json())
        for i, x in enumerate(table.x_grid):
            _write_series(out / f"vbar_plus_x{i}.dat", table.q_grid, table.v_plus[i], f"q v_bar_plus at x={x:g}")
            _write_series(out / f"vbar_minus_x{i}.dat", table.q_grid, table.v_minus[i], f"q v_bar_minus at x={x:g}")
    if table.failures:
        raise NoConvergence("; ".join(table.failures))
    return rep


# ---------------------------------------------------------------------------
# full sweep


def table_for(config: ExperimentConfig, jobs: int = 1) -> EffVelTable:
    if config.table:
        with open(config.table) as fh:
            return EffVelTable.from_json(json.load(fh))
    return build_vel_table(config.model, config.x_grid, config.q_grid, seeds=config.seeds,
                           n_schedule=config.n_schedule, tol=config.tolerances["vbar"], jobs=jobs)


def run_full_sweep(config: ExperimentConfig, out_dir=None, jobs: int = 1) -> MetricsReport:
    """Micro runs at every ``(eps, seed)`` against one homogenized run."""
    t0 = time.perf_counter()
    table = table_for(config, jobs)
    if table.failures:
        raise NoConvergence("; ".join(table.failures))
    cmp = cross_scale_compare(config.model, config.eps_list, config.omega0, config.T, config.sample_times,
                              seeds=config.seeds, table=table, jobs=jobs, tol=config.tol_elliptic)
    rep = MetricsReport(config.kind.value, config.raw)
    rep.records = cmp.rows
    rep.summary = cmp.to_json()
    means, stds = cmp.final("hausdorff")
    ok, inv = decreasing_with_allowance(means, stds)
    rep.check("mean Hausdorff distance decreasing in eps (one inversion within spread)", means,
              "<= 1 inversion", "decreasing", ok)
    thr = config.threshold("final_distance")
    rep.check("final mean Hausdorff distance", means[-1], thr, "<", means[-1] < thr)
    rep.environment = environment_stamp(config, time.perf_counter() - t0, jobs)
    if out_dir is not None:
        out = write_report(rep, out_dir)
        distances = out / "distances.csv"
        cmp.write(out / "compare.json", distances)
        _write_json(out / "vel_table.json", table.to_json())
        _write_series(out / "hausdorff_vs_eps.dat", config.eps_list, means, "eps mean_hausdorff_at_T")
        p_means, _ = cmp.final("pressure_sup")
        _write_series(out / "pressure_vs_eps.dat", config.eps_list, p_means, "eps mean_pressure_sup_at_T")
        write_trajectory_csv(cmp.macro, out / "trajectory_effective.csv")
    return rep


RUNNERS = {
    ExperimentKind.INTERIOR_HOMOG: run_interior_homog,
    ExperimentKind.COMPARISON: run_comparison,
    ExperimentKind.CELL: run_cell_suite,
    ExperimentKind.FULL_SWEEP: run_full_sweep,
}


def run_experiment(config: ExperimentConfig, out_dir=None, jobs: int = 1) -> MetricsReport:
    log.info("running %s with %d seeds on %d worker(s)", config.kind.value, len(config.seeds), jobs)
    return RUNNERS[config.kind](config, out_dir, jobs)


def default_jobs() -> int:
    return os.cpu_count() or 1
