"""Front tracking for the homogenized problem and micro/macro comparison.

The effective problem replaces ``A, F`` by the harmonic and arithmetic means
``A_bar, F_bar`` and the boundary law by the tabulated effective velocity.
It shares the engine of :mod:`heleshaw.microsim`, so both solvers produce the
same trajectory format.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cell import EffVelTable, velocity_lookup
from .elliptic import EffectiveCoefficients, build_cache
from .errors import EmptySupport, OutOfTable
from .microsim import DtPolicy, FrontState, FrontTracker, SupportSet, Trajectory, simulate
from .rand_fields import FieldModel, sample_realization


@dataclass
class EffectiveProblem:
    table: EffVelTable
    coeff_curves: EffectiveCoefficients
    omega0: SupportSet
    T: float

    def __post_init__(self):
        self.omega0 = SupportSet.of(self.omega0)
        if len(self.omega0) == 0:
            raise EmptySupport("initial support is empty")
        if not self.T >= 0:
            raise ValueError("T must be nonnegative")
        lo, hi = self.reach()
        xs = np.linspace(lo, hi, 257)
        if np.any(self.coeff_curves.coeff("A", xs) <= 0) or np.any(self.coeff_curves.coeff("F", xs) <= 0):
            raise ValueError("effective coefficients must be positive on the simulation hull")

    @classmethod
    def from_table(cls, table: EffVelTable, omega0, T) -> "EffectiveProblem":
        return cls(table, table.coefficient_curves(), omega0, T)

    def reach(self) -> tuple[float, float]:
        """Conservative hull of the support up to ``T`` (fastest tabulated speed)."""
        t = self.table
        vmax = float(max(np.max(t.v_plus), np.max(t.v_minus), np.max(t.v_zero)))
        lo, hi = self.omega0.hull
        return lo - vmax * self.T, hi + vmax * self.T


def effective_speed_fn(table: EffVelTable):
    def speeds(xl, gl, xr, gr):
        sl = np.array([velocity_lookup(table, x, g) for x, g in zip(xl, gl)])
        sr = np.array([velocity_lookup(table, x, g) for x, g in zip(xr, gr)])
        return sl, sr

    return speeds


def effective_tracker(problem: EffectiveProblem, dt_policy: DtPolicy | None = None, tol=None) -> FrontTracker:
    curves = problem.coeff_curves
    return FrontTracker(lambda lo, hi: build_cache(curves, math.inf, (lo, hi), tol),
                        effective_speed_fn(problem.table), dt_policy or DtPolicy())


def simulate_effective(problem: EffectiveProblem, dt_policy: DtPolicy | None = None,
                       sample_times=None, tol=None) -> Trajectory:
    """Evolve ``problem.omega0`` to ``problem.T`` under the homogenized law.

    Raises :class:`OutOfTable` up front if the conservative reach leaves an
    ``x``-dependent table, and during the run if a slope exceeds the table.
    """
    xs = problem.table.x_grid
    if len(xs) > 1:
        lo, hi = problem.reach()
        if lo < xs[0] or hi > xs[-1]:
            bad = lo if lo < xs[0] else hi
            raise OutOfTable(f"fronts may reach x = {bad:.6g}, outside the table hull [{xs[0]:.6g}, {xs[-1]:.6g}]",
                             x=bad)
    return effective_tracker(problem, dt_policy, tol).run(problem.omega0, problem.T, sample_times)


# ---------------------------------------------------------------------------
# distances between front states


def support_distance(s1, s2) -> float:
    """Hausdorff distance between the closures of two finite interval unions."""
    s1, s2 = SupportSet.of(s1), SupportSet.of(s2)
    if len(s1) == 0 or len(s2) == 0:
        raise EmptySupport("Hausdorff distance needs two nonempty supports")
    return max(_directed(s1, s2), _directed(s2, s1))


def _dist_to(x, s: SupportSet) -> float:
    best = math.inf
    for l, r in s:
        if l <= x <= r:
            return 0.0
        best = min(best, abs(x - l), abs(x - r))
    return best


def _directed(a: SupportSet, b: SupportSet) -> float:
    # the farthest point of a from b is an endpoint of a or a gap midpoint of b clipped into a
    pts = [x for iv in a for x in iv]
    ivs = b.intervals
    for (_, g0), (g1, _) in zip(ivs[:-1], ivs[1:]):
        mid = 0.5 * (g0 + g1)
        pts.extend(min(max(mid, l), r) for l, r in a)
    return max(_dist_to(x, b) for x in pts)


def state_pressure(state: FrontState, x) -> np.ndarray:
    """Pressure of a front state at points ``x`` (zero off the support)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros(x.shape)
    for (l, r), prof in zip(state.support, state.profiles):
        m = (x >= l) & (x <= r)
        if np.any(m):
            out[m] = prof(x[m])
    return out


def pressure_distance(s1: FrontState, s2: FrontState, n_points: int = 4097) -> float:
    """Sup-norm pressure difference sampled on the intersection of the supports."""
    worst = 0.0
    for l1, r1 in s1.support:
        for l2, r2 in s2.support:
            l, r = max(l1, l2), min(r1, r2)
            if l < r:
                xs = np.linspace(l, r, n_points)
                worst = max(worst, float(np.max(np.abs(state_pressure(s1, xs) - state_pressure(s2, xs)))))
    return worst


# ---------------------------------------------------------------------------
# cross-scale comparison


@dataclass
class CompareReport:
    eps_list: list[float]
    seeds: list[int]
    sample_times: list[float]
    rows: list[dict] = field(default_factory=list)
    macro: Trajectory | None = None

    CSV_COLUMNS = ("eps", "seed", "time", "hausdorff", "pressure_sup", "near_merge")

    def summary(self) -> list[dict]:
        """Per ``(eps, time)`` mean, standard deviation, min and max over seeds (merge-flagged rows excluded)."""
        out = []
        for eps in self.eps_list:
            for t in self.sample_times:
                rows = [r for r in self.rows if r["eps"] == eps and r["time"] == t and not r["near_merge"]]
                rec = {"eps": eps, "time": t, "n": len(rows)}
                for key in ("hausdorff", "pressure_sup"):
                    v = np.array([r[key] for r in rows])
                    rec[key + "_mean"] = float(v.mean()) if len(v) else math.nan
                    rec[key + "_std"] = float(v.std(ddof=1)) if len(v) > 1 else 0.0
                    rec[key + "_min"] = float(v.min()) if len(v) else math.nan
                    rec[key + "_max"] = float(v.max()) if len(v) else math.nan
                out.append(rec)
        return out

    def final(self, key: str = "hausdorff"):
        """``(means, stds)`` at the last sample time, one per eps."""
        T = self.sample_times[-1]
        recs = [r for r in self.summary() if r["time"] == T]
        return [r[key + "_mean"] for r in recs], [r[key + "_std"] for r in recs]

    def to_json(self) -> dict:
        return {"eps_list": self.eps_list, "seeds": self.seeds, "sample_times": self.sample_times,
                "summary": self.summary()}

    def write(self, json_path, csv_path) -> None:
        with open(json_path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.CSV_COLUMNS)
            for r in self.rows:
                w.writerow([format(r["eps"], ".17g"), r["seed"], format(r["time"], ".17g"),
                            format(r["hausdorff"], ".17g"), format(r["pressure_sup"], ".17g"), int(r["near_merge"])])


def _compare_case(args):
    model, eps, seed, omega0, T, samples, macro, tol = args
    traj = simulate(sample_realization(model, seed), eps, omega0, T, sample_times=samples, tol=tol)
    rows = []
    for t in samples:
        mi, ma = traj.at(t), macro.at(t)
        window = max(traj.dt_max if traj.n_steps else 0.0, macro.dt_max if macro.n_steps else 0.0)
        rows.append({"eps": eps, "seed": seed, "time": t,
                     "hausdorff": support_distance(mi.support, ma.support),
                     "pressure_sup": pressure_distance(mi, ma),
                     "near_merge": traj.near_merge(t, window) or macro.near_merge(t, window)})
    return rows


def cross_scale_compare(model: FieldModel, eps_list, omega0, T: float, sample_times=None, n_seeds: int = 8, *,
                        seeds=None, table: EffVelTable, jobs: int = 1, tol=None,
                        macro_dt: DtPolicy | None = None) -> CompareReport:
    """Run the macro problem once and the micro problem for every ``(eps, seed)``.

    Rows carry the Hausdorff distance of the supports and the sup pressure
    difference on their intersection at each sample time; rows within one
    time step of a merge in either run are flagged ``near_merge``.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    seeds = list(range(n_seeds)) if seeds is None else list(seeds)
    samples = sorted({float(t) for t in (sample_times or [])} | {float(T)})
    problem = EffectiveProblem.from_table(table, omega0, T)
    macro = simulate_effective(problem, macro_dt, samples, tol)
    work = [(model, e, s, problem.omega0, T, samples, macro, tol) for e in eps_list for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_compare_case, work))
    else:
        parts = [_compare_case(w) for w in work]
    return CompareReport(eps_list, seeds, samples, [r for p in parts for r in p], macro)
