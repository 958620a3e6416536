"""Front tracking for the free-boundary problem at scale eps.

The positivity set is a finite union of open intervals.  Between steps the
pressure on each interval is the zero-Dirichlet solution of the elliptic
problem (the interior is quasi-static), and each endpoint moves outward with
normal speed ``B |p_x| + G``.  Endpoint positions are advanced with the
explicit midpoint rule; intervals coalesce on contact and never split.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .elliptic import MicroMedium, PressureProfile, build_cache, solve_on_cache
from .errors import EmptySupport, OutOfDomain, StepCollapse
from .rand_fields import FieldRealization

MERGE_GAP = 1e-9


@dataclass(frozen=True)
class SupportSet:
    """Sorted, disjoint open intervals."""

    intervals: tuple[tuple[float, float], ...]

    def __post_init__(self):
        iv = tuple((float(l), float(r)) for l, r in self.intervals)
        for (l, r) in iv:
            if not r > l:
                raise ValueError(f"empty interval ({l}, {r})")
        for (_, r), (l, _) in zip(iv, iv[1:]):
            if not l > r:
                raise ValueError("intervals must be sorted and disjoint")
        object.__setattr__(self, "intervals", iv)

    @classmethod
    def of(cls, intervals) -> "SupportSet":
        """Normalize an arbitrary list of intervals (sort then merge)."""
        if isinstance(intervals, SupportSet):
            return intervals
        iv = [tuple(map(float, p)) for p in intervals]
        return merge_intervals(iv)[0]

    def __len__(self):
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)

    @property
    def hull(self) -> tuple[float, float]:
        if not self.intervals:
            raise EmptySupport("empty support")
        return self.intervals[0][0], self.intervals[-1][1]

    def measure(self) -> float:
        return sum(r - l for l, r in self.intervals)

    def contains(self, other: "SupportSet", strict: bool = False) -> bool:
        """``other`` is a subset of ``self`` (closure inside, when ``strict``)."""
        for l, r in other.intervals:
            ok = False
            for L, R in self.intervals:
                if (L < l and r < R) if strict else (L <= l and r <= R):
                    ok = True
                    break
            if not ok:
                return False
        return True

    def to_json(self):
        return [list(p) for p in self.intervals]


def merge_intervals(intervals, gap: float = MERGE_GAP):
    """Coalesce overlapping or nearly touching intervals.

    Returns the normalized :class:`SupportSet` and, for each output interval,
    the indices (into the sorted input) that were fused into it.
    """
    order = sorted(range(len(intervals)), key=lambda i: (intervals[i][0], intervals[i][1]))
    out, groups = [], []
    for i in order:
        l, r = intervals[i]
        if r - l <= 0:
            continue
        if out and l - out[-1][1] <= gap:
            out[-1][1] = max(out[-1][1], r)
            groups[-1].append(i)
        else:
            out.append([l, r])
            groups.append([i])
    return SupportSet(tuple((l, r) for l, r in out)), groups


def merge(support) -> SupportSet:
    """Normalize a support: overlapping or within-gap intervals are merged."""
    iv = support.intervals if isinstance(support, SupportSet) else support
    return merge_intervals(list(iv))[0]


@dataclass(frozen=True, eq=False)
class FrontState:
    time: float
    support: SupportSet
    profiles: tuple[PressureProfile, ...]
    speeds: tuple[tuple[float, float], ...]
    merged: bool = False

    def endpoint(self, index: int, side: str) -> float:
        l, r = self.support.intervals[index]
        return l if side == "left" else r


@dataclass(frozen=True)
class MergeEvent:
    time: float
    merged: tuple[int, ...]
    result_index: int
    interval: tuple[float, float]

    def to_json(self):
        return {"time": self.time, "merged": list(self.merged), "result_index": self.result_index,
                "left": self.interval[0], "right": self.interval[1]}


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    states: list[FrontState] = field(default_factory=list)
    events: list[MergeEvent] = field(default_factory=list)
    requested: list[bool] = field(default_factory=list)
    n_steps: int = 0
    dt_min: float = math.inf
    dt_max: float = 0.0

    def record(self, st: FrontState, requested: bool):
        self.times.append(st.time)
        self.states.append(st)
        self.requested.append(requested)

    @property
    def final(self) -> FrontState:
        return self.states[-1]

    def at(self, t: float) -> FrontState:
        """Stored state at requested sample time ``t``."""
        for st, req in zip(reversed(self.states), reversed(self.requested)):
            if req and st.time == t:
                return st
        raise KeyError(f"no stored state at t={t}")

    def samples(self):
        """Stored states at requested sample times (merge-only records skipped)."""
        return [s for s, req in zip(self.states, self.requested) if req]

    def near_merge(self, t: float, window: float) -> bool:
        return any(abs(e.time - t) <= window for e in self.events)


@dataclass(frozen=True)
class DtPolicy:
    """``dt = min(cell / (fraction * max_speed), T / steps)``, clamped.

    ``cell`` is the fast-scale length the front must resolve (``eps`` times
    the field's correlation length for the microscopic problem).
    """

    cell: float = math.inf
    fraction: float = 10.0
    steps: int = 1000
    dt_floor: float = 1e-12
    max_fraction_of_T: float = 0.01

    def dt(self, max_speed: float, T: float) -> float:
        dt = T / self.steps
        if max_speed > 0 and math.isfinite(self.cell):
            dt = min(dt, self.cell / (self.fraction * max_speed))
        return min(max(dt, self.dt_floor), self.max_fraction_of_T * T)


# ---------------------------------------------------------------------------
# generic engine


SpeedFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


class FrontTracker:
    """Midpoint-rule front tracking over a growing quadrature hull.

    ``speed_fn(xl, gl, xr, gr)`` maps endpoint positions and boundary
    gradients to outward speeds.  ``make_cache(lo, hi)`` tabulates the
    elliptic integrals on a hull; the hull grows when a front leaves it.
    """

    def __init__(self, make_cache, speed_fn: SpeedFn, policy: DtPolicy, merge_gap: float = MERGE_GAP):
        self.make_cache = make_cache
        self.speed_fn = speed_fn
        self.policy = policy
        self.merge_gap = merge_gap
        self.cache = None
        self.pad = None

    def _ensure_hull(self, lo, hi):
        if self.cache is not None:
            L, R = self.cache.interval
            if lo >= L and hi <= R:
                return
            width = R - L
        else:
            width = hi - lo
        self.pad = max(1.0, 0.5 * width) if self.pad is None else 2.0 * self.pad
        L = lo - self.pad if self.cache is None else min(self.cache.interval[0], lo - self.pad)
        R = hi + self.pad if self.cache is None else max(self.cache.interval[1], hi + self.pad)
        self.cache = self.make_cache(L, R)

    def _solve(self, lefts, rights):
        self._ensure_hull(float(lefts[0]), float(rights[-1]))
        profs = solve_on_cache(self.cache, np.column_stack([lefts, rights]))
        gl = np.array([p.grad_left for p in profs])
        gr = np.array([p.grad_right for p in profs])
        sl, sr = self.speed_fn(np.asarray(lefts), gl, np.asarray(rights), gr)
        return profs, np.asarray(sl, dtype=float), np.asarray(sr, dtype=float)

    def _groups(self, lefts, rights):
        groups, cur = [], [0]
        for i in range(1, len(lefts)):
            if lefts[i] - rights[i - 1] <= self.merge_gap:
                cur.append(i)
            else:
                groups.append(cur)
                cur = [i]
        groups.append(cur)
        return groups

    def state(self, t, support: SupportSet, merged=False) -> FrontState:
        lefts = np.array([l for l, _ in support])
        rights = np.array([r for _, r in support])
        profs, sl, sr = self._solve(lefts, rights)
        return FrontState(t, support, tuple(profs), tuple(zip(sl.tolist(), sr.tolist())), merged)

    def step(self, st: FrontState, dt: float):
        """Advance by ``dt``.

        Returns the new state and ``(result_index, fused_indices)`` for each
        merge that happened during the step.
        """
        if dt == 0:
            return st, []
        lefts = np.array([l for l, _ in st.support])
        rights = np.array([r for _, r in st.support])
        sl0 = np.array([s[0] for s in st.speeds])
        sr0 = np.array([s[1] for s in st.speeds])
        lh = lefts - 0.5 * dt * sl0
        rh = rights + 0.5 * dt * sr0
        groups = self._groups(lh, rh)
        gl = np.array([lh[g[0]] for g in groups])
        gr = np.array([rh[g[-1]] for g in groups])
        _, slh, srh = self._solve(gl, gr)
        # endpoints swallowed at the half step keep their stage-one speed
        sl1, sr1 = sl0.copy(), sr0.copy()
        for j, g in enumerate(groups):
            sl1[g[0]] = slh[j]
            sr1[g[-1]] = srh[j]
        l1 = lefts - dt * sl1
        r1 = rights + dt * sr1
        groups = self._groups(l1, r1)
        support = SupportSet(tuple((float(l1[g[0]]), float(max(r1[g]))) for g in groups))
        new = self.state(st.time + dt, support)
        return new, [(j, tuple(g)) for j, g in enumerate(groups) if len(g) > 1]

    def run(self, omega0, T: float, sample_times=None) -> Trajectory:
        if not T >= 0:
            raise ValueError("T must be nonnegative")
        omega0 = SupportSet.of(omega0)
        if len(omega0) == 0:
            raise EmptySupport("initial support is empty")
        samples = sorted({float(s) for s in (sample_times or []) if 0.0 <= s <= T} | {0.0, float(T)})
        traj = Trajectory()
        st = self.state(0.0, omega0)
        traj.record(st, requested=True)
        t = 0.0
        collapse = 1e-14 * T
        for target in samples[1:]:
            while t < target:
                max_speed = max(max(s) for s in st.speeds)
                if not math.isfinite(max_speed):
                    raise StepCollapse(f"non-finite front speed at t={t}")
                dt = self.policy.dt(max_speed, T)
                last = target - t <= dt * (1 + 1e-9)
                if last:
                    dt = target - t
                elif dt < collapse:
                    raise StepCollapse(f"time step {dt:.3g} underflowed at t={t}")
                st, merges = self.step(st, dt)
                t = target if last else st.time
                st = FrontState(t, st.support, st.profiles, st.speeds, merged=bool(merges))
                traj.n_steps += 1
                traj.dt_min = min(traj.dt_min, dt)
                traj.dt_max = max(traj.dt_max, dt)
                for j, g in merges:
                    traj.events.append(MergeEvent(t, g, j, st.support.intervals[j]))
                if merges or last:
                    traj.record(st, requested=last)
        return traj


# ---------------------------------------------------------------------------
# the eps-scale problem


def micro_speed_fn(medium: MicroMedium) -> SpeedFn:
    """Outward speed ``B |p_x| + G`` using coefficient limits from inside."""

    def speeds(xl, gl, xr, gr):
        bl = np.atleast_1d(medium.coeff("B", xl, side=+1))
        gl_ = np.atleast_1d(medium.coeff("G", xl, side=+1))
        br = np.atleast_1d(medium.coeff("B", xr, side=-1))
        gr_ = np.atleast_1d(medium.coeff("G", xr, side=-1))
        return bl * np.abs(gl) + gl_, br * np.abs(gr) + gr_

    return speeds


def default_dt_policy(omega: FieldRealization, eps: float) -> DtPolicy:
    return DtPolicy(cell=eps * omega.model.length_scale)


def _tracker(omega, eps, dt_policy=None, tol=None, merge_gap=MERGE_GAP) -> FrontTracker:
    medium = MicroMedium(omega, eps)
    policy = dt_policy or default_dt_policy(omega, eps)
    return FrontTracker(lambda lo, hi: build_cache(medium, None, (lo, hi), tol),
                        micro_speed_fn(medium), policy, merge_gap)


def associated_state(omega, eps, support, t: float = 0.0, tol=None) -> FrontState:
    """Profiles and endpoint speeds for a given support."""
    return _tracker(omega, eps, tol=tol).state(t, SupportSet.of(support))


def endpoint_speed(omega, eps, state: FrontState, which) -> float:
    """Speed of endpoint ``which = (interval_index, "left" | "right")``."""
    index, side = which
    l, r = state.support.intervals[index]
    prof = state.profiles[index]
    medium = MicroMedium(omega, eps)
    if side == "left":
        return float(medium.coeff("B", l, +1) * abs(prof.grad_left) + medium.coeff("G", l, +1))
    if side == "right":
        return float(medium.coeff("B", r, -1) * abs(prof.grad_right) + medium.coeff("G", r, -1))
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def step(omega, eps, state: FrontState, dt: float, tol=None) -> FrontState:
    """One midpoint step of size ``dt`` followed by merging."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0:
        return state
    new, _ = _tracker(omega, eps, tol=tol).step(state, dt)
    return new


def simulate(omega, eps, omega0, T: float, dt_policy: DtPolicy | None = None,
             sample_times: Sequence[float] | None = None, tol=None) -> Trajectory:
    """Evolve the support from ``omega0`` up to time ``T``.

    States are stored at ``sample_times`` (plus ``0`` and ``T``) and at every
    merge event.
    """
    return _tracker(omega, eps, dt_policy, tol).run(omega0, T, sample_times)


# ---------------------------------------------------------------------------
# export

TRAJECTORY_COLUMNS = ("time", "interval_index", "left", "right", "grad_left", "grad_right",
                      "speed_left", "speed_right")


def _f(v):
    return format(float(v), ".17g")


def trajectory_rows(traj: Trajectory):
    for st in traj.states:
        for i, ((l, r), prof, (sl, sr)) in enumerate(zip(st.support, st.profiles, st.speeds)):
            yield (_f(st.time), str(i), _f(l), _f(r), _f(prof.grad_left), _f(prof.grad_right), _f(sl), _f(sr))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        w.writerows(trajectory_rows(traj))


def write_events_jsonl(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        for ev in traj.events:
            fh.write(json.dumps(ev.to_json(), sort_keys=True) + "\n")


def read_trajectory_csv(path):
    """Rows of a trajectory CSV as dicts of floats (``interval_index`` int)."""
    with open(path, newline="") as fh:
        rows = []
        for row in csv.DictReader(fh):
            rows.append({k: (int(v) if k == "interval_index" else float(v)) for k, v in row.items()})
    return rows
