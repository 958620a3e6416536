"""Homogenized quantities: harmonic mean, effective coefficients, effective velocity.

With the coefficients frozen at a slow position ``x_s`` the free boundary
obeys the scalar ODE ::

    dS/dt = f(S) = q b(S) a_bar / a(S) + g(S),

where ``a, b, g`` are ``A, B, G`` at ``(x_s, S)`` and ``a_bar`` is the
harmonic mean of ``a``.  Since ``f > 0`` the arrival time at ``x0 + n`` is
the spatial integral of ``1/f`` and is exactly additive along the path.  The
effective velocity is the limit of ``n / T(n)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .elliptic import EffectiveCoefficients, _U, _W, _grid
from .errors import NoConvergence, OutOfTable, StalledFront
from .rand_fields import FieldModel, FieldRealization, counter_uniform, sample_realization

DEFAULT_SCHEDULE = tuple(2**k for k in range(4, 17))
_CHUNK = 1 << 15


class FrozenLine:
    """Coefficients ``a, b, g`` along the fast axis with the slow argument fixed.

    ``reflect=True`` uses ``y -> -y`` (for ``g`` only when ``reflect_g``).
    """

    def __init__(self, omega: FieldRealization, x_slow: float, reflect: bool = False, reflect_g: bool = True):
        self.omega = omega
        self.x_slow = float(x_slow)
        self.sign = -1.0 if reflect else 1.0
        self.sign_g = self.sign if reflect_g else 1.0
        self.length_scale = omega.model.length_scale

    def coeff(self, name, y, side=0):
        s = self.sign_g if name == "G" else self.sign
        return self.omega.coeff(name, self.x_slow, s * np.asarray(y, dtype=float), int(s) * side)

    def breakpoints(self, lo, hi):
        out = []
        for s in {self.sign, self.sign_g}:
            b = self.omega.breakpoints(min(s * lo, s * hi), max(s * lo, s * hi))
            out.append(s * b)
        return np.unique(np.concatenate(out)) if out else np.empty(0)


def analytic_a_bar(model: FieldModel, x: float = 0.0) -> float:
    """Harmonic mean ``1 / E[1/A(x, 0)]`` from the model law."""
    return 1.0 / model.marginal_mean("A", x, lambda v: 1.0 / v)


def speed_bounds(model: FieldModel, q: float, x: float = 0.0, a_bar: float | None = None):
    """``[|q| c_min, |q| C_max + G_max]`` with ``c_min, C_max`` the extremes of ``a_bar b/a``."""
    if a_bar is None:
        a_bar = analytic_a_bar(model, x)
    b = model.bounds
    c_min = a_bar * b.B_min / b.A_max
    C_max = a_bar * b.B_max / b.A_min
    return abs(q) * c_min, abs(q) * C_max + b.G_max


# ---------------------------------------------------------------------------
# line quadrature


def _line_cells(line, lo, hi, spacing, extra_nodes=()):
    n = max(1, int(math.ceil((hi - lo) / spacing)))
    breaks = line.breakpoints(lo, hi)
    if len(extra_nodes):
        breaks = np.union1d(breaks, np.asarray(extra_nodes, dtype=float))
    return _grid(lo, hi, n, breaks)


def _cell_integrals(func, grid):
    out = np.empty(len(grid) - 1)
    for s in range(0, len(grid) - 1, _CHUNK):
        a = grid[s:s + _CHUNK + 1]
        h = np.diff(a)
        pts = a[:-1, None] + h[:, None] * _U[None, :]
        out[s:s + len(h)] = h * (func(pts) @ _W)
    return out


def _line_spacing(line):
    return line.length_scale if line.omega.model.nonsmooth else 0.25 * line.length_scale


def _cumulative(func, line, lo, hi, nodes, rtol=1e-12, max_cells=1 << 26):
    """Integral of ``func`` from ``lo`` to each point of ``nodes`` (sorted, in [lo, hi]).

    The grid is doubled until the total moves by less than ``rtol`` relative.
    """
    spacing = _line_spacing(line)
    nodes = np.asarray(nodes, dtype=float)
    prev = None
    while True:
        grid = _line_cells(line, lo, hi, spacing, nodes[(nodes > lo) & (nodes < hi)])
        cum = np.concatenate(([0.0], np.cumsum(_cell_integrals(func, grid))))
        vals = np.interp(nodes, grid, cum)  # nodes are grid points: exact lookup
        if prev is not None and abs(vals[-1] - prev[-1]) <= rtol * max(abs(vals[-1]), 1e-300):
            return vals
        if len(grid) > max_cells:
            raise NoConvergence("line quadrature did not settle under grid doubling")
        prev = vals
        spacing *= 0.5


# ---------------------------------------------------------------------------
# harmonic mean and effective coefficients


def harmonic_mean_A(omega: FieldRealization, x0: float, window: float | None = None,
                    tol: float = 1e-6, max_window: float = 2.0**20, start: float = 16.0) -> float:
    """Windowed harmonic mean ``M / int_{-M}^0 1/a`` of ``a(y) = A(x0, y)``.

    With ``window`` given the estimate at that window is returned.  Otherwise
    the window is doubled from ``start`` until the relative change drops
    below ``tol``; :class:`NoConvergence` past ``max_window``.
    """
    line = FrozenLine(omega, x0)
    inv = lambda y: 1.0 / line.coeff("A", y)  # noqa: E731
    if window is not None:
        return float(window / _cumulative(inv, line, -window, 0.0, [0.0])[-1])
    M = float(start)
    total = _cumulative(inv, line, -M, 0.0, [0.0])[-1]
    est = M / total
    while M < max_window:
        total += _cumulative(inv, line, -2 * M, -M, [-M])[-1]
        M *= 2
        new = M / total
        if abs(new - est) <= tol * abs(new):
            return float(new)
        est = new
    raise NoConvergence(f"harmonic mean not stable to {tol:g} by window {max_window:g} (last {est:.6g})")


@dataclass
class EffectiveCoeffsResult:
    x: np.ndarray
    a_bar: np.ndarray
    f_bar: np.ndarray
    a_bar_mc: np.ndarray
    f_bar_mc: np.ndarray
    a_bar_se: np.ndarray
    f_bar_se: np.ndarray
    window: float
    n_seeds: int

    def curves(self) -> EffectiveCoefficients:
        return EffectiveCoefficients(self.x, self.a_bar, self.f_bar)


def windowed_means(omega: FieldRealization, x0: float, window: float):
    """``(1/M int 1/A, 1/M int F)`` over ``y in [-M, 0]``."""
    line = FrozenLine(omega, x0)
    ia = _cumulative(lambda y: 1.0 / line.coeff("A", y), line, -window, 0.0, [0.0])[-1]
    f = _cumulative(lambda y: line.coeff("F", y), line, -window, 0.0, [0.0])[-1]
    return ia / window, f / window


def effective_coeffs(model: FieldModel, x_grid, n_seeds: int = 8, window: float = 2.0**14,
                     seeds=None) -> EffectiveCoeffsResult:
    """``A_bar = 1/E[1/A]`` and ``F_bar = E[F]`` at each slow position.

    The analytic expectation (exact for every bundled kind) is returned as the
    value; the Monte Carlo spatial-window estimate over ``n_seeds``
    realizations is attached as a diagnostic.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    xs = np.atleast_1d(np.asarray(x_grid, dtype=float))
    seeds = list(range(n_seeds)) if seeds is None else list(seeds)
    a_an = np.array([analytic_a_bar(model, x) for x in xs])
    f_an = np.array([model.marginal_mean("F", x) for x in xs])
    inv_mc = np.empty((len(seeds), len(xs)))
    f_mc = np.empty((len(seeds), len(xs)))
    for i, s in enumerate(seeds):
        w = sample_realization(model, s)
        for j, x in enumerate(xs):
            inv_mc[i, j], f_mc[i, j] = windowed_means(w, x, window)
    n = len(seeds)
    inv_mean = inv_mc.mean(axis=0)
    se = (lambda v: v.std(axis=0, ddof=1) / math.sqrt(n)) if n > 1 else (lambda v: np.zeros(v.shape[1]))
    a_mc = 1.0 / inv_mean
    return EffectiveCoeffsResult(xs, a_an, f_an, a_mc, f_mc.mean(axis=0), a_mc**2 * se(inv_mc), se(f_mc),
                                 float(window), n)


# ---------------------------------------------------------------------------
# the frozen front ODE and arrival times


def _front_speed(line: FrozenLine, q: float, a_bar: float):
    def f(y, side=0):
        return q * line.coeff("B", y, side) * a_bar / line.coeff("A", y, side) + line.coeff("G", y, side)
    return f


def solve_frozen_ode(omega: FieldRealization, x0: float, q: float, T: float, dt: float, *,
                     a_bar: float | None = None, x_slow: float | None = None,
                     reflect: bool = False, reflect_g: bool = True):
    """Classical RK4 for ``S' = q b(S) a_bar/a(S) + g(S)``, ``S(0) = x0``.

    Returns ``(t, S)`` arrays on the uniform grid ``0, dt, ..., T``.
    """
    if q < 0:
        raise ValueError("q must be nonnegative; use reflect=True for leftward fronts")
    x_slow = x0 if x_slow is None else x_slow
    if a_bar is None:
        a_bar = analytic_a_bar(omega.model, x_slow)
    line = FrozenLine(omega, x_slow, reflect, reflect_g)
    f = _front_speed(line, q, a_bar)
    n = int(round(T / dt))
    if n < 0 or not math.isclose(n * dt, T, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("T must be a nonnegative multiple of dt")
    S = np.empty(n + 1)
    S[0] = x0
    s = float(x0)
    for i in range(n):
        k1 = float(f(s))
        k2 = float(f(s + 0.5 * dt * k1))
        k3 = float(f(s + 0.5 * dt * k2))
        k4 = float(f(s + dt * k3))
        s += dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        S[i + 1] = s
    return np.arange(n + 1) * dt, S


def rescale_front(t, S, x0: float, eps: float):
    """Map a fast-scale front to scale ``eps``: ``(eps t, eps (S - x0) + x0)``."""
    t = np.asarray(t, dtype=float)
    S = np.asarray(S, dtype=float)
    return eps * t, eps * (S - x0) + x0


def arrival_curve(omega: FieldRealization, x0: float, q: float, distances, *, a_bar=None, x_slow=None,
                  reflect: bool = False, reflect_g: bool = True):
    """Arrival times ``T(x0 + n)`` for each ``n`` in ``distances`` (one sweep)."""
    if not q > 0 and not omega.model.g_mode.strictly_positive:
        raise StalledFront("q = 0 with G identically zero: the front does not move")
    x_slow = x0 if x_slow is None else x_slow
    if a_bar is None:
        a_bar = analytic_a_bar(omega.model, x_slow)
    line = FrozenLine(omega, x_slow, reflect, reflect_g)
    f = _front_speed(line, q, a_bar)
    fmin = [math.inf]

    def inv(y):
        v = f(y)
        fmin[0] = min(fmin[0], float(np.min(v)))
        return 1.0 / v

    d = np.asarray(distances, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    order = np.argsort(d)
    nodes = x0 + d[order]
    vals = _cumulative(inv, line, float(x0), float(nodes[-1]), nodes) if nodes[-1] > x0 else np.zeros(len(d))
    if fmin[0] <= 0:
        raise StalledFront(f"front speed reaches {fmin[0]:g} <= 0")
    out = np.empty(len(d))
    out[order] = vals
    return out


def arrival_time(omega: FieldRealization, x0: float, q: float, n: float, **kw) -> float:
    """Time for the frozen front started at ``x0`` to reach ``x0 + n``."""
    return float(arrival_curve(omega, x0, q, [n], **kw)[0])


# ---------------------------------------------------------------------------
# effective velocity


@dataclass
class CellResult:
    x0: float
    q: float
    a_bar: float
    v_bar: float
    window: float
    ci_halfwidth: float
    diagnostics: dict = field(default_factory=dict)
    bounds: tuple[float, float] = (0.0, math.inf)

    def within_bounds(self, rtol: float = 1e-12) -> bool:
        lo, hi = self.bounds
        return lo * (1 - rtol) <= self.v_bar <= hi * (1 + rtol)


def g_anchor(model: FieldModel, x: float = 0.0) -> float:
    """Effective speed at zero slope: harmonic mean of ``g`` (0 when ``g = 0``)."""
    if not model.g_mode.strictly_positive:
        return 0.0
    return 1.0 / model.marginal_mean("G", x, lambda v: 1.0 / v)


def estimate_vbar(model: FieldModel, x0: float, q: float, n_schedule=DEFAULT_SCHEDULE, n_seeds: int = 8, *,
                  seeds=None, tol: float = 1e-3, reflect_g: bool = True, a_bar: float | None = None,
                  strict: bool = True) -> CellResult:
    """Effective front speed ``n / T(n)`` at slope ``q`` (sign picks the direction).

    ``q > 0`` runs the frozen front along ``+y``; ``q < 0`` reflects the
    coefficients and runs the same estimator with ``|q|``.  The value is the
    seed-pooled ``n S / sum_s T_s(n)`` at the largest ``n``; ``ci_halfwidth``
    is the larger of the seed spread and the change between the last two
    schedule entries.  With ``strict`` a change above ``5 tol`` (relative)
    raises :class:`NoConvergence`.
    """
    schedule = np.asarray(sorted(n_schedule), dtype=float)
    seeds = list(range(n_seeds)) if seeds is None else list(seeds)
    if a_bar is None:
        a_bar = analytic_a_bar(model, x0)
    bounds = speed_bounds(model, q, x0, a_bar)
    if q == 0:
        v0 = g_anchor(model, x0)
        return CellResult(x0, 0.0, a_bar, v0, float(schedule[-1]), 0.0, {"anchor": True}, bounds)
    T = np.empty((len(seeds), len(schedule)))
    for i, s in enumerate(seeds):
        w = sample_realization(model, s)
        T[i] = arrival_curve(w, x0, abs(q), schedule, a_bar=a_bar, x_slow=x0, reflect=q < 0, reflect_g=reflect_g)
    pooled = schedule * len(seeds) / T.sum(axis=0)
    per_seed = schedule[None, :] / T
    v = float(pooled[-1])
    change = float(abs(pooled[-1] - pooled[-2])) if len(schedule) > 1 else 0.0
    spread = float(np.max(np.abs(per_seed[:, -1] - v)))
    diag = {"schedule": schedule.tolist(), "pooled": pooled.tolist(), "per_seed_final": per_seed[:, -1].tolist(),
            "seeds": seeds, "last_change": change, "converged": change <= 5 * tol * v}
    res = CellResult(float(x0), float(q), float(a_bar), v, float(schedule[-1]), max(spread, change), diag, bounds)
    if strict and not diag["converged"]:
        raise NoConvergence(f"V_bar(x0={x0}, q={q}) moved {change:.3g} between the last two windows "
                            f"(> 5 tol = {5 * tol * v:.3g})")
    return res


@dataclass
class OracleResult:
    value: float
    stderr: float
    a_bar: float
    n: int


def vbar_oracle(model: FieldModel, x0: float, q: float, n_mc: int = 200_000, seed: int = 990_001) -> OracleResult:
    """Monte Carlo harmonic mean of the local front speed (test oracle).

    Draws ``n_mc`` one-point samples of ``(a, b, g)`` at well-separated
    random positions (independent lattice cells) of one realization, estimates
    ``a_bar = 1/mean(1/a)`` from the same samples and returns
    ``1 / mean(1 / (|q| a_bar b / a + g))`` with a delta-method standard error.
    """
    w = FieldRealization(model, seed)
    L = model.length_scale
    u = counter_uniform(seed, 77, np.arange(n_mc))
    y = (3.0 * np.arange(n_mc) + u) * L
    a, b, g = (np.asarray(w.coeff(n, x0, y)) for n in ("A", "B", "G"))
    a_bar = 1.0 / np.mean(1.0 / a)
    if q == 0:
        if not model.g_mode.strictly_positive:
            return OracleResult(0.0, 0.0, float(a_bar), n_mc)
        r = 1.0 / g
    else:
        r = 1.0 / (abs(q) * a_bar * b / a + g)
    m = float(np.mean(r))
    se = float(np.std(r, ddof=1) / math.sqrt(n_mc)) / m**2
    return OracleResult(1.0 / m, se, float(a_bar), n_mc)


# ---------------------------------------------------------------------------
# tables


def pava(values) -> np.ndarray:
    """Least-squares nondecreasing projection (pool adjacent violators)."""
    vals = [float(v) for v in values]
    blocks = []  # (mean, weight)
    for v in vals:
        blocks.append([v, 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            m2, w2 = blocks.pop()
            m1, w1 = blocks.pop()
            blocks.append([(m1 * w1 + m2 * w2) / (w1 + w2), w1 + w2])
    out = []
    for m, w in blocks:
        out.extend([m] * w)
    return np.array(out)


@dataclass
class EffVelTable:
    """``V_bar`` on an ``(x, q)`` grid for both directions of motion.

    ``v_plus`` holds speeds of fronts moving toward ``+x`` (coefficients as
    given), ``v_minus`` of fronts moving toward ``-x`` (reflected).  ``v_zero``
    is the zero-slope anchor per ``x``.
    """

    x_grid: np.ndarray
    q_grid: np.ndarray
    v_plus: np.ndarray
    v_minus: np.ndarray
    a_bar: np.ndarray
    f_bar: np.ndarray
    v_zero: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x_grid = np.atleast_1d(np.asarray(self.x_grid, dtype=float))
        self.q_grid = np.atleast_1d(np.asarray(self.q_grid, dtype=float))
        shape = (len(self.x_grid), len(self.q_grid))
        self.v_plus = np.asarray(self.v_plus, dtype=float).reshape(shape)
        self.v_minus = np.asarray(self.v_minus, dtype=float).reshape(shape)
        for name in ("a_bar", "f_bar", "v_zero"):
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if np.any(np.diff(self.q_grid) <= 0) or self.q_grid[0] <= 0:
            raise ValueError("q_grid must be positive and increasing")
        if np.any(np.diff(self.x_grid) <= 0):
            raise ValueError("x_grid must be increasing")

    def coefficient_curves(self) -> EffectiveCoefficients:
        return EffectiveCoefficients(self.x_grid, self.a_bar, self.f_bar)

    @property
    def failures(self):
        return self.diagnostics.get("failures", [])

    def to_json(self) -> dict:
        return {
            "schema": "heleshaw.vel_table/1",
            "x_grid": self.x_grid.tolist(),
            "q_grid": self.q_grid.tolist(),
            "v_plus": self.v_plus.tolist(),
            "v_minus": self.v_minus.tolist(),
            "a_bar": self.a_bar.tolist(),
            "f_bar": self.f_bar.tolist(),
            "v_zero": self.v_zero.tolist(),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json(cls, data) -> "EffVelTable":
        return cls(data["x_grid"], data["q_grid"], data["v_plus"], data["v_minus"], data["a_bar"],
                   data["f_bar"], data.get("v_zero", [0.0] * len(data["x_grid"])), data.get("diagnostics", {}))


def _table_cell(args):
    model, x, q, schedule, seeds, reflect_g, tol = args
    try:
        r = estimate_vbar(model, x, q, schedule, seeds=seeds, reflect_g=reflect_g, tol=tol, strict=False)
    except NoConvergence as exc:  # pragma: no cover - estimate_vbar is non-strict here
        return math.nan, math.inf, str(exc), False
    msg = None if r.diagnostics["converged"] else f"no convergence at x={x}, q={q}: change {r.diagnostics['last_change']:.3g}"
    return r.v_bar, r.ci_halfwidth, msg, r.within_bounds()


def preprojection_violations(row) -> float:
    """Largest relative decrease between consecutive entries (0 if monotone)."""
    row = np.asarray(row, dtype=float)
    if len(row) < 2:
        return 0.0
    drops = (row[:-1] - row[1:]) / np.maximum(np.abs(row[:-1]), 1e-300)
    return float(max(0.0, drops.max()))


def build_vel_table(model: FieldModel, x_grid, q_grid, n_seeds: int = 8, *, n_schedule=DEFAULT_SCHEDULE,
                    seeds=None, reflect_g: bool = True, tol: float = 1e-3, jobs: int = 1) -> EffVelTable:
    """Fill ``V_bar(x, +q)`` and ``V_bar(x, -q)`` with :func:`estimate_vbar`.

    Rows are then projected to be nondecreasing in ``q``.  Non-converged
    cells are collected in ``diagnostics["failures"]`` rather than raised.
    The same seeds are used in every cell (common random numbers).
    """
    xs = np.atleast_1d(np.asarray(x_grid, dtype=float))
    qs = np.atleast_1d(np.asarray(q_grid, dtype=float))
    seeds = list(range(n_seeds)) if seeds is None else list(seeds)
    work = [(model, float(x), float(sgn * q), tuple(n_schedule), tuple(seeds), reflect_g, tol)
            for x in xs for sgn in (1, -1) for q in qs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_table_cell, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        results = [_table_cell(w) for w in work]
    nq = len(qs)
    raw = np.array([r[0] for r in results]).reshape(len(xs), 2, nq)
    ci = np.array([r[1] for r in results]).reshape(len(xs), 2, nq)
    failures = [r[2] for r in results if r[2]]
    bounds_ok = all(r[3] for r in results)
    v_plus, v_minus = raw[:, 0].copy(), raw[:, 1].copy()
    projected = 0
    worst = 0.0
    for mat in (v_plus, v_minus):
        for i in range(len(xs)):
            worst = max(worst, preprojection_violations(mat[i]))
            proj = pava(mat[i])
            projected += int(np.sum(proj != mat[i]))
            mat[i] = proj
    a_bar = np.array([analytic_a_bar(model, x) for x in xs])
    f_bar = np.array([model.marginal_mean("F", x) for x in xs])
    v_zero = np.array([g_anchor(model, x) for x in xs])
    diag = {
        "ci_plus": ci[:, 0].tolist(),
        "ci_minus": ci[:, 1].tolist(),
        "raw_plus": raw[:, 0].tolist(),
        "raw_minus": raw[:, 1].tolist(),
        "projected_entries": projected,
        "max_preprojection_violation": worst,
        "bounds_ok": bounds_ok,
        "failures": failures,
        "seeds": seeds,
        "schedule": list(map(float, n_schedule)),
        "reflect_g": reflect_g,
    }
    return EffVelTable(xs, qs, v_plus, v_minus, a_bar, f_bar, v_zero, diag)


def _interp_q(row, qs, v0, q):
    if q <= qs[0]:
        return v0 + (row[0] - v0) * (q / qs[0])
    return float(np.interp(q, qs, row))


def velocity_lookup(table: EffVelTable, x: float, slope: float) -> float:
    """Normal speed of a free-boundary point at ``x`` with pressure slope ``slope``.

    A right endpoint (``slope < 0``) moves toward ``+x`` and uses ``v_plus``;
    a left endpoint (``slope > 0``) uses ``v_minus``.  Bilinear in
    ``(x, |slope|)``; below the first ``q`` node the value is interpolated
    linearly toward the zero-slope anchor.  A single ``x`` node means the
    table is independent of ``x``.
    """
    q = abs(float(slope))
    qs = table.q_grid
    if q > qs[-1] * (1 + 1e-12):
        raise OutOfTable(f"|p_x| = {q:.6g} exceeds table maximum {qs[-1]:.6g}", x=x, q=q)
    mat = table.v_plus if slope < 0 else table.v_minus
    xs = table.x_grid
    if len(xs) == 1:
        return _interp_q(mat[0], qs, table.v_zero[0], q)
    if x < xs[0] - 1e-12 or x > xs[-1] + 1e-12:
        raise OutOfTable(f"front at x = {x:.6g} left the table hull [{xs[0]:.6g}, {xs[-1]:.6g}]", x=x, q=q)
    i = int(np.clip(np.searchsorted(xs, x) - 1, 0, len(xs) - 2))
    w = (x - xs[i]) / (xs[i + 1] - xs[i])
    w = min(max(w, 0.0), 1.0)
    v_lo = _interp_q(mat[i], qs, table.v_zero[i], q)
    v_hi = _interp_q(mat[i + 1], qs, table.v_zero[i + 1], q)
    return (1 - w) * v_lo + w * v_hi
