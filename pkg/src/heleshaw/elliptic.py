"""Exact 1D solution of ``-(A p')' = F`` on an interval with Dirichlet data.

In one dimension the Dirichlet problem integrates in closed form::

    p(x) = a + C J(x) - M(x),     A p'(x) = C - K(x),

with the cumulative integrals (all taken from the left end ``l``)::

    J(x) = int_l^x 1/A,   K(x) = int_l^x F,   M(x) = int_l^x K(y)/A(y) dy,

and the flux constant ``C = (M(r) + b - a) / J(r)``.  :class:`QuadCache`
tabulates ``J, K, M`` at grid nodes by composite Gauss-Legendre quadrature on
a grid aligned with the jump set of the coefficients, and evaluates them at
arbitrary points of the interval.  Nothing is differentiated numerically:
boundary gradients come from the flux identity.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import OutOfDomain, TolNotReached
from .rand_fields import FieldRealization

MAX_NODES = 2**24
DEFAULT_TOL = 1e-10
N_GL = 8

_U, _W = np.polynomial.legendre.leggauss(N_GL)
_U = 0.5 * (_U + 1.0)
_W = 0.5 * _W


def _integration_matrix(u):
    # Q[i, j] = int_0^{u_i} l_j(s) ds for the Lagrange basis l_j on nodes u
    n = len(u)
    V = np.polynomial.legendre.legvander(2 * u - 1, n - 1)
    P = np.empty((n, n))
    for m in range(n):
        c = np.zeros(n)
        c[m] = 1.0
        P[:, m] = 0.5 * np.polynomial.legendre.legval(2 * u - 1, np.polynomial.legendre.legint(c, lbnd=-1))
    return P @ np.linalg.inv(V)


_Q = _integration_matrix(_U)


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


# ---------------------------------------------------------------------------
# media: coefficient functions of the physical coordinate


class MicroMedium:
    """``A(x, x/eps)`` etc.; with ``frozen_at`` the slow argument is fixed."""

    def __init__(self, omega: FieldRealization, eps: float = 1.0, frozen_at: float | None = None):
        if not eps > 0 or not math.isfinite(eps):
            raise ValueError("eps must be positive and finite for a realization")
        self.omega = omega
        self.eps = float(eps)
        self.frozen_at = frozen_at
        self.resolution = self.eps * omega.model.length_scale / 16.0

    def coeff(self, name, x, side=0):
        x = np.asarray(x, dtype=float)
        slow = x if self.frozen_at is None else self.frozen_at
        return self.omega.coeff(name, slow, x / self.eps, side)

    def breakpoints(self, lo, hi):
        return self.eps * self.omega.breakpoints(lo / self.eps, hi / self.eps)


@dataclass(frozen=True, eq=False)
class EffectiveCoefficients:
    """Homogenized ``A_bar(x)``, ``F_bar(x)`` as piecewise-linear curves.

    A single node means the curves are constant on the whole line.
    """

    x: np.ndarray
    a_bar: np.ndarray
    f_bar: np.ndarray

    def __post_init__(self):
        for name in ("x", "a_bar", "f_bar"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if not (len(self.x) == len(self.a_bar) == len(self.f_bar)) or len(self.x) == 0:
            raise ValueError("effective coefficient curves must share one nonempty grid")
        if np.any(self.a_bar <= 0) or np.any(self.f_bar <= 0):
            raise ValueError("effective coefficients must be strictly positive")
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("effective coefficient grid must be increasing")

    @property
    def resolution(self):
        if len(self.x) < 2:
            return math.inf
        return float(np.min(np.diff(self.x)))

    def coeff(self, name, x, side=0):
        x = np.asarray(x, dtype=float)
        if name in ("B", "G"):
            raise KeyError("effective media carry only A and F; boundary speed comes from the table")
        vals = self.a_bar if name == "A" else self.f_bar
        if len(vals) == 1:
            return np.full(x.shape, vals[0]) if x.ndim else float(vals[0])
        out = np.interp(x, self.x, vals)
        return out

    def breakpoints(self, lo, hi):
        return self.x[(self.x > lo) & (self.x < hi)]


def as_medium(omega, eps=1.0, frozen_at=None):
    if isinstance(omega, FieldRealization):
        return MicroMedium(omega, eps, frozen_at)
    if hasattr(omega, "coeff") and hasattr(omega, "breakpoints"):
        return omega
    raise TypeError(f"cannot build a medium from {type(omega).__name__}")


# ---------------------------------------------------------------------------
# quadrature


def _grid(lo, hi, n_uniform, breaks):
    nodes = np.linspace(lo, hi, n_uniform + 1)
    if len(breaks):
        snap = 1e-12 * max(1.0, hi - lo)
        breaks = np.asarray(breaks, dtype=float)
        breaks = breaks[(breaks > lo + snap) & (breaks < hi - snap)]
        idx = np.searchsorted(breaks, nodes)
        near = np.zeros(len(nodes), dtype=bool)
        for off in (0, -1):
            j = np.clip(idx + off, 0, max(len(breaks) - 1, 0))
            if len(breaks):
                near |= np.abs(breaks[j] - nodes) < snap
        near[0] = near[-1] = False
        nodes = np.union1d(nodes[~near], breaks)
    return nodes


def _increments(medium, a, b):
    """Per-segment ``(dJ, dK, dM_local)`` over ``[a_k, b_k]`` (arrays).

    ``dM_local = int_a^b (int_a^y F) / A dy``; the full ``M`` increment adds
    ``K(a) * dJ``.
    """
    h = (b - a)[:, None]
    s = a[:, None] + h * _U[None, :]
    inv_a = 1.0 / medium.coeff("A", s)
    f = medium.coeff("F", s)
    dJ = (h[:, 0]) * (inv_a @ _W)
    dK = (h[:, 0]) * (f @ _W)
    inner = h * (f @ _Q.T)
    dM = (h[:, 0]) * ((inv_a * inner) @ _W)
    return dJ, dK, dM


@dataclass(frozen=True, eq=False)
class QuadCache:
    """Cumulative ``int 1/A``, ``int F`` and ``int (int F)/A`` from ``l``."""

    interval: tuple[float, float]
    grid: np.ndarray
    I_invA: np.ndarray
    I_F: np.ndarray
    I_FoverA: np.ndarray
    tol: float
    medium: object

    def locate(self, x):
        x = np.asarray(x, dtype=float)
        l, r = self.interval
        span = r - l
        if np.any(x < l - 1e-12 * span) or np.any(x > r + 1e-12 * span):
            raise OutOfDomain(f"point outside cache interval [{l}, {r}]")
        k = np.searchsorted(self.grid, x, side="right") - 1
        return np.clip(k, 0, len(self.grid) - 2)

    def antiderivatives(self, x):
        """``(J, K, M)`` at arbitrary points of the interval."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k = self.locate(x)
        a = self.grid[k]
        dJ, dK, dM = _increments(self.medium, a, x)
        K0 = self.I_F[k]
        return self.I_invA[k] + dJ, K0 + dK, self.I_FoverA[k] + K0 * dJ + dM


def _tabulate(medium, lo, hi, n_uniform, breaks):
    grid = _grid(lo, hi, n_uniform, breaks)
    dJ, dK, dM = _increments(medium, grid[:-1], grid[1:])
    J = np.concatenate(([0.0], np.cumsum(dJ)))
    K = np.concatenate(([0.0], np.cumsum(dK)))
    M = np.concatenate(([0.0], np.cumsum(K[:-1] * dJ + dM)))
    return grid, J, K, M


def build_cache(omega, eps, interval, tol=None, *, frozen_at=None) -> QuadCache:
    """Tabulate the cumulative integrals on ``interval`` to accuracy ``tol``.

    ``omega`` is a :class:`FieldRealization` (evaluated at fast coordinate
    ``x / eps``, or with the slow argument frozen at ``frozen_at``) or an
    :class:`EffectiveCoefficients` object, in which case ``eps`` is ignored
    (pass ``math.inf``).  The grid is refined by doubling until the endpoint
    values move by less than ``tol``; the default tolerance is ``1e-10`` per
    unit length.
    """
    l, r = map(float, interval)
    if not l < r:
        raise ValueError(f"empty interval ({l}, {r})")
    if tol is None:
        tol = DEFAULT_TOL * max(1.0, r - l)
    if not tol > 0:
        raise ValueError("tol must be positive")
    if isinstance(omega, FieldRealization):
        if eps is None or math.isinf(eps):
            raise ValueError("a field realization needs a finite eps; use EffectiveCoefficients for eps = inf")
        medium = MicroMedium(omega, eps, frozen_at)
    else:
        medium = as_medium(omega)
    breaks = medium.breakpoints(l, r)
    res = medium.resolution
    n = max(1, int(math.ceil((r - l) / res))) if math.isfinite(res) else 1
    prev = _tabulate(medium, l, r, n, breaks)
    while True:
        n *= 2
        cur = _tabulate(medium, l, r, n, breaks)
        change = max(abs(cur[i][-1] - prev[i][-1]) for i in (1, 2, 3))
        if change < tol:
            break
        if len(cur[0]) > MAX_NODES:
            raise TolNotReached(f"grid doubling stalled at {len(cur[0])} nodes (change {change:.3g} > tol {tol:.3g})")
        prev = cur
    grid, J, K, M = cur
    return QuadCache((l, r), grid, J, K, M, float(tol), medium)


# ---------------------------------------------------------------------------
# pressure profiles


@dataclass(frozen=True, eq=False)
class PressureProfile:
    """Solution on ``interval`` with Dirichlet data ``bc = (a, b)``.

    ``cache`` may cover a larger hull than ``interval``; the integrals from
    ``l`` are then differences of the hull antiderivatives.
    """

    interval: tuple[float, float]
    bc: tuple[float, float]
    flux_const: float
    cache: QuadCache
    grad_left: float
    grad_right: float
    _base: tuple[float, float, float]

    @property
    def tol(self):
        return self.cache.tol

    def _local(self, x):
        J, K, M = self.cache.antiderivatives(x)
        J0, K0, M0 = self._base
        dJ = J - J0
        return dJ, K - K0, (M - M0) - K0 * dJ

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        l, r = self.interval
        slack = 1e-12 * (r - l)
        if np.any(x < l - slack) or np.any(x > r + slack):
            raise OutOfDomain(f"x outside profile interval [{l}, {r}]")
        dJ, _, dM = self._local(np.clip(x, l, r).ravel())
        p = self.bc[0] + self.flux_const * dJ - dM
        p = np.maximum(p, 0.0).reshape(x.shape)
        return float(p) if p.ndim == 0 else p

    def flux(self, x):
        """``A p_x`` at ``x`` from the flux identity."""
        _, dK, _ = self._local(np.atleast_1d(x))
        return self.flux_const - dK


def solve_on_cache(cache: QuadCache, intervals, bcs=None) -> list[PressureProfile]:
    """Profiles on several subintervals of ``cache.interval`` in one batch."""
    iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
    if bcs is None:
        bcs = np.zeros_like(iv)
    bcs = np.asarray(bcs, dtype=float).reshape(-1, 2)
    pts = iv.ravel()
    J, K, M = cache.antiderivatives(pts)
    J, K, M = J.reshape(-1, 2), K.reshape(-1, 2), M.reshape(-1, 2)
    dJ = J[:, 1] - J[:, 0]
    dK = K[:, 1] - K[:, 0]
    dM = (M[:, 1] - M[:, 0]) - K[:, 0] * dJ
    C = (dM + bcs[:, 1] - bcs[:, 0]) / dJ
    medium = cache.medium
    A_l = np.atleast_1d(medium.coeff("A", iv[:, 0], side=+1))
    A_r = np.atleast_1d(medium.coeff("A", iv[:, 1], side=-1))
    out = []
    for i in range(len(iv)):
        out.append(PressureProfile(
            interval=(float(iv[i, 0]), float(iv[i, 1])),
            bc=(float(bcs[i, 0]), float(bcs[i, 1])),
            flux_const=float(C[i]),
            cache=cache,
            grad_left=float(C[i] / A_l[i]),
            grad_right=float((C[i] - dK[i]) / A_r[i]),
            _base=(float(J[i, 0]), float(K[i, 0]), float(M[i, 0])),
        ))
    return out


def solve_dirichlet(omega, eps, interval, a, b, tol=None, *, frozen_at=None) -> PressureProfile:
    """Solve ``-(A p')' = F`` on ``interval`` with ``p(l) = a``, ``p(r) = b``."""
    if a < 0 or b < 0:
        raise ValueError("Dirichlet data must be nonnegative")
    cache = build_cache(omega, eps, interval, tol, frozen_at=frozen_at)
    return solve_on_cache(cache, [interval], [(a, b)])[0]


def solve_zero_dirichlet(omega, eps, interval, tol=None, *, frozen_at=None) -> PressureProfile:
    """The associated function of ``interval``: zero Dirichlet data.

    Asserts the positivity structure: ``p > 0`` inside, ``p_x(l) > 0 > p_x(r)``.
    """
    prof = solve_dirichlet(omega, eps, interval, 0.0, 0.0, tol, frozen_at=frozen_at)
    l, r = prof.interval
    inner = l + (r - l) * _U
    if not (prof.grad_left > 0 > prof.grad_right) or np.any(prof(inner) <= 0):
        raise ArithmeticError("zero-Dirichlet profile lost positivity; F must be positive")
    return prof


def boundary_gradient(profile: PressureProfile, side) -> float:
    """``p_x`` at an endpoint, from the flux identity (no differencing)."""
    side = Side(side) if not isinstance(side, Side) else side
    return profile.grad_left if side is Side.LEFT else profile.grad_right


def eval_pressure(profile: PressureProfile, x):
    return profile(x)


def effective_profile(coeffs: EffectiveCoefficients, interval, a, b, tol=None) -> PressureProfile:
    """Dirichlet solution for the homogenized coefficients."""
    return solve_dirichlet(coeffs, math.inf, interval, a, b, tol)
