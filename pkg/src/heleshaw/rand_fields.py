"""Stationary ergodic coefficient fields A, B, F, G and the shift group.

A model describes the law of the coefficient quadruple; a realization is one
draw from it identified by a 64-bit seed.  All randomness is counter based:
the value attached to lattice cell ``k`` is a hash of ``(seed, stream, k)``,
so evaluation is a pure function of its arguments and never depends on query
order or history.

Coordinates follow the two-scale convention ``A(x, y)``: ``x`` is the slow
(macroscopic) position and ``y`` the fast coordinate.  A realization shifted
by ``z`` satisfies ``eval(shift(w, z), x, y) == eval(w, x, y + z)``.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, InvalidModel

COEFFS = ("A", "B", "F", "G")
_STREAM = {"shift": 0, "A": 1, "B": 2, "F": 3, "G": 4, "phase": 5}

_M64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)


def _splitmix(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MUL1
        z = (z ^ (z >> np.uint64(27))) * _MUL2
        return z ^ (z >> np.uint64(31))


def counter_uniform(seed, stream, index):
    """Uniform variates in [0, 1) indexed by integer ``index`` (vectorized).

    The result depends only on ``(seed, stream, index)``.
    """
    key = np.array([int(seed) & _M64], dtype=np.uint64)
    idx = np.asarray(index, dtype=np.int64).view(np.uint64)
    with np.errstate(over="ignore"):
        k = _splitmix(key * _GOLDEN + np.uint64(stream))
        h = _splitmix(k + idx * _GOLDEN)
        h = _splitmix(h ^ k)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


class Kind(str, enum.Enum):
    CONSTANT = "Constant"
    PERIODIC = "Periodic"
    CHECKERBOARD = "Checkerboard"
    SMOOTH_BUMPS = "SmoothBumps"


@dataclass(frozen=True)
class Bounds:
    A_min: float
    A_max: float
    B_min: float
    B_max: float
    F_min: float
    F_max: float
    G_max: float

    def range_of(self, name: str) -> tuple[float, float]:
        if name == "G":
            return 0.0, self.G_max
        return getattr(self, f"{name}_min"), getattr(self, f"{name}_max")


@dataclass(frozen=True)
class GMode:
    """Either ``G`` is identically zero or it is bounded below by ``G_min > 0``."""

    strictly_positive: bool = False
    G_min: float = 0.0

    @classmethod
    def zero(cls) -> "GMode":
        return cls(False, 0.0)

    @classmethod
    def positive(cls, g_min: float) -> "GMode":
        return cls(True, float(g_min))

    def to_json(self):
        if self.strictly_positive:
            return {"StrictlyPositive": {"G_min": self.G_min}}
        return "IdenticallyZero"

    @classmethod
    def from_json(cls, data) -> "GMode":
        if data is None or data == "IdenticallyZero":
            return cls.zero()
        if isinstance(data, Mapping) and "StrictlyPositive" in data:
            inner = data["StrictlyPositive"]
            if not isinstance(inner, Mapping) or "G_min" not in inner:
                raise ConfigError("g_mode StrictlyPositive needs a G_min entry")
            return cls.positive(inner["G_min"])
        raise ConfigError(f"unrecognized g_mode {data!r}")


# ---------------------------------------------------------------------------
# per-kind evaluators.  Each works on the *effective* fast coordinate
# t = (y + shift_offset) / length_scale, already including the seed offset.


def _coeff_entry(params, name, default=None):
    if name in params:
        return params[name]
    if default is None:
        raise ConfigError(f"missing coefficient {name!r} in params")
    return default


_GL_U, _GL_W = np.polynomial.legendre.leggauss(24)
_GL_U = 0.5 * (_GL_U + 1.0)
_GL_W = 0.5 * _GL_W


class _ConstantImpl:
    nonsmooth = False

    def __init__(self, params):
        self.values = {}
        for name in COEFFS:
            v = _coeff_entry(params, name, 0.0 if name == "G" else None)
            if isinstance(v, Mapping):
                raise ConfigError(f"Constant model expects a number for {name}")
            self.values[name] = float(v)
        self.scale = 1.0

    def value(self, name, t, seed, side):
        return np.full(np.shape(t), self.values[name])

    def raw_range(self, name):
        v = self.values[name]
        return v, v

    def breakpoints_t(self, seed, tlo, thi):
        return np.empty(0)

    def marginal_mean(self, name, transform):
        return float(transform(np.array([self.values[name]]))[0])

    def seed_offset(self, seed):
        return 0.0


class _PeriodicImpl:
    """``c = base (1 + amp sin(2 pi t + phase))``; ``1/A`` and ``sqrt(G)`` take that form."""

    nonsmooth = False

    def __init__(self, params):
        self.scale = float(params.get("period", 1.0))
        self.random_phase = bool(params.get("random_phase", False))
        self.terms = {}
        for name in COEFFS:
            v = _coeff_entry(params, name, 0.0 if name == "G" else None)
            if isinstance(v, Mapping):
                base = float(v["base"])
                amp = float(v.get("amp", 0.0))
                phase = float(v.get("phase", 0.0))
            else:
                base, amp, phase = float(v), 0.0, 0.0
            if abs(amp) >= 1.0:
                raise InvalidModel(f"Periodic amplitude for {name} must satisfy |amp| < 1")
            self.terms[name] = (base, amp, phase)

    def _shape(self, name, theta):
        base, amp, phase = self.terms[name]
        s = 1.0 + amp * np.sin(theta + phase)
        if name == "A":
            return base / s
        if name == "G":
            return base * s * s
        return base * s

    def value(self, name, t, seed, side):
        return self._shape(name, 2.0 * math.pi * t)

    def raw_range(self, name):
        base, amp, _ = self.terms[name]
        lo, hi = 1.0 - abs(amp), 1.0 + abs(amp)
        if name == "A":
            return base / hi, base / lo
        if name == "G":
            return base * lo * lo, base * hi * hi
        return base * lo, base * hi

    def breakpoints_t(self, seed, tlo, thi):
        return np.empty(0)

    def marginal_mean(self, name, transform):
        theta = np.linspace(0.0, 2.0 * math.pi, 512, endpoint=False)
        return float(np.mean(transform(self._shape(name, theta))))

    def seed_offset(self, seed):
        if not self.random_phase:
            return 0.0
        return float(counter_uniform(seed, _STREAM["phase"], 0)[0])


class _LatticeImpl:
    """Shared machinery for lattice models with a uniform global shift."""

    def __init__(self, params, length_key):
        self.scale = float(params.get(length_key, 1.0))
        if not self.scale > 0:
            raise InvalidModel(f"{length_key} must be positive")
        self.coupled = bool(params.get("coupled", False))

    def stream(self, name):
        return _STREAM["A"] if self.coupled else _STREAM[name]

    def seed_offset(self, seed):
        return float(counter_uniform(seed, _STREAM["shift"], 0)[0])

    def breakpoints_t(self, seed, tlo, thi):
        k0, k1 = math.floor(tlo), math.ceil(thi)
        ks = np.arange(k0, k1 + 1, dtype=np.float64)
        return ks[(ks > tlo) & (ks < thi)]


class _CheckerboardImpl(_LatticeImpl):
    nonsmooth = True

    def __init__(self, params):
        super().__init__(params, "cell")
        self.levels = {}
        for name in COEFFS:
            v = _coeff_entry(params, name, 0.0 if name == "G" else None)
            if isinstance(v, Mapping):
                levels = np.asarray(v["levels"], dtype=float)
                probs = np.asarray(v.get("probs", np.full(len(levels), 1.0 / len(levels))), dtype=float)
            else:
                levels, probs = np.array([float(v)]), np.array([1.0])
            if levels.ndim != 1 or len(levels) == 0 or len(probs) != len(levels):
                raise ConfigError(f"Checkerboard levels for {name} malformed")
            if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, rel_tol=1e-12):
                raise ConfigError(f"Checkerboard probs for {name} must be a distribution")
            cum = np.cumsum(probs)
            cum[-1] = 1.0
            self.levels[name] = (levels, probs, cum)

    def cell_index(self, t, side):
        if side < 0:
            return np.ceil(t).astype(np.int64) - 1
        return np.floor(t).astype(np.int64)

    def value(self, name, t, seed, side):
        levels, _, cum = self.levels[name]
        if len(levels) == 1:
            return np.full(np.shape(t), levels[0])
        k = self.cell_index(t, side)
        u = counter_uniform(seed, self.stream(name), k).reshape(np.shape(k))
        return levels[np.searchsorted(cum, u, side="right")]

    def raw_range(self, name):
        levels = self.levels[name][0]
        return float(levels.min()), float(levels.max())

    def marginal_mean(self, name, transform):
        levels, probs, _ = self.levels[name]
        return float(np.sum(probs * transform(levels)))


class _SmoothBumpsImpl(_LatticeImpl):
    """iid lattice amplitudes blended by the ``cos^2`` partition of unity.

    On lattice cell ``k <= t < k + 1`` with ``u = t - k`` the field equals
    ``lo + (hi - lo) (xi_k cos^2(pi u / 2) + xi_{k+1} sin^2(pi u / 2))``,
    which is C^1 across lattice points and analytic inside each cell.
    ``sqrt(G)`` rather than ``G`` follows this form.
    """

    nonsmooth = False

    def __init__(self, params):
        super().__init__(params, "width")
        self.span = {}
        for name in COEFFS:
            v = _coeff_entry(params, name, 0.0 if name == "G" else None)
            if isinstance(v, Mapping):
                lo, hi = float(v["lo"]), float(v["hi"])
            else:
                lo = hi = float(v)
            if lo > hi:
                raise ConfigError(f"SmoothBumps {name}: lo > hi")
            if name == "G":
                if lo < 0:
                    raise InvalidModel("SmoothBumps G levels must be nonnegative")
                lo, hi = math.sqrt(lo), math.sqrt(hi)
            self.span[name] = (lo, hi)

    def _blend(self, name, xi0, xi1, u):
        lo, hi = self.span[name]
        c2 = np.cos(0.5 * math.pi * u) ** 2
        s = lo + (hi - lo) * (xi0 * c2 + xi1 * (1.0 - c2))
        return s * s if name == "G" else s

    def value(self, name, t, seed, side):
        lo, hi = self.span[name]
        if lo == hi:
            return np.full(np.shape(t), lo * lo if name == "G" else lo)
        t = np.asarray(t, dtype=float)
        k = np.floor(t).astype(np.int64)
        u = t - k
        st = self.stream(name)
        xi0 = counter_uniform(seed, st, k).reshape(k.shape)
        xi1 = counter_uniform(seed, st, k + 1).reshape(k.shape)
        return self._blend(name, xi0, xi1, u)

    def raw_range(self, name):
        lo, hi = self.span[name]
        if name == "G":
            return lo * lo, hi * hi
        return lo, hi

    def marginal_mean(self, name, transform):
        x0, x1, u = np.meshgrid(_GL_U, _GL_U, _GL_U, indexing="ij")
        w = _GL_W[:, None, None] * _GL_W[None, :, None] * _GL_W[None, None, :]
        return float(np.sum(w * transform(self._blend(name, x0, x1, u))))


_IMPLS = {
    Kind.CONSTANT: _ConstantImpl,
    Kind.PERIODIC: _PeriodicImpl,
    Kind.CHECKERBOARD: _CheckerboardImpl,
    Kind.SMOOTH_BUMPS: _SmoothBumpsImpl,
}


@dataclass(frozen=True, eq=False)
class FieldModel:
    """Law of the coefficient quadruple.

    ``params`` is the per-kind parameter record (see README for the keys).
    When ``bounds`` is omitted it is derived exactly from the parameters.
    Optional slow modulation: ``params["slow"] = {"A": m, ...}`` multiplies the
    coefficient by ``1 + m sin(2 pi x / slow_period)`` (``sqrt(G)`` for G).
    """

    kind: Kind
    params: Mapping[str, Any]
    bounds: Bounds | None = None
    g_mode: GMode = field(default_factory=GMode.zero)

    def __post_init__(self):
        try:
            kind = Kind(self.kind)
        except ValueError:
            raise ConfigError(f"unknown field kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        impl = _IMPLS[kind](self.params)
        object.__setattr__(self, "_impl", impl)
        slow = dict(self.params.get("slow", {}) or {})
        for name, amp in slow.items():
            if name not in COEFFS:
                raise ConfigError(f"slow modulation for unknown coefficient {name!r}")
            if abs(float(amp)) >= 1.0:
                raise InvalidModel(f"slow modulation of {name} must satisfy |m| < 1")
        object.__setattr__(self, "_slow", {k: float(v) for k, v in slow.items()})
        object.__setattr__(self, "_slow_period", float(self.params.get("slow_period", 1.0)))
        if self.bounds is None:
            object.__setattr__(self, "bounds", self.derived_bounds())

    # -- structure -----------------------------------------------------------

    @property
    def length_scale(self) -> float:
        return self._impl.scale

    @property
    def nonsmooth(self) -> bool:
        return self._impl.nonsmooth

    @property
    def x_dependent(self) -> bool:
        return any(v != 0.0 for v in self._slow.values())

    def coeff_range(self, name: str) -> tuple[float, float]:
        """Exact range of a coefficient implied by the parameters."""
        lo, hi = self._impl.raw_range(name)
        m = abs(self._slow.get(name, 0.0))
        if name == "G":
            return lo * (1 - m) ** 2, hi * (1 + m) ** 2
        return lo * (1 - m), hi * (1 + m)

    def derived_bounds(self) -> Bounds:
        r = {n: self.coeff_range(n) for n in COEFFS}
        g_max = r["G"][1] if self.g_mode.strictly_positive else 0.0
        return Bounds(r["A"][0], r["A"][1], r["B"][0], r["B"][1], r["F"][0], r["F"][1], g_max)

    def slow_factor(self, name, x):
        m = self._slow.get(name, 0.0)
        if m == 0.0:
            return 1.0
        f = 1.0 + m * np.sin(2.0 * math.pi * np.asarray(x, dtype=float) / self._slow_period)
        return f * f if name == "G" else f

    def marginal_mean(self, name: str, x: float, transform=None) -> float:
        """``E[transform(C(x, 0))]`` for a single coefficient, computed analytically."""
        if transform is None:
            transform = lambda v: v  # noqa: E731
        if name == "G" and not self.g_mode.strictly_positive:
            return float(transform(np.zeros(1))[0])
        fac = float(self.slow_factor(name, x))
        return self._impl.marginal_mean(name, lambda v: transform(v * fac))

    # -- (de)serialization ---------------------------------------------------

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "params": _plain(self.params), "g_mode": self.g_mode.to_json()}
        out["bounds"] = dataclasses.asdict(self.bounds)
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "FieldModel":
        if not isinstance(data, Mapping):
            raise ConfigError("field model block must be an object")
        unknown = set(data) - {"kind", "params", "bounds", "g_mode", "seed"}
        if unknown:
            raise ConfigError(f"unknown keys in model block: {sorted(unknown)}")
        if "kind" not in data:
            raise ConfigError("model block needs a 'kind'")
        bounds = data.get("bounds")
        if bounds is not None:
            try:
                bounds = Bounds(**{k: float(v) for k, v in bounds.items()})
            except TypeError as exc:
                raise ConfigError(f"bad bounds block: {exc}") from None
        try:
            return cls(
                kind=data["kind"],
                params=dict(data.get("params", {})),
                bounds=bounds,
                g_mode=GMode.from_json(data.get("g_mode")),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad params for {data['kind']}: {exc}") from None


def _plain(obj):
    if isinstance(obj, Mapping):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass(frozen=True, eq=False)
class FieldRealization:
    """One draw of the coefficient field; immutable and safe to share."""

    model: FieldModel
    seed: int
    shift_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "_t0", self.model._impl.seed_offset(self.seed))

    def _t(self, y):
        return (np.asarray(y, dtype=float) + self.shift_offset) / self.model.length_scale + self._t0

    def coeff(self, name: str, x, y, side: int = 0):
        """Evaluate one coefficient; ``side=-1/+1`` picks left/right limits at jumps."""
        model = self.model
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast_shapes(x.shape, y.shape)
        if name == "G" and not model.g_mode.strictly_positive:
            out = np.zeros(shape)
        else:
            t = np.broadcast_to(self._t(y), shape)
            out = model._impl.value(name, t, self.seed, side) * model.slow_factor(name, x)
            out = np.broadcast_to(out, shape)
        return float(out) if out.ndim == 0 else np.array(out)

    def coeffs(self, x, y, side: int = 0):
        return tuple(self.coeff(n, x, y, side) for n in COEFFS)

    def breakpoints(self, ylo: float, yhi: float) -> np.ndarray:
        """Fast coordinates in ``(ylo, yhi)`` where the field is not analytic."""
        if not isinstance(self.model._impl, _LatticeImpl):
            return np.empty(0)
        L = self.model.length_scale
        tb = self.model._impl.breakpoints_t(self.seed, self._t(ylo), self._t(yhi))
        yb = (tb - self._t0) * L - self.shift_offset
        return yb[(yb > ylo) & (yb < yhi)]


def sample_realization(model: FieldModel, seed: int) -> FieldRealization:
    """Deterministic realization of ``model`` for ``seed`` with zero shift."""
    failures = [c for c in _structural_checks(model) if c.hard and not c.passed]
    if failures:
        raise InvalidModel("; ".join(f"{c.name}: {c.detail}" for c in failures))
    return FieldRealization(model, int(seed), 0.0)


def eval_coeffs(omega: FieldRealization, x, y, side: int = 0):
    """Return ``(A, B, F, G)`` at slow position ``x`` and fast coordinate ``y``."""
    return omega.coeffs(x, y, side)


def shift(omega: FieldRealization, z: float) -> FieldRealization:
    """Apply the shift ``tau_z``; offsets compose additively."""
    if z == 0:
        return omega
    return dataclasses.replace(omega, shift_offset=omega.shift_offset + z)


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    hard: bool
    detail: str
    margin: float | None = None


@dataclass
class ValidationReport:
    checks: list[Check]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.hard)

    @property
    def warnings(self) -> list[Check]:
        return [c for c in self.checks if not c.hard and not c.passed]

    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.hard and not c.passed]

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            tag = "PASS" if c.passed else ("FAIL" if c.hard else "WARN")
            extra = "" if c.margin is None else f" (margin {c.margin:.3g})"
            out.append(f"[{tag}] {c.name}: {c.detail}{extra}")
        return out


def _structural_checks(model: FieldModel) -> list[Check]:
    b = model.bounds
    checks = []
    for name in ("A", "B", "F"):
        lo, hi = b.range_of(name)
        checks.append(Check(f"{name}_min", lo > 0, True, f"declared {name}_min = {lo:g}", lo))
        checks.append(Check(f"{name}_max", hi >= lo and math.isfinite(hi), True, f"declared {name}_max = {hi:g}"))
    glo, ghi = model.coeff_range("G")
    if model.g_mode.strictly_positive:
        gmin = model.g_mode.G_min
        ok = gmin > 0 and glo >= gmin - 1e-15
        checks.append(Check("G dichotomy", ok, True,
                            f"StrictlyPositive: lowest G level {glo:g} vs G_min {gmin:g}", glo - gmin))
    else:
        ok = glo == 0.0 and ghi == 0.0
        checks.append(Check("G dichotomy", ok, True,
                            "IdenticallyZero" if ok else f"G params take values in [{glo:g}, {ghi:g}] but g_mode is IdenticallyZero"))
    return checks


def validate_model(model: FieldModel, seeds=(0, 1, 2), n_fast: int = 4096) -> ValidationReport:
    """Check positivity, boundedness, the G dichotomy and regularity by sampling.

    Bounds are checked by sampled minimization over a fine grid of fast
    coordinates (``n_fast`` points over 64 correlation lengths) at a few slow
    positions and seeds.  ``sqrt(G)`` Lipschitz constants are estimated by
    finite differences.  Failures are report entries, never exceptions.
    """
    checks = _structural_checks(model)
    try:
        realizations = [FieldRealization(model, s) for s in seeds]
    except Exception as exc:  # noqa: BLE001
        checks.append(Check("evaluation", False, True, str(exc)))
        return ValidationReport(checks)
    L = model.length_scale
    y = np.linspace(0.0, 64.0 * L, n_fast)
    xs = np.linspace(-model._slow_period, model._slow_period, 9) if model.x_dependent else np.array([0.0])
    X, Y = np.meshgrid(xs, y, indexing="ij")
    sampled = {n: [] for n in COEFFS}
    for w in realizations:
        for n in COEFFS:
            sampled[n].append(np.asarray(w.coeff(n, X, Y)))
    b = model.bounds
    for n in ("A", "B", "F"):
        vals = np.concatenate([v.ravel() for v in sampled[n]])
        lo, hi = b.range_of(n)
        smin, smax = float(vals.min()), float(vals.max())
        ok = smin >= lo - 1e-12 and smax <= hi + 1e-12
        checks.append(Check(f"{n} sampled range", ok, True,
                            f"sampled [{smin:g}, {smax:g}] within declared [{lo:g}, {hi:g}]", smin - lo))
    g = np.concatenate([v.ravel() for v in sampled["G"]])
    if model.g_mode.strictly_positive:
        gmin = float(g.min())
        checks.append(Check("G sampled minimum", gmin >= model.g_mode.G_min - 1e-12, True,
                            f"sampled min G = {gmin:g}, G_min = {model.g_mode.G_min:g}",
                            gmin - model.g_mode.G_min))
        checks.append(Check("G sampled maximum", float(g.max()) <= b.G_max + 1e-12, True,
                            f"sampled max G = {float(g.max()):g}, G_max = {b.G_max:g}"))
    else:
        checks.append(Check("G identically zero", bool(np.all(g == 0.0)), True, "all sampled G == 0"))
    dy = y[1] - y[0]
    lips = 0.0
    for v in sampled["G"]:
        r = np.sqrt(v)
        lips = max(lips, float(np.max(np.abs(np.diff(r, axis=-1)))) / dy)
    if model.nonsmooth:
        has_jumps = model.g_mode.strictly_positive and model.coeff_range("G")[0] != model.coeff_range("G")[1]
        checks.append(Check("sqrt(G) Lipschitz", not has_jumps, False,
                            f"finite-difference estimate {lips:.3g}" + (" (G jumps)" if has_jumps else "")))
        checks.append(Check("A regularity", False, False,
                            "piecewise constant in y: outside the literal Hoelder requirement on A_y"))
    else:
        checks.append(Check("sqrt(G) Lipschitz", math.isfinite(lips), True, f"finite-difference estimate {lips:.3g}"))
    return ValidationReport(checks)
