"""
Smooth scalar control schedules on [0, t_f].

Every schedule is evaluated in dimensionless time s = t/t_f internally.
Polynomial schedules store their coefficients in s, so the conditioning does
not depend on t_f. Derivatives with respect to t are recovered by dividing
by t_f**order.
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import PPoly, make_interp_spline

from core.units import ScheduleDomainError, ScheduleError

logger = logging.getLogger(__name__)

MAX_ORDER = 4
BOUNDARY_TOL = 1e-12
DOMAIN_SLACK = 1e-12
RESAMPLE_POINTS = 2001
FD_STEPS = {1: 1e-3, 2: 2e-3, 3: 5e-3, 4: 1e-2}

FloatArray = NDArray[np.float64]
Condition = Tuple[float, int, float]
TrigTerm = Tuple[str, int, float]


# ── Finite differences ──────────────────────────────────────────────


def fd_weights(offsets: Sequence[float], order: int) -> FloatArray:
    """Weights w such that sum(w_j f(t + o_j h)) ~ h**order f^(order)(t)."""
    o = np.asarray(offsets, dtype=float)
    n = len(o)
    vander = np.vander(o, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[order] = math.factorial(order)
    return np.asarray(np.linalg.solve(vander, rhs), dtype=float)


def stencil_offsets(order: int) -> FloatArray:
    n = order + 4
    if n % 2 == 0:
        n += 1
    half = (n - 1) // 2
    return np.arange(-half, half + 1, dtype=float)


def stencil_shift(t: float, offsets: FloatArray, h: float, lo: float, hi: float) -> float:
    """Shift (in units of h) that keeps every stencil point inside [lo, hi]."""
    low = (lo - t) / h - offsets.min()
    high = (hi - t) / h - offsets.max()
    if low > high:
        raise ScheduleError("finite-difference stencil does not fit in the domain")
    return float(min(max(0.0, low), high))


def fd_derivative(
    func: Callable[[float], Any],
    t: float,
    order: int,
    h: float,
    lo: float,
    hi: float,
) -> Any:
    """Derivative of a scalar- or matrix-valued function of time."""
    if order == 0:
        return func(t)
    offsets = stencil_offsets(order)
    shift = stencil_shift(t, offsets, h, lo, hi)
    shifted = offsets + shift
    weights = fd_weights(shifted, order)
    total = None
    for w, o in zip(weights, shifted):
        term = w * np.asarray(func(t + o * h))
        total = term if total is None else total + term
    return total / h**order


# ── Schedules ───────────────────────────────────────────────────────


class Schedule(ABC):
    """A smooth control function on [0, t_f] with derivatives up to MAX_ORDER."""

    family = "abstract"

    def __init__(self, t_f: float):
        if not np.isfinite(t_f) or t_f <= 0:
            raise ScheduleError(f"t_f must be positive, got {t_f}")
        self.t_f = float(t_f)

    @abstractmethod
    def _eval_t(self, t: FloatArray, order: int) -> FloatArray:
        ...

    def _check(self, t: FloatArray, order: int) -> FloatArray:
        if not 0 <= order <= MAX_ORDER:
            raise ScheduleError(f"derivative order must be in [0, {MAX_ORDER}], got {order}")
        slack = DOMAIN_SLACK * self.t_f
        if not np.all(np.isfinite(t)) or np.any(t < -slack) or np.any(t > self.t_f + slack):
            bad = t[(t < -slack) | (t > self.t_f + slack) | ~np.isfinite(t)]
            raise ScheduleDomainError(
                f"t={bad.flat[0]!r} outside schedule domain [0, {self.t_f}]"
            )
        return np.clip(t, 0.0, self.t_f)

    def eval(self, t: float, order: int = 0) -> float:
        arr = self._check(np.atleast_1d(np.asarray(t, dtype=float)), order)
        return float(self._eval_t(arr, order)[0])

    def eval_array(self, t: Sequence[float], order: int = 0) -> FloatArray:
        arr = self._check(np.asarray(t, dtype=float), order)
        return np.asarray(self._eval_t(arr, order), dtype=float)

    def __call__(self, t: float) -> float:
        return self.eval(t, 0)

    def sample(self, n: int = RESAMPLE_POINTS, order: int = 0) -> Tuple[FloatArray, FloatArray]:
        t = np.linspace(0.0, self.t_f, n)
        return t, self.eval_array(t, order)

    def to_dict(self) -> Dict[str, Any]:
        """Stored as the quintic interpolant, marked with the sample count."""
        data = resample(self).to_dict()
        data.update(resampled=True, samples=RESAMPLE_POINTS, source_family=self.family)
        return data


class PolySchedule(Schedule):
    """Piecewise polynomial in s, backed by scipy's PPoly on breaks spanning [0, 1]."""

    family = "ppoly"

    def __init__(self, t_f: float, ppoly: PPoly):
        super().__init__(t_f)
        x = np.asarray(ppoly.x, dtype=float)
        if abs(x[0]) > 1e-14 or abs(x[-1] - 1.0) > 1e-14:
            raise ScheduleError("polynomial breaks must span s in [0, 1]")
        self._pp = ppoly
        self._derivs = [ppoly] + [ppoly.derivative(k) for k in range(1, MAX_ORDER + 1)]

    @classmethod
    def from_coefficients(cls, t_f: float, coeffs: Sequence[float]) -> "PolySchedule":
        """Single polynomial sum(c_j s**j), coefficients in ascending order."""
        c = np.asarray(coeffs, dtype=float)
        if c.size == 0:
            c = np.zeros(1)
        return cls(t_f, PPoly(c[::-1].reshape(-1, 1), np.array([0.0, 1.0])))

    @classmethod
    def from_ppoly(cls, t_f: float, ppoly: PPoly) -> "PolySchedule":
        return cls(t_f, ppoly)

    @property
    def breaks(self) -> FloatArray:
        return np.asarray(self._pp.x, dtype=float)

    @property
    def coefficients(self) -> FloatArray:
        """Ascending s-coefficients of a single-segment schedule."""
        if self._pp.c.shape[1] != 1:
            raise ScheduleError("coefficients are only defined for single-segment schedules")
        return np.asarray(self._pp.c[::-1, 0], dtype=float)

    def _eval_t(self, t: FloatArray, order: int) -> FloatArray:
        s = np.clip(t / self.t_f, 0.0, 1.0)
        return np.asarray(self._derivs[order](s), dtype=float) / self.t_f**order

    def derivative(self, n: int = 1) -> "PolySchedule":
        d = self._pp.derivative(n)
        return PolySchedule(self.t_f, PPoly(d.c / self.t_f**n, d.x))

    def scaled(self, factor: float) -> "PolySchedule":
        return PolySchedule(self.t_f, PPoly(self._pp.c * factor, self._pp.x))

    def stretched(self, t_f: float) -> "PolySchedule":
        """Same shape in s over a new duration."""
        return PolySchedule(t_f, PPoly(self._pp.c.copy(), self._pp.x))

    def __add__(self, other: Any) -> "PolySchedule":
        if isinstance(other, (int, float)):
            c = self._pp.c.copy()
            c[-1, :] += other
            return PolySchedule(self.t_f, PPoly(c, self._pp.x))
        if not isinstance(other, PolySchedule):
            return NotImplemented
        if abs(other.t_f - self.t_f) > 1e-12 * self.t_f or not np.array_equal(
            other.breaks, self.breaks
        ):
            raise ScheduleError("can only add polynomial schedules with identical domains")
        a, b = self._pp.c, other._pp.c
        k = max(a.shape[0], b.shape[0])
        pa = np.vstack([np.zeros((k - a.shape[0], a.shape[1])), a])
        pb = np.vstack([np.zeros((k - b.shape[0], b.shape[1])), b])
        return PolySchedule(self.t_f, PPoly(pa + pb, self._pp.x))

    __radd__ = __add__

    def to_dict(self) -> Dict[str, Any]:
        x = self.breaks
        segments = [
            {"breaks": [float(x[i]), float(x[i + 1])], "coeffs": self._pp.c[:, i].tolist()}
            for i in range(len(x) - 1)
        ]
        return {"t_f": self.t_f, "family": self.family, "segments": segments}


class TrigSchedule(Schedule):
    """Linear combination of 1, s, cos(k pi s), sin(k pi s)."""

    family = "trig"

    def __init__(self, t_f: float, terms: Sequence[TrigTerm]):
        super().__init__(t_f)
        for kind, k, _ in terms:
            if kind not in ("const", "lin", "cos", "sin"):
                raise ScheduleError(f"unknown trigonometric term {kind!r}")
            if kind in ("cos", "sin") and k < 1:
                raise ScheduleError("trigonometric wavenumbers start at 1")
        self.terms: List[TrigTerm] = [(str(a), int(b), float(c)) for a, b, c in terms]

    @staticmethod
    def basis(kind: str, k: int, s: FloatArray, order: int) -> FloatArray:
        if kind == "const":
            return np.ones_like(s) if order == 0 else np.zeros_like(s)
        if kind == "lin":
            if order == 0:
                return s.copy()
            return np.ones_like(s) if order == 1 else np.zeros_like(s)
        w = k * math.pi
        phase = order * math.pi / 2.0
        if kind == "cos":
            return np.asarray(w**order * np.cos(w * s + phase), dtype=float)
        return np.asarray(w**order * np.sin(w * s + phase), dtype=float)

    def _eval_t(self, t: FloatArray, order: int) -> FloatArray:
        s = t / self.t_f
        total = np.zeros_like(s)
        for kind, k, c in self.terms:
            total = total + c * self.basis(kind, k, s, order)
        return total / self.t_f**order

    def to_dict(self) -> Dict[str, Any]:
        return {
            "t_f": self.t_f,
            "family": self.family,
            "terms": [[kind, k, c] for kind, k, c in self.terms],
        }


class FunctionSchedule(Schedule):
    """Schedule defined by callables for the value and leading derivatives.

    ``derivatives[k]`` maps an array of times to the k-th time derivative.
    Higher orders are taken by finite differences of the last callable,
    with stencils shifted to stay inside [0, t_f].
    """

    family = "function"

    def __init__(
        self,
        t_f: float,
        derivatives: Sequence[Callable[[FloatArray], FloatArray]],
        name: str = "",
    ):
        super().__init__(t_f)
        if not derivatives:
            raise ScheduleError("a function schedule needs at least its value callable")
        self._funcs = list(derivatives)
        self.name = name

    @property
    def analytic_orders(self) -> int:
        return len(self._funcs) - 1

    def _eval_t(self, t: FloatArray, order: int) -> FloatArray:
        top = self.analytic_orders
        if order <= top:
            return np.asarray(self._funcs[order](t), dtype=float) * np.ones_like(t)
        extra = order - top
        func = self._funcs[top]
        h = FD_STEPS[extra] * self.t_f
        offsets = stencil_offsets(extra)
        out = np.empty_like(t)
        shifts = np.array([stencil_shift(float(v), offsets, h, 0.0, self.t_f) for v in t])
        for shift in np.unique(shifts):
            mask = shifts == shift
            shifted = offsets + shift
            weights = fd_weights(shifted, extra)
            acc = np.zeros(int(mask.sum()))
            for w, o in zip(weights, shifted):
                pts = np.clip(t[mask] + o * h, 0.0, self.t_f)
                acc = acc + w * np.asarray(func(pts), dtype=float)
            out[mask] = acc / h**extra
        return out


# ── Construction ────────────────────────────────────────────────────


def _normalize_conditions(
    conditions: Sequence[Condition], t_f: float
) -> List[Tuple[int, int, float]]:
    if not np.isfinite(t_f) or t_f <= 0:
        raise ScheduleError(f"t_f must be positive, got {t_f}")
    if len(conditions) < 2:
        raise ScheduleError("at least two boundary conditions are required")
    seen: Dict[Tuple[int, int], float] = {}
    for time, order, value in conditions:
        if abs(time) <= BOUNDARY_TOL * t_f:
            end = 0
        elif abs(time - t_f) <= BOUNDARY_TOL * t_f:
            end = 1
        else:
            raise ScheduleError(f"condition time {time} is not an endpoint of [0, {t_f}]")
        if not 0 <= int(order) <= MAX_ORDER or int(order) != order:
            raise ScheduleError(f"derivative order must be an integer in [0, {MAX_ORDER}]")
        if not np.isfinite(value):
            raise ScheduleError("condition values must be finite")
        key = (end, int(order))
        if key in seen and seen[key] != value:
            raise ScheduleError(
                f"conflicting conditions for order {order} at t={'0' if end == 0 else 't_f'}"
            )
        seen[key] = float(value)
    # values rescaled to s-derivatives
    return [(end, order, value * t_f**order) for (end, order), value in sorted(seen.items())]


def _monomial_row(end: int, order: int, degree: int) -> FloatArray:
    row = np.zeros(degree + 1)
    s0 = float(end)
    for j in range(order, degree + 1):
        row[j] = math.factorial(j) / math.factorial(j - order) * s0 ** (j - order)
    return row


def make_poly_schedule(
    conditions: Sequence[Condition],
    t_f: float,
    free_coeffs: Optional[Sequence[float]] = None,
) -> PolySchedule:
    """Minimal-degree polynomial meeting endpoint conditions (time, order, value).

    ``free_coeffs`` adds a_j s**(k0+j) (1-s)**k1, which vanish together with every
    conditioned derivative, so the boundary data stay exact.
    Every condition is then checked to 1e-12 of its scale; see
    :func:`_check_conditions` for the scale.
    """
    rows = _normalize_conditions(conditions, t_f)
    n = len(rows)
    degree = n - 1
    a = np.array([_monomial_row(end, order, degree) for end, order, _ in rows])
    b = np.array([value for _, _, value in rows])
    if np.linalg.matrix_rank(a) == n:
        coeffs = np.linalg.solve(a, b)
    else:
        coeffs, *_ = np.linalg.lstsq(a, b, rcond=None)
        if np.max(np.abs(a @ coeffs - b)) > 1e-9 * max(1.0, float(np.max(np.abs(b)))):
            raise ScheduleError("boundary conditions cannot be met by a polynomial")
    scale = max(1.0, float(np.max(np.abs(coeffs))))
    coeffs[np.abs(coeffs) < 1e-14 * scale] = 0.0
    nz = np.nonzero(coeffs)[0]
    coeffs = coeffs[: nz[-1] + 1] if nz.size else np.zeros(1)

    if free_coeffs:
        k0 = 1 + max((o for e, o, _ in rows if e == 0), default=-1)
        k1 = 1 + max((o for e, o, _ in rows if e == 1), default=-1)
        bump = np.polynomial.polynomial.polypow([1.0, -1.0], k1)
        for j, aj in enumerate(free_coeffs):
            term = np.polynomial.polynomial.polymul(np.eye(k0 + j + 1)[k0 + j], bump)
            coeffs = np.polynomial.polynomial.polyadd(coeffs, aj * term)

    schedule = PolySchedule.from_coefficients(t_f, coeffs)
    _check_conditions(schedule, rows, coeffs)
    return schedule


def _check_conditions(
    schedule: Schedule, rows: Sequence[Tuple[int, int, float]], coeffs: FloatArray
) -> None:
    """Each condition must hold to 1e-12 of its scale.

    The scale of a condition is the largest of 1, |value| and the sum of the
    magnitudes of the monomial terms that make up the derivative at that end,
    which bounds the rounding of the evaluation itself.
    """
    degree = len(coeffs) - 1
    for end, order, value in rows:
        got = schedule.eval(end * schedule.t_f, order) * schedule.t_f**order
        terms = float(np.abs(_monomial_row(end, order, degree)) @ np.abs(coeffs))
        if abs(got - value) > BOUNDARY_TOL * max(1.0, abs(value), terms):
            raise ScheduleError(
                f"interpolant misses condition order {order} at end {end}: {got} vs {value}"
            )


def make_trig_schedule(conditions: Sequence[Condition], t_f: float) -> TrigSchedule:
    """Trigonometric interpolant in the basis 1, s, cos(k pi s), sin(k pi s)."""
    rows = _normalize_conditions(conditions, t_f)
    n = len(rows)
    kinds: List[Tuple[str, int]] = [("const", 0), ("lin", 0)]
    k = 1
    while len(kinds) < 4 * n + 2:
        kinds += [("cos", k), ("sin", k)]
        k += 1
    b = np.array([value for _, _, value in rows])
    for size in range(n, len(kinds) + 1):
        basis = kinds[:size]
        a = np.array(
            [
                [TrigSchedule.basis(kind, kk, np.array([float(end)]), order)[0] for kind, kk in basis]
                for end, order, _ in rows
            ]
        )
        if np.linalg.matrix_rank(a) < n:
            continue
        coeffs, *_ = np.linalg.lstsq(a, b, rcond=None)
        if np.max(np.abs(a @ coeffs - b)) <= BOUNDARY_TOL * max(1.0, float(np.max(np.abs(b)))):
            terms = [(kind, kk, float(c)) for (kind, kk), c in zip(basis, coeffs) if c != 0.0]
            return TrigSchedule(t_f, terms)
    raise ScheduleError("no trigonometric interpolant found for the conditions")


def constant_schedule(value: float, t_f: float) -> PolySchedule:
    return PolySchedule.from_coefficients(t_f, [value])


def linear_schedule(start: float, end: float, t_f: float) -> PolySchedule:
    return PolySchedule.from_coefficients(t_f, [start, end - start])


def smooth_ramp(start: float, end: float, t_f: float) -> PolySchedule:
    """Quintic ramp with vanishing first and second derivatives at both ends."""
    return make_poly_schedule(
        [(0.0, 0, start), (t_f, 0, end), (0.0, 1, 0.0), (t_f, 1, 0.0), (0.0, 2, 0.0), (t_f, 2, 0.0)],
        t_f,
    )


def resample(schedule: Schedule, n: int = RESAMPLE_POINTS) -> PolySchedule:
    """Quintic spline through n samples, serializable exactly."""
    if isinstance(schedule, PolySchedule):
        return schedule
    s = np.linspace(0.0, 1.0, n)
    values = schedule.eval_array(s * schedule.t_f)
    spline = make_interp_spline(s, values, k=5)
    return PolySchedule(schedule.t_f, PPoly.from_spline(spline))


def schedule_from_dict(data: Dict[str, Any]) -> Schedule:
    try:
        t_f = float(data["t_f"])
        family = data.get("family", "ppoly")
        if family == "trig":
            return TrigSchedule(t_f, [(str(a), int(b), float(c)) for a, b, c in data["terms"]])
        if family != "ppoly":
            raise ScheduleError(f"unknown schedule family {family!r}")
        segments = data["segments"]
        breaks = [float(segments[0]["breaks"][0])] + [float(seg["breaks"][1]) for seg in segments]
        width = max(len(seg["coeffs"]) for seg in segments)
        c = np.zeros((width, len(segments)))
        for i, seg in enumerate(segments):
            coeffs = np.asarray(seg["coeffs"], dtype=float)
            c[width - len(coeffs):, i] = coeffs
        return PolySchedule(t_f, PPoly(c, np.asarray(breaks)))
    except (KeyError, IndexError, TypeError) as e:
        raise ScheduleError(f"malformed schedule data: {e}") from e
