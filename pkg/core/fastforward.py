"""
Streamlined fast-forward: the local real potential that drives a prescribed
density evolution ρ(x,t)² on a 1D grid.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import cumulative_simpson, trapezoid

from core.schedules import FloatArray, Schedule, constant_schedule, fd_weights, stencil_shift
from core.units import ScheduleDomainError, Units

logger = logging.getLogger(__name__)

NODE_EPS = 1e-12
FF_TIME_STEPS = 500
NORM_TOL = 1e-8
REPAIR_NEIGHBORS = 3

Amplitude = Callable[[FloatArray, float], FloatArray]
Profile = Callable[[FloatArray], FloatArray]

_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


@dataclass
class DensityPath:
    """Prescribed amplitude ρ(x,t) ≥ 0 on a uniform grid, with reference phase φ₀(t)."""

    x: FloatArray
    amplitude: Amplitude
    t_f: float
    phi0: Optional[Schedule] = None
    time_steps: int = FF_TIME_STEPS
    name: str = ""
    _cache: Dict[float, FloatArray] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=float)
        steps = np.diff(self.x)
        if len(self.x) < 8 or np.any(np.abs(steps - steps[0]) > 1e-9 * abs(steps[0])):
            raise ValueError("fast-forward needs a uniform grid of at least 8 points")
        if not self.t_f > 0:
            raise ValueError(f"t_f must be positive, got {self.t_f}")
        if self.phi0 is None:
            self.phi0 = constant_schedule(0.0, self.t_f)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def ref_index(self) -> int:
        return int(np.argmin(np.abs(self.x)))

    def rho(self, t: float) -> FloatArray:
        if t < -1e-12 * self.t_f or t > self.t_f * (1 + 1e-12):
            raise ScheduleDomainError(f"t={t!r} outside density path domain [0, {self.t_f}]")
        key = float(t)
        if key not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = np.asarray(self.amplitude(self.x, key), dtype=float)
        return np.asarray(self._cache[key])

    def norm_error(self, n: int = 21) -> float:
        worst = 0.0
        for t in np.linspace(0.0, self.t_f, n):
            worst = max(worst, abs(float(trapezoid(self.rho(float(t)) ** 2, self.x)) - 1.0))
        return worst


# ── Path factories ──────────────────────────────────────────────────


def stationary_path(x: FloatArray, profile: Profile, t_f: float, phi0: Optional[Schedule] = None) -> DensityPath:
    return DensityPath(x, lambda xs, t: profile(xs), t_f, phi0, name="stationary")


def translating_path(
    x: FloatArray, profile: Profile, x0: Schedule, phi0: Optional[Schedule] = None
) -> DensityPath:
    """Rigid transport ρ(x − x₀(t))."""
    return DensityPath(x, lambda xs, t: profile(xs - x0.eval(t)), x0.t_f, phi0, name="translation")


def scaling_path(
    x: FloatArray, profile: Profile, b: Schedule, phi0: Optional[Schedule] = None
) -> DensityPath:
    """Expansion or compression ρ(x/b)/√b."""
    return DensityPath(
        x, lambda xs, t: profile(xs / b.eval(t)) / math.sqrt(b.eval(t)), b.t_f, phi0, name="scaling"
    )


# ── Numerics ────────────────────────────────────────────────────────


def _time_derivative(func: Callable[[float], FloatArray], t: float, h: float, t_f: float) -> FloatArray:
    offsets = np.arange(-2.0, 3.0)
    shift = stencil_shift(t, offsets, h, 0.0, t_f)
    shifted = offsets + shift
    weights = fd_weights(shifted, 1)
    return np.asarray(sum(w * func(t + o * h) for w, o in zip(weights, shifted)) / h)


def _spatial(f: FloatArray, dx: float, stencil: NDArray[np.float64], power: int) -> FloatArray:
    out = np.full_like(f, np.nan)
    out[2:-2] = np.convolve(f, stencil[::-1], mode="valid") / dx**power
    return out


def _repair(values: FloatArray, bad: NDArray[np.bool_], x: FloatArray) -> FloatArray:
    """Replace flagged samples by quadratic fits through nearby valid samples."""
    out = values.copy()
    good_idx = np.flatnonzero(~bad)
    if good_idx.size == 0:
        return np.zeros_like(values)
    if good_idx.size < 3:
        out[bad] = values[good_idx[0]]
        return out
    runs = np.split(np.flatnonzero(bad), np.flatnonzero(np.diff(np.flatnonzero(bad)) > 1) + 1)
    for run in runs:
        if run.size == 0:
            continue
        left = good_idx[good_idx < run[0]][-REPAIR_NEIGHBORS:]
        right = good_idx[good_idx > run[-1]][:REPAIR_NEIGHBORS]
        support = np.concatenate([left, right])
        if support.size < 3:
            support = good_idx[np.argsort(np.abs(good_idx - run[0]))[:3]]
        coeffs = np.polyfit(x[support], values[support], 2)
        out[run] = np.polyval(coeffs, x[run])
    return out


def _node_mask(rho: FloatArray) -> NDArray[np.bool_]:
    dens = rho**2
    return np.asarray(dens < NODE_EPS * dens.max())


def _flux_integral(d: DensityPath, t: float) -> Tuple[FloatArray, NDArray[np.bool_]]:
    """∂_t ∫ ρ² from the less massive edge, signed so that u = −(this)/ρ²."""
    h = d.t_f / d.time_steps

    def left(ti: float) -> FloatArray:
        return np.asarray(cumulative_simpson(d.rho(ti) ** 2, dx=d.dx, initial=0.0))

    def right(ti: float) -> FloatArray:
        dens = d.rho(ti)[::-1] ** 2
        return np.asarray(cumulative_simpson(dens, dx=d.dx, initial=0.0)[::-1])

    rho = d.rho(t)
    mass_left = left(t)
    use_left = mass_left <= 0.5 * mass_left[-1]
    flux = np.where(
        use_left,
        _time_derivative(left, t, h, d.t_f),
        -_time_derivative(right, t, h, d.t_f),
    )
    return flux, _node_mask(rho)


def hydrodynamic_velocity(d: DensityPath, t: float) -> FloatArray:
    """u = −(1/ρ²) ∂_t ∫_{x_L}^x ρ² dx′, the physical flux velocity."""
    flux, bad = _flux_integral(d, t)
    rho = d.rho(t)
    dens = np.where(bad, 1.0, rho**2)
    u = -flux / dens
    if np.any(bad):
        u = _repair(u, bad, d.x)
    return np.asarray(u)


def _velocity_integral(d: DensityPath, t: float) -> FloatArray:
    """∫_{x_ref}^x u dx′."""
    u = hydrodynamic_velocity(d, t)
    cum = cumulative_simpson(u, dx=d.dx, initial=0.0)
    return np.asarray(cum - cum[d.ref_index])


def quantum_pressure(d: DensityPath, t: float) -> FloatArray:
    """ρ″/ρ = L″ + L′² with L = ln ρ, repaired at nodes."""
    rho = d.rho(t)
    bad = _node_mask(rho)
    with np.errstate(divide="ignore"):
        log_rho = np.log(np.where(bad, 1.0, rho))
    lp = _spatial(log_rho, d.dx, _D1, 1)
    lpp = _spatial(log_rho, d.dx, _D2, 2)
    q = lpp + lp**2
    # stencils touching a node are contaminated
    spread = np.convolve(bad.astype(float), np.ones(5), mode="same") > 0
    invalid = spread | ~np.isfinite(q)
    return _repair(np.where(invalid, 0.0, q), invalid, d.x)


def ff_phase(d: DensityPath, m: float, t: float, units: Units = Units()) -> FloatArray:
    """φ(x) = φ₀(t) + (m/ħ) ∫_{x_ref}^x u dx′."""
    assert d.phi0 is not None
    return np.asarray(d.phi0.eval(t) + m / units.hbar * _velocity_integral(d, t))


def truncate_nodes(v: Sequence[float], cap: float) -> FloatArray:
    if not cap > 0:
        raise ValueError(f"potential cap must be positive, got {cap}")
    return np.clip(np.asarray(v, dtype=float), -cap, cap)


def ff_potential(
    d: DensityPath,
    m: float,
    t: float,
    units: Units = Units(),
    cap: Optional[float] = None,
) -> FloatArray:
    """V = −m ∂_t∫u + (ħ²/2m) ρ″/ρ − ½ m u² − ħ φ̇₀."""
    assert d.phi0 is not None
    h = d.t_f / d.time_steps
    drift = _time_derivative(lambda ti: _velocity_integral(d, ti), t, h, d.t_f)
    u = hydrodynamic_velocity(d, t)
    v = (
        -m * drift
        + units.hbar**2 / (2.0 * m) * quantum_pressure(d, t)
        - 0.5 * m * u**2
        - units.hbar * d.phi0.eval(t, 1)
    )
    if cap is not None:
        v = truncate_nodes(v, cap)
    return np.asarray(v)


def continuity_residual(d: DensityPath, t: float) -> float:
    """max |∂_tρ² + ∂_x(ρ²u)| on interior points, in units of max(ρ²)/t_f."""
    h = d.t_f / d.time_steps
    rho = d.rho(t)
    bad = _node_mask(rho)
    dens_dot = _time_derivative(lambda ti: d.rho(ti) ** 2, t, h, d.t_f)
    current = rho**2 * hydrodynamic_velocity(d, t)
    div = _spatial(current, d.dx, _D1, 1)
    interior = ~bad & np.isfinite(div)
    interior[:3] = False
    interior[-3:] = False
    if not np.any(interior):
        return 0.0
    scale = float((rho**2).max()) / d.t_f
    return float(np.max(np.abs(dens_dot + div)[interior]) / scale)


def ff_initial_state(d: DensityPath, m: float, units: Units = Units()) -> NDArray[np.complex128]:
    """ψ(x,0) = ρ(x,0) e^{iφ(x,0)}."""
    return np.asarray(d.rho(0.0) * np.exp(1j * ff_phase(d, m, 0.0, units)))


def potential_field(
    d: DensityPath,
    m: float,
    times: Sequence[float],
    units: Units = Units(),
    cap: Optional[float] = None,
) -> Tuple[FloatArray, FloatArray, FloatArray]:
    """Sampled V(x,t): rows are times, columns are grid points."""
    ts = np.asarray(times, dtype=float)
    rows: List[FloatArray] = [ff_potential(d, m, float(t), units, cap) for t in ts]
    return ts, d.x.copy(), np.array(rows)
