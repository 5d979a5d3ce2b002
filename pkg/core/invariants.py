"""
Invariant-based inverse engineering.

Two-level protocols come from the Bloch angles (θ, α) of a Lewis-Riesenfeld
invariant and the phase γ. Harmonic-family protocols come from the Ermakov
and Newton auxiliary equations.
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import quad

from core.models import ComplexMatrix, LewisLeachSpec, TwoLevelControls
from core.propagators import harmonic_eigenstate
from core.schedules import (
    FloatArray,
    FunctionSchedule,
    PolySchedule,
    Schedule,
    constant_schedule,
    make_poly_schedule,
    smooth_ramp,
)
from core.units import ScheduleError, SingularPointError, Units

logger = logging.getLogger(__name__)

POLE_TOL = 1e-8
SINGULARITY_SAMPLES = 2001
PHASE_ATOL = 1e-10


@dataclass(frozen=True)
class TwoLevelAnsatz:
    theta: Schedule
    alpha: Schedule
    gamma: Schedule

    def __post_init__(self) -> None:
        t_f = self.theta.t_f
        for s in (self.alpha, self.gamma):
            if abs(s.t_f - t_f) > 1e-12 * t_f:
                raise ScheduleError("ansatz schedules disagree on t_f")

    @property
    def t_f(self) -> float:
        return self.theta.t_f


@dataclass(frozen=True)
class ExpansionDesign:
    omega0: float
    omega_f: float
    rho: PolySchedule
    omega_sq: Schedule
    transient_repulsive: bool = False

    @property
    def t_f(self) -> float:
        return self.rho.t_f

    def ermakov_residual(self, t: float) -> float:
        rho = self.rho.eval(t)
        return self.rho.eval(t, 2) + self.omega_sq.eval(t) * rho - self.omega0**2 / rho**3


@dataclass(frozen=True)
class TransportDesign:
    d: float
    omega0: float
    mass: float
    qc: PolySchedule
    x0: PolySchedule
    force: PolySchedule

    @property
    def t_f(self) -> float:
        return self.qc.t_f

    def newton_residual(self, t: float) -> float:
        return self.qc.eval(t, 2) + self.omega0**2 * self.qc.eval(t) - self.force.eval(t) / self.mass


@dataclass(frozen=True)
class GpeExpansion:
    """Scaling expansion of a 1D condensate with coupling g(t) = g₀/ρ(t)."""

    design: ExpansionDesign
    g: FunctionSchedule
    g0: float

    @property
    def omega_sq(self) -> Schedule:
        return self.design.omega_sq

    @property
    def rho(self) -> PolySchedule:
        return self.design.rho

    def tau(self, t: float) -> float:
        """Rescaled time τ(t) = ∫₀ᵗ dt′/ρ²."""
        value, _ = quad(lambda s: self.rho.eval(s) ** -2, 0.0, t, epsabs=1e-13, epsrel=1e-12)
        return float(value)

    def consistency_residual(self, n: int = 2001) -> float:
        """Largest deviation from the Ermakov equation and from g ρ = g₀."""
        ts = np.linspace(0.0, self.design.t_f, n)
        erm = max(abs(self.design.ermakov_residual(float(t))) for t in ts)
        coupling = float(np.max(np.abs(self.g.eval_array(ts) * self.rho.eval_array(ts) - self.g0)))
        return max(erm, coupling)


# ── Two-level inversion ─────────────────────────────────────────────


def _check_pole(a: TwoLevelAnsatz) -> None:
    ts = np.linspace(0.0, a.t_f, SINGULARITY_SAMPLES)
    sin_theta = np.sin(a.theta.eval_array(ts))
    dgamma = a.gamma.eval_array(ts, 1)
    bad = (np.abs(sin_theta) < POLE_TOL) & (np.abs(dgamma) >= POLE_TOL)
    if np.any(bad):
        raise SingularPointError("invariant pole sin(theta)=0 with nonzero phase rate", float(ts[bad][0]))


def two_level_from_ansatz(a: TwoLevelAnsatz) -> TwoLevelControls:
    """Ω_R = cosα sinθ γ̇ − sinα θ̇, Ω_I = sinα sinθ γ̇ + cosα θ̇, Δ = −cosθ γ̇ − α̇."""
    _check_pole(a)

    def parts(t: FloatArray, order: int) -> NDArray[np.float64]:
        return np.array([s.eval_array(t, order) for s in (a.theta, a.alpha, a.gamma)])

    def omega_r(t: FloatArray) -> FloatArray:
        (th, al, _), (dth, _, dg) = parts(t, 0), parts(t, 1)
        return np.asarray(np.cos(al) * np.sin(th) * dg - np.sin(al) * dth)

    def omega_i(t: FloatArray) -> FloatArray:
        (th, al, _), (dth, _, dg) = parts(t, 0), parts(t, 1)
        return np.asarray(np.sin(al) * np.sin(th) * dg + np.cos(al) * dth)

    def delta(t: FloatArray) -> FloatArray:
        th = a.theta.eval_array(t)
        return np.asarray(-np.cos(th) * a.gamma.eval_array(t, 1) - a.alpha.eval_array(t, 1))

    return TwoLevelControls(
        FunctionSchedule(a.t_f, [delta], name="delta"),
        FunctionSchedule(a.t_f, [omega_r], name="omega_r"),
        FunctionSchedule(a.t_f, [omega_i], name="omega_i"),
    )


def auxiliary_residual(c: TwoLevelControls, a: TwoLevelAnsatz, t_grid: Sequence[float]) -> float:
    """Largest violation of the θ̇ and α̇ auxiliary equations on t_grid.

    Points on the pole |sin θ| < 1e-8 are skipped for the α̇ equation, where
    cot θ is undefined.
    """
    t = np.asarray(t_grid, dtype=float)
    th, al = a.theta.eval_array(t), a.alpha.eval_array(t)
    wr, wi, d = c.omega_r.eval_array(t), c.omega_i.eval_array(t), c.delta.eval_array(t)
    res_theta = np.abs(a.theta.eval_array(t, 1) - (wi * np.cos(al) - wr * np.sin(al)))
    ok = np.abs(np.sin(th)) >= POLE_TOL
    res_alpha = np.abs(
        a.alpha.eval_array(t[ok], 1)
        + d[ok]
        + (wr[ok] * np.cos(al[ok]) + wi[ok] * np.sin(al[ok])) / np.tan(th[ok])
    )
    worst = float(res_theta.max()) if res_theta.size else 0.0
    if res_alpha.size:
        worst = max(worst, float(res_alpha.max()))
    return worst


def invariant_matrix(a: TwoLevelAnsatz, t: float, units: Units = Units()) -> ComplexMatrix:
    th, al = a.theta.eval(t), a.alpha.eval(t)
    return 0.5 * units.hbar * np.array(
        [[math.cos(th), math.sin(th) * np.exp(-1j * al)], [math.sin(th) * np.exp(1j * al), -math.cos(th)]],
        dtype=complex,
    )


def ansatz_state(a: TwoLevelAnsatz, t: float) -> NDArray[np.complex128]:
    """|φ₊(t)⟩ e^{−iγ/2}."""
    th, al, g = a.theta.eval(t), a.alpha.eval(t), a.gamma.eval(t)
    phi = np.array(
        [math.cos(th / 2) * np.exp(-0.5j * al), math.sin(th / 2) * np.exp(0.5j * al)], dtype=complex
    )
    return np.asarray(phi * np.exp(-0.5j * g))


# ── Harmonic family ─────────────────────────────────────────────────


def _omega_sq_from_rho(rho: PolySchedule, omega0: float) -> FunctionSchedule:
    """ω² = ω₀²/ρ⁴ − ρ̈/ρ with its analytic first derivative."""

    def value(t: FloatArray) -> FloatArray:
        r = rho.eval_array(t)
        return np.asarray(omega0**2 / r**4 - rho.eval_array(t, 2) / r)

    def slope(t: FloatArray) -> FloatArray:
        r, dr, ddr, d3r = (rho.eval_array(t, k) for k in range(4))
        return np.asarray(-4.0 * omega0**2 * dr / r**5 - (d3r * r - ddr * dr) / r**2)

    return FunctionSchedule(rho.t_f, [value, slope], name="omega_sq")


def design_expansion(omega0: float, omega_f: float, t_f: float) -> ExpansionDesign:
    """Quintic ρ from ρ(0)=1 to (ω₀/ω_f)^{1/2} with ρ̇ = ρ̈ = 0 at both ends."""
    if not (omega0 > 0 and omega_f > 0):
        raise ValueError("trap frequencies must be positive")
    if not t_f > 0:
        raise ScheduleError(f"t_f must be positive, got {t_f}")
    rho = smooth_ramp(1.0, math.sqrt(omega0 / omega_f), t_f)
    omega_sq = _omega_sq_from_rho(rho, omega0)
    repulsive = bool(np.min(omega_sq.sample(2001)[1]) < 0)
    if repulsive:
        logger.warning("Expansion over t_f=%.4g needs a transiently repulsive trap (omega^2 < 0)", t_f)
    return ExpansionDesign(omega0, omega_f, rho, omega_sq, repulsive)


def design_transport(d: float, t_f: float, omega0: float, m: float = 1.0) -> TransportDesign:
    """Quintic path x(t); trap center x₀ = x + ẍ/ω₀²; force F = m ω₀² x₀."""
    if not omega0 > 0:
        raise ValueError("trap frequency must be positive")
    qc = smooth_ramp(0.0, d, t_f)
    x0 = qc + qc.derivative(2).scaled(1.0 / omega0**2)
    return TransportDesign(d, omega0, m, qc, x0, x0.scaled(m * omega0**2))


def linear_frequency_ramp(omega0: float, omega_f: float, t_f: float) -> PolySchedule:
    """Reference ω(t) changing linearly, for comparison with designed expansions."""
    return make_poly_schedule([(0.0, 0, omega0), (t_f, 0, omega_f)], t_f)


def expansion_spec(design: ExpansionDesign, m: float = 1.0) -> LewisLeachSpec:
    zero = constant_schedule(0.0, design.t_f)
    return LewisLeachSpec(m, zero, design.omega_sq, design.rho, zero, zero, design.omega0)


def transport_spec(design: TransportDesign) -> LewisLeachSpec:
    t_f = design.t_f
    return LewisLeachSpec(
        design.mass,
        design.force,
        constant_schedule(design.omega0**2, t_f),
        constant_schedule(1.0, t_f),
        design.qc,
        constant_schedule(0.0, t_f),
        design.omega0,
    )


def lr_phase(spec: LewisLeachSpec, lambda_n: float, t: float, units: Units = Units()) -> float:
    """Lewis-Riesenfeld phase α_n(t) by adaptive quadrature."""
    m, w0 = spec.mass, spec.omega0

    def integrand(s: float) -> float:
        rho, drho = spec.rho.eval(s), spec.rho.eval(s, 1)
        q, dq = spec.qc.eval(s), spec.qc.eval(s, 1)
        kinetic = m * ((dq * rho - q * drho) ** 2 - w0**2 * q**2 / rho**2) / (2.0 * rho**2)
        return lambda_n / rho**2 + kinetic + spec.gauge.eval(s)

    if t == 0:
        return 0.0
    value, err = quad(integrand, 0.0, t, epsabs=PHASE_ATOL, epsrel=1e-12, limit=200)
    if err > 10 * PHASE_ATOL * max(1.0, abs(value)):
        logger.warning("LR phase quadrature error %.3g at t=%.6g", err, t)
    return float(-value / units.hbar)


def gpe_scaling_expansion(omega0: float, omega_f: float, t_f: float, g0: float) -> GpeExpansion:
    design = design_expansion(omega0, omega_f, t_f)
    rho = design.rho

    def g(t: FloatArray) -> FloatArray:
        return np.asarray(g0 / rho.eval_array(t))

    def dg(t: FloatArray) -> FloatArray:
        return np.asarray(-g0 * rho.eval_array(t, 1) / rho.eval_array(t) ** 2)

    return GpeExpansion(design, FunctionSchedule(t_f, [g, dg], name="coupling"), g0)


def expansion_energy(
    design: ExpansionDesign, t: float, n: int = 0, units: Units = Units()
) -> float:
    """Mean energy of the n-th expanding mode, (2n+1)ħ/(4ω₀)(ρ̇² + ω²ρ² + ω₀²/ρ²)."""
    rho, drho = design.rho.eval(t), design.rho.eval(t, 1)
    w0 = design.omega0
    return (2 * n + 1) * units.hbar / (4.0 * w0) * (
        drho**2 + design.omega_sq.eval(t) * rho**2 + w0**2 / rho**2
    )


def scaling_state(
    design: ExpansionDesign,
    x: Sequence[float],
    t: float,
    n: int = 0,
    m: float = 1.0,
    units: Units = Units(),
) -> NDArray[np.complex128]:
    """ρ^{−1/2} e^{i m ρ̇ x²/(2ħρ)} Φ_n(x/ρ), the invariant eigenmode at time t."""
    xs = np.asarray(x, dtype=float)
    rho, drho = design.rho.eval(t), design.rho.eval(t, 1)
    base = harmonic_eigenstate(xs / rho, n, m, design.omega0, units.hbar)
    chirp = np.exp(1j * m * drho * xs**2 / (2.0 * units.hbar * rho))
    return np.asarray(base * chirp / math.sqrt(rho))


def transport_state(
    design: TransportDesign,
    x: Sequence[float],
    t: float,
    n: int = 0,
    units: Units = Units(),
) -> NDArray[np.complex128]:
    """e^{i m q̇_c x/ħ} Φ_n(x − q_c), the transported invariant mode (no LR phase)."""
    xs = np.asarray(x, dtype=float)
    q, dq = design.qc.eval(t), design.qc.eval(t, 1)
    base = harmonic_eigenstate(xs, n, design.mass, design.omega0, units.hbar, center=q)
    return np.asarray(base * np.exp(1j * design.mass * dq * xs / units.hbar))
