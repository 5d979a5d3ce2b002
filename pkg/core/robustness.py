"""
Robustness of two-level inversions against systematic and noisy coupling
errors, and Fourier-method transport that is optimal for several trap
frequencies at once.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from scipy.integrate import quad
from scipy.optimize import minimize

from core.invariants import TwoLevelAnsatz, two_level_from_ansatz
from core.models import ComplexMatrix, HamiltonianSchedule, TwoLevelControls, two_level_hamiltonian
from core.propagators import propagate_lindblad, propagate_nlevel, simulate_forced_oscillator
from core.schedules import (
    FloatArray,
    FunctionSchedule,
    PolySchedule,
    Schedule,
    TrigSchedule,
    constant_schedule,
    linear_schedule,
)
from core.units import Settings, Units

logger = logging.getLogger(__name__)

PROBE_STRENGTHS = (0.02, 0.04)
CURVATURE_STEP = 0.01
EXTRAPOLATION_SPREAD = 0.05
QUAD_ABS_TOL = 1e-10
QUAD_LIMIT = 400
NOISE_SEARCH_ITERATIONS = 60
NOISE_SEARCH_STEPS = 1500
SHAPE_BOUND = 0.9
MAX_FOURIER_ROOTS = 3

_UP = np.array([1.0, 0.0], dtype=complex)


@dataclass
class SensitivityReport:
    q_s: float
    q_n: float
    fd_curvature: float
    agreement: float
    q_n_converged: bool = True
    probes: Tuple[float, ...] = PROBE_STRENGTHS
    diagnostics: List[str] = field(default_factory=list)


@dataclass
class NoiseEstimate:
    q_n: float
    raw: Tuple[float, ...]
    converged: bool


# ── Ansatz presets ──────────────────────────────────────────────────


def flat_pi_ansatz(t_f: float, alpha: float = -math.pi / 2) -> TwoLevelAnsatz:
    """θ = πt/t_f with constant α and γ: the resonant π-pulse."""
    return TwoLevelAnsatz(
        linear_schedule(0.0, math.pi, t_f),
        constant_schedule(alpha, t_f),
        constant_schedule(0.0, t_f),
    )


def qs_zero_ansatz(t_f: float) -> TwoLevelAnsatz:
    """θ = πs, γ = 2θ − sin2θ, α = arctan(4sin³θ) − π/2."""
    w = math.pi / t_f

    def alpha(t: FloatArray) -> FloatArray:
        return np.asarray(np.arctan(4.0 * np.sin(w * t) ** 3) - math.pi / 2)

    def alpha_dot(t: FloatArray) -> FloatArray:
        s = np.sin(w * t)
        return np.asarray(12.0 * w * s**2 * np.cos(w * t) / (1.0 + 16.0 * s**6))

    def gamma(t: FloatArray) -> FloatArray:
        return np.asarray(2.0 * w * t - np.sin(2.0 * w * t))

    def gamma_dot(t: FloatArray) -> FloatArray:
        return np.asarray(4.0 * w * np.sin(w * t) ** 2)

    return TwoLevelAnsatz(
        linear_schedule(0.0, math.pi, t_f),
        FunctionSchedule(t_f, [alpha, alpha_dot], name="alpha"),
        FunctionSchedule(t_f, [gamma, gamma_dot], name="gamma"),
    )


def preset_qs_zero(t_f: float) -> TwoLevelControls:
    """Inversion pulse with vanishing first-order sensitivity to coupling errors."""
    if not t_f > 0:
        raise ValueError(f"t_f must be positive, got {t_f}")
    w = math.pi / t_f

    def omega_r(t: FloatArray) -> FloatArray:
        return np.asarray(w * np.sqrt(1.0 + 16.0 * np.sin(w * t) ** 6))

    def delta(t: FloatArray) -> FloatArray:
        s6 = np.sin(w * t) ** 6
        return np.asarray(
            -8.0 * w * np.sin(w * t) * np.sin(2.0 * w * t) * (1.0 + 4.0 * s6) / (1.0 + 16.0 * s6)
        )

    return TwoLevelControls(
        FunctionSchedule(t_f, [delta], name="delta"),
        FunctionSchedule(t_f, [omega_r], name="omega_r"),
        constant_schedule(0.0, t_f),
    )


def noise_family_ansatz(t_f: float, shape: float, azimuth: float) -> TwoLevelAnsatz:
    """θ = πs − (a/2)sin2πs with a fixed rotation-axis azimuth and γ = 0."""
    if abs(shape) >= 1.0:
        raise ValueError(f"shape parameter must satisfy |a| < 1, got {shape}")
    return TwoLevelAnsatz(
        TrigSchedule(t_f, [("lin", 0, math.pi), ("sin", 2, -0.5 * shape)]),
        constant_schedule(azimuth, t_f),
        constant_schedule(0.0, t_f),
    )


# ── Systematic errors ───────────────────────────────────────────────


def systematic_sensitivity(a: TwoLevelAnsatz) -> float:
    """|∫ e^{−iγ} θ̇ sin²θ dt|, the first-order transition amplitude per unit β."""

    def part(trig: Callable[[float], float]) -> float:
        def integrand(t: float) -> float:
            return trig(a.gamma.eval(t)) * a.theta.eval(t, 1) * math.sin(a.theta.eval(t)) ** 2

        value, _ = quad(integrand, 0.0, a.t_f, epsabs=QUAD_ABS_TOL, epsrel=1e-12, limit=QUAD_LIMIT)
        return float(value)

    return float(math.hypot(part(math.cos), part(math.sin)))


def coupling_part(c: TwoLevelControls, units: Units = Units()) -> HamiltonianSchedule:
    """H₁: the Rabi-coupling part of the two-level Hamiltonian."""
    zero = constant_schedule(0.0, c.t_f)
    return two_level_hamiltonian(TwoLevelControls(zero, c.omega_r, c.omega_i), units)


def inversion_probability(
    c: TwoLevelControls,
    beta: float = 0.0,
    units: Units = Units(),
    dt: Optional[float] = None,
) -> float:
    """P₂(t_f) for H₀ + βH₁, starting in level 1."""
    h0 = two_level_hamiltonian(c, units)
    h = h0
    if beta != 0.0:
        h1 = coupling_part(c, units)
        h = HamiltonianSchedule(
            h0.t_f,
            lambda t: h0.at(t) + beta * h1.at(t),
            lambda t: h0.d_dt(t) + beta * h1.d_dt(t),
        )
    traj = propagate_nlevel(h, _UP, dt, units, "magnus4")
    return float(abs(traj.final[1]) ** 2)


def systematic_scan(
    c: TwoLevelControls,
    betas: Sequence[float],
    units: Units = Units(),
    dt: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> FloatArray:
    settings = settings or Settings.from_env()
    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        values = list(pool.map(lambda b: inversion_probability(c, float(b), units, dt), betas))
    return np.asarray(values, dtype=float)


def systematic_curvature(
    c: TwoLevelControls,
    step: float = CURVATURE_STEP,
    units: Units = Units(),
    dt: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> float:
    """−½ ∂²P₂/∂β² at β = 0 by a central difference."""
    if not step > 0:
        raise ValueError(f"curvature step must be positive, got {step}")
    p_minus, p0, p_plus = systematic_scan(c, (-step, 0.0, step), units, dt, settings)
    return float(-0.5 * (p_plus - 2.0 * p0 + p_minus) / step**2)


# ── Noise ───────────────────────────────────────────────────────────


def _final_population(
    c: TwoLevelControls, strength: float, units: Units, dt: Optional[float]
) -> float:
    h = two_level_hamiltonian(c, units)
    rate = strength**2

    def l_real(t: float) -> ComplexMatrix:
        return np.array([[0.0, 0.5 * c.omega_r.eval(t)], [0.5 * c.omega_r.eval(t), 0.0]], dtype=complex)

    def l_imag(t: float) -> ComplexMatrix:
        w = 0.5 * c.omega_i.eval(t)
        return np.array([[0.0, -1j * w], [1j * w, 0.0]], dtype=complex)

    rho0 = np.outer(_UP, _UP.conj())
    traj = propagate_lindblad(h, [(l_real, rate), (l_imag, rate)], rho0, dt, units)
    return float(np.real(traj.final[1, 1]))


def noise_sensitivity(
    c: TwoLevelControls,
    probes: Sequence[float] = PROBE_STRENGTHS,
    units: Units = Units(),
    dt: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> NoiseEstimate:
    """q_N from −[P₂(λ) − P₂(0)]/λ², Richardson-extrapolated over two probe strengths.

    Dissipators are the amplitude-noise operators H_{2R}/ħ and H_{2I}/ħ with
    rate λ².
    """
    if len(probes) != 2 or not 0 < probes[0] < probes[1]:
        raise ValueError(f"need two increasing positive probe strengths, got {probes}")
    settings = settings or Settings.from_env()
    strengths = [0.0, float(probes[0]), float(probes[1])]
    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        p0, p1, p2 = pool.map(lambda lam: _final_population(c, lam, units, dt), strengths)
    l1, l2 = probes[0] ** 2, probes[1] ** 2
    q1 = -(p1 - p0) / l1
    q2 = -(p2 - p0) / l2
    q_n = (l2 * q1 - l1 * q2) / (l2 - l1)
    scale = max(abs(q_n), abs(q1), abs(q2))
    converged = scale == 0.0 or abs(q1 - q2) <= EXTRAPOLATION_SPREAD * scale
    if not converged:
        logger.warning(
            "Noise sensitivity extrapolation not converged: q(%.3g)=%.6g, q(%.3g)=%.6g",
            probes[0], q1, probes[1], q2,
        )
    return NoiseEstimate(float(q_n), (float(q1), float(q2)), converged)


def optimize_noise_ansatz(
    t_f: float,
    start: Tuple[float, float] = (0.0, -math.pi / 2),
    maxiter: int = NOISE_SEARCH_ITERATIONS,
    units: Units = Units(),
    steps: int = NOISE_SEARCH_STEPS,
) -> Tuple[TwoLevelAnsatz, float]:
    """Bounded Nelder-Mead over (shape, azimuth) minimizing q_N.

    The default start is the flat π-pulse, so the result never does worse.
    """
    dt = t_f / steps
    serial = Settings(threads=1)

    def objective(p: FloatArray) -> float:
        c = two_level_from_ansatz(noise_family_ansatz(t_f, float(p[0]), float(p[1])))
        return noise_sensitivity(c, units=units, dt=dt, settings=serial).q_n

    res = minimize(
        objective,
        np.asarray(start, dtype=float),
        method="Nelder-Mead",
        bounds=[(-SHAPE_BOUND, SHAPE_BOUND), (-math.pi, math.pi)],
        options={"maxiter": maxiter, "xatol": 1e-4, "fatol": 1e-8},
    )
    start_value = objective(np.asarray(start, dtype=float))
    best = res.x if float(res.fun) <= start_value else np.asarray(start, dtype=float)
    logger.debug("Noise search: %d evaluations, q_N %.6g -> %.6g", res.nfev, start_value, res.fun)
    return noise_family_ansatz(t_f, float(best[0]), float(best[1])), float(min(res.fun, start_value))


def sensitivity_report(
    a: TwoLevelAnsatz,
    probes: Sequence[float] = PROBE_STRENGTHS,
    step: float = CURVATURE_STEP,
    units: Units = Units(),
    dt: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> SensitivityReport:
    c = two_level_from_ansatz(a)
    q_s = systematic_sensitivity(a)
    curvature = systematic_curvature(c, step, units, dt, settings)
    noise = noise_sensitivity(c, probes, units, dt, settings)
    scale = max(q_s**2, abs(curvature))
    agreement = abs(q_s**2 - curvature) / scale if scale > 1e-6 else abs(q_s**2 - curvature)
    diagnostics = []
    if not noise.converged:
        diagnostics.append("noise extrapolation spread exceeds 5%")
    return SensitivityReport(
        q_s, noise.q_n, curvature, agreement, noise.converged, tuple(probes), diagnostics
    )


# ── Fourier transport ───────────────────────────────────────────────


@dataclass
class FourierTransportDesign:
    x0: PolySchedule
    target_roots: Tuple[float, ...]
    g: PolySchedule
    d: float
    mass: float = 1.0

    @property
    def t_f(self) -> float:
        return self.x0.t_f

    def excitation(self, omega: float) -> float:
        """Final energy above the ground state of a classical particle in the trap."""
        return simulate_forced_oscillator(omega**2, self.x0, m=self.mass).excitation


def trajectory_fourier(x0: Schedule, omega: float) -> complex:
    """F(ω) = ∫ẍ₀e^{−iωt}dt = iω∫ẋ₀e^{−iωt}dt, endpoint velocity jumps included."""
    if omega == 0.0:
        return 0j

    def velocity(t: float) -> float:
        return x0.eval(t, 1)

    re, _ = quad(velocity, 0.0, x0.t_f, weight="cos", wvar=omega, epsabs=1e-14, limit=QUAD_LIMIT)
    im, _ = quad(velocity, 0.0, x0.t_f, weight="sin", wvar=omega, epsabs=1e-14, limit=QUAD_LIMIT)
    return complex(1j * omega * (re - 1j * im))


def fourier_excess_energy(x0: Schedule, omega: float, m: float = 1.0) -> float:
    """ΔE = (m/2)|F(ω)|² for a particle starting at rest in a trap at rest."""
    return float(0.5 * m * abs(trajectory_fourier(x0, omega)) ** 2)


def _auxiliary_polynomial(k: int, target: float, degree: int) -> Polynomial:
    """G(s) with G⁽ʲ⁾(0) = G⁽ʲ⁾(1) = 0 for j < 2k, ∫G = 0 and ∫∫G = target."""
    rows = []
    rhs = []
    n = degree + 1
    for j in range(2 * k):
        for end in (0.0, 1.0):
            row = np.zeros(n)
            for p in range(j, n):
                row[p] = math.factorial(p) / math.factorial(p - j) * end ** (p - j)
            rows.append(row)
            rhs.append(0.0)
    rows.append(np.array([1.0 / (p + 1) for p in range(n)]))
    rhs.append(0.0)
    rows.append(np.array([1.0 / ((p + 1) * (p + 2)) for p in range(n)]))
    rhs.append(target)
    a, b = np.array(rows), np.array(rhs)
    coeffs, *_ = np.linalg.lstsq(a, b, rcond=None)
    if np.max(np.abs(a @ coeffs - b)) > 1e-9 * max(1.0, abs(target)):
        raise np.linalg.LinAlgError("auxiliary polynomial conditions not satisfiable")
    return Polynomial(coeffs)


def fourier_robust_transport(
    d: float, t_f: float, roots: Sequence[float], m: float = 1.0
) -> FourierTransportDesign:
    """Transport whose Fourier transform of ẍ₀ vanishes at every requested frequency.

    ẍ₀ = Π_k(∂_t² + ω_k²) g, so F(ω) carries the factor Π_k(ω_k² − ω²).
    Repeated roots give flat zeros.
    """
    if not t_f > 0:
        raise ValueError(f"t_f must be positive, got {t_f}")
    if not 1 <= len(roots) <= MAX_FOURIER_ROOTS:
        raise ValueError(f"between 1 and {MAX_FOURIER_ROOTS} target frequencies required")
    if any(not w > 0 for w in roots):
        raise ValueError("target frequencies must be positive")
    k = len(roots)
    op = Polynomial([1.0])
    for w in roots:
        op = op * Polynomial([w**2, 0.0, 1.0])
    c0 = float(op.coef[0])
    q = op.coef[2:]

    target = d / (c0 * t_f**2)
    degree = 4 * k + 1
    for attempt in range(4):
        try:
            g = _auxiliary_polynomial(k, target, degree + attempt)
            break
        except np.linalg.LinAlgError:
            logger.debug("Raising auxiliary polynomial degree to %d", degree + attempt + 1)
    else:
        raise np.linalg.LinAlgError("could not build the auxiliary polynomial")

    x = c0 * t_f**2 * g.integ(2)
    for j, qj in enumerate(q):
        if qj != 0.0:
            x = x + qj * g.deriv(j) / t_f**j
    x0 = PolySchedule.from_coefficients(t_f, x.coef)
    logger.debug("Fourier transport for %d frequencies: x0(t_f)=%.12g", k, x0.eval(t_f))
    return FourierTransportDesign(
        x0, tuple(float(w) for w in roots), PolySchedule.from_coefficients(t_f, g.coef), d, m
    )
