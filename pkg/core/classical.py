"""
Classical and stochastic shortcuts: classical counterdiabatic terms,
Boltzmann-gas expansions from the β-equation, engineered swift equilibration
of overdamped particles, and work accounting.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.special import logsumexp

from core.cd import local_cd_frequency
from core.propagators import ODE_ATOL, ODE_RTOL, LangevinEnsemble
from core.schedules import (
    FloatArray,
    FunctionSchedule,
    PolySchedule,
    Schedule,
    make_poly_schedule,
    smooth_ramp,
)

logger = logging.getLogger(__name__)

RESIDUAL_SAMPLES = 2001
CD_ENSEMBLE_STEPS = 4000
MIN_WORK_ENSEMBLE = 10_000
WORK_SE_FRACTION = 0.1

Correction = Callable[[float], Tuple[float, float]]


# ── Classical counterdiabatic terms ─────────────────────────────────


def classical_cd_harmonic(omega: Schedule, t: float) -> float:
    """Coefficient of px in H_CD = −ω̇ px/(2ω)."""
    w = omega.eval(t)
    if w == 0.0:
        raise ValueError(f"trap frequency vanishes at t={t}")
    return -omega.eval(t, 1) / (2.0 * w)


def classical_cd_transport(x0: Schedule, t: float) -> float:
    """Coefficient of p in H_CD = ẋ₀ p."""
    return x0.eval(t, 1)


def gauge_effective_frequency(omega: Schedule) -> FunctionSchedule:
    """ω_eff² of the point-transformed classical oscillator.

    Identical to :func:`core.cd.local_cd_frequency`; it may go negative.
    """
    return local_cd_frequency(omega)


@dataclass
class CdEnsemble:
    t: FloatArray
    actions: NDArray[np.float64]
    seed: int

    @property
    def action_drift(self) -> float:
        return float(np.max(np.abs(self.actions / self.actions[0] - 1.0)))


def simulate_cd_ensemble(
    omega: Schedule,
    n_traj: int,
    seed: int,
    m: float = 1.0,
    kT: float = 1.0,
    n_steps: int = CD_ENSEMBLE_STEPS,
    n_records: int = 101,
) -> CdEnsemble:
    """Oscillators under H₀ + H_CD, returning each trajectory's action E/ω.

    The flow is linear, so one exponential-midpoint propagator per step is
    shared by the whole ensemble; each step is symplectic.
    """
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    w0 = omega.eval(0.0)
    z = np.vstack(
        [
            rng.standard_normal(n_traj) * math.sqrt(kT / (m * w0**2)),
            rng.standard_normal(n_traj) * math.sqrt(m * kT),
        ]
    )
    dt = omega.t_f / n_steps
    record = {int(round(i)) for i in np.linspace(0, n_steps, n_records)}

    def action(state: FloatArray, t: float) -> FloatArray:
        w = omega.eval(t)
        energy = state[1] ** 2 / (2.0 * m) + 0.5 * m * w**2 * state[0] ** 2
        return np.asarray(energy / w)

    times: List[float] = [0.0]
    actions: List[FloatArray] = [action(z, 0.0)]
    for k in range(n_steps):
        tm = (k + 0.5) * dt
        c = classical_cd_harmonic(omega, tm)
        w = omega.eval(tm)
        gen = np.array([[c, 1.0 / m], [-m * w**2, -c]])
        z = expm(gen * dt) @ z
        if k + 1 in record:
            t = (k + 1) * dt
            times.append(t)
            actions.append(action(z, t))
    return CdEnsemble(np.array(times), np.array(actions), seed)


# ── Boltzmann gas ───────────────────────────────────────────────────


@dataclass(frozen=True)
class BoltzmannPlan:
    """β(t) with the frequency recovered from β²ω² = β₀²ω₀² − ½(ββ̈ − ½β̇²)."""

    beta: PolySchedule
    omega_sq: Schedule
    omega0: float
    omega_f: float
    transient_repulsive: bool = False

    @property
    def t_f(self) -> float:
        return self.beta.t_f

    def residual(self, n: int = RESIDUAL_SAMPLES) -> float:
        """max |β⃛ + 4ω²β̇ + 2(ω²)˙β| relative to β₀ω₀³."""
        t = np.linspace(0.0, self.t_f, n)
        b = self.beta
        res = (
            b.eval_array(t, 3)
            + 4.0 * self.omega_sq.eval_array(t) * b.eval_array(t, 1)
            + 2.0 * self.omega_sq.eval_array(t, 1) * b.eval_array(t)
        )
        return float(np.max(np.abs(res)) / (b.eval(0.0) * self.omega0**3))

    def beta_omega_deviation(self, n: int = RESIDUAL_SAMPLES) -> float:
        """max |βω − β₀ω₀|/(β₀ω₀): how far the temperature departs from tracking ω."""
        t = np.linspace(0.0, self.t_f, n)
        w = np.sqrt(np.abs(self.omega_sq.eval_array(t)))
        ref = self.beta.eval(0.0) * self.omega0
        return float(np.max(np.abs(self.beta.eval_array(t) * w - ref)) / ref)


def boltzmann_design(omega0: float, omega_f: float, t_f: float, beta0: float = 1.0) -> BoltzmannPlan:
    if not (omega0 > 0 and omega_f > 0 and t_f > 0 and beta0 > 0):
        raise ValueError("frequencies, duration and beta0 must be positive")
    beta = smooth_ramp(beta0, beta0 * omega0 / omega_f, t_f)
    ts = np.linspace(0.0, t_f, RESIDUAL_SAMPLES)
    if np.any(beta.eval_array(ts) <= 0.0):
        raise ValueError("designed inverse temperature is not positive")
    c = (beta0 * omega0) ** 2

    def first_integral(t: FloatArray) -> FloatArray:
        b, db, ddb = beta.eval_array(t), beta.eval_array(t, 1), beta.eval_array(t, 2)
        return np.asarray(c - 0.5 * (b * ddb - 0.5 * db**2))

    def value(t: FloatArray) -> FloatArray:
        return np.asarray(first_integral(t) / beta.eval_array(t) ** 2)

    def slope(t: FloatArray) -> FloatArray:
        b, db = beta.eval_array(t), beta.eval_array(t, 1)
        n_dot = -0.5 * b * beta.eval_array(t, 3)
        return np.asarray(n_dot / b**2 - 2.0 * first_integral(t) * db / b**3)

    omega_sq = FunctionSchedule(t_f, [value, slope], name="omega_sq")
    repulsive = bool(np.any(omega_sq.eval_array(ts) < 0.0))
    if repulsive:
        logger.warning("Boltzmann plan needs a transiently repulsive trap (omega^2 < 0)")
    return BoltzmannPlan(beta, omega_sq, omega0, omega_f, repulsive)


def boltzmann_reintegrate(plan: BoltzmannPlan, n_samples: int = 2001) -> Tuple[FloatArray, FloatArray]:
    """Forward-integrate β⃛ = −4ω²β̇ − 2(ω²)˙β from the plan's initial data."""
    b = plan.beta

    def rhs(t: float, y: FloatArray) -> List[float]:
        w2, dw2 = plan.omega_sq.eval(t), plan.omega_sq.eval(t, 1)
        return [y[1], y[2], -4.0 * w2 * y[1] - 2.0 * dw2 * y[0]]

    t_eval = np.linspace(0.0, plan.t_f, n_samples)
    sol = solve_ivp(
        rhs,
        (0.0, plan.t_f),
        [b.eval(0.0), b.eval(0.0, 1), b.eval(0.0, 2)],
        method="DOP853",
        t_eval=t_eval,
        rtol=ODE_RTOL,
        atol=ODE_ATOL,
    )
    if not sol.success:
        raise RuntimeError(f"beta-equation integration failed: {sol.message}")
    return sol.t, sol.y[0]


# ── Engineered swift equilibration ──────────────────────────────────


@dataclass(frozen=True)
class EsePlan:
    omega_i: float
    omega_f: float
    gamma_fric: float
    kT: float
    mass: float
    alpha: PolySchedule
    omega_sq: Schedule
    transient_repulsive: bool = False
    diagnostics: Tuple[str, ...] = ()

    @property
    def t_f(self) -> float:
        return self.alpha.t_f

    @property
    def diffusion(self) -> float:
        return self.kT / (self.mass * self.gamma_fric)

    @property
    def tau_relax(self) -> float:
        return self.gamma_fric / self.omega_f**2

    def fokker_planck_residual(self, n: int = RESIDUAL_SAMPLES) -> float:
        """Mismatch of the Gaussian ansatz in the Fokker-Planck equation.

        The constant and x² coefficients both reduce to
        α̇/α − 2ω²/γ + 4Dα, scaled by 1/τ_relax.
        """
        t = np.linspace(0.0, self.t_f, n)
        a = self.alpha.eval_array(t)
        res = (
            self.alpha.eval_array(t, 1) / a
            - 2.0 * self.omega_sq.eval_array(t) / self.gamma_fric
            + 4.0 * self.diffusion * a
        )
        return float(np.max(np.abs(res)) * self.tau_relax)


def ese_design(
    m: float, omega_i: float, omega_f: float, t_f: float, kT: float, gamma_fric: float
) -> EsePlan:
    """Overdamped stiffness protocol reaching equilibrium at ω_f exactly at t_f."""
    if min(m, omega_i, omega_f, t_f, kT, gamma_fric) <= 0:
        raise ValueError("all ESE parameters must be positive")
    a0 = m * omega_i**2 / (2.0 * kT)
    a1 = m * omega_f**2 / (2.0 * kT)
    alpha = make_poly_schedule([(0.0, 0, a0), (t_f, 0, a1), (0.0, 1, 0.0), (t_f, 1, 0.0)], t_f)

    def value(t: FloatArray) -> FloatArray:
        a = alpha.eval_array(t)
        return np.asarray(0.5 * gamma_fric * alpha.eval_array(t, 1) / a + 2.0 * kT * a / m)

    def slope(t: FloatArray) -> FloatArray:
        a, da, dda = alpha.eval_array(t), alpha.eval_array(t, 1), alpha.eval_array(t, 2)
        return np.asarray(0.5 * gamma_fric * (dda / a - da**2 / a**2) + 2.0 * kT * da / m)

    omega_sq = FunctionSchedule(t_f, [value, slope], name="omega_sq")
    ts = np.linspace(0.0, t_f, RESIDUAL_SAMPLES)
    repulsive = bool(np.any(omega_sq.eval_array(ts) < 0.0))
    diagnostics: Tuple[str, ...] = ()
    if repulsive:
        diagnostics = ("trap transiently repulsive (omega^2 < 0)",)
        logger.warning("ESE protocol with t_f=%.4g needs omega^2 < 0 transiently", t_f)
    return EsePlan(omega_i, omega_f, gamma_fric, kT, m, alpha, omega_sq, repulsive, diagnostics)


def overdamped_cd_potential(
    omega: Schedule, x0: Schedule, m: float, gamma_fric: float, t: float
) -> Tuple[float, float]:
    """(linear, quadratic) coefficients of U₁ about x₀: −mγẋ₀ and mγω̇/(2ω)."""
    w = omega.eval(t)
    if not w > 0:
        raise ValueError(f"trap frequency must be positive, got {w} at t={t}")
    return -m * gamma_fric * x0.eval(t, 1), m * gamma_fric * omega.eval(t, 1) / (2.0 * w)


def overdamped_cd_correction(
    omega: Schedule, x0: Schedule, m: float, gamma_fric: float
) -> Correction:
    """Callable form of overdamped_cd_potential for HarmonicTrap."""
    return lambda t: overdamped_cd_potential(omega, x0, m, gamma_fric, t)


# ── Moments and work ────────────────────────────────────────────────


@dataclass
class MomentSolution:
    t: FloatArray
    variance: FloatArray
    work: FloatArray

    @property
    def final_variance(self) -> float:
        return float(self.variance[-1])

    @property
    def final_work(self) -> float:
        return float(self.work[-1])


def variance_moments(
    omega_sq: Schedule,
    gamma_fric: float,
    kT: float,
    m: float = 1.0,
    variance0: Optional[float] = None,
    n_samples: int = 2001,
) -> MomentSolution:
    """dσ²/dt = −2(ω²/γ)σ² + 2D and dW/dt = ½m (ω²)˙ σ² for an overdamped harmonic trap."""
    diffusion = kT / (m * gamma_fric)
    s0 = kT / (m * omega_sq.eval(0.0)) if variance0 is None else variance0

    def rhs(t: float, y: FloatArray) -> List[float]:
        w2 = omega_sq.eval(t)
        return [-2.0 * w2 / gamma_fric * y[0] + 2.0 * diffusion, 0.5 * m * omega_sq.eval(t, 1) * y[0]]

    t_eval = np.linspace(0.0, omega_sq.t_f, n_samples)
    sol = solve_ivp(
        rhs, (0.0, omega_sq.t_f), [s0, 0.0], method="DOP853", t_eval=t_eval, rtol=ODE_RTOL, atol=ODE_ATOL
    )
    if not sol.success:
        raise RuntimeError(f"moment integration failed: {sol.message}")
    return MomentSolution(sol.t, sol.y[0], sol.y[1])


def free_energy_change(omega_i: float, omega_f: float, kT: float) -> float:
    """ΔF = k_BT ln(ω_f/ω_i) for a classical harmonic trap."""
    return kT * math.log(omega_f / omega_i)


@dataclass
class WorkLedger:
    W: float
    delta_F: float
    W_irr: float
    standard_error: float
    t_f: float
    n_traj: int
    converged: bool = True
    diagnostics: List[str] = field(default_factory=list)

    @property
    def efficiency_bound_ok(self) -> bool:
        return self.W_irr >= -3.0 * self.standard_error


def work_decomposition(
    ensemble: LangevinEnsemble,
    omega_i: float,
    omega_f: float,
    kT: float,
    t_f: float,
) -> WorkLedger:
    """W = ⟨∫∂_tU dt⟩ split into ΔF and the irreversible remainder."""
    works = np.asarray(ensemble.works, dtype=float)
    n = works.size
    diagnostics: List[str] = []
    if n < MIN_WORK_ENSEMBLE:
        diagnostics.append(f"ensemble of {n} trajectories is below {MIN_WORK_ENSEMBLE}")
        logger.warning("Work decomposition on a small ensemble (%d trajectories)", n)
    w_mean = float(works.mean())
    se = float(works.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    delta_f = free_energy_change(omega_i, omega_f, kT)
    w_irr = w_mean - delta_f
    converged = se <= WORK_SE_FRACTION * abs(w_irr)
    if not converged:
        diagnostics.append("standard error exceeds 10% of the irreversible work")
        logger.warning("Irreversible work %.4g not resolved (SE %.3g)", w_irr, se)
    return WorkLedger(w_mean, delta_f, w_irr, se, t_f, n, converged, diagnostics)


def jarzynski_free_energy(works: Sequence[float], kT: float) -> float:
    """ΔF = −k_BT ln⟨e^{−W/k_BT}⟩, evaluated with log-sum-exp."""
    w = np.asarray(works, dtype=float)
    if w.size == 0:
        raise ValueError("need at least one work value")
    return float(-kT * (logsumexp(-w / kT) - math.log(w.size)))


def fit_power_law(t_values: Sequence[float], values: Sequence[float]) -> float:
    """Least-squares exponent of values ∝ t^k on log-log axes."""
    x = np.log(np.asarray(t_values, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
