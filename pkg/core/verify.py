"""
Metrics for designed protocols: fidelities, speed-limit bounds, energy
averages and costs.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import quad, simpson, trapezoid

from core.cd import cd_single_state
from core.invariants import ExpansionDesign, expansion_energy
from core.models import HamiltonianSchedule
from core.propagators import GridWavefunction, NLevelTrajectory, instantaneous_populations
from core.units import Units

logger = logging.getLogger(__name__)

ML_DENOMINATOR_EPS = 1e-14
BOUND_SLACK = 1e-8
REGIME_RATIO = 3.0
REGIME_TIME = 0.3

StateLike = Union[GridWavefunction, NDArray[np.complex128], Sequence[complex]]


@dataclass
class BoundCheck:
    kind: str
    lhs: float
    rhs: float
    defined: bool = True
    diagnostics: List[str] = field(default_factory=list)

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def holds(self) -> bool:
        return self.margin >= -BOUND_SLACK * self.lhs


def fidelity(psi: StateLike, phi: StateLike) -> float:
    """|⟨φ|ψ⟩|²; grid wavefunctions use the trapezoid inner product."""
    if isinstance(psi, GridWavefunction):
        return float(abs(psi.overlap(phi.psi if isinstance(phi, GridWavefunction) else np.asarray(phi))) ** 2)
    a = np.asarray(psi, dtype=complex)
    b = np.asarray(phi.psi if isinstance(phi, GridWavefunction) else phi, dtype=complex)
    return float(abs(np.vdot(b, a)) ** 2)


def _expectations(traj: NLevelTrajectory) -> NDArray[np.complex128]:
    """Rows (⟨H⟩, ⟨H²⟩, ⟨ψ₀|H|ψ⟩) at every sample."""
    psi0 = traj.states[0]
    out = np.empty((len(traj.t), 3), dtype=complex)
    for k, t in enumerate(traj.t):
        hm = traj.h.at(float(t))
        hpsi = hm @ traj.states[k]
        out[k] = (np.vdot(traj.states[k], hpsi), np.vdot(hpsi, hpsi), np.vdot(psi0, hpsi))
    return out


def _bures_angle(traj: NLevelTrajectory) -> float:
    overlap = min(1.0, float(abs(np.vdot(traj.states[0], traj.final))))
    return math.acos(overlap)


def time_averaged_energy(traj: NLevelTrajectory) -> float:
    """(1/τ)∫⟨H⟩dt."""
    ex = _expectations(traj)
    return float(simpson(ex[:, 0].real, x=traj.t) / traj.t_f)


def aa_bound(traj: NLevelTrajectory) -> BoundCheck:
    """τ ≥ ħ𝓛/ΔĒ with ΔĒ the time-averaged energy spread."""
    ex = _expectations(traj)
    spread = np.sqrt(np.maximum(ex[:, 1].real - ex[:, 0].real ** 2, 0.0))
    mean_spread = float(simpson(spread, x=traj.t) / traj.t_f)
    angle = _bures_angle(traj)
    if mean_spread == 0.0:
        rhs = 0.0 if angle == 0.0 else math.inf
    else:
        rhs = traj.units.hbar * angle / mean_spread
    return BoundCheck("AA", traj.t_f, rhs)


def ml_bound(traj: NLevelTrajectory) -> BoundCheck:
    """τ ≥ ħ|cos𝓛 − 1| / ((1/τ)∫|⟨ψ(0)|H|ψ(t)⟩|dt)."""
    ex = _expectations(traj)
    denom = float(simpson(np.abs(ex[:, 2]), x=traj.t) / traj.t_f)
    angle = _bures_angle(traj)
    if denom < ML_DENOMINATOR_EPS:
        msg = "ML-type bound undefined: vanishing transition energy"
        logger.warning("%s (%.3g)", msg, denom)
        return BoundCheck("ML", traj.t_f, 0.0, defined=False, diagnostics=[msg])
    rhs = traj.units.hbar * abs(math.cos(angle) - 1.0) / denom
    return BoundCheck("ML", traj.t_f, rhs)


def energy_cost(h: HamiltonianSchedule, t_grid: Sequence[float]) -> float:
    """(1/t_f)∫‖H‖_F dt."""
    t = np.asarray(t_grid, dtype=float)
    norms = np.array([np.linalg.norm(h.at(float(tk))) for tk in t])
    return float(trapezoid(norms, t) / h.t_f)


def cd_norm(h: HamiltonianSchedule, n: int, t: float, units: Units = Units()) -> float:
    """ħ(2⟨ṅ|ṅ⟩)^{1/2}, the Frobenius norm of the single-level CD term."""
    return float(np.linalg.norm(cd_single_state(h, n, t, units)))


def tracked_population(traj: NLevelTrajectory, level: int = 0, stride: int = 1) -> float:
    """Smallest instantaneous-eigenstate population of one level along a run."""
    worst = 1.0
    for k in range(0, len(traj.t), stride):
        worst = min(worst, float(instantaneous_populations(traj, k)[level]))
    return worst


def expansion_energy_bound(n: int, omega_f: float, t_f: float, units: Units = Units()) -> float:
    """Lower bound (2n+1)ħ/(2ω_f t_f²) on the time-averaged energy of a fast expansion."""
    return (2 * n + 1) * units.hbar / (2.0 * omega_f * t_f**2)


def in_energy_bound_regime(omega0: float, omega_f: float, t_f: float) -> bool:
    """Whether (ω₀/ω_f)^{1/2} ≫ 1 and t_f ≪ (ω₀ω_f)^{−1/2} hold numerically."""
    return math.sqrt(omega0 / omega_f) >= REGIME_RATIO and t_f * math.sqrt(omega0 * omega_f) <= REGIME_TIME


def expansion_mean_energy(design: ExpansionDesign, n: int = 0, units: Units = Units()) -> float:
    """(1/t_f)∫E_n(t)dt along a designed expansion."""
    value, _ = quad(
        lambda t: expansion_energy(design, t, n, units), 0.0, design.t_f, epsabs=1e-12, limit=200
    )
    return float(value / design.t_f)
