"""
Hamiltonian families and instantaneous spectra with parallel-transported
eigenvectors.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from core.schedules import FloatArray, Schedule, constant_schedule, fd_derivative
from core.units import DegenerateSpectrumError, ScheduleDomainError, ScheduleError, Units

logger = logging.getLogger(__name__)

GAP_REL_EPS = 1e-10
FD_REL_STEP = 1e-5
HERMITICITY_TOL = 1e-12
OVERLAP_WARN = 0.5

ComplexMatrix = NDArray[np.complex128]
MatrixFn = Callable[[float], ComplexMatrix]

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _same_domain(*schedules: Schedule) -> float:
    t_f = schedules[0].t_f
    for s in schedules[1:]:
        if abs(s.t_f - t_f) > 1e-12 * t_f:
            raise ScheduleError(f"schedules disagree on t_f: {t_f} vs {s.t_f}")
    return t_f


# ── Control records ─────────────────────────────────────────────────


@dataclass(frozen=True)
class TwoLevelControls:
    """Detuning and complex Rabi frequency Ω_R − iΩ_I of a driven two-level system."""

    delta: Schedule
    omega_r: Schedule
    omega_i: Schedule

    def __post_init__(self) -> None:
        _same_domain(self.delta, self.omega_r, self.omega_i)

    @property
    def t_f(self) -> float:
        return self.delta.t_f

    @classmethod
    def real(cls, delta: Schedule, omega_r: Schedule) -> "TwoLevelControls":
        return cls(delta, omega_r, constant_schedule(0.0, delta.t_f))

    def schedules(self) -> Dict[str, Schedule]:
        return {"delta": self.delta, "omega_r": self.omega_r, "omega_i": self.omega_i}


@dataclass(frozen=True)
class ComplexCouplingControls:
    delta: Schedule
    omega_mod: Schedule
    alpha: Schedule

    def __post_init__(self) -> None:
        t_f = _same_domain(self.delta, self.omega_mod, self.alpha)
        samples = self.omega_mod.eval_array(np.linspace(0.0, t_f, 201))
        if np.any(samples < -1e-12 * max(1.0, float(np.max(np.abs(samples))))):
            raise ScheduleError("coupling modulus |Ω| must be nonnegative")

    @property
    def t_f(self) -> float:
        return self.delta.t_f


@dataclass(frozen=True)
class FaquadTwoLevel:
    """Bare-basis model [[0, −√2 J], [−√2 J, U − Δ]] controlled by the bias Δ."""

    J: float
    U_bias: float
    delta: Optional[Schedule] = None

    def __post_init__(self) -> None:
        if not self.J > 0:
            raise ValueError(f"coupling J must be positive, got {self.J}")
        if not self.U_bias > 0:
            raise ValueError(f"bias U must be positive, got {self.U_bias}")

    def matrix(self, lam: float) -> ComplexMatrix:
        c = -np.sqrt(2.0) * self.J
        return np.array([[0.0, c], [c, self.U_bias - lam]], dtype=complex)

    def d_matrix(self, lam: float) -> ComplexMatrix:
        return np.array([[0.0, 0.0], [0.0, -1.0]], dtype=complex)

    def with_schedule(self, delta: Schedule) -> "FaquadTwoLevel":
        return FaquadTwoLevel(self.J, self.U_bias, delta)

    def hamiltonian(self) -> "HamiltonianSchedule":
        if self.delta is None:
            raise ScheduleError("FAQUAD model has no bias schedule attached")
        delta = self.delta
        return HamiltonianSchedule(
            delta.t_f,
            lambda t: self.matrix(delta.eval(t)),
            lambda t: self.d_matrix(delta.eval(t)) * delta.eval(t, 1),
            name="faquad",
        )


@dataclass(frozen=True)
class LewisLeachSpec:
    """Harmonic-plus-scaled-container potential with a quadratic invariant.

    V(q,t) = −F q + ½ m ω² q² + U((q − q_c)/ρ)/ρ² + g
    """

    mass: float
    force: Schedule
    omega_sq: Schedule
    rho: Schedule
    qc: Schedule
    gauge: Schedule
    omega0: float
    container: Optional[Callable[[FloatArray], FloatArray]] = None

    def __post_init__(self) -> None:
        t_f = _same_domain(self.force, self.omega_sq, self.rho, self.qc, self.gauge)
        if np.any(self.rho.eval_array(np.linspace(0.0, t_f, 201)) <= 0):
            raise ScheduleError("scaling function ρ must stay positive")

    @property
    def t_f(self) -> float:
        return self.rho.t_f

    def potential(self, q: Sequence[float], t: float) -> FloatArray:
        x = np.asarray(q, dtype=float)
        rho = self.rho.eval(t)
        v = -self.force.eval(t) * x + 0.5 * self.mass * self.omega_sq.eval(t) * x**2
        if self.container is not None:
            v = v + np.asarray(self.container((x - self.qc.eval(t)) / rho)) / rho**2
        return np.asarray(v + self.gauge.eval(t), dtype=float)

    def ermakov_residual(self, t: float) -> float:
        rho = self.rho.eval(t)
        return self.rho.eval(t, 2) + self.omega_sq.eval(t) * rho - self.omega0**2 / rho**3

    def newton_residual(self, t: float) -> float:
        return (
            self.qc.eval(t, 2)
            + self.omega_sq.eval(t) * self.qc.eval(t)
            - self.force.eval(t) / self.mass
        )

    def max_residuals(self, n: int = 2001) -> Tuple[float, float]:
        ts = np.linspace(0.0, self.t_f, n)
        erm = max(abs(self.ermakov_residual(float(t))) for t in ts)
        newt = max(abs(self.newton_residual(float(t))) for t in ts)
        return erm, newt


# ── Hamiltonian schedules ───────────────────────────────────────────


@dataclass
class HamiltonianSchedule:
    """Hermitian-matrix-valued function of time on [0, t_f].

    Without an analytic derivative, ``d_dt`` falls back to fourth-order
    finite differences with step 1e-5 t_f, shifted to stay in the domain.
    """

    t_f: float
    _at: MatrixFn
    _d_dt: Optional[MatrixFn] = None
    name: str = ""
    dim: int = field(init=False)

    def __post_init__(self) -> None:
        if not self.t_f > 0:
            raise ScheduleError(f"t_f must be positive, got {self.t_f}")
        self.dim = int(np.asarray(self._at(0.0)).shape[0])
        if self.dim < 2:
            raise ValueError("Hamiltonians need at least two levels")

    def _check_time(self, t: float) -> float:
        slack = 1e-12 * self.t_f
        if not np.isfinite(t) or t < -slack or t > self.t_f + slack:
            raise ScheduleDomainError(f"t={t!r} outside Hamiltonian domain [0, {self.t_f}]")
        return min(max(float(t), 0.0), self.t_f)

    def at(self, t: float) -> ComplexMatrix:
        return np.asarray(self._at(self._check_time(t)), dtype=complex)

    def d_dt(self, t: float) -> ComplexMatrix:
        t = self._check_time(t)
        if self._d_dt is not None:
            return np.asarray(self._d_dt(t), dtype=complex)
        h = FD_REL_STEP * self.t_f
        return np.asarray(fd_derivative(self._at, t, 1, h, 0.0, self.t_f), dtype=complex)

    @property
    def has_analytic_derivative(self) -> bool:
        return self._d_dt is not None

    def __add__(self, other: "HamiltonianSchedule") -> "HamiltonianSchedule":
        if abs(other.t_f - self.t_f) > 1e-12 * self.t_f or other.dim != self.dim:
            raise ScheduleError("cannot add Hamiltonians with different domains or sizes")
        deriv: Optional[MatrixFn] = None
        if self.has_analytic_derivative and other.has_analytic_derivative:
            deriv = lambda t: self.d_dt(t) + other.d_dt(t)  # noqa: E731
        return HamiltonianSchedule(
            self.t_f,
            lambda t: self.at(t) + other.at(t),
            deriv,
            name=f"{self.name}+{other.name}".strip("+"),
        )

    def hermiticity_error(self, n: int = 101) -> float:
        worst = 0.0
        for t in np.linspace(0.0, self.t_f, n):
            m = self.at(float(t))
            scale = max(np.linalg.norm(m), 1e-300)
            worst = max(worst, float(np.linalg.norm(m - m.conj().T) / scale))
        return worst


def constant_hamiltonian(matrix: ComplexMatrix, t_f: float) -> HamiltonianSchedule:
    m = np.asarray(matrix, dtype=complex)
    zero = np.zeros_like(m)
    return HamiltonianSchedule(t_f, lambda t: m, lambda t: zero, name="constant")


def two_level_matrix(c: TwoLevelControls, t: float, units: Units = Units()) -> ComplexMatrix:
    d, wr, wi = c.delta.eval(t), c.omega_r.eval(t), c.omega_i.eval(t)
    return 0.5 * units.hbar * np.array([[-d, wr - 1j * wi], [wr + 1j * wi, d]], dtype=complex)


def two_level_hamiltonian(c: TwoLevelControls, units: Units = Units()) -> HamiltonianSchedule:
    def deriv(t: float) -> ComplexMatrix:
        d, wr, wi = c.delta.eval(t, 1), c.omega_r.eval(t, 1), c.omega_i.eval(t, 1)
        return 0.5 * units.hbar * np.array([[-d, wr - 1j * wi], [wr + 1j * wi, d]], dtype=complex)

    return HamiltonianSchedule(c.t_f, lambda t: two_level_matrix(c, t, units), deriv, "two_level")


def complex_coupling_matrix(
    c: ComplexCouplingControls, t: float, units: Units = Units()
) -> ComplexMatrix:
    d, w, a = c.delta.eval(t), c.omega_mod.eval(t), c.alpha.eval(t)
    off = w * np.exp(1j * a)
    return 0.5 * units.hbar * np.array([[-d, off], [np.conj(off), d]], dtype=complex)


def complex_coupling_hamiltonian(
    c: ComplexCouplingControls, units: Units = Units()
) -> HamiltonianSchedule:
    def deriv(t: float) -> ComplexMatrix:
        w, a = c.omega_mod.eval(t), c.alpha.eval(t)
        doff = (c.omega_mod.eval(t, 1) + 1j * w * c.alpha.eval(t, 1)) * np.exp(1j * a)
        dd = c.delta.eval(t, 1)
        return 0.5 * units.hbar * np.array([[-dd, doff], [np.conj(doff), dd]], dtype=complex)

    return HamiltonianSchedule(
        c.t_f, lambda t: complex_coupling_matrix(c, t, units), deriv, "complex_coupling"
    )


def pauli_hamiltonian(x: Schedule, y: Schedule, z: Schedule) -> HamiltonianSchedule:
    """H = X σ_x + Y σ_y + Z σ_z."""
    t_f = _same_domain(x, y, z)

    def build(t: float, order: int) -> ComplexMatrix:
        return x.eval(t, order) * SIGMA_X + y.eval(t, order) * SIGMA_Y + z.eval(t, order) * SIGMA_Z

    return HamiltonianSchedule(t_f, lambda t: build(t, 0), lambda t: build(t, 1), "pauli")


def lambda_system_hamiltonian(
    pump: Schedule,
    stokes: Schedule,
    units: Units = Units(),
    detuning: Optional[Schedule] = None,
) -> HamiltonianSchedule:
    """Three-level Λ system in the rotating frame, levels |1⟩, |2⟩ (excited), |3⟩."""
    t_f = _same_domain(pump, stokes)
    det = detuning if detuning is not None else constant_schedule(0.0, t_f)

    def build(t: float, order: int) -> ComplexMatrix:
        p, s, d = pump.eval(t, order), stokes.eval(t, order), det.eval(t, order)
        return 0.5 * units.hbar * np.array(
            [[0.0, p, 0.0], [p, 2.0 * d, s], [0.0, s, 0.0]], dtype=complex
        )

    return HamiltonianSchedule(t_f, lambda t: build(t, 0), lambda t: build(t, 1), "lambda")


def unitary_hamiltonian(
    unitary: MatrixFn,
    t_f: float,
    units: Units = Units(),
    d_unitary: Optional[MatrixFn] = None,
) -> HamiltonianSchedule:
    """Inverse engineering from a prescribed evolution operator: H = iħ U̇ U†."""
    h = FD_REL_STEP * t_f

    def build(t: float) -> ComplexMatrix:
        u = np.asarray(unitary(t), dtype=complex)
        if d_unitary is not None:
            du = np.asarray(d_unitary(t), dtype=complex)
        else:
            du = np.asarray(fd_derivative(unitary, t, 1, h, 0.0, t_f), dtype=complex)
        m = 1j * units.hbar * du @ u.conj().T
        return 0.5 * (m + m.conj().T)

    return HamiltonianSchedule(t_f, build, name="unitary")


def spin_precession_field(
    spin: Sequence[Schedule], b0: Schedule, gyromagnetic: float
) -> Callable[[float], FloatArray]:
    """Field B = B₀ S + (1/γ) S × Ṡ steering a unit classical spin along S(t)."""
    if len(spin) != 3:
        raise ValueError("spin path needs three components")
    if gyromagnetic == 0:
        raise ValueError("gyromagnetic ratio must be nonzero")
    _same_domain(*spin, b0)

    def field_at(t: float) -> FloatArray:
        s = np.array([c.eval(t) for c in spin])
        ds = np.array([c.eval(t, 1) for c in spin])
        return np.asarray(b0.eval(t) * s + np.cross(s, ds) / gyromagnetic, dtype=float)

    return field_at


# ── Spectra ─────────────────────────────────────────────────────────


def _fix_phases(vecs: ComplexMatrix, prev_basis: Optional[ComplexMatrix], t: float) -> ComplexMatrix:
    out = vecs.copy()
    for n in range(out.shape[1]):
        if prev_basis is not None:
            overlap = np.vdot(prev_basis[:, n], out[:, n])
            if abs(overlap) < OVERLAP_WARN:
                logger.warning("Eigenvector %d jumped at t=%.6g (overlap %.3g)", n, t, abs(overlap))
            if abs(overlap) > 0:
                out[:, n] *= np.conj(overlap) / abs(overlap)
        else:
            idx = int(np.argmax(np.abs(out[:, n]) - 1e-12 * np.arange(out.shape[0])))
            ref = out[idx, n]
            out[:, n] *= np.conj(ref) / abs(ref)
    return out


def matrix_spectrum(
    matrix: ComplexMatrix,
    prev_basis: Optional[ComplexMatrix] = None,
    eps_gap: Optional[float] = None,
    t: float = 0.0,
) -> Tuple[FloatArray, ComplexMatrix]:
    """Ascending eigenvalues and phase-fixed eigenvectors (as columns)."""
    vals, vecs = np.linalg.eigh(np.asarray(matrix, dtype=complex))
    gaps = np.diff(vals)
    spread = float(vals[-1] - vals[0])
    eps = GAP_REL_EPS * spread if eps_gap is None else eps_gap
    if spread == 0.0 or np.any(gaps <= eps):
        k = int(np.argmin(gaps))
        raise DegenerateSpectrumError((k, k + 1), t, float(gaps[k]))
    return vals, _fix_phases(vecs, prev_basis, t)


def instantaneous_spectrum(
    h: HamiltonianSchedule,
    t: float,
    prev_basis: Optional[ComplexMatrix] = None,
    eps_gap: Optional[float] = None,
) -> Tuple[FloatArray, ComplexMatrix]:
    return matrix_spectrum(h.at(t), prev_basis, eps_gap, t)


def track_spectrum(
    h: HamiltonianSchedule,
    t_grid: Sequence[float],
    eps_gap: Optional[float] = None,
) -> Tuple[FloatArray, NDArray[np.complex128]]:
    """Sweep t_grid in order, carrying the basis for discrete parallel transport."""
    energies = []
    bases = []
    prev: Optional[ComplexMatrix] = None
    for t in t_grid:
        vals, vecs = instantaneous_spectrum(h, float(t), prev, eps_gap)
        energies.append(vals)
        bases.append(vecs)
        prev = vecs
    return np.array(energies), np.array(bases)


def faquad_matrix(m: FaquadTwoLevel, t: float) -> ComplexMatrix:
    if m.delta is None:
        raise ScheduleError("FAQUAD model has no bias schedule attached")
    return m.matrix(m.delta.eval(t))
