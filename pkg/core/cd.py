"""
Counterdiabatic (transitionless) driving terms and unitarily equivalent
alternatives.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline

from core.models import (
    SIGMA_Y,
    ComplexCouplingControls,
    ComplexMatrix,
    HamiltonianSchedule,
    TwoLevelControls,
    matrix_spectrum,
)
from core.schedules import FloatArray, FunctionSchedule, PolySchedule, Schedule
from core.units import ScheduleError, SingularPointError, Units

logger = logging.getLogger(__name__)

SUPERADIABATIC_GRID = 2001
MAX_SUPERADIABATIC_ORDER = 4
BOUNDARY_NORM_REL = 1e-8


@dataclass(frozen=True)
class CdDecomposition:
    h0: ComplexMatrix
    h_cd: ComplexMatrix
    energies: FloatArray
    basis: ComplexMatrix


@dataclass(frozen=True)
class SuperadiabaticStep:
    """One iteration level: frame Hamiltonian H_j, its CD term K_j, and K_j in the lab frame."""

    j: int
    t: FloatArray
    h_frame: NDArray[np.complex128]
    k_frame: NDArray[np.complex128]
    h_cd_lab: NDArray[np.complex128]
    boundary_warning: bool


def _hermitize(m: ComplexMatrix) -> ComplexMatrix:
    return 0.5 * (m + m.conj().T)


def _sum_over_states(
    energies: FloatArray, vecs: ComplexMatrix, hdot: ComplexMatrix, hbar: float
) -> ComplexMatrix:
    """iħ Σ_{m≠n} |m⟩⟨m|Ḣ|n⟩⟨n| / (E_n − E_m)."""
    elements = vecs.conj().T @ hdot @ vecs
    denom = energies[None, :] - energies[:, None]
    np.fill_diagonal(denom, 1.0)
    k = 1j * hbar * elements / denom
    np.fill_diagonal(k, 0.0)
    return _hermitize(vecs @ k @ vecs.conj().T)


def cd_decomposition(
    h: HamiltonianSchedule,
    t: float,
    units: Units = Units(),
    prev_basis: Optional[ComplexMatrix] = None,
    eps_gap: Optional[float] = None,
) -> CdDecomposition:
    h0 = h.at(t)
    hdot = h.d_dt(t)
    energies, vecs = matrix_spectrum(h0, prev_basis, eps_gap, t)
    if not np.any(hdot):
        return CdDecomposition(h0, np.zeros_like(h0), energies, vecs)
    return CdDecomposition(h0, _sum_over_states(energies, vecs, hdot, units.hbar), energies, vecs)


def cd_term(h: HamiltonianSchedule, t: float, units: Units = Units()) -> ComplexMatrix:
    hdot = h.d_dt(t)
    if not np.any(hdot):
        return np.zeros((h.dim, h.dim), dtype=complex)
    return cd_decomposition(h, t, units).h_cd


def cd_hamiltonian(h: HamiltonianSchedule, units: Units = Units()) -> HamiltonianSchedule:
    """The CD term as a schedule of its own (derivative by finite differences)."""
    return HamiltonianSchedule(h.t_f, lambda t: cd_term(h, t, units), name=f"cd[{h.name}]")


# ── Two-level closed forms ──────────────────────────────────────────


def cd_two_level(c: TwoLevelControls, t: float) -> float:
    """Ω_a = (Ω_R Δ̇ − Ω̇_R Δ) / (Δ² + Ω_R²)."""
    d, wr = c.delta.eval(t), c.omega_r.eval(t)
    omega_sq = d * d + wr * wr
    if omega_sq <= np.finfo(float).tiny:
        raise SingularPointError("generalized Rabi frequency vanishes", t)
    return (wr * c.delta.eval(t, 1) - c.omega_r.eval(t, 1) * d) / omega_sq


def cd_two_level_matrix(c: TwoLevelControls, t: float, units: Units = Units()) -> ComplexMatrix:
    return 0.5 * units.hbar * cd_two_level(c, t) * SIGMA_Y


def counterdiabatic_rabi(c: TwoLevelControls) -> FunctionSchedule:
    """Ω_a(t) with an analytic first derivative."""

    def value(t: FloatArray) -> FloatArray:
        d, wr = c.delta.eval_array(t), c.omega_r.eval_array(t)
        num = wr * c.delta.eval_array(t, 1) - c.omega_r.eval_array(t, 1) * d
        den = d * d + wr * wr
        if np.any(den <= np.finfo(float).tiny):
            bad = np.asarray(t)[den <= np.finfo(float).tiny]
            raise SingularPointError("generalized Rabi frequency vanishes", float(bad[0]))
        return np.asarray(num / den, dtype=float)

    def slope(t: FloatArray) -> FloatArray:
        d, dd, ddd = (c.delta.eval_array(t, k) for k in range(3))
        w, dw, ddw = (c.omega_r.eval_array(t, k) for k in range(3))
        den = d * d + w * w
        num = w * dd - dw * d
        return np.asarray(
            (w * ddd - ddw * d) / den - num * 2.0 * (d * dd + w * dw) / den**2, dtype=float
        )

    return FunctionSchedule(c.t_f, [value, slope], name="omega_a")


def two_level_cd_controls(c: TwoLevelControls) -> TwoLevelControls:
    """H₀ + H_CD as two-level controls: (ħ/2) Ω_a σ_y enters as Ω_I = Ω_a."""
    if np.any(c.omega_i.sample(201)[1] != 0.0):
        raise ScheduleError("closed-form CD needs a real coupling (Ω_I ≡ 0)")
    return TwoLevelControls(c.delta, c.omega_r, counterdiabatic_rabi(c))


def sigma_y_cancelling_gauge(c: TwoLevelControls) -> FunctionSchedule:
    """Lie-transform angle g = ½ arctan(Ω_a/Ω_R) that removes the σ_y term."""
    omega_a = counterdiabatic_rabi(c)

    def value(t: FloatArray) -> FloatArray:
        return np.asarray(0.5 * np.arctan2(omega_a.eval_array(t), c.omega_r.eval_array(t)))

    def slope(t: FloatArray) -> FloatArray:
        a, da = omega_a.eval_array(t), omega_a.eval_array(t, 1)
        w, dw = c.omega_r.eval_array(t), c.omega_r.eval_array(t, 1)
        return np.asarray(0.5 * (w * da - dw * a) / (w * w + a * a))

    return FunctionSchedule(c.t_f, [value, slope], name="lie_gauge")


def lie_two_level_controls(c: TwoLevelControls) -> TwoLevelControls:
    """Closed form of the σ_y-free Hamiltonian: Ω_R' = √(Ω_R² + Ω_a²), Δ' = Δ + 2ġ."""
    omega_a = counterdiabatic_rabi(c)
    gauge = sigma_y_cancelling_gauge(c)

    def rabi(t: FloatArray) -> FloatArray:
        return np.asarray(np.hypot(c.omega_r.eval_array(t), omega_a.eval_array(t)))

    def detuning(t: FloatArray) -> FloatArray:
        return np.asarray(c.delta.eval_array(t) + 2.0 * gauge.eval_array(t, 1))

    return TwoLevelControls(
        FunctionSchedule(c.t_f, [detuning], name="delta_lie"),
        FunctionSchedule(c.t_f, [rabi], name="omega_lie"),
        c.omega_i,
    )


def cd_complex_coupling(
    c: ComplexCouplingControls, t: float, units: Units = Units()
) -> Tuple[ComplexMatrix, ComplexMatrix]:
    """The two parts of the CD term for a coupling |Ω| e^{iα}."""
    d, dd = c.delta.eval(t), c.delta.eval(t, 1)
    w, dw = c.omega_mod.eval(t), c.omega_mod.eval(t, 1)
    a, da = c.alpha.eval(t), c.alpha.eval(t, 1)
    big_sq = d * d + w * w
    if big_sq <= np.finfo(float).tiny:
        raise SingularPointError("generalized Rabi frequency vanishes", t)
    big = np.sqrt(big_sq)
    theta = np.arccos(np.clip(-d / big, -1.0, 1.0))
    dtheta = (dd * w - d * dw) / big_sq
    phase = np.exp(1j * a)
    h1 = 0.5 * units.hbar * np.array(
        [[-da, -1j * phase * dtheta], [1j * np.conj(phase) * dtheta, da]], dtype=complex
    )
    ct, st = np.cos(theta), np.sin(theta)
    h2 = 0.5 * units.hbar * ct * da * np.array(
        [[ct, phase * st], [np.conj(phase) * st, -ct]], dtype=complex
    )
    return h1, h2


def cd_lambda_system(
    pump: Schedule, stokes: Schedule, t: float, units: Units = Units()
) -> ComplexMatrix:
    """iħ θ̇ (|1⟩⟨3| − |3⟩⟨1|) with tan θ = Ω_P/Ω_S."""
    p, s = pump.eval(t), stokes.eval(t)
    norm_sq = p * p + s * s
    if norm_sq <= np.finfo(float).tiny:
        raise SingularPointError("both Λ couplings vanish", t)
    dtheta = (pump.eval(t, 1) * s - p * stokes.eval(t, 1)) / norm_sq
    out = np.zeros((3, 3), dtype=complex)
    out[0, 2] = 1j * units.hbar * dtheta
    out[2, 0] = -1j * units.hbar * dtheta
    return out


# ── Single-state and superadiabatic terms ───────────────────────────


def _state_derivative(
    energies: FloatArray, vecs: ComplexMatrix, hdot: ComplexMatrix, n: int
) -> ComplexMatrix:
    elements = vecs.conj().T @ hdot @ vecs[:, n]
    coeffs = np.zeros(len(energies), dtype=complex)
    for m in range(len(energies)):
        if m != n:
            coeffs[m] = elements[m] / (energies[n] - energies[m])
    return np.asarray(vecs @ coeffs, dtype=complex)


def cd_single_state(
    h: HamiltonianSchedule, n: int, t: float, units: Units = Units()
) -> ComplexMatrix:
    """iħ[Ṗ_n, P_n]: decouples level n only."""
    if not 0 <= n < h.dim:
        raise ValueError(f"level {n} out of range for a {h.dim}-level Hamiltonian")
    hdot = h.d_dt(t)
    if not np.any(hdot):
        return np.zeros((h.dim, h.dim), dtype=complex)
    energies, vecs = matrix_spectrum(h.at(t), t=t)
    dn = _state_derivative(energies, vecs, hdot, n)
    vn = vecs[:, n]
    return _hermitize(1j * units.hbar * (np.outer(dn, vn.conj()) - np.outer(vn, dn.conj())))


def _track_matrices(
    mats: NDArray[np.complex128], t: FloatArray
) -> Tuple[FloatArray, NDArray[np.complex128]]:
    energies = []
    bases = []
    prev: Optional[ComplexMatrix] = None
    for k, m in enumerate(mats):
        vals, vecs = matrix_spectrum(m, prev, t=float(t[k]))
        energies.append(vals)
        bases.append(vecs)
        prev = vecs
    return np.array(energies), np.array(bases)


def _spline_derivative(mats: NDArray[np.complex128], t: FloatArray) -> NDArray[np.complex128]:
    re = CubicSpline(t, mats.real, axis=0).derivative()(t)
    im = CubicSpline(t, mats.imag, axis=0).derivative()(t)
    return np.asarray(re + 1j * im, dtype=complex)


def superadiabatic_iterate(
    h: HamiltonianSchedule,
    j_max: int,
    t_grid: Optional[Sequence[float]] = None,
    units: Units = Units(),
) -> List[SuperadiabaticStep]:
    """Iterate into successive adiabatic frames and collect the CD term of each.

    H_{j+1} = diag(E_j) − A_j† K_j A_j with K_j the CD term of H_j, and the
    lab-frame term B_j K_j B_j†, B_j = A_0 ⋯ A_{j−1}.
    """
    if not 0 <= j_max <= MAX_SUPERADIABATIC_ORDER:
        raise ValueError(f"j_max must be in [0, {MAX_SUPERADIABATIC_ORDER}], got {j_max}")
    t = np.linspace(0.0, h.t_f, SUPERADIABATIC_GRID) if t_grid is None else np.asarray(t_grid)
    frame = np.array([h.at(float(tk)) for tk in t])
    frame_dot = np.array([h.d_dt(float(tk)) for tk in t])
    lab = np.broadcast_to(np.eye(h.dim, dtype=complex), frame.shape).copy()
    steps: List[SuperadiabaticStep] = []

    for j in range(j_max + 1):
        if j > 0:
            frame_dot = _spline_derivative(frame, t)
        energies, bases = _track_matrices(frame, t)
        k_frame = np.array(
            [_sum_over_states(energies[i], bases[i], frame_dot[i], units.hbar) for i in range(len(t))]
        )
        k_lab = np.einsum("tij,tjk,tlk->til", lab, k_frame, lab.conj())
        norms = np.linalg.norm(k_lab, axis=(1, 2))
        peak = float(norms.max())
        warn = peak > 0 and max(norms[0], norms[-1]) > BOUNDARY_NORM_REL * peak
        if warn:
            logger.warning(
                "Superadiabatic term j=%d does not vanish at the boundaries (%.3g of peak)",
                j, max(norms[0], norms[-1]) / peak,
            )
        steps.append(SuperadiabaticStep(j, t, frame.copy(), k_frame, k_lab, bool(warn)))

        diag = np.zeros_like(frame)
        idx = np.arange(h.dim)
        diag[:, idx, idx] = energies
        frame = diag - np.einsum("tji,tjk,tkl->til", bases.conj(), k_frame, bases)
        frame = 0.5 * (frame + np.conj(np.swapaxes(frame, 1, 2)))
        lab = np.einsum("tij,tjk->tik", lab, bases)
    return steps


# ── Unitary transforms ──────────────────────────────────────────────


def lie_transform(
    h_total: HamiltonianSchedule,
    generator: ComplexMatrix,
    g: Schedule,
    units: Units = Units(),
) -> HamiltonianSchedule:
    """H' = e^{igG} (H − ħ ġ G) e^{−igG} with exact exponentials."""
    gen = np.asarray(generator, dtype=complex)
    if np.linalg.norm(gen - gen.conj().T) > 1e-12 * max(1.0, float(np.linalg.norm(gen))):
        raise ValueError("Lie-transform generator must be Hermitian")
    if abs(g.t_f - h_total.t_f) > 1e-12 * h_total.t_f:
        raise ScheduleError("gauge schedule and Hamiltonian disagree on t_f")
    for edge in (0.0, g.t_f):
        if abs(g.eval(edge)) > 1e-10:
            logger.warning("Lie gauge g(%.6g)=%.3g: states will differ at the boundary", edge, g.eval(edge))
    w, vecs = np.linalg.eigh(gen)

    def rotated(t: float) -> ComplexMatrix:
        u = (vecs * np.exp(1j * g.eval(t) * w)) @ vecs.conj().T
        inner = h_total.at(t) - units.hbar * g.eval(t, 1) * gen
        return _hermitize(u @ inner @ u.conj().T)

    return HamiltonianSchedule(h_total.t_f, rotated, name=f"lie[{h_total.name}]")


# ── Harmonic-family terms ───────────────────────────────────────────


def local_cd_frequency(omega: Schedule) -> FunctionSchedule:
    """ω′² = ω² − 3ω̇²/(4ω²) + ω̈/(2ω), allowed to go negative."""
    ts = np.linspace(0.0, omega.t_f, 401)
    if np.any(omega.eval_array(ts) <= 0):
        raise ScheduleError("trap frequency must stay positive")

    def value(t: FloatArray) -> FloatArray:
        w, dw, ddw = (omega.eval_array(t, k) for k in range(3))
        return np.asarray(w**2 - 0.75 * dw**2 / w**2 + 0.5 * ddw / w)

    def slope(t: FloatArray) -> FloatArray:
        w, dw, ddw, d3w = (omega.eval_array(t, k) for k in range(4))
        return np.asarray(
            2.0 * w * dw
            - 1.5 * dw * ddw / w**2
            + 1.5 * dw**3 / w**3
            + 0.5 * d3w / w
            - 0.5 * ddw * dw / w**2
        )

    return FunctionSchedule(omega.t_f, [value, slope], name="omega_prime_sq")


def nonlocal_cd_expansion(omega: Schedule) -> FunctionSchedule:
    """Coefficient c(t) = −ω̇/(4ω) of the CD operator c (pq + qp)."""

    def value(t: FloatArray) -> FloatArray:
        return np.asarray(-omega.eval_array(t, 1) / (4.0 * omega.eval_array(t)))

    def slope(t: FloatArray) -> FloatArray:
        w, dw, ddw = (omega.eval_array(t, k) for k in range(3))
        return np.asarray(-(ddw * w - dw**2) / (4.0 * w**2))

    return FunctionSchedule(omega.t_f, [value, slope], name="nonlocal_expansion")


def nonlocal_cd_transport(qc: Schedule) -> Schedule:
    """Coefficient q̇_c of the CD operator q̇_c p."""
    if isinstance(qc, PolySchedule):
        return qc.derivative(1)
    return FunctionSchedule(qc.t_f, [lambda t: qc.eval_array(t, 1), lambda t: qc.eval_array(t, 2)])


def compensating_force(qc: Schedule, m: float) -> Schedule:
    """F(t) = m q̈_c(t)."""
    if isinstance(qc, PolySchedule):
        return qc.derivative(2).scaled(m)
    return FunctionSchedule(
        qc.t_f, [lambda t: m * qc.eval_array(t, 2), lambda t: m * qc.eval_array(t, 3)]
    )
