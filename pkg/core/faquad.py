"""
Single-control schedulers: fast quasi-adiabatic (FAQUAD), local adiabatic and
uniform adiabatic, plus the comparator schedules and a fidelity sweep.

Each scheduler solves λ̇ = (c/ħ)/w(λ) for a positive weight w. The equation is
autonomous in λ, so t(λ) = (ħ/c)∫w dλ and the constant c follows from one
quadrature instead of an ODE shooting loop.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import simpson
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from core.models import ComplexMatrix, HamiltonianSchedule, matrix_spectrum
from core.propagators import propagate_nlevel
from core.schedules import (
    FloatArray,
    PolySchedule,
    Schedule,
    constant_schedule,
    linear_schedule,
)
from core.units import GapCollapseError, Settings, SingularPointError, Units

logger = logging.getLogger(__name__)

PATH_INTERVALS = 4000
GAUSS_POINTS = 3
GAP_REL_EPS = 1e-10
ELEMENT_REL_EPS = 1e-12
UNIFORM_FLOOR_REL = 1e-10
REVIVAL_SAMPLES = 2001

SCHEDULER_KINDS = ("faquad", "local", "uniform")


class ControlledHamiltonian(Protocol):
    """H(λ) and ∂_λH(λ) for a single scalar control."""

    def matrix(self, lam: float) -> ComplexMatrix: ...

    def d_matrix(self, lam: float) -> ComplexMatrix: ...


@dataclass
class LinearSweepModel:
    """H(λ) = H₀ + λ H₁."""

    h0: ComplexMatrix
    h1: ComplexMatrix

    def __post_init__(self) -> None:
        self.h0 = np.asarray(self.h0, dtype=complex)
        self.h1 = np.asarray(self.h1, dtype=complex)
        if self.h0.shape != self.h1.shape or self.h0.shape[0] != self.h0.shape[1]:
            raise ValueError("H0 and H1 must be square matrices of equal size")
        for name, mat in (("H0", self.h0), ("H1", self.h1)):
            if not np.allclose(mat, mat.conj().T, atol=1e-12):
                raise ValueError(f"{name} is not Hermitian")

    def matrix(self, lam: float) -> ComplexMatrix:
        return np.asarray(self.h0 + lam * self.h1)

    def d_matrix(self, lam: float) -> ComplexMatrix:
        return np.asarray(self.h1)


@dataclass
class FaquadResult:
    lam: PolySchedule
    c: float
    phi_bar: float
    kind: str
    lam_start: float
    lam_end: float
    levels: Tuple[int, int] = (0, 1)
    regularized: bool = False
    diagnostics: List[str] = field(default_factory=list)

    @property
    def t_f(self) -> float:
        return self.lam.t_f

    @property
    def revival_time(self) -> float:
        return float(2.0 * np.pi / self.phi_bar)


@dataclass
class _PathData:
    lam: FloatArray
    gap: FloatArray
    element: FloatArray


def _path_samples(
    model: ControlledHamiltonian, lams: FloatArray, levels: Tuple[int, int]
) -> _PathData:
    i, j = levels
    mats = np.array([model.matrix(float(x)) for x in lams])
    dmats = np.array([model.d_matrix(float(x)) for x in lams])
    vals, vecs = np.linalg.eigh(mats)
    gap = vals[:, j] - vals[:, i]
    spread = vals[:, -1] - vals[:, 0]
    bad = gap <= GAP_REL_EPS * np.maximum(spread, 1e-300)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise GapCollapseError(
            f"gap between levels {i} and {j} collapses at lambda={lams[k]:.6g} (gap {gap[k]:.3g})"
        )
    vi = vecs[:, :, i]
    vj = vecs[:, :, j]
    element = np.abs(np.einsum("ka,kab,kb->k", vi.conj(), dmats, vj))
    return _PathData(np.asarray(lams), np.asarray(gap), np.asarray(element))


def _gap_slope(model: ControlledHamiltonian, lams: FloatArray, levels: Tuple[int, int]) -> FloatArray:
    """∂_λ(E_j − E_i) by Hellmann-Feynman."""
    i, j = levels
    mats = np.array([model.matrix(float(x)) for x in lams])
    dmats = np.array([model.d_matrix(float(x)) for x in lams])
    _, vecs = np.linalg.eigh(mats)
    diag = np.real(np.einsum("kan,kab,kbn->kn", vecs.conj(), dmats, vecs))
    return np.asarray(diag[:, j] - diag[:, i])


def _weights(
    kind: str, data: _PathData, slope: Optional[FloatArray], floor: float
) -> FloatArray:
    if kind == "faquad":
        return np.asarray(data.element / data.gap**2)
    if kind == "local":
        return np.asarray(1.0 / data.gap**2)
    assert slope is not None
    return np.asarray(np.maximum(np.abs(slope), floor) / data.gap**2)


def _build_schedule(
    model: ControlledHamiltonian,
    kind: str,
    lam_start: float,
    lam_end: float,
    t_f: float,
    levels: Tuple[int, int],
    units: Units,
    intervals: int,
) -> FaquadResult:
    if kind not in SCHEDULER_KINDS:
        raise ValueError(f"unknown scheduler {kind!r}")
    if not t_f > 0:
        raise ValueError(f"t_f must be positive, got {t_f}")
    if lam_start == lam_end:
        raise ValueError("requested path is not monotonic: start and end coincide")
    if not 0 <= levels[0] < levels[1]:
        raise ValueError(f"levels must be ascending indices, got {levels}")

    nodes = np.linspace(lam_start, lam_end, intervals + 1)
    gx, gw = np.polynomial.legendre.leggauss(GAUSS_POINTS)
    half = 0.5 * np.diff(nodes)
    mid = 0.5 * (nodes[:-1] + nodes[1:])
    quad_lams = (mid[:, None] + half[:, None] * gx[None, :]).ravel()
    all_lams = np.concatenate([nodes, quad_lams])

    data = _path_samples(model, all_lams, levels)
    diagnostics: List[str] = []
    regularized = False
    slope: Optional[FloatArray] = None
    floor = 0.0
    if kind == "faquad":
        scale = float(data.element.max())
        if scale == 0.0 or float(data.element.min()) <= ELEMENT_REL_EPS * scale:
            k = int(np.argmin(data.element))
            raise SingularPointError(
                f"coupling matrix element vanishes at lambda={all_lams[k]:.6g}", float("nan")
            )
    if kind == "uniform":
        slope = _gap_slope(model, all_lams, levels)
        max_slope = float(np.max(np.abs(slope)))
        if max_slope == 0.0:
            floor = 1.0
        else:
            floor = UNIFORM_FLOOR_REL * max_slope
        if np.any(np.abs(slope) < floor):
            regularized = True
            msg = "gap slope vanishes on part of the path; denominator floored at %.3g" % floor
            diagnostics.append(msg)
            logger.warning("Uniform adiabatic schedule regularized: %s", msg)

    w = _weights(kind, data, slope, floor)
    n_nodes = len(nodes)
    w_nodes = w[:n_nodes]
    w_quad = w[n_nodes:].reshape(intervals, GAUSS_POINTS)
    gap_quad = data.gap[n_nodes:].reshape(intervals, GAUSS_POINTS)

    # |dλ| per interval, so s increases whatever the sweep direction
    pieces = np.abs(half) * (w_quad @ gw)
    total = float(pieces.sum())
    s = np.concatenate([[0.0], np.cumsum(pieces) / total])
    s[-1] = 1.0
    if np.any(np.diff(s) <= 0.0):
        raise SingularPointError("schedule weight vanishes on the path", float("nan"))

    # ∫₀¹ gap ds
    mean_gap = float((np.abs(half) * ((gap_quad * w_quad) @ gw)).sum() / total)

    direction = np.sign(lam_end - lam_start)
    if kind == "uniform":
        # slope zeros make dλ/ds spike; keep the interpolant monotone
        spline = PchipInterpolator(s, nodes)
    else:
        spline = CubicHermiteSpline(s, nodes, direction * total / w_nodes)
    lam = PolySchedule.from_ppoly(t_f, spline)

    c = units.hbar * total / t_f
    phi_bar = mean_gap / units.hbar
    logger.debug("%s schedule: c=%.6g, Phi=%.6g over %d intervals", kind, c, phi_bar, intervals)
    return FaquadResult(
        lam, c, phi_bar, kind, lam_start, lam_end, levels, regularized, diagnostics
    )


def faquad_schedule(
    model: ControlledHamiltonian,
    lam_start: float,
    lam_end: float,
    t_f: float,
    levels: Tuple[int, int] = (0, 1),
    units: Units = Units(),
    intervals: int = PATH_INTERVALS,
) -> FaquadResult:
    """λ̇ = ∓(c/ħ)(E_j − E_i)²/|⟨φ_i|∂_λH|φ_j⟩|, c fixed by the endpoint."""
    return _build_schedule(model, "faquad", lam_start, lam_end, t_f, levels, units, intervals)


def local_adiabatic_schedule(
    model: ControlledHamiltonian,
    lam_start: float,
    lam_end: float,
    t_f: float,
    levels: Tuple[int, int] = (0, 1),
    units: Units = Units(),
    intervals: int = PATH_INTERVALS,
) -> FaquadResult:
    return _build_schedule(model, "local", lam_start, lam_end, t_f, levels, units, intervals)


def uniform_adiabatic_schedule(
    model: ControlledHamiltonian,
    lam_start: float,
    lam_end: float,
    t_f: float,
    levels: Tuple[int, int] = (0, 1),
    units: Units = Units(),
    intervals: int = PATH_INTERVALS,
) -> FaquadResult:
    """λ̇ ∝ (E_j − E_i)²/|∂_λ(E_j − E_i)|, with the slope floored where it vanishes."""
    return _build_schedule(model, "uniform", lam_start, lam_end, t_f, levels, units, intervals)


# ── Analysis ────────────────────────────────────────────────────────


def controlled_hamiltonian(model: ControlledHamiltonian, lam: Schedule) -> HamiltonianSchedule:
    return HamiltonianSchedule(
        lam.t_f,
        lambda t: model.matrix(lam.eval(t)),
        lambda t: model.d_matrix(lam.eval(t)) * lam.eval(t, 1),
        name="controlled",
    )


def adiabaticity_parameter(
    model: ControlledHamiltonian,
    lam: Schedule,
    t: float,
    levels: Tuple[int, int] = (0, 1),
    units: Units = Units(),
) -> float:
    """ħ|⟨φ_i|∂_tφ_j⟩/(E_i − E_j)| = ħ|λ̇||⟨φ_i|∂_λH|φ_j⟩|/(E_j − E_i)²."""
    data = _path_samples(model, np.array([lam.eval(t)]), levels)
    return float(units.hbar * abs(lam.eval(t, 1)) * data.element[0] / data.gap[0] ** 2)


def revival_period(
    model: ControlledHamiltonian,
    lam: Schedule,
    levels: Tuple[int, int] = (0, 1),
    units: Units = Units(),
    n: int = REVIVAL_SAMPLES,
) -> float:
    """T = 2π/Φ with Φ = (1/(ħ t_f))∫₀^{t_f} gap dt."""
    ts = np.linspace(0.0, lam.t_f, n)
    data = _path_samples(model, lam.eval_array(ts), levels)
    phi = float(simpson(data.gap, x=ts)) / (units.hbar * lam.t_f)
    return float(2.0 * np.pi / phi)


def linear_bias_schedule(lam_start: float, lam_end: float, t_f: float) -> PolySchedule:
    return linear_schedule(lam_start, lam_end, t_f)


def constant_bias_schedule(value: float, t_f: float) -> PolySchedule:
    """Constant control, e.g. Δ = U for the resonant π-pulse comparator."""
    return constant_schedule(value, t_f)


def transfer_fidelity(
    model: ControlledHamiltonian,
    lam: Schedule,
    levels: Tuple[int, int] = (0, 1),
    units: Units = Units(),
    dt: Optional[float] = None,
    target_lam: Optional[float] = None,
) -> float:
    """Start in level i at λ(0); overlap with level i at λ(t_f) (or at target_lam)."""
    i = levels[0]
    _, v0 = matrix_spectrum(model.matrix(lam.eval(0.0)))
    end = lam.eval(lam.t_f) if target_lam is None else target_lam
    _, v1 = matrix_spectrum(model.matrix(end))
    traj = propagate_nlevel(controlled_hamiltonian(model, lam), v0[:, i], dt, units, "magnus4")
    return float(abs(np.vdot(v1[:, i], traj.final)) ** 2)


def fidelity_scan(
    model: ControlledHamiltonian,
    scheduler: Callable[[float], Schedule],
    t_values: Sequence[float],
    levels: Tuple[int, int] = (0, 1),
    units: Units = Units(),
    dt: Optional[float] = None,
    target_lam: Optional[float] = None,
    settings: Optional[Settings] = None,
) -> Tuple[FloatArray, NDArray[np.float64]]:
    """Fidelity of scheduler(t_f) for each t_f, in input order."""
    settings = settings or Settings.from_env()
    ts = np.asarray(t_values, dtype=float)

    def one(t_f: float) -> float:
        return transfer_fidelity(model, scheduler(t_f), levels, units, dt, target_lam)

    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        values = list(pool.map(one, [float(t) for t in ts]))
    return ts, np.asarray(values, dtype=float)
