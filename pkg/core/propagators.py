"""
Propagators used to verify designed protocols: N-level unitary and Lindblad
evolution, split-step evolution on a 1D grid, the classical forced
oscillator and Langevin ensembles.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import solve_ivp, trapezoid
from scipy.linalg import expm
from scipy.special import eval_hermite, gammaln

from core.models import ComplexMatrix, HamiltonianSchedule, matrix_spectrum
from core.schedules import FloatArray, Schedule
from core.units import GridResolutionError, NormDriftError, Settings, Units

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 4000
NORM_TOL = 1e-9
TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-8
GRID_NORM_TOL = 1e-7
GRID_POINTS = 1024
SPECTRAL_TAIL_TOL = 1e-6
ODE_RTOL = 1e-10
ODE_ATOL = 1e-12
LANGEVIN_CHUNK = 4096
LANGEVIN_STEPS = 10000

DissipatorFn = Callable[[float], ComplexMatrix]
Potential = Callable[[FloatArray, float], FloatArray]


def _unitary_step(h: ComplexMatrix, dt: float, hbar: float) -> ComplexMatrix:
    w, v = np.linalg.eigh(h)
    return np.asarray((v * np.exp(-1j * w * dt / hbar)) @ v.conj().T, dtype=complex)


# ── N-level unitary evolution ───────────────────────────────────────


@dataclass
class NLevelTrajectory:
    t: FloatArray
    states: NDArray[np.complex128]
    h: HamiltonianSchedule
    units: Units = field(default_factory=Units)

    @property
    def final(self) -> NDArray[np.complex128]:
        return np.asarray(self.states[-1])

    @property
    def t_f(self) -> float:
        return float(self.t[-1])


def _step_count(t_f: float, dt: Optional[float]) -> int:
    if dt is None:
        return DEFAULT_STEPS
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return max(1, int(math.ceil(t_f / dt - 1e-9)))


def _run_nlevel(
    h: HamiltonianSchedule, psi0: NDArray[np.complex128], n: int, hbar: float, method: str
) -> Tuple[FloatArray, NDArray[np.complex128]]:
    t = np.linspace(0.0, h.t_f, n + 1)
    dt = h.t_f / n
    states = np.empty((n + 1, len(psi0)), dtype=complex)
    states[0] = psi0
    psi = psi0.copy()
    c = math.sqrt(3.0) / 6.0
    for k in range(n):
        if method == "midpoint":
            u = _unitary_step(h.at(t[k] + 0.5 * dt), dt, hbar)
        else:
            h1 = h.at(t[k] + (0.5 - c) * dt)
            h2 = h.at(t[k] + (0.5 + c) * dt)
            # fourth-order Magnus: Ω = −i dt/ħ (H1+H2)/2 − (√3 dt²/12ħ²)[H2, H1]
            comm = h2 @ h1 - h1 @ h2
            eff = 0.5 * (h1 + h2) - 1j * (math.sqrt(3.0) * dt / (12.0 * hbar)) * comm
            u = _unitary_step(0.5 * (eff + eff.conj().T), dt, hbar)
        psi = u @ psi
        states[k + 1] = psi
    return t, states


def propagate_nlevel(
    h: HamiltonianSchedule,
    psi0: Sequence[complex],
    dt: Optional[float] = None,
    units: Units = Units(),
    method: str = "midpoint",
) -> NLevelTrajectory:
    """Exponential-midpoint (or fourth-order Magnus) stepping over [0, t_f]."""
    if method not in ("midpoint", "magnus4"):
        raise ValueError(f"unknown stepping method {method!r}")
    psi = np.asarray(psi0, dtype=complex)
    if psi.shape != (h.dim,):
        raise ValueError(f"initial state has shape {psi.shape}, expected ({h.dim},)")
    if abs(np.linalg.norm(psi) - 1.0) > 1e-10:
        raise ValueError("initial state must be normalized")
    n = _step_count(h.t_f, dt)
    for attempt in range(2):
        t, states = _run_nlevel(h, psi, n, units.hbar, method)
        drift = float(np.max(np.abs(np.linalg.norm(states, axis=1) - 1.0)))
        if drift <= NORM_TOL:
            return NLevelTrajectory(t, states, h, units)
        logger.warning("Norm drift %.3g with %d steps, refining", drift, n)
        n *= 2
    raise NormDriftError(f"norm drift {drift:.3g} exceeds {NORM_TOL} after refinement")


def instantaneous_populations(traj: NLevelTrajectory, t_index: int) -> FloatArray:
    """Populations |⟨n(t)|ψ(t)⟩|² in the instantaneous eigenbasis."""
    t = float(traj.t[t_index])
    _, vecs = matrix_spectrum(traj.h.at(t), t=t)
    return np.asarray(np.abs(vecs.conj().T @ traj.states[t_index]) ** 2, dtype=float)


# ── Lindblad evolution ──────────────────────────────────────────────


@dataclass
class LindbladTrajectory:
    t: FloatArray
    rhos: NDArray[np.complex128]

    @property
    def final(self) -> NDArray[np.complex128]:
        return np.asarray(self.rhos[-1])


def _dissipator_super(ops: Sequence[Tuple[ComplexMatrix, float]], dim: int) -> ComplexMatrix:
    """Row-major superoperator: vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ)."""
    eye = np.eye(dim, dtype=complex)
    sup = np.zeros((dim * dim, dim * dim), dtype=complex)
    for op, rate in ops:
        if rate == 0:
            continue
        ldl = op.conj().T @ op
        sup += rate * (np.kron(op, op.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T))
    return sup


def propagate_lindblad(
    h: HamiltonianSchedule,
    dissipators: Sequence[Tuple[Union[ComplexMatrix, DissipatorFn], float]],
    rho0: ComplexMatrix,
    dt: Optional[float] = None,
    units: Units = Units(),
) -> LindbladTrajectory:
    """Strang splitting: coherent half step, dissipative step, coherent half step."""
    rho = np.asarray(rho0, dtype=complex)
    dim = h.dim
    if rho.shape != (dim, dim):
        raise ValueError(f"initial density matrix has shape {rho.shape}")
    if abs(np.trace(rho) - 1.0) > 1e-10:
        raise ValueError("initial density matrix must have unit trace")
    n = _step_count(h.t_f, dt)
    step = h.t_f / n
    t = np.linspace(0.0, h.t_f, n + 1)

    def ops_at(time: float) -> List[Tuple[ComplexMatrix, float]]:
        out = []
        for op, rate in dissipators:
            mat = op(time) if callable(op) else op
            out.append((np.asarray(mat, dtype=complex), float(rate)))
        return out

    rhos = np.empty((n + 1, dim, dim), dtype=complex)
    rhos[0] = rho
    for k in range(n):
        u1 = _unitary_step(h.at(t[k] + 0.25 * step), 0.5 * step, units.hbar)
        rho = u1 @ rho @ u1.conj().T
        sup = _dissipator_super(ops_at(t[k] + 0.5 * step), dim)
        if np.any(sup):
            rho = (expm(sup * step) @ rho.reshape(-1)).reshape(dim, dim)
        u2 = _unitary_step(h.at(t[k] + 0.75 * step), 0.5 * step, units.hbar)
        rho = u2 @ rho @ u2.conj().T
        rho = 0.5 * (rho + rho.conj().T)
        rhos[k + 1] = rho

    trace_err = float(np.max(np.abs(np.trace(rhos, axis1=1, axis2=2) - 1.0)))
    if trace_err > TRACE_TOL:
        raise NormDriftError(f"trace drift {trace_err:.3g} exceeds {TRACE_TOL}")
    eigs = np.linalg.eigvalsh(rhos)
    min_eig = float(eigs.min())
    if min_eig < -POSITIVITY_TOL:
        worst = int(np.argmin(eigs.min(axis=1)))
        raise NormDriftError(
            f"density matrix lost positivity at t={t[worst]:.6g} (min eigenvalue {min_eig:.3g})"
        )
    return LindbladTrajectory(t, rhos)


# ── Grid wavefunctions ──────────────────────────────────────────────


@dataclass
class GridWavefunction:
    x: FloatArray
    psi: NDArray[np.complex128]
    mass: float = 1.0
    hbar: float = 1.0

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def density(self) -> FloatArray:
        return np.asarray(np.abs(self.psi) ** 2, dtype=float)

    def norm(self) -> float:
        return float(trapezoid(self.density, self.x))

    def normalized(self) -> "GridWavefunction":
        return GridWavefunction(self.x, self.psi / math.sqrt(self.norm()), self.mass, self.hbar)

    def overlap(self, other: Union["GridWavefunction", NDArray[np.complex128]]) -> complex:
        phi = other.psi if isinstance(other, GridWavefunction) else np.asarray(other)
        return complex(trapezoid(np.conj(phi) * self.psi, self.x))

    def expectation_x(self) -> float:
        return float(trapezoid(self.x * self.density, self.x) / self.norm())

    def variance_x(self) -> float:
        mean = self.expectation_x()
        return float(trapezoid((self.x - mean) ** 2 * self.density, self.x) / self.norm())

    def energy(self, potential: FloatArray, coupling: float = 0.0) -> float:
        k = 2.0 * np.pi * np.fft.fftfreq(len(self.x), self.dx)
        kin = np.fft.ifft(k**2 * np.fft.fft(self.psi)) * self.hbar**2 / (2.0 * self.mass)
        dens = self.density
        total = np.conj(self.psi) * kin + (potential + 0.5 * coupling * dens) * dens
        return float(np.real(trapezoid(total, self.x)) / self.norm())


def make_grid(length: float, n: int = GRID_POINTS, center: float = 0.0) -> FloatArray:
    """Periodic grid of n points on [center − L/2, center + L/2)."""
    if n < 8 or length <= 0:
        raise ValueError("grid needs at least 8 points and a positive length")
    return np.asarray(center - 0.5 * length + length / n * np.arange(n), dtype=float)


def harmonic_eigenstate(
    x: Sequence[float],
    n: int,
    m: float,
    omega: float,
    hbar: float = 1.0,
    center: float = 0.0,
) -> NDArray[np.complex128]:
    """n-th eigenfunction of ½ m ω² (x − center)²."""
    if n < 0:
        raise ValueError("quantum number must be nonnegative")
    xi = math.sqrt(m * omega / hbar) * (np.asarray(x, dtype=float) - center)
    log_norm = 0.25 * math.log(m * omega / (math.pi * hbar)) - 0.5 * (n * math.log(2.0) + gammaln(n + 1))
    return np.asarray(np.exp(log_norm - 0.5 * xi**2) * eval_hermite(n, xi), dtype=complex)


def _check_resolution(psi: NDArray[np.complex128], where: str) -> None:
    spectrum = np.abs(np.fft.fft(psi)) ** 2
    k_index = np.abs(np.fft.fftfreq(len(psi)))
    tail = float(spectrum[k_index > 0.4].sum() / spectrum.sum())
    if tail > SPECTRAL_TAIL_TOL:
        raise GridResolutionError(
            f"wavefunction not resolved {where}: {tail:.2e} of the power sits at the grid cutoff"
        )
    edge = float(max(abs(psi[0]), abs(psi[-1])) ** 2 / np.max(np.abs(psi) ** 2))
    if edge > SPECTRAL_TAIL_TOL:
        logger.warning("Wavefunction reaches the grid edge %s (relative density %.2e)", where, edge)


def propagate_grid(
    potential: Potential,
    psi0: GridWavefunction,
    t_f: float,
    dt: Optional[float] = None,
    coupling: Optional[Schedule] = None,
    observer: Optional[Callable[[float, GridWavefunction], None]] = None,
    t_start: float = 0.0,
) -> GridWavefunction:
    """Strang split-step evolution, with an optional g(t)|ψ|² nonlinearity."""
    n = _step_count(t_f, dt)
    step = t_f / n
    x = psi0.x
    m, hbar = psi0.mass, psi0.hbar
    k = 2.0 * np.pi * np.fft.fftfreq(len(x), psi0.dx)
    kinetic = np.exp(-1j * hbar * k**2 * step / (2.0 * m))
    psi = np.asarray(psi0.psi, dtype=complex).copy()
    norm0 = psi0.norm()
    _check_resolution(psi, "initially")

    def half_potential(p: NDArray[np.complex128], time: float) -> NDArray[np.complex128]:
        v = np.asarray(potential(x, time), dtype=float)
        if coupling is not None:
            v = v + coupling.eval(time - t_start) * np.abs(p) ** 2
        return np.asarray(p * np.exp(-0.5j * v * step / hbar))

    for i in range(n):
        t0 = t_start + i * step
        psi = half_potential(psi, t0)
        psi = np.fft.ifft(kinetic * np.fft.fft(psi))
        psi = half_potential(psi, t0 + step)
        if observer is not None:
            observer(t0 + step, GridWavefunction(x, psi, m, hbar))

    out = GridWavefunction(x, psi, m, hbar)
    drift = abs(out.norm() - norm0) / norm0
    if drift > GRID_NORM_TOL:
        raise NormDriftError(f"grid norm drift {drift:.3g} exceeds {GRID_NORM_TOL}")
    _check_resolution(psi, "at the final time")
    return out


def imaginary_time_ground_state(
    potential: FloatArray,
    x: FloatArray,
    mass: float = 1.0,
    hbar: float = 1.0,
    coupling: float = 0.0,
    dt: float = 1e-3,
    tol: float = 1e-12,
    max_steps: int = 200000,
) -> Tuple[GridWavefunction, float]:
    """Relax to the ground state by split-step evolution in imaginary time.

    Returns the normalized state and its chemical potential (energy per
    particle for coupling = 0).
    """
    v = np.asarray(potential, dtype=float)
    dx = float(x[1] - x[0])
    k = 2.0 * np.pi * np.fft.fftfreq(len(x), dx)
    kinetic = np.exp(-hbar * k**2 * dt / (2.0 * mass))
    psi = np.exp(-((x - x[np.argmin(v)]) ** 2)).astype(complex)
    wf = GridWavefunction(x, psi, mass, hbar).normalized()
    psi = wf.psi
    mu_prev = np.inf
    for step in range(max_steps):
        psi = psi * np.exp(-0.5 * (v + coupling * np.abs(psi) ** 2) * dt / hbar)
        psi = np.fft.ifft(kinetic * np.fft.fft(psi))
        psi = psi * np.exp(-0.5 * (v + coupling * np.abs(psi) ** 2) * dt / hbar)
        norm = math.sqrt(float(trapezoid(np.abs(psi) ** 2, x)))
        mu = -hbar * math.log(norm) / dt
        psi = psi / norm
        if abs(mu - mu_prev) < tol * max(1.0, abs(mu)):
            logger.debug("Imaginary-time relaxation converged after %d steps", step + 1)
            break
        mu_prev = mu
    else:
        logger.warning("Imaginary-time relaxation stopped at %d steps without converging", max_steps)
    wf = GridWavefunction(x, psi, mass, hbar)
    return wf, wf.energy(v, coupling) + 0.5 * coupling * float(
        trapezoid(np.abs(psi) ** 4, x)
    )


# ── Classical dynamics ──────────────────────────────────────────────


@dataclass
class ForcedTrajectory:
    t: FloatArray
    x: FloatArray
    v: FloatArray
    excitation: float


def simulate_forced_oscillator(
    omega_sq: Union[Schedule, float],
    drive: Schedule,
    init: Tuple[float, float] = (0.0, 0.0),
    m: float = 1.0,
    drive_is_force: bool = False,
    n_samples: int = 2001,
) -> ForcedTrajectory:
    """ẍ = −ω²(x − x₀) for a moving trap center, or ẍ = −ω² x + F/m for a force.

    The excitation is ½ m v² + ½ m ω² (x − x_eq)² in the final trap.
    """
    t_f = drive.t_f

    def w2(t: float) -> float:
        return omega_sq.eval(t) if isinstance(omega_sq, Schedule) else float(omega_sq)

    def equilibrium(t: float) -> float:
        if drive_is_force:
            return drive.eval(t) / (m * w2(t))
        return drive.eval(t)

    def rhs(t: float, y: FloatArray) -> List[float]:
        if drive_is_force:
            return [y[1], -w2(t) * y[0] + drive.eval(t) / m]
        return [y[1], -w2(t) * (y[0] - drive.eval(t))]

    t_eval = np.linspace(0.0, t_f, n_samples)
    sol = solve_ivp(
        rhs, (0.0, t_f), list(init), method="DOP853", t_eval=t_eval, rtol=ODE_RTOL, atol=ODE_ATOL
    )
    if not sol.success:
        raise RuntimeError(f"forced-oscillator integration failed: {sol.message}")
    x, v = sol.y
    excitation = 0.5 * m * v[-1] ** 2 + 0.5 * m * w2(t_f) * (x[-1] - equilibrium(t_f)) ** 2
    return ForcedTrajectory(sol.t, x, v, float(excitation))


@dataclass(frozen=True)
class HarmonicTrap:
    """U(x,t) = ½ m ω²(t) (x − c(t))² plus an optional overdamped CD correction.

    The correction adds a(t)(x − c) + b(t)(x − c)², as returned by the classical
    designers.
    """

    omega_sq: Schedule
    mass: float = 1.0
    center: Optional[Schedule] = None
    correction: Optional[Callable[[float], Tuple[float, float]]] = None

    def _parts(self, t: float) -> Tuple[float, float, float, float]:
        c = self.center.eval(t) if self.center is not None else 0.0
        lin, quad = self.correction(t) if self.correction is not None else (0.0, 0.0)
        return 0.5 * self.mass * self.omega_sq.eval(t), c, lin, quad

    def energy(self, x: FloatArray, t: float) -> FloatArray:
        half_k, c, lin, quad = self._parts(t)
        y = x - c
        return np.asarray((half_k + quad) * y**2 + lin * y)

    def force(self, x: FloatArray, t: float) -> FloatArray:
        half_k, c, lin, quad = self._parts(t)
        return np.asarray(-2.0 * (half_k + quad) * (x - c) - lin)

    def stiffness(self, t: float) -> float:
        half_k, _, _, quad = self._parts(t)
        return 2.0 * (half_k + quad)


@dataclass
class LangevinEnsemble:
    t: FloatArray
    mean_x: FloatArray
    var_x: FloatArray
    mean_work: FloatArray
    final_x: FloatArray
    works: FloatArray
    seed: int
    n_traj: int

    @property
    def final_variance(self) -> float:
        return float(np.var(self.final_x, ddof=1))


def _temperature(kT: Union[float, Schedule], t: float) -> float:
    return kT.eval(t) if isinstance(kT, Schedule) else float(kT)


def _langevin_chunk(
    trap: HarmonicTrap,
    gamma: float,
    kT: Union[float, Schedule],
    m: float,
    size: int,
    rng: np.random.Generator,
    t_f: float,
    n_steps: int,
    record: Sequence[int],
    underdamped: bool,
) -> Tuple[FloatArray, FloatArray, FloatArray, FloatArray, FloatArray]:
    dt = t_f / n_steps
    kt0 = _temperature(kT, 0.0)
    k0 = trap.stiffness(0.0)
    c0 = trap.center.eval(0.0) if trap.center is not None else 0.0
    x = c0 + (rng.standard_normal(size) * math.sqrt(kt0 / k0) if kt0 > 0 else np.zeros(size))
    v = rng.standard_normal(size) * math.sqrt(kt0 / m) if (underdamped and kt0 > 0) else np.zeros(size)
    work = np.zeros(size)
    sums = np.zeros(len(record))
    sq = np.zeros(len(record))
    wsum = np.zeros(len(record))
    rec = {step: i for i, step in enumerate(record)}

    def store(step: int) -> None:
        i = rec.get(step)
        if i is not None:
            sums[i] = x.sum()
            sq[i] = (x * x).sum()
            wsum[i] = work.sum()

    store(0)
    for step in range(n_steps):
        t = step * dt
        # Sekimoto work: energy change from the protocol at fixed position
        work += trap.energy(x, t + dt) - trap.energy(x, t)
        kt = _temperature(kT, t)
        if underdamped:
            # BAOAB splitting
            v = v + 0.5 * dt * trap.force(x, t + dt) / m
            x = x + 0.5 * dt * v
            c1 = math.exp(-gamma * dt)
            v = c1 * v + math.sqrt(max(kt, 0.0) / m * (1.0 - c1 * c1)) * rng.standard_normal(size)
            x = x + 0.5 * dt * v
            v = v + 0.5 * dt * trap.force(x, t + dt) / m
        else:
            noise = math.sqrt(2.0 * max(kt, 0.0) / (m * gamma) * dt)
            x = x + trap.force(x, t + dt) / (m * gamma) * dt + noise * rng.standard_normal(size)
        store(step + 1)
    return sums, sq, wsum, x, work


def simulate_langevin(
    trap: HarmonicTrap,
    gamma: float,
    kT: Union[float, Schedule],
    n_traj: int,
    seed: int,
    t_f: Optional[float] = None,
    dt: Optional[float] = None,
    m: Optional[float] = None,
    underdamped: bool = False,
    n_records: int = 101,
    settings: Optional[Settings] = None,
) -> LangevinEnsemble:
    """Seeded Langevin ensemble started in equilibrium with the initial trap.

    Overdamped runs use Euler-Maruyama for m γ ẋ = −∂ₓU + ξ; underdamped runs
    use BAOAB. Chunk k draws from SeedSequence(seed, spawn_key=(k,)), so
    results do not depend on the thread count.
    """
    if n_traj < 1:
        raise ValueError("need at least one trajectory")
    if gamma <= 0:
        raise ValueError("friction rate must be positive")
    mass = trap.mass if m is None else m
    horizon = trap.omega_sq.t_f if t_f is None else t_f
    n_steps = LANGEVIN_STEPS if dt is None else _step_count(horizon, dt)
    record = sorted({int(round(i)) for i in np.linspace(0, n_steps, n_records)})
    cfg = settings or Settings.from_env()

    sizes = [LANGEVIN_CHUNK] * (n_traj // LANGEVIN_CHUNK)
    if n_traj % LANGEVIN_CHUNK:
        sizes.append(n_traj % LANGEVIN_CHUNK)

    def run(k: int) -> Tuple[FloatArray, FloatArray, FloatArray, FloatArray, FloatArray]:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))
        return _langevin_chunk(
            trap, gamma, kT, mass, sizes[k], rng, horizon, n_steps, record, underdamped
        )

    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        results = list(pool.map(run, range(len(sizes))))

    sums = sum(r[0] for r in results)
    sq = sum(r[1] for r in results)
    wsum = sum(r[2] for r in results)
    mean = sums / n_traj
    var = (sq - n_traj * mean**2) / max(n_traj - 1, 1)
    return LangevinEnsemble(
        t=np.array(record, dtype=float) * horizon / n_steps,
        mean_x=np.asarray(mean),
        var_x=np.asarray(var),
        mean_work=np.asarray(wsum / n_traj),
        final_x=np.concatenate([r[3] for r in results]),
        works=np.concatenate([r[4] for r in results]),
        seed=seed,
        n_traj=n_traj,
    )
