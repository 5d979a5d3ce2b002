"""
Designer, verifier and scan registry behind the command-line front end.

Helpers return ``(result, error)`` tuples; ``Commander`` turns them into
display lines, output files and exit codes.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from core.cd import counterdiabatic_rabi
from core.classical import (
    BoltzmannPlan,
    boltzmann_design,
    boltzmann_reintegrate,
    ese_design,
    free_energy_change,
    variance_moments,
    work_decomposition,
)
from core.display import Display
from core.faquad import (
    SCHEDULER_KINDS,
    faquad_schedule,
    fidelity_scan,
    linear_bias_schedule,
    local_adiabatic_schedule,
    revival_period,
    transfer_fidelity,
    uniform_adiabatic_schedule,
    adiabaticity_parameter,
)
from core.fastforward import (
    DensityPath,
    continuity_residual,
    ff_initial_state,
    ff_phase,
    ff_potential,
    potential_field,
    scaling_path,
    translating_path,
)
from core.invariants import (
    ExpansionDesign,
    design_expansion,
    design_transport,
    gpe_scaling_expansion,
    two_level_from_ansatz,
)
from core.models import (
    FaquadTwoLevel,
    TwoLevelControls,
    matrix_spectrum,
    track_spectrum,
    two_level_hamiltonian,
)
from core.propagators import (
    GridWavefunction,
    HarmonicTrap,
    harmonic_eigenstate,
    imaginary_time_ground_state,
    make_grid,
    propagate_grid,
    propagate_nlevel,
    simulate_forced_oscillator,
    simulate_langevin,
)
from core.protocol import (
    Protocol,
    ProtocolKind,
    VerificationReport,
    build_protocol,
    load_protocol,
    save_protocol,
    save_report,
    write_csv,
)
from core.robustness import (
    flat_pi_ansatz,
    fourier_excess_energy,
    fourier_robust_transport,
    optimize_noise_ansatz,
    qs_zero_ansatz,
    systematic_curvature,
    systematic_scan,
    systematic_sensitivity,
    trajectory_fourier,
)
from core.schedules import FloatArray, PolySchedule, Schedule, smooth_ramp
from core.units import ProtocolFormatError, Settings, StaError, Units
from core.verify import (
    aa_bound,
    expansion_energy_bound,
    expansion_mean_energy,
    fidelity,
    in_energy_bound_regime,
    ml_bound,
)
from sanitizer import (
    check_choice,
    check_count,
    check_grid,
    check_nonnegative,
    check_positive,
    check_real,
    check_roots,
)

__version__ = "1.0.0"

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_DESIGN = 3

DEFAULT_NTRAJ = 100_000
EXPORT_SAMPLES = 501
FF_PROPAGATION_STEPS = 1000
FF_FIELD_SAMPLES = 101
BOUND_REL_SLACK = 1e-8
TWO_LEVEL_PRESETS = ("flat", "qs_zero", "noise")
FF_MODES = ("translation", "scaling")
FAQUAD_SCHEDULERS = SCHEDULER_KINDS + ("linear",)

# Numerical failures a designer or verifier may raise on bad physics.
NUMERIC_ERRORS = (StaError, ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError)

Rows = List[List[float]]


@dataclass(frozen=True)
class ParamSpec:
    name: str
    check: Callable[[Any], Any]
    default: Any = None
    help: str = ""

    @property
    def required(self) -> bool:
        return self.default is None


@dataclass
class RunOptions:
    """Per-run overrides from the command line."""

    dt: Optional[float] = None
    grid: int = 1024
    tol: Optional[float] = None
    seed: int = 0
    ntraj: int = DEFAULT_NTRAJ
    checks: Optional[FrozenSet[str]] = None
    settings: Settings = field(default_factory=Settings.from_env)

    def wants(self, name: str) -> bool:
        return self.checks is None or name in self.checks

    def tolerance(self, default: float) -> float:
        return default if self.tol is None else self.tol


@dataclass
class Design:
    t_f: float
    controls: Dict[str, Schedule]
    derived: Dict[str, Any] = field(default_factory=dict)
    diagnostics: List[str] = field(default_factory=list)
    samples: Dict[str, Tuple[FloatArray, FloatArray, FloatArray]] = field(default_factory=dict)


@dataclass
class Outcome:
    report: VerificationReport
    header: List[str] = field(default_factory=list)
    rows: Rows = field(default_factory=list)


def _choice(choices: Sequence[str]) -> Callable[[Any], Optional[str]]:
    return lambda v: check_choice(v, choices)


KIND_PARAMS: Dict[ProtocolKind, List[ParamSpec]] = {
    ProtocolKind.TRANSPORT: [
        ParamSpec("d", check_real, help="transport distance"),
        ParamSpec("tf", check_positive, help="duration"),
        ParamSpec("omega0", check_positive, help="trap angular frequency"),
    ],
    ProtocolKind.EXPANSION: [
        ParamSpec("omega0", check_positive, help="initial trap frequency"),
        ParamSpec("omegaf", check_positive, help="final trap frequency"),
        ParamSpec("tf", check_positive, help="duration"),
    ],
    ProtocolKind.GPE_EXPANSION: [
        ParamSpec("omega0", check_positive, help="initial trap frequency"),
        ParamSpec("omegaf", check_positive, help="final trap frequency"),
        ParamSpec("tf", check_positive, help="duration"),
        ParamSpec("g0", check_nonnegative, 1.0, "initial 1D coupling"),
    ],
    ProtocolKind.TWO_LEVEL_CD: [
        ParamSpec("tf", check_positive, help="sweep duration"),
        ParamSpec("omega0", check_positive, 1.0, "constant Rabi frequency"),
        ParamSpec("sweep", check_positive, 20.0, "detuning amplitude in units of omega0"),
    ],
    ProtocolKind.TWO_LEVEL_INVARIANT: [
        ParamSpec("tf", check_positive, help="pulse duration"),
        ParamSpec("preset", _choice(TWO_LEVEL_PRESETS), "qs_zero", "flat | qs_zero | noise"),
    ],
    ProtocolKind.FAQUAD: [
        ParamSpec("J", check_positive, 1.0, "tunneling coupling"),
        ParamSpec("U", check_positive, help="interaction bias"),
        ParamSpec("delta0", check_real, help="initial bias"),
        ParamSpec("delta1", check_real, 0.0, "final bias"),
        ParamSpec("tf", check_positive, help="duration"),
        ParamSpec(
            "scheduler", _choice(FAQUAD_SCHEDULERS), "faquad", "faquad | local | uniform | linear"
        ),
    ],
    ProtocolKind.FF: [
        ParamSpec("mode", _choice(FF_MODES), "translation", "translation | scaling"),
        ParamSpec("tf", check_positive, help="duration"),
        ParamSpec("omega0", check_positive, help="trap frequency of the initial ground state"),
        ParamSpec("d", check_real, 1.0, "translation distance"),
        ParamSpec("omegaf", check_positive, 0.25, "final frequency of a scaling path"),
        ParamSpec("length", check_positive, 20.0, "grid length"),
        ParamSpec("points", check_grid, 512, "grid points"),
        ParamSpec("nt", lambda v: check_count(v, 2, 10001), FF_FIELD_SAMPLES, "samples of V(x,t)"),
    ],
    ProtocolKind.FOURIER_TRANSPORT: [
        ParamSpec("d", check_real, help="transport distance"),
        ParamSpec("tf", check_positive, help="duration"),
        ParamSpec("roots", check_roots, help="comma-separated frequencies to suppress"),
    ],
    ProtocolKind.ESE: [
        ParamSpec("wi", check_positive, help="initial trap frequency"),
        ParamSpec("wf", check_positive, help="final trap frequency"),
        ParamSpec("tf", check_positive, help="duration"),
        ParamSpec("gamma", check_positive, help="friction rate"),
        ParamSpec("kT", check_positive, 1.0, "bath temperature"),
    ],
    ProtocolKind.BOLTZMANN: [
        ParamSpec("omega0", check_positive, help="initial trap frequency"),
        ParamSpec("omegaf", check_positive, help="final trap frequency"),
        ParamSpec("tf", check_positive, help="duration"),
        ParamSpec("beta0", check_positive, 1.0, "initial inverse temperature"),
    ],
}


def validate_params(
    kind: ProtocolKind, raw: Dict[str, Any]
) -> Tuple[Optional[Dict[str, Any]], Optional[str]]:
    """Sanitize designer parameters; unknown names and missing values are errors."""
    specs = {p.name: p for p in KIND_PARAMS[kind]}
    unknown = sorted(k for k, v in raw.items() if k not in specs and v is not None)
    if unknown:
        return None, f"unknown parameter(s) for {kind.value}: {', '.join(unknown)}"
    params: Dict[str, Any] = {}
    for name, spec in specs.items():
        value = raw.get(name)
        if value is None:
            if spec.required:
                return None, f"{kind.value} needs --{name} ({spec.help})"
            params[name] = spec.default
            continue
        clean = spec.check(value)
        if clean is None:
            return None, f"invalid value for --{name}: {value!r}"
        params[name] = clean
    return params, None


# ── Designers ───────────────────────────────────────────────────────


def _design_transport(p: Dict[str, Any], units: Units) -> Design:
    d = design_transport(p["d"], p["tf"], p["omega0"], units.mass)
    return Design(p["tf"], {"x0": d.x0, "qc": d.qc, "force": d.force})


def _design_expansion(p: Dict[str, Any], units: Units) -> Design:
    d = design_expansion(p["omega0"], p["omegaf"], p["tf"])
    diagnostics = ["trap transiently repulsive (omega^2 < 0)"] if d.transient_repulsive else []
    return Design(
        p["tf"],
        {"rho": d.rho, "omega_sq": d.omega_sq},
        {"transient_repulsive": d.transient_repulsive},
        diagnostics,
    )


def _design_gpe(p: Dict[str, Any], units: Units) -> Design:
    g = gpe_scaling_expansion(p["omega0"], p["omegaf"], p["tf"], p["g0"])
    return Design(
        p["tf"],
        {"rho": g.rho, "omega_sq": g.omega_sq, "coupling": g.g},
        {"transient_repulsive": g.design.transient_repulsive},
    )


def _lz_controls(p: Dict[str, Any]) -> TwoLevelControls:
    w0, amp, t_f = p["omega0"], p["sweep"] * p["omega0"], p["tf"]
    return TwoLevelControls.real(
        PolySchedule.from_coefficients(t_f, [-amp, 2.0 * amp]),
        PolySchedule.from_coefficients(t_f, [w0]),
    )


def _design_two_level_cd(p: Dict[str, Any], units: Units) -> Design:
    c = _lz_controls(p)
    omega_a = counterdiabatic_rabi(c)
    peak = float(np.max(np.abs(omega_a.sample()[1])))
    return Design(
        p["tf"],
        {"delta": c.delta, "omega_r": c.omega_r, "omega_a": omega_a},
        {"peak_omega_a": peak},
    )


def _design_two_level_invariant(p: Dict[str, Any], units: Units) -> Design:
    t_f = p["tf"]
    derived: Dict[str, Any] = {}
    if p["preset"] == "flat":
        ansatz = flat_pi_ansatz(t_f)
    elif p["preset"] == "qs_zero":
        ansatz = qs_zero_ansatz(t_f)
    else:
        ansatz, q_n = optimize_noise_ansatz(t_f, units=units)
        derived["q_n"] = q_n
    derived["q_s"] = systematic_sensitivity(ansatz)
    c = two_level_from_ansatz(ansatz)
    return Design(t_f, dict(c.schedules()), derived)


def _faquad_model(p: Dict[str, Any]) -> FaquadTwoLevel:
    return FaquadTwoLevel(p["J"], p["U"])


def _design_faquad(p: Dict[str, Any], units: Units) -> Design:
    model = _faquad_model(p)
    if p["scheduler"] == "linear":
        lam = linear_bias_schedule(p["delta0"], p["delta1"], p["tf"])
        revival = revival_period(model, lam, units=units)
        return Design(p["tf"], {"delta": lam}, {"revival_time": revival})
    builder = {
        "faquad": faquad_schedule,
        "local": local_adiabatic_schedule,
        "uniform": uniform_adiabatic_schedule,
    }[p["scheduler"]]
    res = builder(model, p["delta0"], p["delta1"], p["tf"], units=units)
    return Design(
        p["tf"],
        {"delta": res.lam},
        {
            "c": res.c,
            "phi_bar": res.phi_bar,
            "revival_time": res.revival_time,
            "regularized": res.regularized,
        },
        list(res.diagnostics),
    )


def _ff_path(p: Dict[str, Any], units: Units) -> DensityPath:
    m, w0, hbar = units.mass, p["omega0"], units.hbar
    width = m * w0 / hbar

    def profile(x: FloatArray) -> FloatArray:
        return np.asarray((width / math.pi) ** 0.25 * np.exp(-0.5 * width * x**2))

    if p["mode"] == "translation":
        x = make_grid(p["length"], p["points"], center=0.5 * p["d"])
        return translating_path(x, profile, smooth_ramp(0.0, p["d"], p["tf"]))
    x = make_grid(p["length"], p["points"])
    b = smooth_ramp(1.0, math.sqrt(w0 / p["omegaf"]), p["tf"])
    return scaling_path(x, profile, b)


def _design_ff(p: Dict[str, Any], units: Units) -> Design:
    path = _ff_path(p, units)
    times = np.linspace(0.0, p["tf"], p["nt"])
    ts, x, v = potential_field(path, units.mass, times, units)
    residual = max(continuity_residual(path, float(t)) for t in times[:: max(1, len(times) // 10)])
    design = Design(
        p["tf"], {}, {"continuity_residual": residual}, samples={"potential": (ts, x, v)}
    )
    if p["mode"] == "translation":
        design.controls["x0"] = smooth_ramp(0.0, p["d"], p["tf"])
    else:
        design.controls["b"] = smooth_ramp(1.0, math.sqrt(p["omega0"] / p["omegaf"]), p["tf"])
    return design


def _design_fourier(p: Dict[str, Any], units: Units) -> Design:
    d = fourier_robust_transport(p["d"], p["tf"], p["roots"], units.mass)
    return Design(p["tf"], {"x0": d.x0}, {"roots": list(d.target_roots)})


def _design_ese(p: Dict[str, Any], units: Units) -> Design:
    plan = ese_design(units.mass, p["wi"], p["wf"], p["tf"], p["kT"] * units.kB, p["gamma"])
    return Design(
        p["tf"],
        {"alpha": plan.alpha, "omega_sq": plan.omega_sq},
        {
            "tau_relax": plan.tau_relax,
            "diffusion": plan.diffusion,
            "transient_repulsive": plan.transient_repulsive,
        },
        list(plan.diagnostics),
    )


def _design_boltzmann(p: Dict[str, Any], units: Units) -> Design:
    plan = boltzmann_design(p["omega0"], p["omegaf"], p["tf"], p["beta0"])
    diagnostics = ["trap transiently repulsive (omega^2 < 0)"] if plan.transient_repulsive else []
    return Design(
        p["tf"],
        {"beta": plan.beta, "omega_sq": plan.omega_sq},
        {"residual": plan.residual(), "beta_omega_deviation": plan.beta_omega_deviation()},
        diagnostics,
    )


DESIGNERS: Dict[ProtocolKind, Callable[[Dict[str, Any], Units], Design]] = {
    ProtocolKind.TRANSPORT: _design_transport,
    ProtocolKind.EXPANSION: _design_expansion,
    ProtocolKind.GPE_EXPANSION: _design_gpe,
    ProtocolKind.TWO_LEVEL_CD: _design_two_level_cd,
    ProtocolKind.TWO_LEVEL_INVARIANT: _design_two_level_invariant,
    ProtocolKind.FAQUAD: _design_faquad,
    ProtocolKind.FF: _design_ff,
    ProtocolKind.FOURIER_TRANSPORT: _design_fourier,
    ProtocolKind.ESE: _design_ese,
    ProtocolKind.BOLTZMANN: _design_boltzmann,
}


def run_designer(
    kind: ProtocolKind, params: Dict[str, Any], units: Units = Units()
) -> Tuple[Optional[Protocol], Optional[str]]:
    try:
        design = DESIGNERS[kind](params, units)
    except NUMERIC_ERRORS as e:
        logger.debug("Designer %s failed", kind.value, exc_info=True)
        return None, f"{kind.value} design failed: {e}"
    protocol = build_protocol(
        kind,
        design.t_f,
        design.controls,
        params,
        units,
        __version__,
        samples=design.samples,
        derived=design.derived,
        diagnostics=design.diagnostics,
    )
    return protocol, None


# ── Verifiers ───────────────────────────────────────────────────────


def _bound_checks(report: VerificationReport, traj: Any) -> None:
    for check in (aa_bound(traj), ml_bound(traj)):
        report.metrics[f"{check.kind.lower()}_rhs"] = check.rhs
        if not check.defined:
            report.diagnostics.extend(check.diagnostics)
            continue
        name = f"{check.kind.lower()}_margin"
        report.add_check(name, check.margin / traj.t_f, -BOUND_REL_SLACK, ">=")


def _verify_transport(p: Protocol, o: RunOptions) -> Outcome:
    units = p.units.to_units()
    m, w0, d = units.mass, float(p.param("omega0")), float(p.param("d"))
    x0 = p.schedule("x0")
    report = VerificationReport(kind=p.kind)
    traj = simulate_forced_oscillator(w0**2, x0, m=m)
    scale = m * w0**2 * d**2 if d != 0 else 1.0
    report.metrics["excitation"] = traj.excitation
    report.add_check("classical_excitation", traj.excitation / scale, o.tolerance(1e-10))
    if o.wants("grid_fidelity"):
        sigma = math.sqrt(units.hbar / (m * w0))
        x = make_grid(abs(d) + 24.0 * sigma, o.grid, center=0.5 * d)
        psi0 = GridWavefunction(x, harmonic_eigenstate(x, 0, m, w0, units.hbar), m, units.hbar)

        def potential(xs: FloatArray, t: float) -> FloatArray:
            return np.asarray(0.5 * m * w0**2 * (xs - x0.eval(t)) ** 2)

        final = propagate_grid(potential, psi0, p.t_f, o.dt)
        target = harmonic_eigenstate(x, 0, m, w0, units.hbar, center=d)
        report.add_check("grid_infidelity", 1.0 - fidelity(final, target), 1e-6)
    rows = [[float(t), float(xv), float(v)] for t, xv, v in zip(traj.t, traj.x, traj.v)]
    return Outcome(report, ["t", "x", "v"], rows)


def _ground_fidelity_after_expansion(
    p: Protocol, o: RunOptions, coupling: Optional[Schedule], g_final: float
) -> Tuple[float, Rows]:
    units = p.units.to_units()
    m, hbar = units.mass, units.hbar
    w0, wf = float(p.param("omega0")), float(p.param("omegaf"))
    omega_sq = p.schedule("omega_sq")
    sigma = math.sqrt(hbar / (m * min(w0, wf)))
    g0 = float(p.param("g0", 0.0) or 0.0)
    x = make_grid(24.0 * sigma + 4.0 * g0 / (m * min(w0, wf) ** 2 * sigma), o.grid)
    if coupling is None:
        psi0 = GridWavefunction(x, harmonic_eigenstate(x, 0, m, w0, hbar), m, hbar)
        target: Any = harmonic_eigenstate(x, 0, m, wf, hbar)
    else:
        psi0, _ = imaginary_time_ground_state(0.5 * m * w0**2 * x**2, x, m, hbar, g0)
        target, _ = imaginary_time_ground_state(0.5 * m * wf**2 * x**2, x, m, hbar, g_final)
    rows: Rows = []

    def observer(t: float, wf_t: GridWavefunction) -> None:
        if not rows or t - rows[-1][0] >= p.t_f / 200.0 - 1e-15:
            rows.append([t, wf_t.variance_x()])

    final = propagate_grid(
        lambda xs, t: 0.5 * m * omega_sq.eval(t) * xs**2, psi0, p.t_f, o.dt, coupling, observer
    )
    return fidelity(final, target), [[0.0, psi0.variance_x()]] + rows


def _ermakov_residual(p: Protocol) -> float:
    rho, omega_sq = p.schedule("rho"), p.schedule("omega_sq")
    w0 = float(p.param("omega0"))
    t = np.linspace(0.0, p.t_f, 2001)
    r = rho.eval_array(t)
    res = rho.eval_array(t, 2) + omega_sq.eval_array(t) * r - w0**2 / r**3
    return float(np.max(np.abs(res)) / w0**2)


def _verify_expansion(p: Protocol, o: RunOptions) -> Outcome:
    units = p.units.to_units()
    w0, wf = float(p.param("omega0")), float(p.param("omegaf"))
    report = VerificationReport(kind=p.kind)
    report.add_check("ermakov_residual", _ermakov_residual(p), o.tolerance(1e-6))
    design = ExpansionDesign(w0, wf, _poly(p, "rho"), p.schedule("omega_sq"))
    mean_energy = expansion_mean_energy(design, 0, units)
    bound = expansion_energy_bound(0, wf, p.t_f, units)
    report.metrics["mean_energy"] = mean_energy
    report.metrics["energy_bound"] = bound
    if in_energy_bound_regime(w0, wf, p.t_f):
        report.add_check("mean_energy_over_bound", mean_energy / bound, 1.0, ">=")
    else:
        report.diagnostics.append("outside the fast-expansion regime; energy bound informational")
    rows: Rows = []
    if o.wants("grid_fidelity"):
        fid, rows = _ground_fidelity_after_expansion(p, o, None, 0.0)
        report.add_check("grid_fidelity", fid, 0.9999, ">=")
    return Outcome(report, ["t", "var_x"], rows)


def _verify_gpe(p: Protocol, o: RunOptions) -> Outcome:
    report = VerificationReport(kind=p.kind)
    report.add_check("ermakov_residual", _ermakov_residual(p), o.tolerance(1e-6))
    g0 = float(p.param("g0"))
    rho, coupling = p.schedule("rho"), p.schedule("coupling")
    t = np.linspace(0.0, p.t_f, 2001)
    mismatch = float(np.max(np.abs(coupling.eval_array(t) * rho.eval_array(t) - g0)))
    report.add_check("coupling_scaling", mismatch / max(g0, 1.0), 1e-6)
    rows: Rows = []
    if o.wants("grid_fidelity"):
        fid, rows = _ground_fidelity_after_expansion(p, o, coupling, g0 / rho.eval(p.t_f))
        report.add_check("grid_fidelity", fid, 1.0 - 1e-3, ">=")
    return Outcome(report, ["t", "var_x"], rows)


def _verify_two_level_cd(p: Protocol, o: RunOptions) -> Outcome:
    units = p.units.to_units()
    delta, omega_r = p.schedule("delta"), p.schedule("omega_r")
    bare = TwoLevelControls.real(delta, omega_r)
    h0 = two_level_hamiltonian(bare, units)
    h = two_level_hamiltonian(TwoLevelControls(delta, omega_r, p.schedule("omega_a")), units)
    _, v0 = matrix_spectrum(h0.at(0.0))
    traj = propagate_nlevel(h, v0[:, 0], o.dt, units, "magnus4")
    _, bases = track_spectrum(h0, traj.t)
    pops = [float(abs(np.vdot(b[:, 0], s)) ** 2) for b, s in zip(bases, traj.states)]
    report = VerificationReport(kind=p.kind)
    report.add_check("min_ground_population", min(pops), 1.0 - o.tolerance(1e-6), ">=")
    bare_traj = propagate_nlevel(h0, v0[:, 0], o.dt, units, "magnus4")
    _, v1 = matrix_spectrum(h0.at(p.t_f))
    report.metrics["bare_fidelity"] = float(abs(np.vdot(v1[:, 0], bare_traj.final)) ** 2)
    if o.wants("bounds"):
        _bound_checks(report, traj)
    return Outcome(report, ["t", "p_ground"], [[float(t), pk] for t, pk in zip(traj.t, pops)])


def _poly(p: Protocol, name: str) -> PolySchedule:
    s = p.schedule(name)
    if not isinstance(s, PolySchedule):
        raise ProtocolFormatError(f"control {name!r} must be piecewise polynomial")
    return s


def _two_level_controls(p: Protocol) -> TwoLevelControls:
    return TwoLevelControls(p.schedule("delta"), p.schedule("omega_r"), p.schedule("omega_i"))


def _verify_two_level_invariant(p: Protocol, o: RunOptions) -> Outcome:
    units = p.units.to_units()
    c = _two_level_controls(p)
    report = VerificationReport(kind=p.kind)
    traj = propagate_nlevel(two_level_hamiltonian(c, units), [1.0, 0.0], o.dt, units, "magnus4")
    inversion = float(abs(traj.final[1]) ** 2)
    report.add_check("infidelity", 1.0 - inversion, o.tolerance(1e-6))
    if o.wants("bounds"):
        _bound_checks(report, traj)
    if o.wants("curvature"):
        report.metrics["fd_curvature"] = systematic_curvature(
            c, units=units, dt=o.dt, settings=o.settings
        )
    rows = [
        [float(t), float(abs(s[0]) ** 2), float(abs(s[1]) ** 2)]
        for t, s in zip(traj.t, traj.states)
    ]
    return Outcome(report, ["t", "p1", "p2"], rows)


def _verify_faquad(p: Protocol, o: RunOptions) -> Outcome:
    units = p.units.to_units()
    model = FaquadTwoLevel(float(p.param("J")), float(p.param("U")))
    lam = p.schedule("delta")
    report = VerificationReport(kind=p.kind)
    fid = transfer_fidelity(model, lam, units=units, dt=o.dt)
    report.add_check("fidelity", fid, 1.0 - o.tolerance(1e-2), ">=")
    ts = np.linspace(0.0, p.t_f, 201)
    params = [adiabaticity_parameter(model, lam, float(t), units=units) for t in ts]
    report.metrics["revival_time"] = revival_period(model, lam, units=units)
    report.metrics["mean_adiabaticity"] = float(np.mean(params))
    if p.param("scheduler") == "faquad":
        spread = (max(params) - min(params)) / float(np.mean(params))
        report.add_check("adiabaticity_spread", spread, 1e-4)
    rows = [[float(t), lam.eval(float(t)), a] for t, a in zip(ts, params)]
    return Outcome(report, ["t", "delta", "adiabaticity"], rows)


def _verify_ff(p: Protocol, o: RunOptions) -> Outcome:
    units = p.units.to_units()
    m = units.mass
    path = _ff_path(dict(p.metadata.params), units)
    report = VerificationReport(kind=p.kind)
    probes = np.linspace(0.0, p.t_f, 11)
    residual = max(continuity_residual(path, float(t)) for t in probes)
    report.add_check("continuity_residual", residual, 1e-5)
    rows: Rows = []
    if o.wants("self_consistency"):
        dt = o.dt or p.t_f / FF_PROPAGATION_STEPS
        psi0 = GridWavefunction(path.x, ff_initial_state(path, m, units), m, units.hbar)

        def error_at(t: float, psi: FloatArray) -> float:
            target = path.rho(t) * np.exp(1j * ff_phase(path, m, t, units))
            return math.sqrt(float(trapezoid(np.abs(psi - target) ** 2, path.x)))

        def observer(t: float, wf_t: GridWavefunction) -> None:
            if not rows or t - rows[-1][0] >= p.t_f / 20.0 - 1e-12:
                rows.append([t, error_at(min(t, p.t_f), wf_t.psi)])

        final = propagate_grid(
            lambda xs, t: ff_potential(path, m, min(t, p.t_f), units),
            psi0,
            p.t_f,
            dt,
            observer=observer,
        )
        report.add_check("l2_error", error_at(p.t_f, final.psi), o.tolerance(1e-4))
    return Outcome(report, ["t", "l2_error"], rows)


def _verify_fourier(p: Protocol, o: RunOptions) -> Outcome:
    units = p.units.to_units()
    x0 = p.schedule("x0")
    d = float(p.param("d"))
    roots = [float(w) for w in p.param("roots")]
    report = VerificationReport(kind=p.kind)
    report.add_check("endpoint_error", abs(x0.eval(p.t_f) - d) / max(abs(d), 1.0), 1e-9)
    for w in roots:
        f2 = abs(trajectory_fourier(x0, w)) ** 2
        report.metrics[f"F2_{w:g}"] = f2
        report.add_check(f"fourier_{w:g}", f2 / max((w * d) ** 2, 1e-300), o.tolerance(1e-14))
        exc = simulate_forced_oscillator(w**2, x0, m=units.mass).excitation
        report.add_check(
            f"excitation_{w:g}", exc / max(0.5 * units.mass * (w * d) ** 2, 1e-300), 1e-8
        )
    omegas = np.linspace(0.0, 2.0 * max(roots), 201)
    rows = [[float(w), fourier_excess_energy(x0, float(w), units.mass)] for w in omegas]
    return Outcome(report, ["omega", "excess_energy"], rows)


def _verify_ese(p: Protocol, o: RunOptions) -> Outcome:
    units = p.units.to_units()
    m = units.mass
    wi, wf, gamma = float(p.param("wi")), float(p.param("wf")), float(p.param("gamma"))
    kT = float(p.param("kT")) * units.kB
    alpha, omega_sq = p.schedule("alpha"), p.schedule("omega_sq")
    report = VerificationReport(kind=p.kind, seed=o.seed)
    t = np.linspace(0.0, p.t_f, 2001)
    a = alpha.eval_array(t)
    res = (
        alpha.eval_array(t, 1) / a
        - 2.0 * omega_sq.eval_array(t) / gamma
        + 4.0 * kT / (m * gamma) * a
    )
    report.add_check("alpha_residual", float(np.max(np.abs(res))) * gamma / wf**2, 1e-6)
    target = kT / (m * wf**2)
    moments = variance_moments(omega_sq, gamma, kT, m)
    report.add_check("moment_variance_error", abs(moments.final_variance - target) / target, 1e-6)
    report.metrics["moment_work"] = moments.final_work
    report.metrics["delta_F"] = free_energy_change(wi, wf, kT)
    rows: Rows = []
    if o.wants("ensemble"):
        trap = HarmonicTrap(omega_sq, m)
        ens = simulate_langevin(trap, gamma, kT, o.ntraj, o.seed, dt=o.dt, settings=o.settings)
        err = abs(ens.final_variance - target) / target
        report.add_check("ensemble_variance_error", err, o.tolerance(0.02))
        ledger = work_decomposition(ens, wi, wf, kT, p.t_f)
        report.metrics.update(
            {"W": ledger.W, "W_irr": ledger.W_irr, "work_standard_error": ledger.standard_error}
        )
        report.diagnostics.extend(ledger.diagnostics)
        rows = [
            [float(tk), float(mx), float(vx), float(wk)]
            for tk, mx, vx, wk in zip(ens.t, ens.mean_x, ens.var_x, ens.mean_work)
        ]
    return Outcome(report, ["t", "mean_x", "var_x", "mean_work"], rows)


def _verify_boltzmann(p: Protocol, o: RunOptions) -> Outcome:
    w0, wf = float(p.param("omega0")), float(p.param("omegaf"))
    plan = BoltzmannPlan(_poly(p, "beta"), p.schedule("omega_sq"), w0, wf)
    report = VerificationReport(kind=p.kind)
    report.add_check("beta_residual", plan.residual(), o.tolerance(1e-7))
    t, beta = boltzmann_reintegrate(plan)
    expected = plan.beta.eval(0.0) * w0 / wf
    report.add_check("reintegration_error", abs(beta[-1] - expected) / expected, 1e-6)
    report.metrics["beta_omega_deviation"] = plan.beta_omega_deviation()
    return Outcome(report, ["t", "beta"], [[float(a), float(b)] for a, b in zip(t, beta)])


VERIFIERS: Dict[ProtocolKind, Callable[[Protocol, RunOptions], Outcome]] = {
    ProtocolKind.TRANSPORT: _verify_transport,
    ProtocolKind.EXPANSION: _verify_expansion,
    ProtocolKind.GPE_EXPANSION: _verify_gpe,
    ProtocolKind.TWO_LEVEL_CD: _verify_two_level_cd,
    ProtocolKind.TWO_LEVEL_INVARIANT: _verify_two_level_invariant,
    ProtocolKind.FAQUAD: _verify_faquad,
    ProtocolKind.FF: _verify_ff,
    ProtocolKind.FOURIER_TRANSPORT: _verify_fourier,
    ProtocolKind.ESE: _verify_ese,
    ProtocolKind.BOLTZMANN: _verify_boltzmann,
}


def run_verifier(
    protocol: Protocol, options: Optional[RunOptions] = None
) -> Tuple[Optional[Outcome], Optional[str]]:
    opts = options or RunOptions()
    try:
        outcome = VERIFIERS[protocol.kind](protocol, opts)
    except NUMERIC_ERRORS as e:
        logger.debug("Verifier %s failed", protocol.kind.value, exc_info=True)
        return None, f"{protocol.kind.value} verification could not run: {e}"
    outcome.report.version = __version__
    outcome.report.diagnostics = list(protocol.metadata.diagnostics) + outcome.report.diagnostics
    return outcome, None


# ── Scans ───────────────────────────────────────────────────────────


def _scan_faquad_tf(p: Protocol, values: FloatArray, o: RunOptions) -> Tuple[List[str], Rows]:
    units = p.units.to_units()
    model = FaquadTwoLevel(float(p.param("J")), float(p.param("U")))
    lam = _poly(p, "delta")
    ts, fids = fidelity_scan(
        model, lam.stretched, values, units=units, dt=o.dt, settings=o.settings
    )
    return ["t_f", "fidelity"], [[float(t), float(f)] for t, f in zip(ts, fids)]


def _scan_beta(p: Protocol, values: FloatArray, o: RunOptions) -> Tuple[List[str], Rows]:
    c = _two_level_controls(p)
    probs = systematic_scan(c, values, p.units.to_units(), o.dt, o.settings)
    return ["beta", "P2"], [[float(b), float(q)] for b, q in zip(values, probs)]


def _scan_omega(p: Protocol, values: FloatArray, o: RunOptions) -> Tuple[List[str], Rows]:
    x0 = p.schedule("x0")
    return ["omega", "F2"], [[float(w), abs(trajectory_fourier(x0, float(w))) ** 2] for w in values]


def _scan_ese_tf(p: Protocol, values: FloatArray, o: RunOptions) -> Tuple[List[str], Rows]:
    units = p.units.to_units()
    wi, wf, gamma = float(p.param("wi")), float(p.param("wf")), float(p.param("gamma"))
    kT = float(p.param("kT")) * units.kB
    delta_f = free_energy_change(wi, wf, kT)
    rows: Rows = []
    for t_f in values:
        plan = ese_design(units.mass, wi, wf, float(t_f), kT, gamma)
        work = variance_moments(plan.omega_sq, gamma, kT, units.mass).final_work
        rows.append([float(t_f), work - delta_f])
    return ["t_f", "W_irr"], rows


Scan = Callable[[Protocol, FloatArray, RunOptions], Tuple[List[str], Rows]]

SCANS: Dict[Tuple[ProtocolKind, str], Scan] = {
    (ProtocolKind.FAQUAD, "tf"): _scan_faquad_tf,
    (ProtocolKind.TWO_LEVEL_INVARIANT, "beta"): _scan_beta,
    (ProtocolKind.TRANSPORT, "omega"): _scan_omega,
    (ProtocolKind.FOURIER_TRANSPORT, "omega"): _scan_omega,
    (ProtocolKind.ESE, "tf"): _scan_ese_tf,
}


def scan_parameters(kind: ProtocolKind) -> List[str]:
    return sorted(name for k, name in SCANS if k == kind)


def run_scan(
    protocol: Protocol,
    parameter: str,
    values: Sequence[float],
    options: Optional[RunOptions] = None,
) -> Tuple[Optional[Tuple[List[str], Rows]], Optional[str]]:
    key = (protocol.kind, parameter)
    if key not in SCANS:
        allowed = ", ".join(scan_parameters(protocol.kind)) or "none"
        return None, f"cannot scan {parameter!r} for {protocol.kind.value} (allowed: {allowed})"
    opts = options or RunOptions()
    try:
        return SCANS[key](protocol, np.asarray(values, dtype=float), opts), None
    except NUMERIC_ERRORS as e:
        logger.debug("Scan %s/%s failed", protocol.kind.value, parameter, exc_info=True)
        return None, f"scan of {parameter} failed: {e}"


def export_rows(
    protocol: Protocol, name: Optional[str] = None, n: int = EXPORT_SAMPLES
) -> Tuple[Optional[Tuple[List[str], Rows]], Optional[str]]:
    """Controls sampled on n times, or a sampled field as a t-by-x matrix."""
    if name is not None and name in protocol.samples:
        t, x, values = protocol.samples[name].arrays()
        header = ["t"] + [f"x={v:.12g}" for v in x]
        return (header, [[float(tk)] + [float(v) for v in row] for tk, row in zip(t, values)]), None
    names = sorted(protocol.controls) if name is None else [name]
    if name is not None and name not in protocol.controls:
        return None, f"protocol has no control or sampled field {name!r}"
    if not names:
        return None, "protocol has no controls; export a sampled field by name"
    ts = np.linspace(0.0, protocol.t_f, n)
    columns = [protocol.schedule(c).eval_array(ts) for c in names]
    rows = [[float(ts[i])] + [float(col[i]) for col in columns] for i in range(n)]
    return (["t"] + names, rows), None


# ── Command-line coordinator ────────────────────────────────────────


class Commander:
    def __init__(self, display: Display, options: Optional[RunOptions] = None):
        self.display = display
        self.options = options or RunOptions()

    def _load(self, path: str) -> Optional[Protocol]:
        try:
            return load_protocol(path)
        except StaError as e:
            self.display.display_error(str(e))
            return None

    def design(self, kind: str, raw: Dict[str, Any], out: str, units: Units = Units()) -> int:
        try:
            pkind = ProtocolKind(kind)
        except ValueError:
            self.display.display_error(f"Unknown protocol kind: {kind}")
            return EXIT_USAGE
        params, err = validate_params(pkind, raw)
        if params is None:
            self.display.display_error(err or "invalid parameters")
            return EXIT_USAGE
        protocol, err = run_designer(pkind, params, units)
        if protocol is None:
            self.display.display_error(err or "design failed")
            return EXIT_DESIGN
        save_protocol(protocol, out)
        self.display.show_protocol(protocol, out)
        return EXIT_OK

    def verify(self, path: str, out: Optional[str] = None, csv_path: Optional[str] = None) -> int:
        protocol = self._load(path)
        if protocol is None:
            return EXIT_USAGE
        outcome, err = run_verifier(protocol, self.options)
        if outcome is None:
            self.display.display_error(err or "verification failed to run")
            return EXIT_DESIGN
        if out:
            save_report(outcome.report, out)
        if csv_path and outcome.rows:
            write_csv(csv_path, outcome.header, outcome.rows)
        self.display.show_report(outcome.report)
        if not outcome.report.passed:
            names = ", ".join(c.name for c in outcome.report.failed)
            self.display.display_error(f"Failed checks: {names}")
            return EXIT_FAILED
        return EXIT_OK

    def scan(self, path: str, parameter: str, values: Sequence[float], out: str) -> int:
        protocol = self._load(path)
        if protocol is None:
            return EXIT_USAGE
        result, err = run_scan(protocol, parameter, values, self.options)
        if result is None:
            self.display.display_error(err or "scan failed")
            return EXIT_USAGE if err and err.startswith("cannot scan") else EXIT_DESIGN
        header, rows = result
        write_csv(out, header, rows)
        self.display.display_system(f"Scanned {parameter} over {len(rows)} points -> {out}")
        return EXIT_OK

    def export(
        self, path: str, out: str, name: Optional[str] = None, n: int = EXPORT_SAMPLES
    ) -> int:
        protocol = self._load(path)
        if protocol is None:
            return EXIT_USAGE
        result, err = export_rows(protocol, name, n)
        if result is None:
            self.display.display_error(err or "nothing to export")
            return EXIT_USAGE
        header, rows = result
        write_csv(out, header, rows)
        self.display.display_system(f"Exported {len(rows)} rows -> {out}")
        return EXIT_OK

    def show_kinds(self) -> None:
        self.display.show_kinds(
            {k.value: [(p.name, p.help) for p in specs] for k, specs in KIND_PARAMS.items()}
        )
