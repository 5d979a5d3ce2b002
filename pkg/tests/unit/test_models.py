import math

import numpy as np
import pytest

from core.models import (
    SIGMA_X,
    SIGMA_Z,
    ComplexCouplingControls,
    FaquadTwoLevel,
    LewisLeachSpec,
    TwoLevelControls,
    complex_coupling_hamiltonian,
    constant_hamiltonian,
    lambda_system_hamiltonian,
    matrix_spectrum,
    pauli_hamiltonian,
    spin_precession_field,
    track_spectrum,
    two_level_hamiltonian,
    unitary_hamiltonian,
)
from core.schedules import constant_schedule, linear_schedule, smooth_ramp
from core.units import DegenerateSpectrumError, ScheduleDomainError, ScheduleError, Units


def _lz(t_f: float = 1.0) -> TwoLevelControls:
    return TwoLevelControls.real(linear_schedule(-20.0, 20.0, t_f), constant_schedule(1.0, t_f))


class TestControlRecords:
    def test_mismatched_domains_rejected(self) -> None:
        with pytest.raises(ScheduleError):
            TwoLevelControls.real(linear_schedule(0.0, 1.0, 1.0), constant_schedule(1.0, 2.0))

    def test_negative_coupling_modulus_rejected(self) -> None:
        with pytest.raises(ScheduleError):
            ComplexCouplingControls(
                constant_schedule(0.0, 1.0),
                linear_schedule(1.0, -1.0, 1.0),
                constant_schedule(0.0, 1.0),
            )

    def test_faquad_model_rejects_nonpositive_coupling(self) -> None:
        with pytest.raises(ValueError):
            FaquadTwoLevel(J=0.0, U_bias=1.0)

    def test_faquad_model_needs_schedule_for_hamiltonian(self) -> None:
        with pytest.raises(ScheduleError):
            FaquadTwoLevel(1.0, 22.3).hamiltonian()


class TestHamiltonians:
    def test_two_level_matrix_layout(self) -> None:
        c = TwoLevelControls(
            constant_schedule(2.0, 1.0), constant_schedule(3.0, 1.0), constant_schedule(1.0, 1.0)
        )
        h = two_level_hamiltonian(c, Units(hbar=2.0)).at(0.5)
        np.testing.assert_allclose(h, [[-2.0, 3.0 - 1.0j], [3.0 + 1.0j, 2.0]])

    def test_analytic_derivative_matches_finite_difference(self) -> None:
        c = TwoLevelControls.real(smooth_ramp(-5.0, 5.0, 2.0), smooth_ramp(1.0, 2.0, 2.0))
        h = two_level_hamiltonian(c)
        bare = type(h)(h.t_f, h.at)
        np.testing.assert_allclose(h.d_dt(0.7), bare.d_dt(0.7), atol=1e-8)

    def test_hermitian_families(self) -> None:
        t_f = 1.0
        pump, stokes = smooth_ramp(0.0, 1.0, t_f), smooth_ramp(1.0, 0.0, t_f)
        cc = ComplexCouplingControls(
            linear_schedule(-1.0, 1.0, t_f), constant_schedule(1.0, t_f), linear_schedule(0, 3, t_f)
        )
        for h in (
            lambda_system_hamiltonian(pump, stokes),
            complex_coupling_hamiltonian(cc),
            pauli_hamiltonian(pump, stokes, constant_schedule(0.5, t_f)),
        ):
            assert h.hermiticity_error() < 1e-12

    def test_lambda_system_has_three_levels(self) -> None:
        h = lambda_system_hamiltonian(smooth_ramp(0, 1, 1.0), smooth_ramp(1, 0, 1.0))
        assert h.dim == 3

    def test_sum_of_hamiltonians(self) -> None:
        a = constant_hamiltonian(SIGMA_X, 1.0)
        b = constant_hamiltonian(SIGMA_Z, 1.0)
        total = a + b
        np.testing.assert_allclose(total.at(0.3), SIGMA_X + SIGMA_Z)
        assert total.has_analytic_derivative

    def test_domain_enforced(self) -> None:
        h = constant_hamiltonian(SIGMA_X, 1.0)
        with pytest.raises(ScheduleDomainError):
            h.at(1.5)

    def test_unitary_inverse_engineering(self) -> None:
        # U = exp(-i w t sigma_x) is generated by H = hbar w sigma_x
        w = 1.3

        def unitary(t: float) -> np.ndarray:
            return math.cos(w * t) * np.eye(2) - 1j * math.sin(w * t) * SIGMA_X

        h = unitary_hamiltonian(unitary, 2.0)
        np.testing.assert_allclose(h.at(0.8), w * SIGMA_X, atol=1e-8)


class TestLewisLeach:
    def test_constant_trap_has_zero_residuals(self) -> None:
        t_f = 1.0
        spec = LewisLeachSpec(
            mass=1.0,
            force=constant_schedule(0.0, t_f),
            omega_sq=constant_schedule(4.0, t_f),
            rho=constant_schedule(1.0, t_f),
            qc=constant_schedule(0.0, t_f),
            gauge=constant_schedule(0.0, t_f),
            omega0=2.0,
        )
        erm, newt = spec.max_residuals(101)
        assert erm < 1e-12
        assert newt < 1e-12
        np.testing.assert_allclose(spec.potential([1.0, 2.0], 0.5), [2.0, 8.0])

    def test_scaling_must_stay_positive(self) -> None:
        t_f = 1.0
        zero = constant_schedule(0.0, t_f)
        with pytest.raises(ScheduleError):
            LewisLeachSpec(1.0, zero, zero, linear_schedule(1.0, -1.0, t_f), zero, zero, 1.0)


class TestSpectrum:
    def test_ascending_eigenvalues(self) -> None:
        vals, vecs = matrix_spectrum(SIGMA_Z + 0.1 * SIGMA_X)
        assert vals[0] < vals[1]
        np.testing.assert_allclose(vecs.conj().T @ vecs, np.eye(2), atol=1e-12)

    def test_degenerate_spectrum_raises(self) -> None:
        with pytest.raises(DegenerateSpectrumError) as err:
            matrix_spectrum(np.eye(2, dtype=complex), t=0.25)
        assert err.value.levels == (0, 1)

    def test_tracked_basis_is_continuous(self) -> None:
        h = two_level_hamiltonian(_lz())
        t = np.linspace(0.0, 1.0, 401)
        energies, bases = track_spectrum(h, t)
        assert energies.shape == (401, 2)
        overlaps = np.abs(np.einsum("tin,tin->tn", bases[:-1].conj(), bases[1:]))
        assert overlaps.min() > 0.9
        # consecutive overlaps are made real and positive by the phase fix
        phased = np.einsum("tin,tin->tn", bases[:-1].conj(), bases[1:])
        assert np.max(np.abs(phased.imag)) < 1e-10

    def test_ground_state_swaps_across_sweep(self) -> None:
        h = two_level_hamiltonian(_lz())
        _, bases = track_spectrum(h, np.linspace(0.0, 1.0, 401))
        # H = -delta/2 sigma_z: ground is |0> for delta < 0 and |1> after the crossing
        assert abs(bases[0][0, 0]) > 0.99
        assert abs(bases[-1][1, 0]) > 0.99


class TestSpinPrecession:
    def test_field_along_static_spin(self) -> None:
        t_f = 1.0
        spin = [constant_schedule(0.0, t_f), constant_schedule(0.0, t_f), constant_schedule(1.0, t_f)]
        b = spin_precession_field(spin, constant_schedule(2.0, t_f), 1.0)
        np.testing.assert_allclose(b(0.5), [0.0, 0.0, 2.0])

    def test_zero_gyromagnetic_ratio_rejected(self) -> None:
        t_f = 1.0
        spin = [constant_schedule(1.0, t_f)] * 3
        with pytest.raises(ValueError):
            spin_precession_field(spin, constant_schedule(1.0, t_f), 0.0)
