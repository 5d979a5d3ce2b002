import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from core.fastforward import (
    DensityPath,
    continuity_residual,
    ff_initial_state,
    ff_phase,
    ff_potential,
    hydrodynamic_velocity,
    potential_field,
    quantum_pressure,
    scaling_path,
    stationary_path,
    translating_path,
    truncate_nodes,
)
from core.propagators import GridWavefunction, make_grid, propagate_grid
from core.schedules import smooth_ramp
from core.units import ScheduleDomainError


def gaussian(x: np.ndarray) -> np.ndarray:
    """Ground-state amplitude of a unit harmonic trap."""
    return np.asarray(math.pi**-0.25 * np.exp(-0.5 * x**2))


def _window(path: DensityPath, t: float, floor: float = 1e-4) -> np.ndarray:
    dens = path.rho(t) ** 2
    return np.asarray(dens > floor * dens.max())


class TestDensityPath:
    def test_grid_must_be_uniform(self) -> None:
        x = np.concatenate([np.linspace(-1, 0, 8), np.linspace(0.1, 3, 8)])
        with pytest.raises(ValueError):
            stationary_path(x, gaussian, 1.0)

    def test_time_domain_enforced(self) -> None:
        path = stationary_path(make_grid(16.0, 256), gaussian, 1.0)
        with pytest.raises(ScheduleDomainError):
            path.rho(1.5)

    def test_normalized_profile(self) -> None:
        path = translating_path(make_grid(20.0, 512), gaussian, smooth_ramp(0.0, 1.0, 2.0))
        assert path.norm_error() < 1e-8

    def test_reference_point_nearest_origin(self) -> None:
        path = stationary_path(make_grid(16.0, 256), gaussian, 1.0)
        assert path.x[path.ref_index] == pytest.approx(0.0)


class TestVelocity:
    def test_translation_moves_rigidly(self) -> None:
        x0 = smooth_ramp(0.0, 1.0, 2.0)
        path = translating_path(make_grid(16.0, 2048), gaussian, x0)
        t = 0.7
        u = hydrodynamic_velocity(path, t)
        w = _window(path, t)
        np.testing.assert_allclose(u[w], x0.eval(t, 1), atol=1e-6)

    def test_scaling_velocity_is_linear(self) -> None:
        b = smooth_ramp(1.0, 2.0, 2.0)
        path = scaling_path(make_grid(24.0, 2048), gaussian, b)
        t = 0.9
        u = hydrodynamic_velocity(path, t)
        w = _window(path, t)
        expected = path.x * b.eval(t, 1) / b.eval(t)
        np.testing.assert_allclose(u[w], expected[w], atol=1e-6)

    def test_stationary_path_has_no_flow(self) -> None:
        path = stationary_path(make_grid(16.0, 512), gaussian, 1.0)
        u = hydrodynamic_velocity(path, 0.5)
        assert np.max(np.abs(u[_window(path, 0.5)])) < 1e-8


class TestContinuity:
    @pytest.mark.parametrize("t", [0.0, 0.5, 1.3, 2.0])
    def test_translation_residual(self, t: float) -> None:
        path = translating_path(make_grid(16.0, 2048), gaussian, smooth_ramp(0.0, 1.0, 2.0))
        assert continuity_residual(path, t) < 1e-6

    def test_scaling_residual(self) -> None:
        path = scaling_path(make_grid(24.0, 2048), gaussian, smooth_ramp(1.0, 2.0, 2.0))
        for t in (0.2, 1.0, 1.8):
            assert continuity_residual(path, t) < 1e-6


class TestPotential:
    def test_translation_limit(self) -> None:
        # V = U(x - x0) - m x0'' x + [m x0'' x_ref - hbar w/2 - m x0'^2/2]
        x0 = smooth_ramp(0.0, 1.0, 2.0)
        path = translating_path(make_grid(16.0, 2048), gaussian, x0)
        t = 0.7
        v = ff_potential(path, 1.0, t)
        x = path.x
        acc, vel = x0.eval(t, 2), x0.eval(t, 1)
        const = acc * x[path.ref_index] - 0.5 - 0.5 * vel**2
        expected = 0.5 * (x - x0.eval(t)) ** 2 - acc * x + const
        w = _window(path, t)
        assert np.max(np.abs(v[w] - expected[w])) < 1e-6

    def test_stationary_ground_state_recovers_trap(self) -> None:
        path = stationary_path(make_grid(16.0, 512), gaussian, 1.0)
        v = ff_potential(path, 1.0, 0.5)
        w = _window(path, 0.5)
        np.testing.assert_allclose(v[w], 0.5 * path.x[w] ** 2 - 0.5, atol=1e-8)

    def test_quantum_pressure_of_gaussian(self) -> None:
        path = stationary_path(make_grid(16.0, 512), gaussian, 1.0)
        q = quantum_pressure(path, 0.0)
        np.testing.assert_allclose(q, path.x**2 - 1.0, atol=1e-7)

    def test_truncation(self) -> None:
        np.testing.assert_allclose(truncate_nodes([-5.0, 0.5, 9.0], 2.0), [-2.0, 0.5, 2.0])
        with pytest.raises(ValueError):
            truncate_nodes([1.0], 0.0)

    def test_sampled_field_shape(self) -> None:
        path = translating_path(make_grid(16.0, 256), gaussian, smooth_ramp(0.0, 1.0, 2.0))
        ts, x, v = potential_field(path, 1.0, np.linspace(0.0, 2.0, 5))
        assert v.shape == (5, 256)
        assert np.array_equal(x, path.x)
        assert np.all(np.isfinite(v))


class TestPhase:
    def test_translation_phase_is_momentum_kick(self) -> None:
        x0 = smooth_ramp(0.0, 1.0, 2.0)
        path = translating_path(make_grid(16.0, 2048), gaussian, x0)
        t = 1.0
        phase = ff_phase(path, 1.0, t)
        w = _window(path, t)
        expected = x0.eval(t, 1) * (path.x - path.x[path.ref_index])
        np.testing.assert_allclose(phase[w], expected[w], atol=1e-6)

    def test_initial_state_is_normalized(self) -> None:
        path = translating_path(make_grid(16.0, 512), gaussian, smooth_ramp(0.0, 1.0, 2.0))
        psi = ff_initial_state(path, 1.0)
        assert float(trapezoid(np.abs(psi) ** 2, path.x)) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.slow
class TestSelfConsistency:
    def test_propagation_reproduces_target_state(self) -> None:
        t_f = 2.0
        path = translating_path(make_grid(16.0, 512, center=0.5), gaussian, smooth_ramp(0.0, 1.0, t_f))
        psi0 = GridWavefunction(path.x, ff_initial_state(path, 1.0))
        final = propagate_grid(
            lambda xs, t: ff_potential(path, 1.0, min(t, t_f)), psi0, t_f, t_f / 1000
        )
        target = path.rho(t_f) * np.exp(1j * ff_phase(path, 1.0, t_f))
        error = math.sqrt(float(trapezoid(np.abs(final.psi - target) ** 2, path.x)))
        assert error < 1e-4
