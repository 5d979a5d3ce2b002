import math

import numpy as np
import pytest

from core.schedules import (
    RESAMPLE_POINTS,
    FunctionSchedule,
    PolySchedule,
    TrigSchedule,
    _check_conditions,
    constant_schedule,
    fd_derivative,
    linear_schedule,
    make_poly_schedule,
    make_trig_schedule,
    resample,
    schedule_from_dict,
    smooth_ramp,
)
from core.units import ScheduleDomainError, ScheduleError, StaError

QUINTIC = [(0.0, 0, 0.0), (2.0, 0, 1.0), (0.0, 1, 0.0), (2.0, 1, 0.0), (0.0, 2, 0.0), (2.0, 2, 0.0)]


class TestPolySchedule:
    def test_smooth_ramp_boundaries(self) -> None:
        ramp = smooth_ramp(0.0, 1.0, 2.0)
        assert ramp.eval(0.0) == pytest.approx(0.0, abs=1e-14)
        assert ramp.eval(2.0) == pytest.approx(1.0, abs=1e-14)
        for order in (1, 2):
            assert ramp.eval(0.0, order) == pytest.approx(0.0, abs=1e-12)
            assert ramp.eval(2.0, order) == pytest.approx(0.0, abs=1e-12)

    def test_smooth_ramp_is_symmetric(self) -> None:
        ramp = smooth_ramp(0.0, 1.0, 2.0)
        assert ramp.eval(1.0) == pytest.approx(0.5, abs=1e-14)
        assert ramp.eval(0.5) + ramp.eval(1.5) == pytest.approx(1.0, abs=1e-14)

    def test_time_derivatives_scale_with_duration(self) -> None:
        ramp = smooth_ramp(0.0, 1.0, 4.0)
        # 10 s^3 - 15 s^4 + 6 s^5 has slope 15/8 at s = 1/2
        assert ramp.eval(2.0, 1) == pytest.approx(15.0 / 8.0 / 4.0, rel=1e-12)

    def test_derivative_schedule_matches_eval(self) -> None:
        ramp = smooth_ramp(-1.0, 3.0, 1.5)
        d = ramp.derivative(2)
        t = np.linspace(0.0, 1.5, 11)
        np.testing.assert_allclose(d.eval_array(t), ramp.eval_array(t, 2), atol=1e-12)

    def test_linear_and_constant(self) -> None:
        lin = linear_schedule(2.0, 4.0, 1.0)
        assert lin.eval(0.25) == pytest.approx(2.5)
        assert lin.eval(0.3, 1) == pytest.approx(2.0)
        assert lin.eval(0.3, 2) == pytest.approx(0.0)
        assert constant_schedule(7.0, 3.0).eval(2.9) == pytest.approx(7.0)

    def test_addition(self) -> None:
        a = smooth_ramp(0.0, 1.0, 2.0)
        b = linear_schedule(1.0, 0.0, 2.0)
        total = a + b + 1.0
        t = np.linspace(0.0, 2.0, 7)
        np.testing.assert_allclose(total.eval_array(t), a.eval_array(t) + b.eval_array(t) + 1.0)

    def test_addition_rejects_mismatched_domains(self) -> None:
        with pytest.raises(ScheduleError):
            smooth_ramp(0.0, 1.0, 2.0) + smooth_ramp(0.0, 1.0, 3.0)

    def test_stretched_keeps_shape(self) -> None:
        ramp = smooth_ramp(0.0, 1.0, 2.0)
        longer = ramp.stretched(8.0)
        assert longer.t_f == 8.0
        assert longer.eval(2.0) == pytest.approx(ramp.eval(0.5), abs=1e-14)
        assert longer.eval(2.0, 1) == pytest.approx(ramp.eval(0.5, 1) / 4.0, rel=1e-12)

    def test_scaled(self) -> None:
        ramp = smooth_ramp(0.0, 1.0, 2.0).scaled(-3.0)
        assert ramp.eval(2.0) == pytest.approx(-3.0)

    def test_coefficients_of_single_segment(self) -> None:
        lin = linear_schedule(2.0, 5.0, 1.0)
        np.testing.assert_allclose(lin.coefficients, [2.0, 3.0])


class TestBoundaryConditions:
    def test_conflicting_conditions_rejected(self) -> None:
        with pytest.raises(ScheduleError):
            make_poly_schedule([(0.0, 0, 0.0), (0.0, 0, 1.0), (1.0, 0, 1.0)], 1.0)

    def test_interior_condition_rejected(self) -> None:
        with pytest.raises(ScheduleError):
            make_poly_schedule([(0.0, 0, 0.0), (0.5, 0, 1.0)], 1.0)

    def test_single_condition_rejected(self) -> None:
        with pytest.raises(ScheduleError):
            make_poly_schedule([(0.0, 0, 0.0)], 1.0)

    def test_nonpositive_duration_rejected(self) -> None:
        with pytest.raises(ScheduleError):
            make_poly_schedule(QUINTIC, 0.0)

    def test_free_coefficients_keep_boundary_data(self) -> None:
        base = make_poly_schedule(QUINTIC, 2.0)
        shaped = make_poly_schedule(QUINTIC, 2.0, free_coeffs=[0.3, -0.2])
        for t in (0.0, 2.0):
            for order in range(3):
                assert shaped.eval(t, order) == pytest.approx(base.eval(t, order), abs=1e-10)
        assert abs(shaped.eval(1.0) - base.eval(1.0)) > 1e-3

    def test_conditions_hold_to_roundoff(self) -> None:
        ramp = make_poly_schedule(QUINTIC, 2.0)
        assert ramp.eval(2.0) == pytest.approx(1.0, abs=1e-12)
        for order in (1, 2):
            assert abs(ramp.eval(2.0, order)) < 1e-12

    def test_near_miss_is_rejected(self) -> None:
        # smoothstep 10 s^3 - 15 s^4 + 6 s^5, its terms sum to 31 at s = 1
        coeffs = np.array([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])
        smoothstep = PolySchedule.from_coefficients(1.0, coeffs)
        _check_conditions(smoothstep, [(0, 0, 0.0), (1, 0, 1.0)], coeffs)
        with pytest.raises(ScheduleError):
            _check_conditions(smoothstep, [(0, 0, 0.0), (1, 0, 1.0 + 1e-10)], coeffs)

    def test_trig_interpolant_meets_conditions(self) -> None:
        conds = [(0.0, 0, 0.0), (3.0, 0, 1.0), (0.0, 1, 0.0), (3.0, 1, 0.0)]
        trig = make_trig_schedule(conds, 3.0)
        assert isinstance(trig, TrigSchedule)
        assert trig.eval(0.0) == pytest.approx(0.0, abs=1e-10)
        assert trig.eval(3.0) == pytest.approx(1.0, abs=1e-10)
        assert trig.eval(0.0, 1) == pytest.approx(0.0, abs=1e-10)
        assert trig.eval(3.0, 1) == pytest.approx(0.0, abs=1e-10)

    def test_schedule_errors_are_value_errors(self) -> None:
        assert issubclass(ScheduleError, ValueError)
        assert issubclass(ScheduleError, StaError)


class TestDomain:
    def test_outside_domain_raises(self) -> None:
        ramp = smooth_ramp(0.0, 1.0, 2.0)
        with pytest.raises(ScheduleDomainError):
            ramp.eval(-0.1)
        with pytest.raises(ScheduleDomainError):
            ramp.eval(2.1)

    def test_roundoff_at_endpoint_tolerated(self) -> None:
        ramp = smooth_ramp(0.0, 1.0, 2.0)
        assert ramp.eval(2.0 * (1.0 + 1e-14)) == pytest.approx(1.0)

    def test_nan_time_raises(self) -> None:
        with pytest.raises(ScheduleDomainError):
            smooth_ramp(0.0, 1.0, 2.0).eval(float("nan"))

    def test_order_above_four_rejected(self) -> None:
        with pytest.raises(ScheduleError):
            smooth_ramp(0.0, 1.0, 2.0).eval(1.0, 5)


class TestFunctionSchedule:
    def test_analytic_orders_used_directly(self) -> None:
        sched = FunctionSchedule(1.0, [np.sin, np.cos])
        assert sched.analytic_orders == 1
        assert sched.eval(0.4, 1) == pytest.approx(math.cos(0.4), abs=1e-15)

    def test_finite_difference_orders(self) -> None:
        sched = FunctionSchedule(1.0, [np.sin])
        for t in (0.0, 0.5, 1.0):
            assert sched.eval(t, 1) == pytest.approx(math.cos(t), abs=1e-8)
            assert sched.eval(t, 2) == pytest.approx(-math.sin(t), abs=1e-6)

    def test_empty_derivatives_rejected(self) -> None:
        with pytest.raises(ScheduleError):
            FunctionSchedule(1.0, [])

    def test_fd_derivative_of_matrix_function(self) -> None:
        def func(t: float) -> np.ndarray:
            return np.array([[t**2, 0.0], [0.0, math.exp(t)]])

        d = fd_derivative(func, 0.0, 1, 1e-3, 0.0, 1.0)
        np.testing.assert_allclose(d, [[0.0, 0.0], [0.0, 1.0]], atol=1e-9)


class TestSerialization:
    def test_poly_round_trip_is_exact(self) -> None:
        ramp = smooth_ramp(-2.0, 5.0, 3.0)
        back = schedule_from_dict(ramp.to_dict())
        t = np.linspace(0.0, 3.0, 31)
        np.testing.assert_allclose(back.eval_array(t), ramp.eval_array(t), atol=1e-14)

    def test_trig_round_trip(self) -> None:
        trig = TrigSchedule(2.0, [("const", 0, 1.0), ("cos", 1, -0.5), ("sin", 3, 0.25)])
        back = schedule_from_dict(trig.to_dict())
        assert isinstance(back, TrigSchedule)
        assert back.eval(0.7, 2) == pytest.approx(trig.eval(0.7, 2), rel=1e-14)

    def test_function_schedule_resampled_within_tolerance(self) -> None:
        sched = FunctionSchedule(1.0, [np.sin, np.cos])
        back = schedule_from_dict(sched.to_dict())
        assert isinstance(back, PolySchedule)
        t = np.linspace(0.0, 1.0, 97)
        np.testing.assert_allclose(back.eval_array(t), np.sin(t), atol=1e-10)

    def test_resampled_schedule_is_marked(self) -> None:
        data = FunctionSchedule(1.0, [np.sin, np.cos], name="drive").to_dict()
        assert data["resampled"] is True
        assert data["samples"] == RESAMPLE_POINTS
        assert data["source_family"] == "function"
        assert isinstance(schedule_from_dict(data), PolySchedule)
        assert "resampled" not in smooth_ramp(0.0, 1.0, 1.0).to_dict()

    def test_resample_returns_polynomials_unchanged(self) -> None:
        ramp = smooth_ramp(0.0, 1.0, 1.0)
        assert resample(ramp) is ramp

    def test_malformed_data_rejected(self) -> None:
        with pytest.raises(ScheduleError):
            schedule_from_dict({"family": "ppoly"})
        with pytest.raises(ScheduleError):
            schedule_from_dict({"t_f": 1.0, "family": "bezier"})
