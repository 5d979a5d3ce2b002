import math

import numpy as np
import pytest

from core.faquad import (
    LinearSweepModel,
    adiabaticity_parameter,
    constant_bias_schedule,
    faquad_schedule,
    fidelity_scan,
    linear_bias_schedule,
    local_adiabatic_schedule,
    revival_period,
    transfer_fidelity,
    uniform_adiabatic_schedule,
)
from core.models import SIGMA_Z, FaquadTwoLevel
from core.units import GapCollapseError, Settings, SingularPointError

J, U, DELTA0 = 1.0, 22.3, 66.7


def _model() -> FaquadTwoLevel:
    return FaquadTwoLevel(J, U)


def _flat_gap() -> LinearSweepModel:
    # identity sweep: the gap stays 2 and the coupling element vanishes
    return LinearSweepModel(SIGMA_Z, np.eye(2, dtype=complex))


class TestFaquadSchedule:
    def test_endpoints(self) -> None:
        res = faquad_schedule(_model(), DELTA0, 0.0, 10.0)
        assert res.lam.eval(0.0) == pytest.approx(DELTA0, abs=1e-9)
        assert res.lam.eval(10.0) == pytest.approx(0.0, abs=1e-9)
        assert res.t_f == 10.0
        assert res.kind == "faquad"

    def test_adiabaticity_parameter_is_constant(self) -> None:
        t_f = 10.0
        res = faquad_schedule(_model(), DELTA0, 0.0, t_f)
        times = res.lam.breaks[::100] * t_f
        values = np.array([adiabaticity_parameter(_model(), res.lam, float(t)) for t in times])
        assert np.std(values) / np.mean(values) < 1e-5
        assert np.mean(values) == pytest.approx(res.c, rel=1e-8)

    def test_slows_down_at_avoided_crossing(self) -> None:
        t_f = 10.0
        res = faquad_schedule(_model(), DELTA0, 0.0, t_f)
        ts = np.linspace(0.0, t_f, 2001)
        lam = res.lam.eval_array(ts)
        crossing = float(ts[np.argmin(np.abs(lam - U))])
        assert abs(res.lam.eval(0.0, 1)) > 10.0 * abs(res.lam.eval(crossing, 1))

    def test_constant_scales_inversely_with_duration(self) -> None:
        short = faquad_schedule(_model(), DELTA0, 0.0, 2.0)
        long = faquad_schedule(_model(), DELTA0, 0.0, 8.0)
        assert short.c == pytest.approx(4.0 * long.c, rel=1e-12)
        assert short.phi_bar == pytest.approx(long.phi_bar, rel=1e-12)

    def test_revival_time_matches_sampled_period(self) -> None:
        res = faquad_schedule(_model(), DELTA0, 0.0, 10.0)
        assert revival_period(_model(), res.lam) == pytest.approx(res.revival_time, rel=1e-3)

    def test_vanishing_coupling_is_singular(self) -> None:
        with pytest.raises(SingularPointError):
            faquad_schedule(_flat_gap(), 0.0, 1.0, 1.0)

    def test_gap_collapse_detected(self) -> None:
        model = LinearSweepModel(np.zeros((2, 2), dtype=complex), SIGMA_Z)
        with pytest.raises(GapCollapseError):
            faquad_schedule(model, -1.0, 1.0, 1.0)

    def test_invalid_requests(self) -> None:
        with pytest.raises(ValueError):
            faquad_schedule(_model(), DELTA0, 0.0, 0.0)
        with pytest.raises(ValueError):
            faquad_schedule(_model(), 1.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            faquad_schedule(_model(), DELTA0, 0.0, 1.0, levels=(1, 0))

    def test_non_hermitian_model_rejected(self) -> None:
        with pytest.raises(ValueError):
            LinearSweepModel(np.array([[0, 1], [0, 0]], dtype=complex), SIGMA_Z)


class TestComparators:
    def test_local_adiabatic_is_linear_for_flat_gap(self) -> None:
        res = local_adiabatic_schedule(_flat_gap(), 0.0, 2.0, 4.0)
        ts = np.linspace(0.0, 4.0, 17)
        np.testing.assert_allclose(res.lam.eval_array(ts), 0.5 * ts, atol=1e-10)

    def test_uniform_schedule_regularized_without_gap_slope(self) -> None:
        res = uniform_adiabatic_schedule(_flat_gap(), 0.0, 2.0, 4.0)
        assert res.regularized
        assert res.diagnostics
        np.testing.assert_allclose(res.lam.eval(2.0), 1.0, atol=1e-10)

    def test_local_differs_from_faquad(self) -> None:
        fq = faquad_schedule(_model(), DELTA0, 0.0, 10.0)
        la = local_adiabatic_schedule(_model(), DELTA0, 0.0, 10.0)
        ts = np.linspace(0.0, 10.0, 101)
        assert np.max(np.abs(fq.lam.eval_array(ts) - la.lam.eval_array(ts))) > 1.0

    def test_reference_schedules(self) -> None:
        assert linear_bias_schedule(DELTA0, 0.0, 2.0).eval(1.0) == pytest.approx(DELTA0 / 2)
        assert constant_bias_schedule(U, 2.0).eval(1.3) == pytest.approx(U)

    def test_flat_gap_revival_period(self) -> None:
        lam = linear_bias_schedule(0.0, 1.0, 3.0)
        assert revival_period(_flat_gap(), lam) == pytest.approx(math.pi, rel=1e-10)


class TestTransfer:
    def test_peak_at_revival_time(self) -> None:
        period = faquad_schedule(_model(), DELTA0, 0.0, 1.0).revival_time
        at_peak = faquad_schedule(_model(), DELTA0, 0.0, period).lam
        off_peak = faquad_schedule(_model(), DELTA0, 0.0, 1.5 * period).lam
        fid_peak = transfer_fidelity(_model(), at_peak, dt=period / 4000)
        fid_off = transfer_fidelity(_model(), off_peak, dt=period / 4000)
        assert fid_peak >= 0.99
        assert fid_off < fid_peak

    def test_faquad_beats_linear_ramp(self) -> None:
        t_f = faquad_schedule(_model(), DELTA0, 0.0, 1.0).revival_time
        fq = faquad_schedule(_model(), DELTA0, 0.0, t_f).lam
        lin = linear_bias_schedule(DELTA0, 0.0, t_f)
        dt = t_f / 4000
        assert transfer_fidelity(_model(), fq, dt=dt) > transfer_fidelity(_model(), lin, dt=dt)

    @pytest.mark.slow
    def test_scan_maximum_near_revival_time(self) -> None:
        base = faquad_schedule(_model(), DELTA0, 0.0, 1.0)
        period = base.revival_time
        values = np.linspace(0.5 * period, 1.5 * period, 41)
        ts, fids = fidelity_scan(
            _model(),
            base.lam.stretched,
            values,
            dt=period / 2000,
            settings=Settings(threads=2),
        )
        np.testing.assert_array_equal(ts, values)
        best = float(ts[int(np.argmax(fids))])
        assert abs(best - period) <= 0.05 * period
        assert float(fids.max()) >= 0.99
