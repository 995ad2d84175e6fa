"""Simulator tests: plant stepping, perturbation models, the reference
profile, trajectory logging and CSV emission, and the closed-loop properties
(determinism, decay floor, disturbance-integral consistency, dt refinement).
"""

import io
import math

import numpy as np
import pytest

from safefilter.config import ScenarioConfig, bundled_config_path, load_config
from safefilter.qcqp import NumericalFailureError
from safefilter.sim import (
    CSV_HEADER,
    STATUS_WORDS,
    BaselineGain,
    DelayLine,
    FirstOrderLag,
    NoPerturbation,
    PlantState,
    ReferenceProfile,
    RunSummary,
    SimulationAborted,
    TrajectoryLog,
    apply_uncertainty,
    baseline_control,
    build_channels,
    make_uncertainty,
    run_closed_loop,
    step_plant,
    total_variation,
    trajectory_csv_text,
    write_trajectory_csv,
)

# Shifted certificate filter used by the runtime constraint; any stable
# first-order realization works for the plumbing tests below.
COEFFS = {"iqc_a": -16.98, "iqc_b": 6.2, "iqc_c": -5.7, "iqc_d": 2.84}


class TestBaselineControl:
    def test_zero_tracking_error_gives_zero_command(self):
        gain = BaselineGain.default()
        state = PlantState(np.array([3.0, -1.0]), np.zeros(2), 0.0)
        u = baseline_control(gain, state, np.array([3.0, -1.0]))
        assert np.array_equal(u, np.zeros(2))

    def test_initial_condition_matches_ramp_start(self):
        gain = BaselineGain.default()
        state = PlantState(np.array([-10.0, 0.0]), np.zeros(2), 0.0)
        u = baseline_control(gain, state, np.array([-10.0, 0.0]))
        assert np.array_equal(u, np.zeros(2))

    def test_hand_computed_command(self):
        # position error 1 on x, velocity 1 on x: 1*1 - 1.94*1 = -0.94
        gain = BaselineGain.default()
        state = PlantState(np.zeros(2), np.array([1.0, 0.0]), 0.0)
        u = baseline_control(gain, state, np.array([1.0, 0.0]))
        np.testing.assert_allclose(u, [-0.94, 0.0], rtol=0, atol=1e-15)

    def test_matches_explicit_matrix_product(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            k = rng.uniform(-2.0, 2.0, size=(2, 4))
            p, v, r = rng.uniform(-3.0, 3.0, size=(3, 2))
            state = PlantState(p, v, 0.0)
            expected = k @ np.concatenate([r - p, -v])
            got = baseline_control(BaselineGain(k), state, r)
            np.testing.assert_allclose(got, expected, rtol=1e-14, atol=1e-14)

    def test_gain_validation(self):
        with pytest.raises(ValueError, match="2x4"):
            BaselineGain(np.eye(2))
        with pytest.raises(ValueError, match="finite"):
            BaselineGain(np.full((2, 4), np.nan))
        gain = BaselineGain.default()
        with pytest.raises(ValueError):
            gain.k[0, 0] = 99.0


class TestStepPlant:
    def test_coasting_without_input(self):
        state = PlantState(np.array([1.0, 2.0]), np.array([0.5, -0.25]), 3.0)
        nxt = step_plant(state, np.zeros(2), 0.5)
        np.testing.assert_array_equal(nxt.p, [1.25, 1.875])
        np.testing.assert_array_equal(nxt.v, state.v)
        assert nxt.t == 3.5

    def test_closed_form_step(self):
        state = PlantState(np.zeros(2), np.zeros(2), 0.0)
        nxt = step_plant(state, np.array([1.0, 0.0]), 0.1)
        np.testing.assert_allclose(nxt.p, [0.005, 0.0], rtol=1e-15, atol=0)
        np.testing.assert_allclose(nxt.v, [0.1, 0.0], rtol=1e-15, atol=0)

    def test_two_half_steps_compose_exactly(self):
        # Dyadic values make every product exact, so the held-input flow must
        # compose with no splitting error at all.
        state = PlantState(np.array([1.0, -2.0]), np.array([0.5, 0.25]), 0.0)
        a = np.array([2.0, -4.0])
        full = step_plant(state, a, 0.25)
        halved = step_plant(step_plant(state, a, 0.125), a, 0.125)
        assert np.array_equal(full.p, halved.p)
        assert np.array_equal(full.v, halved.v)
        assert full.t == halved.t

    def test_rejects_nonpositive_dt(self):
        state = PlantState(np.zeros(2), np.zeros(2), 0.0)
        for dt in (0.0, -0.1):
            with pytest.raises(ValueError, match="dt"):
                step_plant(state, np.zeros(2), dt)

    def test_state_validation(self):
        with pytest.raises(ValueError, match="shape"):
            PlantState(np.zeros(3), np.zeros(2), 0.0)
        with pytest.raises(ValueError, match="finite"):
            PlantState(np.zeros(2), np.array([np.inf, 0.0]), 0.0)


class TestPerturbationModels:
    def test_none_is_identity(self):
        model = make_uncertainty("none", dt=1e-3)
        assert isinstance(model, NoPerturbation)
        u = np.array([0.3, -0.7])
        out = apply_uncertainty(model, u)
        assert np.array_equal(out, u)
        out[0] = 99.0  # returned array is a copy, not an alias
        assert u[0] == 0.3

    def test_delay_outputs_zero_before_one_full_delay(self):
        line = DelayLine(3)
        outs = [line.apply(np.array([k + 1.0, -(k + 1.0)])) for k in range(6)]
        for k in range(3):
            assert np.array_equal(outs[k], np.zeros(2))
        for k in range(3, 6):
            assert np.array_equal(outs[k], [k - 2.0, -(k - 2.0)])

    def test_zero_delay_is_passthrough(self):
        line = DelayLine(0)
        u = np.array([1.5, -2.5])
        assert np.array_equal(line.apply(u), u)
        assert np.array_equal(line.apply(np.zeros(2)), np.zeros(2))

    def test_delay_rejects_negative_steps(self):
        with pytest.raises(ValueError, match=">= 0"):
            DelayLine(-1)

    def test_tau_rounds_to_nearest_sample(self):
        model = make_uncertainty("delay", dt=1e-3, tau=0.13)
        assert isinstance(model, DelayLine)
        assert model.delay_steps == 130
        assert make_uncertainty("delay", dt=1e-3, tau=2.6e-3).delay_steps == 3

    def test_lag_first_output_is_zero(self):
        lag = FirstOrderLag(10.0, 0.01)
        assert np.array_equal(lag.apply(np.array([5.0, -5.0])), np.zeros(2))

    def test_lag_state_update_is_exact(self):
        lag = FirstOrderLag(3.0, 0.01)
        u = np.array([2.0, -1.0])
        lag.apply(u)
        np.testing.assert_allclose(
            lag.apply(u), (1.0 - math.exp(-0.03)) * u, rtol=1e-15
        )

    def test_lag_converges_to_unit_dc_gain(self):
        lag = FirstOrderLag(10.0, 0.01)
        u = np.ones(2)
        for _ in range(1500):
            out = lag.apply(u)
        np.testing.assert_allclose(out, 1.0, atol=1e-12)

    def test_lag_validation(self):
        with pytest.raises(ValueError, match="pole"):
            FirstOrderLag(0.0, 0.01)
        with pytest.raises(ValueError, match="dt"):
            FirstOrderLag(10.0, -0.01)

    def test_make_uncertainty_validation(self):
        with pytest.raises(ValueError, match="unknown uncertainty mode"):
            make_uncertainty("wind", dt=1e-3)
        with pytest.raises(ValueError, match="tau"):
            make_uncertainty("delay", dt=1e-3)
        with pytest.raises(ValueError, match="tau"):
            make_uncertainty("delay", dt=1e-3, tau=-0.1)
        with pytest.raises(ValueError, match="pole"):
            make_uncertainty("actuator", dt=1e-3)


class TestReferenceProfile:
    def test_midpoint_of_ramp(self):
        ref = ReferenceProfile(np.array([-10.0, 0.0]), np.array([10.0, 0.0]))
        np.testing.assert_array_equal(ref.position(22.5), [0.0, 0.0])

    def test_holds_goal_after_ramp(self):
        ref = ReferenceProfile(np.array([-10.0, 0.0]), np.array([10.0, 0.0]))
        np.testing.assert_array_equal(ref.position(45.0), [10.0, 0.0])
        np.testing.assert_array_equal(ref.position(60.0), [10.0, 0.0])

    def test_extrapolates_without_hold(self):
        ref = ReferenceProfile(
            np.array([-10.0, 0.0]), np.array([10.0, 0.0]), hold_after=False
        )
        np.testing.assert_array_equal(ref.position(90.0), [30.0, 0.0])

    def test_clamps_negative_time_to_start(self):
        ref = ReferenceProfile(np.array([-10.0, 0.0]), np.array([10.0, 0.0]))
        np.testing.assert_array_equal(ref.position(-2.0), [-10.0, 0.0])
        np.testing.assert_array_equal(ref.position(0.0), [-10.0, 0.0])

    def test_validation(self):
        with pytest.raises(ValueError, match="ramp_duration"):
            ReferenceProfile(np.zeros(2), np.ones(2), ramp_duration=0.0)
        with pytest.raises(ValueError, match="shape"):
            ReferenceProfile(np.zeros(3), np.ones(2))


class TestTotalVariation:
    def test_examples(self):
        assert total_variation(np.array([])) == 0.0
        assert total_variation(np.array([3.0])) == 0.0
        assert total_variation(np.array([0.0, 1.0, 0.0, 1.0])) == 3.0

    def test_matches_numpy_oracle(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=300)
        assert total_variation(x) == pytest.approx(
            float(np.sum(np.abs(np.diff(x)))), rel=1e-15
        )


class TestTrajectoryLog:
    def test_disturbance_is_applied_minus_commanded(self):
        log = TrajectoryLog(3)
        log.ax[:] = [1.0, 2.0, 3.0]
        log.ux[:] = [0.5, 0.5, 0.5]
        log.ay[:] = [0.0, -1.0, 0.0]
        log.uy[:] = [1.0, 1.0, 1.0]
        np.testing.assert_array_equal(log.wx, [0.5, 1.5, 2.5])
        np.testing.assert_array_equal(log.wy, [-1.0, -2.0, -1.0])

    def test_record_round_trip(self):
        log = TrajectoryLog(3)
        for j, name in enumerate(TrajectoryLog._FLOAT_COLS):
            getattr(log, name)[1] = float(j + 1)
        log.status_code[1] = 1
        rec = log.record(1)
        assert rec.t == 1.0
        np.testing.assert_array_equal(rec.p, [2.0, 3.0])
        np.testing.assert_array_equal(rec.v, [4.0, 5.0])
        np.testing.assert_array_equal(rec.r, [6.0, 7.0])
        np.testing.assert_array_equal(rec.u_baseline, [8.0, 9.0])
        np.testing.assert_array_equal(rec.u_safe, [10.0, 11.0])
        np.testing.assert_array_equal(rec.u_plant_input, [12.0, 13.0])
        assert (rec.h, rec.hdot, rec.htilde) == (14.0, 15.0, 16.0)
        np.testing.assert_array_equal(rec.x_f, [17.0, 18.0])
        assert rec.constraint_status == "active"
        assert rec.iqc_running_integral == 19.0

    def test_truncate(self):
        log = TrajectoryLog(5)
        log.t[:] = np.arange(5.0)
        log.truncate(2)
        assert len(log) == 2
        np.testing.assert_array_equal(log.t, [0.0, 1.0])
        assert log.status_code.shape == (2,)
        with pytest.raises(ValueError, match="truncate"):
            log.truncate(3)

    def test_status_words(self):
        log = TrajectoryLog(4)
        log.status_code[:] = [0, 1, 2, 3]
        words = [log.status_at(i) for i in range(4)]
        assert words == list(STATUS_WORDS)

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="at least one step"):
            TrajectoryLog(0)


class TestBuildChannels:
    def test_nominal_modes_have_no_channels(self):
        assert build_channels(ScenarioConfig()) is None
        assert build_channels(ScenarioConfig(filter_mode="off")) is None

    def test_coefficients_source(self):
        cfg = ScenarioConfig(
            filter_mode="robust-ecbf",
            iqc_source="coefficients",
            lambda_x=0.2,
            lambda_y=0.3,
            **COEFFS,
        )
        channels = build_channels(cfg)
        assert [ch.channel_index for ch in channels] == [0, 1]
        assert [ch.iqc.lam for ch in channels] == [0.2, 0.3]
        for ch in channels:
            f = ch.iqc.filter
            assert f.a[0, 0] == -16.98
            assert f.b[0, 0] == 6.2
            assert f.c[0, 0] == -5.7
            assert f.d[0, 0] == 2.84
            assert ch.iqc.alpha == 5.0
            assert np.array_equal(ch.x_f, [0.0])

    def test_missing_source_rejected(self):
        # The config parser refuses this combination; the direct-construction
        # escape hatch must fail too.
        cfg = ScenarioConfig(filter_mode="robust-ecbf", iqc_source="none")
        with pytest.raises(ValueError, match="iqc source"):
            build_channels(cfg)


class TestClosedLoop:
    def test_filter_off_passes_baseline_through(self):
        cfg = ScenarioConfig(filter_mode="off", horizon=0.1)
        log, summary = run_closed_loop(cfg)
        assert len(log) == 100
        assert all(log.status_at(i) == "off" for i in (0, 50, 99))
        np.testing.assert_array_equal(log.ux, log.u0x)
        np.testing.assert_array_equal(log.uy, log.u0y)
        assert not np.any(log.wx) and not np.any(log.wy)
        assert summary.infeasible_steps == 0
        assert summary.min_iqc_integral == 0.0

    def test_infeasible_steps_counted_and_marked(self):
        # Starting exactly at the obstacle center the gradient is zero while
        # the required decrease is strictly positive, so no input satisfies
        # the constraint; the run must continue with the best-effort input
        # (the constraint peak, here zero) and count every step.
        cfg = ScenarioConfig(
            p0=(2.0, -0.2),
            filter_mode="robust-ecbf",
            iqc_source="coefficients",
            horizon=0.05,
            **COEFFS,
        )
        log, summary = run_closed_loop(cfg)
        assert summary.infeasible_steps == 50
        assert all(
            log.status_at(i) == "infeasible-best-effort" for i in (0, 25, 49)
        )
        assert not np.any(log.ux) and not np.any(log.uy)
        assert summary.min_h == -2.25
        assert summary.min_clearance == -1.5

    def test_abort_preserves_partial_log(self, monkeypatch):
        from safefilter import qcqp as qcqp_mod

        real = qcqp_mod.project_quadratic
        calls = {"n": 0}

        def flaky(u0, qc, **kw):
            calls["n"] += 1
            if calls["n"] == 6:
                raise NumericalFailureError("synthetic failure")
            return real(u0, qc, **kw)

        monkeypatch.setattr("safefilter.sim.project_quadratic", flaky)
        cfg = ScenarioConfig(
            filter_mode="robust-ecbf",
            iqc_source="coefficients",
            horizon=0.05,
            **COEFFS,
        )
        with pytest.raises(SimulationAborted) as exc_info:
            run_closed_loop(cfg)
        err = exc_info.value
        assert err.step == 5
        assert "synthetic failure" in str(err)
        assert len(err.log) == 5
        assert err.log.t[-1] == pytest.approx(4e-3)

    def test_horizon_shorter_than_one_step_rejected(self):
        cfg = ScenarioConfig(horizon=1e-5, dt=1e-3)
        with pytest.raises(ValueError, match="horizon"):
            run_closed_loop(cfg)

    def test_reruns_are_bit_identical(self):
        # Covers the full pipeline including the envelope fit; two fresh
        # loads and runs must agree to the last bit.
        path = bundled_config_path("delay_robust.cfg")
        outputs = []
        for _ in range(2):
            cfg = load_config(path, overrides=("numerics.horizon=1",))
            log, summary = run_closed_loop(cfg)
            outputs.append((trajectory_csv_text(log), summary.as_text()))
        assert outputs[0] == outputs[1]


class TestClosedLoopProperties:
    def test_decay_floor_on_feasible_unperturbed_run(self, nominal_run):
        cfg, log, summary = nominal_run
        assert summary.infeasible_steps == 0
        h0 = log.htilde[0]
        floor = h0 * np.exp(-cfg.alpha * log.t) - 1e-6 * (1.0 + abs(h0))
        assert np.all(log.htilde >= floor)

    def test_running_integral_respects_input_energy(self, robust_run):
        cfg, log, summary = robust_run
        energy = cfg.dt * np.cumsum(log.ux**2 + log.uy**2)
        assert np.all(log.iqc_int >= -1e-6 * energy)
        assert summary.min_iqc_integral >= -1e-6 * energy[-1]

    def test_certificate_damps_input_oscillation(self, delay_run, robust_run):
        _, _, s_delay = delay_run
        _, _, s_robust = robust_run
        assert s_robust.tv_ux < s_delay.tv_ux
        assert s_robust.tv_uy < s_delay.tv_uy

    @pytest.mark.parametrize(
        "name,fixture",
        [
            ("nominal.cfg", "nominal_run"),
            ("delay_nominal.cfg", "delay_run"),
            ("delay_robust.cfg", "robust_run"),
        ],
    )
    def test_halving_dt_barely_moves_min_h(self, request, name, fixture):
        _, _, coarse = request.getfixturevalue(fixture)
        cfg = load_config(
            bundled_config_path(name), overrides=("numerics.dt=0.0005",)
        )
        _, fine = run_closed_loop(cfg)
        assert abs(fine.min_h - coarse.min_h) < 5e-3


@pytest.fixture(scope="module")
def short_log():
    cfg = ScenarioConfig(uncertainty_mode="delay", tau=0.02, horizon=0.2)
    log, _ = run_closed_loop(cfg)
    return log


class TestCsvOutput:
    HEADER_COLS = (
        "t,px,py,vx,vy,rx,ry,u0x,u0y,ux,uy,wx,wy,h,hdot,htilde,"
        "xF_x,xF_y,status,iqc_int"
    )

    def test_header_is_exact(self):
        assert CSV_HEADER == self.HEADER_COLS

    def test_layout_and_float_round_trip(self, short_log):
        text = trajectory_csv_text(short_log)
        assert text.endswith("\n")
        lines = text.splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == len(short_log) + 1
        for k in (0, 25, 199):
            row = lines[k + 1].split(",")
            assert len(row) == 20
            assert row[18] in STATUS_WORDS
            # repr output parses back to the identical double
            assert float(row[0]) == short_log.t[k]
            assert float(row[11]) == short_log.ax[k] - short_log.ux[k]
            assert float(row[13]) == short_log.h[k]
            assert float(row[19]) == short_log.iqc_int[k]

    def test_delay_shows_in_disturbance_columns(self, short_log):
        # Commands held back by the delay line appear as nonzero w early on.
        assert np.any(short_log.wx[:20] != 0.0)
        np.testing.assert_array_equal(
            short_log.wx, short_log.ax - short_log.ux
        )

    def test_write_to_path_and_filelike_agree(self, short_log, tmp_path):
        buf = io.StringIO()
        write_trajectory_csv(short_log, buf)
        dest = tmp_path / "traj.csv"
        write_trajectory_csv(short_log, dest)
        text = trajectory_csv_text(short_log)
        assert buf.getvalue() == text
        assert dest.read_text(encoding="utf-8") == text


class TestRunSummary:
    def test_text_format_exact(self):
        summary = RunSummary(
            n_steps=3,
            dt=0.001,
            min_h=-0.25,
            min_clearance=0.5,
            final_pos_error=1e-07,
            infeasible_steps=2,
            tv_ux=0.1,
            tv_uy=0.0,
            min_iqc_integral=-1.5e-10,
        )
        assert summary.as_text() == (
            "n_steps=3\n"
            "dt=0.001\n"
            "min_h=-0.25\n"
            "min_clearance=0.5\n"
            "final_pos_error=1e-07\n"
            "infeasible_steps=2\n"
            "tv_ux=0.1\n"
            "tv_uy=0.0\n"
            "min_iqc_integral=-1.5e-10\n"
        )

    def test_fixture_summary_round_trips(self, nominal_run):
        _, _, summary = nominal_run
        lines = summary.as_text().strip().split("\n")
        keys = [ln.split("=", 1)[0] for ln in lines]
        assert keys == [
            "n_steps", "dt", "min_h", "min_clearance", "final_pos_error",
            "infeasible_steps", "tv_ux", "tv_uy", "min_iqc_integral",
        ]
        values = dict(ln.split("=", 1) for ln in lines)
        assert int(values["n_steps"]) == summary.n_steps
        assert float(values["min_h"]) == summary.min_h
        assert float(values["tv_ux"]) == summary.tv_ux
