"""
Tests for evalkit: metrics, helpers and the experiments' headline numbers.

Experiments that simulate more than a few seconds are marked slow.
"""

import math
from dataclasses import replace

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given

from config_processor import ConfigError, RunConfig, config_hash, default_run_config
from chainmodel import arm_chain
from evalkit import (
    EXPERIMENTS,
    ZERO_FIELD,
    EmptySeriesError,
    ExperimentResult,
    calibrate_gyro_bias,
    experiment_accel_prediction,
    experiment_bus_timing,
    experiment_bus_vs_ideal,
    experiment_correction_accuracy,
    experiment_drift_characterization,
    experiment_local_prediction_noise,
    experiment_sensor_noise,
    experiment_unobservability,
    experiment_yaw_recovery,
    mae,
    orientation_error_deg,
    rmse,
    run_experiment,
    run_seed,
    static_drift_deg,
    swing_program,
    time_to_threshold,
    world_twist_deg,
)
from rotmath import IDENTITY, Vec3, compose, from_axis_angle
from synthgen import ImuStream, measured_noise

X = Vec3(1.0, 0.0, 0.0)
Z = Vec3(0.0, 0.0, 1.0)


def noisy_config(seed: int = 7, **experiment) -> RunConfig:
    config = default_run_config(seed)
    return replace(config, noise=measured_noise(seed=seed),
                   experiment=replace(config.experiment, **experiment))


def quiet_config(seed: int = 7, **experiment) -> RunConfig:
    config = default_run_config(seed)
    return replace(config, experiment=replace(config.experiment, **experiment))


def zero_g(config: RunConfig) -> RunConfig:
    return replace(config, trajectory=replace(config.trajectory, field=ZERO_FIELD))


def as_rows(*quats):
    return np.array([q.as_tuple() for q in quats])


class TestMetrics:
    def test_constant_series(self):
        assert rmse([2.0, 2.0, 2.0]) == pytest.approx(2.0)
        assert mae([-2.0, 2.0]) == pytest.approx(2.0)

    def test_known_pair(self):
        assert mae([3.0, -4.0]) == pytest.approx(3.5)
        assert rmse([3.0, -4.0]) == pytest.approx(math.sqrt(12.5))

    def test_empty_raises(self):
        with pytest.raises(EmptySeriesError):
            rmse([])
        with pytest.raises(EmptySeriesError):
            mae(np.zeros((0, 3)))

    def test_gaussian(self):
        values = np.random.default_rng(5).normal(0.0, 0.5, 200_000)
        assert rmse(values) == pytest.approx(0.5, rel=0.02)
        assert mae(values) == pytest.approx(0.5 * math.sqrt(2.0 / math.pi), rel=0.02)

    @given(st.lists(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False), min_size=1, max_size=50))
    def test_rmse_at_least_mae(self, values):
        assert rmse(values) >= mae(values) - 1e-9


class TestHelpers:
    def test_swing_program_mean_rate(self):
        program = swing_program(0, X, 2.13, 1.0)
        term = program.terms[0]
        t = np.linspace(0.0, 1.0, 100_001)
        rate = term.amplitude * 2.0 * math.pi * term.frequency_hz * np.cos(2.0 * math.pi * term.frequency_hz * t)
        assert np.mean(np.abs(rate)) == pytest.approx(2.13, rel=1e-3)

    def test_swing_program_at_rest(self):
        assert swing_program(1, Z, 0.0, 0.5).terms == ()

    def test_time_to_threshold(self):
        t = np.array([0.0, 1.0, 2.0, 3.0])
        angles = np.array([0.0, 0.4, 1.2, 0.9])
        assert time_to_threshold(t, angles, 1.0) == 2.0
        assert time_to_threshold(t, angles, 5.0) is None

    def test_run_seeds_differ(self):
        assert run_seed(7, 0) == run_seed(7, 0)
        assert len({run_seed(7, k) for k in range(20)}) == 20
        assert run_seed(7, 0) != run_seed(8, 0)

    def test_static_drift_of_constant_rate(self):
        t = np.arange(0, 1001) * 0.01
        rate = math.radians(0.1)
        stream = ImuStream(sensor_id=0, t=t, gyro=np.tile([0.0, 0.0, rate], (len(t), 1)),
                           accel=np.zeros((len(t), 3)))
        angles = static_drift_deg(stream, 0.5)
        np.testing.assert_allclose(angles, 0.1 * t, atol=1e-9)

        stopped = static_drift_deg(stream, 0.5, stop_at_deg=0.5)
        assert stopped[-1] >= 0.5
        assert stopped[-2] < 0.5
        assert len(stopped) < len(t)

    def test_orientation_error(self):
        est = as_rows(from_axis_angle(math.radians(30.0), X), IDENTITY)
        true = as_rows(IDENTITY, IDENTITY)
        np.testing.assert_allclose(orientation_error_deg(est, true), [30.0, 0.0], atol=1e-9)

    def test_world_twist_separates_axes(self):
        true = from_axis_angle(0.4, Vec3(1.0, 2.0, 0.5))
        yawed = compose(from_axis_angle(math.radians(12.0), Z), true)
        tilted = compose(from_axis_angle(math.radians(12.0), X), true)
        twist = world_twist_deg(as_rows(yawed, tilted), as_rows(true, true), Z)
        np.testing.assert_allclose(twist, [12.0, 0.0], atol=1e-9)


class TestRegistry:
    def test_unknown_experiment(self):
        with pytest.raises(KeyError):
            run_experiment("nope", default_run_config())

    def test_registered_names(self):
        assert set(EXPERIMENTS) == {
            "yaw_recovery", "accel_prediction", "drift_characterization", "correction_accuracy",
            "sensor_noise", "local_prediction_noise", "unobservability", "bus_timing", "bus_vs_ideal",
        }

    def test_unknown_scenario(self):
        with pytest.raises(KeyError):
            ExperimentResult("empty", []).report("missing")

    def test_yaw_recovery_needs_two_limbs(self):
        config = replace(default_run_config(), chain=arm_chain())
        with pytest.raises(ConfigError):
            experiment_yaw_recovery(config)


class TestSensorNoise:
    def test_reproduces_measured_noise(self):
        result = experiment_sensor_noise(noisy_config(noise_duration_s=20.0))
        assert result.report("accel_norm").rmse == pytest.approx(0.043, rel=0.15)
        assert result.report("gyro_norm").rmse == pytest.approx(0.0027, rel=0.15)

    def test_reports_are_reproducible(self):
        config = noisy_config(noise_duration_s=5.0)
        a = run_experiment("sensor_noise", config)
        b = run_experiment("sensor_noise", config)
        assert [(r.scenario, r.rmse, r.mae, r.n) for r in a.reports] == \
            [(r.scenario, r.rmse, r.mae, r.n) for r in b.reports]
        assert a.reports[0].config_hash == config_hash(config)
        assert a.reports[0].seed == 7

    def test_noiseless_is_exact(self):
        result = experiment_sensor_noise(quiet_config(noise_duration_s=2.0))
        assert result.report("accel_norm").rmse == pytest.approx(0.0, abs=1e-12)
        assert result.report("gyro_norm").rmse == pytest.approx(0.0, abs=1e-12)


class TestPrediction:
    def test_noiseless_stationary_has_no_error(self):
        result = experiment_accel_prediction(quiet_config(prediction_duration_s=1.0))
        for variant in ("no_prediction", "with_prediction", "weighted"):
            assert result.report(f"stationary/{variant}").rmse == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.slow
    def test_prediction_wins_when_fast_and_loses_when_still(self):
        result = experiment_accel_prediction(noisy_config(prediction_duration_s=10.0))
        assert result.report("fast/with_prediction").rmse <= result.report("fast/no_prediction").rmse / 3.0
        assert result.report("stationary/no_prediction").rmse < result.report("stationary/with_prediction").rmse
        assert result.report("stationary/no_prediction").rmse == pytest.approx(0.043, rel=0.15)

    def test_local_noise_reports_per_axis(self):
        result = experiment_local_prediction_noise(noisy_config(prediction_duration_s=2.0))
        assert [r.scenario for r in result.reports] == [
            "no_prediction/x", "no_prediction/y", "no_prediction/z",
            "with_prediction/x", "with_prediction/y", "with_prediction/z",
        ]
        # the lever runs along y, so angular acceleration noise lands on x and z
        for axis in "xz":
            assert result.report(f"no_prediction/{axis}").rmse < result.report(f"with_prediction/{axis}").rmse


class TestDrift:
    def test_noiseless_never_reaches_threshold(self):
        result = experiment_drift_characterization(quiet_config(drift_runs=2, drift_duration_s=5.0,
                                                                drift_checkpoints_s=(1.0, 2.0, 10.0)))
        rep = result.report("time_to_1deg")
        assert rep.extras["mean_s"] is None
        assert rep.extras["censored"] == 2
        assert result.report("drift_after_1s").rmse == 0.0
        assert result.report("drift_after_10s").n == 0

    @pytest.mark.slow
    def test_time_to_one_degree(self):
        result = experiment_drift_characterization(noisy_config(drift_runs=50, drift_duration_s=60.0))
        rep = result.report("time_to_1deg")
        assert rep.extras["censored"] == 0
        assert 23.8 <= rep.extras["mean_s"] <= 35.6
        quarter = result.report("time_to_0.25deg").extras["mean_s"]
        assert quarter < rep.extras["mean_s"]

    def test_calibration_of_a_pure_bias(self):
        bias, achieved = calibrate_gyro_bias(quiet_config(), target_s=2.0, runs=1)
        assert bias.norm() == pytest.approx(math.radians(1.0) / 2.0, rel=0.02)
        assert achieved == pytest.approx(2.0, abs=0.1)

    def test_calibration_rejects_bad_target(self):
        with pytest.raises(ValueError):
            calibrate_gyro_bias(quiet_config(), target_s=-1.0, runs=1)


class TestCorrectionAccuracy:
    def test_noiseless_stationary_is_zero(self):
        result = experiment_correction_accuracy(quiet_config(accuracy_duration_s=2.0))
        assert result.report("stationary/raw").rmse == pytest.approx(0.0, abs=1e-9)
        assert result.report("stationary/filtered").rmse == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.slow
    def test_filtered_corrections_are_small(self):
        result = experiment_correction_accuracy(noisy_config(accuracy_duration_s=10.0))
        assert result.report("moving/filtered").rmse <= 2.0
        for scenario in ("stationary", "moving"):
            assert result.report(f"{scenario}/filtered").rmse < result.report(f"{scenario}/raw").rmse


@pytest.mark.slow
class TestYawRecovery:
    def test_recovers_ninety_degrees(self):
        result = experiment_yaw_recovery(zero_g(noisy_config(runs=20)))
        rep = result.report("yaw_recovery")
        assert rep.n == 20
        assert rep.rmse <= 5.0
        assert rep.extras["max_abs_deg"] <= 10.0

    def test_controls(self):
        result = experiment_yaw_recovery(zero_g(noisy_config(runs=1)))
        assert abs(result.report("corrections_disabled").mae) == pytest.approx(90.0, abs=2.0)
        assert result.report("no_drift_no_motion").rmse < 1e-9


@pytest.mark.slow
class TestUnobservability:
    def test_excitation_axis_is_unobservable(self):
        result = experiment_unobservability(noisy_config())
        assert result.report("excitation_axis").extras["max_change_deg"] < 0.1
        orthogonal = result.report("orthogonal_axis")
        assert orthogonal.extras["reduction"] < 0.5
        assert orthogonal.extras["cycles"] >= 100
        assert result.report("orthogonal_axis_noiseless").extras["monotone"] is True


class TestBus:
    @pytest.mark.slow
    def test_timing_table(self):
        result = experiment_bus_timing(quiet_config())
        expected = {2: (6400, 156, 5250), 3: (11650, 85, 5250), 7: (32650, 30, 5250), 15: (74650, 13, 5250)}
        for n, (cycle_us, rate_hz, staleness_us) in expected.items():
            rep = result.report(f"sensors_{n}")
            assert rep.extras["cycle_us"] == cycle_us
            assert rep.extras["rate_hz"] == rate_hz
            assert rep.extras["staleness_us"] == staleness_us
        assert result.report("sensors_2").extras["simulated_cycle_us"] == pytest.approx(6400, rel=0.15)
        assert result.report("sensors_7").extras["tree_staleness_us"] == 8750

    @pytest.mark.slow
    def test_bus_close_to_ideal(self):
        result = experiment_bus_vs_ideal(noisy_config())
        assert result.report("bus").extras["degradation_deg"] < 0.5
        assert result.report("ideal").extras["correction_rate_hz"] == pytest.approx(1e6 / 6400)
