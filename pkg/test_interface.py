"""
Tests for the outer surfaces: run configs, trace files, the CLI and the
pose endpoint.
"""

import os
import threading
from dataclasses import replace

import numpy as np
import pytest
import requests
import yaml

from chainmodel import arm_chain, boom_chain
from cli_interface import EXIT_BAD_CONFIG, EXIT_OK, EXIT_RUNTIME, cli_run
from config_processor import (
    ConfigError,
    config_from_dict,
    config_hash,
    create_example_config,
    default_run_config,
    load_run_config,
    save_run_config,
    validate_config,
    with_seed,
)
from estimator import FilterParams, run_ideal_pipeline
from evalkit import experiment_sensor_noise
from netsim import BusSimulation
from pose_server import PortInUseError, PoseSnapshot, SnapshotBoard, run_live_simulation, serve_pose
from rotmath import IDENTITY
from synthgen import EARTH_FIELD, ImuStream, NoiseSpec, TrajectorySpec, integrate_truth, synthesize_imu
from trace_io import (
    BINARY_HEADER,
    BINARY_MAGIC,
    TraceFormatError,
    read_bus_trace,
    read_pose_log,
    read_trace,
    read_trace_binary,
    read_trace_csv,
    write_bus_trace,
    write_pose_log,
    write_report_csv,
    write_trace_binary,
    write_trace_csv,
)

HERE = os.path.dirname(os.path.abspath(__file__))
BOOM_CONFIG = os.path.join(HERE, "boom_config.yml")
STATIC_CONFIG = os.path.join(HERE, "static_config.yml")


def random_stream(sensor_id=3, n=250, seed=0):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.uniform(0.001, 0.02, n))
    return ImuStream(sensor_id=sensor_id, t=t, gyro=rng.normal(0.0, 2.0, (n, 3)),
                     accel=rng.normal(0.0, 9.0, (n, 3)))


def static_streams(chain, duration_s=0.5, rate_hz=200.0):
    traj = TrajectorySpec(field=EARTH_FIELD, duration_s=duration_s, sample_rate_hz=rate_hz)
    return synthesize_imu(integrate_truth(chain, traj), chain, NoiseSpec())


def bad_limb_dict():
    return {"chain": {"limbs": [
        {"id": 0, "parent_id": None, "length_r": 0.5},
        {"id": 1, "parent_id": 0, "length_r": 0.0},
    ]}}


# ----------------------------------------------------------------------
# Config
# ----------------------------------------------------------------------

class TestConfig:
    def test_example_config_round_trip(self, tmp_path):
        path = str(tmp_path / "example.yml")
        create_example_config(path)
        config = load_run_config(path)
        assert config.seed == 7
        assert config.noise.accel_sigma == 0.043
        copy = str(tmp_path / "copy.yml")
        save_run_config(config, copy)
        assert load_run_config(copy) == config

    def test_default_round_trip(self, tmp_path):
        config = default_run_config(seed=4)
        path = str(tmp_path / "nested" / "default.yml")
        save_run_config(config, path)
        assert load_run_config(path) == config

    def test_boom_config_loads(self):
        config = load_run_config(BOOM_CONFIG)
        assert len(config.chain) == 2
        assert config.trajectory.field.norm() == 0.0
        assert len(config.trajectory.root_motion) == 1

    def test_validate_names_the_field(self):
        ok, message = validate_config(bad_limb_dict())
        assert not ok
        assert "chain.limbs[1].length_r" in message

    def test_validate_accepts_defaults(self):
        assert validate_config({"seed": 1}) == (True, None)
        assert validate_config({}) == (False, "Config is empty")

    @pytest.mark.parametrize("raw, field", [
        ({"chain": {"preset": "octopus"}}, "chain.preset"),
        ({"mystery": {}}, "mystery"),
        ({"filter": {"gamma_max": 1.5}}, "filter.gamma_max"),
        ({"experiment": {"runs": 0}}, "experiment.runs"),
        ({"experiment": {"warp": 9}}, "experiment.warp"),
        ({"experiment": {"drift_thresholds_deg": []}}, "experiment.drift_thresholds_deg"),
        ({"experiment": {"drift_checkpoints_s": []}}, "experiment.drift_checkpoints_s"),
        ({"experiment": {"drift_thresholds_deg": [1.0, 0.0]}}, "experiment.drift_thresholds_deg[1]"),
        ({"outputs": {"trace_format": "xml"}}, "outputs.trace_format"),
        ({"trajectory": {"joints": [{"limb_id": 5}]}}, "trajectory.joints[0].limb_id"),
        ({"noise": {"accel_sigma": -1.0}}, "noise.accel_sigma"),
    ])
    def test_errors_carry_field_path(self, raw, field):
        with pytest.raises(ConfigError) as excinfo:
            config_from_dict(raw)
        assert excinfo.value.field == field

    def test_hash(self):
        a = config_hash(default_run_config(seed=1))
        assert len(a) == 16
        int(a, 16)
        assert a == config_hash(default_run_config(seed=1))
        assert a != config_hash(default_run_config(seed=2))

    def test_with_seed(self):
        config = with_seed(default_run_config(), 9)
        assert config.seed == 9
        assert config.noise.seed == 9
        with pytest.raises(ConfigError):
            with_seed(config, -1)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_run_config(str(tmp_path / "absent.yml"))

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.yml"
        path.write_text("")
        with pytest.raises(ConfigError):
            load_run_config(str(path))


# ----------------------------------------------------------------------
# Files
# ----------------------------------------------------------------------

class TestTraceFiles:
    def test_csv_round_trip_is_exact(self, tmp_path):
        stream = random_stream()
        path = str(tmp_path / "sensor_3.csv")
        write_trace_csv(stream, path)
        back = read_trace_csv(path)
        assert back.sensor_id == 3
        np.testing.assert_array_equal(back.t, stream.t)
        np.testing.assert_array_equal(back.gyro, stream.gyro)
        np.testing.assert_array_equal(back.accel, stream.accel)

    def test_binary_round_trip_is_exact(self, tmp_path):
        stream = random_stream(sensor_id=12)
        path = str(tmp_path / "sensor_12.bin")
        write_trace_binary(stream, path)
        assert os.path.getsize(path) == BINARY_HEADER.size + len(stream) * 7 * 8
        back = read_trace(path)
        assert back.sensor_id == 12
        np.testing.assert_array_equal(back.gyro, stream.gyro)
        np.testing.assert_array_equal(back.accel, stream.accel)

    def test_csv_version_checked(self, tmp_path):
        path = tmp_path / "old.csv"
        path.write_text("# chain_tracker trace v9 sensor=0\nt,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,0\n")
        with pytest.raises(TraceFormatError):
            read_trace_csv(str(path))
        path.write_text("t,gx,gy,gz,ax,ay,az\n0,0,0,0,0,0,0\n")
        with pytest.raises(TraceFormatError):
            read_trace_csv(str(path))

    def test_binary_header_checked(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(BINARY_HEADER.pack(b"NOPE", 1, 0, 0))
        with pytest.raises(TraceFormatError):
            read_trace_binary(str(path))
        path.write_bytes(BINARY_HEADER.pack(BINARY_MAGIC, 2, 0, 0))
        with pytest.raises(TraceFormatError):
            read_trace_binary(str(path))
        path.write_bytes(BINARY_HEADER.pack(BINARY_MAGIC, 1, 0, 5) + bytes(8))
        with pytest.raises(TraceFormatError):
            read_trace_binary(str(path))

    def test_unknown_extension(self, tmp_path):
        with pytest.raises(TraceFormatError):
            read_trace(str(tmp_path / "trace.txt"))

    def test_pose_log_round_trip(self, tmp_path):
        chain = boom_chain()
        streams = static_streams(chain)
        log = run_ideal_pipeline(chain, streams, FilterParams(), {0: IDENTITY, 1: IDENTITY}, 30.0)
        path = str(tmp_path / "poses.csv")
        write_pose_log(log, path)
        with open(path, encoding="utf-8") as f:
            assert f.readline().strip() == "t,sensor,w,x,y,z"
        back = read_pose_log(path)
        assert sorted(back) == [0, 1]
        for sid in (0, 1):
            t, q = back[sid]
            np.testing.assert_array_equal(t, log.t)
            np.testing.assert_array_equal(q, log.q[sid])

    def test_report_csv(self, tmp_path):
        config = default_run_config()
        config = replace(config, experiment=replace(config.experiment, noise_duration_s=1.0))
        path = str(tmp_path / "report.csv")
        write_report_csv(experiment_sensor_noise(config), path)
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        assert lines[0] == "scenario,metric,value,n,seed"
        assert any(line.startswith("accel_norm,rmse,") for line in lines)

    def test_bus_trace_round_trip(self, tmp_path):
        chain = boom_chain()
        sim = BusSimulation(chain, static_streams(chain), FilterParams(), {0: IDENTITY, 1: IDENTITY},
                            keep_trace=True)
        for _ in range(3):
            sim.run_cycle()
        path = str(tmp_path / "bus_trace.txt")
        write_bus_trace(sim.trace, path)
        assert read_bus_trace(path) == sim.trace


# ----------------------------------------------------------------------
# CLI
# ----------------------------------------------------------------------

class TestCli:
    def test_simulate_static_config_is_all_zero(self, tmp_path):
        out = str(tmp_path / "static")
        assert cli_run(["simulate", "--config", STATIC_CONFIG, "--output", out]) == EXIT_OK
        stream = read_trace(os.path.join(out, "traces", "sensor_0.csv"))
        assert len(stream) == 6001
        assert not stream.gyro.any()
        assert not stream.accel.any()
        assert os.path.exists(os.path.join(out, "traces", "truth.npz"))
        assert load_run_config(os.path.join(out, "run_config.yml")) == load_run_config(STATIC_CONFIG)

    def test_simulate_is_deterministic(self, tmp_path):
        outputs = []
        for name in ("a", "b"):
            out = str(tmp_path / name)
            assert cli_run(["simulate", "--config", BOOM_CONFIG, "--seed", "3", "--output", out]) == EXIT_OK
            outputs.append(out)
        for sid in (0, 1):
            files = [os.path.join(out, "traces", f"sensor_{sid}.csv") for out in outputs]
            with open(files[0], "rb") as fa, open(files[1], "rb") as fb:
                assert fa.read() == fb.read()

    def test_bad_config_exits_2(self, tmp_path):
        path = tmp_path / "bad.yml"
        path.write_text(yaml.safe_dump(bad_limb_dict()))
        assert cli_run(["simulate", "--config", str(path), "--output", str(tmp_path)]) == EXIT_BAD_CONFIG

    def test_missing_config_exits_1(self, tmp_path):
        code = cli_run(["simulate", "--config", str(tmp_path / "nope.yml"), "--output", str(tmp_path)])
        assert code == EXIT_RUNTIME

    def test_unknown_experiment_exits_2(self):
        assert cli_run(["evaluate", "--experiment", "levitation"]) == EXIT_BAD_CONFIG

    def test_evaluate_writes_reports(self, tmp_path):
        config_path = tmp_path / "short.yml"
        config_path.write_text(yaml.safe_dump({"seed": 2, "experiment": {"noise_duration_s": 2.0}}))
        out = str(tmp_path / "eval")
        code = cli_run(["evaluate", "--experiment", "sensor_noise", "--config", str(config_path),
                        "--output", out])
        assert code == EXIT_OK
        assert os.path.exists(os.path.join(out, "report_sensor_noise.csv"))
        assert os.path.exists(os.path.join(out, "report_sensor_noise.json"))

    def test_export_round_trip(self, tmp_path):
        src = str(tmp_path / "sensor_3.csv")
        write_trace_csv(random_stream(), src)
        binary = str(tmp_path / "sensor_3.bin")
        back = str(tmp_path / "back" / "sensor_3.csv")
        assert cli_run(["export", "--input", src, "--output", binary]) == EXIT_OK
        assert cli_run(["export", "--input", binary, "--output", back]) == EXIT_OK
        with open(src, "rb") as fa, open(back, "rb") as fb:
            assert fa.read() == fb.read()

    def test_export_missing_input(self, tmp_path):
        code = cli_run(["export", "--input", str(tmp_path / "none.csv"), "--output", str(tmp_path / "x.bin")])
        assert code == EXIT_RUNTIME

    @pytest.mark.parametrize("mode", ["ideal", "bus"])
    def test_estimate_writes_poses(self, tmp_path, mode):
        sim_out = str(tmp_path / "sim")
        assert cli_run(["simulate", "--config", BOOM_CONFIG, "--output", sim_out]) == EXIT_OK
        est_out = str(tmp_path / "est")
        args = ["estimate", "--config", BOOM_CONFIG, "--traces", os.path.join(sim_out, "traces"),
                "--mode", mode, "--output", est_out]
        if mode == "bus":
            args.append("--bus-trace")
        assert cli_run(args) == EXIT_OK
        poses = read_pose_log(os.path.join(est_out, "poses.csv"))
        assert sorted(poses) == [0, 1]
        for _, q in poses.values():
            np.testing.assert_allclose(np.linalg.norm(q, axis=1), 1.0, atol=1e-9)
        if mode == "bus":
            assert len(read_bus_trace(os.path.join(est_out, "bus_trace.txt"))) > 0

    def test_estimate_rejects_mismatched_traces(self, tmp_path):
        sim_out = str(tmp_path / "sim")
        assert cli_run(["simulate", "--config", STATIC_CONFIG, "--output", sim_out]) == EXIT_OK
        code = cli_run(["estimate", "--config", BOOM_CONFIG, "--traces", os.path.join(sim_out, "traces"),
                        "--output", str(tmp_path / "est")])
        assert code == EXIT_RUNTIME

    @pytest.mark.parametrize("mode", ["ideal", "bus"])
    def test_estimate_rejects_truncated_trace(self, tmp_path, mode, capsys):
        traces = tmp_path / "traces"
        for sid, stream in static_streams(boom_chain(), duration_s=0.5, rate_hz=200.0).items():
            if sid == 1:
                stream = ImuStream(sid, stream.t[:50], stream.gyro[:50], stream.accel[:50])
            write_trace_csv(stream, str(traces / f"sensor_{sid}.csv"))
        code = cli_run(["estimate", "--config", BOOM_CONFIG, "--traces", str(traces),
                        "--mode", mode, "--output", str(tmp_path / "est")])
        assert code == EXIT_RUNTIME
        assert "[!] Trace of sensor 1 has 50 samples" in capsys.readouterr().out

    def test_estimate_rejects_shifted_time_grid(self, tmp_path):
        traces = tmp_path / "traces"
        for sid, stream in static_streams(boom_chain()).items():
            if sid == 1:
                stream = ImuStream(sid, stream.t + 0.001, stream.gyro, stream.accel)
            write_trace_csv(stream, str(traces / f"sensor_{sid}.csv"))
        code = cli_run(["estimate", "--config", BOOM_CONFIG, "--traces", str(traces),
                        "--output", str(tmp_path / "est")])
        assert code == EXIT_RUNTIME


# ----------------------------------------------------------------------
# Pose endpoint
# ----------------------------------------------------------------------

class TestPoseServer:
    def test_get_pose(self):
        board = SnapshotBoard()
        server = serve_pose(board, "127.0.0.1", 0)
        try:
            url = f"http://127.0.0.1:{server.port}/pose"
            assert requests.get(url, timeout=(10, 30)).json() == {"sensors": []}

            chain = boom_chain()
            sim = BusSimulation(chain, static_streams(chain), FilterParams(), {0: IDENTITY, 1: IDENTITY})
            board.publish(sim.run_cycle().snapshot)
            response = requests.get(url, timeout=(10, 30))
            assert response.status_code == 200
            assert response.headers["Content-type"] == "application/json"
            payload = response.json()
            assert [s["id"] for s in payload["sensors"]] == [0, 1]
            for sensor in payload["sensors"]:
                assert set(sensor) == {"id", "q", "t_us"}
                assert len(sensor["q"]) == 4
                assert isinstance(sensor["t_us"], int)
        finally:
            server.shutdown()
            server.server_close()

    def test_unknown_path_is_404(self):
        server = serve_pose(SnapshotBoard(), "127.0.0.1", 0)
        try:
            response = requests.get(f"http://127.0.0.1:{server.port}/poses", timeout=(10, 30))
            assert response.status_code == 404
        finally:
            server.shutdown()
            server.server_close()

    def test_port_in_use(self):
        server = serve_pose(SnapshotBoard(), "127.0.0.1", 0)
        try:
            with pytest.raises(PortInUseError):
                serve_pose(SnapshotBoard(), "127.0.0.1", server.port)
        finally:
            server.shutdown()
            server.server_close()

    def test_live_simulation_publishes_every_cycle(self):
        chain = arm_chain()
        sim = BusSimulation(chain, static_streams(chain, duration_s=1.0),
                            FilterParams(), {node.id: IDENTITY for node in chain.limbs})
        board = SnapshotBoard()
        cycles = run_live_simulation(sim, board)
        assert cycles > 0
        assert board.published == cycles
        latest = board.latest()
        assert len(latest.sensors) == 3
        for pose in latest.sensors:
            assert abs(np.linalg.norm(pose.q) - 1.0) <= 2e-4

    def test_stop_event_ends_early(self):
        chain = boom_chain()
        sim = BusSimulation(chain, static_streams(chain, duration_s=1.0),
                            FilterParams(), {0: IDENTITY, 1: IDENTITY})
        stop = threading.Event()
        stop.set()
        assert run_live_simulation(sim, SnapshotBoard(), stop=stop) == 0

    def test_board_starts_empty(self):
        assert SnapshotBoard().latest() == PoseSnapshot(t_us=0)
