#!/usr/bin/env python3
"""
CLI Interface - Command-line interface for simulation, estimation and evaluation.

Subcommands:
  simulate  ground truth + IMU traces from a run config
  estimate  run the estimator over traces and write a pose log
  evaluate  run a named experiment and write its report
  serve     live bus simulation with the JSON pose endpoint
  export    convert a trace between CSV and binary
"""

import argparse
import os
import sys
import threading
import time
from typing import Optional

import numpy as np
from dotenv import load_dotenv

from chainmodel import ChainSpec
from config_processor import ConfigError, RunConfig, config_hash, default_run_config, load_run_config, save_run_config, with_seed
from estimator import StreamMismatchError, run_ideal_pipeline
from evalkit import EXPERIMENTS, run_experiment
from netsim import BusSimulation, StreamUnderrunError
from pose_server import PortInUseError, SnapshotBoard, run_live_simulation, serve_pose
from rotmath import IDENTITY, UnitQuaternion
from synthgen import ImuStream, integrate_truth, synthesize_imu
from trace_io import (
    TraceFormatError,
    load_truth_npz,
    read_streams,
    read_trace,
    save_truth_npz,
    write_bus_trace,
    write_gnuplot_trace,
    write_pose_log,
    write_report_csv,
    write_report_json,
    write_streams,
    write_trace,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_BAD_CONFIG = 2

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8080


def build_parser() -> argparse.ArgumentParser:
    """
    Build the argument parser with one subparser per subcommand.

    Returns:
        Configured ArgumentParser
    """
    parser = argparse.ArgumentParser(
        prog='chain_tracker.py',
        description='Drift-corrected orientation tracking for IMU kinematic chains (simulated)',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate ground truth and IMU traces
  python chain_tracker.py simulate --config boom_config.yml --output runs/boom

  # Estimate orientations from those traces through the simulated bus
  python chain_tracker.py estimate --config boom_config.yml --traces runs/boom --mode bus

  # Reproduce the yaw recovery experiment
  python chain_tracker.py evaluate --experiment yaw_recovery --seed 7 --config boom_config.yml

  # Serve live poses on http://127.0.0.1:8080/pose
  python chain_tracker.py serve --config boom_config.yml --port 8080 --realtime

  # Convert a trace to the binary format
  python chain_tracker.py export --input runs/boom/traces/sensor_0.csv --output sensor_0.bin
        """
    )
    sub = parser.add_subparsers(dest='command', required=True)

    def add_common(p: argparse.ArgumentParser):
        p.add_argument('--config', help='Run config YAML (defaults built in when omitted)')
        p.add_argument('--seed', type=int, help='Override the config seed')
        p.add_argument('--output', help='Output directory (default: config, $CHAIN_TRACKER_OUTPUT_DIR, ./output)')

    p_sim = sub.add_parser('simulate', help='Write ground truth and IMU traces')
    add_common(p_sim)
    p_sim.add_argument('--format', choices=['csv', 'binary'], help='Trace format (default: config)')

    p_est = sub.add_parser('estimate', help='Run the estimator over traces')
    add_common(p_est)
    p_est.add_argument('--traces', required=True, help='Directory holding sensor_<id> traces')
    p_est.add_argument('--mode', choices=['ideal', 'bus'], default='ideal',
                       help='ideal: no bus; bus: simulated hub with quantization and staleness')
    p_est.add_argument('--correction-rate', type=float,
                       help='Correction rate for ideal mode in Hz (default: experiment setting)')
    p_est.add_argument('--no-corrections', action='store_true', help='Dead reckoning only (ideal mode)')
    p_est.add_argument('--bus-trace', action='store_true', help='Also dump the byte-level bus trace (bus mode)')

    p_eval = sub.add_parser('evaluate', help='Run a named experiment')
    add_common(p_eval)
    p_eval.add_argument('--experiment', required=True, choices=sorted(EXPERIMENTS), help='Experiment to run')

    p_serve = sub.add_parser('serve', help='Live bus simulation with GET /pose')
    add_common(p_serve)
    p_serve.add_argument('--host', help='Bind address (default: $CHAIN_TRACKER_HOST or 127.0.0.1)')
    p_serve.add_argument('--port', type=int, help='Port (default: $CHAIN_TRACKER_PORT or 8080)')
    p_serve.add_argument('--realtime', action='store_true', help='Pace the simulation to wall-clock time')
    p_serve.add_argument('--linger', type=float, default=None,
                         help='Seconds to keep serving after the simulation ends (default: until Ctrl+C)')

    p_exp = sub.add_parser('export', help='Convert a trace between .csv and .bin')
    p_exp.add_argument('--input', required=True, help='Source trace (.csv or .bin)')
    p_exp.add_argument('--output', required=True, help='Destination trace (.csv or .bin)')

    return parser


def resolve_output_dir(config: RunConfig, flag: Optional[str]) -> str:
    return flag or config.outputs.directory or os.getenv("CHAIN_TRACKER_OUTPUT_DIR") or "output"


def _load_config(args) -> RunConfig:
    config = load_run_config(args.config) if args.config else default_run_config()
    if args.config:
        print(f"[+] Loaded config from: {args.config}")
    if args.seed is not None:
        config = with_seed(config, args.seed)
    return config


def _banner(title: str):
    print("=" * 70)
    print(title)
    print("=" * 70)


def _initial_orientations(chain: ChainSpec, traces_dir: str) -> dict[int, UnitQuaternion]:
    """Start from truth when the trace directory carries it, else identity."""
    truth_path = os.path.join(traces_dir, "truth.npz")
    if os.path.exists(truth_path):
        truth = load_truth_npz(truth_path)
        print(f"[*] Initial orientations from {truth_path}")
        return {node.id: truth.orientation(node.id, 0) for node in chain.limbs}
    print("[*] No truth.npz next to the traces; starting every sensor at identity")
    return {node.id: IDENTITY for node in chain.limbs}


def _check_streams(chain: ChainSpec, streams: dict[int, ImuStream]):
    expected = {node.id for node in chain.limbs}
    if set(streams) != expected:
        raise TraceFormatError(f"Traces cover sensors {sorted(streams)}, chain has {sorted(expected)}")
    grid = streams[min(streams)].t
    for sid, stream in sorted(streams.items()):
        if not np.array_equal(stream.t, grid):
            raise TraceFormatError(f"Trace of sensor {sid} has {len(stream)} samples, "
                                   f"sensor {min(streams)} has {len(grid)} on a different time grid")


def cmd_simulate(args) -> int:
    config = _load_config(args)
    out_dir = resolve_output_dir(config, args.output)
    trace_format = args.format or config.outputs.trace_format

    _banner("SIMULATE")
    print(f"[Sim] {len(config.chain)} sensor(s), {config.trajectory.duration_s:g} s at "
          f"{config.trajectory.sample_rate_hz:g} Hz, seed {config.seed}")
    truth = integrate_truth(config.chain, config.trajectory)
    streams = synthesize_imu(truth, config.chain, config.noise)

    paths = write_streams(streams, os.path.join(out_dir, "traces"), trace_format)
    save_truth_npz(truth, os.path.join(out_dir, "traces", "truth.npz"))
    save_run_config(config, os.path.join(out_dir, "run_config.yml"))
    for path in paths:
        print(f"[+] Wrote {path}")
    print(f"[+] Ground truth: {os.path.join(out_dir, 'traces', 'truth.npz')}")
    print(f"[*] Config hash: {config_hash(config)}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    config = _load_config(args)
    out_dir = resolve_output_dir(config, args.output)
    streams = read_streams(args.traces)
    _check_streams(config.chain, streams)
    initial = _initial_orientations(config.chain, args.traces)

    _banner(f"ESTIMATE ({args.mode})")
    if args.mode == 'ideal':
        rate = args.correction_rate or config.experiment.correction_rate_hz
        print(f"[*] Corrections {'off' if args.no_corrections else f'at {rate:g} Hz'}")
        log = run_ideal_pipeline(config.chain, streams, config.filter, initial, rate,
                                 corrections_enabled=not args.no_corrections)
    else:
        sim = BusSimulation(config.chain, streams, config.filter, initial, model=config.schedule,
                            quant=config.quant, seed=config.seed, keep_trace=args.bus_trace)
        print(f"[Hub] Cycle {config.schedule.cycle_duration_us(len(config.chain)):.0f} us, "
              f"{config.schedule.operating_rate_hz(len(config.chain))} Hz")
        log = sim.run()
        if args.bus_trace:
            trace_path = os.path.join(out_dir, "bus_trace.txt")
            write_bus_trace(sim.trace, trace_path)
            print(f"[+] Bus trace: {trace_path} ({len(sim.trace)} messages)")

    pose_path = os.path.join(out_dir, "poses.csv")
    write_pose_log(log, pose_path)
    applied = sum(1 for corr_list in log.corrections.values() for _, corr in corr_list if corr.applied)
    print(f"[+] Pose log: {pose_path}")
    print(f"[*] Corrections applied: {applied}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    out_dir = resolve_output_dir(config, args.output)

    _banner(f"EVALUATE {args.experiment}")
    result = run_experiment(args.experiment, config)

    csv_path = os.path.join(out_dir, f"report_{args.experiment}.csv")
    json_path = os.path.join(out_dir, f"report_{args.experiment}.json")
    write_report_csv(result, csv_path)
    write_report_json(result, json_path)
    print(f"[+] Report: {csv_path}")
    print(f"[+] Report: {json_path}")
    if args.experiment == "yaw_recovery" and result.series:
        plot_path = os.path.join(out_dir, "yaw_recovery.dat")
        write_gnuplot_trace(result.series[0], plot_path)
        print(f"[+] Gnuplot trace: {plot_path}")
    return EXIT_OK


def _serve_address(args) -> tuple[str, int]:
    host = args.host or os.getenv("CHAIN_TRACKER_HOST") or DEFAULT_HOST
    if args.port is not None:
        return host, args.port
    raw = os.getenv("CHAIN_TRACKER_PORT")
    if not raw:
        return host, DEFAULT_PORT
    try:
        return host, int(raw)
    except ValueError:
        raise ConfigError("CHAIN_TRACKER_PORT", f"must be an integer, got {raw!r}")


def cmd_serve(args) -> int:
    config = _load_config(args)
    host, port = _serve_address(args)

    _banner("SERVE")
    truth = integrate_truth(config.chain, config.trajectory)
    streams = synthesize_imu(truth, config.chain, config.noise)
    initial = {node.id: truth.orientation(node.id, 0) for node in config.chain.limbs}
    sim = BusSimulation(config.chain, streams, config.filter, initial, model=config.schedule,
                        quant=config.quant, seed=config.seed)

    board = SnapshotBoard()
    server = serve_pose(board, host, port)
    stop = threading.Event()
    worker = threading.Thread(target=run_live_simulation, args=(sim, board, args.realtime, stop),
                              name="bus-simulation", daemon=True)
    worker.start()
    print("[*] Press Ctrl+C to stop")
    try:
        worker.join()
        if args.linger is None:
            while True:
                time.sleep(1.0)
        elif args.linger > 0:
            time.sleep(args.linger)
    except KeyboardInterrupt:
        print("\n[*] Stopping")
    finally:
        stop.set()
        server.shutdown()
        server.server_close()
    print(f"[+] Published {board.published} snapshot(s)")
    return EXIT_OK


def cmd_export(args) -> int:
    stream = read_trace(args.input)
    write_trace(stream, args.output)
    print(f"[+] Exported sensor {stream.sensor_id} ({len(stream)} samples) to {args.output}")
    return EXIT_OK


COMMANDS = {
    'simulate': cmd_simulate,
    'estimate': cmd_estimate,
    'evaluate': cmd_evaluate,
    'serve': cmd_serve,
    'export': cmd_export,
}


def cli_run(argv: Optional[list[str]] = None) -> int:
    """
    Parse argv and run the subcommand.

    Returns:
        Exit status: 0 ok, 2 bad config or arguments, 1 missing files or runtime failure
    """
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_BAD_CONFIG

    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"[!] Invalid config: {e}")
        return EXIT_BAD_CONFIG
    except (FileNotFoundError, TraceFormatError, PortInUseError, StreamUnderrunError, StreamMismatchError) as e:
        print(f"[!] {e}")
        return EXIT_RUNTIME
    except KeyError as e:
        print(f"[!] {e.args[0] if e.args else e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(cli_run())
