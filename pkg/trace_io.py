"""
Trace I/O - Sensor traces, ground truth, pose logs, reports and bus traces on disk.

CSV traces start with a version line, then the fixed header
t,gx,gy,gz,ax,ay,az. Floats are written with 17 significant digits so a
trace read back is bit-identical to the one written.

Binary traces: b"CHTR", uint16 version, uint16 sensor id, uint32 row
count (little-endian), then float64 rows in the CSV column order.
"""

import glob
import json
import os
import re
import struct
from dataclasses import asdict
from typing import Iterable

import numpy as np
import pandas as pd

from estimator import PipelineLog
from evalkit import ErrorSeries, ExperimentResult
from netsim import BusMessage
from synthgen import GroundTruth, ImuStream

TRACE_VERSION = 1
TRACE_VERSION_LINE = f"# chain_tracker trace v{TRACE_VERSION}"
TRACE_COLUMNS = ["t", "gx", "gy", "gz", "ax", "ay", "az"]
POSE_COLUMNS = ["t", "sensor", "w", "x", "y", "z"]
REPORT_COLUMNS = ["scenario", "metric", "value", "n", "seed"]

BINARY_MAGIC = b"CHTR"
BINARY_HEADER = struct.Struct("<4sHHI")
FLOAT_FORMAT = "%.17g"


class TraceFormatError(ValueError):
    """Raised when a trace file does not match the expected format."""


def _ensure_parent(path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def _trace_frame(stream: ImuStream) -> pd.DataFrame:
    data = np.column_stack([stream.t, stream.gyro, stream.accel])
    return pd.DataFrame(data, columns=TRACE_COLUMNS)


def write_trace_csv(stream: ImuStream, path: str):
    """Write one sensor's stream as a versioned CSV trace."""
    _ensure_parent(path)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(f"{TRACE_VERSION_LINE} sensor={stream.sensor_id}\n")
        _trace_frame(stream).to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_trace_csv(path: str) -> ImuStream:
    """
    Read a CSV trace written by write_trace_csv().

    Raises:
        FileNotFoundError: path does not exist
        TraceFormatError: bad version line or column header
    """
    with open(path, 'r', encoding='utf-8') as f:
        first = f.readline().strip()
    match = re.fullmatch(r"# chain_tracker trace v(\d+) sensor=(\d+)", first)
    if not match:
        raise TraceFormatError(f"{path}: missing trace version line")
    if int(match.group(1)) != TRACE_VERSION:
        raise TraceFormatError(f"{path}: unsupported trace version {match.group(1)}")

    frame = pd.read_csv(path, skiprows=1, float_precision="round_trip")
    if list(frame.columns) != TRACE_COLUMNS:
        raise TraceFormatError(f"{path}: expected columns {','.join(TRACE_COLUMNS)}, got {','.join(frame.columns)}")
    data = frame.to_numpy(dtype=float)
    return ImuStream(
        sensor_id=int(match.group(2)),
        t=data[:, 0].copy(),
        gyro=data[:, 1:4].copy(),
        accel=data[:, 4:7].copy(),
    )


def write_trace_binary(stream: ImuStream, path: str):
    _ensure_parent(path)
    rows = np.column_stack([stream.t, stream.gyro, stream.accel]).astype("<f8")
    with open(path, 'wb') as f:
        f.write(BINARY_HEADER.pack(BINARY_MAGIC, TRACE_VERSION, stream.sensor_id, len(stream)))
        f.write(rows.tobytes())


def read_trace_binary(path: str) -> ImuStream:
    """
    Read a binary trace.

    Raises:
        TraceFormatError: wrong magic, version or truncated body
    """
    with open(path, 'rb') as f:
        blob = f.read()
    if len(blob) < BINARY_HEADER.size:
        raise TraceFormatError(f"{path}: file shorter than the trace header")
    magic, version, sensor_id, count = BINARY_HEADER.unpack_from(blob)
    if magic != BINARY_MAGIC:
        raise TraceFormatError(f"{path}: not a binary trace (magic {magic!r})")
    if version != TRACE_VERSION:
        raise TraceFormatError(f"{path}: unsupported trace version {version}")
    body = blob[BINARY_HEADER.size:]
    expected = count * len(TRACE_COLUMNS) * 8
    if len(body) != expected:
        raise TraceFormatError(f"{path}: expected {expected} bytes of rows, found {len(body)}")
    data = np.frombuffer(body, dtype="<f8").reshape(count, len(TRACE_COLUMNS)).astype(float)
    return ImuStream(sensor_id=sensor_id, t=data[:, 0].copy(),
                     gyro=data[:, 1:4].copy(), accel=data[:, 4:7].copy())


def trace_filename(sensor_id: int, trace_format: str) -> str:
    return f"sensor_{sensor_id}.{'csv' if trace_format == 'csv' else 'bin'}"


def read_trace(path: str) -> ImuStream:
    """Read a trace, picking the format from the extension."""
    if path.endswith(".csv"):
        return read_trace_csv(path)
    if path.endswith(".bin"):
        return read_trace_binary(path)
    raise TraceFormatError(f"{path}: unknown trace extension (expected .csv or .bin)")


def write_trace(stream: ImuStream, path: str):
    if path.endswith(".csv"):
        write_trace_csv(stream, path)
    elif path.endswith(".bin"):
        write_trace_binary(stream, path)
    else:
        raise TraceFormatError(f"{path}: unknown trace extension (expected .csv or .bin)")


def write_streams(streams: dict[int, ImuStream], directory: str, trace_format: str = "csv") -> list[str]:
    """Write every stream to directory/sensor_<id>.<ext>; returns the paths."""
    paths = []
    for sid in sorted(streams):
        path = os.path.join(directory, trace_filename(sid, trace_format))
        write_trace(streams[sid], path)
        paths.append(path)
    return paths


def read_streams(directory: str) -> dict[int, ImuStream]:
    """
    Read all sensor_<id> traces in a directory.

    Raises:
        FileNotFoundError: no traces in the directory
    """
    paths = sorted(glob.glob(os.path.join(directory, "sensor_*.csv")) +
                   glob.glob(os.path.join(directory, "sensor_*.bin")))
    if not paths:
        raise FileNotFoundError(f"No sensor traces found in {directory}")
    streams = {}
    for path in paths:
        stream = read_trace(path)
        if stream.sensor_id in streams:
            raise TraceFormatError(f"Sensor {stream.sensor_id} has more than one trace in {directory}")
        streams[stream.sensor_id] = stream
    return streams


def save_truth_npz(truth: GroundTruth, path: str):
    _ensure_parent(path)
    np.savez(path, t=truth.t, q=truth.q, omega_body=truth.omega_body, alpha_world=truth.alpha_world,
             a_tip=truth.a_tip, a_base=truth.a_base, p_tip=truth.p_tip, p_base=truth.p_base,
             field=truth.field)


def load_truth_npz(path: str) -> GroundTruth:
    with np.load(path) as data:
        return GroundTruth(**{key: data[key] for key in data.files})


def write_pose_log(log: PipelineLog, path: str):
    """Write estimated orientations as t,sensor,w,x,y,z rows, time-major."""
    _ensure_parent(path)
    frames = []
    for sid in sorted(log.q):
        q = log.q[sid]
        frame = pd.DataFrame(q, columns=["w", "x", "y", "z"])
        frame.insert(0, "sensor", sid)
        frame.insert(0, "t", log.t[:len(q)])
        frames.append(frame)
    table = pd.concat(frames, ignore_index=True).sort_values(["t", "sensor"], kind="stable")
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_pose_log(path: str) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Returns sensor id -> (t (n,), q (n, 4))."""
    table = pd.read_csv(path, float_precision="round_trip")
    if list(table.columns) != POSE_COLUMNS:
        raise TraceFormatError(f"{path}: expected columns {','.join(POSE_COLUMNS)}")
    out = {}
    for sid, group in table.groupby("sensor", sort=True):
        out[int(sid)] = (group["t"].to_numpy(), group[["w", "x", "y", "z"]].to_numpy())
    return out


def _metric_rows(result: ExperimentResult) -> list[dict]:
    rows = []
    for rep in result.reports:
        metrics = {"rmse": rep.rmse, "mae": rep.mae, **rep.extras}
        for metric, value in metrics.items():
            if value is None or isinstance(value, str):
                continue
            rows.append({"scenario": rep.scenario, "metric": metric, "value": float(value),
                         "n": rep.n, "seed": rep.seed})
    return rows


def write_report_csv(result: ExperimentResult, path: str):
    """scenario,metric,value,n,seed; rmse, mae and every numeric extra get a row."""
    _ensure_parent(path)
    table = pd.DataFrame(_metric_rows(result), columns=REPORT_COLUMNS)
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_report_json(result: ExperimentResult, path: str):
    _ensure_parent(path)
    payload = {
        "experiment": result.name,
        "reports": [asdict(rep) for rep in result.reports],
    }
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def write_gnuplot_trace(series: ErrorSeries, path: str):
    """Whitespace columns for gnuplot: update index, value, aux (0 when absent)."""
    _ensure_parent(path)
    aux = series.aux if series.aux is not None else np.zeros(len(series.values))
    with open(path, 'w', encoding='utf-8') as f:
        f.write(f"# {series.scenario} {series.axis} ({series.unit})\n")
        f.write("# update value aux\n")
        for k, (value, extra) in enumerate(zip(series.values.tolist(), np.asarray(aux).tolist())):
            f.write(f"{k} {value:.6f} {extra:.6f}\n")


def write_bus_trace(messages: Iterable[BusMessage], path: str):
    """One line per message: t_us direction sensor_id hexpayload."""
    _ensure_parent(path)
    with open(path, 'w', encoding='utf-8') as f:
        for msg in messages:
            f.write(f"{msg.t_us} {msg.direction} {msg.sensor_id} {msg.hex()}\n")


def read_bus_trace(path: str) -> list[BusMessage]:
    messages = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise TraceFormatError(f"{path}:{line_no}: expected 4 fields, got {len(parts)}")
            t_us, direction, sid, payload = parts
            messages.append(BusMessage(direction, int(sid), bytes.fromhex(payload), int(t_us)))
    return messages
