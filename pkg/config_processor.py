#!/usr/bin/env python3
"""
Config Processor - Load, validate and save YAML run configurations.

One YAML file describes a whole run: the chain, its motion programs, the
sensor noise, filter tuning, bus timings, experiment settings and outputs.
Validation errors name the offending field (e.g. chain.limbs[1].length_r).
"""

import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, replace
from typing import Any, Optional

import yaml

from chainmodel import (
    ChainSpec,
    ChainValidationError,
    LimbNode,
    arm_chain,
    boom_chain,
    chain_to_dict,
    full_body_chain,
    serial_chain,
    upper_body_chain,
    validate,
)
from estimator import FilterParams
from netsim import QuantSpec, ScheduleModel
from rotmath import IDENTITY, NonFiniteError, UnitQuaternion, Vec3
from synthgen import EARTH_FIELD, JointProgram, LinearTerm, NoiseSpec, SineTerm, TrajectorySpec

CHAIN_PRESETS = {
    "single": lambda: serial_chain([0.5], ["limb"]),
    "boom": boom_chain,
    "arm": arm_chain,
    "upper_body": upper_body_chain,
    "full_body": full_body_chain,
}

_REQUIRED = object()


class ConfigError(ValueError):
    """Raised when a run config is invalid. field is the dotted path of the bad value."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}" if field_path else message)
        self.field = field_path


@dataclass(frozen=True)
class ExperimentSettings:
    """Knobs of the evaluation experiments. Times in seconds, angles in degrees."""
    runs: int = 20
    correction_rate_hz: float = 30.0
    initial_yaw_error_deg: float = 90.0
    excitation_accel: float = 11.0
    excitation_frequency_hz: float = 1.0
    excitation_duration_s: float = 4.0
    settle_s: float = 0.5
    corrections_enabled: bool = True
    drift_runs: int = 50
    drift_duration_s: float = 60.0
    drift_thresholds_deg: tuple[float, ...] = (0.25, 0.5, 1.0)
    drift_checkpoints_s: tuple[float, ...] = (5.0, 20.0, 60.0)
    prediction_duration_s: float = 10.0
    accuracy_duration_s: float = 10.0
    moving_rate_rad_s: float = 1.0
    unobservable_drift_deg: float = 10.0
    bus_sample_rate_hz: float = 500.0
    bus_duration_s: float = 6.0
    noise_duration_s: float = 60.0
    target_time_to_1deg_s: float = 29.7


@dataclass(frozen=True)
class OutputSettings:
    """directory None means: take CHAIN_TRACKER_OUTPUT_DIR, else ./output."""
    directory: Optional[str] = None
    trace_format: str = "csv"


@dataclass(frozen=True)
class RunConfig:
    chain: ChainSpec
    trajectory: TrajectorySpec
    noise: NoiseSpec
    filter: FilterParams
    schedule: ScheduleModel
    quant: QuantSpec
    seed: int
    experiment: ExperimentSettings
    outputs: OutputSettings


def default_run_config(seed: int = 0) -> RunConfig:
    """Boom chain at rest under Earth gravity with noiseless sensors."""
    return RunConfig(
        chain=boom_chain(),
        trajectory=TrajectorySpec(field=EARTH_FIELD),
        noise=NoiseSpec(seed=seed),
        filter=FilterParams(),
        schedule=ScheduleModel(),
        quant=QuantSpec(),
        seed=seed,
        experiment=ExperimentSettings(),
        outputs=OutputSettings(),
    )


def with_seed(config: RunConfig, seed: int) -> RunConfig:
    """Same config with the master seed (and the noise seed) replaced."""
    if seed < 0:
        raise ConfigError("seed", f"must be >= 0, got {seed}")
    return replace(config, seed=seed, noise=replace(config.noise, seed=seed))


# ----------------------------------------------------------------------
# Field readers
# ----------------------------------------------------------------------

def _section(raw: dict, key: str, path: str) -> dict:
    value = raw.get(key)
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(path, "must be a mapping")
    return value


def _number(data: dict, key: str, path: str, default: Any = _REQUIRED,
            minimum: Optional[float] = None, strict: bool = False) -> float:
    full = f"{path}.{key}" if path else key
    if key not in data or data[key] is None:
        if default is _REQUIRED:
            raise ConfigError(full, "is required")
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(full, f"must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(full, f"must be finite, got {value}")
    if minimum is not None:
        if strict and value <= minimum:
            raise ConfigError(full, f"must be > {minimum:g}, got {value:g}")
        if not strict and value < minimum:
            raise ConfigError(full, f"must be >= {minimum:g}, got {value:g}")
    return value


def _integer(data: dict, key: str, path: str, default: Any = _REQUIRED,
             minimum: Optional[int] = None) -> int:
    full = f"{path}.{key}" if path else key
    if key not in data or data[key] is None:
        if default is _REQUIRED:
            raise ConfigError(full, "is required")
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(full, f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(full, f"must be >= {minimum}, got {value}")
    return value


def _floats(data: dict, key: str, path: str, size: int, default: Any) -> tuple[float, ...]:
    full = f"{path}.{key}"
    value = data.get(key)
    if value is None:
        return default
    if not isinstance(value, (list, tuple)) or len(value) != size:
        raise ConfigError(full, f"must be a list of {size} numbers, got {value!r}")
    out = []
    for i, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)) or not math.isfinite(item):
            raise ConfigError(f"{full}[{i}]", f"must be a finite number, got {item!r}")
        out.append(float(item))
    return tuple(out)


def _vec3(data: dict, key: str, path: str, default: Vec3) -> Vec3:
    values = _floats(data, key, path, 3, None)
    return default if values is None else Vec3.of(values)


def _quat(data: dict, key: str, path: str) -> UnitQuaternion:
    values = _floats(data, key, path, 4, None)
    if values is None:
        return IDENTITY
    try:
        return UnitQuaternion.of(values)
    except (NonFiniteError, ValueError) as e:
        raise ConfigError(f"{path}.{key}", str(e)) from e


def _list(data: dict, key: str, path: str) -> list:
    value = data.get(key)
    if value is None:
        return []
    if not isinstance(value, list):
        raise ConfigError(f"{path}.{key}", "must be a list")
    return value


# ----------------------------------------------------------------------
# Sections
# ----------------------------------------------------------------------

def _parse_chain(raw: dict) -> ChainSpec:
    section = _section(raw, "chain", "chain")
    preset = section.get("preset")
    entries = section.get("limbs")
    if preset is not None and entries is not None:
        raise ConfigError("chain", "give either preset or limbs, not both")
    if preset is not None:
        if preset not in CHAIN_PRESETS:
            raise ConfigError("chain.preset", f"unknown preset {preset!r} (known: {', '.join(CHAIN_PRESETS)})")
        return CHAIN_PRESETS[preset]()
    if entries is None:
        return boom_chain()
    if not isinstance(entries, list):
        raise ConfigError("chain.limbs", "must be a list")

    limbs = []
    for i, entry in enumerate(entries):
        path = f"chain.limbs[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(path, "must be a mapping")
        parent = entry.get("parent_id")
        if parent is not None and (isinstance(parent, bool) or not isinstance(parent, int)):
            raise ConfigError(f"{path}.parent_id", f"must be an integer or null, got {parent!r}")
        limbs.append(LimbNode(
            id=_integer(entry, "id", path, default=i, minimum=0),
            parent_id=parent,
            length_r=_number(entry, "length_r", path, minimum=0.0, strict=True),
            name=entry.get("name"),
        ))
    try:
        return validate(ChainSpec(limbs=tuple(limbs)))
    except ChainValidationError as e:
        raise ConfigError("chain.limbs", str(e)) from e


def _parse_trajectory(raw: dict, chain: ChainSpec) -> TrajectorySpec:
    section = _section(raw, "trajectory", "trajectory")
    path = "trajectory"

    joints = []
    for i, entry in enumerate(_list(section, "joints", path)):
        jpath = f"{path}.joints[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(jpath, "must be a mapping")
        limb_id = _integer(entry, "limb_id", jpath, minimum=0)
        if limb_id >= len(chain):
            raise ConfigError(f"{jpath}.limb_id", f"limb {limb_id} is not in the chain")
        axis = _vec3(entry, "axis", jpath, Vec3(0.0, 0.0, 1.0))
        if axis.norm() == 0.0:
            raise ConfigError(f"{jpath}.axis", "must not be zero")
        terms = []
        for j, term in enumerate(_list(entry, "terms", jpath)):
            tpath = f"{jpath}.terms[{j}]"
            if not isinstance(term, dict):
                raise ConfigError(tpath, "must be a mapping")
            terms.append(SineTerm(
                amplitude=_number(term, "amplitude", tpath),
                frequency_hz=_number(term, "frequency_hz", tpath, minimum=0.0, strict=True),
                phase_rad=_number(term, "phase_rad", tpath, default=0.0),
            ))
        joints.append(JointProgram(
            limb_id=limb_id,
            axis=axis,
            rest=_quat(entry, "rest", jpath),
            offset_rad=_number(entry, "offset_rad", jpath, default=0.0),
            rate_rad_s=_number(entry, "rate_rad_s", jpath, default=0.0),
            terms=tuple(terms),
        ))
    ids = [jp.limb_id for jp in joints]
    if len(ids) != len(set(ids)):
        raise ConfigError(f"{path}.joints", f"more than one program for the same limb: {ids}")

    motion = []
    for i, entry in enumerate(_list(section, "root_motion", path)):
        mpath = f"{path}.root_motion[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(mpath, "must be a mapping")
        direction = _vec3(entry, "direction", mpath, Vec3(1.0, 0.0, 0.0))
        if direction.norm() == 0.0:
            raise ConfigError(f"{mpath}.direction", "must not be zero")
        start = _number(entry, "start_s", mpath, default=0.0, minimum=0.0)
        stop = _number(entry, "stop_s", mpath, default=None)
        if stop is not None and stop < start:
            raise ConfigError(f"{mpath}.stop_s", f"must be >= start_s ({start:g}), got {stop:g}")
        motion.append(LinearTerm(
            direction=direction,
            amplitude=_number(entry, "amplitude", mpath),
            frequency_hz=_number(entry, "frequency_hz", mpath, minimum=0.0, strict=True),
            phase_rad=_number(entry, "phase_rad", mpath, default=0.0),
            start_s=start,
            stop_s=stop,
        ))

    return TrajectorySpec(
        joints=tuple(joints),
        root_motion=tuple(motion),
        field=_vec3(section, "field", path, EARTH_FIELD),
        duration_s=_number(section, "duration_s", path, default=10.0, minimum=0.0, strict=True),
        sample_rate_hz=_number(section, "sample_rate_hz", path, default=100.0, minimum=0.0, strict=True),
    )


def _parse_noise(raw: dict, seed: int) -> NoiseSpec:
    section = _section(raw, "noise", "noise")
    return NoiseSpec(
        accel_sigma=_number(section, "accel_sigma", "noise", default=0.0, minimum=0.0),
        gyro_sigma=_number(section, "gyro_sigma", "noise", default=0.0, minimum=0.0),
        gyro_bias=_vec3(section, "gyro_bias", "noise", Vec3.zero()),
        gyro_bias_sigma=_number(section, "gyro_bias_sigma", "noise", default=0.0, minimum=0.0),
        seed=seed,
    )


def _parse_filter(raw: dict) -> FilterParams:
    section = _section(raw, "filter", "filter")
    defaults = FilterParams()
    values = {
        key: _number(section, key, "filter", default=getattr(defaults, key), minimum=0.0, strict=True)
        for key in ("noise_floor_mu", "snr_saturation", "gamma_max", "beta_omega_ref", "beta_alpha_ref")
    }
    if values["gamma_max"] > 1.0:
        raise ConfigError("filter.gamma_max", f"must be <= 1, got {values['gamma_max']:g}")
    return FilterParams(**values)


def _parse_schedule(raw: dict) -> ScheduleModel:
    section = _section(raw, "schedule", "schedule")
    defaults = ScheduleModel()
    values = {
        key: _integer(section, key, "schedule", default=getattr(defaults, key), minimum=0)
        for key in ("root_min_us", "root_max_us", "child_min_us", "child_max_us")
    }
    if values["root_max_us"] < values["root_min_us"]:
        raise ConfigError("schedule.root_max_us", "must be >= root_min_us")
    if values["child_max_us"] < values["child_min_us"]:
        raise ConfigError("schedule.child_max_us", "must be >= child_min_us")
    return ScheduleModel(**values)


def _parse_quant(raw: dict) -> QuantSpec:
    section = _section(raw, "quant", "quant")
    return QuantSpec(
        quat_full_scale=_number(section, "quat_full_scale", "quant", default=1.0, minimum=0.0, strict=True),
        accel_full_scale=_number(section, "accel_full_scale", "quant", default=156.9, minimum=0.0, strict=True),
    )


def _parse_experiment(raw: dict) -> ExperimentSettings:
    section = _section(raw, "experiment", "experiment")
    path = "experiment"
    defaults = ExperimentSettings()
    values: dict[str, Any] = {}
    for key, default in asdict(defaults).items():
        if key in ("runs", "drift_runs"):
            values[key] = _integer(section, key, path, default=default, minimum=1)
        elif key == "corrections_enabled":
            value = section.get(key, default)
            if not isinstance(value, bool):
                raise ConfigError(f"{path}.{key}", f"must be true or false, got {value!r}")
            values[key] = value
        elif key in ("drift_thresholds_deg", "drift_checkpoints_s"):
            if section.get(key) is None:
                items = list(default)
            else:
                items = _list(section, key, path)
                if not items:
                    raise ConfigError(f"{path}.{key}", "must list at least one value")
            for i, item in enumerate(items):
                if isinstance(item, bool) or not isinstance(item, (int, float)) or not item > 0:
                    raise ConfigError(f"{path}.{key}[{i}]", f"must be a number > 0, got {item!r}")
            values[key] = tuple(float(item) for item in items)
        elif key in ("initial_yaw_error_deg", "excitation_accel", "settle_s",
                     "moving_rate_rad_s", "unobservable_drift_deg"):
            values[key] = _number(section, key, path, default=default, minimum=0.0)
        else:
            values[key] = _number(section, key, path, default=default, minimum=0.0, strict=True)
    unknown = sorted(set(section) - set(values))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown setting")
    return ExperimentSettings(**values)


def _parse_outputs(raw: dict) -> OutputSettings:
    section = _section(raw, "outputs", "outputs")
    directory = section.get("directory")
    if directory is not None and not isinstance(directory, str):
        raise ConfigError("outputs.directory", f"must be a string, got {directory!r}")
    trace_format = section.get("trace_format", "csv")
    if trace_format not in ("csv", "binary"):
        raise ConfigError("outputs.trace_format", f"must be csv or binary, got {trace_format!r}")
    return OutputSettings(directory=directory, trace_format=trace_format)


def config_from_dict(raw: dict) -> RunConfig:
    """
    Build a RunConfig from a parsed YAML document.

    Missing sections take their defaults.

    Raises:
        ConfigError: naming the first invalid field
    """
    if not isinstance(raw, dict):
        raise ConfigError("", "Config must be a mapping at the top level")
    known = {"seed", "chain", "trajectory", "noise", "filter", "schedule", "quant", "experiment", "outputs"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown section")

    seed = _integer(raw, "seed", "", default=0, minimum=0)
    chain = _parse_chain(raw)
    return RunConfig(
        chain=chain,
        trajectory=_parse_trajectory(raw, chain),
        noise=_parse_noise(raw, seed),
        filter=_parse_filter(raw),
        schedule=_parse_schedule(raw),
        quant=_parse_quant(raw),
        seed=seed,
        experiment=_parse_experiment(raw),
        outputs=_parse_outputs(raw),
    )


def validate_config(raw: dict) -> tuple[bool, Optional[str]]:
    """
    Validate a run configuration.

    Args:
        raw: Parsed YAML document

    Returns:
        Tuple of (is_valid, error_message)
    """
    if not raw:
        return False, "Config is empty"
    try:
        config_from_dict(raw)
    except ConfigError as e:
        return False, str(e)
    return True, None


def _vec(v: Vec3) -> list[float]:
    return list(v.as_tuple())


def config_to_dict(config: RunConfig) -> dict:
    """Plain-data form of a RunConfig; config_from_dict() reads it back unchanged."""
    traj = config.trajectory
    return {
        "seed": config.seed,
        "chain": chain_to_dict(config.chain),
        "trajectory": {
            "duration_s": traj.duration_s,
            "sample_rate_hz": traj.sample_rate_hz,
            "field": _vec(traj.field),
            "joints": [
                {
                    "limb_id": jp.limb_id,
                    "axis": _vec(jp.axis),
                    "rest": list(jp.rest.as_tuple()),
                    "offset_rad": jp.offset_rad,
                    "rate_rad_s": jp.rate_rad_s,
                    "terms": [
                        {"amplitude": t.amplitude, "frequency_hz": t.frequency_hz, "phase_rad": t.phase_rad}
                        for t in jp.terms
                    ],
                }
                for jp in traj.joints
            ],
            "root_motion": [
                {
                    "direction": _vec(m.direction),
                    "amplitude": m.amplitude,
                    "frequency_hz": m.frequency_hz,
                    "phase_rad": m.phase_rad,
                    "start_s": m.start_s,
                    "stop_s": m.stop_s,
                }
                for m in traj.root_motion
            ],
        },
        "noise": {
            "accel_sigma": config.noise.accel_sigma,
            "gyro_sigma": config.noise.gyro_sigma,
            "gyro_bias": _vec(config.noise.gyro_bias),
            "gyro_bias_sigma": config.noise.gyro_bias_sigma,
        },
        "filter": asdict(config.filter),
        "schedule": asdict(config.schedule),
        "quant": asdict(config.quant),
        "experiment": {
            key: list(value) if isinstance(value, tuple) else value
            for key, value in asdict(config.experiment).items()
        },
        "outputs": asdict(config.outputs),
    }


def config_hash(config: RunConfig) -> str:
    """First 16 hex chars of the SHA-256 of the canonical JSON form."""
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def load_run_config(config_path: str) -> RunConfig:
    """
    Load and validate a run config from a YAML file.

    Args:
        config_path: Path to YAML config file

    Returns:
        Validated RunConfig

    Raises:
        FileNotFoundError: config_path does not exist
        ConfigError: the file is not valid YAML or a field is invalid
    """
    if not os.path.exists(config_path):
        raise FileNotFoundError(f"Config file not found: {config_path}")

    with open(config_path, 'r', encoding='utf-8') as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError("", f"{config_path} is not valid YAML: {e}") from e

    if not raw:
        raise ConfigError("", f"{config_path} is empty")
    return config_from_dict(raw)


def save_run_config(config: RunConfig, config_path: str):
    """Write config as YAML. load_run_config() of the result equals config."""
    directory = os.path.dirname(config_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(config_path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(config_to_dict(config), f, sort_keys=False, default_flow_style=None)


EXAMPLE_CONFIG = """# Chain tracker run configuration
# One file per run; every section is optional and falls back to defaults.

seed: 7

# Either a preset (single, boom, arm, upper_body, full_body) or explicit limbs.
# Limbs extend along their body +y axis; length_r is in meters.
chain:
  limbs:
    - {id: 0, parent_id: null, length_r: 0.5, name: boom_inner}
    - {id: 1, parent_id: 0, length_r: 0.5, name: boom_outer}

trajectory:
  duration_s: 10.0
  sample_rate_hz: 100.0
  # Specific-force offset: [0, 0, 9.80665] under gravity, [0, 0, 0] for zero-g
  field: [0.0, 0.0, 9.80665]
  joints:
    # Joint angle about a fixed axis of the parent's tip frame
    - limb_id: 0
      axis: [0.0, 0.0, 1.0]
      terms:
        - {amplitude: 0.5, frequency_hz: 0.5}
    - limb_id: 1
      axis: [1.0, 0.0, 0.0]
      terms:
        - {amplitude: 0.5, frequency_hz: 0.5, phase_rad: 1.0}
  # Windowed sinusoidal acceleration of the root base (m/s^2)
  root_motion: []

# Per-axis sensor noise; these values match the measured base sensor
noise:
  accel_sigma: 0.043
  gyro_sigma: 0.00152
  gyro_bias: [0.00034, 0.00034, 0.00034]
  gyro_bias_sigma: 0.0

filter:
  noise_floor_mu: 0.035
  snr_saturation: 25.0
  gamma_max: 0.1
  beta_omega_ref: 0.5
  beta_alpha_ref: 5.0

# Sensor response times on the bus (microseconds)
schedule:
  root_min_us: 0
  root_max_us: 2300
  child_min_us: 4100
  child_max_us: 6400

quant:
  quat_full_scale: 1.0
  accel_full_scale: 156.9

experiment:
  runs: 20
  correction_rate_hz: 30.0
  initial_yaw_error_deg: 90.0
  excitation_accel: 11.0
  excitation_duration_s: 4.0
  drift_runs: 50

outputs:
  # directory: output
  trace_format: csv
"""


def create_example_config(output_path: str = "run_config.yml"):
    """
    Create an example run config file.

    Args:
        output_path: Where to save the example config
    """
    with open(output_path, 'w', encoding='utf-8') as f:
        f.write(EXAMPLE_CONFIG)

    print(f"[+] Created example config: {output_path}")
    print("[*] Edit this file and run:")
    print(f"    python chain_tracker.py simulate --config {output_path}")


if __name__ == "__main__":
    if len(sys.argv) > 1 and sys.argv[1] == "--example":
        create_example_config()
        sys.exit(0)

    config_path = sys.argv[1] if len(sys.argv) > 1 else "run_config.yml"

    print("=" * 70)
    print("RUN CONFIG CHECK")
    print("=" * 70)
    print()

    try:
        config = load_run_config(config_path)
    except (FileNotFoundError, ConfigError) as e:
        print(f"[!] {e}")
        sys.exit(1)

    print(f"[+] Config valid: {config_path}")
    print(f"[*] Sensors: {len(config.chain)}")
    print(f"[*] Seed: {config.seed}")
    print(f"[*] Hash: {config_hash(config)}")
