"""
Evaluation Kit - Error metrics and the simulated experiments.

Every experiment builds its scenario from a RunConfig, runs it with seeds
derived from config.seed and returns an ExperimentResult: one
ScenarioReport per scenario/variant plus the error series behind them.
Same config and seed give identical reports.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.spatial.transform import Rotation

from chainmodel import ChainSpec, arm_chain, boom_chain, full_body_chain, serial_chain, upper_body_chain
from config_processor import ConfigError, RunConfig, config_hash
from estimator import (
    EstimatorState,
    SensorNode,
    dead_reckon_step,
    noise_floor_from_static,
    run_ideal_pipeline,
)
from netsim import BusSimulation, run_bus_pipeline, staleness_of_parent_accel
from rotmath import IDENTITY, UnitQuaternion, Vec3, compose, from_axis_angle, twist_angle
from synthgen import (
    EARTH_FIELD,
    GroundTruth,
    ImuStream,
    JointProgram,
    LinearTerm,
    NoiseSpec,
    SineTerm,
    TrajectorySpec,
    integrate_truth,
    synthesize_imu,
)

X_AXIS = Vec3(1.0, 0.0, 0.0)
Z_AXIS = Vec3(0.0, 0.0, 1.0)
ZERO_FIELD = Vec3(0.0, 0.0, 0.0)

# (mean absolute joint rate in rad/s, swing frequency in Hz)
PREDICTION_SCENARIOS = {
    "stationary": (0.0, 1.0),
    "slow": (0.72, 0.5),
    "fast": (2.13, 1.0),
}

# beta_override per variant; None lets beta() weigh the prediction
PREDICTION_VARIANTS = {
    "no_prediction": 0.0,
    "with_prediction": 1.0,
    "weighted": None,
}

MOVING_FREQUENCY_HZ = 0.5
TIMING_CHAINS = {2: boom_chain, 3: arm_chain, 7: upper_body_chain, 15: full_body_chain}


class EmptySeriesError(ValueError):
    """Raised when a metric is asked for an empty series."""


def _as_values(series) -> np.ndarray:
    values = np.asarray(series, dtype=float).ravel()
    if values.size == 0:
        raise EmptySeriesError("Error series is empty")
    return values


def rmse(series) -> float:
    """Root mean square of the errors."""
    values = _as_values(series)
    return float(np.sqrt(np.mean(values * values)))


def mae(series) -> float:
    """Mean absolute error; weights every value equally."""
    values = _as_values(series)
    return float(np.mean(np.abs(values)))


@dataclass
class ErrorSeries:
    """
    Per-step errors of one scenario and axis.

    t holds the matching times when known; aux carries one extra column
    for plotting (the lateral acceleration magnitude in yaw traces).
    """
    scenario: str
    axis: str
    values: np.ndarray
    unit: str = "deg"
    t: Optional[np.ndarray] = None
    aux: Optional[np.ndarray] = None

    def rmse(self) -> float:
        return rmse(self.values)

    def mae(self) -> float:
        return mae(self.values)


@dataclass
class ScenarioReport:
    """
    One row of results. rmse/mae are None for reports that carry only
    extras (drift times, bus timings).
    """
    scenario: str
    rmse: Optional[float]
    mae: Optional[float]
    n: int
    config_hash: str
    seed: int
    extras: dict = field(default_factory=dict)

    @classmethod
    def from_errors(cls, scenario: str, errors, config: RunConfig, **extras) -> "ScenarioReport":
        values = _as_values(errors)
        return cls(
            scenario=scenario,
            rmse=rmse(values),
            mae=mae(values),
            n=int(values.size),
            config_hash=config_hash(config),
            seed=config.seed,
            extras=extras,
        )

    @classmethod
    def from_extras(cls, scenario: str, n: int, config: RunConfig, **extras) -> "ScenarioReport":
        return cls(scenario=scenario, rmse=None, mae=None, n=n,
                   config_hash=config_hash(config), seed=config.seed, extras=extras)


@dataclass
class ExperimentResult:
    name: str
    reports: list[ScenarioReport]
    series: list[ErrorSeries] = field(default_factory=list)

    def report(self, scenario: str) -> ScenarioReport:
        for rep in self.reports:
            if rep.scenario == scenario:
                return rep
        raise KeyError(f"No report for scenario {scenario!r} in {self.name}")


# ----------------------------------------------------------------------
# Scenario helpers
# ----------------------------------------------------------------------

def run_seed(master_seed: int, run: int) -> int:
    """Seed of one repetition, derived from the master seed."""
    return int(np.random.SeedSequence([int(master_seed), int(run)]).generate_state(1)[0])


def swing_program(limb_id: int, axis: Vec3, mean_rate_rad_s: float, frequency_hz: float,
                  phase_rad: float = 0.0) -> JointProgram:
    """
    Sinusoidal joint swing with the given mean absolute rate.

    For angle A*sin(2*pi*f*t) the mean |rate| is 4*A*f, so A = mean / (4f).
    """
    if mean_rate_rad_s == 0.0:
        return JointProgram(limb_id=limb_id, axis=axis)
    amplitude = mean_rate_rad_s / (4.0 * frequency_hz)
    return JointProgram(limb_id=limb_id, axis=axis,
                        terms=(SineTerm(amplitude, frequency_hz, phase_rad),))


def orientation_error_deg(q_est: np.ndarray, q_true: np.ndarray) -> np.ndarray:
    """Angle of q_true^-1 * q_est per row, in degrees. Inputs are (n, 4) wxyz."""
    est = Rotation.from_quat(np.asarray(q_est)[:, [1, 2, 3, 0]])
    true = Rotation.from_quat(np.asarray(q_true)[:, [1, 2, 3, 0]])
    return np.degrees((true.inv() * est).magnitude())


def world_twist_deg(q_est: np.ndarray, q_true: np.ndarray, axis: Vec3) -> np.ndarray:
    """Signed twist about a world axis of the error q_est * q_true^-1, in degrees."""
    out = np.empty(len(q_est))
    for k, (est, true) in enumerate(zip(np.asarray(q_est).tolist(), np.asarray(q_true).tolist())):
        error = compose(UnitQuaternion.of(est), UnitQuaternion.of(true).inverse())
        out[k] = math.degrees(twist_angle(error, axis))
    return out


def _two_limb_chain(config: RunConfig, strict: bool = False) -> ChainSpec:
    if len(config.chain) == 2:
        return config.chain
    if strict:
        raise ConfigError("chain.limbs", f"experiment needs a 2-limb chain, got {len(config.chain)} limbs")
    return boom_chain()


def _truth_and_streams(chain: ChainSpec, traj: TrajectorySpec,
                       noise: NoiseSpec) -> tuple[GroundTruth, dict[int, ImuStream]]:
    truth = integrate_truth(chain, traj)
    return truth, synthesize_imu(truth, chain, noise)


def _truth_initial(truth: GroundTruth, chain: ChainSpec) -> dict[int, UnitQuaternion]:
    return {node.id: truth.orientation(node.id, 0) for node in chain.limbs}


def _moving_joints(chain: ChainSpec, mean_rate: float) -> tuple[JointProgram, ...]:
    root, child = chain.traversal_order[0], chain.traversal_order[1]
    return (
        swing_program(root, Z_AXIS, mean_rate, MOVING_FREQUENCY_HZ),
        swing_program(child, X_AXIS, mean_rate, MOVING_FREQUENCY_HZ, phase_rad=1.0),
    )


# ----------------------------------------------------------------------
# Yaw recovery
# ----------------------------------------------------------------------

def _yaw_run(config: RunConfig, chain: ChainSpec, noise: NoiseSpec, initial_error_deg: float,
             excitation_accel: float, corrections_enabled: bool) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s = config.experiment
    duration = s.settle_s + s.excitation_duration_s
    motion = ()
    if excitation_accel > 0:
        motion = (LinearTerm(X_AXIS, excitation_accel, s.excitation_frequency_hz,
                             start_s=s.settle_s, stop_s=duration),)
    traj = TrajectorySpec(root_motion=motion, field=config.trajectory.field,
                          duration_s=duration, sample_rate_hz=config.trajectory.sample_rate_hz)
    truth, streams = _truth_and_streams(chain, traj, noise)

    child = chain.traversal_order[1]
    initial = _truth_initial(truth, chain)
    initial[child] = compose(from_axis_angle(math.radians(initial_error_deg), Z_AXIS), initial[child])

    log = run_ideal_pipeline(chain, streams, config.filter, initial, s.correction_rate_hz,
                             corrections_enabled=corrections_enabled)
    yaw = world_twist_deg(log.q[child], truth.q[child], Z_AXIS)
    lateral = np.linalg.norm(truth.a_tip[chain.traversal_order[0]] - truth.field, axis=1)
    return yaw, truth.t, lateral


def experiment_yaw_recovery(config: RunConfig) -> ExperimentResult:
    """
    Recover a large yaw error of the child from lateral root accelerations.

    The child starts with initial_yaw_error_deg about the vertical; the
    root is shaken along x for excitation_duration_s after settle_s. The
    final yaw error is collected over experiment.runs seeds. Two controls
    run once: corrections off, and no error with no motion.
    """
    s = config.experiment
    chain = _two_limb_chain(config, strict=True)

    finals = []
    series = []
    for run in range(s.runs):
        noise = replace(config.noise, seed=run_seed(config.seed, run))
        yaw, t, lateral = _yaw_run(config, chain, noise, s.initial_yaw_error_deg,
                                   s.excitation_accel, s.corrections_enabled)
        finals.append(yaw[-1])
        if run == 0:
            series.append(ErrorSeries("yaw_recovery", "yaw", yaw, "deg", t=t, aux=lateral))
    finals = np.array(finals)

    reports = [ScenarioReport.from_errors(
        "yaw_recovery", finals, config,
        initial_deg=s.initial_yaw_error_deg,
        mean_deg=float(np.mean(finals)),
        min_deg=float(np.min(finals)),
        max_deg=float(np.max(finals)),
        max_abs_deg=float(np.max(np.abs(finals))),
    )]

    control_noise = replace(config.noise, seed=run_seed(config.seed, s.runs))
    yaw_off, _, _ = _yaw_run(config, chain, control_noise, s.initial_yaw_error_deg,
                             s.excitation_accel, corrections_enabled=False)
    reports.append(ScenarioReport.from_errors("corrections_disabled", [yaw_off[-1]], config))

    yaw_still, _, _ = _yaw_run(config, chain, NoiseSpec(seed=config.seed), 0.0, 0.0,
                               corrections_enabled=True)
    reports.append(ScenarioReport.from_errors("no_drift_no_motion", yaw_still, config))

    return ExperimentResult("yaw_recovery", reports, series)


# ----------------------------------------------------------------------
# Acceleration prediction
# ----------------------------------------------------------------------

def _prediction_errors(config: RunConfig, mean_rate: float, frequency_hz: float,
                       noise: NoiseSpec, variants: dict[str, Optional[float]]) -> dict[str, np.ndarray]:
    """World-frame base acceleration errors (n-1, 3) of a root limb swinging about x."""
    r = config.chain.limbs[config.chain.traversal_order[0]].length_r
    chain = serial_chain([r])
    traj = TrajectorySpec(
        joints=(swing_program(0, X_AXIS, mean_rate, frequency_hz),),
        field=EARTH_FIELD,
        duration_s=config.experiment.prediction_duration_s,
        sample_rate_hz=config.trajectory.sample_rate_hz,
    )
    truth, streams = _truth_and_streams(chain, traj, noise)
    stream = streams[0]

    errors = {}
    for variant, weight in variants.items():
        node = SensorNode(0, r, config.filter, truth.orientation(0, 0), beta_override=weight, record=False)
        est = np.empty((len(stream) - 1, 3))
        for k, sample in enumerate(stream.samples()):
            node.ingest(sample)
            if k:
                est[k - 1] = node.base_accel_world().as_tuple()
        errors[variant] = est - truth.a_base[0, 1:]
    return errors


def experiment_accel_prediction(config: RunConfig) -> ExperimentResult:
    """
    World acceleration at the limb base with and without motion prediction.

    A single limb swings about x with a fixed base under gravity; the
    estimate starts from truth. Errors are the world-frame components of
    q * a_base against the true base specific force, pooled over axes.
    """
    reports = []
    series = []
    for scenario, (mean_rate, frequency_hz) in PREDICTION_SCENARIOS.items():
        errors = _prediction_errors(config, mean_rate, frequency_hz, config.noise, PREDICTION_VARIANTS)
        baseline = rmse(errors["no_prediction"])
        for variant, err in errors.items():
            value = rmse(err)
            reports.append(ScenarioReport.from_errors(
                f"{scenario}/{variant}", err, config,
                mean_rate_rad_s=mean_rate,
                improvement=baseline / value if value > 0 else None,
            ))
            series.append(ErrorSeries(scenario, variant, np.linalg.norm(err, axis=1), "m/s^2"))
    return ExperimentResult("accel_prediction", reports, series)


def experiment_local_prediction_noise(config: RunConfig) -> ExperimentResult:
    """Per-axis noise that full-weight prediction adds on a stationary limb."""
    variants = {"no_prediction": 0.0, "with_prediction": 1.0}
    errors = _prediction_errors(config, 0.0, 1.0, config.noise, variants)
    reports = []
    for variant, err in errors.items():
        for i, axis in enumerate("xyz"):
            reports.append(ScenarioReport.from_errors(f"{variant}/{axis}", err[:, i], config))
    return ExperimentResult("local_prediction_noise", reports)


# ----------------------------------------------------------------------
# Dead-reckoning drift
# ----------------------------------------------------------------------

def static_drift_deg(stream: ImuStream, limb_length_r: float,
                     stop_at_deg: Optional[float] = None) -> np.ndarray:
    """
    Dead-reckoning error of a static sensor whose true orientation is identity.

    Args:
        stream: Static readings
        limb_length_r: Limb length (only carried by the state)
        stop_at_deg: Stop integrating once the error reaches this angle

    Returns:
        Error angle in degrees per sample (shorter when stopped early)
    """
    state = EstimatorState.initial(IDENTITY, limb_length_r)
    times = stream.t.tolist()
    gyros = stream.gyro.tolist()
    angles = [0.0]
    for k in range(1, len(times)):
        g = gyros[k]
        state = dead_reckon_step(state, Vec3(g[0], g[1], g[2]), times[k] - times[k - 1])
        q = state.q
        angle = math.degrees(2.0 * math.atan2(math.sqrt(q.x * q.x + q.y * q.y + q.z * q.z), abs(q.w)))
        angles.append(angle)
        if stop_at_deg is not None and angle >= stop_at_deg:
            break
    return np.array(angles)


def _static_stream(config: RunConfig, noise: NoiseSpec, duration_s: float) -> tuple[ImuStream, float]:
    r = config.chain.limbs[config.chain.traversal_order[0]].length_r
    chain = serial_chain([r])
    traj = TrajectorySpec(field=EARTH_FIELD, duration_s=duration_s,
                          sample_rate_hz=config.trajectory.sample_rate_hz)
    _, streams = _truth_and_streams(chain, traj, noise)
    return streams[0], r


def time_to_threshold(t: np.ndarray, angles_deg: np.ndarray, threshold_deg: float) -> Optional[float]:
    """First time the error reaches threshold_deg; None when it never does (censored)."""
    hits = np.nonzero(angles_deg >= threshold_deg)[0]
    if hits.size == 0:
        return None
    return float(t[hits[0]])


def _summary(values: list[Optional[float]], unit: str) -> dict:
    known = [v for v in values if v is not None]
    return {
        f"mean_{unit}": float(np.mean(known)) if known else None,
        f"min_{unit}": float(np.min(known)) if known else None,
        f"max_{unit}": float(np.max(known)) if known else None,
        "censored": len(values) - len(known),
    }


def experiment_drift_characterization(config: RunConfig) -> ExperimentResult:
    """
    Time for static dead reckoning to drift past each threshold, and the
    drift after each checkpoint, over experiment.drift_runs seeds.
    """
    s = config.experiment
    rate = config.trajectory.sample_rate_hz
    times: dict[float, list[Optional[float]]] = {thr: [] for thr in s.drift_thresholds_deg}
    after: dict[float, list[Optional[float]]] = {c: [] for c in s.drift_checkpoints_s}
    series = []

    for run in range(s.drift_runs):
        noise = replace(config.noise, seed=run_seed(config.seed, run))
        stream, r = _static_stream(config, noise, s.drift_duration_s)
        angles = static_drift_deg(stream, r)
        for thr in s.drift_thresholds_deg:
            times[thr].append(time_to_threshold(stream.t, angles, thr))
        for checkpoint in s.drift_checkpoints_s:
            k = int(round(checkpoint * rate))
            after[checkpoint].append(float(angles[k]) if k < len(angles) else None)
        if run == 0:
            series.append(ErrorSeries("static_drift", "total", angles, "deg", t=stream.t))

    reports = []
    for thr, values in times.items():
        reports.append(ScenarioReport.from_extras(f"time_to_{thr:g}deg", s.drift_runs, config,
                                                  **_summary(values, "s")))
    for checkpoint, values in after.items():
        known = [v for v in values if v is not None]
        if known:
            reports.append(ScenarioReport.from_errors(f"drift_after_{checkpoint:g}s", known, config,
                                                      **_summary(values, "deg")))
        else:
            reports.append(ScenarioReport.from_extras(f"drift_after_{checkpoint:g}s", 0, config,
                                                      **_summary(values, "deg")))
    return ExperimentResult("drift_characterization", reports, series)


def calibrate_gyro_bias(config: RunConfig, target_s: Optional[float] = None, runs: int = 5,
                        tolerance_s: float = 0.1, max_iterations: int = 30) -> tuple[Vec3, float]:
    """
    Find the gyro bias whose mean time-to-1-degree matches a target.

    Bisection over the bias magnitude; the direction comes from
    config.noise.gyro_bias (or the diagonal when it is zero).

    Args:
        config: Run config supplying noise and sample rate
        target_s: Target mean time to 1 degree (defaults to the experiment setting)
        runs: Seeded runs averaged per evaluation
        tolerance_s: Stop once the mean is this close to the target
        max_iterations: Bisection step limit

    Returns:
        (bias vector in rad/s, achieved mean time in s)
    """
    target = target_s or config.experiment.target_time_to_1deg_s
    if target <= 0:
        raise ValueError(f"target_s must be > 0, got {target}")
    bias = config.noise.gyro_bias
    direction = bias.normalized() if bias.norm() > 0 else Vec3(1.0, 1.0, 1.0).normalized()
    duration = 3.0 * target

    def mean_time(magnitude: float) -> float:
        results = []
        for run in range(runs):
            noise = replace(config.noise, gyro_bias=direction * magnitude, seed=run_seed(config.seed, run))
            stream, r = _static_stream(config, noise, duration)
            angles = static_drift_deg(stream, r, stop_at_deg=1.0)
            hit = time_to_threshold(stream.t, angles, 1.0)
            results.append(duration if hit is None else hit)
        return float(np.mean(results))

    guess = math.radians(1.0) / target
    lo, hi = 0.5 * guess, 2.0 * guess
    magnitude = guess
    achieved = mean_time(magnitude)
    for _ in range(max_iterations):
        if abs(achieved - target) <= tolerance_s:
            break
        if achieved > target:
            lo = magnitude
        else:
            hi = magnitude
        magnitude = 0.5 * (lo + hi)
        achieved = mean_time(magnitude)
    return direction * magnitude, achieved


# ----------------------------------------------------------------------
# Correction accuracy
# ----------------------------------------------------------------------

def _correction_angles(config: RunConfig, chain: ChainSpec, mean_rate: float,
                       noise: NoiseSpec) -> tuple[np.ndarray, np.ndarray]:
    joints = _moving_joints(chain, mean_rate) if mean_rate > 0 else ()
    traj = TrajectorySpec(joints=joints, field=EARTH_FIELD,
                          duration_s=config.experiment.accuracy_duration_s,
                          sample_rate_hz=config.trajectory.sample_rate_hz)
    truth, streams = _truth_and_streams(chain, traj, noise)
    log = run_ideal_pipeline(chain, streams, config.filter, _truth_initial(truth, chain),
                             config.experiment.correction_rate_hz)
    child = chain.traversal_order[1]
    theta = np.degrees([corr.theta_raw for _, corr in log.corrections[child]])
    phi = np.degrees([corr.phi for _, corr in log.corrections[child]])
    return theta, phi


def experiment_correction_accuracy(config: RunConfig) -> ExperimentResult:
    """
    Size of raw and filtered corrections on a drift-free chain.

    The estimate starts from truth, so every correction is error; the
    moving scenario swings root and child at experiment.moving_rate_rad_s.
    """
    chain = _two_limb_chain(config)
    reports = []
    series = []
    for scenario, mean_rate in (("stationary", 0.0), ("moving", config.experiment.moving_rate_rad_s)):
        theta, phi = _correction_angles(config, chain, mean_rate, config.noise)
        reports.append(ScenarioReport.from_errors(f"{scenario}/raw", theta, config))
        reports.append(ScenarioReport.from_errors(f"{scenario}/filtered", phi, config))
        series.append(ErrorSeries(scenario, "raw", theta))
        series.append(ErrorSeries(scenario, "filtered", phi))
    return ExperimentResult("correction_accuracy", reports, series)


# ----------------------------------------------------------------------
# Unobservability
# ----------------------------------------------------------------------

def _unobservable_run(config: RunConfig, chain: ChainSpec, drift_axis: Vec3,
                      noise: NoiseSpec) -> tuple[np.ndarray, np.ndarray, int]:
    s = config.experiment
    duration = s.excitation_duration_s
    # one-signed push along x: sin runs from 30 to 150 degrees over the window
    push = LinearTerm(X_AXIS, s.excitation_accel, 1.0 / (3.0 * duration),
                      phase_rad=math.pi / 6, start_s=0.0, stop_s=duration)
    traj = TrajectorySpec(root_motion=(push,), field=ZERO_FIELD, duration_s=duration,
                          sample_rate_hz=config.trajectory.sample_rate_hz)
    truth, streams = _truth_and_streams(chain, traj, noise)

    child = chain.traversal_order[1]
    initial = _truth_initial(truth, chain)
    initial[child] = compose(from_axis_angle(math.radians(s.unobservable_drift_deg), drift_axis), initial[child])

    log = run_ideal_pipeline(chain, streams, config.filter, initial, s.correction_rate_hz)
    return log.q[child], truth.q[child], len(log.corrections[child])


def _window_means(values: np.ndarray, windows: int) -> list[float]:
    return [float(np.mean(chunk)) for chunk in np.array_split(values, windows)]


def experiment_unobservability(config: RunConfig, windows: int = 4) -> ExperimentResult:
    """
    Drift about the excitation axis stays; drift about an orthogonal axis decays.

    Zero-g chain pushed along x with a noise-free gyro. The child starts
    with unobservable_drift_deg about x in one run and about z in another.
    """
    chain = _two_limb_chain(config)
    accel_only = NoiseSpec(accel_sigma=config.noise.accel_sigma, seed=run_seed(config.seed, 0))

    q_est, q_true, cycles = _unobservable_run(config, chain, X_AXIS, accel_only)
    twist = world_twist_deg(q_est, q_true, X_AXIS)
    change = twist - twist[0]
    reports = [ScenarioReport.from_errors(
        "excitation_axis", change, config,
        final_change_deg=float(change[-1]),
        max_change_deg=float(np.max(np.abs(change))),
        cycles=cycles,
    )]
    series = [ErrorSeries("excitation_axis", "x", change, t=None)]

    for scenario, noise in (("orthogonal_axis", accel_only),
                            ("orthogonal_axis_noiseless", NoiseSpec(seed=config.seed))):
        q_est, q_true, cycles = _unobservable_run(config, chain, Z_AXIS, noise)
        error = orientation_error_deg(q_est, q_true)
        means = _window_means(error, windows)
        extras = {f"window_{i}_deg": m for i, m in enumerate(means)}
        extras["monotone"] = all(b < a for a, b in zip(means, means[1:]))
        extras["reduction"] = means[-1] / means[0] if means[0] > 0 else None
        extras["cycles"] = cycles
        reports.append(ScenarioReport.from_errors(scenario, error, config, **extras))
        series.append(ErrorSeries(scenario, "total", error))

    return ExperimentResult("unobservability", reports, series)


# ----------------------------------------------------------------------
# Sensor noise and bus
# ----------------------------------------------------------------------

def experiment_sensor_noise(config: RunConfig) -> ExperimentResult:
    """Magnitude errors of a static sensor under gravity: |a| against g, |w| against 0."""
    stream, _ = _static_stream(config, config.noise, config.experiment.noise_duration_s)
    g = EARTH_FIELD.norm()
    accel_err = np.linalg.norm(stream.accel, axis=1) - g
    gyro_err = np.linalg.norm(stream.gyro, axis=1)
    return ExperimentResult("sensor_noise", [
        ScenarioReport.from_errors("accel_norm", accel_err, config,
                                   noise_floor_mu=noise_floor_from_static(stream.accel)),
        ScenarioReport.from_errors("gyro_norm", gyro_err, config,
                                   bias_norm=config.noise.gyro_bias.norm()),
    ])


def simulated_cycle_us(config: RunConfig, chain: ChainSpec, cycles: int = 20,
                       sample_rate_hz: float = 200.0) -> float:
    """Mean cycle duration measured on the bus simulation with a static chain."""
    duration = cycles * config.schedule.worst_cycle_us(len(chain)) / 1e6 + 0.1
    traj = TrajectorySpec(field=EARTH_FIELD, duration_s=duration, sample_rate_hz=sample_rate_hz)
    truth, streams = _truth_and_streams(chain, traj, NoiseSpec(seed=config.seed))
    sim = BusSimulation(chain, streams, config.filter, _truth_initial(truth, chain),
                        model=config.schedule, quant=config.quant, seed=config.seed)
    spans = []
    for _ in range(cycles):
        result = sim.run_cycle()
        spans.append(result.end_us - result.start_us)
    return float(np.mean(spans))


def experiment_bus_timing(config: RunConfig) -> ExperimentResult:
    """Cycle duration, operating rate and parent-acceleration age per chain size."""
    model = config.schedule
    reports = []
    for n, make_chain in TIMING_CHAINS.items():
        chain = make_chain()
        reports.append(ScenarioReport.from_extras(
            f"sensors_{n}", n, config,
            cycle_us=model.cycle_duration_us(n),
            rate_hz=model.operating_rate_hz(n),
            staleness_us=staleness_of_parent_accel(model, n),
            tree_staleness_us=staleness_of_parent_accel(model, n, chain),
            simulated_cycle_us=simulated_cycle_us(config, chain),
        ))
    return ExperimentResult("bus_timing", reports)


def experiment_bus_vs_ideal(config: RunConfig) -> ExperimentResult:
    """
    Steady-state child error through the bus against the no-bus pipeline.

    Same streams for both; the ideal pipeline corrects at the bus cycle
    rate, so the difference is quantization plus staleness.
    """
    s = config.experiment
    chain = _two_limb_chain(config)
    traj = TrajectorySpec(joints=_moving_joints(chain, s.moving_rate_rad_s), field=EARTH_FIELD,
                          duration_s=s.bus_duration_s, sample_rate_hz=s.bus_sample_rate_hz)
    truth, streams = _truth_and_streams(chain, traj, config.noise)
    initial = _truth_initial(truth, chain)

    rate = 1e6 / config.schedule.cycle_duration_us(len(chain))
    ideal = run_ideal_pipeline(chain, streams, config.filter, initial, rate)
    bus = run_bus_pipeline(chain, streams, config.filter, initial, config.schedule,
                           config.quant, seed=config.seed)

    child = chain.traversal_order[1]
    steady = slice(len(truth.t) // 2, None)
    err_ideal = orientation_error_deg(ideal.q[child], truth.q[child])[steady]
    err_bus = orientation_error_deg(bus.q[child], truth.q[child])[steady]
    degradation = rmse(err_bus) - rmse(err_ideal)
    return ExperimentResult("bus_vs_ideal", [
        ScenarioReport.from_errors("ideal", err_ideal, config, correction_rate_hz=rate),
        ScenarioReport.from_errors("bus", err_bus, config, degradation_deg=degradation),
    ], [ErrorSeries("ideal", "total", err_ideal), ErrorSeries("bus", "total", err_bus)])


ExperimentFn = Callable[[RunConfig], ExperimentResult]

EXPERIMENTS: dict[str, ExperimentFn] = {
    "yaw_recovery": experiment_yaw_recovery,
    "accel_prediction": experiment_accel_prediction,
    "drift_characterization": experiment_drift_characterization,
    "correction_accuracy": experiment_correction_accuracy,
    "sensor_noise": experiment_sensor_noise,
    "local_prediction_noise": experiment_local_prediction_noise,
    "unobservability": experiment_unobservability,
    "bus_timing": experiment_bus_timing,
    "bus_vs_ideal": experiment_bus_vs_ideal,
}


def run_experiment(name: str, config: RunConfig) -> ExperimentResult:
    """
    Run a registered experiment by name.

    Raises:
        KeyError: unknown experiment name
    """
    if name not in EXPERIMENTS:
        raise KeyError(f"Unknown experiment {name!r} (known: {', '.join(EXPERIMENTS)})")
    print(f"[Eval] Running {name} (seed {config.seed}, config {config_hash(config)})")
    result = EXPERIMENTS[name](config)
    for rep in result.reports:
        if rep.rmse is not None:
            print(f"[Eval]   {rep.scenario:<32} RMSE {rep.rmse:.4f}  MAE {rep.mae:.4f}  n={rep.n}")
        else:
            print(f"[Eval]   {rep.scenario:<32} n={rep.n}")
    print(f"[+] {name}: {len(result.reports)} report(s)")
    return result
