"""
Estimator - Dead reckoning plus joint-acceleration drift correction.

Each sensor integrates its gyro into an orientation q (body -> world).
At a joint, the child's base acceleration and the parent's tip acceleration
are the same physical quantity, so after both are rotated into the world
frame any angle between them is orientation error in the child. The child
removes the centripetal/tangential part of its own reading (the motion of
its tip around its base) before comparing, and only accepts a fraction of
the correction, scaled by how far the accelerations rise above the noise.

No gravity or magnetic reference is used. Rotation about the direction of
the shared acceleration cannot be observed from a single comparison.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from chainmodel import ChainSpec
from rotmath import (
    IDENTITY,
    UnitQuaternion,
    Vec3,
    compose,
    from_axis_angle,
    from_rotation_vector,
    rotate_vector,
    slerp,
)
from synthgen import ImuSample, ImuStream

# Below these magnitudes a correction carries no usable direction.
MIN_ACCEL_NORM = 1e-9
MIN_AXIS_NORM = 1e-12


class StreamMismatchError(ValueError):
    """Raised when sensor streams do not share one time grid."""


@dataclass(frozen=True)
class FilterParams:
    """
    Tuning of the prediction weight (beta) and complementary filter (gamma).

    Defaults were tuned on simulation at a 30 Hz correction rate;
    noise_floor_mu is the measured mean accelerometer noise magnitude.
    """
    noise_floor_mu: float = 0.035
    snr_saturation: float = 25.0
    gamma_max: float = 0.1
    beta_omega_ref: float = 0.5
    beta_alpha_ref: float = 5.0

    def __post_init__(self):
        if not (self.noise_floor_mu > 0 and math.isfinite(self.noise_floor_mu)):
            raise ValueError(f"noise_floor_mu must be > 0, got {self.noise_floor_mu}")
        if not (self.snr_saturation > 0 and math.isfinite(self.snr_saturation)):
            raise ValueError(f"snr_saturation must be > 0, got {self.snr_saturation}")
        if not (0.0 < self.gamma_max <= 1.0):
            raise ValueError(f"gamma_max must be in (0, 1], got {self.gamma_max}")
        if not (self.beta_omega_ref > 0 and self.beta_alpha_ref > 0):
            raise ValueError("beta_omega_ref and beta_alpha_ref must be > 0")


@dataclass(frozen=True)
class EstimatorState:
    """Orientation estimate plus the previous step needed for velocity differencing."""
    q: UnitQuaternion
    q_prev: UnitQuaternion
    omega_prev: Vec3
    limb_length_r: float

    @classmethod
    def initial(cls, q: UnitQuaternion, limb_length_r: float,
                omega: Optional[Vec3] = None) -> "EstimatorState":
        return cls(q=q, q_prev=q, omega_prev=omega or Vec3.zero(), limb_length_r=limb_length_r)


@dataclass(frozen=True)
class CorrectionResult:
    """
    One drift-correction evaluation.

    theta_raw is the full angle between the two world-frame accelerations,
    phi the part actually applied. axis_world is the unit axis that turns
    the child's vector toward the parent's.
    """
    theta_raw: float
    phi: float
    axis_world: Vec3
    snr: float
    applied: bool

    @classmethod
    def skipped(cls, theta_raw: float = 0.0, snr: float = 0.0) -> "CorrectionResult":
        return cls(theta_raw=theta_raw, phi=0.0, axis_world=Vec3.zero(), snr=snr, applied=False)


def dead_reckon_step(state: EstimatorState, gyro: Vec3, dt: float) -> EstimatorState:
    """
    Integrate one gyro reading.

    The body-frame rotation r = [dt*|w|, w/|w|] is composed on the body
    side (q' = q * r), so a constant body rate turns the limb about its own
    axis. |w| = 0 leaves q unchanged.

    Args:
        state: Current estimate
        gyro: Body-frame angular rate (rad/s)
        dt: Step length (s), > 0

    Returns:
        New state with q_prev = old q and omega_prev = gyro
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    step = from_rotation_vector(gyro * dt)
    return EstimatorState(
        q=compose(state.q, step),
        q_prev=state.q,
        omega_prev=gyro,
        limb_length_r=state.limb_length_r,
    )


def predict_tip_velocity(gyro: Vec3, r: float) -> Vec3:
    """
    Body-frame tip velocity relative to the base, v = w x (0, r, 0).

    Gives (-r*w_z, 0, r*w_x): twist about the limb axis moves nothing and
    v_y is always 0. The sign of the x component follows the cross product,
    checked against finite differences of the rotating tip position.
    """
    if r <= 0:
        raise ValueError(f"Limb length must be > 0, got {r}")
    return Vec3(-r * gyro.z, 0.0, r * gyro.x)


def beta(omega: Vec3, omega_prev: Vec3, dt: float, params: FilterParams) -> float:
    """Prediction weight in [0, 1]: grows with angular rate and angular acceleration."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    rate_term = omega.norm() / params.beta_omega_ref
    accel_term = (omega - omega_prev).norm() / (dt * params.beta_alpha_ref)
    return min(1.0, rate_term + accel_term)


def gamma(snr: float, params: FilterParams) -> float:
    """Share of the raw correction to apply: linear in SNR, capped at gamma_max."""
    if snr <= 0:
        return 0.0
    return min(params.gamma_max, params.gamma_max * snr / params.snr_saturation)


def predict_base_accel(state: EstimatorState, gyro: Vec3, accel: Vec3, dt: float,
                       params: FilterParams, beta_override: Optional[float] = None) -> Vec3:
    """
    Estimate the specific force at the limb base from the tip reading.

    Tip velocities for the previous and current gyro readings are taken to
    the world frame with q_prev and q, differenced over dt, rotated back
    through the midpoint orientation and subtracted from the reading with
    weight beta.

    Call this before dead_reckon_step() for the same sample: state.omega_prev
    is then the previous reading and (q_prev, q) the matching orientations.

    Args:
        state: Estimate before integrating this sample
        gyro: Current body-frame rate (rad/s)
        accel: Current body-frame specific force at the tip (m/s^2)
        dt: Time since the previous sample (s)
        params: Filter tuning (beta references)
        beta_override: Fixed weight instead of beta(), for ablations

    Returns:
        Body-frame specific force at the limb base
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    weight = beta(gyro, state.omega_prev, dt, params) if beta_override is None else beta_override
    if weight == 0.0:
        return accel

    r = state.limb_length_r
    v_world = rotate_vector(state.q, predict_tip_velocity(gyro, r))
    v_prev_world = rotate_vector(state.q_prev, predict_tip_velocity(state.omega_prev, r))
    a_circ_world = (v_world - v_prev_world) / dt

    q_mid = slerp(state.q_prev, state.q, 0.5)
    a_circ_body = rotate_vector(q_mid.inverse(), a_circ_world)
    return accel - a_circ_body * weight


def compute_correction(q_child: UnitQuaternion, a_base_child: Vec3,
                       q_parent: UnitQuaternion, a_tip_parent: Vec3,
                       params: FilterParams) -> CorrectionResult:
    """
    Compare the joint acceleration seen by child and parent.

    Args:
        q_child: Child orientation estimate
        a_base_child: Child's predicted base specific force (child body frame)
        q_parent: Parent orientation (identity when a_tip_parent is already world-frame)
        a_tip_parent: Parent's tip specific force (parent body frame)
        params: Filter tuning

    Returns:
        CorrectionResult; applied=False when either vector is too small or
        the two are (anti)parallel so no axis is defined
    """
    a_parent_w = rotate_vector(q_parent, a_tip_parent)
    a_child_w = rotate_vector(q_child, a_base_child)
    n_parent = a_parent_w.norm()
    n_child = a_child_w.norm()
    snr = (n_parent * n_child) / (params.noise_floor_mu ** 2)

    if n_parent < MIN_ACCEL_NORM or n_child < MIN_ACCEL_NORM:
        return CorrectionResult.skipped(snr=snr)

    # child x parent: a positive rotation about it carries the child's vector onto the parent's
    cross = a_child_w.cross(a_parent_w)
    cross_norm = cross.norm()
    # atan2 form of arccos(normalized dot); stays in [0, pi] without clamping
    theta = math.atan2(cross_norm, a_child_w.dot(a_parent_w))

    if cross_norm < MIN_AXIS_NORM:
        return CorrectionResult.skipped(theta_raw=theta, snr=snr)

    phi = theta * gamma(snr, params)
    return CorrectionResult(
        theta_raw=theta,
        phi=phi,
        axis_world=cross / cross_norm,
        snr=snr,
        applied=phi > 0.0,
    )


def apply_correction(state: EstimatorState, corr: CorrectionResult) -> EstimatorState:
    """
    Rotate the orientation estimate by [phi, axis] in the world frame.

    q_prev gets the same rotation, so the next velocity difference does not
    mistake the correction for limb motion.
    """
    if not corr.applied or corr.phi == 0.0:
        return state
    fix = from_axis_angle(corr.phi, corr.axis_world)
    return replace(state, q=compose(fix, state.q), q_prev=compose(fix, state.q_prev))


def noise_floor_from_static(accel: np.ndarray) -> float:
    """
    Mean accelerometer noise magnitude from a static calibration run.

    Args:
        accel: (n, 3) readings taken while the sensor is still

    Returns:
        mean |a_k - mean(a)|
    """
    accel = np.asarray(accel, dtype=float)
    if accel.ndim != 2 or accel.shape[1] != 3 or len(accel) < 2:
        raise ValueError("Need an (n, 3) array with n >= 2 static readings")
    return float(np.mean(np.linalg.norm(accel - accel.mean(axis=0), axis=1)))


class SensorNode:
    """
    Per-sensor state machine: dead reckoning at sample rate, corrections on demand.

    Keeps the latest predicted base acceleration (body frame) and the latest
    raw tip reading so a correction or a hub reply can be produced at any time.
    """

    def __init__(self, sensor_id: int, limb_length_r: float, params: FilterParams,
                 initial_q: UnitQuaternion, beta_override: Optional[float] = None,
                 record: bool = True):
        self.sensor_id = sensor_id
        self.params = params
        self.beta_override = beta_override
        self.state = EstimatorState.initial(initial_q, limb_length_r)
        self.last_t: Optional[float] = None
        self.last_accel = Vec3.zero()
        self.base_accel = Vec3.zero()
        self.record = record
        self.history_t: list[float] = []
        self.history_q: list[tuple[float, float, float, float]] = []

    def prime(self, sample: ImuSample):
        """Take the first sample: no integration, only seeds the previous-step memory."""
        self.state = replace(self.state, omega_prev=sample.gyro)
        self.last_t = sample.t
        self.last_accel = sample.accel
        self.base_accel = sample.accel
        self._remember(sample.t)

    def ingest(self, sample: ImuSample):
        if self.last_t is None:
            self.prime(sample)
            return
        dt = sample.t - self.last_t
        self.base_accel = predict_base_accel(
            self.state, sample.gyro, sample.accel, dt, self.params, self.beta_override
        )
        self.state = dead_reckon_step(self.state, sample.gyro, dt)
        self.last_t = sample.t
        self.last_accel = sample.accel
        self._remember(sample.t)

    def tip_accel_world(self) -> Vec3:
        return rotate_vector(self.state.q, self.last_accel)

    def base_accel_world(self) -> Vec3:
        return rotate_vector(self.state.q, self.base_accel)

    def correct(self, parent_accel_world: Vec3) -> CorrectionResult:
        """Correct against the parent's world-frame tip acceleration."""
        corr = compute_correction(
            self.state.q, self.base_accel, IDENTITY, parent_accel_world, self.params
        )
        self.state = apply_correction(self.state, corr)
        return corr

    def _remember(self, t: float):
        if self.record:
            self.history_t.append(t)
            self.history_q.append(self.state.q.as_tuple())


@dataclass
class PipelineLog:
    """
    Output of a pipeline run.

    q: sensor id -> (n, 4) estimated orientation after each sample
    corrections: sensor id -> list of (t, CorrectionResult)
    """
    t: np.ndarray
    q: dict[int, np.ndarray]
    corrections: dict[int, list[tuple[float, CorrectionResult]]] = field(default_factory=dict)


def run_ideal_pipeline(chain: ChainSpec, streams: dict[int, ImuStream], params: FilterParams,
                       initial: dict[int, UnitQuaternion], correction_rate_hz: float,
                       corrections_enabled: bool = True,
                       beta_override: Optional[float] = None,
                       on_correction: Optional[Callable[[int, float, CorrectionResult], None]] = None,
                       ) -> PipelineLog:
    """
    Reference pipeline without a bus: no quantization and no staleness.

    Every sensor integrates every sample. At the correction rate, sensors are
    corrected in depth-first order against their parent's current world-frame
    tip acceleration; the root is never corrected.

    Args:
        chain: Validated chain
        streams: Sensor id -> stream, all on the same time grid
        params: Filter tuning
        initial: Sensor id -> initial orientation estimate
        correction_rate_hz: How often the correction pass runs
        corrections_enabled: False runs dead reckoning only
        beta_override: Fixed prediction weight for every sensor
        on_correction: Called as (sensor_id, t, result) after each correction

    Returns:
        PipelineLog with per-sample orientations and all corrections

    Raises:
        StreamMismatchError: a stream is on a different time grid than the others
    """
    if correction_rate_hz <= 0:
        raise ValueError(f"correction_rate_hz must be > 0, got {correction_rate_hz}")

    nodes = {
        node.id: SensorNode(node.id, node.length_r, params, initial[node.id], beta_override)
        for node in chain.limbs
    }
    parents = {node.id: node.parent_id for node in chain.limbs}
    order = chain.traversal_order
    times = streams[order[0]].t
    for sid in order:
        if not np.array_equal(streams[sid].t, times):
            raise StreamMismatchError(
                f"Stream {sid} has {len(streams[sid])} samples on a different time grid than stream {order[0]} ({len(times)})")
    iterators = {sid: streams[sid].samples() for sid in order}
    period = 1.0 / correction_rate_hz
    next_correction = float(times[0]) + period
    corrections: dict[int, list[tuple[float, CorrectionResult]]] = {sid: [] for sid in order}

    for t in times.tolist():
        for sid in order:
            nodes[sid].ingest(next(iterators[sid]))
        if corrections_enabled and t + 1e-12 >= next_correction:
            next_correction += period
            for sid in order:
                parent = parents[sid]
                if parent is None:
                    continue
                corr = nodes[sid].correct(nodes[parent].tip_accel_world())
                corrections[sid].append((t, corr))
                if on_correction is not None:
                    on_correction(sid, t, corr)

    return PipelineLog(
        t=np.array(times, dtype=float),
        q={sid: np.array(node.history_q) for sid, node in nodes.items()},
        corrections=corrections,
    )
