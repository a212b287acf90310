"""
Network Simulation - Hub/sensor bus as a discrete-event simulation.

The hub walks the chain depth-first. For each sensor it sends the parent's
world-frame tip acceleration (6 bytes; zeros for the root), waits for the
sensor's response time, and receives the sensor's orientation and
world-frame tip acceleration (14 bytes). Sensors keep dead-reckoning at
their sample rate while the hub is busy elsewhere.

Payloads are little-endian int16: quaternion components map [-1, 1] and
accelerations map the accelerometer's +/-16 g range onto the full scale.
"""

import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import simpy

from chainmodel import ChainSpec, serial_chain
from estimator import CorrectionResult, FilterParams, PipelineLog, SensorNode
from rotmath import UnitQuaternion, Vec3
from synthgen import ImuStream

HUB_TO_SENSOR = "hub->sensor"
SENSOR_TO_HUB = "sensor->hub"

INT16_MAX = 32767
PARENT_ACCEL_STRUCT = struct.Struct("<3h")
SENSOR_REPLY_STRUCT = struct.Struct("<7h")
PAYLOAD_SIZES = {HUB_TO_SENSOR: PARENT_ACCEL_STRUCT.size, SENSOR_TO_HUB: SENSOR_REPLY_STRUCT.size}


class StreamUnderrunError(RuntimeError):
    """Raised when the hub schedules a sensor past the end of its sample stream."""


class PayloadSizeError(ValueError):
    """Raised when a bus payload does not have the size its direction requires."""


@dataclass(frozen=True)
class QuantSpec:
    """Full-scale values of the two 16-bit channels."""
    quat_full_scale: float = 1.0
    accel_full_scale: float = 156.9

    def full_scale(self, channel: Union[str, float]) -> float:
        if channel == "quat":
            return self.quat_full_scale
        if channel == "accel":
            return self.accel_full_scale
        if isinstance(channel, (int, float)) and channel > 0:
            return float(channel)
        raise ValueError(f"Unknown quantization channel: {channel!r}")


def quantize(value: float, full_scale: float) -> int:
    """Map value to int16; values beyond full scale saturate."""
    clipped = max(-full_scale, min(full_scale, value))
    return int(round(clipped / full_scale * INT16_MAX))


def dequantize(code: int, full_scale: float) -> float:
    return code * full_scale / INT16_MAX


def quantize_roundtrip(value: float, channel: Union[str, float], quant: QuantSpec = QuantSpec()) -> float:
    """
    decode(encode(value)) on the given channel.

    Args:
        value: Real value
        channel: "quat", "accel" or an explicit full-scale value
        quant: Channel full scales

    Returns:
        Reconstructed value, within full_scale / 32767 of the input when in range
    """
    fs = quant.full_scale(channel)
    return dequantize(quantize(value, fs), fs)


@dataclass(frozen=True)
class BusMessage:
    """One bus transfer. payload is 6 bytes hub->sensor, 14 bytes sensor->hub."""
    direction: str
    sensor_id: int
    payload: bytes
    t_us: int

    def __post_init__(self):
        expected = PAYLOAD_SIZES.get(self.direction)
        if expected is None:
            raise ValueError(f"Unknown direction: {self.direction!r}")
        if len(self.payload) != expected:
            raise PayloadSizeError(
                f"{self.direction} payload must be {expected} bytes, got {len(self.payload)}"
            )

    def hex(self) -> str:
        return self.payload.hex()


def encode_parent_accel(accel_world: Vec3, quant: QuantSpec = QuantSpec()) -> bytes:
    fs = quant.accel_full_scale
    return PARENT_ACCEL_STRUCT.pack(*(quantize(c, fs) for c in accel_world.as_tuple()))


def decode_parent_accel(payload: bytes, quant: QuantSpec = QuantSpec()) -> Vec3:
    fs = quant.accel_full_scale
    return Vec3.of(dequantize(code, fs) for code in PARENT_ACCEL_STRUCT.unpack(payload))


def encode_sensor_reply(q: UnitQuaternion, accel_world: Vec3, quant: QuantSpec = QuantSpec()) -> bytes:
    q_codes = [quantize(c, quant.quat_full_scale) for c in q.as_tuple()]
    a_codes = [quantize(c, quant.accel_full_scale) for c in accel_world.as_tuple()]
    return SENSOR_REPLY_STRUCT.pack(*q_codes, *a_codes)


def decode_sensor_reply(payload: bytes,
                        quant: QuantSpec = QuantSpec()) -> tuple[tuple[float, float, float, float], Vec3]:
    """
    Returns:
        (raw dequantized (w, x, y, z), world-frame tip acceleration).
        The quaternion is not renormalized, as a client would receive it.
    """
    codes = SENSOR_REPLY_STRUCT.unpack(payload)
    q = tuple(dequantize(c, quant.quat_full_scale) for c in codes[:4])
    accel = Vec3.of(dequantize(c, quant.accel_full_scale) for c in codes[4:])
    return q, accel


@dataclass(frozen=True)
class ScheduleModel:
    """
    Sensor response times on the bus, in microseconds.

    Service times are drawn uniformly from [min, max]; the cycle duration
    is the sum of the mean service times of the sensors in the cycle.
    """
    root_min_us: int = 0
    root_max_us: int = 2300
    child_min_us: int = 4100
    child_max_us: int = 6400

    def __post_init__(self):
        if not (0 <= self.root_min_us <= self.root_max_us):
            raise ValueError("Root response interval must satisfy 0 <= min <= max")
        if not (0 <= self.child_min_us <= self.child_max_us):
            raise ValueError("Child response interval must satisfy 0 <= min <= max")

    @property
    def root_mean_us(self) -> float:
        return (self.root_min_us + self.root_max_us) / 2

    @property
    def child_mean_us(self) -> float:
        return (self.child_min_us + self.child_max_us) / 2

    def mean_service_us(self, is_root: bool) -> float:
        return self.root_mean_us if is_root else self.child_mean_us

    def cycle_duration_us(self, n_sensors: int) -> float:
        """One root plus n-1 children; 6400 + (n - 2) * 5250 with the default timings."""
        if n_sensors < 1:
            raise ValueError(f"Need at least one sensor, got {n_sensors}")
        return self.root_mean_us + (n_sensors - 1) * self.child_mean_us

    def operating_rate_hz(self, n_sensors: int) -> int:
        return math.floor(1e6 / self.cycle_duration_us(n_sensors))

    def worst_cycle_us(self, n_sensors: int) -> int:
        return self.root_max_us + (n_sensors - 1) * self.child_max_us

    def draw_service_us(self, is_root: bool, rng: np.random.Generator) -> int:
        lo, hi = ((self.root_min_us, self.root_max_us) if is_root
                  else (self.child_min_us, self.child_max_us))
        return int(rng.integers(lo, hi + 1))


def staleness_of_parent_accel(model: ScheduleModel, n_sensors: int,
                              chain: Optional[ChainSpec] = None) -> Optional[float]:
    """
    Mean age of the parent acceleration when a child applies its correction.

    The parent's acceleration is captured when its reply arrives; the child
    corrects at the end of its own service. The age is the summed mean
    service time of every sensor served in between, child included.

    Args:
        model: Bus timings
        n_sensors: Sensor count (a serial chain is assumed when chain is None)
        chain: Optional tree; depth-first order decides who is served between

    Returns:
        Mean age in microseconds, or None when there is no child to correct
    """
    if chain is None:
        if n_sensors < 2:
            return None
        chain = serial_chain([1.0] * n_sensors)
    order = list(chain.traversal_order)
    if len(order) < 2:
        return None

    position = {sid: i for i, sid in enumerate(order)}
    parents = {node.id: node.parent_id for node in chain.limbs}
    ages = []
    for sid in order:
        parent = parents[sid]
        if parent is None:
            continue
        served = order[position[parent] + 1:position[sid] + 1]
        ages.append(sum(model.mean_service_us(parents[s] is None) for s in served))
    return sum(ages) / len(ages)


@dataclass(frozen=True)
class SensorPose:
    sensor_id: int
    q: tuple[float, float, float, float]
    t_us: int


@dataclass(frozen=True)
class HubSnapshot:
    """Latest orientation the hub holds for every sensor served so far."""
    t_us: int
    sensors: tuple[SensorPose, ...]


@dataclass
class CycleResult:
    start_us: float
    end_us: float
    corrections: dict[int, CorrectionResult]
    snapshot: HubSnapshot


@dataclass
class BusSimulation:
    """
    Hub plus sensors on a shared simpy clock (microseconds).

    Each sensor has a process that ingests its samples at their timestamps.
    run_cycle() runs one depth-first hub pass; samples keep flowing while
    the hub waits on each sensor.
    """
    chain: ChainSpec
    streams: dict[int, ImuStream]
    params: FilterParams
    initial: dict[int, UnitQuaternion]
    model: ScheduleModel = field(default_factory=ScheduleModel)
    quant: QuantSpec = field(default_factory=QuantSpec)
    seed: int = 0
    quantize: bool = True
    on_snapshot: Optional[Callable[[HubSnapshot], None]] = None
    keep_trace: bool = False

    def __post_init__(self):
        self.order = list(self.chain.traversal_order)
        self.parents = {node.id: node.parent_id for node in self.chain.limbs}
        start_us = float(self.streams[self.order[0]].t[0]) * 1e6
        self.env = simpy.Environment(initial_time=start_us)
        self.rng = np.random.default_rng(np.random.SeedSequence([int(self.seed), len(self.order)]))
        self.nodes = {
            node.id: SensorNode(node.id, node.length_r, self.params, self.initial[node.id])
            for node in self.chain.limbs
        }
        self.end_us = {sid: float(self.streams[sid].t[-1]) * 1e6 for sid in self.order}
        self.trace: list[BusMessage] = []
        self.corrections: dict[int, list[tuple[float, CorrectionResult]]] = {sid: [] for sid in self.order}
        self._reply_accel: dict[int, Vec3] = {}
        self._poses: dict[int, SensorPose] = {}
        for sid in self.order:
            self.env.process(self._sample_loop(sid))

    def _sample_loop(self, sid: int):
        node = self.nodes[sid]
        for sample in self.streams[sid].samples():
            t_us = sample.t * 1e6
            if t_us > self.env.now:
                yield self.env.timeout(t_us - self.env.now)
            node.ingest(sample)

    def _log(self, direction: str, sid: int, payload: bytes):
        if self.keep_trace:
            self.trace.append(BusMessage(direction, sid, payload, int(round(self.env.now))))

    def _hub_cycle(self, results: dict[int, CorrectionResult]):
        for sid in self.order:
            parent = self.parents[sid]
            accel_w = Vec3.zero() if parent is None else self._reply_accel[parent]
            request = encode_parent_accel(accel_w, self.quant)
            self._log(HUB_TO_SENSOR, sid, request)

            service = self.model.draw_service_us(parent is None, self.rng)
            if self.env.now + service > self.end_us[sid]:
                raise StreamUnderrunError(
                    f"Sensor {sid} stream ends at {self.end_us[sid]:.0f} us, "
                    f"service would finish at {self.env.now + service:.0f} us"
                )
            yield self.env.timeout(service)

            node = self.nodes[sid]
            if parent is None:
                corr = CorrectionResult.skipped()
            else:
                received = decode_parent_accel(request, self.quant) if self.quantize else accel_w
                corr = node.correct(received)
                self.corrections[sid].append((self.env.now / 1e6, corr))

            q, accel_reply = node.state.q, node.tip_accel_world()
            reply = encode_sensor_reply(q, accel_reply, self.quant)
            self._log(SENSOR_TO_HUB, sid, reply)
            if self.quantize:
                q_tuple, accel_reply = decode_sensor_reply(reply, self.quant)
            else:
                q_tuple = q.as_tuple()
            self._reply_accel[sid] = accel_reply
            self._poses[sid] = SensorPose(sid, q_tuple, int(round(self.env.now)))
            results[sid] = corr

    def snapshot(self) -> HubSnapshot:
        poses = tuple(self._poses[sid] for sid in self.order if sid in self._poses)
        return HubSnapshot(t_us=int(round(self.env.now)), sensors=poses)

    def run_cycle(self) -> CycleResult:
        """
        One hub pass over every sensor in depth-first order.

        Raises:
            StreamUnderrunError: a service would end after a stream's last sample
        """
        start = self.env.now
        results: dict[int, CorrectionResult] = {}
        self.env.run(until=self.env.process(self._hub_cycle(results)))
        snapshot = self.snapshot()
        if self.on_snapshot is not None:
            self.on_snapshot(snapshot)
        return CycleResult(start_us=start, end_us=self.env.now, corrections=results, snapshot=snapshot)

    def run(self) -> PipelineLog:
        """Run cycles until the streams cannot cover another worst-case cycle."""
        end = min(self.end_us.values())
        worst = self.model.worst_cycle_us(len(self.order))
        while self.env.now + worst <= end:
            self.run_cycle()
        self.env.run(until=end + 1.0)
        return PipelineLog(
            t=self.streams[self.order[0]].t.copy(),
            q={sid: np.array(node.history_q) for sid, node in self.nodes.items()},
            corrections=self.corrections,
        )


def run_bus_pipeline(chain: ChainSpec, streams: dict[int, ImuStream], params: FilterParams,
                     initial: dict[int, UnitQuaternion], model: ScheduleModel = ScheduleModel(),
                     quant: QuantSpec = QuantSpec(), seed: int = 0,
                     quantize: bool = True) -> PipelineLog:
    """Full run through the simulated bus; counterpart of run_ideal_pipeline()."""
    sim = BusSimulation(chain, streams, params, initial, model=model, quant=quant,
                        seed=seed, quantize=quantize)
    return sim.run()
