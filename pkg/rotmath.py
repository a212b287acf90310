"""
Rotation math - Quaternion and 3-vector helpers used by every other module.

Conventions (fixed project-wide):
- Hamilton quaternion product, scalar-first storage (w, x, y, z)
- Right-handed frames
- A rotation R applied to a vector v is R * v * R^-1 (the object sits
  on the inside); an orientation q maps body-frame vectors to world frame
- Orientations are re-normalized after every operation
"""

import math
from dataclasses import dataclass
from typing import Iterable


class NonFiniteError(ValueError):
    """Raised when a NaN or Inf component would enter a Vec3 or quaternion."""


class DegenerateAxisError(ValueError):
    """Raised when a nonzero rotation is requested about a zero-length axis."""


@dataclass(frozen=True)
class Vec3:
    """Immutable 3-vector. Units depend on context (m/s^2, rad/s, m/s)."""
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise NonFiniteError(f"Vec3 components must be finite: ({self.x}, {self.y}, {self.z})")

    @classmethod
    def of(cls, values: Iterable[float]) -> "Vec3":
        x, y, z = values
        return cls(float(x), float(y), float(z))

    @classmethod
    def zero(cls) -> "Vec3":
        return cls(0.0, 0.0, 0.0)

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    __rmul__ = __mul__

    def __truediv__(self, k: float) -> "Vec3":
        return Vec3(self.x / k, self.y / k, self.z / k)

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def cross(self, other: "Vec3") -> "Vec3":
        return Vec3(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )

    def norm(self) -> float:
        return math.hypot(self.x, self.y, self.z)

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise DegenerateAxisError("Cannot normalize a zero-length vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class UnitQuaternion:
    """
    Unit quaternion (w, x, y, z).

    Components are normalized on construction, so every instance satisfies
    |q| = 1 to rounding. q and -q are the same rotation; compare rotations
    with rotation_angle_between(), not with ==.
    """
    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        n = math.hypot(self.w, self.x, self.y, self.z)
        if not math.isfinite(n):
            raise NonFiniteError(f"Quaternion components must be finite: {self.as_tuple()}")
        if n == 0.0:
            raise DegenerateAxisError("Zero quaternion does not represent a rotation")
        if n != 1.0:
            object.__setattr__(self, "w", self.w / n)
            object.__setattr__(self, "x", self.x / n)
            object.__setattr__(self, "y", self.y / n)
            object.__setattr__(self, "z", self.z / n)

    @classmethod
    def of(cls, values: Iterable[float]) -> "UnitQuaternion":
        w, x, y, z = values
        return cls(float(w), float(x), float(y), float(z))

    @property
    def vector(self) -> Vec3:
        return Vec3(self.x, self.y, self.z)

    def inverse(self) -> "UnitQuaternion":
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    def __neg__(self) -> "UnitQuaternion":
        return UnitQuaternion(-self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: "UnitQuaternion") -> "UnitQuaternion":
        return compose(self, other)

    def norm(self) -> float:
        return math.hypot(self.w, self.x, self.y, self.z)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)


IDENTITY = UnitQuaternion(1.0, 0.0, 0.0, 0.0)


def identity() -> UnitQuaternion:
    return IDENTITY


def inverse(q: UnitQuaternion) -> UnitQuaternion:
    return q.inverse()


def from_axis_angle(angle: float, axis: Vec3) -> UnitQuaternion:
    """
    Build the rotation of `angle` radians about `axis`.

    Args:
        angle: Rotation angle in radians
        axis: Rotation axis, any nonzero length (normalized here)

    Returns:
        Unit quaternion for the rotation

    Raises:
        DegenerateAxisError: axis has zero length and angle is nonzero
    """
    if angle == 0.0:
        return IDENTITY
    n = axis.norm()
    if n == 0.0:
        raise DegenerateAxisError(f"Rotation of {angle} rad requested about a zero-length axis")
    half = 0.5 * angle
    s = math.sin(half)
    return UnitQuaternion(math.cos(half), axis.x / n * s, axis.y / n * s, axis.z / n * s)


def from_rotation_vector(rv: Vec3) -> UnitQuaternion:
    """Rotation whose axis is rv's direction and angle is |rv|. Zero maps to identity."""
    angle = rv.norm()
    if angle == 0.0:
        return IDENTITY
    return from_axis_angle(angle, rv)


def compose(a: UnitQuaternion, b: UnitQuaternion) -> UnitQuaternion:
    """Hamilton product a*b (apply b first, then a). Result is renormalized."""
    return UnitQuaternion(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )


def rotate_vector(q: UnitQuaternion, v: Vec3) -> Vec3:
    """
    Rotate v by q (q * v * q^-1).

    Uses the two-cross-product form t = 2 (q_v x v), v' = v + w t + q_v x t,
    which needs no intermediate quaternion.
    """
    qx, qy, qz, qw = q.x, q.y, q.z, q.w
    tx = 2.0 * (qy * v.z - qz * v.y)
    ty = 2.0 * (qz * v.x - qx * v.z)
    tz = 2.0 * (qx * v.y - qy * v.x)
    return Vec3(
        v.x + qw * tx + (qy * tz - qz * ty),
        v.y + qw * ty + (qz * tx - qx * tz),
        v.z + qw * tz + (qx * ty - qy * tx),
    )


def rotation_angle_between(a: UnitQuaternion, b: UnitQuaternion) -> float:
    """
    Angle of the relative rotation a^-1 * b, in [0, pi].

    Sign-invariant (q and -q give 0). atan2 keeps precision near 0 and pi,
    where an arccos of the dot product would not.
    """
    d = compose(a.inverse(), b)
    vec_norm = math.hypot(d.x, d.y, d.z)
    return 2.0 * math.atan2(vec_norm, abs(d.w))


def slerp(a: UnitQuaternion, b: UnitQuaternion, t: float) -> UnitQuaternion:
    """
    Shortest-arc spherical interpolation from a (t=0) to b (t=1).

    Args:
        a: Start orientation
        b: End orientation; negated internally if it lies on the far hemisphere
        t: Interpolation fraction in [0, 1]

    Returns:
        Interpolated orientation
    """
    if t <= 0.0:
        return a
    if t >= 1.0:
        return b
    d = compose(a.inverse(), b)
    if d.w < 0.0:
        d = -d
    vec_norm = math.hypot(d.x, d.y, d.z)
    if vec_norm == 0.0:
        return a
    half = math.atan2(vec_norm, d.w)
    s = math.sin(t * half) / vec_norm
    step = UnitQuaternion(math.cos(t * half), d.x * s, d.y * s, d.z * s)
    return compose(a, step)


def twist_angle(q: UnitQuaternion, axis: Vec3) -> float:
    """
    Signed twist of q about `axis` from a swing-twist decomposition.

    Args:
        q: Rotation to decompose
        axis: Twist axis (normalized here)

    Returns:
        Twist angle in (-pi, pi]; 0 when q has no component about axis
    """
    u = axis.normalized()
    p = q.x * u.x + q.y * u.y + q.z * u.z
    if p == 0.0 and q.w == 0.0:
        return 0.0
    angle = 2.0 * math.atan2(p, q.w)
    if angle > math.pi:
        angle -= 2.0 * math.pi
    elif angle <= -math.pi:
        angle += 2.0 * math.pi
    return angle
