"""Rotation representations in the camera-centric grasp convention.

Quaternions are scalar-first ``(w, x, y, z)`` Hamilton quaternions. The gripper
approaches along its local ``+z`` axis and closes along its local ``x`` axis.

Euler angles decompose a rotation as ``R = Rz(yaw) @ Ry(pitch) @ Rz(roll)``:
yaw and pitch place the approach vector on the sphere, roll spins the hand
about it. With this order the approach vector ``a = R[:, 2]`` satisfies
``pitch = arccos(a_z)`` and ``yaw = atan2(a_y, a_x)`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi
GIMBAL_EPS = 1e-12


def wrap_2pi(angle):
    """Map angles into ``[0, 2*pi)``."""
    a = np.mod(angle, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    return np.where(a >= TWO_PI, 0.0, a) if isinstance(a, np.ndarray) else (0.0 if a >= TWO_PI else float(a))


def normalize_quat(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0.0):
        raise ValueError("zero quaternion cannot be normalized")
    return q / n


def canonical_quat(q: np.ndarray) -> np.ndarray:
    """Normalize and pick the ``w >= 0`` hemisphere."""
    q = normalize_quat(q)
    sign = np.where(q[..., :1] < 0.0, -1.0, 1.0)
    return q * sign


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for quaternions of shape ``(..., 4)``."""
    q = normalize_quat(q)
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Quaternions (``w >= 0``) from rotation matrices of shape ``(..., 3, 3)``.

    Uses Shepperd's branch selection on the largest diagonal term.
    """
    m = np.asarray(m, dtype=np.float64)
    flat = m.reshape(-1, 3, 3)
    out = np.empty((flat.shape[0], 4))
    for i, r in enumerate(flat):
        tr = r[0, 0] + r[1, 1] + r[2, 2]
        k = int(np.argmax([tr, r[0, 0], r[1, 1], r[2, 2]]))
        if k == 0:
            s = 2.0 * math.sqrt(max(1.0 + tr, 0.0))
            q = (0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s)
        elif k == 1:
            s = 2.0 * math.sqrt(max(1.0 + r[0, 0] - r[1, 1] - r[2, 2], 0.0))
            q = ((r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s)
        elif k == 2:
            s = 2.0 * math.sqrt(max(1.0 + r[1, 1] - r[0, 0] - r[2, 2], 0.0))
            q = ((r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s)
        else:
            s = 2.0 * math.sqrt(max(1.0 + r[2, 2] - r[0, 0] - r[1, 1], 0.0))
            q = ((r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s)
        out[i] = q
    out = canonical_quat(out)
    return out.reshape(m.shape[:-2] + (4,))


def axis_angle_to_quat(axis, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = 0.5 * np.asarray(angle, dtype=np.float64)[..., None]
    return np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def random_quats(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniformly distributed rotations (normalized 4-D Gaussians)."""
    return canonical_quat(rng.standard_normal((n, 4)))


def vec_to_pitch_yaw(v) -> tuple[float, float]:
    """Pitch ``arccos(v_z)`` in ``[0, pi]`` and yaw ``atan2(v_y, v_x)`` in ``[0, 2*pi)``."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n == 0.0 or not math.isfinite(n):
        raise ValueError("direction vector must be finite and non-zero")
    v = v / n
    pitch = math.acos(min(1.0, max(-1.0, v[2])))
    yaw = wrap_2pi(math.atan2(v[1], v[0]))
    return pitch, yaw


def vecs_to_pitch_yaw(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`vec_to_pitch_yaw` over an ``(n, 3)`` array."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1)
    if np.any(n == 0.0) or not np.all(np.isfinite(n)):
        raise ValueError("direction vectors must be finite and non-zero")
    v = v / n[..., None]
    pitch = np.arccos(np.clip(v[..., 2], -1.0, 1.0))
    yaw = wrap_2pi(np.arctan2(v[..., 1], v[..., 0]))
    return pitch, yaw


@dataclass(frozen=True, eq=False)
class Quaternion:
    """Unit quaternion; normalized on construction."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        q = np.array([self.w, self.x, self.y, self.z], dtype=np.float64)
        if not np.all(np.isfinite(q)):
            raise ValueError("quaternion components must be finite")
        # leave already-unit input bit-exact so stored poses round-trip
        if abs(float(np.linalg.norm(q)) - 1.0) > 1e-15:
            q = normalize_quat(q)
        for name, val in zip("wxyz", q):
            object.__setattr__(self, name, float(val))

    @classmethod
    def from_array(cls, q) -> "Quaternion":
        return cls(*np.asarray(q, dtype=np.float64).reshape(4))

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_matrix(cls, m) -> "Quaternion":
        return cls.from_array(matrix_to_quat(m))

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def as_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.as_array())

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        return Quaternion.from_array(quat_multiply(self.as_array(), other.as_array()))

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.w, -self.x, -self.y, -self.z)

    def inverse(self) -> "Quaternion":
        return Quaternion.from_array(quat_conjugate(self.as_array()))

    def rotate(self, v) -> np.ndarray:
        return np.asarray(v, dtype=np.float64) @ self.as_matrix().T

    def same_rotation(self, other: "Quaternion", tol: float = 1e-9) -> bool:
        return rotation_angle_between(self, other) <= tol


@dataclass(frozen=True)
class EulerRPY:
    """Roll in ``[0, 2pi)``, pitch in ``[0, pi]``, yaw in ``[0, 2pi)`` (radians)."""

    roll: float
    pitch: float
    yaw: float


@dataclass(frozen=True)
class ApproachFrame:
    approach: np.ndarray
    roll: float

    def __post_init__(self):
        a = np.asarray(self.approach, dtype=np.float64).reshape(3)
        n = np.linalg.norm(a)
        if n == 0.0 or not np.isfinite(n):
            raise ValueError("approach vector must be finite and non-zero")
        object.__setattr__(self, "approach", a / n)
        object.__setattr__(self, "roll", float(wrap_2pi(self.roll)))

    def to_euler(self) -> EulerRPY:
        pitch, yaw = vec_to_pitch_yaw(self.approach)
        return EulerRPY(self.roll, pitch, yaw)


@dataclass(frozen=True, eq=False)
class GraspPose:
    """7-DoF grasp: rotation plus translation (meters) of the gripper frame."""

    rotation: Quaternion
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_array(cls, arr) -> "GraspPose":
        """From ``[qw, qx, qy, qz, tx, ty, tz]``."""
        arr = np.asarray(arr, dtype=np.float64).reshape(7)
        return cls(Quaternion.from_array(arr[:4]), arr[4:])

    @classmethod
    def from_matrix(cls, m) -> "GraspPose":
        m = np.asarray(m, dtype=np.float64)
        return cls(Quaternion.from_matrix(m[:3, :3]), m[:3, 3])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.rotation.as_array(), self.translation])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.as_matrix()
        m[:3, 3] = self.translation
        return m

    def approach(self) -> np.ndarray:
        return approach_of(self.rotation)

    def transformed(self, rotation: Quaternion, translation) -> "GraspPose":
        """Pose expressed after applying the rigid transform ``(rotation, translation)``."""
        return GraspPose(rotation * self.rotation, rotation.rotate(self.translation) + np.asarray(translation))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GraspPose):
            return NotImplemented
        return bool(np.array_equal(self.as_array(), other.as_array()))

    def __hash__(self):
        return hash(self.as_array().tobytes())


def euler_to_matrix(e: EulerRPY) -> np.ndarray:
    return rot_z(e.yaw) @ rot_y(e.pitch) @ rot_z(e.roll)


def euler_to_quat(e: EulerRPY) -> Quaternion:
    for a in (e.roll, e.pitch, e.yaw):
        if not math.isfinite(a):
            raise ValueError("Euler angles must be finite")
    qz_yaw = axis_angle_to_quat([0.0, 0.0, 1.0], e.yaw)
    qy = axis_angle_to_quat([0.0, 1.0, 0.0], e.pitch)
    qz_roll = axis_angle_to_quat([0.0, 0.0, 1.0], e.roll)
    return Quaternion.from_array(canonical_quat(quat_multiply(quat_multiply(qz_yaw, qy), qz_roll)))


def quat_to_euler(q: Quaternion) -> EulerRPY:
    """Decompose ``q``; at gimbal lock (pitch 0 or pi) roll is 0 and yaw takes the free angle."""
    r = q.as_matrix()
    a = r[:, 2]
    pitch = math.acos(min(1.0, max(-1.0, a[2])))
    if math.hypot(a[0], a[1]) <= GIMBAL_EPS:
        if a[2] > 0.0:
            return EulerRPY(0.0, 0.0, wrap_2pi(math.atan2(r[1, 0], r[0, 0])))
        return EulerRPY(0.0, math.pi, wrap_2pi(math.atan2(-r[1, 0], -r[0, 0])))
    yaw = wrap_2pi(math.atan2(a[1], a[0]))
    roll = wrap_2pi(math.atan2(r[2, 1], -r[2, 0]))
    return EulerRPY(roll, pitch, yaw)


def approach_of(q: Quaternion) -> np.ndarray:
    """Camera-frame approach direction: the gripper's local ``+z`` axis after rotation."""
    return q.as_matrix()[:, 2]


def approaches_of(quats: np.ndarray) -> np.ndarray:
    """Vectorized :func:`approach_of` over ``(n, 4)`` quaternion arrays."""
    return quat_to_matrix(quats)[..., :, 2]


def rotation_angle_between(q1: Quaternion, q2: Quaternion) -> float:
    """Geodesic angle in ``[0, pi]`` between two rotations."""
    d = abs(float(np.dot(q1.as_array(), q2.as_array())))
    # 2*atan2 is accurate near zero where 2*acos(d) loses half the digits
    rel = quat_multiply(quat_conjugate(q1.as_array()), q2.as_array())
    return min(math.pi, 2.0 * math.atan2(float(np.linalg.norm(rel[1:])), d))


def vector_angle(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return math.atan2(float(np.linalg.norm(np.cross(a, b))), float(np.dot(a, b)))


def look_at_rotation(forward, up) -> np.ndarray:
    """Camera-to-world rotation whose ``+z`` column is ``forward`` (OpenCV: ``y`` down)."""
    f = np.asarray(forward, dtype=np.float64)
    f = f / np.linalg.norm(f)
    u = np.asarray(up, dtype=np.float64)
    x = np.cross(-u, f)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(f, [1.0, 0.0, 0.0]) if abs(f[0]) < 0.9 else np.cross(f, [0.0, 1.0, 0.0])
    x = x / np.linalg.norm(x)
    y = np.cross(f, x)
    return np.stack([x, y, f], axis=1)
