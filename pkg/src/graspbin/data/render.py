"""Pinhole depth rendering by raycasting.

Cameras follow the OpenCV convention: ``+z`` is the optical axis, ``x`` right,
``y`` down. ``CameraPose.rotation`` maps camera coordinates to world
coordinates and ``translation`` is the camera center in the world.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Quaternion, look_at_rotation
from ..pointcloud import Frame, PointCloud
from .mesh import TriMesh
from .raycast import first_hits


class EmptyViewError(RuntimeError):
    """No camera ray hit the object."""


@dataclass(frozen=True)
class Intrinsics:
    fx: float = 240.0
    fy: float = 240.0
    width: int = 128
    height: int = 128

    @property
    def cx(self) -> float:
        return (self.width - 1) / 2.0

    @property
    def cy(self) -> float:
        return (self.height - 1) / 2.0

    def as_list(self) -> list[float]:
        return [self.fx, self.fy, float(self.width), float(self.height)]

    @classmethod
    def from_list(cls, v) -> "Intrinsics":
        return cls(float(v[0]), float(v[1]), int(v[2]), int(v[3]))

    def with_rays(self, rays: int) -> "Intrinsics":
        """Same field of view resampled to about ``rays`` pixels on a square grid."""
        side = max(1, int(math.ceil(math.sqrt(rays))))
        scale = side / self.width
        return Intrinsics(self.fx * scale, self.fy * side / self.height, side, side)


@dataclass(frozen=True, eq=False)
class CameraPose:
    rotation: Quaternion
    translation: np.ndarray
    intrinsics: Intrinsics = field(default_factory=Intrinsics)

    def __post_init__(self):
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @property
    def matrix(self) -> np.ndarray:
        return self.rotation.as_matrix()

    @property
    def optical_axis(self) -> np.ndarray:
        return self.matrix[:, 2]

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.translation) @ self.matrix

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.matrix.T + self.translation


def look_at_camera(eye, target, up, intrinsics: Intrinsics | None = None) -> CameraPose:
    eye = np.asarray(eye, dtype=np.float64)
    rot = look_at_rotation(np.asarray(target, dtype=np.float64) - eye, up)
    return CameraPose(Quaternion.from_matrix(rot), eye, intrinsics or Intrinsics())


def random_camera(
    rng: np.random.Generator,
    target: np.ndarray,
    r_min: float = 0.4,
    r_max: float = 0.8,
    intrinsics: Intrinsics | None = None,
) -> CameraPose:
    """Camera on a spherical shell around ``target``, looking at it with a random up vector."""
    d = rng.standard_normal(3)
    d /= np.linalg.norm(d)
    radius = rng.uniform(r_min, r_max)
    up = rng.standard_normal(3)
    return look_at_camera(np.asarray(target) + radius * d, target, up, intrinsics)


def camera_rays(intr: Intrinsics) -> np.ndarray:
    """Unit ray directions in the camera frame, row-major over pixels."""
    u, v = np.meshgrid(np.arange(intr.width), np.arange(intr.height))
    d = np.stack([(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, np.ones_like(u, dtype=np.float64)], axis=-1)
    d = d.reshape(-1, 3)
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def render_cloud(mesh: TriMesh, cam: CameraPose, rays: int | None = None) -> PointCloud:
    """Nearest-hit point cloud in camera coordinates.

    ``rays`` resamples the pixel grid to roughly that many rays, keeping the
    field of view.
    """
    intr = cam.intrinsics if rays is None else cam.intrinsics.with_rays(rays)
    dirs_cam = camera_rays(intr)
    dirs_world = dirs_cam @ cam.matrix.T
    # skip rays that cannot reach the bounding sphere
    rel = mesh.surface_centroid - cam.translation
    along = dirs_world @ rel
    perp2 = rel @ rel - along**2
    keep = (along > 0) & (perp2 <= (mesh.bounding_radius * (1 + 1e-9)) ** 2)
    if not np.any(keep):
        raise EmptyViewError("object is outside the camera's field of view")
    origins = np.broadcast_to(cam.translation, (int(keep.sum()), 3))
    t, tri = first_hits(mesh, origins, dirs_world[keep])
    hit = tri >= 0
    if not np.any(hit):
        raise EmptyViewError("no camera ray hit the object")
    pts_cam = dirs_cam[keep][hit] * t[hit, None]
    return PointCloud(pts_cam, Frame.CAMERA)
