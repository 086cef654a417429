"""Analytic grasp-success oracle.

A grasp succeeds when the jaw line at fingertip depth meets the surface at two
contacts whose normals lie inside the friction cones of the closing
direction, both jaws start clear of the object, and no part of the hand
(control points, fingers, palm bar, wrist) penetrates the mesh.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data.mesh import TriMesh
from ..data.raycast import line_hits, points_inside
from ..geometry import GraspPose, quat_to_matrix
from ..gripper import GripperModel, default_gripper

# control-point order in gripper files: wrist, palm, knuckle L/R, fingertip L/R
_BODY_SEGMENTS = ((0, 1), (2, 3), (2, 4), (3, 5))


@dataclass(frozen=True)
class OracleConfig:
    friction: float = 0.5
    contact_tolerance: float = 0.002
    gripper: GripperModel | None = None

    def __post_init__(self):
        if not (self.friction > 0 and self.contact_tolerance > 0):
            raise ValueError("friction and contact tolerance must be positive")
        if self.gripper is None:
            object.__setattr__(self, "gripper", default_gripper())

    @property
    def cone_cos(self) -> float:
        return math.cos(math.atan(self.friction))


def _check_mesh(mesh: TriMesh) -> None:
    if not mesh.is_watertight:
        raise ValueError("oracle requires a watertight mesh")


def oracle_success_batch(mesh: TriMesh, grasps: np.ndarray, cfg: OracleConfig | None = None) -> np.ndarray:
    """Evaluate ``(n, 7)`` grasp arrays ``[qw, qx, qy, qz, tx, ty, tz]`` in the mesh frame."""
    cfg = cfg or OracleConfig()
    _check_mesh(mesh)
    grasps = np.asarray(grasps, dtype=np.float64).reshape(-1, 7)
    n = len(grasps)
    if n == 0:
        return np.zeros(0, dtype=bool)
    gr = cfg.gripper
    rot = quat_to_matrix(grasps[:, :4])
    trans = grasps[:, 4:]
    ctrl = np.einsum("nij,pj->npi", rot, gr.control_points) + trans[:, None, :]
    half = 0.5 * gr.max_width
    jaw_local = np.array([[-half, 0.0, gr.finger_depth], [half, 0.0, gr.finger_depth]])
    jaw = np.einsum("nij,pj->npi", rot, jaw_local) + trans[:, None, :]
    closing = jaw[:, 1] - jaw[:, 0]
    x_axis = rot[:, :, 0]

    # closing line
    t = line_hits(mesh, jaw[:, 0], closing)
    in_seg = (t >= 0.0) & (t <= 1.0)
    has_hits = in_seg.any(axis=1)
    t_in = np.where(in_seg, t, np.nan)
    with np.errstate(all="ignore"):
        left = np.where(has_hits, np.nanargmin(np.where(has_hits[:, None], t_in, 0.0), axis=1), 0)
        right = np.where(has_hits, np.nanargmax(np.where(has_hits[:, None], t_in, 0.0), axis=1), 0)
    rows = np.arange(n)
    t_left = np.where(has_hits, t_in[rows, left], np.nan)
    t_right = np.where(has_hits, t_in[rows, right], np.nan)
    margin = cfg.contact_tolerance / gr.max_width
    clear = has_hits & (t_left >= margin) & (t_right <= 1.0 - margin)

    normals = mesh.face_normals
    cos_l = np.einsum("ni,ni->n", normals[left], -x_axis)
    cos_r = np.einsum("ni,ni->n", normals[right], x_axis)
    in_cone = (cos_l >= cfg.cone_cos) & (cos_r >= cfg.cone_cos)

    # hand body
    seg_a = np.concatenate([ctrl[:, a] for a, _ in _BODY_SEGMENTS])
    seg_b = np.concatenate([ctrl[:, b] for _, b in _BODY_SEGMENTS])
    ts = line_hits(mesh, seg_a, seg_b - seg_a)
    seg_hit = np.any((ts >= 0.0) & (ts <= 1.0), axis=1).reshape(len(_BODY_SEGMENTS), n).any(axis=0)
    inside = points_inside(mesh, ctrl.reshape(-1, 3)).reshape(n, -1).any(axis=1)

    return clear & in_cone & ~seg_hit & ~inside


def oracle_success(mesh: TriMesh, g: GraspPose, cfg: OracleConfig | None = None) -> bool:
    return bool(oracle_success_batch(mesh, g.as_array()[None], cfg)[0])
