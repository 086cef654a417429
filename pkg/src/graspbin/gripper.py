"""Parallel-jaw gripper model.

The gripper frame has its origin at the palm center, approaches along ``+z``
and closes along ``x``. Six control points (wrist, palm, two knuckles, two
fingertips) stand in for the hand in the reconstruction loss and in the
discriminator input.

Gripper files are JSON::

    {
      "name": "panda",
      "max_width": 0.08,          # jaw opening, meters
      "finger_depth": 0.046,      # palm-to-fingertip distance, meters
      "control_points": [[x, y, z], ...]   # exactly 6, gripper frame
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import GraspPose

N_CONTROL_POINTS = 6


@dataclass(frozen=True, eq=False)
class GripperModel:
    control_points: np.ndarray
    max_width: float
    finger_depth: float
    name: str = "custom"

    def __post_init__(self):
        pts = np.asarray(self.control_points, dtype=np.float64)
        if pts.shape != (N_CONTROL_POINTS, 3):
            raise ValueError(f"gripper needs exactly {N_CONTROL_POINTS} control points, got shape {pts.shape}")
        if not (self.max_width > 0 and self.finger_depth > 0):
            raise ValueError("max_width and finger_depth must be positive")
        mirrored = pts * np.array([-1.0, -1.0, 1.0])
        for p in mirrored:
            if np.min(np.linalg.norm(pts - p, axis=1)) > 1e-9:
                raise ValueError("control points must be symmetric about the approach axis")
        object.__setattr__(self, "control_points", pts)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "max_width": self.max_width,
            "finger_depth": self.finger_depth,
            "control_points": self.control_points.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GripperModel":
        try:
            return cls(
                control_points=np.asarray(d["control_points"], dtype=np.float64),
                max_width=float(d["max_width"]),
                finger_depth=float(d["finger_depth"]),
                name=str(d.get("name", "custom")),
            )
        except KeyError as exc:
            raise ValueError(f"gripper definition missing field {exc.args[0]!r}") from None


def load_gripper(path: str | Path | None = None) -> GripperModel:
    """Load a gripper JSON file; ``None`` gives the bundled Panda-like hand."""
    if path is None:
        text = resources.files("graspbin").joinpath("grippers/panda.json").read_text()
    else:
        text = Path(path).read_text()
    return GripperModel.from_dict(json.loads(text))


def default_gripper() -> GripperModel:
    return load_gripper(None)


def gripper_cloud(model: GripperModel, g: GraspPose) -> np.ndarray:
    """Control points in the grasp's parent frame, shape ``(6, 3)``."""
    return model.control_points @ g.rotation.as_matrix().T + g.translation


def gripper_clouds(model: GripperModel, rotations: np.ndarray, translations: np.ndarray) -> np.ndarray:
    """Batched :func:`gripper_cloud` for ``(n, 3, 3)`` rotations and ``(n, 3)`` translations."""
    return np.einsum("nij,pj->npi", rotations, model.control_points) + translations[:, None, :]


def reconstruction_l1(model: GripperModel, g_true: GraspPose, g_pred: GraspPose) -> float:
    return float(np.abs(gripper_cloud(model, g_true) - gripper_cloud(model, g_pred)).sum())


def closing_segment(model: GripperModel, g: GraspPose) -> tuple[np.ndarray, np.ndarray]:
    """Jaw endpoints at fingertip depth, ``max_width`` apart along the closing axis."""
    half = 0.5 * model.max_width
    local = np.array([[-half, 0.0, model.finger_depth], [half, 0.0, model.finger_depth]])
    world = local @ g.rotation.as_matrix().T + g.translation
    return world[0], world[1]
