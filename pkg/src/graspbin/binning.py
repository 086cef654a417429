"""Yaw/pitch discretization of approach directions.

A :class:`BinGrid` splits pitch ``[0, pi]`` into ``n_pitch`` and yaw
``[0, 2pi)`` into ``n_yaw`` equal intervals. Intervals are lower-inclusive;
the closed top edges (pitch ``pi``, yaw ``2pi``) clamp to the last index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .geometry import GraspPose, approach_of, vec_to_pitch_yaw, vecs_to_pitch_yaw

TWO_PI = 2.0 * math.pi

# yaw/pitch resolutions benchmarked in the original work, keyed "yaw/pitch"
PRESETS: dict[str, tuple[int, int]] = {
    "4/1": (4, 1),
    "4/2": (4, 2),
    "8/1": (8, 1),
    "8/4": (8, 4),
    "16/1": (16, 1),
    "16/8": (16, 8),
}


class BinRangeError(ValueError):
    """Angle or label outside the grid's domain."""


@dataclass(frozen=True, order=True)
class BinLabel:
    c_pitch: int
    c_yaw: int

    def __str__(self) -> str:
        return f"{self.c_pitch},{self.c_yaw}"

    @classmethod
    def parse(cls, text: str) -> "BinLabel":
        parts = text.replace(" ", "").split(",")
        if len(parts) != 2:
            raise ValueError(f"bin label must look like 'c_pitch,c_yaw', got {text!r}")
        return cls(int(parts[0]), int(parts[1]))


@dataclass(frozen=True)
class BinGrid:
    n_pitch: int
    n_yaw: int

    def __post_init__(self):
        if int(self.n_pitch) < 1 or int(self.n_yaw) < 1:
            raise ValueError("grid dimensions must be positive")

    @classmethod
    def preset(cls, name: str) -> "BinGrid":
        n_yaw, n_pitch = PRESETS[name]
        return cls(n_pitch=n_pitch, n_yaw=n_yaw)

    @property
    def size(self) -> int:
        return self.n_pitch * self.n_yaw

    def labels(self) -> Iterator[BinLabel]:
        for cp in range(self.n_pitch):
            for cy in range(self.n_yaw):
                yield BinLabel(cp, cy)

    def contains(self, label: BinLabel) -> bool:
        return 0 <= label.c_pitch < self.n_pitch and 0 <= label.c_yaw < self.n_yaw

    def validate(self, label: BinLabel) -> BinLabel:
        if not self.contains(label):
            raise BinRangeError(f"label {label} out of range for {self.n_pitch}x{self.n_yaw} (pitch x yaw) grid")
        return label

    def index(self, label: BinLabel) -> int:
        self.validate(label)
        return label.c_pitch * self.n_yaw + label.c_yaw

    def pitch_edges(self, c_pitch: int) -> tuple[float, float]:
        top = math.pi if c_pitch + 1 == self.n_pitch else (c_pitch + 1) * math.pi / self.n_pitch
        return c_pitch * math.pi / self.n_pitch, top

    def yaw_edges(self, c_yaw: int) -> tuple[float, float]:
        top = TWO_PI if c_yaw + 1 == self.n_yaw else (c_yaw + 1) * TWO_PI / self.n_yaw
        return c_yaw * TWO_PI / self.n_yaw, top


def label_of_angles(grid: BinGrid, pitch: float, yaw: float) -> BinLabel:
    if not (0.0 <= pitch <= math.pi):
        raise BinRangeError(f"pitch {pitch} outside [0, pi]")
    if not (0.0 <= yaw <= TWO_PI):
        raise BinRangeError(f"yaw {yaw} outside [0, 2pi]")
    cp = min(int(math.floor(grid.n_pitch * pitch / math.pi)), grid.n_pitch - 1)
    cy = min(int(math.floor(grid.n_yaw * yaw / TWO_PI)), grid.n_yaw - 1)
    return BinLabel(cp, cy)


def labels_of_angles(grid: BinGrid, pitch: np.ndarray, yaw: np.ndarray) -> np.ndarray:
    """Vectorized :func:`label_of_angles`; returns an ``(n, 2)`` int array ``[c_pitch, c_yaw]``."""
    pitch = np.asarray(pitch, dtype=np.float64)
    yaw = np.asarray(yaw, dtype=np.float64)
    if np.any((pitch < 0.0) | (pitch > math.pi)) or np.any((yaw < 0.0) | (yaw > TWO_PI)):
        raise BinRangeError("angles outside pitch [0, pi] / yaw [0, 2pi]")
    cp = np.minimum(np.floor(grid.n_pitch * pitch / math.pi).astype(np.int64), grid.n_pitch - 1)
    cy = np.minimum(np.floor(grid.n_yaw * yaw / TWO_PI).astype(np.int64), grid.n_yaw - 1)
    return np.stack([cp, cy], axis=-1)


def label_of_vector(grid: BinGrid, v) -> BinLabel:
    pitch, yaw = vec_to_pitch_yaw(v)
    return label_of_angles(grid, pitch, yaw)


def labels_of_vectors(grid: BinGrid, v: np.ndarray) -> np.ndarray:
    pitch, yaw = vecs_to_pitch_yaw(v)
    return labels_of_angles(grid, pitch, yaw)


def bin_center(grid: BinGrid, label: BinLabel) -> tuple[float, float]:
    grid.validate(label)
    return (
        (label.c_pitch + 0.5) * math.pi / grid.n_pitch,
        (label.c_yaw + 0.5) * TWO_PI / grid.n_yaw,
    )


def bin_center_vector(grid: BinGrid, label: BinLabel) -> np.ndarray:
    pitch, yaw = bin_center(grid, label)
    return np.array([math.sin(pitch) * math.cos(yaw), math.sin(pitch) * math.sin(yaw), math.cos(pitch)])


def antipodal_labels(grid: BinGrid, v) -> tuple[BinLabel, BinLabel]:
    v = np.asarray(v, dtype=np.float64)
    return label_of_vector(grid, v), label_of_vector(grid, -v)


def grasp_in_bin(grid: BinGrid, g: GraspPose, label: BinLabel) -> bool:
    return label_of_vector(grid, approach_of(g.rotation)) == label


def conditioning_features(grid: BinGrid, label: BinLabel, encoding: str = "center") -> np.ndarray:
    """Two network features for a bin.

    ``"center"`` gives the normalized bin-center angles ``(pitch/pi, yaw/2pi)``;
    ``"index"`` gives the raw integer label.
    """
    if encoding == "center":
        pitch, yaw = bin_center(grid, label)
        return np.array([pitch / math.pi, yaw / TWO_PI])
    if encoding == "index":
        grid.validate(label)
        return np.array([float(label.c_pitch), float(label.c_yaw)])
    raise ValueError(f"unknown bin encoding {encoding!r}")


def _intervals_overlap(a0: float, a1: float, b0: float, b1: float) -> bool:
    return min(a1, b1) - max(a0, b0) > 1e-12


def overlapping_labels(fine: BinGrid, coarse: BinGrid, label: BinLabel) -> list[BinLabel]:
    """Labels of ``fine`` whose cells share a positive-area region with ``label`` on ``coarse``."""
    coarse.validate(label)
    p0, p1 = coarse.pitch_edges(label.c_pitch)
    y0, y1 = coarse.yaw_edges(label.c_yaw)
    out = []
    for cand in fine.labels():
        q0, q1 = fine.pitch_edges(cand.c_pitch)
        z0, z1 = fine.yaw_edges(cand.c_yaw)
        if _intervals_overlap(p0, p1, q0, q1) and _intervals_overlap(y0, y1, z0, z1):
            out.append(cand)
    return out
