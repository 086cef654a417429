"""Point clouds, principal components and principal-component bin selection."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .binning import BinGrid, BinLabel, antipodal_labels

GBPC_MAGIC = b"GBPC"
DEGENERACY_GAP = 1e-6


class Frame(str, enum.Enum):
    CAMERA = "camera"
    OBJECT = "object"
    WORLD = "world"


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    frame: Frame = Frame.CAMERA
    features: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "frame", Frame(self.frame))
        if self.features is not None:
            f = np.asarray(self.features, dtype=np.float64)
            if f.ndim == 1:
                f = f[:, None]
            if f.shape[0] != pts.shape[0]:
                raise ValueError("feature rows must match point count")
            object.__setattr__(self, "features", f)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n_features(self) -> int:
        return 0 if self.features is None else self.features.shape[1]

    def as_array(self) -> np.ndarray:
        if self.features is None:
            return self.points
        return np.concatenate([self.points, self.features], axis=1)

    def transformed(self, rotation: np.ndarray, translation) -> "PointCloud":
        return PointCloud(self.points @ np.asarray(rotation).T + np.asarray(translation), self.frame, self.features)


@dataclass(frozen=True)
class PcaResult:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # rows are v1, v2, v3
    barycenter: np.ndarray
    degenerate: bool

    @property
    def v2(self) -> np.ndarray:
        return self.eigenvectors[1]


class DegenerateCloudError(ValueError):
    """The second principal component is not well defined; ``.pca`` holds the decomposition."""

    def __init__(self, message: str, pca: PcaResult):
        super().__init__(message)
        self.pca = pca


def _fix_sign(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    for c in v:
        if abs(c) > tol:
            return v if c > 0 else -v
    return v


def covariance(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Barycenter and the biased (``1/N``) covariance of an ``(N, 3)`` array."""
    center = points.mean(axis=0)
    d = points - center
    return center, d.T @ d / points.shape[0]


def pca(cloud: PointCloud) -> PcaResult:
    pts = cloud.points
    if pts.shape[0] < 3:
        raise ValueError("PCA needs at least 3 points")
    center, cov = covariance(pts)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = np.stack([_fix_sign(vecs[:, i]) for i in order])
    scale = max(vals[0], np.finfo(float).tiny)
    degenerate = bool(vals[2] / scale < 1e-12 or (vals[0] - vals[2]) / scale < DEGENERACY_GAP)
    return PcaResult(vals, vecs, center, degenerate)


def second_pc_is_defined(result: PcaResult, gap: float = DEGENERACY_GAP) -> bool:
    l1, l2, l3 = result.eigenvalues
    if l1 <= 0.0:
        return False
    return (l1 - l2) / l1 >= gap and (l2 - l3) / l1 >= gap


def select_pc_bins(cloud: PointCloud, grid: BinGrid) -> tuple[BinLabel, BinLabel]:
    """Bins hit by ``+v2`` and ``-v2``, in that order."""
    result = pca(cloud)
    if not second_pc_is_defined(result):
        raise DegenerateCloudError(
            f"second principal component is ambiguous (eigenvalues {result.eigenvalues.tolist()})", result
        )
    return antipodal_labels(grid, result.v2)


def downsample(cloud: PointCloud, n: int, seed: int) -> PointCloud:
    """Fixed-size subset; pads by resampling with replacement when the cloud is smaller."""
    if n < 1:
        raise ValueError("n must be positive")
    count = len(cloud)
    if count == 0:
        raise ValueError("cannot downsample an empty cloud")
    rng = np.random.default_rng(seed)
    if count >= n:
        idx = rng.choice(count, size=n, replace=False)
    else:
        idx = np.concatenate([rng.permutation(count), rng.choice(count, size=n - count, replace=True)])
    feats = None if cloud.features is None else cloud.features[idx]
    return PointCloud(cloud.points[idx], cloud.frame, feats)


def write_gbpc(path, cloud: PointCloud) -> None:
    data = cloud.as_array().astype("<f4")
    with open(path, "wb") as fh:
        fh.write(GBPC_MAGIC)
        fh.write(struct.pack("<II", len(cloud), cloud.n_features))
        fh.write(data.tobytes())


def read_gbpc(path, frame: Frame = Frame.CAMERA) -> PointCloud:
    raw = Path(path).read_bytes()
    if raw[:4] != GBPC_MAGIC:
        raise ValueError(f"{path}: not a GBPC point cloud (bad magic)")
    if len(raw) < 12:
        raise ValueError(f"{path}: truncated header")
    n, k = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * n * (3 + k)
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes for N={n}, K={k}, found {len(raw)}")
    arr = np.frombuffer(raw, dtype="<f4", offset=12).reshape(n, 3 + k).astype(np.float64)
    return PointCloud(arr[:, :3], frame, arr[:, 3:] if k else None)


def write_xyz(path, cloud: PointCloud) -> None:
    np.savetxt(path, cloud.as_array(), fmt="%.9g")


def read_xyz(path, frame: Frame = Frame.CAMERA) -> PointCloud:
    arr = np.loadtxt(path, ndmin=2)
    if arr.shape[1] < 3:
        raise ValueError(f"{path}: need at least 3 columns")
    return PointCloud(arr[:, :3], frame, arr[:, 3:] if arr.shape[1] > 3 else None)


def load_cloud(path) -> PointCloud:
    """Read ``.gbpc`` binary or whitespace XYZ text, chosen by magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == GBPC_MAGIC:
        return read_gbpc(path)
    return read_xyz(path)
