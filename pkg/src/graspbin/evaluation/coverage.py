"""Coverage of ground-truth grasps and success-over-coverage curves."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..binning import BinGrid, BinLabel, overlapping_labels
from ..data.shard import label_grasps
from ..geometry import GraspPose, approaches_of

GROUND_TRUTH_GRID = BinGrid(n_pitch=8, n_yaw=16)


@dataclass(frozen=True)
class CoverageConfig:
    angle_deg: float = 10.0
    distance: float = 0.02
    grid: BinGrid = GROUND_TRUTH_GRID

    def __post_init__(self):
        if not (self.angle_deg > 0 and self.distance > 0):
            raise ValueError("coverage thresholds must be positive")
        if self.grid.size != 128:
            raise ValueError(f"ground-truth grid must have 128 cells, got {self.grid.size}")

    @property
    def angle_rad(self) -> float:
        return math.radians(self.angle_deg)


def _as_grasp_array(grasps) -> np.ndarray:
    if isinstance(grasps, GraspPose):
        return grasps.as_array()[None]
    if isinstance(grasps, (list, tuple)) and grasps and isinstance(grasps[0], GraspPose):
        return np.stack([g.as_array() for g in grasps])
    return np.asarray(grasps, dtype=np.float64).reshape(-1, 7)


def _approach_angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise angles between unit rows of ``a`` and ``b``; atan2 keeps small angles accurate."""
    dot = a @ b.T
    cross = np.linalg.norm(np.cross(a[:, None, :], b[None, :, :]), axis=-1)
    return np.arctan2(cross, dot)


def cover_matrix(generated, ground_truth, cfg: CoverageConfig | None = None) -> np.ndarray:
    """Boolean ``(n_gen, n_gt)`` matrix of the coverage relation."""
    cfg = cfg or CoverageConfig()
    g = _as_grasp_array(generated)
    t = _as_grasp_array(ground_truth)
    if len(g) == 0 or len(t) == 0:
        return np.zeros((len(g), len(t)), dtype=bool)
    ang = _approach_angles(approaches_of(g[:, :4]), approaches_of(t[:, :4]))
    dist = np.linalg.norm(g[:, None, 4:] - t[None, :, 4:], axis=-1)
    return (ang < cfg.angle_rad) & (dist < cfg.distance)


def covers(g_gen: GraspPose, g_true: GraspPose, cfg: CoverageConfig | None = None) -> bool:
    return bool(cover_matrix(g_gen, g_true, cfg)[0, 0])


def filter_to_bins(grasps, grid: BinGrid, allowed) -> np.ndarray:
    """Boolean mask over ``grasps`` selecting those whose approach bin is in ``allowed``.

    Order is preserved by indexing with the mask. An all-false mask is a failed trial for callers.
    """
    g = _as_grasp_array(grasps)
    allowed = {grid.validate(b) for b in allowed}
    if len(g) == 0 or not allowed:
        return np.zeros(len(g), dtype=bool)
    labels = label_grasps(grid, g)
    keys = labels[:, 0] * grid.n_yaw + labels[:, 1]
    ok = np.array(sorted(b.c_pitch * grid.n_yaw + b.c_yaw for b in allowed))
    return np.isin(keys, ok)


def ground_truth_subsets(grasps, cfg: CoverageConfig | None = None) -> dict[BinLabel, np.ndarray]:
    """Split ground-truth grasps into the non-empty cells of the ground-truth grid."""
    cfg = cfg or CoverageConfig()
    g = _as_grasp_array(grasps)
    labels = label_grasps(cfg.grid, g)
    out: dict[BinLabel, np.ndarray] = {}
    for key in sorted({tuple(l) for l in labels.tolist()}):
        mask = (labels[:, 0] == key[0]) & (labels[:, 1] == key[1])
        out[BinLabel(*key)] = g[mask]
    return out


def relevant_ground_truth(subsets: dict[BinLabel, np.ndarray], sampling_grid: BinGrid, active,
                          cfg: CoverageConfig | None = None) -> np.ndarray:
    """Ground-truth grasps lying in ground-truth bins that overlap any active sampling bin."""
    cfg = cfg or CoverageConfig()
    if isinstance(active, BinLabel):
        active = [active]
    keep: set[BinLabel] = set()
    for label in active:
        keep.update(overlapping_labels(cfg.grid, sampling_grid, label))
    parts = [subsets[b] for b in sorted(keep) if b in subsets and len(subsets[b])]
    return np.concatenate(parts) if parts else np.zeros((0, 7))


def coverage_rate(generated, subsets: dict[BinLabel, np.ndarray], sampling_grid: BinGrid, active,
                  cfg: CoverageConfig | None = None) -> float:
    """Fraction of relevant ground-truth grasps covered by at least one generated grasp.

    Returns nan when no relevant ground truth exists, so callers can ignore the bin.
    """
    gt = relevant_ground_truth(subsets, sampling_grid, active, cfg)
    if len(gt) == 0:
        return float("nan")
    m = cover_matrix(generated, gt, cfg)
    return float(m.any(axis=0).sum() / len(gt)) if m.size else 0.0


@dataclass
class Trial:
    """One sampling trial: kept grasps, their scores and oracle outcomes, plus the ground truth to cover."""

    scores: np.ndarray
    success: np.ndarray
    covered_by: np.ndarray  # (n_kept, n_gt) cover matrix
    n_ground_truth: int


@dataclass
class Curve:
    coverage: list[float] = field(default_factory=list)
    success: list[float] = field(default_factory=list)
    auc: float = 0.0
    max_coverage: float = 0.0


def success_over_coverage(trials: list[Trial]) -> Curve:
    """Sweep one global score threshold from high to low over all trials.

    Tied scores enter together. At each threshold, coverage is the covered share of all ground-truth
    grasps and success is the oracle success rate of the kept grasps. The curve starts at coverage 0
    with the success rate of the top tie group; AUC is the trapezoid over the realized coverage range.
    """
    total_gt = sum(t.n_ground_truth for t in trials)
    scores, success, gains = [], [], []
    for t in trials:
        n = len(t.scores)
        if n == 0:
            continue
        order = np.argsort(-t.scores, kind="stable")
        gain = np.zeros(n)
        if t.n_ground_truth and t.covered_by.size:
            cov = t.covered_by[order]
            hit = cov.any(axis=0)
            first = np.argmax(cov, axis=0)[hit]
            gain[order[np.arange(n)]] = np.bincount(first, minlength=n)
        scores.append(t.scores)
        success.append(np.asarray(t.success, dtype=np.float64))
        gains.append(gain)
    if not scores or total_gt == 0:
        return Curve()
    s = np.concatenate(scores)
    ok = np.concatenate(success)
    g = np.concatenate(gains)
    order = np.argsort(-s, kind="stable")
    s, ok, g = s[order], ok[order], g[order]
    # Within one trial, a tie group's total gain is order independent, so group ends are exact.
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    kept = ends + 1
    cov = np.cumsum(g)[ends] / total_gt
    rate = np.cumsum(ok)[ends] / kept
    xs = np.r_[0.0, cov]
    ys = np.r_[rate[0], rate]
    auc = float(np.sum((xs[1:] - xs[:-1]) * (ys[1:] + ys[:-1]) / 2.0))
    return Curve(xs.tolist(), ys.tolist(), auc, float(xs[-1]))
