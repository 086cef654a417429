"""Model evaluation: bin policies, sampling, filtering, scoring and oracle execution."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..binning import BinGrid, BinLabel
from ..data.shard import DatasetShard, label_grasps, to_world_frame
from ..learning.train import TrainedModel, sample_grasp_array, score_array
from ..pointcloud import DegenerateCloudError, select_pc_bins
from .coverage import CoverageConfig, Curve, Trial, cover_matrix, filter_to_bins, ground_truth_subsets, \
    relevant_ground_truth, success_over_coverage
from .oracle import OracleConfig, oracle_success_batch

log = logging.getLogger(__name__)

POLICIES = ("pc", "random", "all", "fixed")


@dataclass(frozen=True)
class BinPolicy:
    kind: str
    label: BinLabel | None = None

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ValueError(f"unknown policy {self.kind!r}; expected pc, random, all or fixed=cp,cy")
        if (self.kind == "fixed") != (self.label is not None):
            raise ValueError("a fixed policy needs exactly one label")

    @classmethod
    def parse(cls, text: str) -> "BinPolicy":
        if text.startswith("fixed="):
            return cls("fixed", BinLabel.parse(text[len("fixed="):]))
        return cls(text)

    def __str__(self) -> str:
        return f"fixed={self.label}" if self.label is not None else self.kind


@dataclass
class BinStats:
    trials: int = 0
    successes: float = 0.0
    sampled: int = 0
    kept: int = 0

    def as_dict(self) -> dict:
        return {
            "trials": self.trials,
            "success_rate": self.successes / self.trials if self.trials else 0.0,
            "ratio_kept": self.kept / self.sampled if self.sampled else 0.0,
        }


@dataclass
class EvalReport:
    policy: str
    grid: dict
    grasps_per_trial: int
    exec_per_trial: int
    trials: int
    success_rate: float
    ratio_kept: float
    coverage: float
    auc: float
    max_coverage: float
    curve: dict
    per_bin: dict
    fallbacks: int = 0
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    def curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["coverage", "success"])
        for c, s in zip(self.curve["coverage"], self.curve["success"]):
            w.writerow([repr(c), repr(s)])
        return buf.getvalue()


def _trial_bins(policy: BinPolicy, grid: BinGrid, shard: DatasetShard, ci: int,
                rng: np.random.Generator, m: int) -> tuple[list[list[tuple[BinLabel, int]]], bool]:
    """Per trial, the (bin, grasp budget) pairs to sample. Second value flags a PCA fallback."""
    if policy.kind == "fixed":
        return [[(grid.validate(policy.label), m)]], False
    if policy.kind == "all":
        recs = shard.records_for_cloud(ci)
        pos = recs[recs["success"] == 1]
        occupied = sorted({tuple(b) for b in label_grasps(grid, pos["grasp"]).tolist()})
        return [[(BinLabel(*b), m)] for b in occupied], False
    if policy.kind == "pc":
        try:
            plus, minus = select_pc_bins(shard.clouds[ci].cloud, grid)
            half = m // 2
            return [[(plus, m - half), (minus, half)]], False
        except DegenerateCloudError:
            log.warning("cloud %s: second principal component undefined, falling back to a random bin",
                        shard.clouds[ci].id)
            fallback = True
    else:
        fallback = False
    labels = list(grid.labels())
    return [[(labels[int(rng.integers(len(labels)))], m)]], fallback


def evaluate_model(
    cvae: TrainedModel,
    discriminator: TrainedModel,
    shard: DatasetShard,
    policy: BinPolicy,
    grasps: int = 400,
    exec_k: int = 20,
    seed: int = 0,
    oracle: OracleConfig | None = None,
    coverage: CoverageConfig | None = None,
    cloud_stride: int = 1,
) -> EvalReport:
    """Run the sampling protocol on every ``cloud_stride``-th cloud of ``shard``.

    Success rate is the mean over trials of (successful executed grasps) / K, where K is
    ``min(exec_k, kept)``; a trial whose filtered set is empty scores 0.
    """
    if grasps < 1 or exec_k < 1 or cloud_stride < 1:
        raise ValueError("grasps, exec and cloud stride must be positive")
    grid = cvae.model.cfg.grid
    oracle = oracle or OracleConfig(gripper=cvae.gripper)
    coverage = coverage or CoverageConfig()
    per_bin: dict[str, BinStats] = {}
    trials: list[Trial] = []
    rates: list[float] = []
    sampled = kept_total = fallbacks = 0
    for ci in range(0, len(shard.clouds), cloud_stride):
        entry = shard.clouds[ci]
        mesh = shard.objects[entry.object_index].mesh
        rng = np.random.default_rng([seed, ci])
        plan, fell_back = _trial_bins(policy, grid, shard, ci, rng, grasps)
        fallbacks += fell_back
        recs = shard.records_for_cloud(ci)
        subsets = ground_truth_subsets(recs["grasp"][recs["success"] == 1], coverage)
        for bins in plan:
            parts = [sample_grasp_array(cvae.model, entry.cloud, b, n, rng) for b, n in bins if n > 0]
            g = np.concatenate(parts)
            active = [b for b, _ in bins]
            keep = filter_to_bins(g, grid, active)
            g = g[keep]
            sampled += len(keep)
            kept_total += len(g)
            if len(g):
                scores = score_array(discriminator.model, entry.cloud, g, seed=int(rng.integers(0, 2**31)))
                ok = oracle_success_batch(mesh, to_world_frame(g, entry.camera), oracle)
                top = np.argsort(-scores, kind="stable")[:exec_k]
                rate = float(ok[top].mean())
            else:
                scores, ok, rate = np.zeros(0), np.zeros(0, dtype=bool), 0.0
            rates.append(rate)
            gt = relevant_ground_truth(subsets, grid, active, coverage)
            trials.append(Trial(scores, ok, cover_matrix(g, gt, coverage), len(gt)))
            for b in active:
                st = per_bin.setdefault(str(b), BinStats())
                st.trials += 1
                st.successes += rate
                st.sampled += len(keep)
                st.kept += len(g)
    curve: Curve = success_over_coverage(trials)
    return EvalReport(
        policy=str(policy),
        grid={"n_pitch": grid.n_pitch, "n_yaw": grid.n_yaw},
        grasps_per_trial=grasps,
        exec_per_trial=exec_k,
        trials=len(rates),
        success_rate=float(np.mean(rates)) if rates else 0.0,
        ratio_kept=kept_total / sampled if sampled else 0.0,
        coverage=curve.max_coverage,
        auc=curve.auc,
        max_coverage=curve.max_coverage,
        curve={"coverage": curve.coverage, "success": curve.success},
        per_bin={k: per_bin[k].as_dict() for k in sorted(per_bin)},
        fallbacks=fallbacks,
        config={
            "seed": seed,
            "cloud_stride": cloud_stride,
            "friction": oracle.friction,
            "contact_tolerance": oracle.contact_tolerance,
            "coverage_angle_deg": coverage.angle_deg,
            "coverage_distance": coverage.distance,
            "ground_truth_grid": {"n_pitch": coverage.grid.n_pitch, "n_yaw": coverage.grid.n_yaw},
            "shard_split": shard.split,
            "objects": len(shard.objects),
        },
    )
