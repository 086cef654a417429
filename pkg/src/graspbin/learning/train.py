"""Training loops, checkpoint packaging and inference for the generator and discriminator."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from ..binning import BinLabel
from ..data.shard import DatasetShard
from ..geometry import GraspPose
from ..gripper import GripperModel, default_gripper
from ..pointcloud import PointCloud, downsample
from . import checkpoint
from .networks import (
    CvaeConfig,
    DiscriminatorConfig,
    GraspCVAE,
    GraspDiscriminator,
    bce_with_logits,
    bin_feature_tensor,
    vae_loss,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    lr_final: float = 0.1  # cosine decay to lr * lr_final over ``epochs``
    eta: float = 0.1
    seed: int = 0
    max_steps: int | None = None
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.lr_final <= 1.0:
            raise ValueError(f"lr_final must be in (0, 1], got {self.lr_final}")

    def to_dict(self) -> dict:
        return asdict(self)

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a zero-based epoch; constant at the floor past ``epochs``."""
        t = min(epoch / max(self.epochs - 1, 1), 1.0)
        return self.lr * (self.lr_final + (1.0 - self.lr_final) * 0.5 * (1.0 + math.cos(math.pi * t)))


@dataclass
class TrainedModel:
    kind: str  # "cvae" | "discriminator"
    model: torch.nn.Module
    optimizer: torch.optim.Optimizer
    train_cfg: TrainConfig
    epochs_done: int = 0
    steps_done: int = 0
    trace: list[float] = field(default_factory=list)
    gripper: GripperModel = field(default_factory=default_gripper)
    provenance: dict = field(default_factory=dict)


def _set_threads(n: int) -> None:
    if torch.get_num_threads() != n:
        torch.set_num_threads(max(1, n))


def _set_lr(opt: torch.optim.Optimizer, lr: float) -> None:
    for group in opt.param_groups:
        group["lr"] = lr


def _cloud_arrays(shard: DatasetShard) -> list[np.ndarray]:
    return [c.cloud.points.astype(np.float32) for c in shard.clouds]


def _sample_points(clouds: list[np.ndarray], idx: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((len(idx), n, 3), dtype=np.float32)
    for k, ci in enumerate(idx):
        pts = clouds[ci]
        sel = rng.choice(len(pts), size=n, replace=len(pts) < n)
        out[k] = pts[sel]
    return out


def _epoch_streams(seed: int, epoch: int) -> tuple[np.random.Generator, torch.Generator]:
    """Per-epoch RNG streams; a resumed run replays them exactly."""
    gen = torch.Generator()
    gen.manual_seed(int(np.random.SeedSequence([seed, epoch, 1]).generate_state(1)[0]))
    return np.random.default_rng([seed, epoch]), gen


def new_cvae(cfg: CvaeConfig, train_cfg: TrainConfig) -> TrainedModel:
    torch.manual_seed(train_cfg.seed)
    model = GraspCVAE(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
    return TrainedModel("cvae", model, opt, train_cfg)


def new_discriminator(cfg: DiscriminatorConfig, train_cfg: TrainConfig) -> TrainedModel:
    torch.manual_seed(train_cfg.seed)
    model = GraspDiscriminator(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=train_cfg.lr)
    return TrainedModel("discriminator", model, opt, train_cfg, gripper=model.gripper)


def train_cvae(shard: DatasetShard, state: TrainedModel, epochs: int | None = None) -> TrainedModel:
    """Train on the shard's successful grasps; continues from ``state.epochs_done``."""
    cfg: CvaeConfig = state.model.cfg
    tc = state.train_cfg
    if (shard.grid.n_pitch, shard.grid.n_yaw) != (cfg.n_pitch, cfg.n_yaw):
        raise ValueError(f"shard grid {shard.grid} does not match model grid {cfg.grid}")
    pos = shard.positive_indices()
    if len(pos) == 0:
        raise ValueError("shard has no successful grasps to train on")
    recs = shard.records[pos]
    if not np.all(recs["success"]):
        raise AssertionError("CVAE training set contains failed grasps")
    _set_threads(tc.threads)
    clouds = _cloud_arrays(shard)
    grasps = torch.from_numpy(recs["grasp"].astype(np.float32))
    feats = bin_feature_tensor(cfg, recs["bin"])
    ctrl = torch.tensor(state.gripper.control_points, dtype=torch.float32)
    target = state.epochs_done + (epochs if epochs is not None else tc.epochs)
    model, opt = state.model, state.optimizer
    model.train()
    while state.epochs_done < target:
        rng, gen = _epoch_streams(tc.seed, state.epochs_done)
        _set_lr(opt, tc.lr_at(state.epochs_done))
        order = rng.permutation(len(recs))
        for s in range(0, len(order), tc.batch_size):
            if tc.max_steps is not None and state.steps_done >= tc.max_steps:
                break
            b = order[s : s + tc.batch_size]
            pts = torch.from_numpy(_sample_points(clouds, recs["cloud"][b], cfg.n_points, rng))
            eps = torch.randn(len(b), cfg.latent, generator=gen)
            loss, _ = vae_loss(model, ctrl, pts, feats[b], grasps[b], tc.eta, eps)
            opt.zero_grad()
            loss.backward()
            opt.step()
            state.trace.append(float(loss.detach()))
            state.steps_done += 1
        state.epochs_done += 1
        log.info("cvae epoch %d: mean loss %.4f", state.epochs_done, _tail_mean(state.trace, len(order), tc.batch_size))
        if tc.max_steps is not None and state.steps_done >= tc.max_steps:
            break
    model.eval()
    return state


def train_discriminator(shard: DatasetShard, state: TrainedModel, epochs: int | None = None) -> TrainedModel:
    cfg: DiscriminatorConfig = state.model.cfg
    tc = state.train_cfg
    if len(shard) == 0:
        raise ValueError("cannot train on an empty shard")
    _set_threads(tc.threads)
    clouds = _cloud_arrays(shard)
    recs = shard.records
    grasps = torch.from_numpy(recs["grasp"].astype(np.float32))
    labels = torch.from_numpy(recs["success"].astype(np.float32))
    target = state.epochs_done + (epochs if epochs is not None else tc.epochs)
    model, opt = state.model, state.optimizer
    model.train()
    while state.epochs_done < target:
        rng, _ = _epoch_streams(tc.seed, state.epochs_done)
        _set_lr(opt, tc.lr_at(state.epochs_done))
        order = rng.permutation(len(recs))
        for s in range(0, len(order), tc.batch_size):
            if tc.max_steps is not None and state.steps_done >= tc.max_steps:
                break
            b = order[s : s + tc.batch_size]
            pts = torch.from_numpy(_sample_points(clouds, recs["cloud"][b], cfg.n_points, rng))
            loss = bce_with_logits(model(pts, grasps[b]), labels[b]).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            state.trace.append(float(loss.detach()))
            state.steps_done += 1
        state.epochs_done += 1
        log.info("discriminator epoch %d: mean loss %.4f", state.epochs_done,
                 _tail_mean(state.trace, len(order), tc.batch_size))
        if tc.max_steps is not None and state.steps_done >= tc.max_steps:
            break
    model.eval()
    return state


def _tail_mean(trace: list[float], n: int, batch: int) -> float:
    k = max(1, math.ceil(n / batch))
    tail = trace[-k:]
    return float(np.mean(tail)) if tail else float("nan")


# ---------------------------------------------------------------- checkpoints

def save_model(path, state: TrainedModel) -> None:
    params = {k: v for k, v in state.model.state_dict().items()}
    exp_avg, exp_avg_sq, steps = {}, {}, {}
    names = {id(p): n for n, p in state.model.named_parameters()}
    for group in state.optimizer.param_groups:
        for p in group["params"]:
            st = state.optimizer.state.get(p)
            if not st:
                continue
            name = names[id(p)]
            exp_avg[name] = st["exp_avg"]
            exp_avg_sq[name] = st["exp_avg_sq"]
            steps[name] = np.array(float(st["step"]), dtype=np.float64)
    config = {
        "kind": state.kind,
        "architecture": state.model.cfg.to_dict(),
        "train": state.train_cfg.to_dict(),
        "epochs_done": state.epochs_done,
        "steps_done": state.steps_done,
        "gripper": state.gripper.to_dict(),
        "provenance": state.provenance,
    }
    sections = {
        "params": params,
        "adam_exp_avg": exp_avg,
        "adam_exp_avg_sq": exp_avg_sq,
        "adam_step": steps,
        "trace": {"loss": np.asarray(state.trace, dtype=np.float64)},
        "rng": {"torch": torch.get_rng_state().numpy()},
    }
    checkpoint.save(path, config, sections)


def load_model(path) -> TrainedModel:
    config, sections = checkpoint.load(path)
    kind = config.get("kind")
    tc = TrainConfig(**config["train"])
    if kind == "cvae":
        model: torch.nn.Module = GraspCVAE(CvaeConfig.from_dict(config["architecture"]))
    elif kind == "discriminator":
        model = GraspDiscriminator(DiscriminatorConfig.from_dict(config["architecture"]))
    else:
        raise checkpoint.CheckpointFormatError(f"{path}: unknown model kind {kind!r}")
    model.load_state_dict({k: torch.from_numpy(v) for k, v in sections["params"].items()})
    model.eval()
    opt = torch.optim.Adam(model.parameters(), lr=tc.lr)
    params = dict(model.named_parameters())
    for name, m in sections.get("adam_exp_avg", {}).items():
        opt.state[params[name]] = {
            "step": torch.tensor(float(np.ravel(sections["adam_step"][name])[0])),
            "exp_avg": torch.from_numpy(m),
            "exp_avg_sq": torch.from_numpy(sections["adam_exp_avg_sq"][name]),
        }
    return TrainedModel(
        kind=kind,
        model=model,
        optimizer=opt,
        train_cfg=tc,
        epochs_done=int(config.get("epochs_done", 0)),
        steps_done=int(config.get("steps_done", 0)),
        trace=sections.get("trace", {}).get("loss", np.zeros(0)).tolist(),
        gripper=GripperModel.from_dict(config["gripper"]),
        provenance=config.get("provenance", {}),
    )


# ------------------------------------------------------------------ inference

def _points_tensor(cloud, n: int, seed: int) -> torch.Tensor:
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(np.asarray(cloud))
    return torch.from_numpy(downsample(cloud, n, seed).points.astype(np.float32))


@torch.no_grad()
def sample_grasp_array(model: GraspCVAE, cloud, label: BinLabel, m: int, rng: np.random.Generator,
                       chunk: int = 200) -> np.ndarray:
    """``(m, 7)`` grasps decoded from ``m`` iid standard-normal latents, conditioned on ``label``."""
    if m < 1:
        raise ValueError("M must be at least 1")
    cfg = model.cfg
    cfg.grid.validate(label)
    pts = _points_tensor(cloud, cfg.n_points, int(rng.integers(0, 2**31)))
    z = torch.from_numpy(rng.standard_normal((m, cfg.latent)).astype(np.float32))
    feats = bin_feature_tensor(cfg, label, batch=1)
    out = []
    for s in range(0, m, chunk):
        zz = z[s : s + chunk]
        b = len(zz)
        out.append(model.decode(pts.expand(b, -1, -1), feats.expand(b, -1), zz))
    return torch.cat(out).double().numpy()


def sample_grasps(model: GraspCVAE, cloud, label: BinLabel, m: int, rng: np.random.Generator) -> list[GraspPose]:
    return [GraspPose.from_array(g) for g in sample_grasp_array(model, cloud, label, m, rng)]


@torch.no_grad()
def score_array(model: GraspDiscriminator, cloud, grasps: np.ndarray, seed: int = 0, chunk: int = 200) -> np.ndarray:
    """Success probabilities in ``(0, 1)`` for ``(m, 7)`` grasps on one cloud."""
    grasps = np.asarray(grasps, dtype=np.float32).reshape(-1, 7)
    if len(grasps) == 0:
        return np.zeros(0)
    pts = _points_tensor(cloud, model.cfg.n_points, seed)
    out = []
    for s in range(0, len(grasps), chunk):
        g = torch.from_numpy(grasps[s : s + chunk])
        out.append(model(pts.expand(len(g), -1, -1), g))
    logits = torch.cat(out).double()
    probs = torch.sigmoid(logits).numpy()
    return np.clip(probs, np.finfo(float).tiny, np.nextafter(1.0, 0.0))


def score(model: GraspDiscriminator, cloud, grasp: GraspPose, seed: int = 0) -> float:
    return float(score_array(model, cloud, grasp.as_array()[None], seed)[0])
