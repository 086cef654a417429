"""Point-set backbone, conditional VAE generator and grasp discriminator."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from ..binning import BinGrid, BinLabel, conditioning_features
from ..gripper import GripperModel, default_gripper

# network inputs are in decimeters so coordinates are O(1)
COORD_SCALE = 10.0
LOGVAR_CLAMP = 10.0


@dataclass
class PointSetEncoderConfig:
    in_features: int
    hidden: tuple[int, ...] = (64, 128)
    global_width: int = 128
    pooling: str = "max"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.in_features < 0 or any(h <= 0 for h in self.hidden) or self.global_width <= 0:
            raise ValueError("encoder widths must be positive")
        if self.pooling not in ("max", "mean"):
            raise ValueError("pooling must be 'max' or 'mean'")


class PointSetEncoder(nn.Module):
    """Shared per-point MLP followed by a symmetric pooling over points.

    Input ``(B, N, 3 + K)``; output ``(B, global_width)``.
    """

    def __init__(self, cfg: PointSetEncoderConfig):
        super().__init__()
        self.cfg = cfg
        widths = [3 + cfg.in_features, *cfg.hidden, cfg.global_width]
        self.layers = nn.ModuleList(nn.Linear(a, b) for a, b in zip(widths[:-1], widths[1:]))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = torch.relu(x)
        if self.cfg.pooling == "max":
            return x.max(dim=1).values
        return x.mean(dim=1)


def _head(width: int, out: int, hidden: int) -> nn.Sequential:
    return nn.Sequential(nn.ReLU(), nn.Linear(width, hidden), nn.ReLU(), nn.Linear(hidden, out))


def quat_matrix(q: torch.Tensor) -> torch.Tensor:
    """Rotation matrices ``(..., 3, 3)`` from unit quaternions ``(..., 4)``."""
    w, x, y, z = q.unbind(-1)
    return torch.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
        ],
        dim=-1,
    ).reshape(*q.shape[:-1], 3, 3)


def quat_rotate_points(q: torch.Tensor, pts: torch.Tensor) -> torch.Tensor:
    """Rotate ``(P, 3)`` points by each of ``(B, 4)`` unit quaternions -> ``(B, P, 3)``."""
    return torch.einsum("bij,pj->bpi", quat_matrix(q), pts)


def gripper_points(grasps: torch.Tensor, control_points: torch.Tensor) -> torch.Tensor:
    """Differentiable gripper map: ``(B, 7)`` grasps -> ``(B, 6, 3)`` control points."""
    return quat_rotate_points(grasps[:, :4], control_points) + grasps[:, None, 4:]


def normalize_quat_head(raw: torch.Tensor) -> torch.Tensor:
    """Unit quaternion on the ``w >= 0`` hemisphere."""
    q = raw / raw.norm(dim=-1, keepdim=True).clamp_min(1e-12)
    sign = torch.where(q[:, :1] < 0, -torch.ones_like(q[:, :1]), torch.ones_like(q[:, :1]))
    return q * sign


@dataclass
class CvaeConfig:
    n_pitch: int = 4
    n_yaw: int = 8
    latent: int = 4
    hidden: tuple[int, ...] = (64, 128)
    global_width: int = 128
    head_width: int = 128
    pooling: str = "max"
    bin_encoding: str = "center"
    conditioned: bool = True
    n_points: int = 256

    @property
    def grid(self) -> BinGrid:
        return BinGrid(self.n_pitch, self.n_yaw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CvaeConfig":
        d = dict(d)
        d["hidden"] = tuple(d.get("hidden", (64, 128)))
        return cls(**d)


def bin_feature_tensor(cfg: CvaeConfig, bins, batch: int | None = None) -> torch.Tensor:
    """``(B, 2)`` conditioning features; zeros for the unconditioned ablation."""
    if isinstance(bins, BinLabel):
        bins = [bins] * (batch or 1)
    arr = np.array([conditioning_features(cfg.grid, BinLabel(int(b[0]), int(b[1])) if not isinstance(b, BinLabel) else b,
                                          cfg.bin_encoding) for b in bins], dtype=np.float32)
    if not cfg.conditioned:
        arr[:] = 0.0
    return torch.from_numpy(arr)


class GraspCVAE(nn.Module):
    """Encoder q(z | O, C, G) and decoder p(G | O, C, z) over point-wise features."""

    def __init__(self, cfg: CvaeConfig):
        super().__init__()
        self.cfg = cfg
        enc_cfg = PointSetEncoderConfig(2 + 7, cfg.hidden, cfg.global_width, cfg.pooling)
        dec_cfg = PointSetEncoderConfig(2 + cfg.latent, cfg.hidden, cfg.global_width, cfg.pooling)
        self.encoder_backbone = PointSetEncoder(enc_cfg)
        self.encoder_head = _head(cfg.global_width, 2 * cfg.latent, cfg.head_width)
        self.decoder_backbone = PointSetEncoder(dec_cfg)
        self.decoder_head = _head(cfg.global_width, 7, cfg.head_width)

    @staticmethod
    def _center(points: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        centroid = points.mean(dim=1)
        return (points - centroid[:, None]) * COORD_SCALE, centroid

    def _inputs(self, points: torch.Tensor, per_sample: torch.Tensor) -> torch.Tensor:
        n = points.shape[1]
        return torch.cat([points, per_sample[:, None, :].expand(-1, n, -1)], dim=-1)

    def encode(self, points: torch.Tensor, bin_feats: torch.Tensor, grasps: torch.Tensor):
        """Returns ``(mu, logvar)``, each ``(B, L)``; ``logvar`` is clamped to [-10, 10]."""
        pts, centroid = self._center(points)
        g = torch.cat([grasps[:, :4], (grasps[:, 4:] - centroid) * COORD_SCALE], dim=-1)
        h = self.encoder_backbone(self._inputs(pts, torch.cat([bin_feats, g], dim=-1)))
        out = self.encoder_head(h)
        mu, logvar = out.chunk(2, dim=-1)
        return mu, logvar.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)

    def decode(self, points: torch.Tensor, bin_feats: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        """Returns ``(B, 7)`` grasps ``[q (unit, w >= 0), t]`` in the input frame."""
        pts, centroid = self._center(points)
        h = self.decoder_backbone(self._inputs(pts, torch.cat([bin_feats, z], dim=-1)))
        out = self.decoder_head(h)
        q = normalize_quat_head(out[:, 3:])
        t = out[:, :3] / COORD_SCALE + centroid
        return torch.cat([q, t], dim=-1)


def kl_divergence(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """Per-sample KL of ``N(mu, exp(logvar))`` from the standard normal."""
    return 0.5 * (mu.pow(2) + logvar.exp() - logvar - 1.0).sum(dim=-1)


def reconstruction_l1(control_points: torch.Tensor, g_true: torch.Tensor, g_pred: torch.Tensor) -> torch.Tensor:
    """Per-sample L1 distance between gripper control-point clouds."""
    return (gripper_points(g_true, control_points) - gripper_points(g_pred, control_points)).abs().sum(dim=(1, 2))


def vae_loss(model: GraspCVAE, control_points: torch.Tensor, points: torch.Tensor, bin_feats: torch.Tensor,
             grasps: torch.Tensor, eta: float, eps: torch.Tensor) -> tuple[torch.Tensor, dict]:
    """Batch-mean reconstruction + ``eta`` * KL, with ``z = mu + sigma * eps``."""
    mu, logvar = model.encode(points, bin_feats, grasps)
    z = mu + torch.exp(0.5 * logvar) * eps
    pred = model.decode(points, bin_feats, z)
    rec = reconstruction_l1(control_points, grasps, pred).mean()
    kl = kl_divergence(mu, logvar).mean()
    return rec + eta * kl, {"reconstruction": rec.detach(), "kl": kl.detach()}


@dataclass
class DiscriminatorConfig:
    hidden: tuple[int, ...] = (64, 128)
    global_width: int = 128
    head_width: int = 128
    pooling: str = "max"
    frame: str = "grasp"
    n_points: int = 256
    gripper: dict = field(default_factory=lambda: default_gripper().to_dict())

    def __post_init__(self):
        if self.frame not in ("grasp", "camera"):
            raise ValueError("discriminator frame must be 'grasp' or 'camera'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DiscriminatorConfig":
        d = dict(d)
        d["hidden"] = tuple(d.get("hidden", (64, 128)))
        return cls(**d)


def build_discriminator_input(cloud: np.ndarray, gripper_cloud: np.ndarray) -> np.ndarray:
    """``(N + 6, 4)`` union cloud: object block (flag 0) then gripper block (flag 1)."""
    cloud = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    gripper_cloud = np.asarray(gripper_cloud, dtype=np.float64).reshape(-1, 3)
    obj = np.concatenate([cloud, np.zeros((len(cloud), 1))], axis=1)
    grp = np.concatenate([gripper_cloud, np.ones((len(gripper_cloud), 1))], axis=1)
    return np.concatenate([obj, grp], axis=0)


class GraspDiscriminator(nn.Module):
    """Success logit from the union of object and gripper points with a membership flag.

    With ``frame="grasp"`` the union cloud is expressed in the gripper frame
    before encoding, so every object point's features depend on the pose.
    """

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        self.gripper = GripperModel.from_dict(cfg.gripper)
        self.register_buffer("control_points", torch.tensor(self.gripper.control_points, dtype=torch.float32))
        self.backbone = PointSetEncoder(PointSetEncoderConfig(1, cfg.hidden, cfg.global_width, cfg.pooling))
        self.head = _head(cfg.global_width, 1, cfg.head_width)

    def union_cloud(self, points: torch.Tensor, grasps: torch.Tensor) -> torch.Tensor:
        b, n, _ = points.shape
        q, t = grasps[:, :4], grasps[:, 4:]
        if self.cfg.frame == "grasp":
            q_inv = q * torch.tensor([1.0, -1.0, -1.0, -1.0], dtype=q.dtype)
            obj = torch.einsum("bij,bnj->bni", quat_matrix(q_inv), points - t[:, None])
            grip = self.control_points.to(points.dtype).expand(b, -1, -1)
        else:
            centroid = points.mean(dim=1, keepdim=True)
            obj = points - centroid
            grip = gripper_points(grasps, self.control_points.to(points.dtype)) - centroid
        flags = torch.cat([torch.zeros(b, n, 1, dtype=points.dtype), torch.ones(b, grip.shape[1], 1, dtype=points.dtype)], 1)
        xyz = torch.cat([obj, grip], dim=1) * COORD_SCALE
        return torch.cat([xyz, flags], dim=-1)

    def forward(self, points: torch.Tensor, grasps: torch.Tensor) -> torch.Tensor:
        """Success logits, shape ``(B,)``."""
        return self.head(self.backbone(self.union_cloud(points, grasps))).squeeze(-1)


def bce_with_logits(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Per-sample ``-(s log sigmoid(x) + (1 - s) log(1 - sigmoid(x)))`` computed stably."""
    return logits.clamp_min(0) - logits * targets + torch.log1p(torch.exp(-logits.abs()))
