"""Procedural ground-truth grasps: antipodal sampling plus oracle-checked negatives."""

from __future__ import annotations

import logging

import numpy as np

from ..evaluation.oracle import OracleConfig, oracle_success_batch
from ..geometry import canonical_quat, matrix_to_quat, quat_multiply, random_quats
from .mesh import TriMesh
from .raycast import first_hits

log = logging.getLogger(__name__)


def _grasp_frames(centers: np.ndarray, closing: np.ndarray, spin: np.ndarray, depth: float) -> np.ndarray:
    """Grasps whose fingertip line passes through ``centers`` along ``closing``.

    The approach axis is perpendicular to the closing axis at angle ``spin``.
    """
    x = closing / np.linalg.norm(closing, axis=1, keepdims=True)
    helper = np.where(np.abs(x[:, :1]) < 0.9, np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    u = np.cross(x, helper)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    w = np.cross(x, u)
    z = np.cos(spin)[:, None] * u + np.sin(spin)[:, None] * w
    y = np.cross(z, x)
    rot = np.stack([x, y, z], axis=2)
    quats = matrix_to_quat(rot)
    trans = centers - depth * z
    return np.concatenate([quats, trans], axis=1)


def sample_antipodal_grasps(
    mesh: TriMesh,
    count: int,
    friction: float = 0.5,
    seed: int = 0,
    cfg: OracleConfig | None = None,
    max_attempts: int | None = None,
) -> np.ndarray:
    """Up to ``count`` oracle-passing grasps as an ``(n, 7)`` array in the mesh frame.

    Contacts are sampled on the surface, a ray is cast inward through a
    direction jittered inside the friction cone, and the exit point becomes
    the opposing contact. Fewer than ``count`` grasps are returned (with a
    warning) if the attempt budget runs out.
    """
    if friction <= 0:
        raise ValueError("friction coefficient must be positive")
    cfg = cfg or OracleConfig(friction=friction)
    if cfg.friction != friction:
        cfg = OracleConfig(friction=friction, contact_tolerance=cfg.contact_tolerance, gripper=cfg.gripper)
    gr = cfg.gripper
    rng = np.random.default_rng(seed)
    budget = max_attempts if max_attempts is not None else 60 * count
    cone = np.arctan(friction)
    found: list[np.ndarray] = []
    n_found = 0
    attempts = 0
    batch = max(64, 4 * count)
    while n_found < count and attempts < budget:
        m = min(batch, budget - attempts)
        attempts += m
        pts, normals, _ = mesh.sample_surface(rng, m)
        # jitter the inward direction inside half the friction cone
        axis = -normals
        perp = rng.standard_normal((m, 3))
        perp -= np.einsum("ni,ni->n", perp, axis)[:, None] * axis
        perp /= np.linalg.norm(perp, axis=1, keepdims=True)
        tilt = rng.uniform(0.0, 0.5 * cone, m)
        d = np.cos(tilt)[:, None] * axis + np.sin(tilt)[:, None] * perp
        t, tri = first_hits(mesh, pts + 1e-7 * d, d)
        ok = (tri >= 0) & (t <= gr.max_width - 2 * cfg.contact_tolerance)
        if not np.any(ok):
            continue
        p1 = pts[ok]
        p2 = p1 + t[ok, None] * d[ok]
        centers = 0.5 * (p1 + p2)
        spin = rng.uniform(0.0, 2 * np.pi, len(p1))
        # closing axis from the far contact toward the near one keeps +x pointing at p1's side
        cand = _grasp_frames(centers, p1 - p2, spin, gr.finger_depth)
        good = cand[oracle_success_batch(mesh, cand, cfg)]
        if len(good):
            found.append(good)
            n_found += len(good)
    out = np.concatenate(found)[:count] if found else np.zeros((0, 7))
    if len(out) < count:
        log.warning("antipodal sampler found %d of %d grasps after %d attempts", len(out), count, attempts)
    return out


def sample_negative_grasps(
    mesh: TriMesh,
    positives: np.ndarray,
    count: int,
    seed: int = 0,
    cfg: OracleConfig | None = None,
    max_attempts: int | None = None,
) -> np.ndarray:
    """Oracle-failing grasps: half perturbed positives, half random poses near the object."""
    cfg = cfg or OracleConfig()
    rng = np.random.default_rng(seed)
    budget = max_attempts if max_attempts is not None else 40 * count
    center = mesh.surface_centroid
    radius = mesh.bounding_radius
    found: list[np.ndarray] = []
    n_found = 0
    attempts = 0
    while n_found < count and attempts < budget:
        m = max(64, 2 * (count - n_found))
        attempts += m
        n_pert = m // 2 if len(positives) else 0
        cand = []
        if n_pert:
            base = positives[rng.integers(0, len(positives), n_pert)]
            dq = rng.standard_normal((n_pert, 4)) * np.array([0.0, 1.0, 1.0, 1.0]) * rng.uniform(0.05, 0.4, (n_pert, 1))
            dq[:, 0] = 1.0
            q = canonical_quat(quat_multiply(canonical_quat(dq), base[:, :4]))
            tr = base[:, 4:] + rng.normal(0.0, 0.015, (n_pert, 3))
            cand.append(np.concatenate([q, tr], axis=1))
        n_rand = m - n_pert
        q = random_quats(rng, n_rand)
        dirs = rng.standard_normal((n_rand, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        tr = center + dirs * (radius * rng.uniform(0.0, 1.5, (n_rand, 1)))
        cand.append(np.concatenate([q, tr], axis=1))
        cand = np.concatenate(cand)
        bad = cand[~oracle_success_batch(mesh, cand, cfg)]
        # interleave perturbed and random candidates
        if len(bad):
            found.append(bad[rng.permutation(len(bad))])
            n_found += len(bad)
    out = np.concatenate(found)[:count] if found else np.zeros((0, 7))
    if len(out) < count:
        log.warning("negative sampler found %d of %d grasps", len(out), count)
    return out
