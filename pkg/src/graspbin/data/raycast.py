"""Vectorized ray/triangle intersection (Moller-Trumbore) against a TriMesh."""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh

_PARALLEL_EPS = 1e-14
# irrational-ish directions so parity rays rarely graze shared edges
_PARITY_DIRS = np.array(
    [
        [0.5773502691896258, 0.5773502691896257, 0.5773502691896259],
        [-0.2672612419124244, 0.5345224838248488, 0.8017837257372732],
        [0.8164965809277261, -0.4082482904638631, -0.4082482904638629],
    ]
)
_PARITY_DIRS = _PARITY_DIRS / np.linalg.norm(_PARITY_DIRS, axis=1, keepdims=True)
_CHUNK_PAIRS = 1_000_000


def line_hits(mesh: TriMesh, origins: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Signed hit parameters ``t`` for lines ``o + t*d`` against every triangle.

    Returns an ``(R, F)`` array with ``nan`` where the line misses the triangle.
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    c = mesh.corners
    v0 = c[:, 0]
    e1 = c[:, 1] - v0
    e2 = c[:, 2] - v0
    n_tri = len(c)
    out = np.full((len(origins), n_tri), np.nan)
    step = max(1, _CHUNK_PAIRS // max(n_tri, 1))
    for s in range(0, len(origins), step):
        o = origins[s : s + step, None, :]
        d = dirs[s : s + step, None, :]
        pvec = np.cross(d, e2)
        det = np.einsum("fk,rfk->rf", e1, pvec)
        ok = np.abs(det) > _PARALLEL_EPS
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = o - v0
        u = np.einsum("rfk,rfk->rf", tvec, pvec) * inv
        qvec = np.cross(tvec, e1)
        v = np.einsum("rfk,rfk->rf", np.broadcast_to(d, qvec.shape), qvec) * inv
        t = np.einsum("fk,rfk->rf", e2, qvec) * inv
        hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0)
        out[s : s + step] = np.where(hit, t, np.nan)
    return out


def first_hits(mesh: TriMesh, origins: np.ndarray, dirs: np.ndarray, t_min: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Nearest forward hit per ray: ``(t, triangle)`` with ``t=inf``, ``triangle=-1`` on a miss."""
    t = line_hits(mesh, origins, dirs)
    t = np.where(t > t_min, t, np.inf)
    tri = np.argmin(t, axis=1)
    best = t[np.arange(len(t)), tri]
    tri = np.where(np.isfinite(best), tri, -1)
    return best, tri


def points_inside(mesh: TriMesh, points: np.ndarray) -> np.ndarray:
    """Majority vote of crossing parity along three fixed directions."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    origins = np.repeat(points, len(_PARITY_DIRS), axis=0)
    dirs = np.tile(_PARITY_DIRS, (n, 1))
    t = line_hits(mesh, origins, dirs)
    crossings = np.sum(t > 0.0, axis=1).reshape(n, len(_PARITY_DIRS))
    return (crossings % 2).sum(axis=1) >= 2


def segment_hits_surface(mesh: TriMesh, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Whether each segment ``a[i] -> b[i]`` crosses the surface."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    t = line_hits(mesh, a, b - a)
    return np.any((t >= 0.0) & (t <= 1.0), axis=1)
