"""Independent reference implementations used only by the tests."""

import math

import numpy as np


def jacobi_eigh(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100):
    """Cyclic Jacobi rotations on a symmetric matrix, written with plain loops.

    Returns eigenvalues in descending order and eigenvectors as rows, each
    sign-fixed so its first non-negligible component is positive.
    """
    a = [list(map(float, row)) for row in a]
    n = len(a)
    v = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i][j] ** 2 for i in range(n) for j in range(n) if i != j))
        scale = math.sqrt(sum(a[i][j] ** 2 for i in range(n) for j in range(n)))
        if off <= tol * max(scale, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p][q] == 0.0:
                    continue
                theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akq = a[k][p], a[k][q]
                    a[k][p] = c * akp - s * akq
                    a[k][q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = a[p][k], a[q][k]
                    a[p][k] = c * apk - s * aqk
                    a[q][k] = s * apk + c * aqk
                for k in range(n):
                    vkp, vkq = v[k][p], v[k][q]
                    v[k][p] = c * vkp - s * vkq
                    v[k][q] = s * vkp + c * vkq
    vals = [a[i][i] for i in range(n)]
    order = sorted(range(n), key=lambda i: -vals[i])
    vecs = []
    for i in order:
        col = [v[k][i] for k in range(n)]
        for c in col:
            if abs(c) > 1e-12:
                if c < 0:
                    col = [-x for x in col]
                break
        vecs.append(col)
    return np.array([vals[i] for i in order]), np.array(vecs)


def naive_covariance(points: np.ndarray) -> np.ndarray:
    n = len(points)
    mean = [sum(p[k] for p in points) / n for k in range(3)]
    cov = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            cov[i, j] = sum((p[i] - mean[i]) * (p[j] - mean[j]) for p in points) / n
    return cov


def approach_angle(qa, qb) -> float:
    """Angle between the gripper z axes of two scalar-first quaternions, via explicit matrix columns."""

    def zcol(q):
        w, x, y, z = q / np.linalg.norm(q)
        return np.array([2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)])

    a, b = zcol(np.asarray(qa, float)), zcol(np.asarray(qb, float))
    return math.atan2(np.linalg.norm(np.cross(a, b)), float(a @ b))


def brute_force_coverage(generated, ground_truth, angle_deg=10.0, distance=0.02) -> float:
    if len(ground_truth) == 0:
        return float("nan")
    covered = 0
    for t in ground_truth:
        for g in generated:
            if approach_angle(g[:4], t[:4]) < math.radians(angle_deg) and np.linalg.norm(g[4:] - t[4:]) < distance:
                covered += 1
                break
    return covered / len(ground_truth)


def box_lattice_cloud(dims, rotation, k=5):
    """Regular ``k^3`` lattice filling an axis-aligned box, then rotated.

    Per-axis variance is proportional to the squared box dimension, so the
    principal axes are the rotated coordinate axes in order of decreasing size.
    """
    ticks = np.linspace(-0.5, 0.5, k)
    grid = np.stack(np.meshgrid(ticks, ticks, ticks, indexing="ij"), axis=-1).reshape(-1, 3)
    return (grid * np.asarray(dims, float)) @ np.asarray(rotation).T


def finite_difference_check(loss_fn, params, n_coords, rng, h=1e-6):
    """Max relative error between autograd and central differences on random parameter coordinates.

    ``loss_fn()`` must return a scalar float64 tensor built from ``params``.
    """
    import torch

    for p in params:
        p.grad = None
    loss_fn().backward()
    sizes = [p.numel() for p in params]
    total = sum(sizes)
    picks = rng.choice(total, size=min(n_coords, total), replace=False)
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    with torch.no_grad():
        for flat in picks:
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            i = int(flat - offsets[k])
            view = params[k].view(-1)
            analytic = float(params[k].grad.view(-1)[i])
            old = float(view[i])
            view[i] = old + h
            up = float(loss_fn())
            view[i] = old - h
            down = float(loss_fn())
            view[i] = old
            numeric = (up - down) / (2 * h)
            denom = max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst
