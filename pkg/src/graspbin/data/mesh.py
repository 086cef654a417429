"""Triangle meshes: procedural primitives, topology checks, STL/OBJ I/O."""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

KINDS = ("box", "cylinder", "sphere", "composite")


@dataclass(frozen=True, eq=False)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError("vertices must be (V, 3)")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError("triangles must be (F, 3)")
        if f.size and (f.min() < 0 or f.max() >= v.shape[0]):
            raise ValueError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)
        if f.size and np.any(self.areas <= 1e-12):
            raise ValueError("mesh contains degenerate triangles")

    @cached_property
    def corners(self) -> np.ndarray:
        """``(F, 3, 3)`` triangle corner coordinates."""
        return self.vertices[self.triangles]

    @cached_property
    def face_normals(self) -> np.ndarray:
        c = self.corners
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @cached_property
    def areas(self) -> np.ndarray:
        c = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @cached_property
    def edges(self) -> Counter:
        """Directed edge multiplicities."""
        cnt: Counter = Counter()
        for a, b, c in self.triangles.tolist():
            cnt[(a, b)] += 1
            cnt[(b, c)] += 1
            cnt[(c, a)] += 1
        return cnt

    @cached_property
    def is_watertight(self) -> bool:
        """Closed, consistently oriented 2-manifold: every directed edge once, paired with its reverse."""
        e = self.edges
        return bool(e) and all(n == 1 and e.get((b, a), 0) == 1 for (a, b), n in e.items())

    @cached_property
    def euler_characteristic(self) -> int:
        undirected = {tuple(sorted(k)) for k in self.edges}
        return self.vertices.shape[0] - len(undirected) + self.triangles.shape[0]

    @cached_property
    def surface_centroid(self) -> np.ndarray:
        c = self.corners.mean(axis=1)
        return (c * self.areas[:, None]).sum(axis=0) / self.areas.sum()

    @cached_property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.vertices - self.surface_centroid, axis=1).max())

    @property
    def volume(self) -> float:
        c = self.corners
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)

    def transformed(self, rotation: np.ndarray, translation) -> "TriMesh":
        return TriMesh(self.vertices @ np.asarray(rotation).T + np.asarray(translation), self.triangles)

    def sample_surface(self, rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Area-weighted surface samples: points, outward normals, triangle indices."""
        p = self.areas / self.areas.sum()
        tri = rng.choice(len(p), size=n, p=p)
        r1 = np.sqrt(rng.random(n))
        r2 = rng.random(n)
        c = self.corners[tri]
        pts = (1 - r1)[:, None] * c[:, 0] + (r1 * (1 - r2))[:, None] * c[:, 1] + (r1 * r2)[:, None] * c[:, 2]
        return pts, self.face_normals[tri], tri


def _check_dims(*dims: float) -> None:
    if any(not (d > 0 and math.isfinite(d)) for d in dims):
        raise ValueError(f"primitive dimensions must be positive, got {dims}")


def make_box(dx: float, dy: float, dz: float) -> TriMesh:
    _check_dims(dx, dy, dz)
    h = np.array([dx, dy, dz]) / 2
    v = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64) * h
    # vertex index = 4*ix + 2*iy + iz; outward-facing winding
    f = [
        (0, 1, 3), (0, 3, 2),  # -x
        (4, 6, 7), (4, 7, 5),  # +x
        (0, 4, 5), (0, 5, 1),  # -y
        (2, 3, 7), (2, 7, 6),  # +y
        (0, 2, 6), (0, 6, 4),  # -z
        (1, 5, 7), (1, 7, 3),  # +z
    ]
    return TriMesh(v, np.array(f))


def make_cylinder(radius: float, height: float, segments: int = 32) -> TriMesh:
    _check_dims(radius, height)
    if segments < 3:
        raise ValueError("cylinder needs at least 3 segments")
    ang = 2 * math.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    bottom = np.concatenate([ring, np.full((segments, 1), -height / 2)], axis=1)
    top = np.concatenate([ring, np.full((segments, 1), height / 2)], axis=1)
    v = np.concatenate([bottom, top, [[0, 0, -height / 2], [0, 0, height / 2]]])
    cb, ct = 2 * segments, 2 * segments + 1
    f = []
    for i in range(segments):
        j = (i + 1) % segments
        f += [(i, j, segments + j), (i, segments + j, segments + i)]
        f += [(cb, j, i), (ct, segments + i, segments + j)]
    return TriMesh(v, np.array(f))


def make_sphere(radius: float, subdivisions: int = 2) -> TriMesh:
    """Icosphere; every vertex lies exactly on the sphere."""
    _check_dims(radius)
    t = (1 + math.sqrt(5)) / 2
    v = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    f = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in v]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        f = nf
    arr = np.array(verts)
    arr = radius * arr / np.linalg.norm(arr, axis=1, keepdims=True)
    return TriMesh(arr, np.array(f))


def _triangulate_polygon(poly: np.ndarray) -> list[tuple[int, int, int]]:
    """Ear clipping for a simple counter-clockwise polygon."""
    idx = list(range(len(poly)))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    while len(idx) > 3:
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = poly[i0], poly[i1], poly[i2]
            if cross(a, b, c) <= 1e-15:
                continue
            inside = False
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = poly[j]
                if cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0:
                    inside = True
                    break
            if not inside:
                tris.append((i0, i1, i2))
                idx.pop(k)
                break
        else:
            raise ValueError("polygon is not simple")
    tris.append(tuple(idx))
    return tris


def make_prism(polygon: np.ndarray, height: float) -> TriMesh:
    """Extrude a counter-clockwise simple polygon (xy) along z, centered on z=0."""
    _check_dims(height)
    poly = np.asarray(polygon, dtype=np.float64)
    n = len(poly)
    bottom = np.concatenate([poly, np.full((n, 1), -height / 2)], axis=1)
    top = np.concatenate([poly, np.full((n, 1), height / 2)], axis=1)
    v = np.concatenate([bottom, top])
    f = []
    for a, b, c in _triangulate_polygon(poly):
        f.append((a, c, b))
        f.append((n + a, n + b, n + c))
    for i in range(n):
        j = (i + 1) % n
        f += [(i, j, n + j), (i, n + j, n + i)]
    return TriMesh(v, np.array(f))


def make_composite(dims, seed: int) -> TriMesh:
    """L- or T-shaped extruded block; ``dims = (arm_width, extent, height)``."""
    w, extent, height = (float(d) for d in dims)
    _check_dims(w, extent, height)
    if w >= extent:
        raise ValueError("composite arm width must be smaller than its extent")
    rng = np.random.default_rng(seed)
    e = extent
    if rng.random() < 0.5:
        poly = np.array([[0, 0], [e, 0], [e, w], [w, w], [w, e], [0, e]])
    else:
        a = (e - w) / 2
        poly = np.array([[a, 0], [a + w, 0], [a + w, e - w], [e, e - w], [e, e], [0, e], [0, e - w], [a, e - w]])
    poly = poly - poly.mean(axis=0)
    return make_prism(poly, height)


def make_primitive(kind: str, dims, seed: int = 0) -> TriMesh:
    """Build a watertight primitive.

    ``box``: ``(dx, dy, dz)``; ``cylinder``: ``(radius, height[, segments])``;
    ``sphere``: ``(radius,)``; ``composite``: ``(arm_width, extent, height)``.
    """
    dims = [float(d) for d in np.atleast_1d(dims)]
    if kind == "box":
        return make_box(*dims)
    if kind == "cylinder":
        segments = int(dims[2]) if len(dims) > 2 else 32
        return make_cylinder(dims[0], dims[1], segments)
    if kind == "sphere":
        return make_sphere(dims[0])
    if kind == "composite":
        return make_composite(dims, seed)
    raise ValueError(f"unknown primitive kind {kind!r}; expected one of {KINDS}")


def random_object(rng: np.random.Generator, kind: str | None = None) -> tuple[str, list[float], TriMesh]:
    """A desk-scale object sized so that at least one dimension fits the jaw."""
    if kind is None:
        kind = ("box", "cylinder", "composite", "sphere")[int(rng.integers(0, 4))]
    if kind == "box":
        dims = [rng.uniform(0.02, 0.06), rng.uniform(0.04, 0.12), rng.uniform(0.06, 0.2)]
        dims = list(rng.permutation(dims))
    elif kind == "cylinder":
        dims = [rng.uniform(0.015, 0.035), rng.uniform(0.06, 0.2), 24]
    elif kind == "sphere":
        dims = [rng.uniform(0.02, 0.035)]
    else:
        w = rng.uniform(0.02, 0.04)
        dims = [w, rng.uniform(w + 0.04, 0.14), rng.uniform(0.03, 0.06)]
    seed = int(rng.integers(0, 2**31))
    return kind, [float(d) for d in dims], make_primitive(kind, dims, seed)


def weld(vertices: np.ndarray, triangles: np.ndarray, decimals: int = 9) -> TriMesh:
    """Merge coincident vertices (STL stores triangle soups)."""
    key = np.round(vertices, decimals)
    uniq, inverse = np.unique(key, axis=0, return_inverse=True)
    first = np.zeros(len(uniq), dtype=np.int64)
    first[inverse[::-1]] = np.arange(len(vertices))[::-1]
    return TriMesh(vertices[first], inverse.reshape(-1)[triangles])


def read_stl(path) -> TriMesh:
    raw = Path(path).read_bytes()
    if len(raw) >= 84:
        (n,) = struct.unpack("<I", raw[80:84])
        if len(raw) == 84 + 50 * n:
            rec = np.frombuffer(raw, dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("a", "<u2")]), offset=84)
            verts = rec["v"].reshape(-1, 3).astype(np.float64)
            return weld(verts, np.arange(len(verts)).reshape(-1, 3))
    text = raw.decode("ascii", errors="strict")
    verts = []
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if parts and parts[0] == "vertex":
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: malformed vertex line")
            verts.append([float(x) for x in parts[1:]])
    if not verts or len(verts) % 3:
        raise ValueError(f"{path}: no complete triangles found")
    arr = np.array(verts)
    return weld(arr, np.arange(len(arr)).reshape(-1, 3))


def write_stl(path, mesh: TriMesh, binary: bool = True) -> None:
    c = mesh.corners
    n = mesh.face_normals
    if binary:
        rec = np.zeros(len(c), dtype=np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("a", "<u2")]))
        rec["n"] = n
        rec["v"] = c
        with open(path, "wb") as fh:
            fh.write(b"graspbin".ljust(80, b"\0"))
            fh.write(struct.pack("<I", len(c)))
            fh.write(rec.tobytes())
        return
    lines = ["solid graspbin"]
    for tri, nn in zip(c, n):
        lines.append(f"  facet normal {nn[0]:.9g} {nn[1]:.9g} {nn[2]:.9g}")
        lines.append("    outer loop")
        lines += [f"      vertex {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}" for p in tri]
        lines += ["    endloop", "  endfacet"]
    lines.append("endsolid graspbin")
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path) -> TriMesh:
    verts, faces = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) for p in parts[1:]]
            if len(idx) != 3:
                raise ValueError(f"{path}:{lineno}: only triangular faces are supported")
            faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
    return TriMesh(np.array(verts), np.array(faces))


def write_obj(path, mesh: TriMesh) -> None:
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> TriMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".stl":
        return read_stl(path)
    if suffix == ".obj":
        return read_obj(path)
    raise ValueError(f"unsupported mesh format {suffix!r} (use .stl or .obj)")


def save_mesh(path, mesh: TriMesh) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".stl":
        write_stl(path, mesh)
    elif suffix == ".obj":
        write_obj(path, mesh)
    else:
        raise ValueError(f"unsupported mesh format {suffix!r} (use .stl or .obj)")
