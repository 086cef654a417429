"""Dataset shards and their binary container.

Layout of a ``.gbds`` file (little-endian)::

    b"GBDS"  u32 version  u32 n_pitch  u32 n_yaw
    u32 n_objects  u32 n_clouds  u32 n_records  u32 meta_len  meta (UTF-8 JSON)
    per object:  u32 V  u32 F  u32 G  V*3 f8 vertices  F*3 u32 triangles
                 G*7 f8 object-frame grasps  G u8 success
    per cloud:   u32 object_index  7 f8 camera pose (qw qx qy qz tx ty tz)
                 4 f8 intrinsics (fx fy width height)  u32 N  N*3 f8 points
    records:     n_records * (u32 cloud, u32 grasp, 7 f8 grasp, u8 success, 2 u16 bin)
    b"GBDE"

The JSON meta block carries the split tag, object/cloud ids and provenance.
A sidecar ``<file>.json`` repeats the meta plus counts and a SHA-256 digest.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..binning import BinGrid, BinLabel, labels_of_vectors
from ..geometry import GraspPose, Quaternion, canonical_quat, quat_conjugate, quat_multiply, quat_to_matrix
from ..pointcloud import Frame, PointCloud
from .mesh import TriMesh
from .render import CameraPose, Intrinsics

MAGIC = b"GBDS"
TRAILER = b"GBDE"
VERSION = 1
RECORD_DTYPE = np.dtype([("cloud", "<u4"), ("grasp_index", "<u4"), ("grasp", "<f8", 7), ("success", "u1"), ("bin", "<u2", 2)])


class ShardFormatError(ValueError):
    pass


@dataclass(eq=False)
class ObjectEntry:
    id: str
    mesh: TriMesh
    grasps: np.ndarray  # (G, 7) object frame
    success: np.ndarray  # (G,) bool
    kind: str = "mesh"
    dims: list[float] = field(default_factory=list)


@dataclass(eq=False)
class CloudEntry:
    id: str
    object_index: int
    camera: CameraPose
    cloud: PointCloud


@dataclass(frozen=True, eq=False)
class GraspRecord:
    cloud_id: str
    grasp: GraspPose
    success: bool
    bin: BinLabel


def to_camera_frame(grasps: np.ndarray, cam: CameraPose) -> np.ndarray:
    """Re-express ``(n, 7)`` world/object-frame grasps in the camera frame (``w >= 0``)."""
    q_cam_inv = quat_conjugate(cam.rotation.as_array())
    q = canonical_quat(quat_multiply(np.broadcast_to(q_cam_inv, grasps[:, :4].shape), grasps[:, :4]))
    t = (grasps[:, 4:] - cam.translation) @ cam.matrix
    return np.concatenate([q, t], axis=1)


def to_world_frame(grasps: np.ndarray, cam: CameraPose) -> np.ndarray:
    q_cam = cam.rotation.as_array()
    q = canonical_quat(quat_multiply(np.broadcast_to(q_cam, grasps[:, :4].shape), grasps[:, :4]))
    t = grasps[:, 4:] @ cam.matrix.T + cam.translation
    return np.concatenate([q, t], axis=1)


def label_grasps(grid: BinGrid, grasps: np.ndarray) -> np.ndarray:
    """``(n, 2)`` bin labels from the approach axes of ``(n, 7)`` grasps."""
    if len(grasps) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return labels_of_vectors(grid, quat_to_matrix(grasps[:, :4])[:, :, 2])


@dataclass(eq=False)
class DatasetShard:
    grid: BinGrid
    split: str
    objects: list[ObjectEntry]
    clouds: list[CloudEntry]
    records: np.ndarray  # RECORD_DTYPE
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.split not in ("train", "eval"):
            raise ValueError(f"split must be 'train' or 'eval', got {self.split!r}")
        self.records = np.asarray(self.records, dtype=RECORD_DTYPE)
        if len(self.records) and self.records["cloud"].max() >= len(self.clouds):
            raise ValueError("record references a missing cloud")
        for c in self.clouds:
            if c.cloud.frame is not Frame.CAMERA:
                raise ValueError(f"cloud {c.id} is not in the camera frame")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def object_ids(self) -> list[str]:
        return [o.id for o in self.objects]

    @property
    def cloud_ids(self) -> list[str]:
        return [c.id for c in self.clouds]

    @property
    def grasps(self) -> np.ndarray:
        return self.records["grasp"]

    @property
    def success(self) -> np.ndarray:
        return self.records["success"].astype(bool)

    @property
    def bins(self) -> np.ndarray:
        return self.records["bin"].astype(np.int64)

    def record(self, i: int) -> GraspRecord:
        r = self.records[i]
        return GraspRecord(
            cloud_id=self.clouds[int(r["cloud"])].id,
            grasp=GraspPose.from_array(r["grasp"]),
            success=bool(r["success"]),
            bin=BinLabel(int(r["bin"][0]), int(r["bin"][1])),
        )

    def iter_records(self):
        for i in range(len(self.records)):
            yield self.record(i)

    def cloud_map(self) -> dict[str, PointCloud]:
        return {c.id: c.cloud for c in self.clouds}

    def positive_indices(self) -> np.ndarray:
        return np.flatnonzero(self.records["success"])

    def records_for_cloud(self, cloud_index: int) -> np.ndarray:
        return self.records[self.records["cloud"] == cloud_index]

    def relabeled(self, grid: BinGrid) -> "DatasetShard":
        recs = self.records.copy()
        recs["bin"] = label_grasps(grid, recs["grasp"]).astype("<u2")
        return DatasetShard(grid, self.split, self.objects, self.clouds, recs, dict(self.meta))


def build_records(grid: BinGrid, objects: list[ObjectEntry], clouds: list[CloudEntry]) -> np.ndarray:
    """One record per (cloud, object grasp): grasps moved into each camera frame and labeled."""
    chunks = []
    for ci, c in enumerate(clouds):
        obj = objects[c.object_index]
        g = len(obj.grasps)
        if g == 0:
            continue
        rec = np.zeros(g, dtype=RECORD_DTYPE)
        cam_grasps = to_camera_frame(obj.grasps, c.camera)
        rec["cloud"] = ci
        rec["grasp_index"] = np.arange(g)
        rec["grasp"] = cam_grasps
        rec["success"] = obj.success.astype(np.uint8)
        rec["bin"] = label_grasps(grid, cam_grasps).astype("<u2")
        chunks.append(rec)
    return np.concatenate(chunks) if chunks else np.zeros(0, dtype=RECORD_DTYPE)


def _meta_block(shard: DatasetShard) -> dict:
    meta = dict(shard.meta)
    meta.update(
        {
            "format": "graspbin-shard",
            "version": VERSION,
            "split": shard.split,
            "grid": {"n_pitch": shard.grid.n_pitch, "n_yaw": shard.grid.n_yaw},
            "objects": [{"id": o.id, "kind": o.kind, "dims": [float(d) for d in o.dims]} for o in shard.objects],
            "clouds": [c.id for c in shard.clouds],
        }
    )
    return meta


def shard_bytes(shard: DatasetShard) -> bytes:
    buf = io.BytesIO()
    meta = json.dumps(_meta_block(shard), sort_keys=True, separators=(",", ":")).encode()
    buf.write(MAGIC)
    buf.write(struct.pack("<IIIIIIII", VERSION, shard.grid.n_pitch, shard.grid.n_yaw,
                          len(shard.objects), len(shard.clouds), len(shard.records), len(meta), 0))
    buf.write(meta)
    for o in shard.objects:
        buf.write(struct.pack("<III", len(o.mesh.vertices), len(o.mesh.triangles), len(o.grasps)))
        buf.write(o.mesh.vertices.astype("<f8").tobytes())
        buf.write(o.mesh.triangles.astype("<u4").tobytes())
        buf.write(np.asarray(o.grasps, dtype="<f8").reshape(-1, 7).tobytes())
        buf.write(np.asarray(o.success, dtype=np.uint8).tobytes())
    for c in shard.clouds:
        cam = c.camera
        buf.write(struct.pack("<I", c.object_index))
        buf.write(np.concatenate([cam.rotation.as_array(), cam.translation]).astype("<f8").tobytes())
        buf.write(np.asarray(cam.intrinsics.as_list(), dtype="<f8").tobytes())
        buf.write(struct.pack("<I", len(c.cloud)))
        buf.write(c.cloud.points.astype("<f8").tobytes())
    buf.write(shard.records.astype(RECORD_DTYPE).tobytes())
    buf.write(TRAILER)
    return buf.getvalue()


def manifest(shard: DatasetShard, payload: bytes) -> dict:
    m = _meta_block(shard)
    m["counts"] = {
        "objects": len(shard.objects),
        "clouds": len(shard.clouds),
        "records": int(len(shard.records)),
        "positives": int(shard.records["success"].sum()),
    }
    m["sha256"] = hashlib.sha256(payload).hexdigest()
    return m


def write_shard(path, shard: DatasetShard) -> None:
    payload = shard_bytes(shard)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(path)
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(manifest(shard, payload), sort_keys=True, indent=2) + "\n")


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ShardFormatError(f"{self.path}: truncated while reading {what} at byte {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def array(self, dtype, count: int, what: str) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count, what), dtype=dt).copy()


def parse_shard(data: bytes, path: str = "<bytes>") -> DatasetShard:
    r = _Reader(data, path)
    if r.take(4, "magic") != MAGIC:
        raise ShardFormatError(f"{path}: not a graspbin shard (bad magic)")
    version, n_pitch, n_yaw, n_obj, n_cloud, n_rec, meta_len, _ = r.unpack("<IIIIIIII", "header")
    if version != VERSION:
        raise ShardFormatError(f"{path}: unsupported shard version {version}")
    try:
        meta = json.loads(r.take(meta_len, "meta").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ShardFormatError(f"{path}: corrupt meta block: {exc}") from None
    grid = BinGrid(n_pitch=n_pitch, n_yaw=n_yaw)
    obj_meta = meta.get("objects", [])
    cloud_ids = meta.get("clouds", [])
    if len(obj_meta) != n_obj or len(cloud_ids) != n_cloud:
        raise ShardFormatError(f"{path}: meta block disagrees with header counts")
    objects = []
    for i in range(n_obj):
        nv, nf, ng = r.unpack("<III", f"object {i} header")
        verts = r.array("<f8", nv * 3, f"object {i} vertices").reshape(nv, 3)
        tris = r.array("<u4", nf * 3, f"object {i} triangles").reshape(nf, 3).astype(np.int64)
        grasps = r.array("<f8", ng * 7, f"object {i} grasps").reshape(ng, 7)
        succ = r.array("u1", ng, f"object {i} success").astype(bool)
        om = obj_meta[i]
        objects.append(ObjectEntry(om["id"], TriMesh(verts, tris), grasps, succ, om.get("kind", "mesh"), om.get("dims", [])))
    clouds = []
    for i in range(n_cloud):
        (oi,) = r.unpack("<I", f"cloud {i} header")
        pose = r.array("<f8", 7, f"cloud {i} camera")
        intr = r.array("<f8", 4, f"cloud {i} intrinsics")
        (npts,) = r.unpack("<I", f"cloud {i} size")
        pts = r.array("<f8", npts * 3, f"cloud {i} points").reshape(npts, 3)
        if oi >= n_obj:
            raise ShardFormatError(f"{path}: cloud {i} references missing object {oi}")
        cam = CameraPose(Quaternion.from_array(pose[:4]), pose[4:], Intrinsics.from_list(intr))
        clouds.append(CloudEntry(cloud_ids[i], int(oi), cam, PointCloud(pts, Frame.CAMERA)))
    records = r.array(RECORD_DTYPE, n_rec, "records")
    if r.take(4, "trailer") != TRAILER:
        raise ShardFormatError(f"{path}: missing end marker")
    if r.pos != len(data):
        raise ShardFormatError(f"{path}: {len(data) - r.pos} trailing bytes")
    keep = {k: v for k, v in meta.items() if k not in ("format", "version", "split", "grid", "objects", "clouds")}
    return DatasetShard(grid, meta.get("split", "train"), objects, clouds, records, keep)


def read_shard(path) -> DatasetShard:
    return parse_shard(Path(path).read_bytes(), str(path))
