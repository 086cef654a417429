"""Import of externally produced grasp datasets.

The exchange format is JSON Lines, one typed object per line::

    {"type": "header", "format": "graspbin-grasps", "version": 1, "split": "train"}
    {"type": "object", "id": "mug", "mesh": {"vertices": [[x, y, z], ...], "triangles": [[i, j, k], ...]}}
    {"type": "object", "id": "can", "mesh_path": "meshes/can.stl"}
    {"type": "cloud", "id": "mug/cam000", "object": "mug",
     "camera": {"rotation": [qw, qx, qy, qz], "translation": [x, y, z], "intrinsics": [fx, fy, w, h]},
     "points": [[x, y, z], ...]}            # camera frame; omit to render from the mesh
    {"type": "grasp", "object": "mug", "rotation": [qw, qx, qy, qz], "translation": [x, y, z], "success": true}
    {"type": "end", "objects": 2, "clouds": 16, "grasps": 400}

Grasps are given in the object (world) frame. Importing moves every grasp of
an object into each of that object's camera frames and labels it, exactly as
curation does. A file without its ``end`` line is rejected as truncated.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..binning import BinGrid
from ..geometry import Quaternion
from ..pointcloud import Frame, PointCloud
from .mesh import TriMesh, load_mesh
from .render import CameraPose, Intrinsics, render_cloud
from .shard import MAGIC, CloudEntry, DatasetShard, ObjectEntry, ShardFormatError, build_records, read_shard

FORMAT = "graspbin-grasps"
UNIT_TOL = 1e-6


class ExternalFormatError(ShardFormatError):
    pass


def _err(path, lineno: int, msg: str) -> ExternalFormatError:
    return ExternalFormatError(f"{path}:{lineno}: {msg}")


def _vec(rec: dict, key: str, n: int, path, lineno: int) -> np.ndarray:
    if key not in rec:
        raise _err(path, lineno, f"missing field '{key}'")
    try:
        arr = np.asarray(rec[key], dtype=np.float64)
    except (TypeError, ValueError):
        raise _err(path, lineno, f"field '{key}' is not numeric") from None
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise _err(path, lineno, f"field '{key}' must be {n} finite numbers")
    return arr


def _unit_quat(rec: dict, key: str, path, lineno: int) -> np.ndarray:
    q = _vec(rec, key, 4, path, lineno)
    norm = float(np.linalg.norm(q))
    if abs(norm - 1.0) > UNIT_TOL:
        raise _err(path, lineno, f"field '{key}' is not a unit quaternion (norm {norm:.9g})")
    return q


def read_external(path, grid: BinGrid) -> DatasetShard:
    path = Path(path)
    objects: list[ObjectEntry] = []
    obj_index: dict[str, int] = {}
    grasps: dict[str, list[np.ndarray]] = {}
    success: dict[str, list[bool]] = {}
    pending_clouds: list[tuple[int, dict]] = []
    header: dict | None = None
    end: dict | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            if end is not None:
                raise _err(path, lineno, "content after 'end' line")
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise _err(path, lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "type" not in rec:
                raise _err(path, lineno, "each line must be an object with a 'type' field")
            kind = rec["type"]
            if header is None and kind != "header":
                raise _err(path, lineno, "first line must be the header")
            if kind == "header":
                if header is not None:
                    raise _err(path, lineno, "duplicate header")
                if rec.get("format") != FORMAT or rec.get("version") != 1:
                    raise _err(path, lineno, f"expected format '{FORMAT}' version 1")
                header = rec
            elif kind == "object":
                oid = rec.get("id")
                if not isinstance(oid, str) or oid in obj_index:
                    raise _err(path, lineno, "object 'id' must be a unique string")
                try:
                    if "mesh" in rec:
                        mesh = TriMesh(np.asarray(rec["mesh"]["vertices"], float), np.asarray(rec["mesh"]["triangles"], int))
                    elif "mesh_path" in rec:
                        mesh = load_mesh(path.parent / rec["mesh_path"])
                    else:
                        raise _err(path, lineno, "object needs 'mesh' or 'mesh_path'")
                except (KeyError, TypeError, ValueError, OSError) as exc:
                    if isinstance(exc, ExternalFormatError):
                        raise
                    raise _err(path, lineno, f"bad mesh: {exc}") from None
                obj_index[oid] = len(objects)
                objects.append(ObjectEntry(oid, mesh, np.zeros((0, 7)), np.zeros(0, bool),
                                           rec.get("kind", "mesh"), list(rec.get("dims", []))))
                grasps[oid] = []
                success[oid] = []
            elif kind == "cloud":
                pending_clouds.append((lineno, rec))
            elif kind == "grasp":
                oid = rec.get("object")
                if oid not in obj_index:
                    raise _err(path, lineno, f"grasp references unknown object {oid!r}")
                q = _unit_quat(rec, "rotation", path, lineno)
                t = _vec(rec, "translation", 3, path, lineno)
                s = rec.get("success")
                if not isinstance(s, bool):
                    raise _err(path, lineno, "field 'success' must be true or false")
                grasps[oid].append(np.concatenate([q, t]))
                success[oid].append(s)
            elif kind == "end":
                end = rec
            else:
                raise _err(path, lineno, f"unknown record type {kind!r}")
    if end is None:
        raise ExternalFormatError(f"{path}: truncated file (no 'end' line)")
    n_grasps = sum(len(v) for v in grasps.values())
    declared = (end.get("objects"), end.get("clouds"), end.get("grasps"))
    if declared != (len(objects), len(pending_clouds), n_grasps):
        raise ExternalFormatError(f"{path}: 'end' counts {declared} disagree with file contents "
                                  f"{(len(objects), len(pending_clouds), n_grasps)}")
    for o in objects:
        o.grasps = np.array(grasps[o.id]).reshape(-1, 7)
        o.success = np.array(success[o.id], dtype=bool)
    clouds: list[CloudEntry] = []
    for lineno, rec in pending_clouds:
        oid = rec.get("object")
        if oid not in obj_index:
            raise _err(path, lineno, f"cloud references unknown object {oid!r}")
        cam_rec = rec.get("camera")
        if not isinstance(cam_rec, dict):
            raise _err(path, lineno, "missing field 'camera'")
        q = _unit_quat(cam_rec, "rotation", path, lineno)
        t = _vec(cam_rec, "translation", 3, path, lineno)
        intr = Intrinsics.from_list(_vec(cam_rec, "intrinsics", 4, path, lineno)) if "intrinsics" in cam_rec else Intrinsics()
        cam = CameraPose(Quaternion.from_array(q), t, intr)
        if "points" in rec:
            pts = np.asarray(rec["points"], dtype=np.float64)
            if pts.ndim != 2 or pts.shape[1] != 3:
                raise _err(path, lineno, "field 'points' must be a list of [x, y, z]")
            cloud = PointCloud(pts, Frame.CAMERA)
        else:
            cloud = render_cloud(objects[obj_index[oid]].mesh, cam)
        clouds.append(CloudEntry(str(rec.get("id", f"{oid}/cam{len(clouds):03d}")), obj_index[oid], cam, cloud))
    # group clouds per object in file order, matching curation's layout
    clouds.sort(key=lambda c: c.object_index)
    records = build_records(grid, objects, clouds)
    meta = {k: v for k, v in header.items() if k not in ("type", "format", "version", "split")}
    meta["source"] = path.name
    return DatasetShard(grid, header.get("split", "train"), objects, clouds, records, meta)


def import_external(path, grid: BinGrid) -> DatasetShard:
    """Load a JSON Lines grasp file or an existing ``.gbds`` shard, labeling on ``grid``."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_shard(path).relabeled(grid)
    return read_external(path, grid)


def export_external(path, shard: DatasetShard) -> None:
    """Write ``shard`` as JSON Lines with object-frame grasps and camera-frame clouds."""
    lines = [{"type": "header", "format": FORMAT, "version": 1, "split": shard.split}]
    for o in shard.objects:
        lines.append({"type": "object", "id": o.id, "kind": o.kind, "dims": list(o.dims),
                      "mesh": {"vertices": o.mesh.vertices.tolist(), "triangles": o.mesh.triangles.tolist()}})
    for c in shard.clouds:
        lines.append({
            "type": "cloud", "id": c.id, "object": shard.objects[c.object_index].id,
            "camera": {"rotation": c.camera.rotation.as_array().tolist(), "translation": c.camera.translation.tolist(),
                       "intrinsics": c.camera.intrinsics.as_list()},
            "points": c.cloud.points.tolist(),
        })
    n = 0
    for o in shard.objects:
        for g, s in zip(o.grasps, o.success):
            lines.append({"type": "grasp", "object": o.id, "rotation": g[:4].tolist(), "translation": g[4:].tolist(),
                          "success": bool(s)})
            n += 1
    lines.append({"type": "end", "objects": len(shard.objects), "clouds": len(shard.clouds), "grasps": n})
    Path(path).write_text("".join(json.dumps(rec) + "\n" for rec in lines))
