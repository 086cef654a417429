"""Dataset curation: grasps per object, random cameras, rendered clouds, camera-frame labels."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..binning import BinGrid
from ..evaluation.oracle import OracleConfig
from .antipodal import sample_antipodal_grasps, sample_negative_grasps
from .mesh import TriMesh, random_object
from .render import Intrinsics, random_camera, render_cloud
from .shard import CloudEntry, DatasetShard, ObjectEntry, build_records

log = logging.getLogger(__name__)

# counts used for the full-scale dataset; desk-scale defaults are smaller
FULL_SCALE_CAMS_PER_OBJECT = 100
FULL_SCALE_GRASPS_PER_OBJECT = 1000
DEFAULT_CAMS_PER_OBJECT = 8
DEFAULT_GRASPS_PER_OBJECT = 200


@dataclass(eq=False)
class ObjectSpec:
    id: str
    mesh: TriMesh
    kind: str = "mesh"
    dims: list[float] = field(default_factory=list)


def make_objects(count: int, seed: int, prefix: str = "obj") -> list[ObjectSpec]:
    """Random desk-scale primitives; ids embed the seed so different seeds never collide."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        kind, dims, mesh = random_object(rng)
        out.append(ObjectSpec(f"{prefix}-{seed}-{i:04d}", mesh, kind, dims))
    return out


def _object_pipeline(
    index: int,
    spec: ObjectSpec,
    cams_per_object: int,
    grasps_per_object: int,
    seed: int,
    oracle: OracleConfig,
    intrinsics: Intrinsics,
) -> tuple[ObjectEntry, list] | None:
    rng = np.random.default_rng(seed ^ index)
    s_pos, s_neg = (int(s) for s in rng.integers(0, 2**31, size=2))
    pos = sample_antipodal_grasps(spec.mesh, grasps_per_object, oracle.friction, s_pos, oracle)
    if len(pos) == 0:
        log.warning("object %s yielded no grasps; dropped", spec.id)
        return None
    neg = sample_negative_grasps(spec.mesh, pos, len(pos), s_neg, oracle)
    grasps = np.concatenate([pos, neg])
    success = np.concatenate([np.ones(len(pos), bool), np.zeros(len(neg), bool)])
    entry = ObjectEntry(spec.id, spec.mesh, grasps, success, spec.kind, list(spec.dims))
    views = []
    for j in range(cams_per_object):
        cam = random_camera(rng, spec.mesh.surface_centroid, intrinsics=intrinsics)
        views.append((f"{spec.id}/cam{j:03d}", cam, render_cloud(spec.mesh, cam)))
    return entry, views


def curate(
    objects: list[ObjectSpec],
    grid: BinGrid,
    cams_per_object: int = DEFAULT_CAMS_PER_OBJECT,
    grasps_per_object: int = DEFAULT_GRASPS_PER_OBJECT,
    seed: int = 0,
    split: str = "train",
    oracle: OracleConfig | None = None,
    intrinsics: Intrinsics | None = None,
    threads: int = 1,
    meta: dict | None = None,
) -> DatasetShard:
    """Build a shard; each object is processed independently with seed ``seed ^ index``."""
    if not objects:
        raise ValueError("curate needs at least one object")
    oracle = oracle or OracleConfig()
    intrinsics = intrinsics or Intrinsics()
    args = [(i, o, cams_per_object, grasps_per_object, seed, oracle, intrinsics) for i, o in enumerate(objects)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda a: _object_pipeline(*a), args))
    else:
        results = [_object_pipeline(*a) for a in args]
    entries: list[ObjectEntry] = []
    clouds: list[CloudEntry] = []
    for res in results:
        if res is None:
            continue
        entry, views = res
        entries.append(entry)
        for cid, cam, cloud in views:
            clouds.append(CloudEntry(cid, len(entries) - 1, cam, cloud))
    records = build_records(grid, entries, clouds)
    info = dict(meta or {})
    info.setdefault("seed", seed)
    info.setdefault("cams_per_object", cams_per_object)
    info.setdefault("grasps_per_object", grasps_per_object)
    info.setdefault("friction", oracle.friction)
    return DatasetShard(grid, split, entries, clouds, records, info)
