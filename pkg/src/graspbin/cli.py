"""Command-line entry point ``graspbin``.

Exit codes: 0 success, 1 usage or label error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from .binning import PRESETS, BinGrid, BinLabel, BinRangeError
from .data.curate import DEFAULT_CAMS_PER_OBJECT, DEFAULT_GRASPS_PER_OBJECT, ObjectSpec, curate, make_objects
from .data.external import import_external
from .data.mesh import KINDS, load_mesh, make_primitive, random_object, save_mesh
from .data.shard import read_shard, write_shard
from .evaluation.evaluate import BinPolicy, evaluate_model
from .evaluation.oracle import OracleConfig
from .learning import checkpoint
from .learning.networks import CvaeConfig, DiscriminatorConfig
from .learning.train import (
    TrainConfig,
    load_model,
    new_cvae,
    new_discriminator,
    sample_grasp_array,
    save_model,
    train_cvae,
    train_discriminator,
)
from .pointcloud import DegenerateCloudError, load_cloud, pca, select_pc_bins

log = logging.getLogger("graspbin")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------ helpers

def _command_line(argv: list[str]) -> list[str]:
    """argv with output paths blanked and ``--json`` dropped; neither affects artifact content."""
    out, skip = [], False
    for a in argv:
        if skip:
            out.append("<out>")
            skip = False
        elif a == "--json":
            continue
        elif a in ("--out", "--csv"):
            out.append(a)
            skip = True
        elif a.startswith(("--out=", "--csv=")):
            out.append(a.split("=", 1)[0] + "=<out>")
        else:
            out.append(a)
    return out


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _grid(args, default: BinGrid | None = None) -> BinGrid | None:
    if args.preset:
        return BinGrid.preset(args.preset)
    if args.yaw_bins is None and args.pitch_bins is None:
        return default
    if args.yaw_bins is None or args.pitch_bins is None:
        raise UsageError("--yaw-bins and --pitch-bins must be given together")
    return BinGrid(n_pitch=args.pitch_bins, n_yaw=args.yaw_bins)


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(text)


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


# ----------------------------------------------------------------- commands

def cmd_mesh(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.kind == "random":
        kind, dims, mesh = random_object(rng)
    else:
        if not args.dims:
            raise UsageError("--dims is required unless --kind random")
        kind, dims = args.kind, args.dims
        mesh = make_primitive(kind, dims, args.seed)
    save_mesh(args.out, mesh)
    info = {"kind": kind, "dims": dims, "vertices": len(mesh.vertices), "triangles": len(mesh.triangles),
            "watertight": mesh.is_watertight, "volume": mesh.volume, "out": str(args.out)}
    _emit(args, info, f"{kind} {dims}: {len(mesh.triangles)} triangles, volume {mesh.volume:.6g} m^3 -> {args.out}")
    return 0


def cmd_curate(args) -> int:
    grid = _grid(args, BinGrid(4, 8))
    if args.meshes:
        objects = [ObjectSpec(Path(p).stem, load_mesh(p)) for p in args.meshes]
    else:
        objects = make_objects(args.objects, args.seed)
    shard = curate(
        objects, grid,
        cams_per_object=args.cams,
        grasps_per_object=args.grasps,
        seed=args.seed,
        split=args.split,
        oracle=OracleConfig(friction=args.friction),
        threads=args.threads,
        meta={"command": args.command_line, "seed": args.seed},
    )
    write_shard(args.out, shard)
    info = {"objects": len(shard.objects), "clouds": len(shard.clouds), "records": len(shard),
            "positives": int(shard.success.sum()), "out": str(args.out)}
    _emit(args, info, f"{info['objects']} objects, {info['clouds']} clouds, {info['records']} records "
                      f"({info['positives']} positive) -> {args.out}")
    return 0


def cmd_import(args) -> int:
    shard = import_external(args.input, _grid(args, BinGrid(4, 8)))
    if args.split:
        shard.split = args.split
    shard.meta["command"] = args.command_line
    write_shard(args.out, shard)
    info = {"objects": len(shard.objects), "clouds": len(shard.clouds), "records": len(shard), "out": str(args.out)}
    _emit(args, info, f"imported {info['records']} records -> {args.out}")
    return 0


def _train_cfg(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, lr_final=args.lr_final,
                       eta=getattr(args, "eta", 0.1), seed=args.seed, max_steps=args.max_steps, threads=args.threads)


def _provenance(args) -> dict:
    return {"command": args.command_line, "seed": args.seed, "shard_sha256": _sha256(args.shard)}


def _train(args, kind: str) -> int:
    shard = read_shard(args.shard)
    if args.resume:
        state = load_model(args.resume)
        if state.kind != kind:
            raise ValueError(f"{args.resume} holds a {state.kind} checkpoint, not {kind}")
        epochs = args.epochs
    elif kind == "cvae":
        grid = _grid(args, shard.grid)
        if grid != shard.grid:
            shard = shard.relabeled(grid)
        cfg = CvaeConfig(n_pitch=grid.n_pitch, n_yaw=grid.n_yaw, latent=args.latent, hidden=args.hidden,
                         global_width=args.global_width, head_width=args.head_width, pooling=args.pooling,
                         bin_encoding=args.bin_encoding, conditioned=not args.unconditioned, n_points=args.points)
        state, epochs = new_cvae(cfg, _train_cfg(args)), None
    else:
        cfg = DiscriminatorConfig(hidden=args.hidden, global_width=args.global_width, head_width=args.head_width,
                                  pooling=args.pooling, frame=args.frame, n_points=args.points)
        state, epochs = new_discriminator(cfg, _train_cfg(args)), None
    if kind == "cvae" and state.model.cfg.grid != shard.grid:
        shard = shard.relabeled(state.model.cfg.grid)
    state.provenance = _provenance(args)
    (train_cvae if kind == "cvae" else train_discriminator)(shard, state, epochs)
    save_model(args.out, state)
    tail = state.trace[-1] if state.trace else float("nan")
    info = {"kind": kind, "epochs": state.epochs_done, "steps": state.steps_done, "final_loss": tail,
            "out": str(args.out)}
    _emit(args, info, f"{kind}: {state.epochs_done} epochs, {state.steps_done} steps, last loss {tail:.4f} -> {args.out}")
    return 0


def cmd_sample(args) -> int:
    state = load_model(args.ckpt)
    if state.kind != "cvae":
        raise ValueError(f"{args.ckpt} is not a generator checkpoint")
    cloud = load_cloud(args.cloud)
    try:
        label = BinLabel.parse(args.bin)
    except ValueError as e:
        raise UsageError(str(e)) from e
    state.model.cfg.grid.validate(label)
    grasps = sample_grasp_array(state.model, cloud, label, args.M, np.random.default_rng(args.seed))
    doc = {"command": args.command_line, "seed": args.seed, "frame": "camera", "bin": [label.c_pitch, label.c_yaw],
           "grid": {"n_pitch": state.model.cfg.n_pitch, "n_yaw": state.model.cfg.n_yaw},
           "layout": "qw,qx,qy,qz,tx,ty,tz", "grasps": grasps.tolist()}
    Path(args.out).write_text(json.dumps(doc, sort_keys=True) + "\n")
    _emit(args, {"count": len(grasps), "out": str(args.out)}, f"{len(grasps)} grasps in bin {label} -> {args.out}")
    return 0


def cmd_select_bin(args) -> int:
    grid = _grid(args, BinGrid(4, 8))
    cloud = load_cloud(args.cloud)
    plus, minus = select_pc_bins(cloud, grid)
    v2 = pca(cloud).v2
    info = {"plus": [plus.c_pitch, plus.c_yaw], "minus": [minus.c_pitch, minus.c_yaw], "v2": v2.tolist(),
            "grid": {"n_pitch": grid.n_pitch, "n_yaw": grid.n_yaw}}
    _emit(args, info, f"+v2 -> {plus}\n-v2 -> {minus}")
    return 0


def cmd_eval(args) -> int:
    try:
        policy = BinPolicy.parse(args.policy)
    except ValueError as e:
        raise UsageError(str(e)) from e
    cvae = load_model(args.cvae)
    disc = load_model(args.disc)
    if cvae.kind != "cvae" or disc.kind != "discriminator":
        raise ValueError("--cvae must be a generator checkpoint and --disc a discriminator checkpoint")
    if policy.label is not None:
        cvae.model.cfg.grid.validate(policy.label)
    shard = read_shard(args.shard)
    report = evaluate_model(cvae, disc, shard, policy, grasps=args.grasps, exec_k=args.exec, seed=args.seed,
                            oracle=OracleConfig(friction=args.friction, gripper=cvae.gripper),
                            cloud_stride=args.cloud_stride)
    report.config.update({"command": args.command_line, "cvae_sha256": _sha256(args.cvae),
                          "disc_sha256": _sha256(args.disc), "shard_sha256": _sha256(args.shard)})
    out = Path(args.out)
    out.write_text(report.to_json())
    csv_path = Path(args.csv) if args.csv else out.with_suffix(".csv")
    csv_path.write_text(report.curve_csv())
    summary = {k: getattr(report, k) for k in ("policy", "trials", "success_rate", "ratio_kept", "auc", "max_coverage")}
    _emit(args, summary, (f"policy {report.policy}: {report.trials} trials, success {report.success_rate:.3f}, "
                          f"kept {report.ratio_kept:.3f}, AUC {report.auc:.3f} (max coverage {report.max_coverage:.3f})"))
    return 0


def cmd_inspect(args) -> int:
    path = Path(args.path)
    magic = path.read_bytes()[:4]
    if magic == b"GBDS":
        s = read_shard(path)
        info = {"type": "shard", "split": s.split, "grid": {"n_pitch": s.grid.n_pitch, "n_yaw": s.grid.n_yaw},
                "objects": len(s.objects), "clouds": len(s.clouds), "records": len(s),
                "positives": int(s.success.sum()), "meta": s.meta}
    elif magic == b"GBCK":
        config, sections = checkpoint.load(path)
        info = {"type": "checkpoint", **{k: config[k] for k in ("kind", "architecture", "train", "epochs_done",
                                                               "steps_done", "provenance")},
                "parameters": int(sum(v.size for v in sections["params"].values()))}
    elif magic == b"GBPC" or path.suffix in (".xyz", ".txt"):
        c = load_cloud(path)
        info = {"type": "cloud", "points": len(c), "features": c.n_features,
                "bounds": [c.points.min(0).tolist(), c.points.max(0).tolist()] if len(c) else None}
    else:
        m = load_mesh(path)
        info = {"type": "mesh", "vertices": len(m.vertices), "triangles": len(m.triangles),
                "watertight": m.is_watertight, "volume": m.volume}
    if args.json:
        print(json.dumps(info, sort_keys=True))
    else:
        for k, v in info.items():
            print(f"{k}: {json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else v}")
    return 0


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--json", action="store_true", help="machine-readable result on stdout")
    gridp = _Parser(add_help=False)
    gridp.add_argument("--yaw-bins", type=int)
    gridp.add_argument("--pitch-bins", type=int)
    gridp.add_argument("--preset", choices=sorted(PRESETS), help="named yaw/pitch grid")

    p = _Parser(prog="graspbin", description="Approach-constrained grasp generation pipeline.")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("mesh", parents=[common], help="generate a procedural mesh")
    s.add_argument("--kind", choices=[*KINDS, "random"], default="random")
    s.add_argument("--dims", type=_floats)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mesh)

    s = sub.add_parser("curate", parents=[common, gridp], help="build a labeled dataset shard")
    s.add_argument("--objects", type=int, default=20)
    s.add_argument("--meshes", nargs="+", help="mesh files to use instead of procedural objects")
    s.add_argument("--cams", type=int, default=DEFAULT_CAMS_PER_OBJECT)
    s.add_argument("--grasps", type=int, default=DEFAULT_GRASPS_PER_OBJECT)
    s.add_argument("--split", choices=["train", "eval"], default="train")
    s.add_argument("--friction", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_curate)

    s = sub.add_parser("import", parents=[common, gridp], help="convert external JSON Lines data to a shard")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--split", choices=["train", "eval"])
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_import)

    for name, kind in (("train-cvae", "cvae"), ("train-disc", "discriminator")):
        s = sub.add_parser(name, parents=[common, gridp] if kind == "cvae" else [common],
                           help=f"train the {'generator' if kind == 'cvae' else 'discriminator'}")
        s.add_argument("--shard", required=True)
        s.add_argument("--epochs", type=int, default=20)
        s.add_argument("--batch-size", type=int, default=64)
        s.add_argument("--lr", type=float, default=1e-3)
        s.add_argument("--lr-final", type=float, default=0.1, help="final learning rate as a fraction of --lr")
        s.add_argument("--max-steps", type=int)
        s.add_argument("--hidden", type=_ints, default=(64, 128))
        s.add_argument("--global-width", type=int, default=128)
        s.add_argument("--head-width", type=int, default=128)
        s.add_argument("--pooling", choices=["max", "mean"], default="max")
        s.add_argument("--points", type=int, default=256)
        s.add_argument("--resume", help="continue from a checkpoint for --epochs more epochs")
        s.add_argument("--out", required=True)
        if kind == "cvae":
            s.add_argument("--eta", type=float, default=0.1, help="KL weight")
            s.add_argument("--latent", type=int, default=4)
            s.add_argument("--bin-encoding", choices=["center", "index"], default="center")
            s.add_argument("--unconditioned", action="store_true", help="zero the bin features (ablation)")
        else:
            s.add_argument("--frame", choices=["grasp", "camera"], default="grasp")
        s.set_defaults(func=lambda a, k=kind: _train(a, k))

    s = sub.add_parser("sample", parents=[common], help="sample grasps in one bin")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--cloud", required=True)
    s.add_argument("--bin", required=True, help="c_pitch,c_yaw")
    s.add_argument("-M", type=int, default=400)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("select-bin", parents=[common, gridp], help="bins along the second principal component")
    s.add_argument("--cloud", required=True)
    s.set_defaults(func=cmd_select_bin)

    s = sub.add_parser("eval", parents=[common], help="evaluate a generator and discriminator")
    s.add_argument("--cvae", required=True)
    s.add_argument("--disc", required=True)
    s.add_argument("--shard", required=True)
    s.add_argument("--policy", default="pc", help="pc | random | all | fixed=c_pitch,c_yaw")
    s.add_argument("--grasps", type=int, default=400)
    s.add_argument("--exec", type=int, default=20)
    s.add_argument("--cloud-stride", type=int, default=1)
    s.add_argument("--friction", type=float, default=0.5)
    s.add_argument("--out", required=True)
    s.add_argument("--csv", help="curve CSV path (default: report path with .csv)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("inspect", parents=[common], help="summarize a shard, checkpoint, cloud or mesh")
    s.add_argument("path")
    s.set_defaults(func=cmd_inspect)
    return p


def _configure_logging() -> None:
    level = os.environ.get("GRASPBIN_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.command_line = ["graspbin", *_command_line(argv)]
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        torch.set_num_threads(args.threads)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except BinRangeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DegenerateCloudError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
