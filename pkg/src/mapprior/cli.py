"""Command-line interface: corpus synthesis, pre-training, encoding, prior
store management, fusion, degradation, evaluation, rendering, and the full
end-to-end pipeline.

Every run writes a manifest next to its primary output recording the
subcommand, flags, seed, and SHA-256 hashes of inputs and outputs. Seeded
runs are deterministic: identical flags produce byte-identical outputs.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from ._alloctune import tune_malloc
from .checkpoint import load_checkpoint, save_checkpoint, write_arrays
from .corpus import synth_corpus
from .encoder import UveConfig, decode_coordinates, encode, expected_shapes, init_params
from .errors import DataError, MapPriorError, NumericError, UsageError
from .fusion import (DEFAULT_MERGE_MODE, DEFAULT_PRIOR_NUM,
                     DEFAULT_SEARCH_RANGE_M, MERGE_MODES, FusionParams,
                     PriorStore, QueryGrid, merge, retrieve_priors)
from .map_io import (DEFAULT_RESAMPLE_POINTS, ego_to_world, parse_map_file,
                     resample_map, world_to_ego, write_map_file)
from .metrics import (DEFAULT_TAUS, evaluate_detection, iou, mean_point_error,
                      rasterize)
from .pretrain import CorruptionConfig, corrupt, pretrain_loop
from .render import write_svg
from .seeding import derive_rng
from .vector_core import (DEFAULT_WINDOW, ElementType, PerceptionWindow,
                          VectorMap)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_window(text: Optional[str]) -> PerceptionWindow:
    if not text:
        return DEFAULT_WINDOW
    try:
        x0, x1, y0, y1 = (float(v) for v in text.split(","))
        return PerceptionWindow(x0, x1, y0, y1)
    except (ValueError, DataError) as exc:
        raise UsageError(f"bad --window {text!r}: {exc}") from None


def _parse_pose(text: str) -> tuple[float, float, float]:
    try:
        x, y, yaw = (float(v) for v in text.split(","))
        return (x, y, yaw)
    except ValueError:
        raise UsageError(f"bad --pose {text!r}; expected x,y,yaw") from None


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path: str, subcommand: str, flags: dict, seed: Optional[int],
                    inputs: Sequence[str], outputs: Sequence[str]) -> None:
    manifest = {
        "subcommand": subcommand,
        "flags": {k: v for k, v in sorted(flags.items())},
        "seed": seed,
        "inputs": {p: _sha256(p) for p in sorted(inputs)},
        "outputs": {p: _sha256(p) for p in sorted(outputs)},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _flags_dict(args: argparse.Namespace) -> dict:
    skip = {"func", "command"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _load_uve(path: str):
    params, config_echo = load_checkpoint(path)
    if "uve" not in config_echo:
        raise DataError(f"{path}: checkpoint lacks the encoder config echo")
    config = UveConfig.from_dict(config_echo["uve"])
    shapes = expected_shapes(config)
    for name, shape in shapes.items():
        if name not in params or tuple(params[name].value.shape) != shape:
            raise DataError(f"{path}: parameter {name!r} missing or mis-shaped "
                            f"for the stored config")
    return params, config


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    window = _parse_window(args.window)
    maps = synth_corpus(args.n, seed=args.seed, window=window,
                        n_points=args.points)
    write_map_file(maps, args.out)
    _write_manifest(args.out + ".manifest.json", "synth", _flags_dict(args),
                    args.seed, [], [args.out])
    print(f"wrote {len(maps)} maps to {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    window = _parse_window(args.window)
    if (args.corpus is None) == (args.synth is None):
        raise UsageError("pretrain needs exactly one of --corpus or --synth")
    inputs = []
    if args.corpus:
        maps = parse_map_file(args.corpus)
        maps = [resample_map(m, args.points) for m in maps]
        inputs.append(args.corpus)
    else:
        maps = synth_corpus(args.synth, seed=args.seed, window=window,
                            n_points=args.points)
    config = UveConfig(m_intra=args.intra, n_inter=args.inter, dim=args.dim,
                       heads=args.heads, ffn_dim=args.ffn,
                       max_points=args.points, window=window.as_tuple())
    corruption = CorruptionConfig(mode=args.mode, seg_fraction=args.seg,
                                  pt_fraction=args.pt, noise_std=args.std,
                                  seed=args.seed)
    params, report = pretrain_loop(
        maps, config, corruption, epochs=args.epochs, lr=args.lr,
        batch_size=args.batch, seed=args.seed,
        log=lambda msg: print(msg, file=sys.stderr))
    save_checkpoint(args.out, params,
                    config={"uve": config.to_dict(),
                            "corruption": corruption.to_dict()})
    report_path = args.report or (args.out + ".report.json")
    _write_json(report_path, report.to_dict())
    _write_manifest(args.out + ".manifest.json", "pretrain", _flags_dict(args),
                    args.seed, inputs, [args.out, report_path])
    print(f"final held-out error: all={report.dist_err_all:.4f}m "
          f"corrupted={report.dist_err_corrupted}m", file=sys.stderr)
    print(f"wall clock: {report.wall_clock_s:.1f}s", file=sys.stderr)
    print(f"wrote checkpoint {args.out} and report {report_path}")
    return 0


def cmd_encode(args) -> int:
    params, config = _load_uve(args.ckpt)
    maps = parse_map_file(args.map)
    arrays = {}
    for i, vmap in enumerate(maps):
        if vmap.frame != "ego":
            raise DataError(f"map {i}: encoder needs ego-frame maps")
        vmap = resample_map(vmap, config.max_points)
        bundle = encode(vmap, config, params)
        arrays[f"map{i:04d}.f_ins"] = bundle.f_ins
        if bundle.f_pt:
            arrays[f"map{i:04d}.f_pt"] = np.stack(bundle.f_pt)
    write_arrays(args.out, arrays, seed=params.seed,
                 config={"uve": config.to_dict(), "n_maps": len(maps)})
    _write_manifest(args.out + ".manifest.json", "encode", _flags_dict(args),
                    None, [args.map, args.ckpt], [args.out])
    print(f"encoded {len(maps)} maps to {args.out}")
    return 0


def cmd_degrade(args) -> int:
    drop = []
    for name in (args.drop.split(",") if args.drop else []):
        name = name.strip()
        if name:
            drop.append(ElementType.from_name(name))
    maps = parse_map_file(args.map)
    out = []
    for li, vmap in enumerate(maps):
        rng = derive_rng(args.seed, "degrade", li)
        kept = []
        for inst in vmap.instances:
            if inst.element_type in drop:
                continue
            if args.offset_std > 0.0:
                dx, dy = rng.normal(0.0, args.offset_std, size=2)
                kept.append(inst.with_coords(inst.coords() + (dx, dy)))
            else:
                kept.append(inst)
        out.append(VectorMap(tuple(kept), frame=vmap.frame, pose=vmap.pose,
                             source_tag="hd_map_ex"))
    write_map_file(out, args.out)
    _write_manifest(args.out + ".manifest.json", "degrade", _flags_dict(args),
                    args.seed, [args.map], [args.out])
    print(f"degraded {len(maps)} maps -> {args.out}")
    return 0


def cmd_store(args) -> int:
    store = PriorStore.load(args.store) if os.path.exists(args.store) \
        else PriorStore()
    maps = parse_map_file(args.add)
    for i, vmap in enumerate(maps):
        if vmap.pose is None:
            raise DataError(f"map {i}: stored maps need a pose")
        if vmap.frame == "ego":
            vmap = ego_to_world(vmap)
        store.insert(vmap.pose, vmap, args.timestamp + i)
    store.save(args.store)
    _write_manifest(args.store + ".manifest.json", "store", _flags_dict(args),
                    None, [args.add], [args.store])
    print(f"store now holds {len(store)} entries")
    return 0


def cmd_fuse(args) -> int:
    window = _parse_window(args.window)
    params, config = _load_uve(args.ckpt)
    store = PriorStore.load(args.store)
    pose = _parse_pose(args.pose)
    priors = retrieve_priors(store, pose, search_range_m=args.range,
                             prior_num=args.num, window=window)
    bundles = []
    for prior in priors:
        bundles.append(encode(resample_map(prior, config.max_points),
                              config, params))
    try:
        gm, gn, qd = (int(v) for v in args.grid.split(","))
    except ValueError:
        raise UsageError(f"bad --grid {args.grid!r}; expected m,n,qd") from None
    grid = QueryGrid.create(gm, gn, qd, derive_rng(args.seed, "query-grid"))
    fparams = FusionParams.create(config.dim, qd, derive_rng(args.seed, "fusion"))
    merged = merge(args.mode, grid, bundles, fparams)
    write_arrays(args.out,
                 {"merged": merged.features,
                  "prior_backed": merged.prior_backed.astype(np.float64),
                  "q_ins": grid.q_ins, "q_pt": grid.q_pt},
                 seed=args.seed,
                 config={"mode": args.mode, "range": args.range,
                         "num": args.num, "n_priors": len(priors),
                         "dropped_instances": merged.dropped_instances,
                         "dropped_points": merged.dropped_points})
    _write_manifest(args.out + ".manifest.json", "fuse", _flags_dict(args),
                    args.seed, [args.store, args.ckpt], [args.out])
    print(f"fused {len(priors)} priors ({args.mode}) -> {args.out}")
    return 0


def _pool_iou(pred_maps, gt_maps, window, resolution):
    total_inter: dict[str, int] = {}
    total_union: dict[str, int] = {}
    for pm, gm in zip(pred_maps, gt_maps):
        ra = rasterize(pm, window, resolution)
        rb = rasterize(gm, window, resolution)
        for cls in sorted(ra.grids):
            name = ElementType(cls).name.lower()
            ga, gb = ra.grids[cls], rb.grids[cls]
            total_inter[name] = total_inter.get(name, 0) + int(
                np.logical_and(ga, gb).sum())
            total_union[name] = total_union.get(name, 0) + int(
                np.logical_or(ga, gb).sum())
    per_class = {}
    both_empty = []
    for name in sorted(total_union):
        if total_union[name] == 0:
            per_class[name] = 1.0
            both_empty.append(name)
        else:
            per_class[name] = total_inter[name] / total_union[name]
    mean = sum(per_class.values()) / len(per_class) if per_class else None
    return {"per_class": per_class, "both_empty": both_empty, "mean": mean}


def cmd_eval(args) -> int:
    window = _parse_window(args.window)
    preds = parse_map_file(args.pred)
    gts = parse_map_file(args.gt)
    if len(preds) != len(gts):
        raise DataError(f"frame count mismatch: {len(preds)} predictions vs "
                        f"{len(gts)} ground-truth maps")
    taus = tuple(float(t) for t in args.tau.split(","))
    report: dict = {"metric": args.metric, "n_frames": len(preds)}
    if args.metric == "ap":
        frames = [(p.instances, g.instances) for p, g in zip(preds, gts)]
        report.update(evaluate_detection(frames, taus=taus))
    elif args.metric == "iou":
        report["iou"] = _pool_iou(preds, gts, window, args.resolution)
    elif args.metric == "dist":
        errs = []
        for p, g in zip(preds, gts):
            n = g.total_points()
            errs.append((mean_point_error(p, g), n))
        total = sum(n for _, n in errs)
        report["dist_err"] = (sum(e * n for e, n in errs) / total
                              if total else None)
    else:
        raise UsageError(f"unknown metric {args.metric!r}")
    text = json.dumps(report, sort_keys=True, indent=1)
    print(text)
    if args.out:
        _write_json(args.out, report)
        _write_manifest(args.out + ".manifest.json", "eval", _flags_dict(args),
                        None, [args.pred, args.gt], [args.out])
    return 0


def cmd_render(args) -> int:
    window = _parse_window(args.window)
    maps = parse_map_file(args.map)
    write_svg(maps, args.out, window)
    _write_manifest(args.out + ".manifest.json", "render", _flags_dict(args),
                    None, [args.map], [args.out])
    print(f"rendered {len(maps)} maps -> {args.out}")
    return 0


def _denoise_map(vmap: VectorMap, config: UveConfig, params) -> VectorMap:
    """Reconstruct a map through the encoder + coordinate head."""
    from . import autodiff as ad
    from .encoder import encode_tokens, hybrid_prior_embed
    from .map_io import resample_instance
    from .vector_core import _tangent_directions
    if len(vmap) == 0:
        return vmap
    tokens = hybrid_prior_embed(vmap, config, params)
    states = encode_tokens(tokens, config, params)
    rows = tokens.point_rows()
    correction = decode_coordinates(ad.embedding_lookup(states, rows), params)
    recon = correction.value + tokens.coords[rows]
    out = []
    offset = 0
    for inst in vmap.instances:
        n = len(inst)
        xy = recon[offset:offset + n]
        out.append(inst.with_coords(xy, _tangent_directions(xy)))
        offset += n
    return VectorMap(tuple(out), frame=vmap.frame, pose=vmap.pose,
                     source_tag="prediction")


def cmd_pipeline(args) -> int:
    """synth -> pretrain -> store historical predictions -> retrieve + encode
    + merge -> evaluate."""
    window = _parse_window(args.window)
    os.makedirs(args.out, exist_ok=True)

    def stage_path(name: str) -> str:
        return os.path.join(args.out, name)

    def fail(stage: str, exc: Exception):
        raise type(exc)(f"pipeline stage {stage!r}: {exc}") from exc

    # 1. corpus
    try:
        corpus = synth_corpus(args.maps, seed=args.seed, window=window,
                              n_points=args.points)
        corpus_path = stage_path("corpus.jsonl")
        write_map_file(corpus, corpus_path)
    except MapPriorError as exc:
        fail("corpus", exc)

    # 2. pre-train
    config = UveConfig(max_points=args.points, window=window.as_tuple())
    corruption = CorruptionConfig(mode=args.mode, seg_fraction=args.seg,
                                  pt_fraction=args.pt, noise_std=args.std,
                                  seed=args.seed)
    try:
        params, train_report = pretrain_loop(
            corpus, config, corruption, epochs=args.epochs, lr=args.lr,
            batch_size=args.batch, seed=args.seed,
            log=lambda msg: print(msg, file=sys.stderr))
        ckpt_path = stage_path("uve.ckpt")
        save_checkpoint(ckpt_path, params,
                        config={"uve": config.to_dict(),
                                "corruption": corruption.to_dict()})
        _write_json(stage_path("train_report.json"), train_report.to_dict())
    except MapPriorError as exc:
        fail("pretrain", exc)

    # 3. historical predictions into the prior store
    try:
        frames = synth_corpus(args.frames, seed=args.seed + 1, window=window,
                              n_points=args.points)
        pose_rng = derive_rng(args.seed, "poses")
        hist_rng = derive_rng(args.seed, "history")
        store = PriorStore()
        poses = []
        corrupted_priors: list[list[VectorMap]] = []
        for i, gt in enumerate(frames):
            yaw = float(pose_rng.uniform(-np.pi, np.pi))
            pose = (1000.0 * i, 50.0 * ((i % 3) - 1), yaw)
            poses.append(pose)
            world_gt = ego_to_world(gt, pose)
            frame_priors = []
            for h in range(args.num):
                ang = float(hist_rng.uniform(0.0, 2.0 * np.pi))
                r = float(hist_rng.uniform(0.5, min(3.0, args.range - 0.5)))
                hist_pose = (pose[0] + r * np.cos(ang),
                             pose[1] + r * np.sin(ang),
                             yaw + float(hist_rng.uniform(-0.15, 0.15)))
                hist_ego = world_to_ego(world_gt, hist_pose)
                corrupted, _ = corrupt(hist_ego, corruption, hist_rng)
                store.insert(hist_pose, ego_to_world(corrupted, hist_pose),
                             timestamp=float(h))
                frame_priors.append(corrupted)
            corrupted_priors.append(frame_priors)
        store_path = stage_path("store.jsonl")
        store.save(store_path)
    except MapPriorError as exc:
        fail("store", exc)

    # 4. retrieve, encode, denoise, merge
    try:
        grid_dims = tuple(int(v) for v in args.grid.split(","))
        grid = QueryGrid.create(*grid_dims, rng=derive_rng(args.seed, "query-grid"))
        fparams = FusionParams.create(config.dim, grid_dims[2],
                                      rng=derive_rng(args.seed, "fusion"))
        feature_arrays = {}
        denoised_frames = []
        corrupted_frames = []
        for i, (gt, pose) in enumerate(zip(frames, poses)):
            priors = retrieve_priors(store, pose, search_range_m=args.range,
                                     prior_num=args.num, window=window)
            priors = [resample_map(p, config.max_points) for p in priors]
            bundles = [encode(p, config, params) for p in priors]
            merged = merge(args.merge, grid, bundles, fparams)
            feature_arrays[f"frame{i:04d}.merged"] = merged.features
            feature_arrays[f"frame{i:04d}.prior_backed"] = \
                merged.prior_backed.astype(np.float64)
            denoised = [_denoise_map(p, config, params) for p in priors]
            denoised_frames.append((
                [inst for m in denoised for inst in m.instances],
                list(gt.instances)))
            corrupted_frames.append((
                [inst for m in priors for inst in m.instances],
                list(gt.instances)))
        features_path = stage_path("features.bin")
        write_arrays(features_path, feature_arrays, seed=args.seed,
                     config={"merge": args.merge, "grid": list(grid_dims),
                             "range": args.range, "num": args.num})
    except MapPriorError as exc:
        fail("fuse", exc)

    # 5. evaluation
    try:
        taus = DEFAULT_TAUS
        eval_report = {
            "denoised_ap": evaluate_detection(denoised_frames, taus=taus),
            "prior_baseline_ap": evaluate_detection(corrupted_frames, taus=taus),
            "denoising": {
                "holdout_dist_err_all": train_report.dist_err_all,
                "holdout_dist_err_corrupted": train_report.dist_err_corrupted,
                "holdout_baseline_corrupted":
                    train_report.baseline_err_corrupted,
            },
            "n_frames": len(frames),
        }
        den_for_iou = []
        for (den_insts, _), gt in zip(denoised_frames, frames):
            den_for_iou.append(VectorMap(tuple(den_insts), frame="ego",
                                         source_tag="prediction"))
        eval_report["denoised_iou"] = _pool_iou(den_for_iou, frames, window,
                                                args.resolution)
        _write_json(stage_path("eval_report.json"), eval_report)
    except MapPriorError as exc:
        fail("eval", exc)

    outputs = [stage_path(n) for n in ("corpus.jsonl", "uve.ckpt",
                                       "train_report.json", "store.jsonl",
                                       "features.bin", "eval_report.json")]
    _write_manifest(stage_path("manifest.json"), "pipeline",
                    _flags_dict(args), args.seed, [], outputs)
    print(f"pipeline complete; reports in {args.out}")
    print(f"denoised mAP: {eval_report['denoised_ap'].get('map')}, "
          f"prior baseline mAP: {eval_report['prior_baseline_ap'].get('map')}",
          file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> _Parser:
    p = _Parser(prog="mapprior",
                description="Vector map prior encoding toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add_window(sp):
        sp.add_argument("--window", default=None,
                        help="perception window 'x0,x1,y0,y1' "
                             "(default -15,15,-30,30)")

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--points", type=int, default=DEFAULT_RESAMPLE_POINTS)
    add_window(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("pretrain", help="denoising pre-training")
    sp.add_argument("--corpus", default=None, help="map file to train on")
    sp.add_argument("--synth", type=int, default=None,
                    help="generate N synthetic maps instead of --corpus")
    sp.add_argument("--mode", choices=["noise", "mask", "none"],
                    default="noise")
    sp.add_argument("--seg", type=float, default=0.10)
    sp.add_argument("--pt", type=float, default=0.05)
    sp.add_argument("--std", type=float, default=1.0)
    sp.add_argument("--epochs", type=int, default=24)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--batch", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--report", default=None)
    sp.add_argument("--points", type=int, default=DEFAULT_RESAMPLE_POINTS)
    sp.add_argument("--dim", type=int, default=64)
    sp.add_argument("--intra", type=int, default=2)
    sp.add_argument("--inter", type=int, default=2)
    sp.add_argument("--heads", type=int, default=4)
    sp.add_argument("--ffn", type=int, default=128)
    add_window(sp)
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("encode", help="encode maps with a checkpoint")
    sp.add_argument("--map", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("degrade", help="simulate an outdated HD map")
    sp.add_argument("--map", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--drop", default="",
                    help="comma-separated element types to remove")
    sp.add_argument("--offset-std", dest="offset_std", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_degrade)

    sp = sub.add_parser("store", help="append maps to a prior store")
    sp.add_argument("--store", required=True)
    sp.add_argument("--add", required=True, help="map file to insert")
    sp.add_argument("--timestamp", type=float, default=0.0)
    sp.set_defaults(func=cmd_store)

    sp = sub.add_parser("fuse", help="retrieve priors and merge into queries")
    sp.add_argument("--store", required=True)
    sp.add_argument("--pose", required=True, help="x,y,yaw")
    sp.add_argument("--range", type=float, default=DEFAULT_SEARCH_RANGE_M)
    sp.add_argument("--num", type=int, default=DEFAULT_PRIOR_NUM)
    sp.add_argument("--mode", choices=list(MERGE_MODES),
                    default=DEFAULT_MERGE_MODE)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--grid", default="16,20,64", help="m,n,qd")
    sp.add_argument("--seed", type=int, default=0)
    add_window(sp)
    sp.set_defaults(func=cmd_fuse)

    sp = sub.add_parser("eval", help="score predictions against ground truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--gt", required=True)
    sp.add_argument("--metric", choices=["ap", "iou", "dist"], default="ap")
    sp.add_argument("--tau", default=",".join(str(t) for t in DEFAULT_TAUS))
    sp.add_argument("--resolution", type=float, default=0.15)
    sp.add_argument("--out", default=None)
    add_window(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("render", help="render maps to SVG")
    sp.add_argument("--map", required=True)
    sp.add_argument("--out", required=True)
    add_window(sp)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("pipeline", help="full synth/pretrain/fuse/eval loop")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--maps", type=int, default=2000)
    sp.add_argument("--frames", type=int, default=20)
    sp.add_argument("--mode", choices=["noise", "mask", "none"],
                    default="noise")
    sp.add_argument("--seg", type=float, default=0.10)
    sp.add_argument("--pt", type=float, default=0.05)
    sp.add_argument("--std", type=float, default=1.0)
    sp.add_argument("--epochs", type=int, default=24)
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--batch", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--points", type=int, default=DEFAULT_RESAMPLE_POINTS)
    sp.add_argument("--range", type=float, default=DEFAULT_SEARCH_RANGE_M)
    sp.add_argument("--num", type=int, default=DEFAULT_PRIOR_NUM)
    sp.add_argument("--merge", choices=list(MERGE_MODES),
                    default=DEFAULT_MERGE_MODE)
    sp.add_argument("--grid", default="16,20,64")
    sp.add_argument("--resolution", type=float, default=0.15)
    add_window(sp)
    sp.set_defaults(func=cmd_pipeline)

    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    tune_malloc()
    parser = build_parser()
    t0 = time.perf_counter()
    try:
        args = parser.parse_args(argv)
        rc = args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    print(f"elapsed: {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return rc


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
