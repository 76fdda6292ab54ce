"""Command-line interface: register, benchgen, eval, synth.

``register`` runs the matching/filter/RANSAC/ICP pipeline over one cloud
pair or a pair-list CSV and emits one JSON line per pair.  ``benchgen``
builds a balanced registration set from pose and cloud directories.
``eval`` aggregates register output into recall and failure histograms.
``synth`` writes generated scenes or trajectories in the standard formats
so the whole chain can run from files alone.

Option precedence for ``register`` is flags over config file over
defaults; the config file holds flat ``key=value`` lines named after the
long flags.  With a fixed ``--seed`` and ``--threads 1`` (plus
``--timing off``, since wall clocks are measurements, not outputs) every
emitted byte is reproducible.

Exit codes: 0 all pairs processed, 1 processing failed (empty pool,
estimation error), 2 unreadable or malformed input.
"""

from __future__ import annotations

import argparse
import json
import sys
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from .benchgen import SelectorConfig, build_candidate_pool, select_balanced
from .geom import GimbalLockError, RigidMotion, voxel_downsample
from .gpf import GpfConfig
from .icp import IcpConfig
from .io import (
    FormatError,
    read_cloud_bin,
    read_cloud_ply,
    read_config,
    read_descriptors,
    read_jsonl,
    read_pair_list,
    read_poses,
    write_cloud_ply,
    write_descriptors,
    write_histogram_csv,
    write_jsonl,
    write_pair_list,
    write_poses,
)
from .metrics import (
    DEFAULT_BIN_EDGES,
    FailureHistogram,
    PairRecord,
    histogram,
    is_success,
    rotation_error,
    set_distribution_report,
    translation_error,
)
from .pipeline import PipelineConfig, register_pair
from .ransac import RansacConfig
from .synth import SceneSpec, TrajectorySpec, frame_descriptors, generate_scene, generate_trajectory

DEFAULT_CLOUD_PATTERN = "{seq}/{frame:06d}.ply"
DEFAULT_DESC_PATTERN = "{seq}/{frame:06d}.fdsc"

_REGISTER_DEFAULTS: dict[str, object] = {
    "max_iters": 1_000_000,
    "confidence": 0.999,
    "inlier_thresh": 0.6,
    "sampler": "prosac",
    "reject": "elc",
    "lo": "on",
    "seed": 0,
    "filter": "gpf",
    "gpf": 2.0,
    "grid_m": 10,
    "refine": "icp",
    "icp_thresh": 0.6,
    "elc_tol": 0.6,
    "threads": 1,
    "timing": "wall",
}

_REGISTER_TYPES: dict[str, type] = {
    "max_iters": int, "confidence": float, "inlier_thresh": float,
    "sampler": str, "reject": str, "lo": str, "seed": int, "filter": str,
    "gpf": float, "grid_m": int, "refine": str, "icp_thresh": float,
    "elc_tol": float, "threads": int, "timing": str,
}

_REGISTER_CHOICES: dict[str, tuple[str, ...]] = {
    "sampler": ("uniform", "prosac"),
    "reject": ("none", "elc", "sprt"),
    "lo": ("on", "off"),
    "filter": ("none", "mnn", "gpf"),
    "refine": ("none", "icp"),
    "timing": ("wall", "off"),
}


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _read_cloud(path) -> np.ndarray:
    p = Path(path)
    if p.suffix == ".ply":
        return read_cloud_ply(p)
    if p.suffix == ".bin":
        return read_cloud_bin(p)
    raise FormatError(p, f"unknown cloud extension {p.suffix!r} "
                         "(expected .ply or .bin)")


def _motion_reals(m: RigidMotion) -> list[float]:
    return [float(v) for v in m.matrix34().ravel()]


def _motion_from_list(reals) -> RigidMotion:
    return RigidMotion.from_matrix34(np.asarray(reals, dtype=np.float64).reshape(3, 4))


def _merge_register_options(args: argparse.Namespace) -> dict[str, object]:
    merged = dict(_REGISTER_DEFAULTS)
    if args.config is not None:
        for key, value in read_config(args.config).items():
            dest = key.replace("-", "_")
            if dest not in _REGISTER_DEFAULTS:
                raise FormatError(args.config, f"unknown option {key!r}")
            try:
                merged[dest] = _REGISTER_TYPES[dest](value)
            except ValueError as e:
                raise FormatError(args.config,
                                  f"bad value for {key!r}: {value!r}") from e
    for dest in _REGISTER_DEFAULTS:
        flag_value = getattr(args, dest)
        if flag_value is not None:
            merged[dest] = flag_value
    for dest, allowed in _REGISTER_CHOICES.items():
        if merged[dest] not in allowed:
            raise ValueError(f"{dest.replace('_', '-')} must be one of "
                             f"{', '.join(allowed)}")
    return merged


def _pipeline_config(opt: dict[str, object], seed: int) -> PipelineConfig:
    return PipelineConfig(
        correspondence_filter=str(opt["filter"]),
        refine=str(opt["refine"]),
        gpf=GpfConfig(grid_m=int(opt["grid_m"]), phi=float(opt["gpf"])),
        ransac=RansacConfig(
            max_iterations=int(opt["max_iters"]),
            confidence=float(opt["confidence"]),
            inlier_threshold=float(opt["inlier_thresh"]),
            use_prosac=opt["sampler"] == "prosac",
            rejection=str(opt["reject"]),
            use_lo=opt["lo"] == "on",
            elc_tolerance=float(opt["elc_tol"]),
            seed=seed),
        icp=IcpConfig(threshold=float(opt["icp_thresh"])))


def _stage_dict(est: RigidMotion, gt: RigidMotion | None,
                wall: float, timing: str) -> dict:
    out: dict = {"wall_time": 0.0 if timing == "off" else float(wall)}
    if gt is not None:
        re = rotation_error(est.rotation, gt.rotation)
        te = translation_error(est.translation, gt.translation)
        out.update(re_deg=re, te_m=te, success=is_success(re, te))
    return out


def _register_job(job: tuple) -> dict:
    (meta, src_path, dst_path, sdesc_path, ddesc_path,
     gt_reals, opt, seed) = job
    src = _read_cloud(src_path)
    dst = _read_cloud(dst_path)
    src_desc = read_descriptors(sdesc_path)
    dst_desc = read_descriptors(ddesc_path)
    if len(src_desc) != len(src):
        raise FormatError(sdesc_path, f"{len(src_desc)} descriptors for a "
                                      f"{len(src)}-point cloud")
    if len(dst_desc) != len(dst):
        raise FormatError(ddesc_path, f"{len(dst_desc)} descriptors for a "
                                      f"{len(dst)}-point cloud")

    result = register_pair(src, dst, src_desc, dst_desc,
                           _pipeline_config(opt, seed))
    gt = _motion_from_list(gt_reals) if gt_reals is not None else None
    timing = str(opt["timing"])

    row = dict(meta)
    row.update(
        n_corrs=result.corrs_total,
        n_filtered=result.corrs_kept,
        iterations=result.ransac.iterations_run,
        rejected_fast=result.ransac.hypotheses_rejected_fast,
        lo_rounds=result.ransac.lo_rounds,
        converged_by=result.ransac.converged_by,
        est_coarse=_motion_reals(result.coarse),
        coarse=_stage_dict(result.coarse, gt, result.coarse_time, timing))
    if gt is not None:
        row["gt"] = list(gt_reals)
    if result.refined is not None:
        row["est_refined"] = _motion_reals(result.refined)
        row["refined"] = _stage_dict(result.refined, gt,
                                     result.refined_time, timing)
    return row


def _pair_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base, index]).generate_state(1)[0])


def _emit_rows(rows, out_path) -> None:
    if out_path is None or out_path == "-":
        for row in rows:
            print(json.dumps(row, sort_keys=True))
    else:
        write_jsonl(out_path, rows)


# ---------------------------------------------------------------------------
# register
# ---------------------------------------------------------------------------

def _pair_meta(record: PairRecord) -> dict:
    meta = {"sequence_id": record.sequence_id, "src": record.src,
            "tgt": record.tgt, "overlap": float(record.overlap),
            "dt": float(record.dt), "distance": float(record.distance)}
    try:
        e = record.euler()
        meta.update(roll=e.roll, pitch=e.pitch, yaw=e.yaw)
    except GimbalLockError:
        pass
    return meta


def _cmd_register(args: argparse.Namespace) -> int:
    opt = _merge_register_options(args)
    single = args.src is not None
    listed = args.pairs is not None
    if single == listed:
        print("error: give either --src/--dst/--src-desc/--dst-desc or --pairs",
              file=sys.stderr)
        return 2

    jobs: list[tuple] = []
    if single:
        missing = [n for n in ("dst", "src_desc", "dst_desc")
                   if getattr(args, n) is None]
        if missing:
            print(f"error: --{missing[0].replace('_', '-')} is required "
                  "with --src", file=sys.stderr)
            return 2
        gt_reals = None
        if args.gt_pose is not None:
            poses = read_poses(args.gt_pose)
            if not poses:
                raise FormatError(args.gt_pose, "no pose line")
            gt_reals = _motion_reals(poses[0])
        meta = {"sequence_id": "pair", "src": 0, "tgt": 1}
        jobs.append((meta, args.src, args.dst, args.src_desc, args.dst_desc,
                     gt_reals, opt, int(opt["seed"])))
    else:
        if args.cloud_dir is None or args.desc_dir is None:
            print("error: --cloud-dir and --desc-dir are required with --pairs",
                  file=sys.stderr)
            return 2
        records = read_pair_list(args.pairs)
        for i, rec in enumerate(records):
            cloud = Path(args.cloud_dir)
            desc = Path(args.desc_dir)
            paths = [cloud / args.cloud_pattern.format(seq=rec.sequence_id, frame=rec.src),
                     cloud / args.cloud_pattern.format(seq=rec.sequence_id, frame=rec.tgt),
                     desc / args.desc_pattern.format(seq=rec.sequence_id, frame=rec.src),
                     desc / args.desc_pattern.format(seq=rec.sequence_id, frame=rec.tgt)]
            jobs.append((_pair_meta(rec), *map(str, paths),
                         _motion_reals(rec.motion), opt,
                         _pair_seed(int(opt["seed"]), i)))

    threads = int(opt["threads"])
    if threads > 1 and len(jobs) > 1:
        with Pool(threads) as pool:
            rows = pool.map(_register_job, jobs)
    else:
        rows = [_register_job(j) for j in jobs]

    _emit_rows(rows, args.out)
    return 0


# ---------------------------------------------------------------------------
# benchgen
# ---------------------------------------------------------------------------

def _read_times(path: Path, n: int) -> list[float]:
    try:
        tokens = path.read_text(encoding="ascii").split()
    except OSError as e:
        raise FormatError(path, f"unreadable: {e.strerror}") from e
    try:
        times = [float(t) for t in tokens]
    except ValueError as e:
        raise FormatError(path, f"bad timestamp: {e}") from e
    if len(times) != n:
        raise FormatError(path, f"{len(times)} timestamps for {n} poses")
    return times


def _load_sequences(args: argparse.Namespace):
    from .benchgen import PosedFrame

    pose_dir = Path(args.pose_dir)
    pose_files = sorted(pose_dir.glob("*.poses"))
    if not pose_files:
        raise FormatError(pose_dir, "no *.poses files")
    sequences = []
    for pf in pose_files:
        seq = pf.stem
        poses = read_poses(pf)
        times_file = pose_dir / f"{seq}.times"
        times = _read_times(times_file, len(poses)) if times_file.exists() \
            else [float(i) for i in range(len(poses))]
        frames = []
        for i, pose in enumerate(poses):
            cloud_path = Path(args.cloud_dir) / args.cloud_pattern.format(
                seq=seq, frame=i)
            cloud = _read_cloud(cloud_path)
            if args.voxel > 0.0:
                cloud = voxel_downsample(cloud, args.voxel)
            frames.append(PosedFrame(sequence_id=seq, frame_index=i,
                                     timestamp=times[i], pose=pose,
                                     cloud=cloud))
        sequences.append(frames)
    return sequences


def _cmd_benchgen(args: argparse.Namespace) -> int:
    cfg = SelectorConfig(k=args.k, min_overlap=args.min_overlap, r=args.r,
                         target_count=args.target_count, overlap_tau=args.tau,
                         seed=args.seed)
    pool = build_candidate_pool(_load_sequences(args), cfg)
    if not pool:
        print("error: candidate pool is empty after overlap filtering; "
              "lower --min-overlap or check the poses", file=sys.stderr)
        return 1
    result = select_balanced(pool, cfg)
    if result.exhausted:
        print(f"warning: selected only {len(result.records)} of "
              f"{cfg.target_count} requested pairs", file=sys.stderr)

    out_pairs = Path(args.out_pairs)
    out_pairs.parent.mkdir(parents=True, exist_ok=True)
    write_pair_list(out_pairs, result.records)

    if args.out_dist is not None:
        dist_dir = Path(args.out_dist)
        dist_dir.mkdir(parents=True, exist_ok=True)
        for name, hist in set_distribution_report(result.records).items():
            write_histogram_csv(dist_dir / f"dist_{name}.csv", hist)
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

_FAILURE_PARAMETERS = ("distance", "overlap", "yaw", "pitch", "roll", "dt")


def _final_stage(row: dict, path) -> dict:
    stage = row.get("refined", row.get("coarse"))
    if not isinstance(stage, dict):
        raise FormatError(path, "record has neither refined nor coarse stage")
    if "success" not in stage:
        raise FormatError(path, "record carries no ground truth "
                                "(no success field); eval needs gt pairs")
    return stage


def _write_failure_csv(path, fh: FailureHistogram) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("bin_lo,bin_hi,successes,failures,failure_ratio\n")
        ratios = fh.failure_ratio
        for i in range(len(fh.edges) - 1):
            f.write(f"{repr(float(fh.edges[i]))},{repr(float(fh.edges[i + 1]))},"
                    f"{int(fh.success_counts[i])},{int(fh.failure_counts[i])},"
                    f"{repr(float(ratios[i]))}\n")


def _cmd_eval(args: argparse.Namespace) -> int:
    rows = read_jsonl(args.records)
    if not rows:
        print(f"error: {args.records}: no records", file=sys.stderr)
        return 2
    stages = [_final_stage(row, args.records) for row in rows]
    success = np.array([bool(s["success"]) for s in stages])
    walls = np.array([float(s.get("wall_time", 0.0)) for s in stages])
    print(f"recall={success.mean():.4f}")
    print(f"mean_wall_time_s={walls.mean():.4f}")

    if args.out_dir is not None:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name in _FAILURE_PARAMETERS:
            if not all(name in row for row in rows):
                print(f"warning: some records lack {name!r}; histogram "
                      "omitted", file=sys.stderr)
                continue
            values = np.array([float(row[name]) for row in rows])
            edges = DEFAULT_BIN_EDGES[name]
            fh = FailureHistogram(
                parameter=name, edges=edges,
                success_counts=histogram(values[success], edges).counts,
                failure_counts=histogram(values[~success], edges).counts)
            _write_failure_csv(out / f"failure_{name}.csv", fh)
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.mode == "scene":
        spec = SceneSpec(n_points=args.n, extent=args.extent,
                         true_motion=RigidMotion.identity() if args.identity else None,
                         inlier_fraction=args.inlier_fraction,
                         noise_sigma=args.sigma,
                         descriptor_dim=args.dim,
                         quality_correlation=args.qc, seed=args.seed)
        scene = generate_scene(spec)
        write_cloud_ply(out / "src.ply", scene.src)
        write_cloud_ply(out / "dst.ply", scene.dst)
        write_descriptors(out / "src.fdsc", scene.src_desc)
        write_descriptors(out / "dst.fdsc", scene.dst_desc)
        write_poses(out / "gt.txt", [scene.true_motion])
        return 0

    if args.profile == "straight":
        spec = TrajectorySpec.straight(n_frames=args.frames,
                                       frame_spacing=args.spacing,
                                       sensor_range=args.range,
                                       seed=args.seed,
                                       sequence_id=args.sequence_id)
    elif args.profile == "uturn":
        spec = TrajectorySpec.uturn(n_frames=args.frames,
                                    frame_spacing=args.spacing,
                                    sensor_range=args.range, seed=args.seed,
                                    sequence_id=args.sequence_id)
    elif args.profile == "stationary":
        spec = TrajectorySpec.stationary(n_frames=args.frames,
                                         sensor_range=args.range,
                                         seed=args.seed,
                                         sequence_id=args.sequence_id)
    else:
        spec = TrajectorySpec.random_drive(n_frames=args.frames,
                                           frame_spacing=args.spacing,
                                           sensor_range=args.range,
                                           seed=args.seed,
                                           sequence_id=args.sequence_id)
    frames = generate_trajectory(spec)
    descs = frame_descriptors(frames, dim=args.dim, seed=args.seed)
    for frame, desc in zip(frames, descs):
        cloud_path = out / DEFAULT_CLOUD_PATTERN.format(
            seq=spec.sequence_id, frame=frame.frame_index)
        cloud_path.parent.mkdir(parents=True, exist_ok=True)
        write_cloud_ply(cloud_path, frame.cloud)
        write_descriptors(out / DEFAULT_DESC_PATTERN.format(
            seq=spec.sequence_id, frame=frame.frame_index), desc)
    write_poses(out / f"{spec.sequence_id}.poses", [f.pose for f in frames])
    with open(out / f"{spec.sequence_id}.times", "w", encoding="ascii",
              newline="\n") as f:
        for frame in frames:
            f.write(repr(float(frame.timestamp)) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidarreg",
        description="point cloud registration toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    reg = sub.add_parser("register", help="register one pair or a pair list")
    reg.add_argument("--src", help="source cloud (.ply or .bin)")
    reg.add_argument("--dst", help="target cloud")
    reg.add_argument("--src-desc", help="source descriptor file")
    reg.add_argument("--dst-desc", help="target descriptor file")
    reg.add_argument("--gt-pose", help="pose file with the ground-truth motion")
    reg.add_argument("--pairs", help="pair-list CSV")
    reg.add_argument("--cloud-dir", help="cloud root for pair-list mode")
    reg.add_argument("--desc-dir", help="descriptor root for pair-list mode")
    reg.add_argument("--cloud-pattern", default=DEFAULT_CLOUD_PATTERN)
    reg.add_argument("--desc-pattern", default=DEFAULT_DESC_PATTERN)
    reg.add_argument("--config", help="key=value option file")
    reg.add_argument("--out", help="output JSONL path (default: stdout)")
    reg.add_argument("--max-iters", type=int, dest="max_iters")
    reg.add_argument("--confidence", type=float)
    reg.add_argument("--inlier-thresh", type=float, dest="inlier_thresh")
    reg.add_argument("--sampler", choices=_REGISTER_CHOICES["sampler"])
    reg.add_argument("--reject", choices=_REGISTER_CHOICES["reject"])
    reg.add_argument("--lo", choices=_REGISTER_CHOICES["lo"])
    reg.add_argument("--seed", type=int)
    reg.add_argument("--filter", choices=_REGISTER_CHOICES["filter"])
    reg.add_argument("--gpf", type=float, help="budget factor for the grid filter")
    reg.add_argument("--grid-m", type=int, dest="grid_m")
    reg.add_argument("--refine", choices=_REGISTER_CHOICES["refine"])
    reg.add_argument("--icp-thresh", type=float, dest="icp_thresh")
    reg.add_argument("--elc-tol", type=float, dest="elc_tol")
    reg.add_argument("--threads", type=int)
    reg.add_argument("--timing", choices=_REGISTER_CHOICES["timing"])
    reg.set_defaults(func=_cmd_register)

    bg = sub.add_parser("benchgen", help="build a balanced registration set")
    bg.add_argument("--cloud-dir", required=True)
    bg.add_argument("--pose-dir", required=True,
                    help="directory of {seq}.poses files (optional {seq}.times)")
    bg.add_argument("--cloud-pattern", default=DEFAULT_CLOUD_PATTERN)
    bg.add_argument("--out-pairs", required=True, help="pair-list CSV to write")
    bg.add_argument("--out-dist", help="directory for distribution CSVs")
    bg.add_argument("--k", type=int, default=10, help="source frame stride")
    bg.add_argument("--min-overlap", type=float, default=0.2)
    bg.add_argument("--r", type=float, default=0.1,
                    help="selection radius in the normalized motion cube")
    bg.add_argument("--target-count", type=int, default=1000)
    bg.add_argument("--tau", type=float, default=0.6,
                    help="nearest-neighbor gate for the overlap measure")
    bg.add_argument("--voxel", type=float, default=0.3,
                    help="downsample resolution before overlap (0 disables)")
    bg.add_argument("--seed", type=int, default=0)
    bg.set_defaults(func=_cmd_benchgen)

    ev = sub.add_parser("eval", help="aggregate register output")
    ev.add_argument("--records", required=True, help="JSONL from register")
    ev.add_argument("--out-dir", help="directory for failure-ratio CSVs")
    ev.set_defaults(func=_cmd_eval)

    sy = sub.add_parser("synth", help="generate synthetic data files")
    sy.add_argument("mode", choices=("scene", "trajectory"))
    sy.add_argument("--out-dir", required=True)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--n", type=int, default=1000, help="scene: points")
    sy.add_argument("--extent", type=float, default=50.0)
    sy.add_argument("--inlier-fraction", type=float, default=0.3)
    sy.add_argument("--sigma", type=float, default=0.05)
    sy.add_argument("--qc", type=float, default=0.7,
                    help="descriptor quality correlation")
    sy.add_argument("--identity", action="store_true",
                    help="scene: use the identity as the true motion")
    sy.add_argument("--dim", type=int, default=16, help="descriptor width")
    sy.add_argument("--profile", default="straight",
                    choices=("straight", "uturn", "stationary", "random"))
    sy.add_argument("--frames", type=int, default=10)
    sy.add_argument("--spacing", type=float, default=10.0)
    sy.add_argument("--range", type=float, default=50.0)
    sy.add_argument("--sequence-id", default="seq0", dest="sequence_id")
    sy.set_defaults(func=_cmd_synth)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
