"""Balanced registration-pair selection from posed point-cloud sequences.

Building a registration set from driving sequences in the obvious way
(adjacent frames) produces almost exclusively small, forward motions.  The
selector here counteracts that: candidate pairs are pooled from each
sequence, their relative motions are normalized into the unit 6-cube
(x, y, z offsets and roll, pitch, yaw), and pairs are then accepted by
rejection-sampling uniform locations in that cube.  The accepted set is
close to uniform over whatever motion range the pool actually covers.

Overlap between two frames is the fraction of source points whose nearest
neighbor in the target cloud, after applying the ground-truth alignment,
lies within ``overlap_tau`` meters.  Clouds are expected to be voxel
downsampled (0.3 m) beforehand so that point density does not skew the
measure; this is a documented convention, not an enforced check.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .geom import F64, Points, RigidMotion, SpatialIndex, apply, compose, inverse, to_euler
from .metrics import PairRecord

__all__ = [
    "PosedFrame",
    "MotionDescriptor6",
    "CandidatePair",
    "SelectorConfig",
    "SelectionResult",
    "alignment_motion",
    "motion_descriptor",
    "overlap",
    "build_candidate_pool",
    "normalize_motions",
    "select_balanced",
    "split_by_sequence",
]


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PosedFrame:
    """One cloud of a sequence with its sensor-to-world pose."""

    sequence_id: str
    frame_index: int
    timestamp: float
    pose: RigidMotion
    cloud: Points


@dataclass(frozen=True)
class MotionDescriptor6:
    """Relative motion source -> target: offsets in meters, angles in degrees."""

    dx: float
    dy: float
    dz: float
    roll: float
    pitch: float
    yaw: float

    def as_array(self) -> NDArray[F64]:
        return np.array([self.dx, self.dy, self.dz,
                         self.roll, self.pitch, self.yaw], dtype=np.float64)


@dataclass(frozen=True)
class CandidatePair:
    """Pool entry: a qualifying (source, target) frame pair and its stats."""

    src: PosedFrame
    tgt: PosedFrame
    motion: MotionDescriptor6
    overlap: float
    dt: float
    distance: float


@dataclass(frozen=True)
class SelectorConfig:
    k: int = 10
    min_overlap: float = 0.2
    r: float = 0.1
    target_count: int = 1000
    overlap_tau: float = 0.6
    seed: int = 0
    attempt_factor: int = 1000

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0.0 < self.min_overlap < 1.0:
            raise ValueError("min_overlap must lie strictly between 0 and 1")
        if not 0.0 < self.r <= 1.0:
            raise ValueError("r must lie in (0, 1]")
        if self.target_count < 1:
            raise ValueError("target_count must be at least 1")
        if self.overlap_tau <= 0.0:
            raise ValueError("overlap_tau must be positive")
        if self.attempt_factor < 1:
            raise ValueError("attempt_factor must be at least 1")


@dataclass(frozen=True)
class SelectionResult:
    """Selected pairs plus the uniform draws that accepted them.

    ``draws[i]`` is the location in the normalized cube whose neighborhood
    produced ``records[i]``; every record's normalized motion lies within
    the selector radius of its draw.  ``exhausted`` is set when the attempt
    budget ran out before ``target_count`` pairs were found.
    """

    records: tuple[PairRecord, ...]
    draws: NDArray[F64]
    attempts: int
    exhausted: bool


# ---------------------------------------------------------------------------
# pair geometry
# ---------------------------------------------------------------------------

def alignment_motion(pose_src: RigidMotion, pose_tgt: RigidMotion) -> RigidMotion:
    """Motion mapping source-frame coordinates into the target frame."""
    return compose(inverse(pose_tgt), pose_src)


def motion_descriptor(pose_src: RigidMotion, pose_tgt: RigidMotion) -> MotionDescriptor6:
    """Six-axis description of how the sensor moved from source to target."""
    rel = compose(inverse(pose_src), pose_tgt)
    e = to_euler(rel.rotation)
    return MotionDescriptor6(dx=float(rel.translation[0]),
                             dy=float(rel.translation[1]),
                             dz=float(rel.translation[2]),
                             roll=e.roll, pitch=e.pitch, yaw=e.yaw)


def overlap(src: Points, tgt: Points, gt: RigidMotion, tau: float) -> float:
    """Fraction of source points with a target neighbor within tau after gt.

    Asymmetric by construction (source side only).
    """
    src = np.asarray(src, dtype=np.float64)
    tgt = np.asarray(tgt, dtype=np.float64)
    if len(src) == 0 or len(tgt) == 0:
        raise ValueError("overlap needs two nonempty clouds")
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    d, _ = SpatialIndex(tgt).nearest(apply(gt, src))
    return float(np.mean(d <= tau))


# ---------------------------------------------------------------------------
# candidate pool
# ---------------------------------------------------------------------------

def _world_bound(frame: PosedFrame) -> tuple[NDArray[F64], float]:
    # centroid and enclosing radius of the cloud in world coordinates
    pts = apply(frame.pose, frame.cloud)
    center = pts.mean(axis=0)
    radius = float(np.sqrt(np.max(np.sum((pts - center) ** 2, axis=1))))
    return center, radius


def build_candidate_pool(sequences, cfg: SelectorConfig) -> list[CandidatePair]:
    """One candidate per source frame: every k-th frame of each sequence
    becomes a source, and a target is drawn uniformly at random among the
    frames of the same sequence whose overlap with it exceeds min_overlap.
    Sources with no qualifying target are skipped.
    """
    rng = np.random.default_rng([cfg.seed, 0])
    pool: list[CandidatePair] = []
    for frames in sequences:
        frames = list(frames)
        times = [f.timestamp for f in frames]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("timestamps must be nondecreasing within a sequence")
        if len(frames) < 2:
            continue
        bounds = [_world_bound(f) for f in frames]
        for si in range(0, len(frames), cfg.k):
            src = frames[si]
            c_src, r_src = bounds[si]
            qualifying: list[tuple[PosedFrame, float]] = []
            for ti, tgt in enumerate(frames):
                if ti == si:
                    continue
                c_tgt, r_tgt = bounds[ti]
                # clouds whose world-frame bounding spheres clear tau apart
                # cannot overlap at all
                if np.linalg.norm(c_src - c_tgt) > r_src + r_tgt + cfg.overlap_tau:
                    continue
                ov = overlap(src.cloud, tgt.cloud,
                             alignment_motion(src.pose, tgt.pose), cfg.overlap_tau)
                if ov > cfg.min_overlap:
                    qualifying.append((tgt, ov))
            if not qualifying:
                continue
            tgt, ov = qualifying[int(rng.integers(len(qualifying)))]
            desc = motion_descriptor(src.pose, tgt.pose)
            pool.append(CandidatePair(
                src=src, tgt=tgt, motion=desc, overlap=ov,
                dt=abs(tgt.timestamp - src.timestamp),
                distance=float(np.linalg.norm(desc.as_array()[:3]))))
    return pool


def normalize_motions(pool) -> tuple[NDArray[F64], NDArray[F64]]:
    """Map pool motions into [0,1]^6 per axis; constant axes map to 0.5.

    Returns (coords, bounds) where bounds[axis] = (min, max) permits the
    inverse map on non-degenerate axes.
    """
    if len(pool) == 0:
        raise ValueError("cannot normalize an empty pool")
    raw = np.stack([c.motion.as_array() for c in pool])
    lo = raw.min(axis=0)
    hi = raw.max(axis=0)
    span = hi - lo
    safe = np.where(span > 0.0, span, 1.0)
    coords = np.where(span > 0.0, (raw - lo) / safe, 0.5)
    return coords, np.stack([lo, hi], axis=1)


# ---------------------------------------------------------------------------
# balanced selection
# ---------------------------------------------------------------------------

def _record_of(cand: CandidatePair) -> PairRecord:
    return PairRecord(sequence_id=cand.src.sequence_id,
                      src=cand.src.frame_index,
                      tgt=cand.tgt.frame_index,
                      motion=alignment_motion(cand.src.pose, cand.tgt.pose),
                      overlap=cand.overlap,
                      dt=cand.dt)


def select_balanced(pool, cfg: SelectorConfig) -> SelectionResult:
    """Rejection-sample motions uniformly over the normalized cube.

    Each attempt draws a uniform location; if no unselected candidate lies
    within radius r of it the draw is discarded, otherwise one candidate
    within r is selected and removed from the pool.  Among the in-radius
    candidates the pick goes to a sequence with the fewest selections so
    far (sequence ties broken uniformly at random, then uniformly among
    that sequence's candidates), so no single sequence dominates the set.
    """
    pool = [c for c in pool if c.overlap > cfg.min_overlap]
    if len(pool) == 0:
        raise ValueError("candidate pool is empty")
    coords, _ = normalize_motions(pool)
    rng = np.random.default_rng([cfg.seed, 1])
    remaining = np.ones(len(pool), dtype=bool)
    seq_of = np.array([c.src.sequence_id for c in pool])
    counts: dict[str, int] = {s: 0 for s in seq_of}

    records: list[PairRecord] = []
    draws: list[NDArray[F64]] = []
    budget = cfg.attempt_factor * cfg.target_count
    attempts = 0
    while len(records) < cfg.target_count and attempts < budget and remaining.any():
        attempts += 1
        u = rng.random(6)
        d2 = np.sum((coords - u) ** 2, axis=1)
        near = np.flatnonzero(remaining & (d2 <= cfg.r * cfg.r))
        if near.size == 0:
            continue
        near_counts = np.array([counts[s] for s in seq_of[near]])
        tied = near[near_counts == near_counts.min()]
        tied_seqs = np.unique(seq_of[tied])
        seq = tied_seqs[int(rng.integers(tied_seqs.size))]
        members = tied[seq_of[tied] == seq]
        pick = int(members[int(rng.integers(members.size))])
        remaining[pick] = False
        counts[str(seq_of[pick])] += 1
        records.append(_record_of(pool[pick]))
        draws.append(u)

    exhausted = len(records) < cfg.target_count
    if exhausted:
        warnings.warn(
            f"selection stopped at {len(records)}/{cfg.target_count} pairs "
            f"after {attempts} attempts", RuntimeWarning, stacklevel=2)
    draw_arr = np.stack(draws) if draws else np.zeros((0, 6), dtype=np.float64)
    return SelectionResult(records=tuple(records), draws=draw_arr,
                           attempts=attempts, exhausted=exhausted)


def split_by_sequence(records, ratios, seed: int = 0) -> tuple[list[PairRecord], ...]:
    """Partition records into splits by whole-sequence assignment.

    Sequences are shuffled, then greedily assigned to whichever split is
    furthest below its requested share of records.  No sequence appears in
    two splits.
    """
    records = list(records)
    ratios = np.asarray(ratios, dtype=np.float64)
    if ratios.ndim != 1 or len(ratios) == 0 or np.any(ratios < 0) or ratios.sum() <= 0:
        raise ValueError("ratios must be nonnegative with a positive sum")
    shares = ratios / ratios.sum()

    by_seq: dict[str, list[PairRecord]] = {}
    for r in records:
        by_seq.setdefault(r.sequence_id, []).append(r)
    names = sorted(by_seq)
    np.random.default_rng(seed).shuffle(names)

    total = max(len(records), 1)
    splits: tuple[list[PairRecord], ...] = tuple([] for _ in shares)
    for name in names:
        deficit = [shares[i] - len(splits[i]) / total for i in range(len(shares))]
        splits[int(np.argmax(deficit))].extend(by_seq[name])
    return splits
