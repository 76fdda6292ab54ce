"""Registration error metrics, success accounting, and distribution reports.

Rotation error is the geodesic angle between estimate and ground truth,
``arccos((trace(R_est^T R_gt) - 1) / 2)`` in degrees; translation error is
the Euclidean distance between translation vectors.  A registration
succeeds when RE < 5 degrees and TE < 0.6 meters (both strict).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .geom import EulerAngles, RigidMotion, inverse, to_euler

RE_MAX_DEG = 5.0
TE_MAX_M = 0.6

# histogram edges for the six pair parameters (see set_distribution_report)
DEFAULT_BIN_EDGES: dict[str, NDArray[np.float64]] = {
    "distance": np.arange(0.0, 60.0 + 1e-9, 5.0),
    "overlap": np.arange(0.2, 1.0 + 1e-9, 0.05),
    "yaw": np.arange(-180.0, 180.0 + 1e-9, 15.0),
    "pitch": np.arange(-10.0, 10.0 + 1e-9, 1.0),
    "roll": np.arange(-10.0, 10.0 + 1e-9, 1.0),
    "dt": np.arange(0.0, 60.0 + 1e-9, 5.0),
}


def rotation_error(est_rotation, gt_rotation) -> float:
    """Geodesic angle between two rotations, degrees.

    The trace argument is clamped to [-1, 1]; round-off can push it a few
    ulp outside and arccos would otherwise return NaN.
    """
    est = np.asarray(est_rotation, dtype=np.float64)
    gt = np.asarray(gt_rotation, dtype=np.float64)
    cos_angle = (np.trace(est.T @ gt) - 1.0) / 2.0
    return float(np.rad2deg(np.arccos(np.clip(cos_angle, -1.0, 1.0))))


def translation_error(est_translation, gt_translation) -> float:
    """Euclidean distance between translation vectors, meters."""
    est = np.asarray(est_translation, dtype=np.float64)
    gt = np.asarray(gt_translation, dtype=np.float64)
    return float(np.linalg.norm(est - gt))


def is_success(re_deg: float, te_m: float,
               re_max: float = RE_MAX_DEG, te_max: float = TE_MAX_M) -> bool:
    """Strict thresholds on both errors."""
    return bool(re_deg < re_max and te_m < te_max)


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairRecord:
    """One row of a registration set.

    ``motion`` maps source-frame coordinates into the target frame (the
    quantity a registration algorithm estimates).  ``dt`` is the absolute
    timestamp gap in seconds.
    """

    sequence_id: str
    src: int
    tgt: int
    motion: RigidMotion
    overlap: float
    dt: float

    @property
    def distance(self) -> float:
        """Sensor displacement between the two frames, meters."""
        return float(np.linalg.norm(self.motion.translation))

    def euler(self) -> EulerAngles:
        """Relative attitude of the target frame seen from the source.

        Computed from the inverse of ``motion`` (the target pose expressed
        in source axes), which is the natural sign convention for asking
        "how did the vehicle turn between these frames".
        """
        return to_euler(inverse(self.motion).rotation)

    def parameter(self, name: str) -> float:
        if name == "distance":
            return self.distance
        if name == "overlap":
            return self.overlap
        if name == "dt":
            return self.dt
        if name in ("roll", "pitch", "yaw"):
            return getattr(self.euler(), name)
        raise KeyError(f"unknown pair parameter {name!r}")


@dataclass(frozen=True)
class EvalRecord:
    """Evaluation of one registration attempt at one pipeline stage."""

    pair: PairRecord
    re_deg: float
    te_m: float
    success: bool
    wall_time: float
    stage: str = "coarse"            # coarse | refined


def evaluate(est: RigidMotion, pair: PairRecord, wall_time: float,
             stage: str = "coarse") -> EvalRecord:
    re = rotation_error(est.rotation, pair.motion.rotation)
    te = translation_error(est.translation, pair.motion.translation)
    return EvalRecord(pair, re, te, is_success(re, te), wall_time, stage)


def recall(records) -> float:
    """Fraction of successful records; empty input is an error."""
    records = list(records)
    if not records:
        raise ValueError("recall over zero records is undefined")
    return sum(1 for r in records if r.success) / len(records)


# ---------------------------------------------------------------------------
# histograms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Histogram:
    """Per-bin counts over fixed edges; bin i covers [edges[i], edges[i+1])
    with the last bin closed on the right.  Values outside the range are
    clipped into the boundary bins so totals always equal the input size."""

    edges: NDArray[np.float64]
    counts: NDArray[np.int64]


def _bin_of(values: NDArray[np.float64], edges: NDArray[np.float64]) -> NDArray[np.int64]:
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def histogram(values, edges) -> Histogram:
    values = np.asarray(values, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.float64)
    counts = np.bincount(_bin_of(values, edges), minlength=len(edges) - 1)
    return Histogram(edges, counts.astype(np.int64))


@dataclass(frozen=True)
class FailureHistogram:
    parameter: str
    edges: NDArray[np.float64]
    success_counts: NDArray[np.int64]
    failure_counts: NDArray[np.int64]

    @property
    def failure_ratio(self) -> NDArray[np.float64]:
        """failures / (successes + failures); empty bins report 0."""
        total = self.success_counts + self.failure_counts
        out = np.zeros(len(total))
        np.divide(self.failure_counts, total, out=out, where=total > 0)
        return out


def failure_histogram(records, parameter: str, edges=None) -> FailureHistogram:
    """Bin evaluation records by a pair parameter and split by success."""
    records = list(records)
    if edges is None:
        edges = DEFAULT_BIN_EDGES[parameter]
    edges = np.asarray(edges, dtype=np.float64)
    values = np.array([r.pair.parameter(parameter) for r in records])
    ok = np.array([r.success for r in records], dtype=bool)
    n_bins = len(edges) - 1
    if len(records) == 0:
        zero = np.zeros(n_bins, dtype=np.int64)
        return FailureHistogram(parameter, edges, zero, zero.copy())
    bins = _bin_of(values, edges)
    succ = np.bincount(bins[ok], minlength=n_bins)
    fail = np.bincount(bins[~ok], minlength=n_bins)
    return FailureHistogram(parameter, edges, succ.astype(np.int64),
                            fail.astype(np.int64))


def set_distribution_report(pairs) -> dict[str, Histogram]:
    """Histogram of each motion parameter over a registration set.

    Covers sensor displacement, overlap, relative yaw/pitch/roll, and the
    timestamp gap, using the default edges.  This is the summary used to
    compare how balanced different registration sets are.
    """
    pairs = list(pairs)
    out = {}
    for name, edges in DEFAULT_BIN_EDGES.items():
        values = [p.parameter(name) for p in pairs]
        out[name] = histogram(values, edges)
    return out
