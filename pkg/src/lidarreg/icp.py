"""Point-to-point ICP refinement of a coarse rigid motion.

Each iteration transforms the source cloud by the current motion, pairs
every source point with its nearest target point, drops pairs farther
than the gate threshold, and re-fits a rigid motion on what remains.
An update that would raise the gated RMSE is rejected and the loop stops,
so the recorded RMSE sequence is nonincreasing and the returned motion is
never worse than the initialization under the gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geom import Points, RigidMotion, SpatialIndex, apply
from .ransac import SAMPLE_SIZE, DegenerateSampleError, kabsch


@dataclass(frozen=True)
class IcpConfig:
    threshold: float = 0.6            # pairing gate, meters
    max_iterations: int = 30
    rmse_delta_tol: float = 1e-6
    transform_delta_tol: float = 1e-6

    def __post_init__(self):
        if self.threshold <= 0.0:
            raise ValueError("threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class IcpResult:
    """``no_overlap`` flags an initialization with zero gated pairs; the
    input motion is returned unchanged and rmse is infinite."""

    motion: RigidMotion
    rmse: float
    iterations: int
    converged: bool
    no_overlap: bool
    rmse_history: tuple


def _gated_rmse(d: np.ndarray, gate: np.ndarray) -> float:
    return float(np.sqrt(np.mean(d[gate] ** 2)))


def icp_refine(src_points: Points, dst_points: Points, init: RigidMotion,
               cfg: IcpConfig = IcpConfig()) -> IcpResult:
    """Refine ``init`` so the source cloud lines up with the target cloud.

    Stops on the iteration cap, on convergence (RMSE change below
    rmse_delta_tol and Frobenius change of the update below
    transform_delta_tol), or as soon as an update stops helping.
    """
    src = np.asarray(src_points, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst_points, dtype=np.float64).reshape(-1, 3)
    if len(src) == 0 or len(dst) == 0:
        raise ValueError("both clouds must be non-empty")
    index = SpatialIndex(dst)

    cur = init
    d, nn = index.nearest(apply(cur, src))
    gate = d <= cfg.threshold
    if not gate.any():
        return IcpResult(init, math.inf, 0, False, True, ())
    rmse = _gated_rmse(d, gate)
    history = [rmse]
    converged = False
    iterations = 0

    for _ in range(cfg.max_iterations):
        if int(gate.sum()) < SAMPLE_SIZE:
            break
        iterations += 1
        try:
            new = kabsch(src[gate], dst[nn[gate]])
        except DegenerateSampleError:
            break
        d, nn = index.nearest(apply(new, src))
        new_gate = d <= cfg.threshold
        if not new_gate.any():
            break
        new_rmse = _gated_rmse(d, new_gate)
        change = math.sqrt(np.sum((new.rotation - cur.rotation) ** 2)
                           + np.sum((new.translation - cur.translation) ** 2))
        within_tol = abs(new_rmse - rmse) < cfg.rmse_delta_tol \
            and change < cfg.transform_delta_tol
        if new_rmse > rmse:
            # an update that stops helping ends the loop; if it moved less
            # than the tolerances we were already at the fixed point
            converged = within_tol
            break
        cur, gate, history = new, new_gate, history + [new_rmse]
        rmse = new_rmse
        if within_tol:
            converged = True
            break

    return IcpResult(cur, rmse, iterations, converged, False, tuple(history))
