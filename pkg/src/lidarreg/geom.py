"""Rigid motions, Euler angles, voxel downsampling, and exact nearest-neighbor search.

Conventions used throughout the package:

* A point cloud is a float64 array of shape (N, 3), one point per row.
  When a cloud has per-point descriptors, row i of the cloud corresponds
  to row i of the descriptor array.
* A rigid motion maps points as ``x -> R @ x + t`` with R a proper
  rotation (orthonormal, det +1).
* Euler angles are intrinsic Z-Y-X (yaw, then pitch, then roll), degrees.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TypeAlias

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

F64: TypeAlias = np.float64
Points: TypeAlias = NDArray[F64]      # (N, 3)
Vec3: TypeAlias = NDArray[F64]        # (3,)
Mat3: TypeAlias = NDArray[F64]        # (3, 3)

ROTATION_TOL = 1e-9
GIMBAL_MARGIN_DEG = 1e-6


class GimbalLockError(ValueError):
    """Pitch is at +/-90 degrees; yaw and roll are not separable."""


def _as_f64(a) -> NDArray[F64]:
    return np.ascontiguousarray(a, dtype=np.float64)


# ---------------------------------------------------------------------------
# rigid motions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RigidMotion:
    """Proper rigid motion x -> rotation @ x + translation."""

    rotation: Mat3
    translation: Vec3

    @staticmethod
    def identity() -> "RigidMotion":
        return RigidMotion(np.eye(3), np.zeros(3))

    def matrix34(self) -> NDArray[F64]:
        """Row-major 3x4 [R | t] block."""
        return np.hstack([self.rotation, self.translation.reshape(3, 1)])

    @staticmethod
    def from_matrix34(m: NDArray[F64]) -> "RigidMotion":
        m = _as_f64(m).reshape(3, 4)
        return RigidMotion(m[:, :3].copy(), m[:, 3].copy())


def rotation_is_valid(rotation: Mat3, tol: float = ROTATION_TOL) -> bool:
    """True iff ``rotation`` is orthonormal with det +1, both within tol."""
    rotation = _as_f64(rotation)
    if rotation.shape != (3, 3):
        return False
    ortho = np.abs(rotation @ rotation.T - np.eye(3)).max()
    return bool(ortho <= tol and abs(np.linalg.det(rotation) - 1.0) <= tol)


def compose(a: RigidMotion, b: RigidMotion) -> RigidMotion:
    """Motion equivalent to applying b first, then a."""
    return RigidMotion(a.rotation @ b.rotation,
                       a.rotation @ b.translation + a.translation)


def inverse(t: RigidMotion) -> RigidMotion:
    rt = t.rotation.T
    return RigidMotion(rt.copy(), -rt @ t.translation)


def apply(t: RigidMotion, points: Points) -> Points:
    """Apply a rigid motion to one point (3,) or a cloud (N, 3)."""
    points = _as_f64(points)
    return points @ t.rotation.T + t.translation


# ---------------------------------------------------------------------------
# Euler angles, intrinsic Z-Y-X
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EulerAngles:
    """Intrinsic Z-Y-X angles in degrees.

    Ranges: yaw and roll in (-180, 180], pitch in [-90, 90].
    """

    roll: float
    pitch: float
    yaw: float


def from_euler(e: EulerAngles) -> Mat3:
    """Rotation matrix Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    r, p, y = np.deg2rad([e.roll, e.pitch, e.yaw])
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return rz @ ry @ rx


def _wrap_half_open(deg: float) -> float:
    # map into (-180, 180]
    if deg <= -180.0:
        deg += 360.0
    return deg


def to_euler(rotation: Mat3) -> EulerAngles:
    """Extract intrinsic Z-Y-X angles from a rotation matrix.

    Raises
    ------
    GimbalLockError
        When |pitch| is within 1e-6 degrees of 90; yaw and roll are then
        not independently determined and the caller must decide what to do.
    """
    rotation = _as_f64(rotation)
    sp = np.clip(-rotation[2, 0], -1.0, 1.0)
    pitch = np.rad2deg(np.arcsin(sp))
    if abs(pitch) >= 90.0 - GIMBAL_MARGIN_DEG:
        raise GimbalLockError(f"pitch {pitch:.6f} deg is inside the gimbal-lock margin")
    yaw = np.rad2deg(np.arctan2(rotation[1, 0], rotation[0, 0]))
    roll = np.rad2deg(np.arctan2(rotation[2, 1], rotation[2, 2]))
    return EulerAngles(roll=_wrap_half_open(float(roll)),
                       pitch=float(pitch),
                       yaw=_wrap_half_open(float(yaw)))


# ---------------------------------------------------------------------------
# voxel downsampling
# ---------------------------------------------------------------------------

def voxel_downsample(points: Points, voxel_size: float) -> Points:
    """Replace all points in each occupied voxel by their centroid.

    The grid is anchored at the origin: point p falls in voxel
    floor(p / voxel_size).  Output rows are ordered by voxel key, which
    makes the result deterministic and the operation idempotent (each
    centroid stays inside its own voxel).
    """
    if voxel_size <= 0.0:
        raise ValueError(f"voxel_size must be positive, got {voxel_size}")
    points = _as_f64(points).reshape(-1, 3)
    if len(points) == 0:
        return points.copy()
    keys = np.floor(points / voxel_size).astype(np.int64)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inv, points)
    counts = np.bincount(inv, minlength=len(uniq)).astype(np.float64)
    return sums / counts[:, None]


# ---------------------------------------------------------------------------
# exact nearest-neighbor index
# ---------------------------------------------------------------------------

class SpatialIndex:
    """k-d tree wrapper whose answers match a brute-force linear scan exactly.

    Distance ties are broken by the smaller point index, so results are
    reproducible regardless of tree layout.
    """

    def __init__(self, points: Points):
        self._points = _as_f64(points).reshape(-1, 3)
        if len(self._points) == 0:
            raise ValueError("SpatialIndex needs at least one point")
        self._tree = cKDTree(self._points)

    def __len__(self) -> int:
        return len(self._points)

    def _exact_row(self, q: NDArray[F64], k: int, d_hi: float) -> tuple[NDArray[F64], NDArray[np.int64]]:
        # resolve a tie at the k-th distance: pull everything within d_hi
        # and re-rank by (distance, index); the pad keeps boundary points in
        # even if the tree's internal arithmetic rounds the other way
        cand = np.asarray(self._tree.query_ball_point(q, d_hi * (1.0 + 1e-9) + 1e-12),
                          dtype=np.int64)
        d = np.sqrt(np.sum((self._points[cand] - q) ** 2, axis=1))
        order = np.lexsort((cand, d))[:k]
        return d[order], cand[order]

    def knn(self, queries: Points, k: int = 1) -> tuple[NDArray[F64], NDArray[np.int64]]:
        """Distances and indices of the k nearest points for each query row.

        Returns arrays of shape (M, k), rows sorted by (distance, index).
        k is capped at the index size.
        """
        queries = _as_f64(queries)
        single = queries.ndim == 1
        queries = queries.reshape(-1, 3)
        n = len(self._points)
        k = min(k, n)
        probe = min(k + 1, n)
        d, i = self._tree.query(queries, k=probe)
        d = d.reshape(len(queries), probe)
        i = i.reshape(len(queries), probe)
        # recompute distances the same way the brute-force scan would, then
        # re-sort so equal distances come out in index order
        d = np.sqrt(np.sum((self._points[i] - queries[:, None, :]) ** 2, axis=2))
        order = np.lexsort((i, d), axis=1)
        d = np.take_along_axis(d, order, axis=1)
        i = np.take_along_axis(i, order, axis=1)
        out_d, out_i = d[:, :k].copy(), i[:, :k].copy()
        if probe > k:
            # a tie straddling the k boundary needs the full candidate set
            tied = d[:, k - 1] >= d[:, k]
            for row in np.nonzero(tied)[0]:
                out_d[row], out_i[row] = self._exact_row(queries[row], k, d[row, k - 1])
        if single:
            return out_d[0], out_i[0]
        return out_d, out_i

    def nearest(self, queries: Points) -> tuple[NDArray[F64], NDArray[np.int64]]:
        """Distance and index of the single nearest point per query row."""
        d, i = self.knn(np.atleast_2d(_as_f64(queries)), k=1)
        return d[:, 0], i[:, 0]

    def radius(self, query: Points, r: float) -> NDArray[np.int64]:
        """Indices of all points within distance r (inclusive), ascending."""
        q = _as_f64(query).reshape(3)
        idx = np.asarray(self._tree.query_ball_point(q, r), dtype=np.int64)
        idx.sort()
        return idx
