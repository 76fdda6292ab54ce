"""Exact nearest-neighbor matching in descriptor space.

Each source descriptor row is matched to its nearest target row by L2
distance.  Alongside the match we keep the two quality signals used by
the downstream filtering and sampling stages:

* ratio: distance to the second-nearest target over distance to the
  nearest.  Always >= 1; large means the match is discriminative.
* is_mnn: the pair is a mutual nearest neighbor (the source row is also
  the nearest source to its matched target row).

Distance ties are broken toward the lowest row index, which keeps the
output reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree


@dataclass(frozen=True)
class Correspondences:
    """One putative match per source point, stored column-wise.

    All arrays share the same length.  ``src`` and ``dst`` are row indices
    into the source and target clouds (equivalently descriptor arrays).
    """

    src: NDArray[np.int64]
    dst: NDArray[np.int64]
    feat_dist: NDArray[np.float64]
    ratio: NDArray[np.float64]
    is_mnn: NDArray[np.bool_]

    def __len__(self) -> int:
        return len(self.src)

    def take(self, indices) -> "Correspondences":
        """Subset (or reorder) by positional indices."""
        idx = np.asarray(indices)
        return Correspondences(self.src[idx], self.dst[idx], self.feat_dist[idx],
                               self.ratio[idx], self.is_mnn[idx])


def feature_distance(p_row: NDArray[np.float64], q_row: NDArray[np.float64]) -> float:
    """L2 distance between two descriptor rows."""
    p = np.asarray(p_row, dtype=np.float64)
    q = np.asarray(q_row, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"descriptor shapes differ: {p.shape} vs {q.shape}")
    return float(np.sqrt(np.sum((p - q) ** 2)))


def _nearest_two(tree: cKDTree, rows: NDArray[np.float64], queries: NDArray[np.float64]):
    """(d1, i1, d2) per query with ties resolved toward the lowest row index.

    d2 is the second-smallest distance (it may equal d1).
    """
    k = min(3, len(rows))
    d, i = tree.query(queries, k=k)
    d = d.reshape(len(queries), k)
    i = i.reshape(len(queries), k)
    # recompute with the same arithmetic a linear scan would use, then order
    # equal distances by index
    d = np.sqrt(np.sum((rows[i] - queries[:, None, :]) ** 2, axis=2))
    order = np.lexsort((i, d), axis=1)
    d = np.take_along_axis(d, order, axis=1)
    i = np.take_along_axis(i, order, axis=1)
    # a three-way tie spilling past the probe window could still hide a lower
    # index; resolve those rows against the full scan
    if k == 3:
        suspect = np.nonzero(d[:, 0] == d[:, 2])[0]
        for row in suspect:
            dr = np.sqrt(np.sum((rows - queries[row]) ** 2, axis=1))
            full = np.lexsort((np.arange(len(rows)), dr))
            i[row, :2] = full[:2]
            d[row, :2] = dr[full[:2]]
    return d[:, 0], i[:, 0], d[:, 1]


def match_features(src_desc: NDArray[np.float64], dst_desc: NDArray[np.float64]) -> Correspondences:
    """Match every source descriptor row to its nearest target row.

    Parameters
    ----------
    src_desc, dst_desc:
        Arrays of shape (N, D) and (M, D).  Both need at least two rows;
        the ratio is undefined without a second neighbor.

    Returns
    -------
    Correspondences in source-row order, one entry per source row.
    """
    src_desc = np.ascontiguousarray(src_desc, dtype=np.float64)
    dst_desc = np.ascontiguousarray(dst_desc, dtype=np.float64)
    if src_desc.ndim != 2 or dst_desc.ndim != 2:
        raise ValueError("descriptor arrays must be 2-D")
    if src_desc.shape[1] != dst_desc.shape[1]:
        raise ValueError(
            f"descriptor dims differ: {src_desc.shape[1]} vs {dst_desc.shape[1]}")
    if len(src_desc) < 2 or len(dst_desc) < 2:
        raise ValueError("need at least two descriptors on each side")

    fwd = cKDTree(dst_desc)
    d1, nearest_dst, d2 = _nearest_two(fwd, dst_desc, src_desc)

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = d2 / d1
    ratio[(d1 == 0.0) & (d2 == 0.0)] = 1.0   # identical rows: no preference signal

    rev = cKDTree(src_desc)
    _, nearest_src, _ = _nearest_two(rev, src_desc, dst_desc)
    is_mnn = nearest_src[nearest_dst] == np.arange(len(src_desc))

    return Correspondences(
        src=np.arange(len(src_desc), dtype=np.int64),
        dst=nearest_dst.astype(np.int64),
        feat_dist=d1,
        ratio=ratio,
        is_mnn=is_mnn,
    )


def mnn_filter(corrs: Correspondences) -> Correspondences:
    """Keep only mutual-nearest-neighbor pairs, preserving order."""
    return corrs.take(np.nonzero(corrs.is_mnn)[0])
