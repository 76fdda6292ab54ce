"""End-to-end registration of one pair: match, filter, estimate, refine.

This is the shared orchestration used by the command-line tool and the
demo scripts.  Timing covers the registration work itself -- matching,
filtering, robust estimation, and refinement -- and never file loading,
which callers do beforehand.  ``refined_time`` is cumulative, so it can be
compared directly against ``coarse_time``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from time import perf_counter

from .geom import Points, RigidMotion
from .gpf import GpfConfig, NoMnnPairsError, gpf
from .icp import IcpConfig, IcpResult, icp_refine
from .match import Correspondences, match_features, mnn_filter
from .ransac import RansacConfig, RegistrationResult, ransac_register

__all__ = ["PipelineConfig", "PairResult", "register_pair", "run_pipeline"]

FILTERS = ("none", "mnn", "gpf")
REFINERS = ("none", "icp")


@dataclass(frozen=True)
class PipelineConfig:
    correspondence_filter: str = "gpf"
    refine: str = "icp"
    gpf: GpfConfig = field(default_factory=GpfConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    icp: IcpConfig = field(default_factory=IcpConfig)

    def __post_init__(self) -> None:
        if self.correspondence_filter not in FILTERS:
            raise ValueError(f"correspondence_filter must be one of {FILTERS}")
        if self.refine not in REFINERS:
            raise ValueError(f"refine must be one of {REFINERS}")


@dataclass(frozen=True)
class PairResult:
    """Everything a caller needs to report one registered pair."""

    coarse: RigidMotion
    refined: RigidMotion | None
    ransac: RegistrationResult
    icp: IcpResult | None
    corrs_total: int
    corrs_kept: int
    coarse_time: float
    refined_time: float | None

    @property
    def final(self) -> RigidMotion:
        return self.refined if self.refined is not None else self.coarse


def _filtered(src_points: Points, corrs: Correspondences,
              cfg: PipelineConfig) -> Correspondences:
    if cfg.correspondence_filter == "mnn":
        return mnn_filter(corrs)
    if cfg.correspondence_filter == "gpf":
        try:
            return gpf(src_points, corrs, cfg.gpf)
        except NoMnnPairsError:
            warnings.warn("no mutual matches to size the filter budget; "
                          "keeping all correspondences", RuntimeWarning,
                          stacklevel=3)
            return corrs
    return corrs


def run_pipeline(src_points: Points, dst_points: Points,
                 corrs: Correspondences, cfg: PipelineConfig) -> PairResult:
    """Register already-matched correspondences (filter, estimate, refine)."""
    t0 = perf_counter()
    kept = _filtered(src_points, corrs, cfg)
    est = ransac_register(src_points, dst_points, kept, cfg.ransac)
    coarse_time = perf_counter() - t0

    refined = None
    icp_result = None
    refined_time = None
    if cfg.refine == "icp":
        t1 = perf_counter()
        icp_result = icp_refine(src_points, dst_points, est.motion, cfg.icp)
        refined = icp_result.motion
        refined_time = coarse_time + (perf_counter() - t1)

    return PairResult(coarse=est.motion, refined=refined, ransac=est,
                      icp=icp_result, corrs_total=len(corrs),
                      corrs_kept=len(kept), coarse_time=coarse_time,
                      refined_time=refined_time)


def register_pair(src_points: Points, dst_points: Points,
                  src_desc, dst_desc, cfg: PipelineConfig) -> PairResult:
    """Full pipeline from descriptors: feature matching included in timing."""
    t0 = perf_counter()
    corrs = match_features(src_desc, dst_desc)
    match_time = perf_counter() - t0
    out = run_pipeline(src_points, dst_points, corrs, cfg)
    refined_time = None if out.refined_time is None \
        else out.refined_time + match_time
    return PairResult(coarse=out.coarse, refined=out.refined,
                      ransac=out.ransac, icp=out.icp,
                      corrs_total=out.corrs_total, corrs_kept=out.corrs_kept,
                      coarse_time=out.coarse_time + match_time,
                      refined_time=refined_time)
