"""Robust rigid-motion estimation from putative correspondences.

The estimator is a RANSAC loop with three optional accelerators that can
be toggled independently:

* progressive sampling: minimal samples are drawn from the best-ranked
  correspondences first (mutual pairs, then high ratio), widening toward
  uniform sampling over everything as iterations accumulate;
* sample rejection: a cheap test discards hopeless samples before model
  scoring, either by edge-length compatibility of the sampled triangle
  (elc) or by a sequential probability ratio test on the residuals (sprt);
* local optimization: each time a new best model appears, a few rounds of
  non-minimal re-fitting with an annealed threshold polish it.

Scoring counts correspondences whose post-transform residual is within
``inlier_threshold``.  With a fixed seed the whole run is deterministic;
the local optimizer draws from its own random stream, so toggling it does
not change which minimal samples are drawn.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaln

from .geom import Points, RigidMotion
from .gpf import priority_order
from .match import Correspondences

SAMPLE_SIZE = 3


class DegenerateSampleError(ValueError):
    """The sampled points do not determine a unique rotation."""


# ---------------------------------------------------------------------------
# least-squares rigid fit
# ---------------------------------------------------------------------------

def kabsch(src_pts: Points, dst_pts: Points, weights=None) -> RigidMotion:
    """Least-squares rigid motion mapping src_pts onto dst_pts.

    Minimizes sum_i w_i ||R p_i + t - q_i||^2 via the SVD of the weighted
    cross-covariance, with the reflection case corrected so the result is
    always a proper rotation.

    Raises
    ------
    DegenerateSampleError
        When the centered source points span less than two dimensions
        (coincident or collinear sample); the rotation is then not unique.
    """
    p = np.asarray(src_pts, dtype=np.float64).reshape(-1, 3)
    q = np.asarray(dst_pts, dtype=np.float64).reshape(-1, 3)
    if len(p) != len(q):
        raise ValueError(f"point counts differ: {len(p)} vs {len(q)}")
    if len(p) < SAMPLE_SIZE:
        raise ValueError(f"need at least {SAMPLE_SIZE} point pairs, got {len(p)}")
    if weights is None:
        w = np.full(len(p), 1.0 / len(p))
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(p),) or np.any(w < 0.0) or w.sum() <= 0.0:
            raise ValueError("weights must be nonnegative with positive sum")
        w = w / w.sum()

    cp = w @ p
    cq = w @ q
    a = p - cp
    b = q - cq
    h = a.T @ (b * w[:, None])
    u, s, vt = np.linalg.svd(h)
    if s[1] <= 1e-9 * max(s[0], 1e-300):
        raise DegenerateSampleError("sample covariance has rank < 2")
    r = vt.T @ u.T
    if np.linalg.det(r) < 0.0:
        vt[-1, :] *= -1.0
        r = vt.T @ u.T
    return RigidMotion(r, cq - r @ cp)


# ---------------------------------------------------------------------------
# scoring and stopping
# ---------------------------------------------------------------------------

def _residuals(motion: RigidMotion, a: Points, b: Points) -> NDArray[np.float64]:
    d = a @ motion.rotation.T + motion.translation - b
    return np.sqrt(np.sum(d * d, axis=1))


def count_inliers(motion: RigidMotion, corrs: Correspondences,
                  src_points: Points, dst_points: Points,
                  threshold: float) -> tuple[int, NDArray[np.bool_]]:
    """Inlier count and mask: residual under ``motion`` within threshold."""
    a = np.asarray(src_points, dtype=np.float64)[corrs.src]
    b = np.asarray(dst_points, dtype=np.float64)[corrs.dst]
    mask = _residuals(motion, a, b) <= threshold
    return int(mask.sum()), mask


def required_iterations(confidence: float, inlier_fraction: float,
                        sample_size: int = SAMPLE_SIZE,
                        max_iterations: int = 1_000_000) -> int:
    """Iterations needed to hit an all-inlier sample with given confidence.

    ceil(log(1 - confidence) / log(1 - w^m)), clamped to [1, max_iterations].
    The boundary fractions behave sensibly: w=1 gives 1, w=0 gives the cap.
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    if not 0.0 <= inlier_fraction <= 1.0:
        raise ValueError(f"inlier fraction must be in [0, 1], got {inlier_fraction}")
    if inlier_fraction >= 1.0:
        return 1
    p_good = inlier_fraction ** sample_size
    if p_good <= 0.0:
        return max_iterations
    denom = math.log1p(-p_good)
    if denom == 0.0:
        return max_iterations
    need = math.ceil(math.log1p(-confidence) / denom)
    return int(min(max(need, 1), max_iterations))


# ---------------------------------------------------------------------------
# sample rejection: edge-length compatibility
# ---------------------------------------------------------------------------

_EDGE_I = np.array([0, 0, 1])
_EDGE_J = np.array([1, 2, 2])


def elc_check(src_tri: Points, dst_tri: Points, tolerance: float) -> bool:
    """True iff all three edge lengths agree within ``tolerance`` meters.

    A rigid motion preserves edge lengths, so a sample whose triangles
    disagree cannot be all-inlier and is not worth fitting.
    """
    p = np.asarray(src_tri, dtype=np.float64).reshape(3, 3)
    q = np.asarray(dst_tri, dtype=np.float64).reshape(3, 3)
    dp = np.sqrt(np.sum((p[_EDGE_I] - p[_EDGE_J]) ** 2, axis=1))
    dq = np.sqrt(np.sum((q[_EDGE_I] - q[_EDGE_J]) ** 2, axis=1))
    return bool(np.all(np.abs(dp - dq) <= tolerance))


# ---------------------------------------------------------------------------
# sample rejection: sequential probability ratio test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SprtState:
    """Running SPRT parameters.

    epsilon is the expected inlier rate under a good model, delta the rate
    under a bad one; threshold is the likelihood-ratio decision bound A.
    """

    epsilon: float
    delta: float
    threshold: float


def sprt_threshold(epsilon: float, delta: float,
                   t_m: float = 100.0, m_s: float = 1.0) -> float:
    """Decision bound A for the given error rates.

    Standard design: with C = (1-delta)·log((1-delta)/(1-epsilon))
    + delta·log(delta/epsilon) and K = t_m·C/m_s + 1, A is the unique
    fixed point of A = K + log(A), found by iteration.  t_m is the model
    fit cost in point-verification units, m_s the models per sample.
    """
    if not 0.0 < delta < epsilon < 1.0:
        raise ValueError(f"need 0 < delta < epsilon < 1, got {delta}, {epsilon}")
    c = (1.0 - delta) * math.log((1.0 - delta) / (1.0 - epsilon)) \
        + delta * math.log(delta / epsilon)
    k = t_m * c / m_s + 1.0
    a = k
    for _ in range(100):
        a_next = k + math.log(a)
        if abs(a_next - a) < 1.5e-8:
            return a_next
        a = a_next
    return a


def sprt_initial(epsilon: float = 0.2, delta: float = 0.05) -> SprtState:
    return SprtState(epsilon, delta, sprt_threshold(epsilon, delta))


def sprt_update_epsilon(state: SprtState, inlier_fraction: float) -> SprtState:
    """Re-estimate epsilon from a new best model; delta stays fixed.

    Epsilon only grows, and is kept strictly inside (delta, 1).
    """
    eps = min(max(state.epsilon, inlier_fraction), 0.999)
    if eps == state.epsilon:
        return state
    return SprtState(eps, state.delta, sprt_threshold(eps, state.delta))


@dataclass(frozen=True)
class SprtDecision:
    accepted: bool
    inlier_count: int
    inlier_mask: NDArray[np.bool_]
    points_tested: int


def _sprt_gathered(motion: RigidMotion, a: Points, b: Points,
                   threshold: float, state: SprtState) -> SprtDecision:
    mask = _residuals(motion, a, b) <= threshold
    log_in = math.log(state.delta / state.epsilon)
    log_out = math.log((1.0 - state.delta) / (1.0 - state.epsilon))
    log_lambda = np.cumsum(np.where(mask, log_in, log_out))
    over = log_lambda > math.log(state.threshold)
    if over.any():
        j = int(np.argmax(over))
        return SprtDecision(False, int(mask[:j + 1].sum()), mask, j + 1)
    return SprtDecision(True, int(mask.sum()), mask, len(mask))


def sprt_evaluate(motion: RigidMotion, corrs: Correspondences,
                  src_points: Points, dst_points: Points,
                  threshold: float, state: SprtState) -> SprtDecision:
    """Run the SPRT over the correspondences in order.

    The likelihood ratio is multiplied by delta/epsilon on each inlier and
    (1-delta)/(1-epsilon) on each outlier; the model is rejected as soon
    as the ratio exceeds the decision bound.  Decisions are identical to
    the one-point-at-a-time formulation.
    """
    a = np.asarray(src_points, dtype=np.float64)[corrs.src]
    b = np.asarray(dst_points, dtype=np.float64)[corrs.dst]
    return _sprt_gathered(motion, a, b, threshold, state)


# ---------------------------------------------------------------------------
# progressive sampler
# ---------------------------------------------------------------------------

def _distinct(rng: np.random.Generator, n: int, k: int) -> NDArray[np.int64]:
    # rejection sampling is O(k) when n >> k; fall back to a shuffle when
    # the sample covers a big share of the population
    if 3 * k >= n:
        return rng.permutation(n)[:k]
    while True:
        pick = rng.integers(0, n, size=k)
        if len(np.unique(pick)) == k:
            return pick


class ProsacSampler:
    """Progressive minimal-sample schedule over quality-ranked input.

    Correspondences must already be sorted best-first.  The t-th sample is
    drawn from the top n(t) entries, where the growth of n(t) follows the
    standard schedule: growth iteration counts T'_n start at 1 for n = m
    and advance by ceil(T_{n+1} - T_n) with T_n = t_total·C(n,m)/C(N,m).
    While growing, the sample always contains the n(t)-th ranked entry.
    After T'_N the schedule is plain uniform sampling over everything.
    """

    def __init__(self, n_corrs: int, sample_size: int = SAMPLE_SIZE,
                 t_total: int = 200_000):
        if n_corrs < sample_size:
            raise ValueError(f"need at least {sample_size} correspondences")
        self.n = n_corrs
        self.m = sample_size
        ns = np.arange(sample_size, n_corrs + 1, dtype=np.float64)
        log_c = gammaln(ns + 1) - gammaln(sample_size + 1) - gammaln(ns - sample_size + 1)
        t_n = np.exp(math.log(t_total) + log_c - log_c[-1])
        grow = np.maximum(np.ceil(np.diff(t_n)), 1.0).astype(np.int64)
        tprime = np.empty(len(ns), dtype=np.int64)
        tprime[0] = 1
        np.cumsum(grow, out=tprime[1:])
        tprime[1:] += 1
        self._tprime = tprime

    def subset_size(self, t: int) -> int:
        """n(t): how many top-ranked entries the t-th sample draws from."""
        idx = int(np.searchsorted(self._tprime, t, side="left"))
        if idx >= len(self._tprime):
            return self.n
        return self.m + idx

    def sample(self, t: int, rng: np.random.Generator) -> NDArray[np.int64]:
        """Ranked positions of the t-th minimal sample (t counts from 1)."""
        if t > int(self._tprime[-1]):
            return _distinct(rng, self.n, self.m)
        n_t = self.subset_size(t)
        if n_t == self.m:
            return np.arange(self.m, dtype=np.int64)
        rest = _distinct(rng, n_t - 1, self.m - 1)
        return np.concatenate([[n_t - 1], rest]).astype(np.int64)


# ---------------------------------------------------------------------------
# local optimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hypothesis:
    motion: RigidMotion
    inlier_count: int
    inlier_mask: NDArray[np.bool_]


_LO_ANNEAL = np.linspace(2.0, 1.0, 4)
_LO_MAX_SAMPLE = 14
_LO_MIN_SAMPLE = 4


def _lo_step(best: Hypothesis, a: Points, b: Points, threshold: float,
             inner_iters: int, rng: np.random.Generator) -> Hypothesis:
    """Polish a hypothesis by non-minimal re-fitting with annealed gating."""
    cur = best
    for _ in range(inner_iters):
        inliers = np.nonzero(cur.inlier_mask)[0]
        if len(inliers) < _LO_MIN_SAMPLE:
            break
        size = min(_LO_MAX_SAMPLE, max(_LO_MIN_SAMPLE, len(inliers) // 2))
        size = min(size, len(inliers))
        pick = inliers[_distinct(rng, len(inliers), size)]
        try:
            motion = kabsch(a[pick], b[pick])
            for mult in _LO_ANNEAL:
                gate = _residuals(motion, a, b) <= mult * threshold
                if int(gate.sum()) < SAMPLE_SIZE:
                    raise DegenerateSampleError("annealed gate emptied out")
                motion = kabsch(a[gate], b[gate])
        except DegenerateSampleError:
            continue
        mask = _residuals(motion, a, b) <= threshold
        count = int(mask.sum())
        if count > cur.inlier_count:
            cur = Hypothesis(motion, count, mask)
    return cur


def lo_step(best: Hypothesis, corrs: Correspondences, src_points: Points,
            dst_points: Points, threshold: float,
            inner_iters: int = 50, seed: int = 0) -> Hypothesis:
    """Public wrapper over the local optimizer (see ``_lo_step``).

    Needs at least 4 current inliers to do anything; returns a hypothesis
    whose inlier count is never below the input's.
    """
    a = np.asarray(src_points, dtype=np.float64)[corrs.src]
    b = np.asarray(dst_points, dtype=np.float64)[corrs.dst]
    return _lo_step(best, a, b, threshold, inner_iters, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# the estimator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 1_000_000
    confidence: float = 0.999
    inlier_threshold: float = 0.6
    use_prosac: bool = True
    rejection: str = "elc"            # none | elc | sprt
    use_lo: bool = True
    elc_tolerance: float = 0.6
    sprt_epsilon0: float = 0.2
    sprt_delta0: float = 0.05
    lo_inner_iters: int = 50
    lo_max_rounds: int = 10
    prosac_t_total: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError("confidence must be in (0, 1)")
        if self.inlier_threshold <= 0.0:
            raise ValueError("inlier_threshold must be positive")
        if self.rejection not in ("none", "elc", "sprt"):
            raise ValueError(f"unknown rejection kind {self.rejection!r}")
        if self.elc_tolerance <= 0.0:
            raise ValueError("elc_tolerance must be positive")
        if self.lo_inner_iters < 1 or self.lo_max_rounds < 0:
            raise ValueError("bad local-optimization limits")
        if self.prosac_t_total < 1:
            raise ValueError("prosac_t_total must be >= 1")


@dataclass(frozen=True)
class RegistrationResult:
    """Outcome of a robust estimation run.

    ``inlier_mask`` is aligned with the input correspondence order.
    ``best_history`` records (iteration, inlier count, motion) at every
    improvement, which makes convergence studies cheap.  ``wall_time`` is
    the only field that is not reproducible run to run.
    """

    motion: RigidMotion
    inlier_mask: NDArray[np.bool_]
    inlier_count: int
    iterations_run: int
    hypotheses_rejected_fast: int
    lo_rounds: int
    wall_time: float
    converged_by: str                 # early_stop | iteration_cap
    best_history: tuple


def ransac_register(src_points: Points, dst_points: Points,
                    corrs: Correspondences, cfg: RansacConfig) -> RegistrationResult:
    """Estimate the rigid motion aligning src onto dst from putative matches."""
    t0 = time.perf_counter()
    n = len(corrs)
    if n < SAMPLE_SIZE:
        raise ValueError(f"need at least {SAMPLE_SIZE} correspondences, got {n}")

    a = np.asarray(src_points, dtype=np.float64)[corrs.src]
    b = np.asarray(dst_points, dtype=np.float64)[corrs.dst]
    if cfg.use_prosac:
        order = priority_order(corrs)
        a, b = a[order], b[order]
    else:
        order = np.arange(n)

    root = np.random.default_rng(cfg.seed)
    sample_rng, lo_rng = root.spawn(2)
    sampler = ProsacSampler(n, SAMPLE_SIZE, cfg.prosac_t_total) if cfg.use_prosac else None
    sprt = sprt_initial(cfg.sprt_epsilon0, cfg.sprt_delta0) if cfg.rejection == "sprt" else None

    best = Hypothesis(RigidMotion.identity(), 0, np.zeros(n, dtype=bool))
    history: list[tuple[int, int, RigidMotion]] = []
    rejected_fast = 0
    lo_rounds = 0
    required = cfg.max_iterations
    t = 0

    while t < cfg.max_iterations and t < required:
        t += 1
        idx = sampler.sample(t, sample_rng) if sampler is not None \
            else _distinct(sample_rng, n, SAMPLE_SIZE)
        sp, dp = a[idx], b[idx]

        if cfg.rejection == "elc" and not elc_check(sp, dp, cfg.elc_tolerance):
            rejected_fast += 1
            continue
        try:
            motion = kabsch(sp, dp)
        except DegenerateSampleError:
            rejected_fast += 1
            continue

        if sprt is not None:
            decision = _sprt_gathered(motion, a, b, cfg.inlier_threshold, sprt)
            if not decision.accepted:
                rejected_fast += 1
                continue
            count, mask = decision.inlier_count, decision.inlier_mask
        else:
            mask = _residuals(motion, a, b) <= cfg.inlier_threshold
            count = int(mask.sum())

        if count > best.inlier_count:
            best = Hypothesis(motion, count, mask)
            if cfg.use_lo and lo_rounds < cfg.lo_max_rounds:
                lo_rounds += 1
                best = _lo_step(best, a, b, cfg.inlier_threshold,
                                cfg.lo_inner_iters, lo_rng)
            history.append((t, best.inlier_count, best.motion))
            if sprt is not None:
                sprt = sprt_update_epsilon(sprt, best.inlier_count / n)
            required = required_iterations(cfg.confidence, best.inlier_count / n,
                                           SAMPLE_SIZE, cfg.max_iterations)

    mask_input_order = np.zeros(n, dtype=bool)
    mask_input_order[order] = best.inlier_mask
    converged_by = "early_stop" if t >= required and required < cfg.max_iterations \
        else "iteration_cap"
    return RegistrationResult(
        motion=best.motion,
        inlier_mask=mask_input_order,
        inlier_count=best.inlier_count,
        iterations_run=t,
        hypotheses_rejected_fast=rejected_fast,
        lo_rounds=lo_rounds,
        wall_time=time.perf_counter() - t0,
        converged_by=converged_by,
        best_history=tuple(history),
    )
