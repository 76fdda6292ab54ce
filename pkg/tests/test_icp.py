"""ICP refinement: convergence, monotone gated RMSE, no-overlap signaling."""

from __future__ import annotations

import math

import numpy as np
import pytest

from lidarreg.geom import RigidMotion, apply, compose
from lidarreg.icp import IcpConfig, IcpResult, icp_refine
from lidarreg.metrics import rotation_error, translation_error

from test_geom import random_motion
from test_ransac import random_rotation_small


def dense_cloud(rng, n=5000, extent=20.0):
    return rng.uniform(-extent, extent, size=(n, 3))


def perturbed(truth, trans=0.2, deg=2.0):
    return RigidMotion(truth.rotation @ random_rotation_small(deg),
                       truth.translation + np.array([trans, 0.0, 0.0]))


def test_identity_on_identical_clouds_converges_immediately():
    rng = np.random.default_rng(0)
    cloud = dense_cloud(rng, n=500)
    res = icp_refine(cloud, cloud, RigidMotion.identity())
    assert res.converged
    assert res.rmse < 1e-12
    assert not res.no_overlap
    assert rotation_error(res.motion.rotation, np.eye(3)) < 1e-6


def test_recovers_from_small_perturbation():
    rng = np.random.default_rng(1)
    cloud = dense_cloud(rng)
    truth = random_motion(rng, t_scale=5.0)
    moved = apply(truth, cloud)
    res = icp_refine(cloud, moved, perturbed(truth, trans=0.2, deg=2.0))
    assert translation_error(res.motion.translation, truth.translation) < 0.01
    assert rotation_error(res.motion.rotation, truth.rotation) < 0.1


def test_gated_rmse_nonincreasing():
    rng = np.random.default_rng(2)
    cloud = dense_cloud(rng, n=2000)
    truth = random_motion(rng, t_scale=3.0)
    moved = apply(truth, cloud) + rng.normal(scale=0.03, size=cloud.shape)
    res = icp_refine(cloud, moved, perturbed(truth, trans=0.3, deg=2.5))
    hist = list(res.rmse_history)
    assert len(hist) >= 2
    assert all(a >= b for a, b in zip(hist, hist[1:]))


def test_final_rmse_never_above_initial():
    rng = np.random.default_rng(3)
    for seed in range(10):
        local = np.random.default_rng(seed)
        cloud = dense_cloud(local, n=1500)
        truth = random_motion(local, t_scale=4.0)
        moved = apply(truth, cloud) + local.normal(scale=0.05, size=cloud.shape)
        res = icp_refine(cloud, moved, perturbed(truth, trans=0.25, deg=2.0))
        assert res.rmse <= res.rmse_history[0] + 1e-15


def test_disjoint_clouds_report_no_overlap():
    rng = np.random.default_rng(4)
    a = dense_cloud(rng, n=200, extent=5.0)
    b = a + np.array([1000.0, 0.0, 0.0])
    init = random_motion(rng, t_scale=1.0)
    res = icp_refine(a, b, init)
    assert res.no_overlap
    assert math.isinf(res.rmse)
    assert np.array_equal(res.motion.rotation, init.rotation)
    assert np.array_equal(res.motion.translation, init.translation)
    assert res.iterations == 0


def test_respects_iteration_cap():
    rng = np.random.default_rng(5)
    cloud = dense_cloud(rng, n=800)
    truth = random_motion(rng, t_scale=2.0)
    moved = apply(truth, cloud) + rng.normal(scale=0.1, size=cloud.shape)
    res = icp_refine(cloud, moved, perturbed(truth, trans=0.3, deg=3.0),
                     IcpConfig(max_iterations=2))
    assert res.iterations <= 2


def test_noisy_pair_converges_within_default_budget():
    rng = np.random.default_rng(6)
    cloud = dense_cloud(rng, n=3000)
    truth = random_motion(rng, t_scale=5.0)
    moved = apply(truth, cloud) + rng.normal(scale=0.02, size=cloud.shape)
    res = icp_refine(cloud, moved, perturbed(truth, trans=0.2, deg=1.5))
    assert res.converged
    assert res.iterations <= 30
    assert translation_error(res.motion.translation, truth.translation) < 0.05


def test_config_validation():
    with pytest.raises(ValueError):
        IcpConfig(threshold=0.0)
    with pytest.raises(ValueError):
        IcpConfig(max_iterations=0)
    with pytest.raises(ValueError):
        icp_refine(np.zeros((0, 3)), np.zeros((5, 3)), RigidMotion.identity())
