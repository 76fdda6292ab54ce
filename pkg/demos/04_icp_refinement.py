"""
ICP refinement from a perturbed start
=====================================

The coarse estimate from robust matching is good to a few tenths of a
meter; iterative closest point walks it the rest of the way.
"""

import numpy as np

from lidarreg import (
    IcpConfig,
    RigidMotion,
    apply,
    compose,
    from_euler,
    EulerAngles,
    icp_refine,
    random_motion,
    rotation_error,
    translation_error,
)

rng = np.random.default_rng(7)

# A dense cloud and its exact image under a hidden motion.
src = rng.uniform(-12.0, 12.0, (3000, 3))
truth = random_motion(rng, translation_scale=4.0)
dst = apply(truth, src)

# Knock the initialization off by 0.4 m and 2 degrees of yaw, the kind
# of error a coarse registration leaves behind.
nudge = RigidMotion(rotation=from_euler(EulerAngles(0.0, 0.0, 2.0)),
                    translation=np.array([0.3, -0.25, 0.05]))
init = compose(nudge, truth)
print(f"start: RE={rotation_error(init.rotation, truth.rotation):.3f} deg  "
      f"TE={translation_error(init.translation, truth.translation):.3f} m")

# Each iteration pairs source points with their nearest target neighbor
# inside the gate, refits, and stops when the gated RMSE levels off.
result = icp_refine(src, dst, init, IcpConfig(threshold=0.6))
print(f"finish: RE={rotation_error(result.motion.rotation, truth.rotation):.2e} deg  "
      f"TE={translation_error(result.motion.translation, truth.translation):.2e} m")
print(f"converged={result.converged} after {result.iterations} iterations")

# The gated RMSE never increases; step rejection guarantees it.
print("rmse history:", " ".join(f"{v:.4f}" for v in result.rmse_history))
drops = np.diff(result.rmse_history)
print("monotone nonincreasing:", bool(np.all(drops <= 1e-12)))
