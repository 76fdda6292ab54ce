"""
Rigid motions, Euler angles, and voxel thinning
===============================================

The geometric vocabulary the rest of the package builds on.
"""

import numpy as np

from lidarreg import (
    EulerAngles,
    RigidMotion,
    apply,
    compose,
    from_euler,
    inverse,
    to_euler,
    voxel_downsample,
)

# A rigid motion is a rotation matrix plus a translation vector.  Build
# one from Euler angles (degrees, roll-pitch-yaw convention).
motion = RigidMotion(rotation=from_euler(EulerAngles(roll=2.0, pitch=-5.0,
                                                     yaw=30.0)),
                     translation=np.array([4.0, -1.0, 0.25]))
print("rotation:\n", motion.rotation.round(4))
print("translation:", motion.translation)

# to_euler inverts from_euler away from the pitch = +/-90 singularity.
angles = to_euler(motion.rotation)
print(f"recovered angles: roll={angles.roll:.3f} pitch={angles.pitch:.3f} "
      f"yaw={angles.yaw:.3f}")

# compose applies the right motion first; inverse undoes a motion.
# Round-tripping a cloud through motion then its inverse is exact to
# floating point.
rng = np.random.default_rng(0)
cloud = rng.uniform(-20.0, 20.0, (5000, 3))
there = apply(motion, cloud)
back = apply(inverse(motion), there)
print("round trip max error:", float(np.abs(back - cloud).max()))

identity_like = compose(inverse(motion), motion)
print("inverse(m) o m translation:", identity_like.translation.round(12))

# Voxel thinning replaces every occupied cube of the grid with the
# centroid of its points.  It is the standard preprocessing step before
# matching: 0.3 m cells keep the geometry while cutting the point count.
dense = rng.uniform(0.0, 10.0, (50000, 3))
thin = voxel_downsample(dense, 0.3)
print(f"voxel 0.3 m: {len(dense)} points -> {len(thin)}")

# Thinning is idempotent in spirit: a second pass at the same size barely
# changes anything because each cell already holds a single point.
again = voxel_downsample(thin, 0.3)
print(f"second pass: {len(thin)} -> {len(again)}")
