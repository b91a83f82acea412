"""
From a point cloud to a cropped range image
===========================================

Generate a synthetic face scan, register a rotated copy onto it and look at
the resulting range images.
"""

import numpy as np

from rangeface.cloud_io import synth_face
from rangeface.range_image import preprocess_scan

# the frontal scan is the registration target for every other scan of a subject
reference = synth_face(seed=3, noise_sigma=0.5)
probe = synth_face(seed=3, pose=(4.0, -8.0, 2.0), noise_sigma=0.5, noise_seed=99)
print(f"{len(reference)} points per scan")

front = preprocess_scan(reference)
moved = preprocess_scan(probe, reference)

reg = moved.registration
print(f"ICP: {reg.iterations} iterations, rms {reg.history[0]:.3f} -> {reg.rms:.3f}")
print(f"recovered rotation {reg.transform.rotation_angle_deg():.2f} deg")

# nose tips should land on (nearly) the same pixel once the pose is undone
print("nose tip, frontal:", tuple(round(c, 1) for c in front.nose_tip))
print("nose tip, registered:", tuple(round(c, 1) for c in moved.nose_tip))

a, b = front.image, moved.image
joint = a.valid & b.valid
print(f"valid pixels: {a.valid.sum()} and {b.valid.sum()}, shared {joint.sum()}")
print(f"mean |depth difference| on shared pixels: {np.mean(np.abs(a.depth[joint] - b.depth[joint])):.2f} / 255")

# a coarse ASCII view of the cropped depth map
rows = a.depth[::8, ::4]
ramp = " .:-=+*#%@"
for row in rows:
    print("".join(ramp[int(v / 256 * len(ramp))] for v in row))
