"""
Significant points and SULD descriptors
=======================================

Run the box-filter Hessian detector on a range image, describe each point
and compare two scans of one subject against a scan of another.
"""

import numpy as np

from rangeface.cloud_io import synth_face
from rangeface.detector import DetectorConfig, octave_filter_sizes
from rangeface.matching import match_descriptors
from rangeface.pipeline import PipelineConfig, describe_image
from rangeface.range_image import preprocess

cfg = PipelineConfig()
print("filter sizes per octave:", octave_filter_sizes(DetectorConfig()))

ref_a = synth_face(1, noise_sigma=0.5)
scans = {
    "A, scan 1": preprocess(ref_a),
    "A, scan 2": preprocess(synth_face(1, (0, 6, -3), 0.5, noise_seed=7), ref_a),
    "B, scan 1": preprocess(synth_face(2, noise_sigma=0.5)),
}

features = {}
for name, img in scans.items():
    descs, detected, skipped = describe_image(img, cfg)
    features[name] = np.stack([d.values for d in descs])
    print(f"{name}: {detected} points, {skipped} too close to the border")

# each descriptor is 25 unit 4-vectors (centre plus 3 rings of 8)
d = features["A, scan 1"][0]
print("descriptor length", d.size, "subvector norms", np.round(np.linalg.norm(d.reshape(-1, 4), axis=1)[:5], 6))

probe = features["A, scan 2"]
for name in ("A, scan 1", "B, scan 1"):
    matches = match_descriptors(probe, features[name], cfg.matcher)
    ratios = [m.best_dist / m.second_dist for m in matches]
    median = f"{np.median(ratios):.2f}" if ratios else "-"
    print(f"A, scan 2 vs {name}: {len(matches)} matches, median ratio {median}")
