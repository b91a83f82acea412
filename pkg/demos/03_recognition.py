"""
Rank-1 recognition on a synthetic corpus
========================================

Build a small gallery, then report leave-one-out and probe-equals-gallery
accuracy, plus how the ratio threshold trades matches for precision.
"""

import tempfile
from pathlib import Path

from rangeface.cli import main
from rangeface.cloud_io import load_manifest
from rangeface.matching import PROTOCOLS, MatcherConfig, evaluate
from rangeface.pipeline import PipelineConfig, manifest_features

with tempfile.TemporaryDirectory() as tmp:
    # same generator as `rangeface synth`: scan 1 frontal, later scans jittered up to 10 degrees
    main(["synth", "--subjects", "6", "--scans", "3", "--out", tmp, "--seed", "5"])
    manifest = load_manifest(Path(tmp) / "manifest.tsv")
    features = manifest_features(manifest, PipelineConfig())

for name in ("LOO", "SANITY"):
    print(evaluate(features, PROTOCOLS[name]).to_text())

# a stricter ratio keeps fewer but more reliable matches
for ratio in (0.6, 0.7, 0.8, 0.9):
    report = evaluate(features, PROTOCOLS["LOO"], MatcherConfig(ratio))
    print(f"ratio {ratio}: LOO accuracy {report.accuracy:.2f}%")
