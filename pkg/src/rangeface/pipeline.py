"""End-to-end composition: cloud -> range image -> points -> descriptors."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .cloud_io import DatasetManifest, load_xyz
from .detector import DetectorConfig, SignificantPoint, detect_significant_points
from .integral import integral_image
from .matching import EvaluationReport, FaceFeatures, MatcherConfig, Protocol, as_matrix, evaluate
from .range_image import GridSpec, RangeImage, preprocess_scan
from .registration import IcpParams
from .suld import DescriptorConfig, SuldDescriptor, describe_all


@dataclass(frozen=True)
class PipelineConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    crop: tuple[float, float] | None = None
    icp: IcpParams = field(default_factory=IcpParams)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    descriptor: DescriptorConfig = field(default_factory=DescriptorConfig)
    matcher: MatcherConfig = field(default_factory=MatcherConfig)


def detect(img: RangeImage, cfg: DetectorConfig | None = None) -> list[SignificantPoint]:
    return detect_significant_points(integral_image(img.depth), cfg)


def describe_image(img: RangeImage, cfg: PipelineConfig) -> tuple[list[SuldDescriptor], int, int]:
    """Descriptors, number of detected points and number skipped."""
    points = detect(img, cfg.detector)
    descs, skipped = describe_all(img, points, cfg.descriptor)
    return descs, len(points), skipped


def scan_features(cloud, reference, cfg: PipelineConfig) -> FaceFeatures:
    img = preprocess_scan(cloud, reference, cfg.grid, cfg.crop, cfg.icp).image
    descs, detected, skipped = describe_image(img, cfg)
    return FaceFeatures(as_matrix(descs), detected, skipped)


def _manifest_job(args):
    path, ref_path, cfg = args
    cloud = load_xyz(path)
    reference = None if ref_path is None or ref_path == path else load_xyz(ref_path)
    return scan_features(cloud, reference, cfg)


def reference_scans(manifest: DatasetManifest) -> dict[str, object]:
    """Path of each subject's lowest-numbered scan (registration target)."""
    refs = {}
    for e in sorted(manifest, key=lambda e: (e.subject_id, e.scan_id)):
        refs.setdefault(e.subject_id, e.path)
    return refs


def manifest_features(manifest: DatasetManifest, cfg: PipelineConfig | None = None, jobs: int = 1) -> dict[tuple[str, int], FaceFeatures]:
    """Features for every manifest scan, each registered to its subject's first scan."""
    cfg = cfg or PipelineConfig()
    refs = reference_scans(manifest)
    work = [(e.path, refs[e.subject_id], cfg) for e in manifest]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_manifest_job, work))
    else:
        results = [_manifest_job(w) for w in work]
    return {(e.subject_id, e.scan_id): r for e, r in zip(manifest, results)}


def evaluate_manifest(
    manifest: DatasetManifest, protocol: Protocol, cfg: PipelineConfig | None = None, jobs: int = 1
) -> EvaluationReport:
    cfg = cfg or PipelineConfig()
    return evaluate(manifest_features(manifest, cfg, jobs), protocol, cfg.matcher)
