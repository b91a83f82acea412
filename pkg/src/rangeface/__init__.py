"""Range-image 3D face recognition with significant points and SULD descriptors.

Pipeline: ICP registration -> Delaunay rasterization -> nose-tip elliptical
crop -> box-filter Hessian detector -> SULD descriptors -> ratio-test
matching with match-count similarity.
"""

__version__ = "0.1.0"

from .cloud_io import DatasetManifest, PointCloud, load_manifest, load_xyz, save_xyz, synth_face
from .detector import DetectorConfig, SignificantPoint, detect_significant_points
from .integral import IntegralImage, Rect, integral_image, rect_sum
from .matching import MatcherConfig, Protocol, evaluate, match_descriptors, recognize, similarity
from .pipeline import PipelineConfig, evaluate_manifest
from .range_image import GridSpec, PixelCoord, RangeImage, crop_ellipse, find_nose_tip, preprocess, rasterize
from .registration import IcpParams, RigidTransform, apply_transform, icp_align
from .suld import DescriptorConfig, SuldDescriptor, describe_all

__all__ = [
    "DatasetManifest", "PointCloud", "load_manifest", "load_xyz", "save_xyz", "synth_face",
    "DetectorConfig", "SignificantPoint", "detect_significant_points",
    "IntegralImage", "Rect", "integral_image", "rect_sum",
    "MatcherConfig", "Protocol", "evaluate", "match_descriptors", "recognize", "similarity",
    "PipelineConfig", "evaluate_manifest",
    "GridSpec", "PixelCoord", "RangeImage", "crop_ellipse", "find_nose_tip", "preprocess", "rasterize",
    "IcpParams", "RigidTransform", "apply_transform", "icp_align",
    "DescriptorConfig", "SuldDescriptor", "describe_all",
]
