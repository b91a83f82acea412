"""SULD descriptors: smoothed Haar responses sampled on concentric rings.

Four response maps (Gx, Gy, |Gx|, |Gy|) are computed once per image with
box filters, smoothed by an incremental Gaussian cascade, and sampled at the
point itself plus ``N`` directions on each ring. Every sampled 4-vector is
normalized on its own, so descriptors ignore intensity offset and gain.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import correlate1d

from ._fileio import atomic_write
from .detector import SignificantPoint
from .integral import box_sum_map, integral_image
from .range_image import PixelCoord, RangeImage

MAGIC = b"SULD"
VERSION = 1
_HEADER = struct.Struct("<4sHH3d3dHII")


@dataclass(frozen=True)
class DescriptorConfig:
    h: int = 4
    N: int = 8
    radii: tuple[float, float, float] = (5.0, 10.0, 15.0)
    sigmas: tuple[float, float, float] = (2.5, 5.0, 7.5)
    epsilon_norm: float = 1e-12
    # scale ring radii by point scale / 1.2 (response maps stay fixed)
    scale_adaptive: bool = False

    def __post_init__(self):
        if self.h < 2 or self.h % 2:
            raise ValueError("Haar size h must be even and >= 2")
        if self.N < 4:
            raise ValueError("N must be >= 4")
        if len(self.radii) != 3 or len(self.sigmas) != 3:
            raise ValueError("exactly three radii and three sigmas are required")
        if not (0 < self.radii[0] < self.radii[1] < self.radii[2]):
            raise ValueError("radii must be positive and strictly increasing")
        if not (0 < self.sigmas[0] < self.sigmas[1] < self.sigmas[2]):
            raise ValueError("sigmas must be positive and strictly increasing")
        if not self.epsilon_norm >= 0:
            raise ValueError("epsilon_norm must be nonnegative")

    @property
    def length(self) -> int:
        return 4 * (1 + 3 * self.N)


@dataclass(frozen=True, eq=False)
class ResponseMaps:
    gx: np.ndarray
    gy: np.ndarray
    gx_abs: np.ndarray
    gy_abs: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.stack([self.gx, self.gy, self.gx_abs, self.gy_abs])


@dataclass(frozen=True, eq=False)
class ConvolvedStack:
    # (levels, 4, height, width); channel order gx, gy, |gx|, |gy|
    maps: np.ndarray
    sigmas: tuple[float, ...]

    @property
    def height(self) -> int:
        return self.maps.shape[2]

    @property
    def width(self) -> int:
        return self.maps.shape[3]


@dataclass(frozen=True, eq=False)
class SuldDescriptor:
    values: np.ndarray
    anchor: PixelCoord
    scale: float

    def __len__(self) -> int:
        return len(self.values)


def _pixels(img) -> np.ndarray:
    if isinstance(img, RangeImage):
        return img.depth
    return np.asarray(img, dtype=np.float64)


def haar_response_maps(img, h: int = 4) -> ResponseMaps:
    """Haar responses with an ``h x h`` mask at every pixel.

    The mask covers rows ``y - h/2 .. y + h/2 - 1`` and the same columns around
    ``x``; for Gx the right half weighs +1 and the left half -1, for Gy the lower
    half +1 and the upper half -1. Pixels without full support are 0.
    """
    pix = _pixels(img)
    if h < 2 or h % 2:
        raise ValueError("Haar size h must be even and >= 2")
    rows, cols = pix.shape
    if h > min(rows, cols) / 2:
        raise ValueError(f"Haar size {h} too large for a {cols}x{rows} image")
    ii = integral_image(pix)
    k = h // 2
    gx = box_sum_map(ii, -k, k - 1, 0, k - 1) - box_sum_map(ii, -k, k - 1, -k, -1)
    gy = box_sum_map(ii, 0, k - 1, -k, k - 1) - box_sum_map(ii, -k, -1, -k, k - 1)
    support = np.zeros(pix.shape, dtype=bool)
    support[k : rows - k + 1, k : cols - k + 1] = True
    gx = np.where(support, gx, 0.0)
    gy = np.where(support, gy, 0.0)
    return ResponseMaps(gx, gy, np.abs(gx), np.abs(gy))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled Gaussian truncated at 3 sigma, normalized to unit sum."""
    radius = max(1, math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable smoothing over the last two axes, reflecting at the borders."""
    k = gaussian_kernel(sigma)
    out = correlate1d(arr, k, axis=-1, mode="reflect")
    return correlate1d(out, k, axis=-2, mode="reflect")


def gaussian_cascade(maps: ResponseMaps, sigmas: Sequence[float]) -> ConvolvedStack:
    """Smooth to each sigma in turn, each level built from the previous one.

    Level ``k+1`` is level ``k`` smoothed by ``sqrt(s[k+1]**2 - s[k]**2)``.
    """
    sigmas = tuple(float(s) for s in sigmas)
    if any(s <= 0 for s in sigmas) or any(b <= a for a, b in zip(sigmas, sigmas[1:])):
        raise ValueError("sigmas must be positive and strictly increasing")
    current = gaussian_smooth(maps.stacked(), sigmas[0])
    levels = [current]
    for prev, nxt in zip(sigmas, sigmas[1:]):
        current = gaussian_smooth(current, math.sqrt(nxt * nxt - prev * prev))
        levels.append(current)
    return ConvolvedStack(np.stack(levels), sigmas)


def _normalize(vec: np.ndarray, eps: float) -> np.ndarray:
    n = float(np.sqrt(np.dot(vec, vec)))
    if n < eps:
        return np.zeros_like(vec)
    return vec / n


def _bilinear(maps: np.ndarray, u: float, v: float) -> np.ndarray:
    """Sample a (channels, H, W) array at subpixel column ``u``, row ``v``."""
    _, rows, cols = maps.shape
    x0 = min(int(math.floor(u)), cols - 2) if cols > 1 else 0
    y0 = min(int(math.floor(v)), rows - 2) if rows > 1 else 0
    fx, fy = u - x0, v - y0
    x1, y1 = min(x0 + 1, cols - 1), min(y0 + 1, rows - 1)
    top = maps[:, y0, x0] * (1 - fx) + maps[:, y0, x1] * fx
    bottom = maps[:, y1, x0] * (1 - fx) + maps[:, y1, x1] * fx
    return top * (1 - fy) + bottom * fy


def _in_bounds(stack: ConvolvedStack, u: float, v: float) -> bool:
    return 0.0 <= u <= stack.width - 1 and 0.0 <= v <= stack.height - 1


def sample_vector(stack: ConvolvedStack, level: int, at: PixelCoord, epsilon_norm: float = 1e-12) -> np.ndarray:
    """Unit 4-vector (Gx, Gy, |Gx|, |Gy|) of one smoothing level at ``at``.

    Returns zeros when the raw vector's norm is below ``epsilon_norm``.
    """
    u, v = at
    if not _in_bounds(stack, u, v):
        raise IndexError(f"sample location ({u}, {v}) outside {stack.width}x{stack.height} image")
    return _normalize(_bilinear(stack.maps[level], u, v), epsilon_norm)


def sample_locations(u: float, v: float, cfg: DescriptorConfig, scale: float | None = None) -> list[tuple[int, float, float]]:
    """``(level, u, v)`` for the centre and each ring sample, in descriptor order."""
    radii = cfg.radii
    if cfg.scale_adaptive and scale is not None:
        radii = tuple(r * scale / 1.2 for r in radii)
    out = [(0, u, v)]
    for level, r in enumerate(radii):
        for j in range(cfg.N):
            theta = 2.0 * math.pi * j / cfg.N
            out.append((level, u + r * math.cos(theta), v + r * math.sin(theta)))
    return out


def build_descriptor(stack: ConvolvedStack, point: SignificantPoint, cfg: DescriptorConfig | None = None) -> SuldDescriptor | None:
    """Descriptor for one point, or None if any ring sample leaves the image.

    Layout: centre and ring 1 from the first smoothing level, ring 2 from the
    second, ring 3 from the third; directions ``2*pi*j/N`` for ``j = 0..N-1``.
    """
    cfg = cfg or DescriptorConfig()
    locs = sample_locations(point.u, point.v, cfg, point.scale)
    if not all(_in_bounds(stack, su, sv) for _, su, sv in locs):
        return None
    values = np.concatenate(
        [_normalize(_bilinear(stack.maps[level], su, sv), cfg.epsilon_norm) for level, su, sv in locs]
    )
    return SuldDescriptor(values, PixelCoord(point.u, point.v), point.scale)


def describe_all(
    img, points: Sequence[SignificantPoint], cfg: DescriptorConfig | None = None
) -> tuple[list[SuldDescriptor], int]:
    """Descriptors for ``points`` in input order, plus the count of skipped points."""
    cfg = cfg or DescriptorConfig()
    if len(points) == 0:
        return [], 0
    stack = gaussian_cascade(haar_response_maps(img, cfg.h), cfg.sigmas)
    descs = []
    skipped = 0
    for p in points:
        d = build_descriptor(stack, p, cfg)
        if d is None:
            skipped += 1
        else:
            descs.append(d)
    return descs, skipped


def descriptor_matrix(descs: Sequence[SuldDescriptor]) -> np.ndarray:
    if len(descs) == 0:
        return np.zeros((0, 0))
    return np.stack([d.values for d in descs])


def save_descriptors(
    descs: Sequence[SuldDescriptor], path: str | os.PathLike, cfg: DescriptorConfig | None = None, skipped: int = 0
) -> None:
    """Little-endian binary: header, then per record u, v, scale (f64) and values (f32)."""
    cfg = cfg or DescriptorConfig()
    header = _HEADER.pack(MAGIC, VERSION, cfg.N, *cfg.radii, *cfg.sigmas, cfg.h, len(descs), skipped)
    rec = _record_dtype(cfg.length)
    arr = np.zeros(len(descs), dtype=rec)
    for i, d in enumerate(descs):
        if len(d) != cfg.length:
            raise ValueError(f"descriptor length {len(d)} does not match config ({cfg.length})")
        arr[i] = (d.anchor.u, d.anchor.v, d.scale, d.values)
    atomic_write(path, header + arr.tobytes())


def _record_dtype(length: int) -> np.dtype:
    return np.dtype([("u", "<f8"), ("v", "<f8"), ("scale", "<f8"), ("values", "<f4", (length,))])


@dataclass(frozen=True)
class DescriptorFile:
    config: DescriptorConfig
    descriptors: list[SuldDescriptor]
    skipped: int

    @property
    def detected(self) -> int:
        return len(self.descriptors) + self.skipped


def load_descriptors(path: str | os.PathLike) -> DescriptorFile:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated descriptor file")
    magic, version, n_dirs, r1, r2, r3, s1, s2, s3, h, count, skipped = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path}: not a version-{VERSION} SULD file")
    cfg = DescriptorConfig(h=h, N=n_dirs, radii=(r1, r2, r3), sigmas=(s1, s2, s3))
    rec = _record_dtype(cfg.length)
    if len(data) != _HEADER.size + count * rec.itemsize:
        raise ValueError(f"{path}: size does not match {count} records")
    arr = np.frombuffer(data, dtype=rec, count=count, offset=_HEADER.size)
    descs = [
        SuldDescriptor(r["values"].astype(np.float64), PixelCoord(float(r["u"]), float(r["v"])), float(r["scale"]))
        for r in arr
    ]
    return DescriptorFile(cfg, descs, skipped)
