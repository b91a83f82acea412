"""Significant-point detection with box-filter Hessian responses.

Second-order Gaussian derivatives are approximated by box filters evaluated on
an integral image. The scale space is built by growing the filter while the
image stays at full resolution; blobs are strict 3x3x3 maxima of the Hessian
determinant, refined to subpixel/subscale precision with a quadratic fit.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .integral import IntegralImage, box_sum_map
from .range_image import PixelCoord

# sigma of the Gaussian approximated by the smallest (9x9) box filter
BASE_SIGMA = 1.2
# octaves share filter sizes, so one blob can be a maximum in two of them
DUPLICATE_RADIUS = 1.0
DUPLICATE_SCALE_RATIO = 1.5
ROUNDING_FLOOR = 1e-12


@dataclass(frozen=True)
class DetectorConfig:
    w: float = 0.9
    octaves: int = 3
    levels_per_octave: int = 4
    base_filter_size: int = 9
    # None selects the strongest ``target_points`` candidates per image
    response_threshold: float | None = None
    target_points: int = 24

    def __post_init__(self):
        if not self.w > 0:
            raise ValueError("w must be positive")
        if self.base_filter_size < 9 or self.base_filter_size % 6 != 3:
            raise ValueError("base_filter_size must be >= 9 and congruent to 3 mod 6 (9, 15, 21, ...)")
        if self.octaves < 1:
            raise ValueError("octaves must be positive")
        if self.levels_per_octave < 3:
            raise ValueError("levels_per_octave must be >= 3 for scale-space maxima")
        if self.response_threshold is not None and self.response_threshold < 0:
            raise ValueError("response_threshold must be nonnegative")
        if self.target_points < 1:
            raise ValueError("target_points must be positive")


@dataclass(frozen=True)
class ResponseMap:
    values: np.ndarray
    filter_size: int

    @property
    def scale(self) -> float:
        return filter_scale(self.filter_size)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SignificantPoint:
    u: float
    v: float
    scale: float
    response: float

    @property
    def location(self) -> PixelCoord:
        return PixelCoord(self.u, self.v)


def filter_scale(filter_size: float) -> float:
    return BASE_SIGMA * filter_size / 9.0


def octave_filter_sizes(cfg: DetectorConfig) -> list[list[int]]:
    """Filter sizes per octave: 9,15,21,27 / 15,27,39,51 / 27,51,75,99 for defaults."""
    sizes = []
    for o in range(cfg.octaves):
        step = 6 * 2**o
        start = cfg.base_filter_size + 6 * (2**o - 1)
        sizes.append([start + step * k for k in range(cfg.levels_per_octave)])
    return sizes


def _check_filter_size(filter_size: int) -> None:
    if filter_size < 9 or filter_size % 6 != 3:
        raise ValueError(f"filter size {filter_size} must be >= 9 and congruent to 3 mod 6")


def box_hessian(ii: IntegralImage, filter_size: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Area-normalized box responses ``(Dxx, Dyy, Dxy)`` at every pixel.

    For filter size ``L`` with lobe ``l = L / 3``:

    * ``Dyy``: ``2l - 1`` columns wide, ``L`` rows tall, three bands of ``l``
      rows weighted ``+1, -2, +1``.
    * ``Dxx``: the transpose of ``Dyy``.
    * ``Dxy``: four ``l x l`` squares around a one-pixel cross through the
      centre, ``+1`` top-left and bottom-right, ``-1`` top-right and bottom-left.

    Pixels closer than ``(L - 1) / 2`` to the border are 0.
    """
    _check_filter_size(filter_size)
    h, w = ii.shape
    if filter_size > min(h, w):
        raise ValueError(f"filter size {filter_size} larger than image {w}x{h}")
    lobe = filter_size // 3
    b = (filter_size - 1) // 2
    half = (lobe - 1) // 2

    def box(dy0, dy1, dx0, dx1):
        return box_sum_map(ii, dy0, dy1, dx0, dx1)

    # whole band minus 3x the middle band gives +1/-2/+1
    dyy = box(-b, b, -(lobe - 1), lobe - 1) - 3.0 * box(-half, half, -(lobe - 1), lobe - 1)
    dxx = box(-(lobe - 1), lobe - 1, -b, b) - 3.0 * box(-(lobe - 1), lobe - 1, -half, half)
    dxy = (
        box(-lobe, -1, -lobe, -1)
        + box(1, lobe, 1, lobe)
        - box(-lobe, -1, 1, lobe)
        - box(1, lobe, -lobe, -1)
    )
    support = np.zeros((h, w), dtype=bool)
    support[b : h - b, b : w - b] = True
    area = float(filter_size * filter_size)
    return tuple(np.where(support, d / area, 0.0) for d in (dxx, dyy, dxy))


def hessian_response_map(ii: IntegralImage, filter_size: int, w: float = 0.9) -> ResponseMap:
    """Approximate Hessian determinant ``Dxx*Dyy - (w*Dxy)**2`` per pixel."""
    dxx, dyy, dxy = box_hessian(ii, filter_size)
    return ResponseMap(dxx * dyy - (w * dxy) ** 2, filter_size)


def build_scale_space(ii: IntegralImage, cfg: DetectorConfig) -> list[ResponseMap]:
    """Response maps for every octave level, in octave order.

    Sizes shared between octaves are computed once; the returned sequence
    repeats them so each octave keeps its own neighbours.
    """
    sizes = [s for octave in octave_filter_sizes(cfg) for s in octave]
    limit = min(ii.shape)
    for s in sizes:
        if s > limit:
            raise ValueError(
                f"filter size {s} exceeds image {ii.width}x{ii.height}; reduce octaves ({cfg.octaves})"
            )
    cache: dict[int, ResponseMap] = {}
    for s in sizes:
        if s not in cache:
            cache[s] = hessian_response_map(ii, s, cfg.w)
    return [cache[s] for s in sizes]


def _strict_maxima(stack: np.ndarray, margin: int) -> np.ndarray:
    """Boolean mask of middle-level pixels strictly above all 26 neighbours."""
    _, h, w = stack.shape
    mask = np.zeros((h, w), dtype=bool)
    if h - 2 * margin <= 0 or w - 2 * margin <= 0:
        return mask
    center = stack[1, margin : h - margin, margin : w - margin]
    keep = np.ones_like(center, dtype=bool)
    for dl in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dl == 0 and dy == 0 and dx == 0:
                    continue
                nb = stack[1 + dl, margin + dy : h - margin + dy, margin + dx : w - margin + dx]
                keep &= center > nb
    mask[margin : h - margin, margin : w - margin] = keep
    return mask


def _quadratic_offset(stack: np.ndarray, level: int, y: int, x: int):
    """Offset (dx, dy, dlevel) of the extremum of a 3D quadratic fit, or None."""
    c = stack[level, y, x]
    dx = (stack[level, y, x + 1] - stack[level, y, x - 1]) / 2.0
    dy = (stack[level, y + 1, x] - stack[level, y - 1, x]) / 2.0
    ds = (stack[level + 1, y, x] - stack[level - 1, y, x]) / 2.0
    dxx = stack[level, y, x + 1] + stack[level, y, x - 1] - 2 * c
    dyy = stack[level, y + 1, x] + stack[level, y - 1, x] - 2 * c
    dss = stack[level + 1, y, x] + stack[level - 1, y, x] - 2 * c
    dxy = (stack[level, y + 1, x + 1] - stack[level, y + 1, x - 1]
           - stack[level, y - 1, x + 1] + stack[level, y - 1, x - 1]) / 4.0
    dxs = (stack[level + 1, y, x + 1] - stack[level + 1, y, x - 1]
           - stack[level - 1, y, x + 1] + stack[level - 1, y, x - 1]) / 4.0
    dys = (stack[level + 1, y + 1, x] - stack[level + 1, y - 1, x]
           - stack[level - 1, y + 1, x] + stack[level - 1, y - 1, x]) / 4.0
    hess = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
    grad = np.array([dx, dy, ds])
    try:
        return -np.linalg.solve(hess, grad)
    except np.linalg.LinAlgError:
        return None


def _octave_candidates(
    maps: Sequence[ResponseMap], threshold: float, step: int
) -> list[SignificantPoint]:
    stack = np.stack([m.values for m in maps])
    n_levels, h, w = stack.shape
    points = []
    for level in range(1, n_levels - 1):
        # every 3x3x3 neighbour must have full filter support
        margin = (maps[level + 1].filter_size - 1) // 2 + 1
        sub = stack[level - 1 : level + 2]
        ys, xs = np.nonzero(_strict_maxima(sub, margin) & (stack[level] >= threshold))
        for y, x in zip(ys.tolist(), xs.tolist()):
            cl, cy, cx = level, y, x
            offset = _quadratic_offset(stack, cl, cy, cx)
            if offset is not None and np.any(np.abs(offset) > 0.5):
                # one re-centring step towards the fitted extremum
                cx += int(np.sign(offset[0])) if abs(offset[0]) > 0.5 else 0
                cy += int(np.sign(offset[1])) if abs(offset[1]) > 0.5 else 0
                cl += int(np.sign(offset[2])) if abs(offset[2]) > 0.5 else 0
                m = (maps[min(cl + 1, n_levels - 1)].filter_size - 1) // 2 + 1
                if not (1 <= cl <= n_levels - 2 and m <= cy < h - m and m <= cx < w - m):
                    continue
                offset = _quadratic_offset(stack, cl, cy, cx)
                if offset is not None and np.any(np.abs(offset) > 0.5):
                    continue
            if offset is None:
                continue
            size = maps[cl].filter_size + offset[2] * step
            points.append(
                SignificantPoint(
                    u=float(cx + offset[0]),
                    v=float(cy + offset[1]),
                    scale=filter_scale(size),
                    response=float(stack[level, y, x]),
                )
            )
    return points


def _drop_octave_duplicates(points: list[SignificantPoint]) -> list[SignificantPoint]:
    """Remove weaker copies of a maximum found again in an overlapping octave.

    ``points`` must be sorted strongest first.
    """
    kept: list[SignificantPoint] = []
    for p in points:
        if not any(
            abs(p.u - q.u) <= DUPLICATE_RADIUS
            and abs(p.v - q.v) <= DUPLICATE_RADIUS
            and max(p.scale, q.scale) < DUPLICATE_SCALE_RATIO * min(p.scale, q.scale)
            for q in kept
        ):
            kept.append(p)
    return kept


def detect_significant_points(ii: IntegralImage, cfg: DetectorConfig | None = None) -> list[SignificantPoint]:
    """Scale-space maxima of the Hessian determinant, strongest first.

    With ``cfg.response_threshold`` unset, all positive maxima (above
    ``ROUNDING_FLOOR`` times the peak absolute response) are collected and the
    ``cfg.target_points`` strongest are kept. A maximum repeated in an
    overlapping octave at nearly the same place and scale is reported once.
    """
    cfg = cfg or DetectorConfig()
    maps = build_scale_space(ii, cfg)
    if cfg.response_threshold is None:
        # "positive" means above rounding noise of the strongest response
        peak = max(float(np.abs(m.values).max()) for m in maps)
        threshold = ROUNDING_FLOOR * peak
    else:
        threshold = cfg.response_threshold
    points: list[SignificantPoint] = []
    n = cfg.levels_per_octave
    for o in range(cfg.octaves):
        octave_maps = maps[o * n : (o + 1) * n]
        found = _octave_candidates(octave_maps, threshold, 6 * 2**o)
        if cfg.response_threshold is None:
            found = [p for p in found if p.response > threshold]
        points.extend(found)
    # stable sort keeps octave/raster order among equal responses
    points.sort(key=lambda p: -p.response)
    points = _drop_octave_duplicates(points)
    if cfg.response_threshold is None:
        points = points[: cfg.target_points]
    return points


def save_points(points: Sequence[SignificantPoint], path: str | os.PathLike) -> None:
    """Write ``u v scale response`` lines, strongest first."""
    ordered = sorted(points, key=lambda p: -p.response)
    with open(path, "w", encoding="utf-8") as f:
        for p in ordered:
            f.write(f"{p.u!r} {p.v!r} {p.scale!r} {p.response!r}\n")


def load_points(path: str | os.PathLike) -> list[SignificantPoint]:
    points = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 4:
                raise ValueError(f"{path}:{lineno}: expected 'u v scale response'")
            u, v, s, r = map(float, fields)
            points.append(SignificantPoint(u, v, s, r))
    return points
