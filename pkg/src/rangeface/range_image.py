"""Range images from registered face clouds.

A range image is a regular grid of depths where larger values are nearer the
scanner (+z). Scattered samples are linearly interpolated over their Delaunay
triangulation; grid nodes outside the convex hull are invalid. Valid depths
are affinely rescaled so the nearest point reads 255, background is 0.

Pixel ``(u, v)`` is (column, row); column ``u`` grows with x and row ``v``
grows with decreasing y, so faces appear upright.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage
from scipy.interpolate import LinearNDInterpolator
from scipy.spatial import Delaunay, QhullError

from ._fileio import atomic_write
from .cloud_io import as_points
from .registration import IcpParams, IcpResult, apply_transform, icp_align

DEPTH_MAX = 255.0
NOSE_FLATNESS = 1.0


class PixelCoord(NamedTuple):
    u: float
    v: float


@dataclass(frozen=True)
class GridSpec:
    """Output grid. Unset ranges are fitted to the cloud with ``margin`` padding.

    Auto-fitted grids use square pixels centred on the cloud's bounding box.
    """

    width: int = 128
    height: int = 128
    x_range: tuple[float, float] | None = None
    y_range: tuple[float, float] | None = None
    margin: float = 0.05

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValueError("grid must be at least 16x16")
        for r in (self.x_range, self.y_range):
            if r is not None and not r[1] > r[0]:
                raise ValueError(f"degenerate grid interval {r}")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")

    @property
    def resolved(self) -> bool:
        return self.x_range is not None and self.y_range is not None

    def fit(self, points) -> GridSpec:
        """Concrete grid covering ``points`` (unset ranges only)."""
        if self.resolved:
            return self
        pts = as_points(points)
        lo = pts[:, :2].min(axis=0)
        hi = pts[:, :2].max(axis=0)
        centre = (lo + hi) / 2
        extent = np.maximum(hi - lo, 1e-9) * (1 + 2 * self.margin)
        pixel = max(extent[0] / (self.width - 1), extent[1] / (self.height - 1))
        half = np.array([(self.width - 1) * pixel, (self.height - 1) * pixel]) / 2
        xr = self.x_range or (float(centre[0] - half[0]), float(centre[0] + half[0]))
        yr = self.y_range or (float(centre[1] - half[1]), float(centre[1] + half[1]))
        return replace(self, x_range=xr, y_range=yr)

    @property
    def spacing(self) -> tuple[float, float]:
        return (
            (self.x_range[1] - self.x_range[0]) / (self.width - 1),
            (self.y_range[1] - self.y_range[0]) / (self.height - 1),
        )

    def to_pixels(self, xy: np.ndarray) -> np.ndarray:
        """World (x, y) to fractional (u, v)."""
        dx, dy = self.spacing
        u = (xy[:, 0] - self.x_range[0]) / dx
        v = (self.y_range[1] - xy[:, 1]) / dy
        return np.column_stack([u, v])


@dataclass(frozen=True, eq=False)
class RangeImage:
    depth: np.ndarray
    valid: np.ndarray
    grid: GridSpec
    # raw z mapped to depth 0 and 255 (equal when the surface is flat)
    z_range: tuple[float, float] = (0.0, DEPTH_MAX)
    nose_tip: PixelCoord | None = field(default=None)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    def raw_depth(self) -> np.ndarray:
        """Depths mapped back to scanner z (background stays 0)."""
        lo, hi = self.z_range
        out = np.where(self.valid, lo + self.depth / DEPTH_MAX * (hi - lo), 0.0)
        return out


def rasterize(cloud, spec: GridSpec | None = None) -> RangeImage:
    """Interpolate a cloud onto the grid and normalize valid depths to [.., 255].

    Before triangulating, points sharing a nearest grid node are reduced to
    the one nearest the scanner (largest z).
    """
    pts = as_points(cloud)
    spec = (spec or GridSpec()).fit(pts)
    uv = spec.to_pixels(pts[:, :2])

    # z-buffer: keep the nearest point per node
    key_u = np.rint(uv[:, 0]).astype(np.int64)
    key_v = np.rint(uv[:, 1]).astype(np.int64)
    order = np.lexsort((pts[:, 2], key_u, key_v))
    ku, kv = key_u[order], key_v[order]
    last = np.ones(len(order), dtype=bool)
    last[:-1] = (ku[1:] != ku[:-1]) | (kv[1:] != kv[:-1])
    sel = order[last]
    uv, z = uv[sel], pts[sel, 2]

    if len(uv) < 3:
        raise ValueError("need at least 3 projected points to triangulate")
    try:
        tri = Delaunay(uv)
    except QhullError as exc:
        raise ValueError("projected points are collinear; triangulation impossible") from exc
    gu, gv = np.meshgrid(np.arange(spec.width, dtype=np.float64), np.arange(spec.height, dtype=np.float64))
    raw = LinearNDInterpolator(tri, z)(gu, gv)
    valid = np.isfinite(raw)
    if not valid.any():
        raise ValueError("no grid node falls inside the cloud's convex hull")

    lo = float(raw[valid].min())
    hi = float(raw[valid].max())
    depth = np.zeros(raw.shape)
    # spreads at rounding level (interpolated planes) count as flat
    if hi - lo > 1e-9 * max(1.0, abs(lo), abs(hi)):
        # divide first so the maximum maps to exactly DEPTH_MAX
        depth[valid] = (raw[valid] - lo) / (hi - lo) * DEPTH_MAX
    else:
        depth[valid] = DEPTH_MAX
    return RangeImage(depth, valid, spec, (lo, hi))


def find_nose_tip(img: RangeImage, tolerance: float = NOSE_FLATNESS) -> PixelCoord:
    """Centroid of the largest connected region within ``tolerance`` of the maximum.

    Connectivity is 8-neighbour; equally large regions are resolved in favour of
    the one whose first pixel comes first in (v, u) raster order.
    """
    if not img.valid.any():
        raise ValueError("range image has no valid pixels")
    peak = img.depth[img.valid].max()
    region = img.valid & (img.depth >= peak - tolerance)
    labels, n = ndimage.label(region, structure=np.ones((3, 3), dtype=bool))
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    # labels are numbered in raster order of their first pixel
    best = int(np.argmax(sizes)) + 1
    vs, us = np.nonzero(labels == best)
    return PixelCoord(float(us.mean()), float(vs.mean()))


def crop_ellipse(img: RangeImage, center: PixelCoord, semi_axes: tuple[float, float]) -> RangeImage:
    """Invalidate every pixel outside the ellipse (boundary pixels kept)."""
    a, b = semi_axes
    if a <= 0 or b <= 0:
        raise ValueError("semi-axes must be positive")
    vs, us = np.mgrid[0 : img.height, 0 : img.width]
    inside = ((us - center[0]) / a) ** 2 + ((vs - center[1]) / b) ** 2 <= 1.0
    valid = img.valid & inside
    depth = np.where(valid, img.depth, 0.0)
    return replace(img, depth=depth, valid=valid)


def default_crop(spec: GridSpec) -> tuple[float, float]:
    return 0.35 * spec.width, 0.45 * spec.height


class Preprocessed(NamedTuple):
    image: RangeImage
    registration: IcpResult | None
    nose_tip: PixelCoord


def preprocess_scan(
    cloud,
    reference=None,
    spec: GridSpec | None = None,
    crop: tuple[float, float] | None = None,
    icp: IcpParams | None = None,
) -> Preprocessed:
    """Register to ``reference`` (if any), rasterize, locate the nose, crop.

    With a reference and an unresolved grid, the grid is fitted to the
    reference so all scans of a subject share pixel geometry.
    """
    spec = spec or GridSpec()
    reg = None
    if reference is not None:
        spec = spec.fit(reference)
        reg = icp_align(cloud, reference, icp)
        cloud = apply_transform(cloud, reg.transform)
    img = rasterize(cloud, spec)
    tip = find_nose_tip(img)
    img = crop_ellipse(img, tip, crop or default_crop(img.grid))
    return Preprocessed(replace(img, nose_tip=tip), reg, tip)


def preprocess(cloud, reference=None, spec: GridSpec | None = None, crop=None, icp: IcpParams | None = None) -> RangeImage:
    return preprocess_scan(cloud, reference, spec, crop, icp).image


def _rle(mask: np.ndarray) -> list[int]:
    flat = mask.ravel().astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    return [int(flat[0])] + np.diff(bounds).tolist()


def _unrle(values: list[int], shape: tuple[int, int]) -> np.ndarray:
    first, runs = values[0], values[1:]
    bits = np.repeat(np.arange(len(runs)) % 2 == (0 if first else 1), runs)
    if bits.size != shape[0] * shape[1]:
        raise ValueError("mask run lengths do not match image size")
    return bits.reshape(shape)


def sidecar_path(pgm_path: str | os.PathLike) -> Path:
    p = Path(pgm_path)
    return p.with_name(p.stem + ".grid.txt")


def save_range_image(img: RangeImage, path: str | os.PathLike) -> None:
    """16-bit big-endian PGM plus a ``<stem>.grid.txt`` sidecar.

    Depths are quantized to 0..65535 for storage only.
    """
    q = np.rint(np.clip(img.depth, 0.0, DEPTH_MAX) / DEPTH_MAX * 65535.0).astype(">u2")
    header = f"P5\n{img.width} {img.height}\n65535\n".encode("ascii")
    atomic_write(path, header + q.tobytes())
    g = img.grid
    lines = [
        "# range image grid and validity mask",
        f"width = {img.width}",
        f"height = {img.height}",
        f"x_range = {g.x_range[0]!r} {g.x_range[1]!r}",
        f"y_range = {g.y_range[0]!r} {g.y_range[1]!r}",
        f"z_range = {img.z_range[0]!r} {img.z_range[1]!r}",
    ]
    if img.nose_tip is not None:
        lines.append(f"nose_tip = {img.nose_tip.u!r} {img.nose_tip.v!r}")
    lines.append("mask_rle = " + " ".join(map(str, _rle(img.valid))))
    atomic_write(sidecar_path(path), "\n".join(lines) + "\n")


def _read_pgm16(path: Path) -> np.ndarray:
    data = path.read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    raster = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos)
    return raster.reshape(h, w).astype(np.float64) / maxval


def load_range_image(path: str | os.PathLike) -> RangeImage:
    path = Path(path)
    depth = _read_pgm16(path) * DEPTH_MAX
    meta = {}
    for line in sidecar_path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        meta[key.strip()] = value.split()
    h, w = depth.shape
    if int(meta["width"][0]) != w or int(meta["height"][0]) != h:
        raise ValueError(f"{path}: sidecar size does not match image")
    valid = _unrle([int(x) for x in meta["mask_rle"]], (h, w))
    grid = GridSpec(
        width=w,
        height=h,
        x_range=tuple(map(float, meta["x_range"])),
        y_range=tuple(map(float, meta["y_range"])),
    )
    tip = PixelCoord(*map(float, meta["nose_tip"])) if "nose_tip" in meta else None
    depth = np.where(valid, depth, 0.0)
    return RangeImage(depth, valid, grid, tuple(map(float, meta["z_range"])), tip)
