"""Integral images and constant-time rectangle sums.

The summed-area table carries a one-pixel zero border (row 0 and column 0), so
the four-corner rectangle formula needs no special case at the image edges.
Arrays are indexed ``[row, col]`` throughout the package; ``x`` is the column
and ``y`` the row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class Rect(NamedTuple):
    """Inclusive pixel bounds. May extend past the image; sums are clipped."""

    left: int
    top: int
    right: int
    bottom: int


@dataclass(frozen=True)
class IntegralImage:
    table: np.ndarray  # (height + 1, width + 1), float64

    @property
    def height(self) -> int:
        return self.table.shape[0] - 1

    @property
    def width(self) -> int:
        return self.table.shape[1] - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width


def integral_image(img) -> IntegralImage:
    """Build the summed-area table of a 2D image.

    ``table[y, x]`` holds the sum of ``img[:y, :x]``, so ``table[0, :]`` and
    ``table[:, 0]`` are zero. Accumulation is always in float64.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2D image, got shape {img.shape}")
    table = np.zeros((img.shape[0] + 1, img.shape[1] + 1), dtype=np.float64)
    np.cumsum(np.cumsum(img, axis=0), axis=1, out=table[1:, 1:])
    table.setflags(write=False)
    return IntegralImage(table)


def rect_sum(ii: IntegralImage, r: Rect) -> float:
    """Sum of source pixels inside ``r`` clipped to the image (0 if disjoint)."""
    left = max(r.left, 0)
    top = max(r.top, 0)
    right = min(r.right, ii.width - 1)
    bottom = min(r.bottom, ii.height - 1)
    if left > right or top > bottom:
        return 0.0
    t = ii.table
    return float(t[bottom + 1, right + 1] - t[top, right + 1] - t[bottom + 1, left] + t[top, left])


def box_sum_map(ii: IntegralImage, dy0: int, dy1: int, dx0: int, dx1: int) -> np.ndarray:
    """Rect sums of a box placed relative to every pixel, as a full-size map.

    Entry ``(y, x)`` is the sum over rows ``y+dy0 .. y+dy1`` and columns
    ``x+dx0 .. x+dx1`` (inclusive) where that box lies inside the image, and 0
    elsewhere.
    """
    if dy0 > dy1 or dx0 > dx1:
        raise ValueError("empty box offsets")
    h, w = ii.shape
    out = np.zeros((h, w))
    ylo, yhi = max(0, -dy0), min(h, h - dy1)
    xlo, xhi = max(0, -dx0), min(w, w - dx1)
    if ylo >= yhi or xlo >= xhi:
        return out
    t = ii.table
    top = slice(ylo + dy0, yhi + dy0)
    bot = slice(ylo + dy1 + 1, yhi + dy1 + 1)
    lft = slice(xlo + dx0, xhi + dx0)
    rgt = slice(xlo + dx1 + 1, xhi + dx1 + 1)
    out[ylo:yhi, xlo:xhi] = t[bot, rgt] - t[top, rgt] - t[bot, lft] + t[top, lft]
    return out
