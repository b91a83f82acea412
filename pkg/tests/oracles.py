"""Slow, obviously-correct reference implementations used only by the tests."""

import itertools
import math

import numpy as np


def brute_integral(img):
    h, w = img.shape
    out = np.zeros((h + 1, w + 1))
    for y in range(h + 1):
        for x in range(w + 1):
            out[y, x] = img[:y, :x].sum()
    return out


def brute_rect_sum(img, left, top, right, bottom):
    h, w = img.shape
    total = 0.0
    for y in range(max(top, 0), min(bottom, h - 1) + 1):
        for x in range(max(left, 0), min(right, w - 1) + 1):
            total += img[y, x]
    return total


def hessian_masks(L):
    """Dense Dxx, Dyy, Dxy box masks of size L x L, built cell by cell."""
    lobe = L // 3
    c = L // 2
    dyy = np.zeros((L, L))
    for r in range(L):
        for col in range(L):
            if abs(col - c) <= lobe - 1:
                band = r // lobe
                dyy[r, col] = -2.0 if band == 1 else 1.0
    dxx = dyy.T.copy()
    dxy = np.zeros((L, L))
    for r in range(L):
        for col in range(L):
            dr, dc = r - c, col - c
            if 1 <= abs(dr) <= lobe and 1 <= abs(dc) <= lobe:
                dxy[r, col] = 1.0 if dr * dc > 0 else -1.0
    return dxx, dyy, dxy


def dense_correlate_valid(img, mask):
    """Correlation of ``img`` with a centred odd mask; 0 where the mask overhangs."""
    h, w = img.shape
    k = mask.shape[0] // 2
    out = np.zeros((h, w))
    for y in range(k, h - k):
        for x in range(k, w - k):
            out[y, x] = (img[y - k : y + k + 1, x - k : x + k + 1] * mask).sum()
    return out


def haar_dense(img, h):
    """Gx, Gy from explicit h x h masks anchored at rows/cols -h/2 .. h/2-1."""
    k = h // 2
    rows, cols = img.shape
    gx = np.zeros((rows, cols))
    gy = np.zeros((rows, cols))
    mx = np.zeros((h, h))
    mx[:, k:] = 1
    mx[:, :k] = -1
    my = mx.T.copy()
    for y in range(k, rows - k + 1):
        for x in range(k, cols - k + 1):
            patch = img[y - k : y + k, x - k : x + k]
            gx[y, x] = (patch * mx).sum()
            gy[y, x] = (patch * my).sum()
    return gx, gy


def gaussian_direct(arr, sigma):
    """Full 2D (non-separable) convolution with a truncated normalized Gaussian.

    Borders use half-sample symmetric extension, written out with np.pad.
    """
    r = max(1, math.ceil(3 * sigma))
    ax = np.arange(-r, r + 1)
    g2 = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * sigma * sigma))
    g2 /= g2.sum()
    p = np.pad(arr, r, mode="symmetric")
    h, w = arr.shape
    out = np.zeros((h, w))
    for dy in range(2 * r + 1):
        for dx in range(2 * r + 1):
            out += g2[dy, dx] * p[dy : dy + h, dx : dx + w]
    return out


def lowe_matches(probe, gallery, ratio):
    """Ratio test applied literally with Python loops."""
    out = []
    if len(gallery) < 2:
        return out
    for i, p in enumerate(probe):
        d = [math.sqrt(sum((a - b) ** 2 for a, b in zip(p, g))) for g in gallery]
        order = sorted(range(len(d)), key=lambda j: (d[j], j))
        best, second = d[order[0]], d[order[1]]
        if second > 0 and best / second < ratio:
            out.append((i, order[0]))
    return out


def point_in_triangle(p, a, b, c, tol=1e-12):
    def cross(o, u, v):
        return (u[0] - o[0]) * (v[1] - o[1]) - (u[1] - o[1]) * (v[0] - o[0])

    d1, d2, d3 = cross(a, b, p), cross(b, c, p), cross(c, a, p)
    neg = d1 < -tol or d2 < -tol or d3 < -tol
    pos = d1 > tol or d2 > tol or d3 > tol
    return not (neg and pos)


def brute_delaunay(pts):
    """All triangles whose circumcircle is empty: O(n^4)."""
    tris = []
    n = len(pts)
    for i, j, k in itertools.combinations(range(n), 3):
        a, b, c = pts[i], pts[j], pts[k]
        det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(det) < 1e-12:
            continue
        if det < 0:
            b, c = c, b
        ok = True
        for m in range(n):
            if m in (i, j, k):
                continue
            p = pts[m]
            mat = np.array([
                [a[0] - p[0], a[1] - p[1], (a[0] - p[0]) ** 2 + (a[1] - p[1]) ** 2],
                [b[0] - p[0], b[1] - p[1], (b[0] - p[0]) ** 2 + (b[1] - p[1]) ** 2],
                [c[0] - p[0], c[1] - p[1], (c[0] - p[0]) ** 2 + (c[1] - p[1]) ** 2],
            ])
            if np.linalg.det(mat) > 1e-9:
                ok = False
                break
        if ok:
            tris.append((i, j, k))
    return tris


def barycentric_interp(pts, values, tris, q):
    for i, j, k in tris:
        a, b, c = pts[i], pts[j], pts[k]
        if point_in_triangle(q, a, b, c):
            m = np.array([[a[0], b[0], c[0]], [a[1], b[1], c[1]], [1, 1, 1]])
            lam = np.linalg.solve(m, [q[0], q[1], 1.0])
            return float(lam @ [values[i], values[j], values[k]])
    return math.nan
