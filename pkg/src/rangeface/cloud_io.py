"""Point clouds: ASCII XYZ files, dataset manifests, synthetic faces.

XYZ files hold one ``x y z`` line per point; blank lines and ``#`` comments
are skipped. Manifests hold one ``subject_id<TAB>scan_id<TAB>pose_tag<TAB>path``
line per scan, with paths resolved relative to the manifest file.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._fileio import atomic_write

# capture protocol of the 16-scan face database the manifest numbering follows
POSE_TAGS = {
    1: "frontal",
    2: "frontal",
    3: "frontal",
    4: "frontal",
    5: "turn_y_right_25",
    6: "turn_y_right_25",
    7: "turn_y_left_5",
    8: "turn_y_left_5",
    9: "turn_z_right_severe",
    10: "turn_z_right_small",
    11: "smile",
    12: "open_mouth",
    13: "look_up",
    14: "look_down",
    15: "frontal_uncontrolled_light",
    16: "frontal_uncontrolled_light",
}
VALID_POSE_TAGS = frozenset(POSE_TAGS.values())
MAX_SCAN_ID = 16


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Unordered 3D samples, ``points`` of shape (n, 3).

    ``landmarks`` carries optional named 3D positions (the synthetic
    generator records its nose apex there).
    """

    points: np.ndarray
    landmarks: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
        if len(pts) == 0:
            raise ValueError("point cloud is empty")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


def as_points(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    return PointCloud(cloud).points


def load_xyz(path: str | os.PathLike) -> PointCloud:
    rows = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            fields = s.split()
            if len(fields) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 numbers, got {len(fields)}")
            try:
                rows.append([float(v) for v in fields])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed number in {s!r}") from None
    if not rows:
        raise ValueError(f"{path}: no points")
    return PointCloud(np.array(rows, dtype=np.float64))


def _fmt(x: float) -> str:
    # repr is the shortest string that round-trips exactly
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def save_xyz(cloud, path: str | os.PathLike) -> None:
    pts = as_points(cloud)
    atomic_write(path, "".join(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}\n" for x, y, z in pts.tolist()))


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    scan_id: int
    pose_tag: str
    path: Path


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            key = (e.subject_id, e.scan_id)
            if key in seen:
                raise ValueError(f"duplicate entry for subject {e.subject_id!r} scan {e.scan_id}")
            seen.add(key)
            if not 1 <= e.scan_id <= MAX_SCAN_ID:
                raise ValueError(f"scan_id {e.scan_id} out of range 1..{MAX_SCAN_ID}")
            if e.pose_tag not in VALID_POSE_TAGS:
                raise ValueError(f"unknown pose tag {e.pose_tag!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def subjects(self) -> list[str]:
        """Subject ids in first-appearance order."""
        return list(dict.fromkeys(e.subject_id for e in self.entries))

    def lookup(self) -> dict[tuple[str, int], ManifestEntry]:
        return {(e.subject_id, e.scan_id): e for e in self.entries}


def load_manifest(path: str | os.PathLike) -> DatasetManifest:
    path = Path(path)
    base = path.parent
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            s = line.rstrip("\n")
            if not s.strip() or s.lstrip().startswith("#"):
                continue
            fields = s.split("\t")
            if len(fields) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
            subject, scan, tag, rel = fields
            try:
                scan_id = int(scan)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad scan_id {scan!r}") from None
            p = Path(rel)
            if not p.is_absolute():
                p = base / p
            entries.append(ManifestEntry(subject, scan_id, tag, p))
    manifest = DatasetManifest(tuple(entries))
    for e in manifest:
        if not e.path.is_file():
            raise FileNotFoundError(f"{path}: missing scan file {e.path}")
    return manifest


def save_manifest(entries: Iterable[ManifestEntry], path: str | os.PathLike) -> None:
    path = Path(path)
    lines = []
    for e in entries:
        p = Path(e.path)
        try:
            p = p.relative_to(path.parent)
        except ValueError:
            pass
        lines.append(f"{e.subject_id}\t{e.scan_id}\t{e.pose_tag}\t{p.as_posix()}\n")
    atomic_write(path, "".join(lines))


def euler_rotation(pose: Sequence[float]) -> np.ndarray:
    """Rotation ``Rz @ Ry @ Rx`` for angles (about x, about y, about z) in degrees."""
    ax, ay, az = (math.radians(a) for a in pose)
    cx, sx = math.cos(ax), math.sin(ax)
    cy, sy = math.cos(ay), math.sin(ay)
    cz, sz = math.cos(az), math.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


@dataclass(frozen=True)
class _Bump:
    cx: float
    cy: float
    sx: float
    sy: float
    amp: float

    def __call__(self, x, y):
        return self.amp * np.exp(-0.5 * (((x - self.cx) / self.sx) ** 2 + ((y - self.cy) / self.sy) ** 2))


@dataclass(frozen=True)
class FaceModel:
    """Analytic face surface z = f(x, y) in millimetres, +z towards the scanner."""

    half_width: float
    half_height: float
    depth: float
    bumps: tuple[_Bump, ...]
    extent: float = 0.9  # fraction of the ellipsoid (squared radius) kept

    def inside(self, x, y):
        return (x / self.half_width) ** 2 + (y / self.half_height) ** 2 <= self.extent

    def surface(self, x, y):
        r2 = np.clip((x / self.half_width) ** 2 + (y / self.half_height) ** 2, 0.0, 1.0)
        z = self.depth * np.sqrt(1.0 - r2)
        for b in self.bumps:
            z = z + b(x, y)
        return z


def face_model(seed: int) -> FaceModel:
    """Identity-specific face geometry drawn from ``seed``."""
    rng = np.random.default_rng([int(seed), 0x5EED])
    u = rng.uniform
    a = u(68.0, 78.0)
    b = u(95.0, 105.0)
    depth = u(60.0, 72.0)
    nose_y = u(-14.0, -4.0)
    nose_sy = u(15.0, 21.0)
    bumps = [
        _Bump(0.0, nose_y, u(6.0, 9.0), nose_sy, u(22.0, 30.0)),
        _Bump(0.0, nose_y - 0.6 * nose_sy, u(4.0, 6.0), u(4.0, 6.0), u(4.0, 7.0)),
    ]
    eye_y = u(18.0, 28.0)
    eye_x = u(28.0, 36.0)
    for side in (-1.0, 1.0):
        ex = side * (eye_x + u(-2.0, 2.0))
        ey = eye_y + u(-2.0, 2.0)
        bumps.append(_Bump(ex, ey, u(9.0, 13.0), u(7.0, 10.0), -u(7.0, 12.0)))
        bumps.append(_Bump(ex, ey + u(12.0, 16.0), u(12.0, 16.0), u(4.0, 6.0), u(3.0, 6.0)))
        bumps.append(_Bump(side * u(35.0, 45.0), u(-22.0, -10.0), u(10.0, 14.0), u(10.0, 14.0), u(3.0, 7.0)))
    bumps.append(_Bump(0.0, u(-52.0, -42.0), u(16.0, 22.0), u(3.5, 5.0), -u(3.0, 6.0)))
    bumps.append(_Bump(0.0, u(-76.0, -66.0), u(13.0, 17.0), u(8.0, 12.0), u(4.0, 8.0)))
    # identity-specific relief away from the nose
    placed = 0
    while placed < 12:
        x, y = u(-0.75, 0.75) * a, u(-0.75, 0.75) * b
        if (x / a) ** 2 + (y / b) ** 2 > 0.55 or (abs(x) < 14 and abs(y - nose_y) < 28):
            continue
        amp = u(4.0, 8.0) * rng.choice([-1.0, 1.0])
        bumps.append(_Bump(x, y, u(4.0, 7.0), u(4.0, 7.0), amp))
        placed += 1
    return FaceModel(a, b, depth, tuple(bumps))


def nose_apex(model: FaceModel) -> np.ndarray:
    """Location of the surface maximum (0.5 mm search refined to 0.1 mm)."""
    xs = np.arange(-0.5 * model.half_width, 0.5 * model.half_width, 0.5)
    ys = np.arange(-0.6 * model.half_height, 0.4 * model.half_height, 0.5)
    gx, gy = np.meshgrid(xs, ys)
    z = model.surface(gx, gy)
    i = np.unravel_index(np.argmax(z), z.shape)
    x0, y0 = gx[i], gy[i]
    fx = np.arange(x0 - 0.5, x0 + 0.5, 0.1)
    fy = np.arange(y0 - 0.5, y0 + 0.5, 0.1)
    gx, gy = np.meshgrid(fx, fy)
    z = model.surface(gx, gy)
    i = np.unravel_index(np.argmax(z), z.shape)
    return np.array([gx[i], gy[i], z[i]])


def synth_face(
    seed: int,
    pose: Sequence[float] = (0.0, 0.0, 0.0),
    noise_sigma: float = 0.0,
    *,
    n_points: int = 10000,
    noise_seed: int | None = None,
) -> PointCloud:
    """Synthetic 2.5D face scan.

    ``seed`` fixes the identity (surface shape). ``noise_seed`` (default:
    ``seed``) drives the scattered sample positions and the additive Gaussian
    noise, so scans of one subject differ by sampling, noise and ``pose``.
    The cloud is rotated about the origin by the Euler angles ``pose``
    (degrees) and then perturbed. The rotated nose apex is recorded in
    ``landmarks["nose_apex"]``.
    """
    pose = tuple(float(a) for a in pose)
    if len(pose) != 3 or any(abs(a) > 45.0 for a in pose):
        raise ValueError("pose must be three Euler angles within +-45 degrees")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    model = face_model(seed)
    rng = np.random.default_rng([int(seed if noise_seed is None else noise_seed), 0xC10D])
    xy = np.empty((0, 2))
    while len(xy) < n_points:
        cand = rng.uniform(-1.0, 1.0, size=(2 * n_points, 2)) * [model.half_width, model.half_height]
        cand = cand[model.inside(cand[:, 0], cand[:, 1])]
        xy = np.concatenate([xy, cand])
    xy = xy[:n_points]
    pts = np.column_stack([xy, model.surface(xy[:, 0], xy[:, 1])])
    rot = euler_rotation(pose)
    pts = pts @ rot.T
    if noise_sigma > 0:
        pts = pts + rng.normal(0.0, noise_sigma, size=pts.shape)
    return PointCloud(pts, {"nose_apex": rot @ nose_apex(model)})
