"""Rigid point-to-point ICP.

Correspondences are nearest neighbours in the target (kd-tree); each
iteration solves the closed-form rigid fit through an SVD of the
cross-covariance (Kabsch/Umeyama without scale).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from .cloud_io import PointCloud, as_points


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9) or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation is not a proper orthonormal matrix")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    def inverse(self) -> RigidTransform:
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, first: RigidTransform) -> RigidTransform:
        """Transform equivalent to applying ``first`` and then ``self``."""
        return RigidTransform(self.rotation @ first.rotation, self.rotation @ first.translation + self.translation)

    def rotation_angle_deg(self) -> float:
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return math.degrees(math.acos(min(1.0, max(-1.0, c))))


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    # absolute RMS-change threshold; None means 1e-6 x target bbox diagonal
    convergence_eps: float | None = None
    max_correspondence_dist: float = math.inf
    # extrapolate along consistent update directions (Besl-McKay acceleration)
    accelerate: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.convergence_eps is not None and self.convergence_eps < 0:
            raise ValueError("convergence_eps must be nonnegative")
        if not self.max_correspondence_dist > 0:
            raise ValueError("max_correspondence_dist must be positive")


class IcpResult(NamedTuple):
    transform: RigidTransform
    rms: float
    # RMS before the first update, then after every iteration
    history: list[float]

    @property
    def iterations(self) -> int:
        return len(self.history) - 1


def apply_transform(cloud, t: RigidTransform) -> PointCloud:
    pts = as_points(cloud)
    landmarks = {}
    if isinstance(cloud, PointCloud):
        landmarks = {k: t.rotation @ v + t.translation for k, v in cloud.landmarks.items()}
    return PointCloud(pts @ t.rotation.T + t.translation, landmarks)


def rigid_fit(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Least-squares rotation and translation mapping ``src`` onto ``dst``."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    a = src - mu_s
    b = dst - mu_d
    u, s, vt = np.linalg.svd(a.T @ b)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise np.linalg.LinAlgError("degenerate correspondence set (collinear or coincident points)")
    d = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    # re-orthonormalize against rounding so RigidTransform validation holds
    uu, _, vv = np.linalg.svd(r)
    r = uu @ vv
    return RigidTransform(r, mu_d - r @ mu_s)


_ACCEL_ANGLE = math.radians(10.0)
_ACCEL_MAX = 25.0


def _state(t: RigidTransform, prev: np.ndarray | None) -> np.ndarray:
    """7-vector (unit quaternion, translation); quaternion sign kept continuous."""
    q = Rotation.from_matrix(t.rotation).as_quat()
    if prev is not None and np.dot(q, prev[:4]) < 0:
        q = -q
    return np.concatenate([q, t.translation])


def _from_state(s: np.ndarray) -> RigidTransform:
    q = s[:4] / np.linalg.norm(s[:4])
    r = Rotation.from_quat(q).as_matrix()
    uu, _, vv = np.linalg.svd(r)
    return RigidTransform(uu @ vv, s[4:])


def _extrapolation(states: list[np.ndarray], errors: list[float]) -> float | None:
    """Step length along the last update direction, or None when not aligned.

    Fits a line and a parabola to the last three errors against arc length and
    picks the step as in the accelerated ICP of Besl and McKay.
    """
    d_new = states[-1] - states[-2]
    d_old = states[-2] - states[-3]
    a, b = np.linalg.norm(d_new), np.linalg.norm(d_old)
    if a == 0 or b == 0:
        return None
    cos = float(np.dot(d_new, d_old) / (a * b))
    if cos < math.cos(_ACCEL_ANGLE):
        return None
    e0, e1, e2 = errors[-1], errors[-2], errors[-3]
    v_max = _ACCEL_MAX * a
    v1 = e0 * a / (e1 - e0) if e1 > e0 else -1.0
    # parabola through (0, e0), (-a, e1), (-(a + b), e2)
    xs = np.array([0.0, -a, -(a + b)])
    coef = np.polyfit(xs, [e0, e1, e2], 2)
    v2 = -coef[1] / (2 * coef[0]) if coef[0] > 0 else -1.0
    if 0 < v2 < v1 < v_max or 0 < v2 < v_max < v1:
        return v2
    if 0 < v1 < v2 < v_max or (0 < v1 < v_max and v2 < 0):
        return v1
    if v1 > v_max and v2 > v_max:
        return v_max
    return None


def _is_degenerate(pts: np.ndarray) -> bool:
    centred = pts - pts.mean(axis=0)
    s = np.linalg.svd(centred, compute_uv=False)
    return len(pts) < 3 or s[1] <= 1e-9 * max(s[0], 1e-300)


def icp_align(source, target, params: IcpParams | None = None) -> IcpResult:
    """Align ``source`` to ``target`` starting from the identity.

    Stops after ``max_iterations`` or once the RMS improves by less than
    ``convergence_eps``. The returned transform maps source into the target
    frame; ``rms`` is the RMS nearest-neighbour distance after applying it.
    """
    params = params or IcpParams()
    src = as_points(source)
    dst = as_points(target)
    if _is_degenerate(src):
        raise np.linalg.LinAlgError("source cloud is rank deficient (collinear or coincident points)")
    eps = params.convergence_eps
    if eps is None:
        eps = 1e-6 * float(np.linalg.norm(dst.max(axis=0) - dst.min(axis=0)))
    tree = cKDTree(dst)
    limit = params.max_correspondence_dist

    def correspond(moved):
        dist, idx = tree.query(moved, distance_upper_bound=limit)
        keep = np.isfinite(dist)
        if keep.sum() < 3:
            raise np.linalg.LinAlgError("fewer than 3 correspondences within max_correspondence_dist")
        return dist[keep], idx[keep], keep

    current = RigidTransform.identity()
    moved = src
    dist, idx, keep = correspond(moved)
    rms = float(np.sqrt(np.mean(dist**2)))
    history = [rms]
    states = [_state(current, None)]
    errors = [rms * rms]

    def evaluate(t):
        m = src @ t.rotation.T + t.translation
        d, i, k = correspond(m)
        return m, d, i, k, float(np.sqrt(np.mean(d**2)))

    for _ in range(params.max_iterations):
        step = rigid_fit(moved[keep], dst[idx])
        candidate = step.compose(current)
        cand_moved, cand_dist, cand_idx, cand_keep, cand_rms = evaluate(candidate)
        state = _state(candidate, states[-1])
        if params.accelerate and len(states) >= 2:
            v = _extrapolation(states[-2:] + [state], errors[-2:] + [cand_rms**2])
            if v is not None:
                direction = state - states[-1]
                jump = state + v * direction / np.linalg.norm(direction)
                accel = _from_state(jump)
                trial = evaluate(accel)
                if trial[4] < cand_rms:
                    candidate = accel
                    cand_moved, cand_dist, cand_idx, cand_keep, cand_rms = trial
                    state = _state(candidate, states[-1])
        states.append(state)
        errors.append(cand_rms**2)
        if cand_rms > rms:
            # only reachable when trimming changes the correspondence set
            break
        improvement = rms - cand_rms
        current, moved, dist, idx, keep, rms = candidate, cand_moved, cand_dist, cand_idx, cand_keep, cand_rms
        history.append(rms)
        if improvement < eps:
            break
    return IcpResult(current, rms, history)
