"""Geometric kernels: boxes, pinhole projection, plane fitting and scene alignment.

Points are plain ``numpy`` arrays of shape ``(3,)`` (or ``(n, 3)`` for batches).
Lengths are in scene-relative units throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_points, check_positive, check_vec3

__all__ = [
    "BBox2D",
    "BBox3D",
    "Plane",
    "CameraPose",
    "RigidTransform",
    "DegenerateSegmentError",
    "InsufficientPointsError",
    "DegeneratePlaneError",
    "euclidean_distance",
    "point_segment_projection",
    "box_closest_distance",
    "project_point",
    "back_project",
    "look_at",
    "fit_plane_ransac",
    "average_planes",
    "align_scene",
    "minimal_rotation",
    "PlaneRANSAC",
    "SceneAligner",
]

Z_AXIS = np.array([0.0, 0.0, 1.0])


class DegenerateSegmentError(ValueError):
    pass


class InsufficientPointsError(ValueError):
    pass


class DegeneratePlaneError(ValueError):
    pass


def _vec(v) -> tuple:
    return tuple(float(c) for c in check_vec3(v))


@dataclass(frozen=True)
class BBox2D:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max):
            raise ValueError(f"invalid 2D box {self.to_list()}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    @property
    def center(self) -> tuple:
        return ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)

    def to_list(self) -> list:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @classmethod
    def from_list(cls, values) -> "BBox2D":
        x1, y1, x2, y2 = (float(v) for v in values)
        return cls(x1, y1, x2, y2)

    def clip(self, width: float, height: float) -> "BBox2D":
        width, height = float(width), float(height)
        return BBox2D(
            min(max(self.x_min, 0.0), width),
            min(max(self.y_min, 0.0), height),
            min(max(self.x_max, 0.0), width),
            min(max(self.y_max, 0.0), height),
        )

    def iou(self, other: "BBox2D") -> float:
        ix = max(0.0, min(self.x_max, other.x_max) - max(self.x_min, other.x_min))
        iy = max(0.0, min(self.y_max, other.y_max) - max(self.y_min, other.y_min))
        inter = ix * iy
        union = self.area + other.area - inter
        return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class BBox3D:
    """Axis-aligned box in the aligned scene frame."""

    min: tuple
    max: tuple

    def __post_init__(self):
        lo, hi = _vec(self.min), _vec(self.max)
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"box min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def from_center_size(cls, center, size) -> "BBox3D":
        c, s = np.asarray(center, float), np.asarray(size, float)
        return cls(tuple(c - s / 2), tuple(c + s / 2))

    @classmethod
    def from_list(cls, values) -> "BBox3D":
        values = [float(v) for v in values]
        return cls(tuple(values[:3]), tuple(values[3:]))

    @classmethod
    def hull(cls, points) -> "BBox3D":
        pts = check_points(points, min_points=1, name="points")
        return cls(tuple(pts.min(axis=0)), tuple(pts.max(axis=0)))

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.min)

    @property
    def hi(self) -> np.ndarray:
        return np.array(self.max)

    @property
    def center(self) -> np.ndarray:
        return (self.lo + self.hi) / 2

    @property
    def size(self) -> np.ndarray:
        return self.hi - self.lo

    def corners(self) -> np.ndarray:
        lo, hi = self.lo, self.hi
        return np.array(
            [[(lo, hi)[i][0], (lo, hi)[j][1], (lo, hi)[k][2]]
             for i in (0, 1) for j in (0, 1) for k in (0, 1)]
        )

    def contains(self, point, tol=0.0) -> bool:
        p = np.asarray(point, float)
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))

    def intersects(self, other: "BBox3D") -> bool:
        return bool(np.all(self.lo <= other.hi) and np.all(other.lo <= self.hi))

    def to_list(self) -> list:
        return list(self.min) + list(self.max)


@dataclass(frozen=True)
class Plane:
    """The set of points ``p`` with ``normal . p == offset``."""

    normal: tuple
    offset: float

    def __post_init__(self):
        n = check_vec3(self.normal, "normal")
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise ValueError("plane normal must be non-zero")
        object.__setattr__(self, "normal", tuple(float(c) for c in n / norm))
        object.__setattr__(self, "offset", float(self.offset) / float(norm))

    @property
    def n(self) -> np.ndarray:
        return np.array(self.normal)

    def signed_distance(self, points) -> np.ndarray:
        return np.asarray(points, float) @ self.n - self.offset

    def flipped(self) -> "Plane":
        return Plane(tuple(-self.n), -self.offset)

    def angle_to(self, other: "Plane") -> float:
        """Unsigned angle between the two normals in degrees (sign-agnostic)."""
        c = abs(float(self.n @ other.n))
        return math.degrees(math.acos(min(1.0, c)))

    def to_dict(self) -> dict:
        return {"normal": list(self.normal), "offset": self.offset}

    @classmethod
    def from_dict(cls, d) -> "Plane":
        return cls(tuple(d["normal"]), d["offset"])


@dataclass(eq=False)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = _check_rotation(self.rotation)
        self.translation = check_vec3(self.translation, "translation")

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, float)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Return ``self o other`` (apply ``other`` first)."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d) -> "RigidTransform":
        return cls(np.array(d["rotation"], float), np.array(d["translation"], float))


def _check_rotation(R, tol=1e-6) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=tol) or np.linalg.det(R) < 0:
        raise ValueError("rotation must be orthonormal with det +1")
    return R


@dataclass(eq=False)
class CameraPose:
    """Pinhole camera. ``rotation`` maps world axes to camera axes.

    Camera axes follow the image convention: x right, y down, z forward.
    """

    position: np.ndarray
    rotation: np.ndarray
    focal_x: float
    focal_y: float
    principal_x: float
    principal_y: float
    width: int
    height: int

    def __post_init__(self):
        self.position = check_vec3(self.position, "position")
        self.rotation = _check_rotation(self.rotation)
        check_positive(self.focal_x, "focal_x")
        check_positive(self.focal_y, "focal_y")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    def world_to_camera(self, points) -> np.ndarray:
        return (np.asarray(points, float) - self.position) @ self.rotation.T

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "rotation": self.rotation.tolist(),
            "focal_x": self.focal_x,
            "focal_y": self.focal_y,
            "principal_x": self.principal_x,
            "principal_y": self.principal_y,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d) -> "CameraPose":
        return cls(
            np.array(d["position"], float),
            np.array(d["rotation"], float),
            d["focal_x"],
            d["focal_y"],
            d["principal_x"],
            d["principal_y"],
            int(d["width"]),
            int(d["height"]),
        )


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """World-to-camera rotation for a camera at ``position`` looking at ``target``."""
    position, target = check_vec3(position), check_vec3(target)
    forward = target - position
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, float))
    if np.linalg.norm(right) < 1e-9:
        raise ValueError("viewing direction is parallel to the up vector")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return np.stack([right, down, forward])


def euclidean_distance(a, b) -> float:
    a, b = check_vec3(a, "a"), check_vec3(b, "b")
    return float(np.linalg.norm(a - b))


def point_segment_projection(p, s, d):
    """Project ``p`` onto the segment from ``s`` to ``d``.

    Returns ``(t, closest, distance)`` with ``t`` clamped to [0, 1].
    """
    p, s, d = check_vec3(p, "p"), check_vec3(s, "s"), check_vec3(d, "d")
    seg = d - s
    length_sq = float(seg @ seg)
    if math.sqrt(length_sq) < 1e-12:
        raise DegenerateSegmentError("segment endpoints coincide")
    t = min(1.0, max(0.0, float((p - s) @ seg) / length_sq))
    closest = s + t * seg
    return t, closest, float(np.linalg.norm(p - closest))


def box_closest_distance(a: BBox3D, b: BBox3D) -> float:
    gaps = np.maximum(0.0, np.maximum(a.lo - b.hi, b.lo - a.hi))
    return float(np.sqrt(np.sum(gaps**2)))


def project_point(p, cam: CameraPose) -> Optional[tuple]:
    """Pinhole projection; ``None`` when the point is not in front of the camera."""
    x, y, z = cam.world_to_camera(check_vec3(p))
    if z <= 0:
        return None
    u = cam.focal_x * x / z + cam.principal_x
    v = cam.focal_y * y / z + cam.principal_y
    return float(u), float(v), float(z)


def back_project(u: float, v: float, depth: float, cam: CameraPose) -> np.ndarray:
    x = (u - cam.principal_x) / cam.focal_x * depth
    y = (v - cam.principal_y) / cam.focal_y * depth
    return cam.rotation.T @ np.array([x, y, depth]) + cam.position


def _canonical_sign(normal: np.ndarray) -> np.ndarray:
    # largest-magnitude component positive, so refits of the same plane agree
    return normal if normal[np.argmax(np.abs(normal))] >= 0 else -normal


def _tls_plane(points: np.ndarray) -> Plane:
    centroid = points.mean(axis=0)
    cov = (points - centroid).T @ (points - centroid)
    _, vecs = np.linalg.eigh(cov)
    normal = _canonical_sign(vecs[:, 0])
    return Plane(tuple(normal), float(normal @ centroid))


class PlaneRANSAC(BaseEstimator):
    """Robust plane fit with a total-least-squares refit on the consensus set.

    Parameters
    ----------
    iterations : int, default=1000
        Number of random 3-point hypotheses.
    inlier_threshold : float, default=0.02
        Maximum point-to-plane distance for an inlier.
    random_state : int, default=0
        Seed of the private generator; the fit is deterministic for a fixed seed.

    Attributes
    ----------
    plane_ : Plane
    inlier_mask_ : ndarray of bool, shape (n_points,)
    n_hypotheses_ : int
        Non-degenerate hypotheses that were scored.
    """

    def __init__(self, iterations=1000, inlier_threshold=0.02, random_state=0):
        self.iterations = iterations
        self.inlier_threshold = inlier_threshold
        self.random_state = random_state

    def fit(self, X, y=None):
        if len(X) < 3:
            raise InsufficientPointsError(f"need at least 3 points, got {len(X)}")
        X = check_points(X, min_points=3)
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        threshold = check_positive(self.inlier_threshold, "inlier_threshold")
        rng = np.random.default_rng(self.random_state)

        idx = rng.integers(0, len(X), size=(self.iterations, 3))
        a, b, c = X[idx[:, 0]], X[idx[:, 1]], X[idx[:, 2]]
        normals = np.cross(b - a, c - a)
        norms = np.linalg.norm(normals, axis=1)
        scale = max(1.0, float(np.ptp(X, axis=0).max()))
        valid = norms > 1e-9 * scale**2
        if not valid.any():
            raise DegeneratePlaneError("all sampled triples were collinear")
        normals = normals[valid] / norms[valid, None]
        offsets = np.einsum("ij,ij->i", normals, a[valid])

        best_count, best = -1, None
        # chunked to bound memory on large clouds
        chunk = max(1, 2_000_000 // len(X))
        for start in range(0, len(normals), chunk):
            dist = np.abs(X @ normals[start:start + chunk].T - offsets[start:start + chunk])
            counts = (dist <= threshold).sum(axis=0)
            k = int(np.argmax(counts))
            if counts[k] > best_count:
                best_count, best = int(counts[k]), start + k
        mask = np.abs(X @ normals[best] - offsets[best]) <= threshold

        plane = _tls_plane(X[mask]) if mask.sum() >= 3 else Plane(tuple(normals[best]), offsets[best])
        for _ in range(10):
            new_mask = np.abs(plane.signed_distance(X)) <= threshold
            if new_mask.sum() < 3 or np.array_equal(new_mask, mask):
                break
            mask = new_mask
            plane = _tls_plane(X[mask])
        self.plane_ = plane
        self.inlier_mask_ = np.abs(plane.signed_distance(X)) <= threshold
        self.n_hypotheses_ = int(valid.sum())
        return self

    def predict(self, X):
        """Boolean inlier mask of ``X`` under the fitted plane."""
        check_is_fitted(self, "plane_")
        X = check_points(X)
        return np.abs(self.plane_.signed_distance(X)) <= self.inlier_threshold

    def score(self, X, y=None):
        return float(np.mean(self.predict(X)))


def fit_plane_ransac(points, iterations=1000, inlier_threshold=0.02, seed=0):
    est = PlaneRANSAC(iterations, inlier_threshold, seed).fit(points)
    return est.plane_, np.flatnonzero(est.inlier_mask_)


def average_planes(planes: Sequence[Plane]) -> Plane:
    """Average plane parameters after sign-aligning every normal to the first."""
    if not planes:
        raise ValueError("cannot average an empty list of planes")
    ref = planes[0].n
    normals, offsets = [], []
    for pl in planes:
        if pl.n @ ref < 0:
            pl = pl.flipped()
        normals.append(pl.n)
        offsets.append(pl.offset)
    mean_n = np.mean(normals, axis=0)
    norm = np.linalg.norm(mean_n)
    return Plane(tuple(mean_n / norm), float(np.mean(offsets)))


def minimal_rotation(normal) -> np.ndarray:
    """Smallest rotation taking the unit vector ``normal`` onto +z."""
    n = check_vec3(normal, "normal")
    n = n / np.linalg.norm(n)
    c = float(n @ Z_AXIS)
    if c > 1 - 1e-15:
        return np.eye(3)
    if c < -1 + 1e-15:
        return np.diag([1.0, -1.0, -1.0])  # 180 degrees about x
    axis = np.cross(n, Z_AXIS)
    s = np.linalg.norm(axis)
    k = axis / s
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    R = np.eye(3) + s * K + (1 - c) * (K @ K)
    # re-orthonormalise against round-off
    u, _, vt = np.linalg.svd(R)
    return u @ vt


def align_scene(plane: Plane, points) -> RigidTransform:
    """Rigid transform putting ``plane`` at z=0 with most ``points`` at z >= 0."""
    pts = check_points(points, min_points=1, name="points")
    side = plane.signed_distance(pts)
    if np.sum(side < 0) > np.sum(side > 0):
        plane = plane.flipped()
    R = minimal_rotation(plane.n)
    return RigidTransform(R, np.array([0.0, 0.0, -plane.offset]))


class SceneAligner(TransformerMixin, BaseEstimator):
    """Fit a ground plane to ``floor_points`` and map clouds into the aligned frame.

    ``fit(X)`` takes the full reconstructed cloud ``X`` (used for the up-side
    vote); the plane is fitted on ``floor_points`` when given, else on ``X``.
    """

    def __init__(self, iterations=1000, inlier_threshold=0.02, random_state=0):
        self.iterations = iterations
        self.inlier_threshold = inlier_threshold
        self.random_state = random_state

    def fit(self, X, y=None, floor_points=None):
        X = check_points(X)
        floor = X if floor_points is None else check_points(floor_points, min_points=3)
        self.plane_ = PlaneRANSAC(
            self.iterations, self.inlier_threshold, self.random_state
        ).fit(floor).plane_
        self.transform_ = align_scene(self.plane_, X)
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        return self.transform_.apply(check_points(X))
