"""Oracle perception over a :class:`SceneSpec`.

Stands in for the detector, tracker and geometry model. Outputs are computed
from ground truth and optionally corrupted by a :class:`NoiseModel`. Every
random draw is seeded from the scene seed, the tool name and a content key
(frame, object), so results do not depend on call order.
"""

from __future__ import annotations

import threading
import zlib
from typing import Iterable, Mapping, Optional

import numpy as np

from ..clustering import ObjectView
from ..geometry import BBox2D, RigidTransform, box_closest_distance
from ..vocabulary import find_categories
from .config import NoiseModel, SamplingPolicy, uniform_frame_indices
from .scene import SceneSpec
from .tracking import Tracklet, run_tracker

__all__ = [
    "SyntheticProvider",
    "InvalidSeedError",
    "REFUSAL",
    "ROOM_AREA_MARKER",
    "DISTANCE_MARKER",
    "format_number",
]

REFUSAL = "I cannot answer this query from the available video evidence."
ROOM_AREA_MARKER = "estimating room size (area)"
DISTANCE_MARKER = "estimating REAL-WORLD distance between two objects"
NEAR_PLANE = 1e-3


class InvalidSeedError(ValueError):
    pass


def _crc(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def format_number(x: float, ndigits: int = 2) -> str:
    s = f"{x:.{ndigits}f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _project_box(corners_cam: np.ndarray, cam) -> Optional[BBox2D]:
    """Image-space hull of a box given its 8 corners in camera coordinates.

    Edges crossing the near plane are clipped so partially visible boxes
    project correctly.
    """
    pts = [c for c in corners_cam if c[2] > NEAR_PLANE]
    for a in range(8):
        for b in range(a + 1, 8):
            if bin(a ^ b).count("1") != 1:
                continue
            za, zb = corners_cam[a][2], corners_cam[b][2]
            if (za > NEAR_PLANE) != (zb > NEAR_PLANE):
                s = (NEAR_PLANE - za) / (zb - za)
                pts.append(corners_cam[a] + s * (corners_cam[b] - corners_cam[a]))
    if not pts:
        return None
    pts = np.array(pts)
    u = cam.focal_x * pts[:, 0] / pts[:, 2] + cam.principal_x
    v = cam.focal_y * pts[:, 1] / pts[:, 2] + cam.principal_y
    return BBox2D(float(u.min()), float(v.min()), float(u.max()), float(v.max())).clip(
        cam.width, cam.height
    )


def _round_box(box: BBox2D) -> BBox2D:
    return BBox2D(*(round(c, 2) for c in box.to_list()))


class SyntheticProvider:
    """Perception provider answering from scene ground truth.

    Parameters
    ----------
    scene : SceneSpec
    policy : SamplingPolicy, optional
    noise : NoiseModel, optional
    frame : RigidTransform, optional
        Maps world coordinates to the provider's "reconstruction" frame. Lifted
        points are reported in this frame, so scene modeling has something to
        undo. Defaults to the identity.
    salt : int
        Mixed into every seed; vary it to draw independent noise realisations.
    """

    def __init__(self, scene: SceneSpec, policy: SamplingPolicy | None = None,
                 noise: NoiseModel | None = None, frame: RigidTransform | None = None,
                 salt: int = 0):
        self.scene = scene
        self.policy = policy or SamplingPolicy()
        self.noise = noise or NoiseModel()
        self.frame = frame or RigidTransform()
        self.salt = int(salt)
        self.video_path = f"synthetic://{scene.scene_id}"
        self._centers = np.array([o.center for o in scene.objects]).reshape(-1, 3)
        self._corners = [o.box3d.corners() for o in scene.objects]
        self._obj_index = {o.object_id: i for i, o in enumerate(scene.objects)}
        self._frame_cache: dict = {}
        self._provenance: dict = {}
        self._lock = threading.Lock()
        self.cache: dict = {}  # free-form memo for derived results (e.g. scene modeling)

    # -- helpers -----------------------------------------------------------
    def _rng(self, tool: str, *keys: int) -> np.random.Generator:
        return np.random.default_rng([self.scene.rng_seed, _crc(tool), self.salt, *keys])

    def _frame_view(self, f: int):
        """(visible mask, exact boxes) for frame ``f``; cached."""
        cached = self._frame_cache.get(f)
        if cached is not None:
            return cached
        cam = self.scene.trajectory[f]
        cc = cam.world_to_camera(self._centers)
        visible = np.zeros(len(self._centers), dtype=bool)
        boxes = [None] * len(self._centers)
        for i, (x, y, z) in enumerate(cc):
            if z <= 0:
                continue
            u = cam.focal_x * x / z + cam.principal_x
            v = cam.focal_y * y / z + cam.principal_y
            if 0 <= u < cam.width and 0 <= v < cam.height:
                visible[i] = True
                boxes[i] = _project_box(cam.world_to_camera(self._corners[i]), cam)
        with self._lock:
            self._frame_cache[f] = (visible, boxes)
        return visible, boxes

    def is_visible(self, object_id: str, frame: int) -> bool:
        return bool(self._frame_view(frame)[0][self._obj_index[object_id]])

    def _check_frame(self, f: int) -> int:
        f = int(f)
        if not 0 <= f < self.scene.frame_count:
            raise IndexError(f"frame {f} out of range for {self.scene.frame_count}-frame video")
        return f

    def _jitter(self, box: BBox2D, rng, cam) -> BBox2D:
        sigma = self.noise.box_jitter_sigma
        if sigma > 0:
            c = np.array(box.to_list()) + rng.normal(0.0, sigma, 4)
            box = BBox2D(min(c[0], c[2]), min(c[1], c[3]), max(c[0], c[2]), max(c[1], c[3]))
            box = box.clip(cam.width, cam.height)
        return _round_box(box)

    def _remember(self, category, frame, box, object_idx):
        with self._lock:
            self._provenance[(category, frame, tuple(box.to_list()))] = object_idx

    def _associate(self, category: str, frame: int, box: BBox2D) -> Optional[int]:
        key = (category, frame, tuple(_round_box(box).to_list()))
        if key in self._provenance:
            return self._provenance[key]
        visible, boxes = self._frame_view(frame)
        best, best_iou = None, 0.1
        for i, o in enumerate(self.scene.objects):
            if o.category == category and visible[i]:
                iou = boxes[i].iou(box)
                if iou > best_iou:
                    best, best_iou = i, iou
        return best

    def detection_frames(self) -> np.ndarray:
        return uniform_frame_indices(self.scene.frame_count, self.policy.detection_frames)

    # -- provider interface --------------------------------------------------
    def detect_2d(self, categories: Iterable[str]) -> dict:
        """Per-category list of ``(frame, BBox2D)`` over uniformly sampled frames."""
        categories = list(dict.fromkeys(categories))
        if not categories:
            raise ValueError("at least one category is required")
        out = {c: [] for c in categories}
        wanted = {c: [i for i, o in enumerate(self.scene.objects) if o.category == c]
                  for c in categories}
        for f in self.detection_frames():
            f = int(f)
            cam = self.scene.trajectory[f]
            visible, boxes = self._frame_view(f)
            for c in categories:
                for i in wanted[c]:
                    if not visible[i]:
                        continue
                    rng = self._rng("detect_2d", f, i)
                    if rng.random() < self.noise.miss_rate:
                        continue
                    box = self._jitter(boxes[i], rng, cam)
                    self._remember(c, f, box, i)
                    out[c].append((f, box))
                if self.noise.false_positive_rate > 0:
                    rng = self._rng("detect_2d/fp", f, _crc(c))
                    if rng.random() < self.noise.false_positive_rate:
                        w, h = rng.uniform(20, 160, 2)
                        x, y = rng.uniform(0, cam.width - w), rng.uniform(0, cam.height - h)
                        box = _round_box(BBox2D(x, y, x + w, y + h))
                        self._remember(c, f, box, None)
                        out[c].append((f, box))
        for c in categories:
            out[c].sort(key=lambda fb: (fb[0], fb[1].to_list()))
        return out

    def lift_3d(self, detections: Mapping) -> list:
        """Lift detections to :class:`ObjectView` records in the reconstruction frame."""
        views = []
        lo = np.array([*self.scene.room_min, 0.0])
        hi = np.array([*self.scene.room_max, self.scene.room_height])
        for category, dets in detections.items():
            for frame, box in dets:
                frame = self._check_frame(frame)
                box = box if isinstance(box, BBox2D) else BBox2D.from_list(box)
                idx = self._associate(category, frame, box)
                if idx is None:
                    rng = self._rng("lift_3d/fp", frame, _crc(repr(box.to_list())))
                    world = rng.uniform(lo, hi)
                else:
                    rng = self._rng("lift_3d", frame, idx)
                    world = self._centers[idx].copy()
                    if self.noise.center_sigma > 0:
                        world = world + rng.normal(0.0, self.noise.center_sigma, 3)
                center = self.frame.apply(world)
                views.append(ObjectView(frame, box, tuple(center), category))
        return views

    def track(self, category: str, frame: int, box) -> Tracklet:
        frame = self._check_frame(frame)
        box = box if isinstance(box, BBox2D) else BBox2D.from_list(box)
        idx = self._associate(category, frame, box)
        if idx is None:
            # nearest projected center among visible objects of the category
            visible, boxes = self._frame_view(frame)
            cx, cy = box.center
            cands = [
                (np.hypot(boxes[i].center[0] - cx, boxes[i].center[1] - cy), i)
                for i, o in enumerate(self.scene.objects)
                if o.category == category and visible[i] and boxes[i].iou(box) > 0
            ]
            if not cands:
                raise InvalidSeedError(
                    f"seed box {box.to_list()} at frame {frame} matches no {category!r}"
                )
            idx = min(cands)[1]
        obj = self.scene.objects[idx]
        stride = self.policy.tracking_stride(self.scene.fps)
        frames, reason = run_tracker(
            lambda f: bool(self._frame_view(f)[0][idx]), frame, self.scene.frame_count,
            stride, self.policy.tracking_cap, self.policy.absence_limit,
        )
        tracklet = Tracklet(obj.object_id, category, termination_reason=reason)
        for f in frames:
            if f == frame:
                tb = _round_box(box)
            else:
                tb = self._jitter(self._frame_view(f)[1][idx], self._rng("track", f, idx),
                                  self.scene.trajectory[f])
            self._remember(category, f, tb, idx)
            tracklet.entries.append((f, tb))
        return tracklet

    def floor_points(self, points_per_frame: int = 200) -> list:
        """Per sampled frame, lifted points of the visible floor (plus outliers)."""
        lo = np.array([*self.scene.room_min, 0.0])
        hi = np.array([*self.scene.room_max, self.scene.room_height])
        out = []
        for f in self.detection_frames():
            f = int(f)
            cam = self.scene.trajectory[f]
            rng = self._rng("floor_points", f)
            u = rng.uniform(0, cam.width, points_per_frame)
            v = rng.uniform(0, cam.height, points_per_frame)
            rays = np.stack([(u - cam.principal_x) / cam.focal_x,
                             (v - cam.principal_y) / cam.focal_y,
                             np.ones_like(u)], axis=1) @ cam.rotation
            with np.errstate(divide="ignore", invalid="ignore"):
                t = -cam.position[2] / rays[:, 2]
            hit = (rays[:, 2] < 0) & np.isfinite(t) & (t > 0)
            pts = cam.position + t[:, None] * rays
            inside = hit & np.all((pts[:, :2] >= lo[:2]) & (pts[:, :2] <= hi[:2]), axis=1)
            pts = pts[inside]
            if len(pts) == 0:
                out.append(np.empty((0, 3)))
                continue
            pts[:, 2] = 0.0
            if self.noise.center_sigma > 0:
                pts = pts + rng.normal(0.0, self.noise.center_sigma, pts.shape)
            if self.noise.false_positive_rate > 0:
                outlier = rng.random(len(pts)) < self.noise.false_positive_rate
                pts[outlier] = rng.uniform(lo, hi, (int(outlier.sum()), 3))
            out.append(self.frame.apply(pts))
        return out

    def scene_points(self, points_per_object: int = 30) -> np.ndarray:
        """Points sampled inside every object box, in the reconstruction frame."""
        chunks = []
        for i, o in enumerate(self.scene.objects):
            rng = self._rng("scene_points", i)
            chunks.append(rng.uniform(o.box3d.lo, o.box3d.hi, (points_per_object, 3)))
        pts = np.concatenate(chunks) if chunks else np.empty((0, 3))
        return self.frame.apply(pts)

    def answer_query(self, prompt: str, query_type: str = "video", frame_idx: int = -1) -> str:
        if query_type not in ("video", "image"):
            raise ValueError(f"query_type must be 'video' or 'image', got {query_type!r}")
        if query_type == "image":
            if frame_idx is None or frame_idx < 0:
                raise ValueError("frame_idx is required for image queries")
            self._check_frame(frame_idx)
        question = prompt.split("QUESTION:", 1)[1] if "QUESTION:" in prompt else prompt
        if ROOM_AREA_MARKER in prompt:
            (x0, y0), (x1, y1) = self.scene.room_min, self.scene.room_max
            return f"<answer>{format_number((x1 - x0) * (y1 - y0))}</answer>"
        if DISTANCE_MARKER in prompt:
            found = find_categories(question, self.scene.categories)
            if len(found) == 2:
                objs = [self.scene.objects_of(c) for c in found]
                if all(len(o) == 1 for o in objs):
                    d = box_closest_distance(objs[0][0].box3d, objs[1][0].box3d)
                    return f"<answer>{format_number(d)}</answer>"
        return REFUSAL
