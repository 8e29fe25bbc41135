"""Random furnished rooms with a panning camera, for oracle evaluation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..geometry import BBox3D, CameraPose, box_closest_distance, look_at, point_segment_projection
from ..perception.config import uniform_frame_indices
from ..perception.scene import SceneObject, SceneSpec

__all__ = ["SceneConfig", "InfeasibleSceneError", "generate_scene", "CATEGORY_SIZES"]

# rough (length, width, height) in metres
CATEGORY_SIZES = {
    "chair": (0.5, 0.5, 0.9),
    "stool": (0.4, 0.4, 0.5),
    "lamp": (0.4, 0.4, 1.5),
    "plant": (0.45, 0.45, 0.8),
    "cabinet": (0.9, 0.5, 1.0),
    "trash can": (0.35, 0.35, 0.6),
    "table": (1.2, 0.8, 0.75),
    "sofa": (2.0, 0.9, 0.8),
    "tv": (1.2, 0.3, 0.7),
    "bed": (2.0, 1.6, 0.6),
    "desk": (1.3, 0.7, 0.75),
    "bookshelf": (0.9, 0.35, 1.8),
    "refrigerator": (0.8, 0.75, 1.8),
    "piano": (1.5, 0.6, 1.2),
    "stove": (0.75, 0.65, 0.9),
    "washer": (0.6, 0.6, 0.85),
    "toilet": (0.7, 0.45, 0.75),
    "sink": (0.6, 0.5, 0.9),
    "bathtub": (1.7, 0.75, 0.6),
    "fireplace": (1.2, 0.4, 1.1),
    "nightstand": (0.5, 0.4, 0.6),
    "printer": (0.5, 0.45, 0.4),
}


class InfeasibleSceneError(RuntimeError):
    pass


@dataclass
class SceneConfig:
    room_x: tuple = (5.5, 8.0)
    room_y: tuple = (5.0, 7.0)
    room_height: float = 2.8
    multi_categories: tuple = ("chair", "stool", "lamp", "plant", "cabinet", "trash can")
    single_categories: tuple = (
        "table", "sofa", "tv", "bed", "desk", "bookshelf", "refrigerator", "piano",
        "stove", "washer", "toilet", "sink", "bathtub", "fireplace", "nightstand", "printer",
    )
    n_multi: int = 4
    multi_count: tuple = (2, 3)
    n_single: int = 7
    n_obstruction_plants: int = 2
    min_separation: float = 0.3
    size_jitter: float = 0.15
    wall_margin: float = 0.2
    camera_height: float = 1.4
    camera_pitch_deg: float = 15.0
    camera_orbit_radius: float = 0.3
    camera_clearance: float = 1.1
    frame_count: int = 128
    fps: float = 4.0
    image_size: tuple = (640, 480)
    focal: float = 320.0
    detection_frames: int = 64
    max_attempts: int = 400
    max_restarts: int = 25

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)


def _trajectory(cfg: SceneConfig, center_xy, rng) -> list:
    yaw0 = rng.uniform(0, 2 * math.pi)
    tilt = math.tan(math.radians(cfg.camera_pitch_deg))
    w, h = cfg.image_size
    poses = []
    for f in range(cfg.frame_count):
        a = yaw0 + 2 * math.pi * f / cfg.frame_count
        pos = np.array([
            center_xy[0] + cfg.camera_orbit_radius * math.cos(a),
            center_xy[1] + cfg.camera_orbit_radius * math.sin(a),
            cfg.camera_height,
        ])
        target = pos + np.array([math.cos(a), math.sin(a), -tilt])
        poses.append(CameraPose(pos, look_at(pos, target), cfg.focal, cfg.focal,
                                w / 2, h / 2, w, h))
    return poses


def _visible_somewhere(center, poses, frames) -> bool:
    for f in frames:
        cam = poses[f]
        x, y, z = cam.world_to_camera(center)
        if z <= 0:
            continue
        u = cam.focal_x * x / z + cam.principal_x
        v = cam.focal_y * y / z + cam.principal_y
        if 0 <= u < cam.width and 0 <= v < cam.height:
            return True
    return False


class _Placer:
    def __init__(self, cfg, room_min, room_max, center_xy, poses, rng):
        self.cfg, self.rng = cfg, rng
        self.room_min, self.room_max = np.array(room_min), np.array(room_max)
        self.center_xy = np.array(center_xy)
        self.poses = poses
        self.frames = uniform_frame_indices(cfg.frame_count, cfg.detection_frames)
        self.boxes = []

    def size_of(self, category):
        base = np.array(CATEGORY_SIZES[category])
        size = base * self.rng.uniform(1 - self.cfg.size_jitter, 1 + self.cfg.size_jitter, 3)
        if self.rng.random() < 0.5:
            size[[0, 1]] = size[[1, 0]]
        return size

    def accepts(self, box: BBox3D) -> bool:
        lo, hi = box.lo, box.hi
        m = self.cfg.wall_margin
        if np.any(lo[:2] < self.room_min + m) or np.any(hi[:2] > self.room_max - m):
            return False
        nearest = np.clip(self.center_xy, lo[:2], hi[:2])
        if np.linalg.norm(nearest - self.center_xy) < self.cfg.camera_clearance:
            return False
        if any(box_closest_distance(box, b) < self.cfg.min_separation for b in self.boxes):
            return False
        return _visible_somewhere(box.center, self.poses, self.frames)

    def place_random(self, category) -> BBox3D:
        for _ in range(self.cfg.max_attempts):
            size = self.size_of(category)
            xy = self.rng.uniform(self.room_min + size[:2] / 2, self.room_max - size[:2] / 2)
            box = BBox3D.from_center_size([xy[0], xy[1], size[2] / 2], size)
            if self.accepts(box):
                self.boxes.append(box)
                return box
        raise InfeasibleSceneError(f"could not place a {category}")

    def place_between(self, category, a: BBox3D, b: BBox3D):
        """Put an object on the straight route between two boxes, or return None."""
        ca, cb = a.center, b.center
        for _ in range(self.cfg.max_attempts // 4):
            t = self.rng.uniform(0.35, 0.65)
            p = ca + t * (cb - ca)
            along = (cb - ca)[:2] / np.linalg.norm((cb - ca)[:2])
            side = np.array([-along[1], along[0]]) * self.rng.uniform(-0.08, 0.08)
            size = self.size_of(category)
            size[[0, 1]] = np.minimum(size[[0, 1]], 0.5)
            size[2] = np.clip(2 * p[2], 0.3, 1.8)
            center = np.array([p[0] + side[0], p[1] + side[1], size[2] / 2])
            box = BBox3D.from_center_size(center, size)
            t_obs, _, dist = point_segment_projection(center, ca, cb)
            if dist > 0.12 or not 0.2 < t_obs < 0.8:
                continue
            if self.accepts(box):
                self.boxes.append(box)
                return box
        return None


def generate_scene(config: SceneConfig | None = None, seed: int = 0,
                   scene_id: str | None = None) -> SceneSpec:
    """Deterministic random scene for ``seed``.

    Raises :class:`InfeasibleSceneError` when packing keeps failing.
    """
    cfg = config or SceneConfig()
    scene_id = scene_id or f"scene_{seed:05d}"
    for restart in range(cfg.max_restarts):
        rng = np.random.default_rng([seed, restart])
        try:
            return _try_generate(cfg, seed, scene_id, rng)
        except InfeasibleSceneError:
            continue
    raise InfeasibleSceneError(f"no feasible layout for seed {seed} after {cfg.max_restarts} restarts")


def _try_generate(cfg, seed, scene_id, rng) -> SceneSpec:
    room_max = (float(rng.uniform(*cfg.room_x)), float(rng.uniform(*cfg.room_y)))
    room_min = (0.0, 0.0)
    center_xy = (room_max[0] / 2, room_max[1] / 2)
    poses = _trajectory(cfg, center_xy, rng)
    placer = _Placer(cfg, room_min, room_max, center_xy, poses, rng)

    n_single = min(cfg.n_single + cfg.n_obstruction_plants, len(cfg.single_categories))
    singles = [str(c) for c in rng.choice(cfg.single_categories, size=n_single, replace=False)]
    multis = [str(c) for c in rng.choice(cfg.multi_categories, size=cfg.n_multi, replace=False)]
    placed = []  # (category, box)
    for cat in multis:
        for _ in range(int(rng.integers(cfg.multi_count[0], cfg.multi_count[1] + 1))):
            placed.append((cat, placer.place_random(cat)))
    plant_cats = singles[cfg.n_single:]
    single_boxes = []
    for cat in singles[: cfg.n_single]:
        box = placer.place_random(cat)
        placed.append((cat, box))
        single_boxes.append(box)

    for cat in plant_cats:
        pairs = [(i, j) for i in range(len(single_boxes)) for j in range(i + 1, len(single_boxes))
                 if np.linalg.norm(single_boxes[i].center[:2] - single_boxes[j].center[:2]) > 2.0]
        rng.shuffle(pairs)
        box = None
        for i, j in pairs[:10]:
            box = placer.place_between(cat, single_boxes[i], single_boxes[j])
            if box is not None:
                break
        if box is None:
            box = placer.place_random(cat)
        placed.append((cat, box))

    objects = [
        SceneObject(f"obj_{k:02d}", cat, box) for k, (cat, box) in enumerate(placed)
    ]
    return SceneSpec(
        scene_id=scene_id,
        objects=objects,
        trajectory=poses,
        room_min=room_min,
        room_max=room_max,
        room_height=cfg.room_height,
        fps=cfg.fps,
        rng_seed=int(seed),
    )
