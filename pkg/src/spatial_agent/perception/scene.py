"""Ground-truth scene description and its JSON file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from ..clustering import Instance, InstanceSet
from ..geometry import BBox3D, CameraPose, Plane

__all__ = ["SceneObject", "SceneSpec", "SceneFormatError", "load_scene", "save_scene",
           "validate_scene_dict", "scene_schema"]


class SceneFormatError(ValueError):
    pass


@lru_cache(maxsize=None)
def scene_schema() -> dict:
    text = resources.files("spatial_agent").joinpath("schemas/scene.schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class SceneObject:
    object_id: str
    category: str
    box3d: BBox3D
    center: tuple = None

    def __post_init__(self):
        center = self.box3d.center if self.center is None else np.asarray(self.center, float)
        if not self.box3d.contains(center, tol=1e-9):
            raise SceneFormatError(f"center of {self.object_id} lies outside its box")
        object.__setattr__(self, "center", tuple(float(c) for c in center))


@dataclass
class SceneSpec:
    scene_id: str
    objects: list
    trajectory: list
    room_min: tuple = (0.0, 0.0)
    room_max: tuple = (5.0, 5.0)
    room_height: float = 2.8
    fps: float = 4.0
    rng_seed: int = 0
    ground_plane: Plane = field(default_factory=lambda: Plane((0.0, 0.0, 1.0), 0.0))

    def __post_init__(self):
        if not self.trajectory:
            raise SceneFormatError("trajectory must contain at least one camera pose")
        ids = [o.object_id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise SceneFormatError("object ids must be unique")
        if not np.allclose(self.ground_plane.n, [0, 0, 1]) or abs(self.ground_plane.offset) > 1e-9:
            raise SceneFormatError("ground plane must be z=0 in the world frame")

    @property
    def frame_count(self) -> int:
        return len(self.trajectory)

    @property
    def categories(self) -> list:
        return sorted({o.category for o in self.objects})

    def objects_of(self, category: str) -> list:
        return [o for o in self.objects if o.category == category]

    def counts(self) -> dict:
        out = {}
        for o in self.objects:
            out[o.category] = out.get(o.category, 0) + 1
        return out

    def get(self, object_id: str) -> SceneObject:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(object_id)

    def gt_instances(self) -> InstanceSet:
        """Ground-truth objects as an aligned instance set keyed by object id."""
        return InstanceSet(
            [Instance(o.object_id, o.category, np.array(o.center), o.box3d) for o in self.objects],
            aligned=True,
        )

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "rng_seed": self.rng_seed,
            "fps": self.fps,
            "room": {"min": list(self.room_min), "max": list(self.room_max),
                     "height": self.room_height},
            "ground_plane": self.ground_plane.to_dict(),
            "objects": [
                {"object_id": o.object_id, "category": o.category,
                 "bbox_3d": o.box3d.to_list(), "center": list(o.center)}
                for o in self.objects
            ],
            "frame_count": self.frame_count,
            "trajectory": [cam.to_dict() for cam in self.trajectory],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        validate_scene_dict(d)
        try:
            objects = [
                SceneObject(o["object_id"], o["category"], BBox3D.from_list(o["bbox_3d"]),
                            tuple(o["center"]))
                for o in d["objects"]
            ]
            trajectory = [CameraPose.from_dict(c) for c in d["trajectory"]]
            return cls(
                scene_id=d["scene_id"],
                objects=objects,
                trajectory=trajectory,
                room_min=tuple(d["room"]["min"]),
                room_max=tuple(d["room"]["max"]),
                room_height=d["room"]["height"],
                fps=d["fps"],
                rng_seed=d["rng_seed"],
                ground_plane=Plane.from_dict(d["ground_plane"]),
            )
        except SceneFormatError:
            raise
        except ValueError as exc:
            raise SceneFormatError(str(exc)) from exc


def validate_scene_dict(d: dict) -> None:
    try:
        jsonschema.validate(d, scene_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SceneFormatError(f"{where}: {exc.message}") from None
    if d["frame_count"] != len(d["trajectory"]):
        raise SceneFormatError("frame_count does not match the trajectory length")


def save_scene(scene: SceneSpec, path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=1) + "\n")


def load_scene(path) -> SceneSpec:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SceneFormatError(f"{path}: invalid JSON ({exc})") from None
    return SceneSpec.from_dict(data)
