"""Utility spatial relations over clustered instances.

Every public function resolves instance ids against an :class:`InstanceSet`
and returns the record layout the agent tools emit.
"""

from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import Instance, InstanceSet
from .geometry import euclidean_distance, point_segment_projection

__all__ = [
    "QUADRANTS",
    "UnknownInstanceError",
    "CategoryNameError",
    "UnalignedSceneError",
    "CoincidentPositionError",
    "ObstructionEvidence",
    "calculate_distance",
    "calculate_direction",
    "calculate_direction_backward",
    "flip_quadrant",
    "direction_quadrant",
    "compare_height",
    "calculate_obstruction",
    "appearance_order",
    "count_instances",
]

QUADRANTS = ("front-left", "front-right", "back-left", "back-right")
_FLIP = {
    "front-left": "back-right",
    "front-right": "back-left",
    "back-left": "front-right",
    "back-right": "front-left",
}
_INSTANCE_ID = re.compile(r"^.+_\d+$")

DEFAULT_OBSTRUCTION_THRESHOLD = 0.25
DEFAULT_HEIGHT_TOLERANCE = 0.05


class UnknownInstanceError(KeyError):
    def __str__(self):
        return self.args[0] if self.args else "unknown instance"


class CategoryNameError(ValueError):
    pass


class UnalignedSceneError(ValueError):
    pass


class CoincidentPositionError(ValueError):
    pass


def _resolve(instances, instance_id: str) -> Instance:
    if not isinstance(instances, InstanceSet):
        instances = InstanceSet(list(instances))
    inst = instances.get(instance_id)
    if inst is not None:
        return inst
    if not _INSTANCE_ID.match(str(instance_id)) and instance_id in instances.categories:
        raise CategoryNameError(
            f"{instance_id!r} is a category name; pass a specific instance id such as "
            f"'{instance_id}_1'"
        )
    raise UnknownInstanceError(f"unknown instance {instance_id!r}")


def _xyz(v) -> dict:
    return {"x": float(v[0]), "y": float(v[1]), "z": float(v[2])}


def calculate_distance(instances, reference_id: str, target_ids: Sequence[str],
                       ndigits: int | None = 4) -> dict:
    ref = _resolve(instances, reference_id)
    targets = [_resolve(instances, t) for t in target_ids]
    distances = {}
    for t in targets:
        d = euclidean_distance(ref.center, t.center)
        distances[t.instance_id] = round(d, ndigits) if ndigits is not None else d
    return {
        "reference_instance": ref.instance_id,
        "target_instances": [t.instance_id for t in targets],
        "distances": distances,
        "unit": "relative",
    }


def direction_quadrant(stand, face, target) -> tuple:
    """Quadrant of ``target`` for an observer at ``stand`` looking towards ``face``.

    Works on the ground-plane (x, y) components. Returns
    ``(quadrant, forward_offset, right_offset)``.
    """
    stand, face, target = (np.asarray(p, float)[:2] for p in (stand, face, target))
    forward = face - stand
    norm = np.linalg.norm(forward)
    if norm <= 1e-9:
        raise CoincidentPositionError("standing and facing positions coincide in the ground plane")
    forward /= norm
    right = np.array([forward[1], -forward[0]])
    rel = target - stand
    df, dr = float(rel @ forward), float(rel @ right)
    quadrant = ("front" if df >= 0 else "back") + "-" + ("right" if dr > 0 else "left")
    return quadrant, df, dr


def flip_quadrant(quadrant: str) -> str:
    return _FLIP[quadrant]


def _three(instances, a, b, c):
    if len({a, b, c}) != 3:
        raise ValueError("the three instances must be distinct")
    return _resolve(instances, a), _resolve(instances, b), _resolve(instances, c)


def calculate_direction(instances, stand_id: str, face_id: str, target_id: str) -> dict:
    stand, face, target = _three(instances, stand_id, face_id, target_id)
    quadrant, df, dr = direction_quadrant(stand.center, face.center, target.center)
    return {
        "stand_instance": stand.instance_id,
        "face_instance": face.instance_id,
        "target_instance": target.instance_id,
        "direction": quadrant,
        "evidence": {
            "stand_center": _xyz(stand.center),
            "face_center": _xyz(face.center),
            "target_center": _xyz(target.center),
            "forward_offset": round(df, 4),
            "right_offset": round(dr, 4),
        },
    }


def calculate_direction_backward(instances, stand_id: str, face_id: str, target_id: str) -> dict:
    """Direction with the observer's back to ``face_id``."""
    rec = calculate_direction(instances, stand_id, face_id, target_id)
    rec["direction"] = flip_quadrant(rec["direction"])
    ev = rec["evidence"]
    ev["forward_offset"], ev["right_offset"] = -ev["forward_offset"], -ev["right_offset"]
    return rec


def compare_height(instances, id_a: str, id_b: str,
                   epsilon_z: float = DEFAULT_HEIGHT_TOLERANCE) -> dict:
    if not isinstance(instances, InstanceSet) or not instances.aligned:
        raise UnalignedSceneError("height comparison requires an aligned scene")
    a, b = _resolve(instances, id_a), _resolve(instances, id_b)
    za, zb = float(a.center[2]), float(b.center[2])
    if za - zb > epsilon_z:
        relation = "a_higher"
    elif za - zb < -epsilon_z:
        relation = "b_higher"
    else:
        relation = "equal"
    return {
        "instance_a": a.instance_id,
        "instance_b": b.instance_id,
        "z_a": round(za, 4),
        "z_b": round(zb, 4),
        "relation": relation,
    }


@dataclass(frozen=True)
class ObstructionEvidence:
    source_center: tuple
    destination_center: tuple
    obstruction_center: tuple
    t: float
    closest_point: tuple
    distance_to_segment: float
    threshold: float

    def to_record(self) -> dict:
        return {
            "source_center": _xyz(self.source_center),
            "destination_center": _xyz(self.destination_center),
            "obstruction_center": _xyz(self.obstruction_center),
            "t": self.t,
            "closest_point": _xyz(self.closest_point),
            "distance_to_segment": self.distance_to_segment,
            "threshold": self.threshold,
        }


def calculate_obstruction(instances, source_id: str, destination_id: str, obstruction_id: str,
                          threshold: float = DEFAULT_OBSTRUCTION_THRESHOLD) -> dict:
    """Is ``obstruction_id`` strictly inside the source-destination route corridor?"""
    src, dst, obs = _three(instances, source_id, destination_id, obstruction_id)
    t, closest, dist = point_segment_projection(obs.center, src.center, dst.center)
    evidence = ObstructionEvidence(
        tuple(src.center), tuple(dst.center), tuple(obs.center),
        t, tuple(closest), dist, float(threshold),
    )
    return {
        "source_instance": src.instance_id,
        "destination_instance": dst.instance_id,
        "obstruction_instance": obs.instance_id,
        "is_obstruction": bool(dist < threshold and 0.0 < t < 1.0),
        "evidence": evidence.to_record(),
    }


def appearance_order(views_by_category: Mapping) -> list:
    """Categories ordered by the first frame they were seen in (ties by name).

    Values are iterables of frame indices, of view objects with a ``frame``
    attribute, or of ``{"frame": ...}`` records.
    """
    first = {}
    for cat, views in views_by_category.items():
        frames = [_frame_of(v) for v in views]
        if not frames:
            raise ValueError(f"category {cat!r} has no views")
        first[cat] = min(frames)
    return sorted(first, key=lambda c: (first[c], c))


def _frame_of(view) -> int:
    if isinstance(view, Mapping):
        return int(view["frame"])
    if hasattr(view, "frame"):
        return int(view.frame)
    return int(view)


def count_instances(instances, category: str) -> int:
    return sum(1 for inst in instances if inst.category == category)
