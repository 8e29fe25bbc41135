"""Ground-truth cognitive maps: object centers snapped to a 10x10 grid."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import jsonschema
import numpy as np

from ..perception.scene import SceneSpec

__all__ = ["CognitiveMap", "cognitive_map", "cognitive_map_schema", "validate_cognitive_map", "GRID"]

GRID = 10


@dataclass
class CognitiveMap:
    scene_id: str
    entries: dict  # category -> list of (gx, gy)
    origin: tuple
    scale: float

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "grid": [GRID, GRID],
            "cognitive_map": {c: [list(p) for p in pts] for c, pts in self.entries.items()},
        }


def _snap(value: float) -> int:
    # round half up, then keep inside the grid against float noise
    return min(GRID - 1, max(0, math.floor(value + 0.5)))


def cognitive_map(scene: SceneSpec) -> CognitiveMap:
    """One shared scale for both axes keeps the scene's x-y aspect ratio."""
    centers = np.array([o.center for o in scene.objects]).reshape(-1, 3)[:, :2]
    if len(centers) == 0:
        raise ValueError("scene has no objects")
    lo = centers.min(axis=0)
    extent = float((centers.max(axis=0) - lo).max())
    if extent <= 1e-9:
        raise ValueError("degenerate scene extent: all object centers coincide in x-y")
    scale = (GRID - 1) / extent
    entries: dict = {}
    for o, (x, y) in zip(scene.objects, centers):
        cell = (_snap((x - lo[0]) * scale), _snap((y - lo[1]) * scale))
        entries.setdefault(o.category, []).append(cell)
    entries = {c: sorted(v) for c, v in sorted(entries.items())}
    return CognitiveMap(scene.scene_id, entries, (float(lo[0]), float(lo[1])), scale)


@lru_cache(maxsize=None)
def cognitive_map_schema() -> dict:
    text = resources.files("spatial_agent").joinpath("schemas/cognitive_map.schema.json").read_text()
    return json.loads(text)


def validate_cognitive_map(doc: dict) -> None:
    jsonschema.validate(doc, cognitive_map_schema())
