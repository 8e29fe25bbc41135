"""Perception over the wire: a client provider and the matching request handler.

Requests are ``{"tool": <method>, "args": {...}}``. Boxes travel as
``[x_min, y_min, x_max, y_max]`` lists and points as ``[x, y, z]``.
"""

from __future__ import annotations

import numpy as np

from ..clustering import ObjectView
from ..geometry import BBox2D
from ..wire import RemoteCallError
from .config import SamplingPolicy
from .synthetic import InvalidSeedError
from .tracking import Tracklet

__all__ = ["RemoteProvider", "provider_handler"]

_ERRORS = {"InvalidSeedError": InvalidSeedError, "ValueError": ValueError, "IndexError": IndexError}


def _dets_to_wire(detections) -> dict:
    return {c: [[int(f), list(b.to_list() if isinstance(b, BBox2D) else b)] for f, b in dets]
            for c, dets in detections.items()}


def _dets_from_wire(data) -> dict:
    return {c: [(int(f), BBox2D.from_list(b)) for f, b in dets] for c, dets in data.items()}


class RemoteProvider:
    """Provider whose every call is forwarded through a :mod:`spatial_agent.wire` transport."""

    def __init__(self, transport):
        self.transport = transport
        info = self._call("info")
        self.video_path = info["video_path"]
        self.frame_count = int(info["frame_count"])
        self.policy = SamplingPolicy(**info["policy"])
        self.cache: dict = {}

    def _call(self, tool: str, **args):
        try:
            return self.transport.request({"tool": tool, "args": args})
        except RemoteCallError as exc:
            raise _ERRORS.get(exc.kind, RuntimeError)(exc.detail or str(exc)) from None

    def detect_2d(self, categories) -> dict:
        return _dets_from_wire(self._call("detect_2d", categories=list(categories)))

    def lift_3d(self, detections) -> list:
        rows = self._call("lift_3d", detections=_dets_to_wire(detections))
        return [ObjectView(r["frame"], BBox2D.from_list(r["bbox"]), tuple(r["center"]), r["category"])
                for r in rows]

    def track(self, category: str, frame: int, box) -> Tracklet:
        box = box.to_list() if isinstance(box, BBox2D) else list(box)
        rec = self._call("track", category=category, frame=int(frame), bbox=box)
        return Tracklet(rec["object_ref"], rec["category"],
                        [(v["frame"], BBox2D.from_list(v["bbox"])) for v in rec["views"]],
                        rec["termination_reason"])

    def floor_points(self) -> list:
        return [np.asarray(p, float).reshape(-1, 3) for p in self._call("floor_points")]

    def scene_points(self) -> np.ndarray:
        return np.asarray(self._call("scene_points"), float).reshape(-1, 3)

    def answer_query(self, prompt: str, query_type: str = "video", frame_idx: int = -1) -> str:
        return self._call("answer_query", prompt=prompt, query_type=query_type, frame_idx=frame_idx)


def provider_handler(provider):
    """Request handler exposing ``provider`` for :func:`spatial_agent.wire.serve_lines`."""

    def info():
        return {"video_path": provider.video_path,
                "frame_count": int(provider.scene.frame_count),
                "policy": provider.policy.to_dict()}

    def lift_3d(detections):
        views = provider.lift_3d(_dets_from_wire(detections))
        return [{"frame": v.frame, "bbox": v.box.to_list(), "center": list(v.center),
                 "category": v.category} for v in views]

    def track(category, frame, bbox):
        return provider.track(category, frame, BBox2D.from_list(bbox)).to_record()

    table = {
        "info": info,
        "detect_2d": lambda categories: _dets_to_wire(provider.detect_2d(categories)),
        "lift_3d": lift_3d,
        "track": track,
        "floor_points": lambda: [p.tolist() for p in provider.floor_points()],
        "scene_points": lambda: provider.scene_points().tolist(),
        "answer_query": provider.answer_query,
    }

    def handle(request: dict):
        tool = request.get("tool")
        if tool not in table:
            raise ValueError(f"unknown tool {tool!r}")
        args = request.get("args") or {}
        if not isinstance(args, dict):
            raise ValueError("args must be an object")
        return table[tool](**args)

    return handle
