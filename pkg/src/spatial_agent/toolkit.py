"""Perception-backed spatial tools: 2D views, tracklets, 3D instances, ground plane.

Each function takes a perception provider (synthetic or remote) and returns a
JSON-ready record. The agent layer wraps these with schemas; they are also
usable directly.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Mapping

import numpy as np

from .clustering import Instance, InstanceSet, ObjectView, constrained_greedy, dbscan, rank_instances
from .geometry import BBox2D, Plane, align_scene, average_planes, fit_plane_ransac
from .geometry import DegeneratePlaneError, InsufficientPointsError
from .perception.synthetic import InvalidSeedError

__all__ = [
    "CLUSTERING_METHODS",
    "parse_objects",
    "object_2d_detection",
    "parse_output_2d",
    "object_tracking",
    "track_groups",
    "object_3d_detection",
    "instances_from_output",
    "scene_modeling",
    "aligning_transform",
]

CLUSTERING_METHODS = ("constrained_greedy", "dbscan")
TRACK_IOU = 0.5


def parse_objects(objects) -> list:
    """Comma-separated (or list) category names, de-duplicated in order."""
    if isinstance(objects, str):
        items = objects.split(",")
    else:
        items = list(objects)
    names = [str(o).strip().lower() for o in items]
    names = [n for n in dict.fromkeys(names) if n]
    if not names:
        raise ValueError("objects must name at least one category")
    return names


def object_2d_detection(provider, objects) -> dict:
    """Category-level views: ``{category: {"views": [{"frame", "bbox"}, ...]}}``."""
    detections = provider.detect_2d(parse_objects(objects))
    return {
        cat: {"views": [{"frame": int(f), "bbox": b.to_list()} for f, b in dets]}
        for cat, dets in detections.items()
    }


def parse_output_2d(output_2d: Mapping) -> dict:
    """Inverse of :func:`object_2d_detection`: ``{category: [(frame, BBox2D)]}``."""
    if not isinstance(output_2d, Mapping):
        raise ValueError("output_2d must be a mapping of category -> {'views': [...]}")
    out = {}
    for cat, rec in output_2d.items():
        if not isinstance(rec, Mapping) or not isinstance(rec.get("views"), list):
            raise ValueError(f"output_2d[{cat!r}] must contain a 'views' list")
        dets = []
        for k, v in enumerate(rec["views"]):
            try:
                dets.append((int(v["frame"]), BBox2D.from_list(v["bbox"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"output_2d[{cat!r}]['views'][{k}] is malformed: {exc}") from None
        out[str(cat)] = dets
    return out


def track_groups(provider, category: str, detections: list) -> tuple:
    """Seed tracklets from detections and group the views they cover.

    Detections are visited in frame order; each one not yet covered by an
    earlier tracklet seeds a new run. A tracklet absorbs the best-overlapping
    uncovered detection at each of its frames (IoU >= 0.5); frames where no
    detection matches contribute a track-only view.

    Returns ``(entries, groups, tracklets)`` where ``entries`` lists
    ``(frame, BBox2D)`` (all detections first, then track-only views) and
    ``groups`` holds index lists into ``entries``.
    """
    dets = list(detections)
    order = sorted(range(len(dets)), key=lambda k: (dets[k][0], dets[k][1].to_list()))
    by_frame = defaultdict(list)
    for k in order:
        by_frame[dets[k][0]].append(k)
    assigned = [False] * len(dets)
    entries = list(dets)
    groups, tracklets = [], []
    for k in order:
        if assigned[k]:
            continue
        assigned[k] = True
        frame, box = dets[k]
        try:
            tracklet = provider.track(category, frame, box)
        except InvalidSeedError:
            groups.append([k])
            continue
        tracklets.append(tracklet)
        group = [k]
        for f, tbox in tracklet.entries[1:]:
            best, best_iou = None, TRACK_IOU
            for j in by_frame.get(f, ()):
                if not assigned[j]:
                    iou = dets[j][1].iou(tbox)
                    if iou >= best_iou:
                        best, best_iou = j, iou
            if best is None:
                entries.append((f, tbox))
                group.append(len(entries) - 1)
            else:
                assigned[best] = True
                group.append(best)
        groups.append(group)
    return entries, groups, tracklets


def object_tracking(provider, output_2d: Mapping) -> dict:
    """Tracklets seeded from 2D detections, per category."""
    parsed = parse_output_2d(output_2d)
    out = {}
    for cat, dets in parsed.items():
        _, _, tracklets = track_groups(provider, cat, dets)
        out[cat] = [t.to_record() for t in tracklets]
    return {"video_path": provider.video_path, "tracklets": out}


def _plane_record(plane: Plane) -> dict:
    return {"normal": [round(float(c), 6) + 0.0 for c in plane.normal],
            "offset": round(plane.offset, 6) + 0.0}


def aligning_transform(provider, iterations: int = 1000, inlier_threshold: float = 0.02,
                       seed: int = 0, min_points: int = 10) -> tuple:
    """``(RigidTransform, record)`` taking the reconstruction frame to the aligned frame.

    Planes are fitted per frame on the lifted floor points, averaged, and the
    up side is voted by the reconstructed scene points. Memoised on the
    provider since every aligned tool call needs it.
    """
    key = ("scene_modeling", iterations, float(inlier_threshold), seed, min_points)
    cache = getattr(provider, "cache", None)
    if cache is not None and key in cache:
        return cache[key]
    planes, inliers, total = [], 0, 0
    for k, pts in enumerate(provider.floor_points()):
        pts = np.asarray(pts, float).reshape(-1, 3)
        if len(pts) < min_points:
            continue
        try:
            plane, idx = fit_plane_ransac(pts, iterations, inlier_threshold, seed=seed + k)
        except (InsufficientPointsError, DegeneratePlaneError):
            continue
        planes.append(plane)
        inliers += len(idx)
        total += len(pts)
    if not planes:
        raise RuntimeError("no frame had enough floor points to fit a ground plane")
    ground = average_planes(planes)
    transform = align_scene(ground, provider.scene_points())
    up = transform.rotation.T @ np.array([0.0, 0.0, 1.0])
    record = {
        "video_path": provider.video_path,
        "ground_plane": _plane_record(ground),
        "up_direction": [round(float(c), 6) + 0.0 for c in up],
        "transform": {
            "rotation": (np.round(transform.rotation, 6) + 0.0).tolist(),
            "translation": (np.round(transform.translation, 6) + 0.0).tolist(),
        },
        "frames_used": len(planes),
        "inlier_ratio": round(inliers / total, 4),
    }
    if cache is not None:
        cache[key] = (transform, record)
    return transform, record


def scene_modeling(provider, **kwargs) -> dict:
    return aligning_transform(provider, **kwargs)[1]


def object_3d_detection(provider, output_2d: Mapping, using_tracking: bool = False,
                        aligned_scene: bool = False, method: str = "constrained_greedy",
                        epsilon: float = 0.5, min_points: int = 2) -> dict:
    """Physical instances from category-level views.

    Views are lifted to 3D, optionally pre-grouped by tracklets, clustered per
    category and ranked by member count. With ``aligned_scene`` the views are
    first mapped into the gravity-aligned frame from :func:`aligning_transform`.
    """
    if method not in CLUSTERING_METHODS:
        raise ValueError(f"method must be one of {CLUSTERING_METHODS}, got {method!r}")
    parsed = parse_output_2d(output_2d)
    transform = aligning_transform(provider)[0] if aligned_scene else None
    instances = []
    for cat, dets in parsed.items():
        if using_tracking:
            entries, groups, _ = track_groups(provider, cat, dets)
        else:
            entries, groups = dets, None
        views = provider.lift_3d({cat: entries})
        if transform is not None:
            views = [ObjectView(v.frame, v.box, tuple(transform.apply(np.array(v.center))), v.category)
                     for v in views]
        if not views:
            continue
        if method == "constrained_greedy":
            instances.extend(constrained_greedy(views, epsilon, tracks=groups))
        else:
            instances.extend(dbscan(views, epsilon, min_points))
    ranked = rank_instances(instances)
    return {
        "video_path": provider.video_path,
        "using_tracking": bool(using_tracking),
        "aligned_scene": bool(aligned_scene),
        "instances": [inst.to_record() for inst in ranked],
    }


def instances_from_output(tool_3d_output) -> InstanceSet:
    """Rebuild an :class:`InstanceSet` from a 3D detection record (or bare list)."""
    if isinstance(tool_3d_output, Mapping):
        records = tool_3d_output.get("instances")
        aligned = bool(tool_3d_output.get("aligned_scene", False))
    else:
        records, aligned = tool_3d_output, False
    if not isinstance(records, list):
        raise ValueError("tool_3d_output must hold a list of instance records")
    try:
        return InstanceSet([Instance.from_record(r) for r in records], aligned=aligned)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed instance record: {exc}") from None
