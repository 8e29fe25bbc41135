"""Cluster per-frame object views into physical instances.

The main algorithm is a constrained greedy merge: point pairs are sorted once
by 3D-center distance and merged in ascending order up to ``epsilon``, never
joining two clusters that share a frame. Tracklets can pre-merge views into
single points before the greedy pass. DBSCAN is provided as a baseline.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.cluster import DBSCAN

from ._validation import check_frames, check_points, check_positive
from .geometry import BBox2D, BBox3D

__all__ = [
    "ObjectView",
    "MergedPoint",
    "Instance",
    "InstanceSet",
    "ConstrainedGreedy",
    "ViewDBSCAN",
    "constrained_greedy",
    "dbscan",
    "rank_instances",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ObjectView:
    """One sighting of a category in one frame."""

    frame: int
    box: BBox2D
    center: tuple
    category: str

    def __post_init__(self):
        if self.frame < 0:
            raise ValueError(f"frame index must be >= 0, got {self.frame}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class MergedPoint:
    frames: frozenset
    boxes: tuple
    center: tuple
    members: tuple


@dataclass
class Instance:
    instance_id: Optional[str]
    category: str
    center: np.ndarray
    box3d: BBox3D
    members: tuple = field(default_factory=tuple)

    @property
    def member_count(self) -> int:
        return len(self.members)

    @property
    def first_frame(self) -> int:
        return min(v.frame for v in self.members) if self.members else -1

    def to_record(self, ndigits: int = 4) -> dict:
        return {
            "instance_id": self.instance_id,
            "category": self.category,
            "3d_center": [round(float(c), ndigits) for c in self.center],
            "bbox_3d": [round(float(c), ndigits) for c in self.box3d.to_list()],
            "member_count": self.member_count,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Instance":
        return cls(
            rec["instance_id"],
            rec["category"],
            np.asarray(rec["3d_center"], dtype=float),
            BBox3D.from_list(rec["bbox_3d"]),
        )


@dataclass
class InstanceSet:
    """Instances of a scene plus whether their frame is gravity-aligned."""

    instances: list
    aligned: bool = False

    def __post_init__(self):
        self._by_id = {}
        for inst in self.instances:
            if inst.instance_id in self._by_id:
                raise ValueError(f"duplicate instance id {inst.instance_id!r}")
            self._by_id[inst.instance_id] = inst

    def __iter__(self):
        return iter(self.instances)

    def __len__(self):
        return len(self.instances)

    def get(self, instance_id: str) -> Optional[Instance]:
        return self._by_id.get(instance_id)

    @property
    def categories(self) -> set:
        return {inst.category for inst in self.instances}


def _canonical_groups(n_views: int, groups) -> list:
    """Complete a (partial) track partition with singletons, ordered by smallest member."""
    seen = np.zeros(n_views, dtype=bool)
    out = []
    for g in groups or ():
        g = sorted(int(i) for i in g)
        if not g:
            continue
        if g[0] < 0 or g[-1] >= n_views:
            raise ValueError("track group references a view index out of range")
        if seen[g].any() or len(set(g)) != len(g):
            raise ValueError("track groups must be pairwise disjoint")
        seen[g] = True
        out.append(g)
    out.extend([i] for i in np.flatnonzero(~seen))
    out.sort(key=lambda g: g[0])
    return out


class _FrameUnion:
    """Union-find whose roots also carry the frame set of their cluster."""

    def __init__(self, frame_sets):
        self.parent = list(range(len(frame_sets)))
        self.frames = [set(f) for f in frame_sets]

    def find(self, i):
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def try_union(self, i, j) -> bool:
        ri, rj = self.find(i), self.find(j)
        if ri == rj or not self.frames[ri].isdisjoint(self.frames[rj]):
            return False
        if len(self.frames[ri]) < len(self.frames[rj]):
            ri, rj = rj, ri
        self.parent[rj] = ri
        self.frames[ri] |= self.frames[rj]
        self.frames[rj] = set()
        return True


class ConstrainedGreedy(ClusterMixin, BaseEstimator):
    """Frame-constrained greedy agglomeration of view centers.

    Parameters
    ----------
    epsilon : float, default=0.5
        Largest center distance at which two points may be merged.

    Attributes
    ----------
    labels_ : ndarray of shape (n_views,)
        Cluster label per view, numbered by first member in input order.
    merges_ : list of (i, j, distance)
        Accepted merges in the order they happened (indices into ``points_``).
    points_ : list of list of int
        View indices of each merged point after track pre-merge.
    """

    def __init__(self, epsilon=0.5):
        self.epsilon = epsilon

    def fit(self, X, y=None, *, frames, groups=None):
        X = check_points(X, min_points=0)
        frames = check_frames(frames, len(X))
        eps = check_positive(self.epsilon, "epsilon")

        points = _canonical_groups(len(X), groups)
        for g in points:
            if len(set(frames[g].tolist())) != len(g):
                raise ValueError("a track group contains two views from the same frame")
        centers = np.array([X[g].mean(axis=0) for g in points]).reshape(-1, 3)
        uf = _FrameUnion([frames[g].tolist() for g in points])

        merges = []
        m = len(points)
        if m > 1:
            dist = pdist(centers)
            ii, jj = np.triu_indices(m, k=1)
            # stable sort keeps (i, j) lexicographic order among equal distances
            order = np.argsort(dist, kind="stable")
            for k in order:
                d = dist[k]
                if d > eps:
                    break
                i, j = int(ii[k]), int(jj[k])
                if uf.try_union(i, j):
                    merges.append((i, j, float(d)))
                    logger.debug("merged points %d and %d at distance %.4f", i, j, d)

        labels = np.empty(len(X), dtype=np.int64)
        root_label = {}
        for p, g in enumerate(points):
            root = uf.find(p)
            label = root_label.setdefault(root, len(root_label))
            labels[g] = label
        self.points_ = points
        self.merges_ = merges
        self.labels_ = labels
        self.n_clusters_ = len(root_label)
        return self

    def fit_predict(self, X, y=None, *, frames, groups=None):
        return self.fit(X, frames=frames, groups=groups).labels_


class ViewDBSCAN(ClusterMixin, BaseEstimator):
    """DBSCAN on view centers where noise views become singleton clusters."""

    def __init__(self, eps=0.5, min_points=2):
        self.eps = eps
        self.min_points = min_points

    def fit(self, X, y=None):
        X = check_points(X, min_points=0)
        check_positive(self.eps, "eps")
        if int(self.min_points) < 1:
            raise ValueError(f"min_points must be >= 1, got {self.min_points}")
        if len(X) == 0:
            self.labels_ = np.empty(0, dtype=np.int64)
            self.n_clusters_ = 0
            return self
        raw = DBSCAN(eps=self.eps, min_samples=int(self.min_points)).fit(X).labels_
        labels = np.empty(len(X), dtype=np.int64)
        remap = {}
        for i, lab in enumerate(raw):
            key = ("c", lab) if lab >= 0 else ("n", i)
            labels[i] = remap.setdefault(key, len(remap))
        self.labels_ = labels
        self.n_clusters_ = len(remap)
        return self


def _single_category(views: Sequence[ObjectView]) -> str:
    cats = {v.category for v in views}
    if len(cats) > 1:
        raise ValueError(f"views must share one category, got {sorted(cats)}")
    return cats.pop() if cats else ""


def _instances_from_labels(views, labels) -> list:
    buckets = defaultdict(list)
    for v, lab in zip(views, labels):
        buckets[int(lab)].append(v)
    out = []
    for lab in sorted(buckets):
        members = tuple(sorted(buckets[lab], key=lambda v: v.frame))
        centers = np.array([v.center for v in members])
        out.append(
            Instance(None, members[0].category, centers.mean(axis=0),
                     BBox3D.hull(centers), members)
        )
    return out


def _views_array(views):
    X = np.array([v.center for v in views], dtype=float).reshape(-1, 3)
    frames = np.array([v.frame for v in views], dtype=np.int64)
    return X, frames


def _track_indices(views, tracks) -> Optional[list]:
    if tracks is None:
        return None
    index = {id(v): i for i, v in enumerate(views)}
    groups = []
    for group in tracks:
        try:
            groups.append([index[id(v)] if not isinstance(v, (int, np.integer)) else int(v)
                           for v in group])
        except KeyError:
            raise ValueError("track group contains a view that is not in the input") from None
    return groups


def constrained_greedy(views: Sequence[ObjectView], epsilon: float = 0.5,
                       tracks: Optional[Iterable[Iterable]] = None) -> list:
    """Cluster one category's views into instances (ids left unassigned).

    ``tracks`` holds groups of views (the objects themselves or their indices
    into ``views``); each group is collapsed to one point before merging.
    """
    views = list(views)
    _single_category(views)
    if not views:
        check_positive(epsilon, "epsilon")
        return []
    X, frames = _views_array(views)
    est = ConstrainedGreedy(epsilon).fit(X, frames=frames, groups=_track_indices(views, tracks))
    instances = _instances_from_labels(views, est.labels_)
    for inst in instances:
        assert len({v.frame for v in inst.members}) == len(inst.members)
    return instances


def dbscan(views: Sequence[ObjectView], eps: float = 0.5, min_points: int = 2) -> list:
    views = list(views)
    _single_category(views)
    X, _ = _views_array(views)
    labels = ViewDBSCAN(eps, min_points).fit(X).labels_
    return _instances_from_labels(views, labels)


def rank_instances(instances: Iterable[Instance]) -> list:
    """Assign ``category_k`` ids: most members first, then earliest first frame."""
    by_cat = defaultdict(list)
    for inst in instances:
        by_cat[inst.category].append(inst)
    ranked = []
    for cat in sorted(by_cat):
        group = sorted(
            by_cat[cat],
            key=lambda i: (-i.member_count, i.first_frame, tuple(np.round(i.center, 9))),
        )
        for k, inst in enumerate(group, start=1):
            inst.instance_id = f"{cat}_{k}"
            ranked.append(inst)
    return ranked
