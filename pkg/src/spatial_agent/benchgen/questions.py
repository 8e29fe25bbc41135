"""Templated spatial questions with ground truth computed from scene geometry."""

from __future__ import annotations

import itertools
import json
import re
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import relations
from ..geometry import box_closest_distance, point_segment_projection
from ..perception.scene import SceneSpec

__all__ = [
    "KINDS",
    "Question",
    "QuestionConfig",
    "NoValidQuestion",
    "TemplateParseError",
    "render_text",
    "parse_text",
    "first_appearance_frames",
    "candidates",
    "build_question",
    "gen_count",
    "gen_appearance_order",
    "gen_direction_forward",
    "gen_direction_backward",
    "gen_obstruction",
    "gen_farthest",
    "generate_questions",
    "regenerate_ground_truth",
    "write_questions",
    "read_questions",
    "question_rng",
]

KINDS = (
    "object_count",
    "appearance_order",
    "relative_direction",
    "relative_direction_backward",
    "object_obstruction",
    "relative_distance_farthest",
)
LETTERS = "ABCD"
QUADRANT_CHOICES = relations.QUADRANTS

_CARTESIAN = ("Directions refer to the quadrants of a Cartesian plane "
              "(assuming I am standing at the origin and facing the positive y-axis).")
TEMPLATES = {
    "object_count": "How many {category}(s) are in this room?",
    "appearance_order": ("What will be the first-time appearance order of the following categories "
                         "in the video: {listed}?"),
    "relative_direction": ("If I am standing by the {stand} and facing the {face}, is the {target} to my "
                           "front-left, front-right, back-left, or back-right?\n" + _CARTESIAN),
    "relative_direction_backward": (
        "If I am standing by the {stand} and with my back to the {face} (facing directly away from it), "
        "is the {target} to my front-left, front-right, back-left, or back-right?\n" + _CARTESIAN),
    "object_obstruction": ("If I am standing by the {stand} and facing the {face}, which object is there as "
                           "an obstruction when I walk straight to the {face}?"),
    "relative_distance_farthest": ("Measuring from the closest point of each object, which of these objects "
                                   "({listed}) is the farthest from the {anchor}?"),
}
_SLOT = r"(?P<{}>[a-z][a-z ]*?)"


def _template_regex(template: str) -> re.Pattern:
    parts = re.split(r"(\{\w+\})", template)
    out, seen = [], set()
    for p in parts:
        m = re.fullmatch(r"\{(\w+)\}", p)
        if not m:
            out.append(re.escape(p))
        elif m.group(1) in seen:
            out.append(f"(?P={m.group(1)})")
        else:
            seen.add(m.group(1))
            out.append(r"(?P<listed>[a-z ,]+?)" if m.group(1) == "listed" else _SLOT.format(m.group(1)))
    return re.compile("".join(out))


_PARSERS = {kind: _template_regex(t) for kind, t in TEMPLATES.items()}


class NoValidQuestion(ValueError):
    """The scene admits no unambiguous question of the requested kind."""


class TemplateParseError(ValueError):
    pass


@dataclass
class QuestionConfig:
    direction_margin: float = 0.15
    min_stand_face_distance: float = 0.5
    farthest_margin: float = 0.15
    obstruction_threshold: float = relations.DEFAULT_OBSTRUCTION_THRESHOLD
    obstruction_clearance: float = 0.1  # distractors sit at least this far beyond the threshold
    obstructor_margin: float = 0.1  # the true obstructor sits at least this far inside it
    obstructor_t_range: tuple = (0.1, 0.9)
    appearance_gap: int = 4  # frames between successive first appearances
    appearance_dwell: int = 4  # frames an object stays in view after it first appears
    appearance_categories: int = 4
    min_count: int = 2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "QuestionConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class Question:
    question_id: str
    scene_id: str
    kind: str
    text: str
    answer_type: str
    choices: Optional[list]
    ground_truth: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown question kind {self.kind!r}")
        if self.answer_type == "multiple_choice":
            if not self.choices or self.ground_truth not in LETTERS[: len(self.choices)]:
                raise ValueError("multiple-choice ground truth must be one of the choice letters")
        elif self.answer_type == "numerical":
            float(self.ground_truth)
        else:
            raise ValueError(f"unknown answer type {self.answer_type!r}")

    @property
    def prompt(self) -> str:
        """Question text followed by lettered options, as shown to the agent."""
        if not self.choices:
            return self.text
        return self.text + "\n" + "\n".join(f"{LETTERS[i]}. {c}" for i, c in enumerate(self.choices))

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "scene_id": self.scene_id,
            "kind": self.kind,
            "text": self.text,
            "answer_type": self.answer_type,
            "choices": self.choices,
            "ground_truth": self.ground_truth,
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Question":
        return cls(d["question_id"], d["scene_id"], d["kind"], d["text"], d["answer_type"],
                   d.get("choices"), str(d["ground_truth"]), d.get("provenance", {}))


def question_rng(question_id: str) -> np.random.Generator:
    return np.random.default_rng(zlib.crc32(question_id.encode("utf-8")))


def render_text(kind: str, **slots) -> str:
    return TEMPLATES[kind].format(**slots)


def parse_text(text: str) -> tuple:
    """Recover ``(kind, slots)`` from a rendered question text (options excluded)."""
    for kind, rx in _PARSERS.items():
        m = rx.fullmatch(text)
        if m:
            slots = m.groupdict()
            if "listed" in slots:
                slots["listed"] = [s.strip() for s in slots["listed"].split(",")]
            return kind, slots
    raise TemplateParseError(f"text matches no question template: {text[:80]!r}")


# -- scene facts -----------------------------------------------------------------

def _visibility(scene: SceneSpec) -> np.ndarray:
    """(objects, frames) mask: object center projects inside the image."""
    centers = np.array([o.center for o in scene.objects]).reshape(-1, 3)
    out = np.zeros((len(centers), scene.frame_count), dtype=bool)
    for f, cam in enumerate(scene.trajectory):
        cc = cam.world_to_camera(centers)
        z = cc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            u = cam.focal_x * cc[:, 0] / z + cam.principal_x
            v = cam.focal_y * cc[:, 1] / z + cam.principal_y
        out[:, f] = (z > 0) & (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    return out


def first_appearance_frames(scene: SceneSpec, dwell: int = 1) -> dict:
    """Category -> (first frame any of its objects is visible, that object stays visible for ``dwell`` frames).

    Categories never seen are omitted.
    """
    vis = _visibility(scene)
    out = {}
    for i, o in enumerate(scene.objects):
        frames = np.flatnonzero(vis[i])
        if frames.size == 0:
            continue
        f = int(frames[0])
        stable = bool(vis[i, f: f + dwell].all()) and f + dwell <= scene.frame_count
        prev = out.get(o.category)
        if prev is None or f < prev[0]:
            out[o.category] = (f, stable)
        elif f == prev[0]:
            out[o.category] = (f, prev[1] or stable)
    return out


def _singles(scene: SceneSpec) -> dict:
    counts = scene.counts()
    return {o.category: o for o in scene.objects if counts[o.category] == 1}


# -- candidate enumeration ---------------------------------------------------------

def _count_candidates(scene, cfg):
    counts = scene.counts()
    return [{"category": c} for c in sorted(counts) if counts[c] >= cfg.min_count]


def _appearance_candidates(scene, cfg):
    first = first_appearance_frames(scene, cfg.appearance_dwell)
    ok = sorted((f, c) for c, (f, stable) in first.items() if stable)
    out = []
    for combo in itertools.combinations(ok, cfg.appearance_categories):
        frames = [f for f, _ in combo]
        if all(b - a >= cfg.appearance_gap for a, b in zip(frames, frames[1:])):
            out.append({"order": [c for _, c in combo]})
    return out


def _direction_candidates(scene, cfg):
    singles = _singles(scene)
    out = []
    for stand, face, target in itertools.permutations(sorted(singles), 3):
        s, f, t = (singles[c].center for c in (stand, face, target))
        if np.linalg.norm(np.subtract(f, s)[:2]) < cfg.min_stand_face_distance:
            continue
        quadrant, df, dr = relations.direction_quadrant(s, f, t)
        if abs(df) < cfg.direction_margin or abs(dr) < cfg.direction_margin:
            continue
        out.append({"stand": stand, "face": face, "target": target, "forward": quadrant,
                    "forward_offset": round(df, 6), "right_offset": round(dr, 6)})
    return out


def _obstruction_candidates(scene, cfg):
    singles = _singles(scene)
    thr = cfg.obstruction_threshold
    out = []
    for src, dst in itertools.permutations(sorted(singles), 2):
        a, b = singles[src], singles[dst]
        near, clear = [], []
        for o in scene.objects:
            if o.object_id in (a.object_id, b.object_id):
                continue
            t, _, dist = point_segment_projection(o.center, a.center, b.center)
            inside = 0.0 < t < 1.0
            if inside and dist < thr + cfg.obstruction_clearance:
                near.append((o, t, dist))
            elif o.category in singles:
                clear.append(o.category)
        if len(near) != 1:
            continue
        obs, t, dist = near[0]
        lo, hi = cfg.obstructor_t_range
        if obs.category not in singles or dist > thr - cfg.obstructor_margin or not lo <= t <= hi:
            continue
        if len(clear) < 3:
            continue
        out.append({"stand": src, "face": dst, "obstructor": obs.category, "t": round(t, 6),
                    "distance": round(dist, 6), "distractor_pool": sorted(clear)})
    return out


def _farthest_candidates(scene, cfg):
    singles = _singles(scene)
    names = sorted(singles)
    out = []
    for anchor in names:
        others = [c for c in names if c != anchor]
        box_d = {c: box_closest_distance(singles[anchor].box3d, singles[c].box3d) for c in others}
        ctr_d = {c: float(np.linalg.norm(np.subtract(singles[anchor].center, singles[c].center)))
                 for c in others}
        for combo in itertools.combinations(others, 4):
            ranked = sorted(combo, key=lambda c: -box_d[c])
            best, second = ranked[0], ranked[1]
            if box_d[best] < (1.0 + cfg.farthest_margin) * box_d[second] or box_d[best] <= 0:
                continue
            if max(combo, key=lambda c: ctr_d[c]) != best:
                continue
            out.append({"anchor": anchor, "candidates": list(combo), "farthest": best,
                        "box_distances": {c: round(box_d[c], 6) for c in combo}})
    return out


_CANDIDATES = {
    "object_count": _count_candidates,
    "appearance_order": _appearance_candidates,
    "relative_direction": _direction_candidates,
    "relative_direction_backward": _direction_candidates,
    "object_obstruction": _obstruction_candidates,
    "relative_distance_farthest": _farthest_candidates,
}


def candidates(scene: SceneSpec, kind: str, config: QuestionConfig | None = None) -> list:
    """Every unambiguous configuration of ``kind`` in ``scene``, in a fixed order."""
    return _CANDIDATES[kind](scene, config or QuestionConfig())


# -- question assembly -------------------------------------------------------------

def _lettered(rng, correct, distractors) -> tuple:
    options = [correct] + list(distractors)
    order = rng.permutation(len(options))
    choices = [options[i] for i in order]
    return choices, LETTERS[int(np.flatnonzero(order == 0)[0])]


def build_question(scene: SceneSpec, kind: str, setup: dict, question_id: str) -> Question:
    """Render one configuration; choice order and distractors are seeded by ``question_id``."""
    rng = question_rng(question_id)
    prov = {k: v for k, v in setup.items() if k != "distractor_pool"}
    if kind == "object_count":
        cat = setup["category"]
        ids = [o.object_id for o in scene.objects_of(cat)]
        return Question(question_id, scene.scene_id, kind, render_text(kind, category=cat), "numerical",
                        None, str(len(ids)), {**prov, "object_ids": ids})
    if kind == "appearance_order":
        order = list(setup["order"])
        listed = [order[i] for i in rng.permutation(len(order))]
        perms = [list(p) for p in itertools.permutations(order) if list(p) != order]
        picks = rng.choice(len(perms), size=3, replace=False)
        choices, gt = _lettered(rng, ", ".join(order), [", ".join(perms[i]) for i in sorted(picks)])
        return Question(question_id, scene.scene_id, kind, render_text(kind, listed=", ".join(listed)),
                        "multiple_choice", choices, gt, prov)
    if kind in ("relative_direction", "relative_direction_backward"):
        answer = setup["forward"] if kind == "relative_direction" else relations.flip_quadrant(setup["forward"])
        choices = [QUADRANT_CHOICES[i] for i in rng.permutation(4)]
        gt = LETTERS[choices.index(answer)]
        text = render_text(kind, stand=setup["stand"], face=setup["face"], target=setup["target"])
        return Question(question_id, scene.scene_id, kind, text, "multiple_choice", choices, gt,
                        {**prov, "answer": answer})
    if kind == "object_obstruction":
        pool = setup["distractor_pool"]
        picks = [pool[i] for i in sorted(rng.choice(len(pool), size=3, replace=False))]
        choices, gt = _lettered(rng, setup["obstructor"], picks)
        text = render_text(kind, stand=setup["stand"], face=setup["face"])
        return Question(question_id, scene.scene_id, kind, text, "multiple_choice", choices, gt, prov)
    if kind == "relative_distance_farthest":
        others = [c for c in setup["candidates"] if c != setup["farthest"]]
        choices, gt = _lettered(rng, setup["farthest"], others)
        text = render_text(kind, listed=", ".join(choices), anchor=setup["anchor"])
        return Question(question_id, scene.scene_id, kind, text, "multiple_choice", choices, gt, prov)
    raise ValueError(f"unknown question kind {kind!r}")


def _pick(scene, kind, rng, config, index):
    pool = candidates(scene, kind, config)
    if not pool:
        raise NoValidQuestion(f"{scene.scene_id} admits no {kind} question")
    setup = pool[int(rng.integers(len(pool)))]
    return build_question(scene, kind, setup, f"{scene.scene_id}-{kind}-{index:03d}")


def gen_count(scene, rng, config=None, index=0) -> Question:
    return _pick(scene, "object_count", rng, config, index)


def gen_appearance_order(scene, rng, config=None, index=0) -> Question:
    return _pick(scene, "appearance_order", rng, config, index)


def gen_direction_forward(scene, rng, config=None, index=0) -> Question:
    return _pick(scene, "relative_direction", rng, config, index)


def gen_direction_backward(scene, rng, config=None, index=0) -> Question:
    return _pick(scene, "relative_direction_backward", rng, config, index)


def gen_obstruction(scene, rng, config=None, index=0) -> Question:
    return _pick(scene, "object_obstruction", rng, config, index)


def gen_farthest(scene, rng, config=None, index=0) -> Question:
    return _pick(scene, "relative_distance_farthest", rng, config, index)


def generate_questions(scene: SceneSpec, kind: str, n: int, seed: int = 0,
                       config: QuestionConfig | None = None) -> list:
    """Up to ``n`` questions over distinct configurations, sampled without replacement."""
    pool = candidates(scene, kind, config)
    rng = np.random.default_rng([int(seed), zlib.crc32(f"{scene.scene_id}/{kind}".encode())])
    picks = rng.permutation(len(pool))[:n]
    return [build_question(scene, kind, pool[int(i)], f"{scene.scene_id}-{kind}-{k:03d}")
            for k, i in enumerate(picks)]


# -- ground-truth regeneration -----------------------------------------------------

def _single_object(scene, category):
    objs = scene.objects_of(category)
    if len(objs) != 1:
        raise ValueError(f"{category!r} does not name exactly one object in {scene.scene_id}")
    return objs[0]


def regenerate_ground_truth(scene: SceneSpec, question: Question,
                            config: QuestionConfig | None = None) -> str:
    """Recompute the answer from the scene and the rendered text alone."""
    cfg = config or QuestionConfig()
    kind, slots = parse_text(question.text)
    if kind != question.kind:
        raise TemplateParseError(f"text parses as {kind}, record says {question.kind}")
    gt = scene.gt_instances()
    choices = question.choices or []
    if kind == "object_count":
        return str(relations.count_instances(gt, slots["category"]))
    if kind == "appearance_order":
        first = first_appearance_frames(scene)
        order = sorted(slots["listed"], key=lambda c: (first[c][0], c))
        return LETTERS[choices.index(", ".join(order))]
    if kind in ("relative_direction", "relative_direction_backward"):
        ids = [_single_object(scene, slots[k]).object_id for k in ("stand", "face", "target")]
        fn = relations.calculate_direction if kind == "relative_direction" else relations.calculate_direction_backward
        return LETTERS[choices.index(fn(gt, *ids)["direction"])]
    if kind == "object_obstruction":
        src = _single_object(scene, slots["stand"]).object_id
        dst = _single_object(scene, slots["face"]).object_id
        hits = [i for i, c in enumerate(choices)
                if relations.calculate_obstruction(gt, src, dst, _single_object(scene, c).object_id,
                                                   cfg.obstruction_threshold)["is_obstruction"]]
        if len(hits) != 1:
            raise ValueError(f"{question.question_id}: {len(hits)} options obstruct the route")
        return LETTERS[hits[0]]
    if kind == "relative_distance_farthest":
        anchor = _single_object(scene, slots["anchor"]).box3d
        d = [box_closest_distance(anchor, _single_object(scene, c).box3d) for c in choices]
        return LETTERS[int(np.argmax(d))]
    raise ValueError(kind)


# -- files -------------------------------------------------------------------------

def write_questions(path, questions) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in sorted(questions, key=lambda q: q.question_id):
            fh.write(json.dumps(q.to_dict(), ensure_ascii=False) + "\n")


def read_questions(path) -> list:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            out.append(Question.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad question record ({exc})") from None
    return out
