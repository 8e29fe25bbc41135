import json

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import quadrant_by_angle, sampled_segment_distance, surface_samples
from spatial_agent.benchgen import (
    KINDS,
    LETTERS,
    TEMPLATES,
    NoValidQuestion,
    Question,
    QuestionConfig,
    SceneConfig,
    TemplateParseError,
    candidates,
    cognitive_map,
    cognitive_map_schema,
    gen_farthest,
    generate_questions,
    generate_scene,
    parse_text,
    read_questions,
    regenerate_ground_truth,
    render_text,
    validate_cognitive_map,
    write_questions,
)
from spatial_agent.geometry import BBox3D, CameraPose, look_at
from spatial_agent.perception import SceneObject, SceneSpec
from spatial_agent.relations import flip_quadrant


def camera():
    return CameraPose(np.array([0.0, -4.0, 1.4]), look_at((0.0, -4.0, 1.4), (0.0, 0.0, 0.5)),
                      320.0, 320.0, 320.0, 240.0, 640, 480)


def cube(object_id, category, center, size=0.3):
    return SceneObject(object_id, category, BBox3D.from_center_size(center, (size, size, size)))


def hand_scene(objects, scene_id="hand"):
    return SceneSpec(scene_id, objects, [camera()], room_min=(-6.0, -6.0), room_max=(6.0, 6.0))


@pytest.fixture(scope="module")
def scenes():
    return [generate_scene(seed=s) for s in range(6)]


class TestTemplates:
    @pytest.mark.parametrize("kind", KINDS)
    def test_round_trip(self, kind):
        slots = {"category": "trash can", "listed": "sofa, tv, bed", "stand": "sofa", "face": "tv",
                 "target": "bed", "anchor": "washer"}
        text = render_text(kind, **slots)
        parsed_kind, parsed = parse_text(text)
        assert parsed_kind == kind
        for key, value in parsed.items():
            expected = slots[key]
            assert value == (expected.split(", ") if key == "listed" else expected)

    def test_all_kinds_have_templates(self):
        assert set(TEMPLATES) == set(KINDS)

    def test_unparseable(self):
        with pytest.raises(TemplateParseError):
            parse_text("What colour is the sofa?")


class TestObstructionFilter:
    def route(self, extra):
        objs = [cube("s", "sofa", (0, 0, 0.5)), cube("d", "tv", (4, 0, 0.5)),
                cube("x1", "bed", (0, 3, 0.5)), cube("x2", "desk", (4, 3, 0.5)),
                cube("x3", "piano", (2, -3, 0.5))]
        return hand_scene(objs + extra)

    def test_single_obstructor_accepted(self):
        scene = self.route([cube("o", "stove", (2, 0.1, 0.5))])
        pool = [c for c in candidates(scene, "object_obstruction") if (c["stand"], c["face"]) == ("sofa", "tv")]
        assert len(pool) == 1 and pool[0]["obstructor"] == "stove"
        assert pool[0]["distractor_pool"] == ["bed", "desk", "piano"]

    def test_two_near_route_rejected(self):
        scene = self.route([cube("o", "stove", (2, 0.1, 0.5)), cube("p", "sink", (3, 0.3, 0.5))])
        assert not [c for c in candidates(scene, "object_obstruction") if (c["stand"], c["face"]) == ("sofa", "tv")]

    def test_borderline_obstructor_rejected(self):
        thr = QuestionConfig().obstruction_threshold
        scene = self.route([cube("o", "stove", (2, thr - 0.05, 0.5))])
        assert not [c for c in candidates(scene, "object_obstruction") if (c["stand"], c["face"]) == ("sofa", "tv")]

    def test_near_endpoint_rejected(self):
        scene = self.route([cube("o", "stove", (0.2, 0.0, 0.5))])
        assert not [c for c in candidates(scene, "object_obstruction") if (c["stand"], c["face"]) == ("sofa", "tv")]


class TestFarthestFilter:
    def scene(self, far):
        objs = [cube("a", "tv", (0, 0, 0.5), 0.2), cube("b", "sofa", (far, 0, 0.5), 0.2),
                cube("c", "bed", (0, 2.9, 0.5), 0.2), cube("d", "desk", (-1, 0, 0.5), 0.2),
                cube("e", "piano", (0, -1.5, 0.5), 0.2)]
        return hand_scene(objs)

    def anchored(self, scene):
        return [c for c in candidates(scene, "relative_distance_farthest") if c["anchor"] == "tv"]

    def test_close_runner_up_rejected(self):
        assert self.anchored(self.scene(3.0)) == []

    def test_clear_winner_accepted(self):
        pool = self.anchored(self.scene(5.0))
        assert len(pool) == 1 and pool[0]["farthest"] == "sofa"

    def test_picks_largest_of_1_2_3_5(self):
        objs = [cube("a", "tv", (0, 0, 0.5), 0.0)] + [
            cube(f"o{d}", cat, (d, 0, 0.5), 0.0) if i % 2 == 0 else cube(f"o{d}", cat, (0, d, 0.5), 0.0)
            for i, (d, cat) in enumerate(zip((1, 2, 3, 5), ("sofa", "bed", "desk", "piano")))]
        scene = hand_scene(objs)
        q = gen_farthest(scene, np.random.default_rng(0))
        assert q.choices[LETTERS.index(q.ground_truth)] == "piano"


class TestDirection:
    def test_flip_map(self):
        assert flip_quadrant("front-left") == "back-right"
        assert flip_quadrant("back-right") == "front-left"
        assert flip_quadrant("front-right") == "back-left"

    def test_margin_filter(self):
        objs = [cube("s", "sofa", (0, 0, 0.5)), cube("f", "tv", (0, 2, 0.5)), cube("t", "bed", (0.05, 1, 0.5))]
        scene = hand_scene(objs)
        assert not [c for c in candidates(scene, "relative_direction") if c["target"] == "bed"]

    def test_matches_angle_oracle(self, scenes):
        checked = 0
        for scene in scenes:
            centers = {o.category: o.center for o in scene.objects}
            for kind in ("relative_direction", "relative_direction_backward"):
                for q in generate_questions(scene, kind, 5, seed=1):
                    _, slots = parse_text(q.text)
                    s, f, t = (centers[slots[k]] for k in ("stand", "face", "target"))
                    want = quadrant_by_angle(s, f, t)
                    if kind == "relative_direction_backward":
                        # facing away from the reference: mirror the facing point through the observer
                        want = quadrant_by_angle(s, (2 * s[0] - f[0], 2 * s[1] - f[1]), t)
                    assert q.choices[LETTERS.index(q.ground_truth)] == want
                    checked += 1
        assert checked > 30


class TestGroundTruthOracles:
    def test_obstruction_by_segment_sampling(self, scenes):
        thr = QuestionConfig().obstruction_threshold
        checked = 0
        for scene in scenes:
            by_cat = {o.category: o for o in scene.objects}
            for q in generate_questions(scene, "object_obstruction", 3, seed=0):
                _, slots = parse_text(q.text)
                a, b = by_cat[slots["stand"]].center, by_cat[slots["face"]].center
                hits = []
                for letter, choice in zip(LETTERS, q.choices):
                    t, d = sampled_segment_distance(by_cat[choice].center, a, b)
                    if 0 < t < 1 and d < thr:
                        hits.append(letter)
                assert hits == [q.ground_truth]
                checked += 1
        assert checked > 5

    def test_farthest_by_surface_sampling(self, scenes):
        checked = 0
        for scene in scenes[:3]:
            by_cat = {o.category: o for o in scene.objects}
            for q in generate_questions(scene, "relative_distance_farthest", 3, seed=0):
                _, slots = parse_text(q.text)
                box = by_cat[slots["anchor"]].box3d
                anchor = np.array(surface_samples(box.lo, box.hi))
                d = []
                for choice in q.choices:
                    pts = np.array(surface_samples(by_cat[choice].box3d.lo, by_cat[choice].box3d.hi))
                    d.append(np.min(np.linalg.norm(anchor[:, None, :] - pts[None, :, :], axis=-1)))
                assert LETTERS[int(np.argmax(d))] == q.ground_truth
                checked += 1
        assert checked > 3

    def test_count_from_scene(self, scenes):
        for scene in scenes:
            for q in generate_questions(scene, "object_count", 3):
                _, slots = parse_text(q.text)
                assert int(q.ground_truth) == sum(o.category == slots["category"] for o in scene.objects) >= 2

    def test_regeneration_matches(self, scenes):
        for scene in scenes:
            for kind in KINDS:
                for q in generate_questions(scene, kind, 4, seed=3):
                    assert regenerate_ground_truth(scene, q) == q.ground_truth


class TestQuestions:
    def test_ids_and_determinism(self, scenes):
        a = generate_questions(scenes[0], "relative_direction", 3, seed=5)
        b = generate_questions(scenes[0], "relative_direction", 3, seed=5)
        assert [q.to_dict() for q in a] == [q.to_dict() for q in b]
        assert a[0].question_id == f"{scenes[0].scene_id}-relative_direction-000"

    def test_no_valid_question(self):
        scene = hand_scene([cube("a", "tv", (0, 0, 0.5))])
        with pytest.raises(NoValidQuestion):
            gen_farthest(scene, np.random.default_rng(0))

    def test_file_round_trip(self, scenes, tmp_path):
        qs = generate_questions(scenes[1], "object_obstruction", 2) + generate_questions(scenes[1], "object_count", 2)
        path = tmp_path / "q.jsonl"
        write_questions(path, qs)
        back = read_questions(path)
        assert [q.to_dict() for q in back] == sorted((q.to_dict() for q in qs), key=lambda d: d["question_id"])

    def test_bad_record(self, tmp_path):
        path = tmp_path / "q.jsonl"
        path.write_text('{"question_id": "x"}\n')
        with pytest.raises(ValueError, match=":1:"):
            read_questions(path)

    def test_invalid_ground_truth(self):
        with pytest.raises(ValueError):
            Question("q", "s", "object_obstruction", "t", "multiple_choice", ["a", "b"], "C")

    def test_prompt_lists_options(self, scenes):
        q = generate_questions(scenes[0], "relative_direction", 1)[0]
        assert q.prompt.splitlines()[-4:] == [f"{LETTERS[i]}. {c}" for i, c in enumerate(q.choices)]


def extent_scene(points):
    objs = [cube(f"o{i}", cat, (x, y, 0.5), 0.1) for i, (cat, x, y) in enumerate(points)]
    return hand_scene(objs)


class TestCognitiveMap:
    def test_corners(self):
        cm = cognitive_map(extent_scene([("sofa", 0, 0), ("tv", 4, 4), ("bed", 4, 0), ("desk", 0, 4)]))
        assert cm.entries == {"bed": [(9, 0)], "desk": [(0, 9)], "sofa": [(0, 0)], "tv": [(9, 9)]}

    def test_center_rounds_half_up(self):
        cm = cognitive_map(extent_scene([("sofa", 0, 0), ("tv", 9, 9), ("bed", 4.5, 4.5)]))
        assert cm.entries["bed"] == [(5, 5)]

    def test_aspect_ratio_kept(self):
        cm = cognitive_map(extent_scene([("sofa", 0, 0), ("tv", 6, 3)]))
        assert cm.entries["tv"] == [(9, 5)]

    def test_degenerate(self):
        with pytest.raises(ValueError):
            cognitive_map(extent_scene([("sofa", 1, 1), ("tv", 1, 1)]))

    def test_schema(self, scenes):
        doc = cognitive_map(scenes[0]).to_dict()
        validate_cognitive_map(json.loads(json.dumps(doc)))
        doc["grid"] = [10, 11]
        with pytest.raises(jsonschema.ValidationError):
            validate_cognitive_map(doc)
        assert cognitive_map_schema()["title"] == "CognitiveMap"

    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=2, max_size=12, unique=True))
    @settings(max_examples=60, deadline=None)
    def test_extent_property(self, pts):
        xy = np.array(pts)
        if np.ptp(xy, axis=0).max() < 1e-3:
            return
        cats = ["sofa", "tv", "bed", "desk"]
        cm = cognitive_map(extent_scene([(cats[i % 4], x, y) for i, (x, y) in enumerate(pts)]))
        cells = np.array([c for v in cm.entries.values() for c in v])
        assert cells.min() >= 0 and cells.max() <= 9
        # the longer axis spans the full grid
        assert max(cells[:, 0].max() - cells[:, 0].min(), cells[:, 1].max() - cells[:, 1].min()) == 9


def test_scene_config_round_trip():
    cfg = SceneConfig(n_single=6)
    assert SceneConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
