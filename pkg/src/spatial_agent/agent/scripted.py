"""Deterministic rule-following implementations of the four agent roles."""

from __future__ import annotations

import re

from ..knowledge import parse_entry
from ..relations import appearance_order, flip_quadrant
from ..vocabulary import DEFAULT_VOCABULARY, find_categories
from .records import Plan, ReflectorDecision
from .rules import QuestionSlots, Ruleset, default_rules, parse_question
from .tools import render_query_prompt

__all__ = [
    "ScriptedPlanner",
    "ScriptedReflector",
    "ScriptedExecutor",
    "ScriptedSummarizer",
    "SENTINEL",
    "normalize_number",
    "instance_category",
]

SENTINEL = "X"
_ANSWER_TAG = re.compile(r"<answer>\s*([-+]?\d+(?:\.\d+)?)\s*</answer>")
_NUMBER = re.compile(r"[-+]?\d+(?:\.\d+)?")
_SUFFIX = re.compile(r"_\d+$")


def normalize_number(value) -> str:
    x = float(value)
    if x == int(x):
        return str(int(x))
    return f"{x:.4f}".rstrip("0").rstrip(".")


def instance_category(instance_id: str) -> str:
    return _SUFFIX.sub("", instance_id)


def _iid(category: str) -> str:
    return f"{category}_1"


def _fmt(v) -> str:
    if isinstance(v, float):
        return normalize_number(round(v, 4))
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}={_fmt(x)}" for k, x in v.items()) + "}"
    return str(v)


class ScriptedPlanner:
    """Ordered regex rules mapped to fixed tool chains."""

    def __init__(self, rules: Ruleset | None = None):
        self.rules = rules or default_rules()

    def plan(self, question: str, video_path: str, schemas) -> Plan:
        registered = {s.name for s in schemas}
        tools, info, label = self.rules.plan_for(question)
        return Plan(tuple(t for t in tools if t in registered), tuple(info), label)


class ScriptedReflector:
    """Walks the plan in order, deriving every argument from the question text.

    The walker never deviates from the plan: the n-th chain entry always
    corresponds to the n-th derived call, and the decision is ``final`` once
    the derived calls are used up.
    """

    def __init__(self, vocabulary=DEFAULT_VOCABULARY, rules: Ruleset | None = None):
        self.vocabulary = tuple(vocabulary)
        self.rules = rules or default_rules()

    def _video_query_prompt(self, question: str) -> str:
        body = question.strip()
        if self.rules.slots["room_area"].search(body):
            return render_query_prompt("room_area", body)
        if self.rules.slots["distance_query"].search(body):
            return render_query_prompt("distance", body)
        return body

    def script(self, question: str, plan: Plan, video_path: str) -> tuple:
        """``(calls, note)``: concrete ``(tool, args)`` pairs for the whole plan.

        ``note`` explains an early stop when a step's arguments cannot be
        derived from the question.
        """
        slots = parse_question(question, self.vocabulary, self.rules)
        _, sub = self.rules.classify(question)
        counting = sub is not None and sub.name == "counting"
        aligned = any(t in plan.plan for t in ("tool_calculate_direction", "tool_compare_height"))
        option_cats = slots.option_categories(self.vocabulary)
        calls = []
        for tool in plan.plan:
            if tool == "tool_2d_object_detection":
                if not slots.categories:
                    return calls, "no known object category is mentioned in the question"
                calls.append((tool, {"video_path": video_path, "objects": ", ".join(slots.categories)}))
            elif tool == "tool_object_tracking":
                calls.append((tool, {"video_path": video_path, "output_2d": {}}))
            elif tool == "tool_object_3d_detection":
                calls.append((tool, {"video_path": video_path, "output_2d": {},
                                     "using_tracking": counting, "aligned_scene": aligned}))
            elif tool == "tool_scene_modeling":
                calls.append((tool, {"video_path": video_path}))
            elif tool == "tool_knowledge_retrieval":
                calls.append((tool, {"query": question.strip()}))
            elif tool == "tool_video_image_query":
                calls.append((tool, {"video_path": video_path, "prompt": self._video_query_prompt(question),
                                     "query_type": "video"}))
            elif tool == "tool_calculate_distance":
                anchor = slots.anchor
                pool = option_cats or slots.categories
                targets = [c for c in pool if c != anchor]
                if anchor is None or not targets:
                    return calls, "could not identify the reference object and candidates"
                calls.append((tool, {"tool_3d_output": {}, "video_path": video_path,
                                     "reference_instance": _iid(anchor),
                                     "target_instances": ", ".join(_iid(c) for c in targets)}))
            elif tool == "tool_calculate_direction":
                target = slots.target or next(
                    (c for c in slots.categories if c not in (slots.stand, slots.face)), None)
                if None in (slots.stand, slots.face, target):
                    return calls, "could not identify the standing, facing and target objects"
                calls.append((tool, {"tool_3d_output": {}, "video_path": video_path,
                                     "stand_instance": _iid(slots.stand), "face_instance": _iid(slots.face),
                                     "target_instance": _iid(target)}))
            elif tool == "tool_compare_height":
                if slots.height_a is None or slots.height_b is None:
                    return calls, "could not identify the two objects to compare"
                calls.append((tool, {"tool_3d_output": {}, "video_path": video_path,
                                     "instance_a": _iid(slots.height_a), "instance_b": _iid(slots.height_b)}))
            elif tool == "tool_calculate_obstruction":
                src, dst = slots.stand, slots.destination or slots.face
                if src is None or dst is None:
                    return calls, "could not identify the route endpoints"
                pool = option_cats or [c for c in slots.categories if c not in (src, dst)]
                for cand in pool:
                    if cand in (src, dst):
                        continue
                    calls.append((tool, {"tool_3d_output": {}, "video_path": video_path,
                                         "source_instance": _iid(src), "destination_instance": _iid(dst),
                                         "obstruction_instance": _iid(cand)}))
            else:
                return calls, f"no argument recipe for {tool}"
        return calls, ""

    def decide(self, question: str, video_path: str, plan: Plan, chain, schemas) -> ReflectorDecision:
        calls, note = self.script(question, plan, video_path)
        step = len(chain)
        analysis = ""
        if chain:
            last = chain[-1]
            analysis = (f"Previous call {last.call.tool} failed: {last.error}." if last.failed
                        else f"Previous call {last.call.tool} returned output.")
        if step < len(calls):
            tool, args = calls[step]
            return ReflectorDecision.call(tool, args, (analysis + f" Next: {tool}.").strip())
        reason = note or "all planned steps are done"
        return ReflectorDecision.final((analysis + f" Stopping: {reason}.").strip())


class ScriptedExecutor:
    """Template renderer: describes the output without drawing conclusions."""

    def interpret(self, schema, call, raw_output, question: str = "") -> str:
        tool = call.tool
        if isinstance(raw_output, dict) and set(raw_output) == {"error"}:
            return f"The call to {tool} failed with {raw_output['error']}; it produced no evidence."
        render = getattr(self, "_" + tool, None)
        text = render(raw_output) if render is not None else f"{tool} returned {_fmt(raw_output)}."
        return text.strip() or f"{tool} returned an empty result."

    def _tool_2d_object_detection(self, out):
        total = sum(len(v["views"]) for v in out.values())
        if total == 0:
            return f"The detector returned zero detections for {', '.join(out) or 'the requested categories'}."
        parts = []
        for cat, rec in out.items():
            frames = [v["frame"] for v in rec["views"]]
            if frames:
                parts.append(f"{cat} has {len(frames)} views with frames={_fmt(frames)}, "
                             f"earliest frame {min(frames)} with bbox={_fmt(rec['views'][0]['bbox'])}")
            else:
                parts.append(f"{cat} has 0 views")
        return "2D detection over the sampled frames: " + "; ".join(parts) + "."

    def _tool_object_tracking(self, out):
        parts = []
        for cat, tracks in out["tracklets"].items():
            lengths = [len(t["views"]) for t in tracks]
            reasons = sorted({t["termination_reason"] for t in tracks})
            parts.append(f"{cat} has {len(tracks)} tracklets with lengths {_fmt(lengths)} "
                         f"(termination_reason {', '.join(reasons) or 'none'})")
        return "Tracking results: " + ("; ".join(parts) if parts else "no tracklets") + "."

    def _tool_object_3d_detection(self, out):
        insts = out["instances"]
        if not insts:
            return "3D detection produced zero instances."
        parts = [f"{r['instance_id']} at 3d_center={_fmt(r['3d_center'])} from {r['member_count']} views"
                 for r in insts]
        return (f"3D detection (using_tracking={out['using_tracking']}, aligned_scene={out['aligned_scene']}) "
                f"produced {len(insts)} instances: " + "; ".join(parts) + ".")

    def _tool_scene_modeling(self, out):
        return (f"Scene modeling fitted ground_plane={_fmt(out['ground_plane'])} with "
                f"up_direction={_fmt(out['up_direction'])} from {out['frames_used']} frames, "
                f"inlier_ratio={_fmt(out['inlier_ratio'])}.")

    def _tool_knowledge_retrieval(self, out):
        if not out["entries"]:
            return f"Knowledge retrieval found no entries for the query {out['query']!r}."
        return f"Knowledge retrieval returned {len(out['entries'])} entries: " + " | ".join(out["entries"]) + "."

    def _tool_video_image_query(self, out):
        where = "the whole video" if out["query_type"] == "video" else f"frame {out['frame_idx']}"
        return f"The query over {where} returned response={out['response']!r}."

    def _tool_calculate_distance(self, out):
        r = out["result"]
        pairs = ", ".join(f"{k}={_fmt(v)}" for k, v in r["distances"].items())
        return f"Center distances from {r['reference_instance']} ({r['unit']} units): {pairs}."

    def _tool_calculate_direction(self, out):
        r = out["result"]
        ev = r["evidence"]
        return (f"Standing at {r['stand_instance']} and facing {r['face_instance']}, "
                f"{r['target_instance']} has forward_offset={_fmt(ev['forward_offset'])} and "
                f"right_offset={_fmt(ev['right_offset'])}, giving direction={r['direction']}.")

    def _tool_compare_height(self, out):
        r = out["result"]
        return (f"{r['instance_a']} has z_a={_fmt(r['z_a'])} and {r['instance_b']} has z_b={_fmt(r['z_b'])}; "
                f"relation={r['relation']}.")

    def _tool_calculate_obstruction(self, out):
        r = out["result"]
        ev = r["evidence"]
        return (f"{r['obstruction_instance']} lies {_fmt(ev['distance_to_segment'])} from the segment "
                f"{r['source_instance']} to {r['destination_instance']} at t={_fmt(ev['t'])} "
                f"(threshold {_fmt(ev['threshold'])}); is_obstruction={r['is_obstruction']}.")


class ScriptedSummarizer:
    """Pulls the decisive value out of the last successful tool output."""

    def __init__(self, vocabulary=DEFAULT_VOCABULARY, rules: Ruleset | None = None):
        self.vocabulary = tuple(vocabulary)
        self.rules = rules or default_rules()

    def summarize(self, question: str, chain) -> tuple:
        if not chain:
            return "No tool evidence was collected, so the question cannot be answered.", SENTINEL
        ok = [e for e in chain if not e.failed]
        if not ok:
            return "Every tool call failed, so there is no evidence to answer from.", SENTINEL
        slots = parse_question(question, self.vocabulary, self.rules)
        last = ok[-1]
        handler = getattr(self, "_" + last.call.tool, None)
        if handler is None:
            return f"The last output ({last.call.tool}) does not decide the question.", SENTINEL
        summary, value = handler(question, slots, last, ok)
        if value is None:
            return summary, SENTINEL
        final = self._normalize(value, slots)
        if final == SENTINEL:
            summary += f" The value {value!r} matches none of the options."
        return summary, final

    def _normalize(self, value: str, slots: QuestionSlots) -> str:
        if slots.options:
            letters = {letter for letter, _ in slots.options}
            if value.upper() in letters:
                return value.upper()
            want = value.strip().lower()
            for letter, text in slots.options:
                if text.strip().lower() == want:
                    return letter
            return SENTINEL
        if _NUMBER.fullmatch(value.strip()):
            return normalize_number(value)
        return value.strip()

    # -- per-tool extraction ---------------------------------------------------
    def _tool_calculate_distance(self, question, slots, entry, ok):
        dist = entry.raw_output["result"]["distances"]
        far = re.search(r"farthest|furthest", question, re.I) is not None
        ranked = sorted(dist.items(), key=lambda kv: kv[1], reverse=far)
        pick = ranked[0][0]
        word = "largest" if far else "smallest"
        listing = ", ".join(f"{k}={_fmt(v)}" for k, v in ranked)
        return (f"Distances from {entry.raw_output['result']['reference_instance']}: {listing}. "
                f"The {word} is {pick}.", instance_category(pick))

    def _tool_calculate_direction(self, question, slots, entry, ok):
        d = entry.raw_output["result"]["direction"]
        if slots.backward:
            flipped = flip_quadrant(d)
            return (f"Facing the reference the target is {d}; with the back to it the quadrant flips "
                    f"to {flipped}.", flipped)
        return f"The target lies to the {d} of the observer.", d

    def _tool_compare_height(self, question, slots, entry, ok):
        r = entry.raw_output["result"]
        rel = r["relation"]
        lower = re.search(r"lower|shorter", question, re.I) is not None
        yes = rel == ("b_higher" if lower else "a_higher")
        return (f"z_a={_fmt(r['z_a'])}, z_b={_fmt(r['z_b'])}, relation {rel}.", "yes" if yes else "no")

    def _tool_calculate_obstruction(self, question, slots, entry, ok):
        checks = [e.raw_output["result"] for e in ok if e.call.tool == "tool_calculate_obstruction"]
        hits = sorted((c for c in checks if c["is_obstruction"]),
                      key=lambda c: (c["evidence"]["distance_to_segment"], c["obstruction_instance"]))
        listing = ", ".join(f"{c['obstruction_instance']}={_fmt(c['evidence']['distance_to_segment'])}"
                            for c in checks)
        if not hits:
            return f"No candidate lies on the route (segment distances: {listing}).", None
        pick = hits[0]["obstruction_instance"]
        return (f"Segment distances: {listing}. {pick} lies on the route, closest to the segment.",
                instance_category(pick))

    def _tool_object_3d_detection(self, question, slots, entry, ok):
        cat = slots.count_category
        if cat is None:
            return "The 3D instances alone do not answer this question.", None
        n = sum(1 for r in entry.raw_output["instances"] if r["category"] == cat)
        return f"There are {n} {cat} instances after clustering.", str(n)

    def _tool_2d_object_detection(self, question, slots, entry, ok):
        rule, _ = self.rules.classify(question)
        if rule.name != "appearance":
            return "2D detections alone do not answer this question.", None
        out = entry.raw_output
        cats = [c for c in slots.categories if c in out]
        missing = [c for c in cats if not out[c]["views"]]
        if not cats or missing:
            return f"Some categories were never detected ({', '.join(missing) or 'none requested'}).", None
        order = appearance_order({c: out[c]["views"] for c in cats})
        value = ", ".join(order)
        for letter, text in slots.options:
            parts = [find_categories(p, self.vocabulary) for p in text.split(",")]
            if [p[0] if p else None for p in parts] == order:
                value = letter
        return f"Ordered by first detection frame: {', '.join(order)}.", value

    def _tool_video_image_query(self, question, slots, entry, ok):
        response = entry.raw_output["response"]
        m = _ANSWER_TAG.search(response)
        if m:
            return f"The direct estimate is {m.group(1)}.", m.group(1)
        rule, _ = self.rules.classify(question)
        if rule.name == "numerical":
            return "The video query did not return a numeric estimate.", None
        return f"The video query answered: {response}", response

    def _tool_knowledge_retrieval(self, question, slots, entry, ok):
        entries = entry.raw_output["entries"]
        if not entries:
            return "No size prior was found.", None
        top = parse_entry(entries[0])
        dims = dict(zip(("length", "width", "height"), top.dims_mean))
        if re.search(r"tall|height|high", question, re.I):
            value = dims["height"]
        elif re.search(r"wide|width", question, re.I):
            value = dims["width"]
        elif re.search(r"long|length", question, re.I):
            value = dims["length"]
        else:
            value = max(top.dims_mean)
        if re.search(r"centimet", question, re.I):
            value *= 100
        return f"Using the prior for {top.name}: {entries[0]}.", normalize_number(round(value, 2))
