"""Question classification and slot extraction from the bundled regex ruleset."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Optional

from ..vocabulary import DEFAULT_VOCABULARY, find_categories

__all__ = ["Ruleset", "Rule", "QuestionSlots", "load_rules", "default_rules", "parse_question"]


def _compile(patterns, macros, flags):
    out = []
    for p in patterns:
        if p.startswith("@"):
            p = macros[p[1:]]
        out.append(re.compile(p, flags))
    return tuple(out)


@dataclass(frozen=True)
class Rule:
    name: str
    patterns: tuple
    unless: tuple = ()
    plan: tuple = ()
    information: tuple = ()
    subrules: tuple = ()  # of Rule; ``plan`` holds tools appended to the parent plan

    def matches(self, text: str) -> bool:
        return any(p.search(text) for p in self.patterns) and not any(u.search(text) for u in self.unless)


@dataclass(frozen=True)
class Ruleset:
    rules: tuple
    fallback: str
    slots: dict = field(default_factory=dict)

    def rule(self, name: str) -> Rule:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(name)

    def classify(self, question: str) -> tuple:
        """``(rule, subrule or None)`` for the first matching rule, in file order."""
        for r in self.rules:
            if r.matches(question):
                sub = next((s for s in r.subrules if s.matches(question)), None)
                return r, sub
        return self.rule(self.fallback), None

    def plan_for(self, question: str) -> tuple:
        """``(tools, information, label)``."""
        rule, sub = self.classify(question)
        tools, info = list(rule.plan), list(rule.information)
        label = rule.name
        if sub is not None:
            tools += list(sub.plan)
            info += [i for i in sub.information if i not in info]
            label = f"{rule.name}/{sub.name}"
        return tools, info, label


def load_rules(data: dict) -> Ruleset:
    flags = re.IGNORECASE if "i" in data.get("flags", "") else 0
    macros = data.get("macros", {})

    def build(d, sub=False):
        return Rule(
            d["name"],
            _compile(d["patterns"], macros, flags),
            _compile(d.get("unless", []), macros, flags),
            tuple(d["append"] if sub else d["plan"]),
            tuple(d.get("information", [])),
            tuple(build(s, True) for s in d.get("subrules", [])),
        )

    rules = tuple(build(r) for r in data["rules"])
    if data["fallback"] not in {r.name for r in rules}:
        raise ValueError(f"fallback rule {data['fallback']!r} is not defined")
    slots = {k: re.compile(v, flags | re.MULTILINE) for k, v in data.get("slots", {}).items()}
    return Ruleset(rules, data["fallback"], slots)


@lru_cache(maxsize=None)
def default_rules() -> Ruleset:
    text = resources.files("spatial_agent").joinpath("data/planner_rules.json").read_text()
    return load_rules(json.loads(text))


@dataclass
class QuestionSlots:
    categories: list
    options: list  # [(letter, text)]
    stand: Optional[str] = None
    face: Optional[str] = None
    backward: bool = False
    target: Optional[str] = None
    destination: Optional[str] = None
    anchor: Optional[str] = None
    count_category: Optional[str] = None
    height_a: Optional[str] = None
    height_b: Optional[str] = None

    def option_categories(self, vocabulary) -> list:
        out = []
        for _, text in self.options:
            found = find_categories(text, vocabulary)
            out.append(found[0] if found else text.strip())
        return out


def _slot(rules: Ruleset, name: str, text: str, group: str, vocabulary) -> Optional[str]:
    pattern = rules.slots.get(name)
    m = pattern.search(text) if pattern is not None else None
    if m is None:
        return None
    raw = m.group(group).strip()
    found = find_categories(raw, vocabulary)
    return found[0] if found else raw


def parse_question(question: str, vocabulary=DEFAULT_VOCABULARY, rules: Ruleset | None = None) -> QuestionSlots:
    rules = rules or default_rules()
    options = []
    body_lines = []
    for line in question.splitlines():
        m = rules.slots["option"].match(line)
        if m:
            options.append((m["letter"].upper(), m["text"]))
        else:
            body_lines.append(line)
    body = " ".join(body_lines)
    slots = QuestionSlots(find_categories(question, vocabulary), options)
    m = rules.slots["stand_face"].search(body)
    if m:
        slots.stand = _slot(rules, "stand_face", body, "stand", vocabulary)
        slots.face = _slot(rules, "stand_face", body, "face", vocabulary)
        slots.backward = m["mode"].lower().startswith("with")
    slots.target = _slot(rules, "target", body, "target", vocabulary)
    slots.destination = _slot(rules, "destination", body, "destination", vocabulary)
    slots.anchor = _slot(rules, "anchor", body, "anchor", vocabulary)
    slots.count_category = _slot(rules, "count", body, "category", vocabulary)
    slots.height_a = _slot(rules, "height_pair", body, "a", vocabulary)
    slots.height_b = _slot(rules, "height_pair", body, "b", vocabulary)
    return slots
