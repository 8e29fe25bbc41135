"""Role backends that delegate to an external model over the line-JSON wire protocol."""

from __future__ import annotations

import json
import re
from functools import lru_cache
from importlib import resources

from ..wire import RemoteCallError, WireError
from .records import BackendMalformedOutput, Plan, ReflectorDecision

__all__ = [
    "parse_role_output",
    "role_prompt",
    "RemoteRole",
    "RemotePlanner",
    "RemoteReflector",
    "RemoteExecutor",
    "RemoteSummarizer",
    "ROLES",
]

ROLES = ("planner", "reflector", "executor", "summarizer")
_FENCE = re.compile(r"^```[a-zA-Z0-9_-]*\s*\n(?P<body>.*?)\n?```$", re.DOTALL)
HISTORY_OUTPUT_LIMIT = 4000


@lru_cache(maxsize=None)
def role_prompt(role: str) -> str:
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    return resources.files("spatial_agent").joinpath(f"prompts/{role}.txt").read_text()


def parse_role_output(text: str) -> dict:
    """Exactly one top-level JSON object, optionally wrapped in a markdown fence."""
    if not isinstance(text, str):
        raise BackendMalformedOutput(f"expected text, got {type(text).__name__}")
    body = text.strip()
    m = _FENCE.match(body)
    if m:
        body = m.group("body").strip()
    try:
        value, end = json.JSONDecoder().raw_decode(body)
    except json.JSONDecodeError as exc:
        raise BackendMalformedOutput(f"not a JSON object: {exc.msg}") from None
    if body[end:].strip():
        raise BackendMalformedOutput("extra content after the JSON object")
    if not isinstance(value, dict):
        raise BackendMalformedOutput(f"expected a JSON object, got {type(value).__name__}")
    return value


def _compact(value, limit: int = HISTORY_OUTPUT_LIMIT):
    text = json.dumps(value)
    if len(text) <= limit:
        return value
    return {"omitted": f"{len(text)} bytes; pass {{}} to reuse this output"}


class RemoteRole:
    """One role served by a transport; requests carry the role's system prompt."""

    role = ""

    def __init__(self, transport, system_prompt: str | None = None):
        self.transport = transport
        self.system_prompt = system_prompt if system_prompt is not None else role_prompt(self.role)

    def ask(self, user_payload: dict) -> dict:
        request = {"role": self.role, "system_prompt": self.system_prompt, "user_payload": user_payload}
        try:
            reply = self.transport.request(request)
        except (WireError, RemoteCallError) as exc:
            raise BackendMalformedOutput(f"{self.role} backend failed: {exc}") from exc
        if isinstance(reply, dict):
            return reply
        return parse_role_output(reply)


def _history(chain) -> list:
    return [{"tool": e.call.tool, "args": e.call.args, "tool_output": _compact(e.raw_output),
             "result_description": e.interpretation} for e in chain]


class RemotePlanner(RemoteRole):
    role = "planner"

    def plan(self, question: str, video_path: str, schemas) -> Plan:
        reply = self.ask({"video_path": video_path, "question": question,
                          "tool_schemas": [s.to_json_schema() for s in schemas]})
        plan = Plan.from_dict(reply)
        known = {s.name for s in schemas}
        unknown = [t for t in plan.plan if t not in known]
        if unknown:
            raise BackendMalformedOutput(f"plan names unregistered tools: {unknown}")
        return plan


class RemoteReflector(RemoteRole):
    role = "reflector"

    def decide(self, question: str, video_path: str, plan: Plan, chain, schemas) -> ReflectorDecision:
        step = len(chain)
        by_name = {s.name: s for s in schemas}
        if step < len(plan.plan):
            tool = plan.plan[step]
            instruction = f"Step {step + 1}: call {tool}."
            schema = by_name[tool].to_json_schema() if tool in by_name else None
        else:
            instruction = "All planned steps have run: finalize."
            schema = None
        reply = self.ask({"instruction": instruction, "tool_schema": schema, "plan": plan.to_dict(),
                          "history": _history(chain), "video_path": video_path, "question": question})
        return ReflectorDecision.from_dict(reply)


class RemoteExecutor(RemoteRole):
    role = "executor"

    def interpret(self, schema, call, raw_output, question: str = "") -> str:
        reply = self.ask({"tool_schema": schema.to_json_schema() if schema is not None else None,
                          "args": call.args, "tool_output": _compact(raw_output), "question": question})
        text = reply.get("result_description")
        if not isinstance(text, str) or not text.strip():
            raise BackendMalformedOutput("executor reply needs a non-empty 'result_description'")
        return text


class RemoteSummarizer(RemoteRole):
    role = "summarizer"

    def summarize(self, question: str, chain) -> tuple:
        reply = self.ask({"question": question, "history": [
            {"tool_output": _compact(e.raw_output), "result_description": e.interpretation} for e in chain]})
        summary, final = reply.get("summary"), reply.get("final_answer")
        if not isinstance(summary, str) or not isinstance(final, (str, int, float)) or isinstance(final, bool):
            raise BackendMalformedOutput("summarizer reply needs 'summary' and 'final_answer'")
        return summary, str(final).strip()
