"""Value types exchanged between the agent roles and the runtime."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

__all__ = ["ToolCall", "CallChainEntry", "Plan", "ReflectorDecision", "AgentRun", "BackendMalformedOutput"]


class BackendMalformedOutput(ValueError):
    """A role backend returned something other than the single JSON object its role requires."""


@dataclass(frozen=True)
class ToolCall:
    tool: str
    args: dict

    def to_dict(self) -> dict:
        return {"tool": self.tool, "args": self.args}


@dataclass
class CallChainEntry:
    call: ToolCall
    raw_output: Any
    interpretation: str
    injected: dict = field(default_factory=dict)  # heavy arg -> index of the source entry
    error: Optional[str] = None

    def __post_init__(self):
        if not str(self.interpretation).strip():
            raise ValueError("interpretation must be non-empty")

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        return {
            "call": self.call.to_dict(),
            "injected": dict(self.injected),
            "error": self.error,
            "raw_output": self.raw_output,
            "interpretation": self.interpretation,
        }


@dataclass(frozen=True)
class Plan:
    plan: tuple
    information: tuple
    rule: str = ""  # which decision rule produced the plan (scripted planner only)

    @property
    def tool_chain(self) -> list:
        return [{"tool": t} for t in self.plan]

    def to_dict(self) -> dict:
        return {"plan": list(self.plan), "tool_chain": self.tool_chain,
                "information": list(self.information), "rule": self.rule}

    @classmethod
    def from_dict(cls, d: dict) -> "Plan":
        if not isinstance(d, dict) or not isinstance(d.get("plan"), list):
            raise BackendMalformedOutput("plan must be a JSON object with a 'plan' list")
        info = d.get("information", [])
        if not isinstance(info, list):
            raise BackendMalformedOutput("'information' must be a list")
        chain = d.get("tool_chain", [{"tool": t} for t in d["plan"]])
        if not isinstance(chain, list) or [c.get("tool") if isinstance(c, dict) else None
                                           for c in chain] != d["plan"]:
            raise BackendMalformedOutput("'tool_chain' must mirror 'plan'")
        return cls(tuple(str(t) for t in d["plan"]), tuple(str(i) for i in info), str(d.get("rule", "")))


@dataclass(frozen=True)
class ReflectorDecision:
    analysis: str
    action: str  # "call_tool" or "final"
    tool: Optional[str] = None
    args: Optional[dict] = None
    final_answer: Optional[str] = None

    def __post_init__(self):
        if self.action == "call_tool":
            if not self.tool or self.args is None or self.final_answer is not None:
                raise BackendMalformedOutput("call_tool needs tool and args and no final_answer")
        elif self.action == "final":
            if self.tool is not None or self.args is not None:
                raise BackendMalformedOutput("final must not carry tool or args")
        else:
            raise BackendMalformedOutput(f"action must be 'call_tool' or 'final', got {self.action!r}")

    @classmethod
    def call(cls, tool: str, args: dict, analysis: str = "") -> "ReflectorDecision":
        return cls(analysis, "call_tool", tool, args)

    @classmethod
    def final(cls, analysis: str = "", final_answer: str = "") -> "ReflectorDecision":
        return cls(analysis, "final", final_answer=final_answer)

    @classmethod
    def from_dict(cls, d: dict) -> "ReflectorDecision":
        if not isinstance(d, dict):
            raise BackendMalformedOutput("decision must be a JSON object")
        action = d.get("action")
        if action == "call_tool":
            if not isinstance(d.get("tool"), str) or not isinstance(d.get("args"), dict):
                raise BackendMalformedOutput("call_tool needs a string 'tool' and an object 'args'")
            return cls(str(d.get("analysis", "")), action, d["tool"], d["args"])
        return cls(str(d.get("analysis", "")), action, final_answer=(
            None if d.get("final_answer") is None else str(d["final_answer"])))

    def to_dict(self) -> dict:
        d = {"analysis": self.analysis, "action": self.action}
        if self.action == "call_tool":
            d["tool"], d["args"] = self.tool, self.args
        else:
            d["final_answer"] = self.final_answer
        return d


@dataclass
class AgentRun:
    question: str
    video_path: str
    budget: int
    plan: Plan
    chain: list
    summary: str
    final_answer: str
    timings: dict = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> dict:
        d = {
            "question": self.question,
            "video_path": self.video_path,
            "budget": self.budget,
            "plan": self.plan.to_dict(),
            "chain": [dict(step=i, **e.to_dict()) for i, e in enumerate(self.chain)],
            "summary": self.summary,
            "final_answer": self.final_answer,
        }
        if include_timings:
            d["timings"] = self.timings
        return d
