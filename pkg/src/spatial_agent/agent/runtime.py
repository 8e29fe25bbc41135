"""The bounded plan, reflect, execute, summarize loop."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

from ..vocabulary import DEFAULT_VOCABULARY
from .records import AgentRun, CallChainEntry, ToolCall
from .remote import RemoteExecutor, RemotePlanner, RemoteReflector, RemoteSummarizer
from .schema import validate_args
from .scripted import ScriptedExecutor, ScriptedPlanner, ScriptedReflector, ScriptedSummarizer
from .tools import inject_heavy_payloads

__all__ = ["Roles", "scripted_roles", "remote_roles", "run", "execute_call", "trace_json", "DEFAULT_BUDGET"]

DEFAULT_BUDGET = 8


@dataclass
class Roles:
    planner: object
    reflector: object
    executor: object
    summarizer: object


def scripted_roles(vocabulary=DEFAULT_VOCABULARY, rules=None) -> Roles:
    return Roles(ScriptedPlanner(rules), ScriptedReflector(vocabulary, rules), ScriptedExecutor(),
                 ScriptedSummarizer(vocabulary, rules))


def remote_roles(transport) -> Roles:
    return Roles(RemotePlanner(transport), RemoteReflector(transport), RemoteExecutor(transport),
                 RemoteSummarizer(transport))


def _error_text(exc: BaseException) -> str:
    return f"{type(exc).__name__}: {exc}"


def execute_call(call: ToolCall, chain, registry, executor, question: str = "") -> CallChainEntry:
    """Validate, inject, dispatch and interpret one call.

    Failures at any stage (unknown tool, bad arguments, nothing to inject,
    tool exception) become an error entry instead of propagating.
    """
    schema, injected, error = None, {}, None
    try:
        schema = registry.schema(call.tool)
        args = validate_args(schema, call.args)
        args, injected = inject_heavy_payloads(args, chain, registry)
        raw = registry.dispatch(call.tool, args)
    except Exception as exc:  # noqa: BLE001 - every tool failure is evidence
        error = _error_text(exc)
        raw = {"error": error}
    text = executor.interpret(schema, call, raw, question)
    return CallChainEntry(call, raw, text, injected, error)


def run(question: str, video_path: str, registry, roles: Roles, budget: int = DEFAULT_BUDGET,
        clock=time.perf_counter) -> AgentRun:
    """Answer ``question`` about ``video_path`` with at most ``budget`` tool calls."""
    if int(budget) < 0:
        raise ValueError("budget must be >= 0")
    budget = int(budget)
    schemas = registry.schemas()
    timings = {"planner": 0.0, "steps": [], "summarizer": 0.0}

    t0 = clock()
    plan = roles.planner.plan(question, video_path, schemas)
    timings["planner"] = clock() - t0

    chain = []
    while len(chain) < budget:
        t0 = clock()
        decision = roles.reflector.decide(question, video_path, plan, chain, schemas)
        t1 = clock()
        if decision.action == "final":
            timings["steps"].append({"reflector": t1 - t0})
            break
        entry = execute_call(ToolCall(decision.tool, decision.args), chain, registry, roles.executor, question)
        chain.append(entry)
        timings["steps"].append({"reflector": t1 - t0, "executor": clock() - t1})

    t0 = clock()
    summary, final_answer = roles.summarizer.summarize(question, chain)
    timings["summarizer"] = clock() - t0
    return AgentRun(question, video_path, budget, plan, chain, summary, final_answer, timings)


def trace_json(agent_run: AgentRun, include_timings: bool = False) -> str:
    """Stable, diffable trace document."""
    return json.dumps(agent_run.to_dict(include_timings), indent=1, ensure_ascii=False) + "\n"
