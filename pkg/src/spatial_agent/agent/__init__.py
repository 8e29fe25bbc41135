"""Multi-role tool-calling agent."""

from .records import AgentRun, BackendMalformedOutput, CallChainEntry, Plan, ReflectorDecision, ToolCall
from .remote import parse_role_output, role_prompt
from .rules import default_rules, load_rules, parse_question
from .runtime import DEFAULT_BUDGET, Roles, execute_call, remote_roles, run, scripted_roles, trace_json
from .schema import (ArgSpec, ArgumentError, ArgumentTypeError, DuplicateToolError, MissingArgumentError,
                     ToolRegistry, ToolSchema, UnknownArgumentError, UnknownToolError, validate_args)
from .scripted import SENTINEL, ScriptedExecutor, ScriptedPlanner, ScriptedReflector, ScriptedSummarizer
from .tools import (HEAVY_ARGS, TOOL_FAMILIES, NoPriorOutputError, ToolConfig, build_registry,
                    inject_heavy_payloads, render_query_prompt)

__all__ = [
    "AgentRun", "BackendMalformedOutput", "CallChainEntry", "Plan", "ReflectorDecision", "ToolCall",
    "parse_role_output", "role_prompt", "default_rules", "load_rules", "parse_question",
    "DEFAULT_BUDGET", "Roles", "execute_call", "remote_roles", "run", "scripted_roles", "trace_json",
    "ArgSpec", "ArgumentError", "ArgumentTypeError", "DuplicateToolError", "MissingArgumentError",
    "ToolRegistry", "ToolSchema", "UnknownArgumentError", "UnknownToolError", "validate_args",
    "SENTINEL", "ScriptedExecutor", "ScriptedPlanner", "ScriptedReflector", "ScriptedSummarizer",
    "HEAVY_ARGS", "TOOL_FAMILIES", "NoPriorOutputError", "ToolConfig", "build_registry",
    "inject_heavy_payloads", "render_query_prompt",
]
