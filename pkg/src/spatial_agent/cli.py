"""Command-line entry point: ``spatial-agent <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

from . import __version__
from .agent import ToolConfig, build_registry, remote_roles, run, scripted_roles, trace_json
from .benchgen import (KINDS, QuestionConfig, SceneConfig, cognitive_map, generate_questions, generate_scene,
                       read_questions, validate_cognitive_map, write_questions)
from .benchgen.scenes import InfeasibleSceneError
from .knowledge import KnowledgeFormatError, load_knowledge
from .metrics import evaluate
from .perception import (NoiseModel, RemoteProvider, SamplingPolicy, SceneFormatError, SyntheticProvider,
                         load_scene, provider_handler, save_scene)
from .wire import WireError, make_socket_server, serve_stdio, transport_from_endpoint

log = logging.getLogger("spatial_agent")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

ENV_HELP = """environment:
  SPATIAL_AGENT_ROLE_ENDPOINT      role backend endpoint for --backend remote (tcp://HOST:PORT or pipe:COMMAND)
  SPATIAL_AGENT_PROVIDER_ENDPOINT  perception provider endpoint; replaces the synthetic provider
  SPATIAL_AGENT_TIMEOUT            seconds per remote request before the single retry (default 60)
Flags win over environment variables, which win over the --config file.

exit codes: 0 success, 1 usage error, 2 input error, 3 internal error.
Errors are also reported as one JSON line on stderr."""


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- configuration ---------------------------------------------------------------

def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return data


def _section(cfg: dict, name: str, cls, overrides: dict | None = None):
    data = dict(cfg.get(name, {}))
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InputError(f"config section {name!r}: unknown keys {unknown}")
    try:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})
    except (TypeError, ValueError) as exc:
        raise InputError(f"config section {name!r}: {exc}") from None


def _setting(flag, env: str, cfg: dict, key: str, default=None):
    if flag is not None:
        return flag
    if os.environ.get(env):
        return os.environ[env]
    return cfg.get(key, default)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, ensure_ascii=False) + "\n")


# -- commands --------------------------------------------------------------------

def cmd_gen_scene(args, cfg) -> int:
    scene_cfg = _section(cfg, "scene", SceneConfig)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        seed = args.seed + i
        try:
            scene = generate_scene(scene_cfg, seed)
        except InfeasibleSceneError as exc:
            raise InputError(str(exc)) from None
        save_scene(scene, out / f"{scene.scene_id}.json")
    print(f"wrote {args.count} scenes to {out}")
    return EXIT_OK


def _load_scenes(directory) -> dict:
    d = Path(directory)
    if not d.is_dir():
        raise InputError(f"scene directory not found: {d}")
    scenes = {}
    for p in sorted(d.glob("*.json")):
        try:
            scene = load_scene(p)
        except SceneFormatError as exc:
            raise InputError(f"{p}: {exc}") from None
        scenes[scene.scene_id] = scene
    if not scenes:
        raise InputError(f"no scene files in {d}")
    return scenes


def cmd_gen_bench(args, cfg) -> int:
    qcfg = _section(cfg, "questions", QuestionConfig)
    scenes = _load_scenes(args.scenes)
    kinds = args.kinds or list(KINDS)
    bad = [k for k in kinds if k not in KINDS]
    if bad:
        raise UsageError(f"unknown question kinds {bad}; choose from {list(KINDS)}")
    questions = []
    for scene in scenes.values():
        for kind in kinds:
            questions.extend(generate_questions(scene, kind, args.per_kind, args.seed, qcfg))
    write_questions(args.out, questions)
    if args.cogmaps:
        cdir = Path(args.cogmaps)
        cdir.mkdir(parents=True, exist_ok=True)
        for scene in scenes.values():
            doc = cognitive_map(scene).to_dict()
            validate_cognitive_map(doc)
            _write_json(cdir / f"{scene.scene_id}.json", doc)
    counts = {k: sum(q.kind == k for q in questions) for k in kinds}
    print(f"wrote {len(questions)} questions to {args.out}: {counts}")
    return EXIT_OK


class _Sessions:
    """One provider and tool registry per scene, built on first use."""

    def __init__(self, scenes, noise, policy, tool_cfg, salt, provider_endpoint, timeout):
        self.scenes, self.noise, self.policy = scenes, noise, policy
        self.tool_cfg, self.salt = tool_cfg, salt
        self.provider_endpoint, self.timeout = provider_endpoint, timeout
        self._cache: dict = {}
        self._lock = threading.Lock()

    def get(self, scene_id):
        with self._lock:
            if scene_id not in self._cache:
                if self.provider_endpoint:
                    provider = RemoteProvider(transport_from_endpoint(self.provider_endpoint, self.timeout))
                else:
                    if scene_id not in self.scenes:
                        raise InputError(f"question refers to unknown scene {scene_id!r}")
                    provider = SyntheticProvider(self.scenes[scene_id], self.policy, self.noise, salt=self.salt)
                self._cache[scene_id] = (provider, build_registry(provider, self.tool_cfg))
            return self._cache[scene_id]


def cmd_run(args, cfg) -> int:
    questions = read_questions(args.questions)
    if not questions:
        raise InputError(f"{args.questions}: no questions")
    provider_endpoint = _setting(args.provider_endpoint, "SPATIAL_AGENT_PROVIDER_ENDPOINT", cfg, "provider_endpoint")
    role_endpoint = _setting(args.role_endpoint, "SPATIAL_AGENT_ROLE_ENDPOINT", cfg, "role_endpoint")
    timeout = float(_setting(args.timeout, "SPATIAL_AGENT_TIMEOUT", cfg, "timeout", 60.0))
    backend = args.backend or cfg.get("backend", "scripted")
    budget = int(_setting(args.budget, "", cfg, "budget", 8))
    workers = int(_setting(args.workers, "", cfg, "workers", 1))
    noise = _section(cfg, "noise", NoiseModel, {"center_sigma": args.center_sigma,
                                                "box_jitter_sigma": args.box_jitter_sigma,
                                                "miss_rate": args.miss_rate})
    policy = _section(cfg, "policy", SamplingPolicy)
    tools = dict(cfg.get("tools", {}))
    if args.clustering:
        tools["clustering"] = args.clustering
    knowledge_path = tools.pop("knowledge_path", None)
    tool_cfg = _section({"tools": tools}, "tools", ToolConfig)
    if knowledge_path:
        try:
            tool_cfg.knowledge = load_knowledge(knowledge_path)
        except (OSError, KnowledgeFormatError) as exc:
            raise InputError(str(exc)) from None
    scenes = {} if provider_endpoint else _load_scenes(args.scenes)
    if backend == "remote":
        if not role_endpoint:
            raise UsageError("--backend remote needs --role-endpoint or SPATIAL_AGENT_ROLE_ENDPOINT")
        roles = remote_roles(transport_from_endpoint(role_endpoint, timeout))
    else:
        roles = scripted_roles()
    sessions = _Sessions(scenes, noise, policy, tool_cfg, args.seed, provider_endpoint, timeout)

    out = Path(args.out)
    (out / "traces").mkdir(parents=True, exist_ok=True)

    def answer(q):
        provider, registry = sessions.get(q.scene_id)
        result = run(q.prompt, provider.video_path, registry, roles, budget)
        trace_path = out / "traces" / f"{q.question_id}.json"
        trace_path.write_text(trace_json(result, include_timings=args.timings))
        return {"question_id": q.question_id, "final_answer": result.final_answer,
                "trace_path": str(trace_path.relative_to(out))}

    ordered = sorted(questions, key=lambda q: q.question_id)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(answer, ordered))
    else:
        records = [answer(q) for q in ordered]
    with open(out / "predictions.ndjson", "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    print(f"answered {len(records)} questions; predictions in {out / 'predictions.ndjson'}")
    return EXIT_OK


def _read_predictions(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"prediction file not found: {p}")
    preds = {}
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            preds[rec["question_id"]] = str(rec["final_answer"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise InputError(f"{p}:{lineno}: bad prediction record ({exc})") from None
    if not preds:
        raise InputError(f"{p}: prediction file is empty")
    return preds


def cmd_eval(args, cfg) -> int:
    questions = read_questions(args.questions)
    report = evaluate(questions, _read_predictions(args.predictions))
    print(report.table())
    if args.out:
        _write_json(Path(args.out), report.to_dict())
    return EXIT_OK


def cmd_trace(args, cfg) -> int:
    try:
        doc = json.loads(Path(args.trace).read_text())
    except FileNotFoundError:
        raise InputError(f"trace file not found: {args.trace}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.trace}: invalid JSON ({exc.msg})") from None
    try:
        print(f"question: {doc['question']}")
        print(f"video: {doc['video_path']}  budget: {doc['budget']}")
        print(f"plan: {' -> '.join(doc['plan']['plan']) or '(empty)'}  [{doc['plan'].get('rule', '')}]")
        for e in doc["chain"]:
            args_view = {k: ("{...}" if isinstance(v, (dict, list)) else v) for k, v in e["call"]["args"].items()}
            status = "ERROR" if e.get("error") else "ok"
            print(f"  [{e['step']}] {e['call']['tool']} {json.dumps(args_view)} {status}")
            print(f"      {e['interpretation']}")
        print(f"summary: {doc['summary']}")
        print(f"final answer: {doc['final_answer']}")
    except (KeyError, TypeError) as exc:
        raise InputError(f"{args.trace}: not a trace document ({exc})") from None
    return EXIT_OK


def cmd_serve_provider(args, cfg) -> int:
    try:
        scene = load_scene(args.scene)
    except (OSError, SceneFormatError) as exc:
        raise InputError(str(exc)) from None
    noise = _section(cfg, "noise", NoiseModel, {"center_sigma": args.center_sigma})
    provider = SyntheticProvider(scene, _section(cfg, "policy", SamplingPolicy), noise, salt=args.seed)
    handler = provider_handler(provider)
    if args.stdio:
        served = serve_stdio(handler)
        log.info("served %d requests", served)
        return EXIT_OK
    server = make_socket_server(handler, args.host, args.port)
    host, port = server.server_address
    print(json.dumps({"listening": f"tcp://{host}:{port}"}), flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spatial-agent", description="Spatial reasoning agent toolkit.",
                     epilog=ENV_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, help="global seed (default 0)")
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-scene", help="generate synthetic scene files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("gen-bench", help="generate a question set from scene files")
    p.add_argument("--scenes", required=True, help="directory of scene JSON files")
    p.add_argument("--out", required=True, help="question file (newline-delimited JSON)")
    p.add_argument("--per-kind", type=int, default=5, help="questions per kind per scene")
    p.add_argument("--kinds", nargs="+", help=f"subset of {', '.join(KINDS)}")
    p.add_argument("--cogmaps", help="also write one cognitive map per scene into this directory")
    p.set_defaults(func=cmd_gen_bench)

    p = sub.add_parser("run", help="answer a question set with the agent")
    p.add_argument("--questions", required=True)
    p.add_argument("--scenes", help="directory of scene JSON files (synthetic provider)")
    p.add_argument("--out", required=True, help="output directory for traces and predictions")
    p.add_argument("--budget", type=int, help="tool-call budget per question (default 8)")
    p.add_argument("--workers", type=int, help="parallel questions (default 1)")
    p.add_argument("--backend", choices=("scripted", "remote"))
    p.add_argument("--role-endpoint")
    p.add_argument("--provider-endpoint")
    p.add_argument("--timeout", type=float)
    p.add_argument("--clustering", choices=("constrained_greedy", "dbscan"))
    p.add_argument("--center-sigma", type=float, help="3D center noise of the synthetic provider")
    p.add_argument("--box-jitter-sigma", type=float)
    p.add_argument("--miss-rate", type=float)
    p.add_argument("--timings", action="store_true", help="record per-step timings in traces")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score predictions against a question set")
    p.add_argument("--questions", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trace", help="pretty-print one run trace")
    p.add_argument("trace")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("serve-provider", help="serve a synthetic scene over the wire protocol")
    p.add_argument("--scene", required=True)
    p.add_argument("--stdio", action="store_true", help="serve on stdin/stdout instead of TCP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--center-sigma", type=float)
    p.set_defaults(func=cmd_serve_provider)
    return parser


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": {"code": code, "type": kind, "message": message}}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required")
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING))
        cfg = _load_config(args.config)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        return args.func(args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail(EXIT_USAGE, "usage", str(exc))
    except (InputError, FileNotFoundError, ValueError, WireError) as exc:
        return _fail(EXIT_INPUT, "input", str(exc))
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        return _fail(EXIT_INTERNAL, "internal", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
