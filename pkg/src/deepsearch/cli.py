"""Command-line entry points: ask, serve, eval, replay.

Exit codes: 0 success, 1 the session aborted, 2 configuration or usage
errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .backends import BackendError
from .config import ConfigError, EngineConfig, build_backends, load_config, load_templates
from .evalharness import MalformedRecordError, load_dataset, render_table, run_eval
from .events import AgentEvent, read_event_log, snapshot_from_events, write_event_log
from .graph import GraphError
from .planner import PlannerSession, SessionStatus, run_session
from .templates import TemplateError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepsearch",
        description="Iterative search agent: plans a question into a graph of "
        "sub-questions and answers them with a retrieval pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ask = sub.add_parser("ask", help="answer one question and print the result")
    ask.add_argument("question")
    ask.add_argument("--config", metavar="PATH")
    ask.add_argument("--trace-out", metavar="DIR", help="write the session trace here")

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--config", metavar="PATH")

    evalp = sub.add_parser("eval", help="score an agent over a dataset")
    evalp.add_argument("dataset")
    evalp.add_argument(
        "--agent", required=True, choices=("nosearch", "react", "mindsearch")
    )
    evalp.add_argument("--judge", action="store_true", help="score with the model judge")
    evalp.add_argument("--report", metavar="PATH", help="write per-item records here")
    evalp.add_argument("--config", metavar="PATH")

    replay = sub.add_parser("replay", help="re-render a recorded event log")
    replay.add_argument("trace", help="events file or trace directory")

    return parser


def _load_engine_config(path: str | None) -> EngineConfig:
    if path:
        return load_config(path)
    return EngineConfig()


def write_trace(session: PlannerSession, out_dir: str) -> str:
    target = os.path.join(out_dir, session.session_id)
    os.makedirs(target, exist_ok=True)
    write_event_log(os.path.join(target, "events.jsonl"), session.events.events_since(0))
    with open(os.path.join(target, "trace.json"), "w", encoding="utf-8") as fh:
        json.dump(session.as_trace_dict(), fh, indent=2, sort_keys=True, ensure_ascii=False)
    with open(os.path.join(target, "snapshot.txt"), "w", encoding="utf-8") as fh:
        fh.write(session.graph.snapshot())
    for name, transcript in session.transcripts.items():
        with open(os.path.join(target, f"searcher-{name}.json"), "w", encoding="utf-8") as fh:
            json.dump(transcript.as_dict(), fh, indent=2, sort_keys=True, ensure_ascii=False)
    return target


def _cmd_ask(args: argparse.Namespace) -> int:
    cfg = _load_engine_config(args.config)
    backends = build_backends(cfg)
    templates = load_templates(cfg)
    session = run_session(args.question, cfg.planner_config(), backends, templates)
    trace_dir = args.trace_out or cfg.trace_dir
    if trace_dir:
        write_trace(session, trace_dir)
    if session.final_response is None:
        print(f"session aborted: {session.error}", file=sys.stderr)
        return 1
    print(session.final_response.answer_text)
    if session.final_response.citations:
        print()
        print("citations:")
        for i, (url, title) in enumerate(session.final_response.citations, start=1):
            print(f"  [{i}] {title} ({url})")
    return 0 if session.status is SessionStatus.DONE else 1


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    cfg = _load_engine_config(args.config)
    build_backends(cfg)  # fail fast before binding the port
    serve(cfg)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = _load_engine_config(args.config)
    backends = build_backends(cfg)
    templates = load_templates(cfg)
    items = load_dataset(args.dataset)
    report = run_eval(
        items,
        agent_kind=args.agent,
        scoring="judge" if args.judge else "em",
        backends=backends,
        templates=templates,
        planner_config=cfg.planner_config(),
    )
    if args.report:
        report.write_jsonl(args.report)
    print(render_table([report]))
    return 0


def _event_summary(ev: AgentEvent) -> str:
    p = ev.payload

    def clip(text: str, width: int = 70) -> str:
        text = " ".join(str(text).split())
        return text if len(text) <= width else text[: width - 3] + "..."

    if ev.kind == "session_started":
        return clip(p.get("question", ""))
    if ev.kind == "planner_thought":
        return clip(p.get("text", ""))
    if ev.kind == "code_parsed":
        if p.get("ok"):
            return f"ok, {p.get('statements', 0)} statement(s)"
        return f"rejected, {len(p.get('diagnostics', []))} diagnostic(s)"
    if ev.kind == "node_added":
        return f"{p.get('name')} ({p.get('node_kind')})"
    if ev.kind == "edge_added":
        return f"{p.get('from')} -> {p.get('to')}"
    if ev.kind == "node_state_changed":
        text = f"{p.get('name')} -> {p.get('state')}"
        if p.get("error"):
            text += f" ({clip(p['error'], 40)})"
        return text
    if ev.kind == "node_response":
        return f"{p.get('name')}: {clip(p.get('answer', ''), 56)}"
    if ev.kind in ("final_answer_delta",):
        return clip(p.get("text", ""))
    if ev.kind == "final_answer_done":
        return clip(p.get("answer", ""))
    if ev.kind in ("warning", "error"):
        return clip(p.get("message", ""))
    if ev.kind == "session_done":
        return f"status={p.get('status')} turns={p.get('turns')}"
    return ""


def _cmd_replay(args: argparse.Namespace) -> int:
    path = args.trace
    if os.path.isdir(path):
        path = os.path.join(path, "events.jsonl")
    if not os.path.isfile(path):
        print(f"no event log at {path}", file=sys.stderr)
        return 2
    try:
        events = read_event_log(path)
    except (json.JSONDecodeError, KeyError) as exc:
        print(f"malformed event log {path}: {exc}", file=sys.stderr)
        return 2
    for ev in events:
        print(f"{ev.seq:>5}  {ev.kind:<19} {_event_summary(ev)}".rstrip())
    print()
    print("reconstructed graph:")
    print(snapshot_from_events(events).render(), end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "ask": _cmd_ask,
        "serve": _cmd_serve,
        "eval": _cmd_eval,
        "replay": _cmd_replay,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, TemplateError, MalformedRecordError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (GraphError, BackendError) as exc:
        print(f"session error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 0


if __name__ == "__main__":
    sys.exit(main())
