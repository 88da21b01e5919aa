"""Turn loop that grows the thought-graph and schedules searchers.

Each turn sends the whole dialogue to the model, parses the code block from
its reply, applies the graph actions, then dispatches every ready node to a
bounded worker pool and blocks until that wave finishes.  The wave results
are appended to the dialogue for the next turn.  Once the end node exists
and everything else is resolved, one final code-free model turn produces the
answer.  The loop never makes more than max_turns + 1 model calls, whatever
the backend does.
"""

from __future__ import annotations

import time
import uuid
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from enum import Enum

from .actions import AddNode, apply_actions, extract_code, parse
from .backends import Backends, LlmBackendError, Message
from .events import EventBufferOverflow, EventLog
from .graph import (
    END_NAME,
    NodeKind,
    NodeResponse,
    NodeState,
    RESOLVED_STATES,
    ThoughtGraph,
    content_digest,
)
from .searcher import SearcherConfig, SearcherFailure, SearcherTranscript, run_searcher
from .templates import TemplateSet

END_CONTENT = "final answer"  # content of a force-added end node


class SessionStatus(str, Enum):
    ACTIVE = "active"
    FINALIZING = "finalizing"
    DONE = "done"
    ABORTED = "aborted"


class TurnBudgetExhaustedError(Exception):
    """No regular turns left; the session moved to finalizing."""


class SessionAbortedError(Exception):
    """The session cannot continue; details are on the session object."""


@dataclass
class PlannerConfig:
    max_turns: int = 10
    max_nodes: int = 32
    max_concurrent_searchers: int = 8
    searcher: SearcherConfig = field(default_factory=SearcherConfig)

    def validate(self) -> None:
        for fname in ("max_turns", "max_nodes", "max_concurrent_searchers"):
            if getattr(self, fname) < 1:
                raise ValueError(f"{fname} must be >= 1")


@dataclass
class TurnRecord:
    """One planner turn: what the model said, what it changed, what came back.

    Replaying records rebuilds the prompt of any later turn byte-exactly, so
    they are append-only and feedback is stored verbatim.
    """

    index: int
    model_text: str
    code: str | None
    diagnostics: list[str]
    feedback: str
    new_nodes: list[str]
    new_edges: list[tuple[str, str]]
    duration: float

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "model_text": self.model_text,
            "code": self.code,
            "diagnostics": self.diagnostics,
            "feedback": self.feedback,
            "new_nodes": self.new_nodes,
            "new_edges": [list(e) for e in self.new_edges],
            "duration": self.duration,
        }


class PlannerSession:
    """State of one question: the graph, the dialogue so far, and the event
    log observers read from."""

    def __init__(
        self,
        question: str,
        config: PlannerConfig,
        session_id: str | None = None,
        events: EventLog | None = None,
    ) -> None:
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.question = question
        self.config = config
        self.graph = ThoughtGraph(question)
        self.turns: list[TurnRecord] = []
        self.status = SessionStatus.ACTIVE
        self.final_response: NodeResponse | None = None
        self.error: str | None = None
        self.transcripts: dict[str, SearcherTranscript] = {}
        self.events = events if events is not None else EventLog(session_id=self.session_id)
        self.llm_calls = 0
        self.started_at = time.time()
        self.finished_at: float | None = None

    def emit(self, kind: str, payload: dict) -> None:
        # a full or closed buffer must never stall the planner
        try:
            self.events.append(kind, payload)
        except EventBufferOverflow:
            pass

    def as_trace_dict(self) -> dict:
        # copy turns/transcripts first: /trace may race the running session
        turns = list(self.turns)
        transcripts = dict(self.transcripts)
        return {
            "session_id": self.session_id,
            "question": self.question,
            "status": self.status.value,
            "turns": [t.as_dict() for t in turns],
            "final": self.final_response.as_dict() if self.final_response else None,
            "error": self.error,
            "snapshot": self.graph.snapshot(),
            "transcripts": {name: t.as_dict() for name, t in transcripts.items()},
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


def build_planner_prompt(session: PlannerSession, templates: TemplateSet) -> list[Message]:
    """Full dialogue for the next model call: instructions, the question,
    then every turn's reply and result feedback, verbatim."""
    messages: list[Message] = [
        {"role": "system", "content": templates.render("planner.system")},
        {"role": "user", "content": session.question},
    ]
    for turn in session.turns:
        messages.append({"role": "assistant", "content": turn.model_text})
        messages.append({"role": "tool", "content": turn.feedback})
    if session.status is SessionStatus.FINALIZING:
        messages.append(
            {
                "role": "user",
                "content": templates.render("planner.finalize", question=session.question),
            }
        )
    return messages


def _call_planner_llm(session: PlannerSession, llm, messages: list[Message]) -> str:
    """One model call with a single retry, both charged against the global
    call budget of max_turns + 1."""
    budget = session.config.max_turns + 1
    last_error: LlmBackendError | None = None
    for _ in range(2):
        if session.llm_calls >= budget:
            raise TurnBudgetExhaustedError("planner call budget exhausted")
        session.llm_calls += 1
        try:
            return llm.generate(messages)
        except LlmBackendError as exc:
            last_error = exc
    session.status = SessionStatus.ABORTED
    session.error = f"planner model call failed twice: {last_error}"
    session.emit("error", {"message": session.error})
    raise SessionAbortedError(session.error)


def _node_added_payload(session: PlannerSession, name: str) -> dict:
    node = session.graph.node(name)
    return {
        "name": node.name,
        "node_kind": node.kind.value,
        "state": node.state.value,
        "node_seq": node.seq,
        "digest": content_digest(node.content),
    }


def _result_block(session: PlannerSession, name: str) -> str:
    node = session.graph.node(name)
    if node.state is NodeState.DONE and node.response is not None:
        block = f"[node {name}] {node.response.answer_text}"
        if node.response.citations:
            urls = ", ".join(url for url, _ in node.response.citations)
            block += f"\ncitations: {urls}"
        return block
    return f"[node {name}] failed: {node.error}"


def _end_ready(g: ThoughtGraph) -> bool:
    if g.end_name is None:
        return False
    return all(
        n.state in RESOLVED_STATES for n in g.nodes() if n.kind is not NodeKind.END
    )


def run_turn(session: PlannerSession, backends: Backends, templates: TemplateSet) -> TurnRecord:
    """One planner turn: model call, action application, one searcher wave."""
    if session.status is not SessionStatus.ACTIVE:
        raise RuntimeError(f"session is {session.status.value}, not active")
    if len(session.turns) >= session.config.max_turns:
        session.status = SessionStatus.FINALIZING
        raise TurnBudgetExhaustedError(f"turn budget ({session.config.max_turns}) exhausted")

    started = time.perf_counter()
    turn_index = len(session.turns)
    prompt = build_planner_prompt(session, templates)
    try:
        model_text = _call_planner_llm(session, backends.llm, prompt)
    except TurnBudgetExhaustedError:
        session.status = SessionStatus.FINALIZING
        raise
    session.emit("planner_thought", {"turn": turn_index, "text": model_text})

    feedback_parts: list[str] = []
    diagnostics: list[str] = []
    new_nodes: list[str] = []
    new_edges: list[tuple[str, str]] = []

    code = extract_code(model_text)
    if code is None:
        feedback_parts.append(
            "(no code block found; write graph actions in a fenced code block)"
        )
    else:
        outcome = parse(code)
        session.emit(
            "code_parsed",
            {
                "turn": turn_index,
                "ok": outcome.ok,
                "statements": len(outcome.actions),
                "diagnostics": [d.render() for d in outcome.diagnostics],
                "digest": content_digest(code),
            },
        )
        if not outcome.ok:
            diagnostics = [d.render() for d in outcome.diagnostics]
            feedback_parts.append("code rejected; the graph was not changed:")
            feedback_parts.extend(diagnostics)
        else:
            applied = apply_actions(session.graph, outcome.actions, session.config.max_nodes)
            new_nodes = applied.new_nodes
            for action in applied.applied:
                if isinstance(action, AddNode):
                    session.emit("node_added", _node_added_payload(session, action.name))
                else:
                    session.emit("edge_added", {"from": action.src, "to": action.dst})
                    new_edges.append((action.src, action.dst))
            for diag in applied.diagnostics:
                rendered = diag.render()
                diagnostics.append(rendered)
                session.emit("warning", {"message": rendered})
                feedback_parts.append(f"action skipped: {rendered}")

    dispatched = _run_wave(session, backends, templates)
    for name in dispatched:
        feedback_parts.append(_result_block(session, name))
    if not feedback_parts:
        feedback_parts.append("(no graph changes and no new results)")

    if _end_ready(session.graph):
        session.status = SessionStatus.FINALIZING

    record = TurnRecord(
        index=turn_index,
        model_text=model_text,
        code=code,
        diagnostics=diagnostics,
        feedback="\n".join(feedback_parts),
        new_nodes=new_nodes,
        new_edges=new_edges,
        duration=time.perf_counter() - started,
    )
    session.turns.append(record)
    return record


def _run_wave(session: PlannerSession, backends: Backends, templates: TemplateSet) -> list[str]:
    """Dispatch every ready search node and block until the wave resolves.

    Results are recorded in dispatch (seq) order so event logs and feedback
    are deterministic regardless of completion order.
    """
    g = session.graph
    ready = [name for name in g.ready_nodes() if g.node(name).kind is NodeKind.SEARCH]
    if not ready:
        return []
    config = session.config
    for name in ready:
        g.mark_running(name)
        session.emit("node_state_changed", {"name": name, "state": NodeState.RUNNING.value})
    outer_timeout = config.searcher.timeout + 30.0
    with ThreadPoolExecutor(max_workers=config.max_concurrent_searchers) as pool:
        futures = [
            pool.submit(run_searcher, name, g, backends, config.searcher, templates)
            for name in ready
        ]
        for name, future in zip(ready, futures):
            try:
                response, transcript = future.result(timeout=outer_timeout)
            except SearcherFailure as exc:
                session.transcripts[name] = exc.transcript
                _record_failure(session, name, str(exc))
                continue
            except FutureTimeout:
                _record_failure(session, name, "Timeout: searcher never returned")
                continue
            except Exception as exc:  # searcher bugs must not kill the session
                _record_failure(session, name, f"Error: {exc}")
                continue
            session.transcripts[name] = transcript
            g.record_result(name, response)
            session.emit(
                "node_response",
                {
                    "name": name,
                    "answer": response.answer_text,
                    "citations": [list(c) for c in response.citations],
                    "transcript_digest": response.transcript_digest,
                },
            )
            session.emit(
                "node_state_changed", {"name": name, "state": NodeState.DONE.value}
            )
    return ready


def _record_failure(session: PlannerSession, name: str, message: str) -> None:
    session.graph.record_result(name, message)
    session.emit("warning", {"message": f"searcher {name} failed: {message}"})
    session.emit(
        "node_state_changed",
        {"name": name, "state": NodeState.FAILED.value, "error": message},
    )


def _aggregate_citations(g: ThoughtGraph) -> list[tuple[str, str]]:
    citations: list[tuple[str, str]] = []
    for node in g.nodes():
        if node.kind is NodeKind.SEARCH and node.response is not None:
            for cite in node.response.citations:
                if cite not in citations:
                    citations.append(cite)
    return citations


def _finalize(session: PlannerSession, backends: Backends, templates: TemplateSet) -> None:
    """The code-free closing turn that answers on the end node."""
    g = session.graph
    if g.end_name is None:
        g.add_node(END_NAME, END_CONTENT)
        session.emit("node_added", _node_added_payload(session, END_NAME))
    if not g.parents(END_NAME):
        session.emit("warning", {"message": "end node has no incoming edges"})

    g.mark_running(END_NAME)
    session.emit("node_state_changed", {"name": END_NAME, "state": NodeState.RUNNING.value})
    prompt = build_planner_prompt(session, templates)
    budget = session.config.max_turns + 1
    text = ""
    streamed = False
    for attempt in range(2):
        if session.llm_calls >= budget:
            session.status = SessionStatus.ABORTED
            session.error = "planner call budget exhausted before the final answer"
            session.emit("error", {"message": session.error})
            return
        session.llm_calls += 1
        try:
            pieces: list[str] = []
            for chunk in backends.llm.stream(prompt):
                pieces.append(chunk)
                session.emit("final_answer_delta", {"text": chunk})
                streamed = True
            text = "".join(pieces)
            break
        except LlmBackendError as exc:
            if attempt == 1:
                session.status = SessionStatus.ABORTED
                session.error = f"final answer call failed twice: {exc}"
                session.emit("error", {"message": session.error})
                return
    if not streamed and text:
        session.emit("final_answer_delta", {"text": text})

    citations = _aggregate_citations(g)
    response = NodeResponse(answer_text=text, citations=citations)
    g.record_result(END_NAME, response)
    session.final_response = response
    session.emit(
        "node_response",
        {
            "name": END_NAME,
            "answer": response.answer_text,
            "citations": [list(c) for c in citations],
            "transcript_digest": "",
        },
    )
    session.emit("node_state_changed", {"name": END_NAME, "state": NodeState.DONE.value})
    session.emit(
        "final_answer_done",
        {"answer": response.answer_text, "citations": [list(c) for c in citations]},
    )
    session.status = SessionStatus.DONE


def run_session(
    question: str,
    config: PlannerConfig,
    backends: Backends,
    templates: TemplateSet,
    session_id: str | None = None,
    events: EventLog | None = None,
) -> PlannerSession:
    """Answer a question end to end; the returned session carries the graph,
    the final response, per-node transcripts, and the closed event log."""
    config.validate()
    session = PlannerSession(question, config, session_id=session_id, events=events)
    return drive_session(session, backends, templates)


def drive_session(
    session: PlannerSession, backends: Backends, templates: TemplateSet
) -> PlannerSession:
    """Run an already-constructed session to completion (used by the service,
    which needs the session object before its worker thread starts)."""
    session.emit("session_started", {"question": session.question})
    session.emit("node_added", _node_added_payload(session, session.graph.root_name))
    try:
        while session.status is SessionStatus.ACTIVE:
            try:
                run_turn(session, backends, templates)
            except TurnBudgetExhaustedError as exc:
                session.emit("warning", {"message": str(exc)})
                break
        if session.status is SessionStatus.FINALIZING:
            _finalize(session, backends, templates)
    except SessionAbortedError:
        pass
    except Exception as exc:  # defensive: a session thread must always close out
        session.status = SessionStatus.ABORTED
        session.error = f"internal error: {exc!r}"
        session.emit("error", {"message": session.error})
    session.finished_at = time.time()
    session.emit(
        "session_done",
        {"status": session.status.value, "turns": len(session.turns)},
    )
    session.events.close()
    return session
