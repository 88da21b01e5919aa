"""Ordered event log emitted by an agent session.

Events carry a per-session sequence number and serialize to one-line JSON, so
a log can be streamed incrementally, replayed after a disconnect from any
sequence number, and folded back into the final graph snapshot without
consulting the live graph.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass

from .graph import Snapshot, SnapshotNode

EVENT_KINDS = (
    "session_started",
    "planner_thought",
    "code_parsed",
    "node_added",
    "edge_added",
    "node_state_changed",
    "node_response",
    "final_answer_delta",
    "final_answer_done",
    "warning",
    "error",
    "session_done",
)


@dataclass(frozen=True)
class AgentEvent:
    seq: int
    session_id: str
    kind: str
    payload: dict
    ts: float

    def as_dict(self) -> dict:
        return {
            "seq": self.seq,
            "session_id": self.session_id,
            "kind": self.kind,
            "payload": self.payload,
            "ts": self.ts,
        }

    def to_json(self) -> str:
        # one line, stable key order, so logs diff cleanly
        return json.dumps(self.as_dict(), sort_keys=True, ensure_ascii=False)

    @staticmethod
    def from_json(line: str) -> "AgentEvent":
        raw = json.loads(line)
        return AgentEvent(
            seq=raw["seq"],
            session_id=raw.get("session_id", ""),
            kind=raw["kind"],
            payload=raw["payload"],
            ts=raw.get("ts", 0.0),
        )


def strip_timestamps(events: list[AgentEvent]) -> list[AgentEvent]:
    """Copies with ts zeroed, for comparing logs across runs."""
    return [
        AgentEvent(seq=e.seq, session_id=e.session_id, kind=e.kind, payload=e.payload, ts=0.0)
        for e in events
    ]


class EventBufferOverflow(Exception):
    """The session produced more events than the log retains."""


class EventLog:
    """Append-only, thread-safe event buffer with blocking reads.

    Writers append; readers poll `events_since` or block in `stream`.  A
    closed log wakes all readers.  The cap bounds memory per session: once
    exceeded, appends raise and the log closes with a final error event
    already in place, so consumers see why the stream stopped.
    """

    def __init__(self, session_id: str = "", cap: int = 10_000, clock=time.time) -> None:
        self.session_id = session_id
        self._events: list[AgentEvent] = []
        self._cond = threading.Condition()
        self._next_seq = 1
        self._closed = False
        self._cap = cap
        self._clock = clock

    @property
    def closed(self) -> bool:
        with self._cond:
            return self._closed

    def __len__(self) -> int:
        with self._cond:
            return len(self._events)

    def append(self, kind: str, payload: dict) -> AgentEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        with self._cond:
            if self._closed:
                raise EventBufferOverflow("event log is closed")
            if len(self._events) >= self._cap:
                ev = AgentEvent(
                    seq=self._next_seq,
                    session_id=self.session_id,
                    kind="error",
                    payload={"message": f"event buffer overflow at {self._cap} events"},
                    ts=self._clock(),
                )
                self._events.append(ev)
                self._next_seq += 1
                self._closed = True
                self._cond.notify_all()
                raise EventBufferOverflow(f"cap {self._cap} reached")
            ev = AgentEvent(
                seq=self._next_seq,
                session_id=self.session_id,
                kind=kind,
                payload=payload,
                ts=self._clock(),
            )
            self._events.append(ev)
            self._next_seq += 1
            self._cond.notify_all()
            return ev

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def events_since(self, after_seq: int = 0) -> list[AgentEvent]:
        with self._cond:
            return [ev for ev in self._events if ev.seq > after_seq]

    def stream(self, after_seq: int = 0, poll_timeout: float = 0.5):
        """Yield events with seq > after_seq until the log closes.

        Blocks waiting for new events; ends once the log is closed and the
        backlog is drained.
        """
        cursor = after_seq
        while True:
            with self._cond:
                fresh = [ev for ev in self._events if ev.seq > cursor]
                if not fresh:
                    if self._closed:
                        return
                    self._cond.wait(timeout=poll_timeout)
                    continue
            for ev in fresh:
                yield ev
                cursor = ev.seq


@dataclass
class _FoldNode:
    name: str
    kind: str
    state: str
    seq: int
    digest: str


def snapshot_from_events(events: list[AgentEvent]) -> Snapshot:
    """Fold an event log back into the graph snapshot it described.

    Only structural events matter; the fold is idempotent over replayed
    events (duplicate sequence numbers are ignored).
    """
    nodes: dict[str, _FoldNode] = {}
    edges: set[tuple[str, str]] = set()
    seen: set[int] = set()
    for ev in sorted(events, key=lambda e: e.seq):
        if ev.seq in seen:
            continue
        seen.add(ev.seq)
        p = ev.payload
        if ev.kind == "node_added":
            nodes[p["name"]] = _FoldNode(
                name=p["name"],
                kind=p["node_kind"],
                state=p["state"],
                seq=p["node_seq"],
                digest=p["digest"],
            )
        elif ev.kind == "edge_added":
            edges.add((p["from"], p["to"]))
        elif ev.kind == "node_state_changed":
            node = nodes.get(p["name"])
            if node is not None:
                node.state = p["state"]
    ordered = sorted(nodes.values(), key=lambda n: n.seq)
    return Snapshot(
        nodes=tuple(
            SnapshotNode(name=n.name, kind=n.kind, state=n.state, seq=n.seq, digest=n.digest)
            for n in ordered
        ),
        edges=tuple(sorted(edges)),
    )


def write_event_log(path, events: list[AgentEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(ev.to_json() + "\n")


def read_event_log(path) -> list[AgentEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(AgentEvent.from_json(line))
    return events
