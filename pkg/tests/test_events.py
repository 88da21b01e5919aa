import threading
import time

import pytest

from deepsearch.events import (
    EVENT_KINDS,
    AgentEvent,
    EventBufferOverflow,
    EventLog,
    read_event_log,
    snapshot_from_events,
    strip_timestamps,
    write_event_log,
)
from deepsearch.graph import new_graph


class TestAppend:
    def test_sequences_start_at_one(self):
        log = EventLog(session_id="s1")
        e1 = log.append("session_started", {"question": "Q?"})
        e2 = log.append("warning", {"message": "w"})
        assert (e1.seq, e2.seq) == (1, 2)
        assert e1.session_id == "s1"
        assert e1.kind == "session_started"

    def test_unknown_kind_rejected(self):
        log = EventLog()
        with pytest.raises(ValueError, match="unknown event kind"):
            log.append("celebration", {})

    def test_timestamps_come_from_the_clock(self):
        ticks = iter([100.0, 101.5])
        log = EventLog(clock=lambda: next(ticks))
        assert log.append("warning", {}).ts == 100.0
        assert log.append("warning", {}).ts == 101.5

    def test_append_after_close_raises(self):
        log = EventLog()
        log.append("session_started", {})
        log.close()
        with pytest.raises(EventBufferOverflow):
            log.append("warning", {})

    def test_events_since(self):
        log = EventLog()
        for i in range(5):
            log.append("warning", {"i": i})
        tail = log.events_since(3)
        assert [e.seq for e in tail] == [4, 5]
        assert [e.seq for e in log.events_since(0)] == [1, 2, 3, 4, 5]


class TestOverflow:
    def test_cap_produces_error_event_and_closes(self):
        log = EventLog(cap=3)
        for _ in range(3):
            log.append("warning", {})
        with pytest.raises(EventBufferOverflow):
            log.append("warning", {})
        events = log.events_since(0)
        assert len(events) == 4
        assert events[-1].kind == "error"
        assert "overflow" in events[-1].payload["message"]
        assert log.closed

    def test_appends_after_overflow_keep_raising_without_growth(self):
        log = EventLog(cap=2)
        log.append("warning", {})
        log.append("warning", {})
        for _ in range(3):
            with pytest.raises(EventBufferOverflow):
                log.append("warning", {})
        assert len(log) == 3  # two events plus the single overflow error


class TestStream:
    def test_stream_sees_backlog_then_live_events(self):
        log = EventLog()
        log.append("session_started", {})
        got = []

        def consume():
            for ev in log.stream(poll_timeout=0.05):
                got.append(ev.seq)

        t = threading.Thread(target=consume)
        t.start()
        time.sleep(0.05)
        log.append("warning", {})
        log.append("session_done", {})
        log.close()
        t.join(timeout=2)
        assert not t.is_alive()
        assert got == [1, 2, 3]

    def test_stream_resumes_after_given_seq(self):
        log = EventLog()
        for _ in range(6):
            log.append("warning", {})
        log.close()
        assert [e.seq for e in log.stream(after_seq=4)] == [5, 6]

    def test_stream_on_closed_empty_log_ends_immediately(self):
        log = EventLog()
        log.close()
        assert list(log.stream()) == []


class TestSerialization:
    def test_json_round_trip(self):
        ev = AgentEvent(seq=3, session_id="s", kind="warning", payload={"a": [1, 2]}, ts=7.5)
        assert AgentEvent.from_json(ev.to_json()) == ev

    def test_to_json_is_one_line_sorted(self):
        ev = AgentEvent(seq=1, session_id="s", kind="warning", payload={"b": 1, "a": 2}, ts=0.0)
        line = ev.to_json()
        assert "\n" not in line
        assert line.index('"kind"') < line.index('"payload"') < line.index('"seq"')

    def test_file_round_trip(self, tmp_path):
        events = [
            AgentEvent(seq=i, session_id="s", kind="warning", payload={"i": i}, ts=float(i))
            for i in range(1, 4)
        ]
        path = tmp_path / "events.jsonl"
        write_event_log(path, events)
        assert read_event_log(path) == events

    def test_strip_timestamps(self):
        ev = AgentEvent(seq=1, session_id="s", kind="warning", payload={}, ts=123.0)
        stripped = strip_timestamps([ev])[0]
        assert stripped.ts == 0.0
        assert stripped.seq == ev.seq and stripped.payload == ev.payload


def build_events(specs):
    return [
        AgentEvent(seq=i, session_id="s", kind=kind, payload=payload, ts=0.0)
        for i, (kind, payload) in enumerate(specs, start=1)
    ]


def node_added(name, kind, state, seq, digest):
    return (
        "node_added",
        {"name": name, "node_kind": kind, "state": state, "node_seq": seq, "digest": digest},
    )


class TestSnapshotFold:
    def test_fold_matches_live_graph(self):
        g = new_graph("What happened?")
        g.add_node("a", "first part")
        g.add_node("b", "second part")
        g.add_edge("root", "a")
        g.add_edge("a", "b")
        structure = g.structure()
        events = build_events(
            [
                node_added("root", "start", "done", 0, structure.nodes[0].digest),
                node_added("a", "search", "pending", 1, structure.nodes[1].digest),
                ("edge_added", {"from": "root", "to": "a"}),
                node_added("b", "search", "pending", 2, structure.nodes[2].digest),
                ("edge_added", {"from": "a", "to": "b"}),
            ]
        )
        assert snapshot_from_events(events) == g.structure()
        assert snapshot_from_events(events).render() == g.snapshot()

    def test_state_changes_applied_in_seq_order(self):
        events = build_events(
            [
                node_added("root", "start", "done", 0, "d" * 8),
                node_added("a", "search", "pending", 1, "e" * 8),
                ("node_state_changed", {"name": "a", "state": "running"}),
                ("node_state_changed", {"name": "a", "state": "done"}),
            ]
        )
        snap = snapshot_from_events(events)
        assert snap.nodes[1].state == "done"

    def test_fold_is_idempotent_over_duplicates(self):
        events = build_events(
            [
                node_added("root", "start", "done", 0, "d" * 8),
                node_added("a", "search", "pending", 1, "e" * 8),
                ("node_state_changed", {"name": "a", "state": "running"}),
            ]
        )
        doubled = events + events
        assert snapshot_from_events(doubled) == snapshot_from_events(events)

    def test_fold_ignores_event_list_order(self):
        events = build_events(
            [
                node_added("root", "start", "done", 0, "d" * 8),
                node_added("a", "search", "pending", 1, "e" * 8),
                ("node_state_changed", {"name": "a", "state": "running"}),
            ]
        )
        assert snapshot_from_events(list(reversed(events))) == snapshot_from_events(events)

    def test_non_structural_events_are_ignored(self):
        events = build_events(
            [
                node_added("root", "start", "done", 0, "d" * 8),
                ("planner_thought", {"turn": 0, "text": "thinking"}),
                ("final_answer_delta", {"text": "chunk"}),
                ("warning", {"message": "w"}),
            ]
        )
        snap = snapshot_from_events(events)
        assert len(snap.nodes) == 1 and snap.edges == ()


def test_event_kinds_catalog_is_stable():
    assert set(EVENT_KINDS) == {
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
    }
