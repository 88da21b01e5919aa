import pytest

from deepsearch.backends import (
    Backends,
    FixtureFetcher,
    FixtureSearchBackend,
    ScriptRule,
    ScriptedLlm,
    SearchBackend,
    SearchBackendError,
)
from deepsearch.events import snapshot_from_events, strip_timestamps
from deepsearch.graph import NodeState
from deepsearch.planner import (
    PlannerConfig,
    PlannerSession,
    SessionStatus,
    TurnBudgetExhaustedError,
    build_planner_prompt,
    run_session,
    run_turn,
)

from scenarios import (
    CHAIN_ANSWERS,
    CHAIN_FINAL,
    CHAIN_QUESTION,
    FINALIZE_MARK,
    OBS_FACT_DIRECTOR,
    OBS_FACT_YEAR,
    OBS_FINAL,
    REWRITE_MARK,
    SELECT_MARK,
    SUMMARIZE_MARK,
    chain_corpus,
    chain_scenario,
    code_block,
    fanout_scenario,
    observatory_scenario,
)


def make_session(rules=None, default=None, question="What is going on?", **cfg):
    corpus = chain_corpus()
    llm = ScriptedLlm(rules or [], default=default)
    backends = Backends(
        llm=llm,
        engines=[FixtureSearchBackend(corpus)],
        fetcher=FixtureFetcher(corpus),
    )
    session = PlannerSession(question, PlannerConfig(**cfg))
    return session, backends


class BrokenEngine(SearchBackend):
    engine_id = "down"

    def search(self, query, k):
        raise SearchBackendError("engine down")


class TestPromptAssembly:
    def test_fresh_session_prompt(self, templates):
        session, _ = make_session(question="Why is the sky dark at night?")
        prompt = build_planner_prompt(session, templates)
        assert [m["role"] for m in prompt] == ["system", "user"]
        assert prompt[0]["content"] == templates.render("planner.system")
        assert prompt[1]["content"] == "Why is the sky dark at night?"

    def test_turn_history_alternates_assistant_and_tool(self, templates):
        session, backends = make_session(default="just thinking, no code yet")
        run_turn(session, backends, templates)
        run_turn(session, backends, templates)
        prompt = build_planner_prompt(session, templates)
        assert [m["role"] for m in prompt] == [
            "system", "user", "assistant", "tool", "assistant", "tool",
        ]
        assert prompt[2]["content"] == session.turns[0].model_text
        assert prompt[3]["content"] == session.turns[0].feedback

    def test_finalizing_appends_closing_request(self, templates):
        session, _ = make_session(question="Where is the relay?")
        session.status = SessionStatus.FINALIZING
        prompt = build_planner_prompt(session, templates)
        assert prompt[-1]["role"] == "user"
        assert FINALIZE_MARK + "Where is the relay?" in prompt[-1]["content"]
        assert "Do not write any code" in prompt[-1]["content"]


class TestRunTurn:
    def test_prose_reply_changes_nothing(self, templates):
        session, backends = make_session(default="Let me mull this over.")
        record = run_turn(session, backends, templates)
        assert record.code is None
        assert record.new_nodes == []
        assert "no code block found" in record.feedback
        assert len(session.graph) == 1  # root only
        assert session.status is SessionStatus.ACTIVE

    def test_rejected_code_leaves_graph_unchanged(self, templates):
        bad = code_block('graph.add_node(name="a")')
        session, backends = make_session(rules=[ScriptRule("turn", 0, bad)])
        record = run_turn(session, backends, templates)
        assert record.diagnostics and "ArityMismatch" in record.diagnostics[0]
        assert record.feedback.startswith("code rejected; the graph was not changed:")
        assert len(session.graph) == 1
        parsed_events = [e for e in session.events.events_since(0) if e.kind == "code_parsed"]
        assert len(parsed_events) == 1
        assert parsed_events[0].payload["ok"] is False

    def test_turn_applies_actions_and_runs_wave(self, templates):
        scenario = observatory_scenario()
        session = PlannerSession(scenario.question, PlannerConfig())
        record = run_turn(session, scenario.backends, templates)
        assert record.new_nodes == ["founding_year", "first_director", "site"]
        assert len(record.new_edges) == 3
        for name in record.new_nodes:
            assert session.graph.node(name).state is NodeState.DONE
        assert "[node founding_year] The Aurora Observatory was founded in 1912 [1]." in record.feedback
        assert "citations: https://aurora.example/" in record.feedback

    def test_duplicate_action_becomes_skip_note(self, templates):
        dup = code_block(
            'graph.add_node(name="a", content="When was the Harlan relay station built?")',
            'graph.add_node(name="a", content="again")',
        )
        session, backends = make_session(
            rules=[
                ScriptRule("turn", 0, dup),
                ScriptRule("substring", REWRITE_MARK, "relay"),
                ScriptRule("substring", SELECT_MARK, "1"),
                ScriptRule("substring", SUMMARIZE_MARK, "Built in 1931 [1]."),
            ]
        )
        record = run_turn(session, backends, templates)
        assert record.new_nodes == ["a"]
        assert "action skipped:" in record.feedback
        assert any("DuplicateNode" in d for d in record.diagnostics)

    def test_failed_wave_reported_in_feedback(self, templates):
        add = code_block(
            'graph.add_node(name="a", content="Anything at all?")',
            'graph.add_edge(start_node="root", end_node="a")',
        )
        session, backends = make_session(
            rules=[
                ScriptRule("turn", 0, add),
                ScriptRule("substring", REWRITE_MARK, "anything"),
            ]
        )
        backends = Backends(llm=backends.llm, engines=[BrokenEngine()], fetcher=backends.fetcher)
        record = run_turn(session, backends, templates)
        assert session.graph.node("a").state is NodeState.FAILED
        assert "[node a] failed: AllEnginesFailed" in record.feedback

    def test_turn_budget_flips_to_finalizing(self, templates):
        session, backends = make_session(default="pondering", max_turns=2)
        run_turn(session, backends, templates)
        run_turn(session, backends, templates)
        with pytest.raises(TurnBudgetExhaustedError):
            run_turn(session, backends, templates)
        assert session.status is SessionStatus.FINALIZING

    def test_run_turn_requires_active_session(self, templates):
        session, backends = make_session(default="x")
        session.status = SessionStatus.DONE
        with pytest.raises(RuntimeError, match="not active"):
            run_turn(session, backends, templates)


class TestObservatorySession:
    def test_full_run(self, templates):
        scenario = observatory_scenario()
        session = run_session(scenario.question, PlannerConfig(), scenario.backends, templates)
        assert session.status is SessionStatus.DONE
        assert session.final_response.answer_text == OBS_FINAL
        assert OBS_FACT_YEAR in session.final_response.answer_text
        assert OBS_FACT_DIRECTOR in session.final_response.answer_text
        assert len(session.turns) == 2
        assert session.llm_calls == 3  # two planner turns plus the closing call

    def test_citations_aggregate_unique_in_node_order(self, templates):
        scenario = observatory_scenario()
        session = run_session(scenario.question, PlannerConfig(), scenario.backends, templates)
        citations = session.final_response.citations
        urls = [url for url, _ in citations]
        assert len(urls) == len(set(urls))
        assert "https://aurora.example/founding" in urls
        assert "https://aurora.example/directors" in urls
        first_cited = session.graph.node("founding_year").response.citations[0]
        assert citations[0] == first_cited

    def test_event_log_brackets_the_session(self, templates):
        scenario = observatory_scenario()
        session = run_session(scenario.question, PlannerConfig(), scenario.backends, templates)
        events = session.events.events_since(0)
        assert events[0].kind == "session_started"
        assert events[0].payload == {"question": scenario.question}
        assert events[1].kind == "node_added"
        assert events[1].payload["name"] == "root"
        assert events[-1].kind == "session_done"
        assert events[-1].payload == {"status": "done", "turns": 2}
        assert session.events.closed

    def test_node_lifecycle_events_in_dispatch_order(self, templates):
        scenario = observatory_scenario()
        session = run_session(scenario.question, PlannerConfig(), scenario.backends, templates)
        events = session.events.events_since(0)
        responses = [e.payload["name"] for e in events if e.kind == "node_response"]
        assert responses == ["founding_year", "first_director", "site", "response"]
        deltas = [e for e in events if e.kind == "final_answer_delta"]
        assert "".join(e.payload["text"] for e in deltas) == OBS_FINAL
        done_idx = next(i for i, e in enumerate(events) if e.kind == "final_answer_done")
        running_idx = next(
            i
            for i, e in enumerate(events)
            if e.kind == "node_state_changed" and e.payload["name"] == "response"
        )
        assert running_idx < done_idx

    def test_snapshot_rebuilds_from_events_alone(self, templates):
        scenario = observatory_scenario()
        session = run_session(scenario.question, PlannerConfig(), scenario.backends, templates)
        folded = snapshot_from_events(session.events.events_since(0))
        assert folded == session.graph.structure()


class TestChainSession:
    def test_waves_run_in_dependency_order(self, templates):
        scenario = chain_scenario()
        session = run_session(scenario.question, PlannerConfig(), scenario.backends, templates)
        assert session.status is SessionStatus.DONE
        assert session.final_response.answer_text == CHAIN_FINAL
        assert len(session.turns) == 4  # one wave per turn down the chain
        assert "[node a]" in session.turns[0].feedback
        assert "[node b]" not in session.turns[0].feedback
        assert "[node b]" in session.turns[1].feedback
        assert "[node c]" in session.turns[2].feedback

    def test_parent_answers_flow_into_child_prompts(self, templates):
        scenario = chain_scenario()
        session = run_session(scenario.question, PlannerConfig(), scenario.backends, templates)
        prompt_b = session.transcripts["b"].summary_prompt
        assert CHAIN_QUESTION in prompt_b
        assert CHAIN_ANSWERS["a"] in prompt_b
        prompt_c = session.transcripts["c"].summary_prompt
        assert CHAIN_QUESTION in prompt_c
        assert CHAIN_ANSWERS["b"] in prompt_c


class TestDegradedSessions:
    def test_prose_only_model_still_answers(self, templates):
        session, backends = make_session(default="I would rather muse than act.", max_turns=3)
        session = run_session(
            session.question, PlannerConfig(max_turns=3), backends, templates
        )
        assert session.status is SessionStatus.DONE
        assert session.final_response.answer_text == "I would rather muse than act."
        assert len(session.turns) == 3
        assert session.llm_calls == 4  # max_turns + 1, never more
        warnings = [
            e.payload["message"]
            for e in session.events.events_since(0)
            if e.kind == "warning"
        ]
        assert any("turn budget" in w for w in warnings)
        assert any("no incoming edges" in w for w in warnings)

    def test_model_failure_aborts_after_retry(self, templates):
        session, backends = make_session()  # no rules, no default: every call raises
        session = run_session(session.question, PlannerConfig(), backends, templates)
        assert session.status is SessionStatus.ABORTED
        assert "failed twice" in session.error
        assert session.llm_calls == 2
        events = session.events.events_since(0)
        assert any(e.kind == "error" for e in events)
        assert events[-1].kind == "session_done"
        assert events[-1].payload["status"] == "aborted"

    def test_finalize_failure_aborts(self, templates):
        add = code_block(
            'graph.add_node(name="a", content="When was the Harlan relay station built?")',
            'graph.add_edge(start_node="root", end_node="a")',
            'graph.add_node(name="response", content="final answer")',
            'graph.add_edge(start_node="a", end_node="response")',
        )
        session, backends = make_session(
            rules=[
                ScriptRule("turn", 0, add),
                ScriptRule("substring", REWRITE_MARK, "relay build year"),
                ScriptRule("substring", SELECT_MARK, "1"),
                ScriptRule("substring", SUMMARIZE_MARK, "Built in 1931 [1]."),
                # no finalize rule: the closing call raises twice
            ]
        )
        session = run_session(session.question, PlannerConfig(), backends, templates)
        assert session.status is SessionStatus.ABORTED
        assert "final answer call failed twice" in session.error

    def test_budget_exhausted_before_final_answer(self, templates):
        add = code_block(
            'graph.add_node(name="a", content="When was the Harlan relay station built?")',
            'graph.add_edge(start_node="root", end_node="a")',
            'graph.add_node(name="response", content="final answer")',
            'graph.add_edge(start_node="a", end_node="response")',
        )
        session, backends = make_session(
            rules=[
                # call 0 matches nothing (first planner attempt fails); the
                # retry is call 1 and succeeds, spending the whole budget
                ScriptRule("turn", 1, add),
                ScriptRule("substring", REWRITE_MARK, "relay build year"),
                ScriptRule("substring", SELECT_MARK, "1"),
                ScriptRule("substring", SUMMARIZE_MARK, "Built in 1931 [1]."),
            ],
            max_turns=1,
        )
        session = run_session(
            session.question, PlannerConfig(max_turns=1), backends, templates
        )
        assert session.status is SessionStatus.ABORTED
        assert "before the final answer" in session.error
        assert session.llm_calls == 2


class TestDeterminism:
    def test_identical_runs_produce_identical_logs(self, templates):
        logs = []
        finals = []
        for _ in range(2):
            scenario = observatory_scenario()
            session = run_session(
                scenario.question,
                PlannerConfig(),
                scenario.backends,
                templates,
                session_id="fixed-id",
            )
            logs.append(strip_timestamps(session.events.events_since(0)))
            finals.append(session.final_response)
        assert logs[0] == logs[1]
        assert finals[0] == finals[1]

    def test_concurrency_level_does_not_change_results(self, templates):
        outputs = []
        for workers in (1, 8):
            scenario = fanout_scenario(6, docs_per_sector=5)
            config = PlannerConfig(max_concurrent_searchers=workers)
            session = run_session(
                scenario.question,
                config,
                scenario.backends,
                templates,
                session_id="fanout-run",
            )
            assert session.status is SessionStatus.DONE
            outputs.append(
                (
                    {name: t.digest() for name, t in session.transcripts.items()},
                    session.final_response,
                    strip_timestamps(session.events.events_since(0)),
                    session.graph.snapshot(),
                )
            )
        assert outputs[0] == outputs[1]
