"""Deep-search agent engine.

A planner model decomposes a question into a DAG of sub-questions through a
restricted code-action language; each ready node is answered concurrently by
a retrieval pipeline (query rewrite, multi-engine search, page selection,
summarization); a final code-free turn writes the answer.  Deterministic
fixture backends make every layer testable offline.
"""

from .backends import (
    Backends,
    FixtureCorpus,
    FixtureFetcher,
    FixtureSearchBackend,
    LlmBackend,
    ScriptedLlm,
    SearchHit,
)
from .config import EngineConfig, build_backends, load_config
from .events import AgentEvent, EventLog, snapshot_from_events
from .graph import NodeResponse, NodeState, Snapshot, ThoughtGraph, new_graph
from .planner import PlannerConfig, PlannerSession, run_session
from .searcher import SearcherConfig, run_searcher
from .templates import TemplateSet

__version__ = "0.1.0"

__all__ = [
    "AgentEvent",
    "Backends",
    "EngineConfig",
    "EventLog",
    "FixtureCorpus",
    "FixtureFetcher",
    "FixtureSearchBackend",
    "LlmBackend",
    "NodeResponse",
    "NodeState",
    "PlannerConfig",
    "PlannerSession",
    "ScriptedLlm",
    "SearchHit",
    "SearcherConfig",
    "Snapshot",
    "TemplateSet",
    "ThoughtGraph",
    "__version__",
    "build_backends",
    "load_config",
    "new_graph",
    "run_searcher",
    "run_session",
    "snapshot_from_events",
]
