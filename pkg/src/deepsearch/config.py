"""Flat key-value configuration and backend assembly.

A config file is plain text, one ``dotted.key = value`` per line, with ``#``
comments.  Keys mirror the EngineConfig field paths exactly, so the file
format needs no nesting.  Live adapters read their endpoints and credentials
from environment variables, never from the file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

from .backends import (
    Backends,
    FixtureCorpus,
    FixtureFetcher,
    FixtureSearchBackend,
    LiveChatLlm,
    LiveFetcher,
    LiveSearchBackend,
    load_script,
)
from .planner import PlannerConfig
from .searcher import SearcherConfig
from .templates import TemplateSet

ENV_LLM_ENDPOINT = "DS_LLM_ENDPOINT"
ENV_LLM_KEY = "DS_LLM_KEY"
ENV_SEARCH_ENDPOINT = "DS_SEARCH_ENDPOINT"
ENV_SEARCH_KEY = "DS_SEARCH_KEY"


class ConfigError(Exception):
    pass


@dataclass
class EngineConfig:
    backend_llm: str = "fixture"  # fixture | live
    backend_search: str = "fixture"
    backend_fetcher: str = "fixture"
    planner_max_turns: int = 10
    planner_max_nodes: int = 32
    planner_max_concurrent_searchers: int = 8
    searcher_max_query_variants: int = 3
    searcher_per_query_hits: int = 5
    searcher_merged_hit_cap: int = 20
    searcher_max_pages_to_read: int = 4
    searcher_page_char_budget: int = 8000
    searcher_fetch_timeout: float = 10.0
    searcher_timeout: float = 60.0
    templates_dir: str = ""  # empty = packaged defaults
    fixtures_corpus: str = ""
    fixtures_script: str = ""
    fixtures_llm_latency: float = 0.0
    fixtures_search_latency: float = 0.0
    fixtures_fetch_latency: float = 0.0
    live_llm_model: str = "default"
    service_bind: str = "127.0.0.1:8000"
    service_event_buffer_cap: int = 10_000
    trace_dir: str = ""

    def planner_config(self) -> PlannerConfig:
        return PlannerConfig(
            max_turns=self.planner_max_turns,
            max_nodes=self.planner_max_nodes,
            max_concurrent_searchers=self.planner_max_concurrent_searchers,
            searcher=SearcherConfig(
                max_query_variants=self.searcher_max_query_variants,
                per_query_hits=self.searcher_per_query_hits,
                merged_hit_cap=self.searcher_merged_hit_cap,
                max_pages_to_read=self.searcher_max_pages_to_read,
                page_char_budget=self.searcher_page_char_budget,
                fetch_timeout=self.searcher_fetch_timeout,
                timeout=self.searcher_timeout,
            ),
        )

    def bind_address(self) -> tuple[str, int]:
        host, sep, port = self.service_bind.rpartition(":")
        if not sep or not port.isdigit():
            raise ConfigError(f"service.bind must be host:port, got {self.service_bind!r}")
        return host or "127.0.0.1", int(port)


# config-file key -> (attribute, converter).  The key set IS the file format.
_KEYS = {
    "backend.llm": ("backend_llm", str),
    "backend.search": ("backend_search", str),
    "backend.fetcher": ("backend_fetcher", str),
    "planner.max_turns": ("planner_max_turns", int),
    "planner.max_nodes": ("planner_max_nodes", int),
    "planner.max_concurrent_searchers": ("planner_max_concurrent_searchers", int),
    "searcher.max_query_variants": ("searcher_max_query_variants", int),
    "searcher.per_query_hits": ("searcher_per_query_hits", int),
    "searcher.merged_hit_cap": ("searcher_merged_hit_cap", int),
    "searcher.max_pages_to_read": ("searcher_max_pages_to_read", int),
    "searcher.page_char_budget": ("searcher_page_char_budget", int),
    "searcher.fetch_timeout": ("searcher_fetch_timeout", float),
    "searcher.timeout": ("searcher_timeout", float),
    "templates.dir": ("templates_dir", str),
    "fixtures.corpus": ("fixtures_corpus", str),
    "fixtures.script": ("fixtures_script", str),
    "fixtures.llm_latency": ("fixtures_llm_latency", float),
    "fixtures.search_latency": ("fixtures_search_latency", float),
    "fixtures.fetch_latency": ("fixtures_fetch_latency", float),
    "live.llm_model": ("live_llm_model", str),
    "service.bind": ("service_bind", str),
    "service.event_buffer_cap": ("service_event_buffer_cap", int),
    "trace.dir": ("trace_dir", str),
}

_COUNT_FIELDS = (
    "planner_max_turns",
    "planner_max_nodes",
    "planner_max_concurrent_searchers",
    "searcher_max_query_variants",
    "searcher_per_query_hits",
    "searcher_merged_hit_cap",
    "searcher_max_pages_to_read",
    "searcher_page_char_budget",
    "service_event_buffer_cap",
)
_POSITIVE_FIELDS = ("searcher_fetch_timeout", "searcher_timeout")
_NONNEGATIVE_FIELDS = (
    "fixtures_llm_latency",
    "fixtures_search_latency",
    "fixtures_fetch_latency",
)


def parse_config(text: str, source: str = "<config>") -> EngineConfig:
    cfg = EngineConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        value = value.strip()
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        attr, conv = _KEYS[key]
        try:
            setattr(cfg, attr, conv(value))
        except ValueError:
            raise ConfigError(
                f"{source}:{lineno}: bad value {value!r} for {key}"
            ) from None
    validate_config(cfg)
    return cfg


def load_config(path: str) -> EngineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    return parse_config(text, source=path)


def validate_config(cfg: EngineConfig) -> None:
    for fname in _COUNT_FIELDS:
        if getattr(cfg, fname) < 1:
            raise ConfigError(f"{fname.replace('_', '.', 1)} must be >= 1")
    for fname in _POSITIVE_FIELDS:
        if getattr(cfg, fname) <= 0:
            raise ConfigError(f"{fname.replace('_', '.', 1)} must be > 0")
    for fname in _NONNEGATIVE_FIELDS:
        if getattr(cfg, fname) < 0:
            raise ConfigError(f"{fname.replace('_', '.', 1)} must be >= 0")
    for choice_field in ("backend_llm", "backend_search", "backend_fetcher"):
        value = getattr(cfg, choice_field)
        if value not in ("fixture", "live"):
            raise ConfigError(
                f"{choice_field.replace('_', '.', 1)} must be fixture or live, got {value!r}"
            )
    cfg.bind_address()
    for path_field, kind in (
        ("templates_dir", "dir"),
        ("fixtures_corpus", "file"),
        ("fixtures_script", "file"),
    ):
        path = getattr(cfg, path_field)
        if not path:
            continue
        ok = os.path.isdir(path) if kind == "dir" else os.path.isfile(path)
        if not ok:
            raise ConfigError(f"{path_field.replace('_', '.', 1)}: no such {kind}: {path}")


def load_templates(cfg: EngineConfig) -> TemplateSet:
    if cfg.templates_dir:
        return TemplateSet.load(cfg.templates_dir)
    return TemplateSet.builtin()


def build_backends(cfg: EngineConfig, env: dict[str, str] | None = None) -> Backends:
    """Assemble the three seams from the configuration.

    Fixture seams need the corpus/script paths; live seams need their
    endpoint environment variables.  Both absences are config errors.
    """
    env = os.environ if env is None else env
    corpus: FixtureCorpus | None = None

    def need_corpus() -> FixtureCorpus:
        nonlocal corpus
        if corpus is None:
            if not cfg.fixtures_corpus:
                raise ConfigError("fixtures.corpus is required for fixture backends")
            corpus = FixtureCorpus.load(cfg.fixtures_corpus)
        return corpus

    if cfg.backend_llm == "fixture":
        if not cfg.fixtures_script:
            raise ConfigError("fixtures.script is required when backend.llm = fixture")
        llm = load_script(cfg.fixtures_script, latency=cfg.fixtures_llm_latency)
    else:
        endpoint = env.get(ENV_LLM_ENDPOINT, "")
        if not endpoint:
            raise ConfigError(f"{ENV_LLM_ENDPOINT} must be set when backend.llm = live")
        llm = LiveChatLlm(endpoint, api_key=env.get(ENV_LLM_KEY, ""), model=cfg.live_llm_model)

    if cfg.backend_search == "fixture":
        engines = [
            FixtureSearchBackend(need_corpus(), latency=cfg.fixtures_search_latency)
        ]
    else:
        endpoint = env.get(ENV_SEARCH_ENDPOINT, "")
        if not endpoint:
            raise ConfigError(f"{ENV_SEARCH_ENDPOINT} must be set when backend.search = live")
        engines = [LiveSearchBackend(endpoint, api_key=env.get(ENV_SEARCH_KEY, ""))]

    if cfg.backend_fetcher == "fixture":
        fetcher = FixtureFetcher(need_corpus(), latency=cfg.fixtures_fetch_latency)
    else:
        fetcher = LiveFetcher()

    return Backends(llm=llm, engines=engines, fetcher=fetcher)
