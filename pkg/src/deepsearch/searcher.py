"""Hierarchical retrieval pipeline answering one sub-question.

The pipeline runs four stages: query rewrite, search fan-out with URL-based
merging, page selection with full-text reading, and summarization.  Search
and fetch calls inside one run are concurrent, but a run is externally a
single task bounded by a wall-clock budget.  Every run records an append-only
transcript whose digest is stable for identical inputs.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import dataclass, field

from .backends import (
    Backends,
    FetchError,
    LlmBackendError,
    SearchBackend,
    SearchHit,
    normalize_url,
)
from .graph import (
    InvalidTransitionError,
    NodeResponse,
    NodeState,
    ThoughtGraph,
)
from .html_text import html_to_text
from .templates import TemplateSet


@dataclass
class SearcherConfig:
    max_query_variants: int = 3
    per_query_hits: int = 5
    merged_hit_cap: int = 20
    max_pages_to_read: int = 4
    page_char_budget: int = 8000
    fetch_timeout: float = 10.0
    timeout: float = 60.0  # whole-searcher wall-clock budget


@dataclass(frozen=True)
class PageDocument:
    url: str
    title: str
    body_text: str
    truncated: bool


@dataclass(frozen=True)
class SearcherContext:
    """Prompt context for one node: the root question plus the answers of its
    direct predecessors, in their insertion order."""

    root_question: str
    parent_answers: list[tuple[str, str]]
    node_question: str


@dataclass
class SearcherTranscript:
    """Record of one pipeline run, serialized per node under the trace dir."""

    node: str
    queries: list[str] = field(default_factory=list)
    hits: list[list[dict]] = field(default_factory=list)
    merged: list[dict] = field(default_factory=list)
    selected: list[str] = field(default_factory=list)
    pages: list[dict] = field(default_factory=list)
    summary: str = ""
    citations: list[list[str]] = field(default_factory=list)
    stages: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    summary_prompt: str = ""

    def as_dict(self) -> dict:
        return {
            "node": self.node,
            "queries": self.queries,
            "hits": self.hits,
            "merged": self.merged,
            "selected": self.selected,
            "pages": self.pages,
            "summary": self.summary,
            "citations": self.citations,
            "stages": self.stages,
            "notes": self.notes,
            "summary_prompt": self.summary_prompt,
        }

    def digest(self) -> str:
        canonical = json.dumps(self.as_dict(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class SearcherFailure(Exception):
    """Raised when a run cannot produce a response; carries the partial
    transcript so completed stages stay inspectable."""

    def __init__(self, kind: str, message: str, transcript: SearcherTranscript) -> None:
        super().__init__(f"{kind}: {message}")
        self.kind = kind  # "Timeout" | "AllEnginesFailed" | "LlmBackendError"
        self.transcript = transcript


class _Deadline:
    def __init__(self, seconds: float) -> None:
        self.expires = time.monotonic() + seconds

    @property
    def remaining(self) -> float:
        return self.expires - time.monotonic()

    def check(self) -> float:
        left = self.remaining
        if left <= 0:
            raise TimeoutError("searcher budget exhausted")
        return left


FAILURE_NOTE = "(search failed: {error})"
NO_ANSWER_NOTE = "(no answer available)"
NO_EVIDENCE_ANSWER = "No supporting evidence was found for this sub-question."


def build_searcher_context(g: ThoughtGraph, name: str) -> SearcherContext:
    """Context for a running node: root question, predecessor answers (the
    root contributes only its question, never as a parent answer)."""
    node = g.node(name)
    if node.state is not NodeState.RUNNING:
        raise InvalidTransitionError(f"{name!r} is {node.state.value}, expected running")
    parent_answers: list[tuple[str, str]] = []
    for parent in g.parents(name):
        if parent.name == g.root_name:
            continue
        if parent.state is NodeState.DONE and parent.response is not None:
            parent_answers.append((parent.name, parent.response.answer_text))
        elif parent.state is NodeState.FAILED:
            parent_answers.append((parent.name, FAILURE_NOTE.format(error=parent.error)))
        else:
            parent_answers.append((parent.name, NO_ANSWER_NOTE))
    return SearcherContext(
        root_question=g.question,
        parent_answers=parent_answers,
        node_question=node.content,
    )


_ENUM_PREFIX = re.compile(r"^\s*(?:[-*]|\d+[.)])\s*")


def rewrite_queries(
    ctx: SearcherContext,
    llm,
    config: SearcherConfig,
    templates: TemplateSet,
) -> list[str]:
    """Model-generated query variants plus the original question; degrades to
    the original question alone on any backend failure."""
    prompt = templates.render(
        "searcher.rewrite",
        max_variants=config.max_query_variants,
        question=ctx.node_question,
    )
    try:
        reply = llm.generate([{"role": "user", "content": prompt}])
    except LlmBackendError:
        return [ctx.node_question]
    variants = []
    for line in reply.splitlines():
        cleaned = _ENUM_PREFIX.sub("", line).strip()
        if cleaned:
            variants.append(cleaned)
    queries: list[str] = []
    for query in variants[: config.max_query_variants] + [ctx.node_question]:
        if query not in queries:
            queries.append(query)
    return queries


def fan_out_search(
    queries: list[str],
    engines: list[SearchBackend],
    k: int,
    deadline: _Deadline | None = None,
) -> tuple[list[list[SearchHit]], list[str]]:
    """Run every (query, engine) pair concurrently.

    Failed pairs yield empty lists plus a note; if every pair fails the whole
    stage fails.  Result lists are ordered by (query index, engine index).
    """
    if not queries or not engines:
        raise ValueError("fan_out_search needs at least one query and one engine")
    pairs = [(q, e) for q in queries for e in engines]
    notes: list[str] = []
    lists: list[list[SearchHit]] = []
    failures = 0
    with ThreadPoolExecutor(max_workers=len(pairs)) as pool:
        futures = [pool.submit(engine.search, query, k) for query, engine in pairs]
        for (query, engine), future in zip(pairs, futures):
            try:
                timeout = deadline.check() if deadline else None
                lists.append(future.result(timeout=timeout))
            except (FutureTimeout, TimeoutError):
                raise TimeoutError("search fan-out ran out of budget") from None
            except Exception as exc:
                failures += 1
                lists.append([])
                notes.append(f"search failed: engine={engine.engine_id} query={query!r}: {exc}")
    if failures == len(pairs):
        raise SearcherFailure(
            "AllEnginesFailed", "every (query, engine) pair failed", SearcherTranscript(node="")
        )
    return lists, notes


def merge_hits(lists: list[list[SearchHit]], cap: int = 20) -> list[SearchHit]:
    """Merge hit lists by normalized URL.

    Each URL keeps its minimum rank and lexicographically-first title; summary
    and engine come from the best-ranked occurrence (first seen wins ties).
    Output is ordered by (best rank, normalized URL) and capped.
    """
    groups: dict[str, dict] = {}
    for hits in lists:
        for hit in hits:
            key = normalize_url(hit.url)
            entry = groups.get(key)
            if entry is None:
                groups[key] = {
                    "rank": hit.rank,
                    "title": hit.title,
                    "summary": hit.summary,
                    "engine": hit.source_engine,
                }
            else:
                if hit.title < entry["title"]:
                    entry["title"] = hit.title
                if hit.rank < entry["rank"]:
                    entry["rank"] = hit.rank
                    entry["summary"] = hit.summary
                    entry["engine"] = hit.source_engine
    merged = [
        SearchHit(
            url=url,
            title=entry["title"],
            summary=entry["summary"],
            source_engine=entry["engine"],
            rank=entry["rank"],
        )
        for url, entry in groups.items()
    ]
    merged.sort(key=lambda h: (h.rank, h.url))
    return merged[:cap]


def select_pages(
    ctx: SearcherContext,
    merged_hits: list[SearchHit],
    llm,
    config: SearcherConfig,
    templates: TemplateSet,
) -> tuple[list[str], str | None]:
    """Ask the model which merged hits deserve full reading.

    Returns (urls, note).  Replies without a single valid index, and backend
    failures, fall back to the top hits in merge order.
    """
    if not merged_hits:
        raise ValueError("select_pages requires a non-empty merged hit list")
    candidates = "\n".join(
        f"{i}. {hit.title} | {hit.url} | {hit.summary}"
        for i, hit in enumerate(merged_hits, start=1)
    )
    prompt = templates.render(
        "searcher.select",
        max_pages=config.max_pages_to_read,
        question=ctx.node_question,
        candidates=candidates,
    )
    note = None
    try:
        reply = llm.generate([{"role": "user", "content": prompt}])
    except LlmBackendError as exc:
        reply = ""
        note = f"page selection failed ({exc}); using top hits"
    urls: list[str] = []
    for match in re.findall(r"\d+", reply):
        index = int(match)
        if 1 <= index <= len(merged_hits):
            url = merged_hits[index - 1].url
            if url not in urls:
                urls.append(url)
        if len(urls) == config.max_pages_to_read:
            break
    if not urls:
        if note is None:
            note = "page selection reply had no valid indices; using top hits"
        urls = [hit.url for hit in merged_hits[: config.max_pages_to_read]]
    return urls[: config.max_pages_to_read], note


def fetch_pages(
    urls: list[str],
    fetcher,
    config: SearcherConfig,
    titles: dict[str, str] | None = None,
    deadline: _Deadline | None = None,
) -> tuple[list[PageDocument], list[str]]:
    """Fetch and extract the selected pages concurrently.

    Per-URL failures and slow fetches become notes, never batch errors; body
    text is truncated to the page character budget.
    """
    if not urls:
        return [], []
    titles = titles or {}
    pages: list[PageDocument] = []
    notes: list[str] = []
    with ThreadPoolExecutor(max_workers=len(urls)) as pool:
        futures = [pool.submit(fetcher.fetch, url) for url in urls]
        for url, future in zip(urls, futures):
            budget = config.fetch_timeout
            if deadline is not None:
                budget = min(budget, deadline.check())
            try:
                raw = future.result(timeout=budget)
            except FutureTimeout:
                if deadline is not None and deadline.remaining <= 0:
                    raise TimeoutError("page fetching ran out of budget") from None
                notes.append(f"fetch timed out: {url}")
                continue
            except FetchError as exc:
                notes.append(str(exc))
                continue
            except Exception as exc:
                notes.append(f"fetch failed: {url}: {exc}")
                continue
            title, body = html_to_text(raw.content)
            if not title:
                title = titles.get(url, url)
            truncated = len(body) > config.page_char_budget
            pages.append(
                PageDocument(
                    url=url,
                    title=title,
                    body_text=body[: config.page_char_budget],
                    truncated=truncated,
                )
            )
    return pages, notes


def build_summary_prompt(
    ctx: SearcherContext,
    pages: list[PageDocument],
    templates: TemplateSet,
) -> str:
    if ctx.parent_answers:
        parents = "\n".join(f"- [{name}] {answer}" for name, answer in ctx.parent_answers)
    else:
        parents = "(none)"
    if pages:
        excerpts = "\n\n".join(
            f"[{i}] {page.title}\nURL: {page.url}\n{page.body_text}"
            for i, page in enumerate(pages, start=1)
        )
    else:
        excerpts = "(no pages were read)"
    return templates.render(
        "searcher.summarize",
        root_question=ctx.root_question,
        parent_answers=parents,
        excerpts=excerpts,
        question=ctx.node_question,
    )


def summarize(
    ctx: SearcherContext,
    pages: list[PageDocument],
    llm,
    templates: TemplateSet,
) -> tuple[str, list[tuple[str, str]], str]:
    """Produce the node answer from page excerpts.

    Returns (answer_text, citations, prompt).  Citations are the pages the
    answer references with bracketed indices, or every read page when the
    answer cites nothing.  Zero pages short-circuit to a fixed no-evidence
    answer; a backend failure propagates and fails the node.
    """
    prompt = build_summary_prompt(ctx, pages, templates)
    if not pages:
        return NO_EVIDENCE_ANSWER, [], prompt
    answer = llm.generate([{"role": "user", "content": prompt}])
    cited_indices: list[int] = []
    for match in re.findall(r"\[(\d+)\]", answer):
        index = int(match)
        if 1 <= index <= len(pages) and index not in cited_indices:
            cited_indices.append(index)
    if cited_indices:
        citations = [(pages[i - 1].url, pages[i - 1].title) for i in sorted(cited_indices)]
    else:
        citations = [(page.url, page.title) for page in pages]
    return answer, citations, prompt


def run_searcher(
    name: str,
    g: ThoughtGraph,
    backends: Backends,
    config: SearcherConfig,
    templates: TemplateSet,
) -> tuple[NodeResponse, SearcherTranscript]:
    """Compose the full pipeline for one running node.

    Raises SearcherFailure (with the partial transcript) on timeout, total
    search failure, or a summarization backend error.
    """
    transcript = SearcherTranscript(node=name)
    deadline = _Deadline(config.timeout)
    try:
        ctx = build_searcher_context(g, name)

        queries = rewrite_queries(ctx, backends.llm, config, templates)
        transcript.queries = queries
        transcript.stages.append("rewrite")
        deadline.check()

        lists, notes = fan_out_search(queries, backends.engines, config.per_query_hits, deadline)
        transcript.hits = [[_hit_dict(h) for h in hits] for hits in lists]
        transcript.notes.extend(notes)
        merged = merge_hits(lists, config.merged_hit_cap)
        transcript.merged = [_hit_dict(h) for h in merged]
        transcript.stages.append("search")
        deadline.check()

        pages: list[PageDocument] = []
        if merged:
            urls, note = select_pages(ctx, merged, backends.llm, config, templates)
            transcript.selected = list(urls)
            if note:
                transcript.notes.append(note)
            titles = {hit.url: hit.title for hit in merged}
            pages, fetch_notes = fetch_pages(urls, backends.fetcher, config, titles, deadline)
            transcript.notes.extend(fetch_notes)
            transcript.pages = [
                {
                    "url": page.url,
                    "title": page.title,
                    "chars": len(page.body_text),
                    "truncated": page.truncated,
                    "digest": hashlib.sha256(page.body_text.encode("utf-8")).hexdigest()[:16],
                }
                for page in pages
            ]
            transcript.stages.append("select")
            deadline.check()

        answer, citations, prompt = summarize(ctx, pages, backends.llm, templates)
        transcript.summary = answer
        transcript.citations = [[url, title] for url, title in citations]
        transcript.summary_prompt = prompt
        transcript.stages.append("summarize")
    except TimeoutError as exc:
        raise SearcherFailure("Timeout", str(exc), transcript) from None
    except LlmBackendError as exc:
        raise SearcherFailure("LlmBackendError", str(exc), transcript) from None
    except SearcherFailure as exc:
        raise SearcherFailure(exc.kind, str(exc), transcript) from None

    response = NodeResponse(
        answer_text=answer,
        citations=citations,
        transcript_digest=transcript.digest(),
    )
    return response, transcript


def _hit_dict(hit: SearchHit) -> dict:
    return {
        "url": hit.url,
        "title": hit.title,
        "summary": hit.summary,
        "engine": hit.source_engine,
        "rank": hit.rank,
    }
