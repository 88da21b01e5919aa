"""Backend seams for the engine: LLM, search engine, and page fetcher.

Everything above this module talks only to the three interfaces, so fixture
and live implementations swap through configuration alone.  Fixture backends
are deterministic pure functions of their inputs plus the loaded corpus or
script, with an optional latency knob for concurrency tests.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from urllib.parse import urlsplit, urlunsplit

import httpx

DEFAULT_MAX_FETCH_BYTES = 2 * 1024 * 1024

Message = dict[str, str]  # {"role": ..., "content": ...}


class BackendError(Exception):
    pass


class LlmBackendError(BackendError):
    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class ScriptExhaustedError(LlmBackendError):
    pass


class SearchBackendError(BackendError):
    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class FetchError(BackendError):
    pass


@dataclass(frozen=True)
class SearchHit:
    """One search-engine result row."""

    url: str
    title: str
    summary: str
    source_engine: str
    rank: int


@dataclass(frozen=True)
class RawPage:
    """Raw fetch result before text extraction."""

    url: str
    content: str
    content_type: str


def normalize_url(url: str) -> str:
    """Conservative URL normalization used when merging hits.

    Lowercases scheme and host, strips the fragment and any trailing slash,
    and drops default ports.  Query strings are left untouched: sorting or
    dropping parameters can merge genuinely distinct pages.
    """
    parts = urlsplit(url.strip())
    scheme = parts.scheme.lower()
    host = parts.hostname.lower() if parts.hostname else ""
    port = parts.port
    if port is not None and not (
        (scheme == "http" and port == 80) or (scheme == "https" and port == 443)
    ):
        host = f"{host}:{port}"
    path = parts.path.rstrip("/")
    return urlunsplit((scheme, host, path, parts.query, ""))


# -- LLM -------------------------------------------------------------------


class LlmBackend:
    """Chat-style text generation seam."""

    def generate(
        self,
        messages: list[Message],
        temperature: float = 0.0,
        max_tokens: int | None = None,
        stop: list[str] | None = None,
    ) -> str:
        raise NotImplementedError

    def stream(
        self,
        messages: list[Message],
        temperature: float = 0.0,
        max_tokens: int | None = None,
        stop: list[str] | None = None,
    ):
        """Incremental chunks; concatenation equals generate() for
        deterministic backends."""
        text = self.generate(messages, temperature=temperature, max_tokens=max_tokens, stop=stop)
        yield from chunk_text(text)


def chunk_text(text: str, size: int = 64):
    """Split text into chunks at whitespace boundaries, for streamed deltas."""
    if not text:
        return
    buf = ""
    for piece in re.split(r"(\s+)", text):
        buf += piece
        if len(buf) >= size:
            yield buf
            buf = ""
    if buf:
        yield buf


@dataclass(frozen=True)
class ScriptRule:
    kind: str  # "turn" | "substring" | "role"
    value: str | int
    response: str


class ScriptedLlm(LlmBackend):
    """Deterministic rule-driven stand-in for a chat model.

    Rules fire first-match in order.  A ``turn`` rule matches the zero-based
    call index of this instance; ``substring`` matches against the content of
    the last message; ``role`` is a regex over the last message's role.
    """

    def __init__(
        self,
        rules: list[ScriptRule],
        default: str | None = None,
        latency: float = 0.0,
    ) -> None:
        self.rules = list(rules)
        self.default = default
        self.latency = latency
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def generate(self, messages, temperature=0.0, max_tokens=None, stop=None) -> str:
        with self._lock:
            turn = self._calls
            self._calls += 1
        if self.latency:
            time.sleep(self.latency)
        last = messages[-1] if messages else {"role": "", "content": ""}
        for rule in self.rules:
            if self._matches(rule, turn, last):
                return rule.response
        if self.default is not None:
            return self.default
        raise ScriptExhaustedError(f"no script rule matched at call {turn}")

    @staticmethod
    def _matches(rule: ScriptRule, turn: int, last: Message) -> bool:
        if rule.kind == "turn":
            return int(rule.value) == turn
        if rule.kind == "substring":
            return str(rule.value) in last.get("content", "")
        if rule.kind == "role":
            return re.fullmatch(str(rule.value), last.get("role", "")) is not None
        raise ValueError(f"unknown matcher kind {rule.kind!r}")


def load_script(path: str, latency: float = 0.0) -> ScriptedLlm:
    """Load a scripted LLM from line-delimited JSON rule records."""
    rules: list[ScriptRule] = []
    default: str | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: bad script record: {exc}") from None
            kind = rec.get("kind")
            if kind == "default":
                default = rec["response"]
            elif kind in ("turn", "substring", "role"):
                rules.append(ScriptRule(kind, rec["value"], rec["response"]))
            else:
                raise ValueError(f"{path}:{lineno}: unknown matcher kind {kind!r}")
    return ScriptedLlm(rules, default=default, latency=latency)


# -- search ----------------------------------------------------------------


class SearchBackend:
    engine_id = "search"

    def search(self, query: str, k: int) -> list[SearchHit]:
        raise NotImplementedError


@dataclass(frozen=True)
class FixtureDocument:
    id: str
    url: str
    title: str
    summary: str
    body: str


class CorpusError(ValueError):
    pass


class FixtureCorpus:
    """In-memory document collection backing the fixture search and fetcher."""

    def __init__(self, documents: list[FixtureDocument]) -> None:
        ids: set[str] = set()
        urls: set[str] = set()
        for doc in documents:
            if doc.id in ids:
                raise CorpusError(f"duplicate document id {doc.id!r}")
            if doc.url in urls:
                raise CorpusError(f"duplicate document url {doc.url!r}")
            for fname in ("id", "url", "title", "summary"):
                if not getattr(doc, fname):
                    raise CorpusError(f"document {doc.id!r}: empty field {fname!r}")
            ids.add(doc.id)
            urls.add(doc.url)
        self.documents = list(documents)
        self.by_url = {doc.url: doc for doc in self.documents}
        self._tokens = {
            doc.id: _tokens(f"{doc.title} {doc.summary} {doc.body}")
            for doc in self.documents
        }

    def __len__(self) -> int:
        return len(self.documents)

    @classmethod
    def load(cls, path: str) -> FixtureCorpus:
        docs: list[FixtureDocument] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    docs.append(
                        FixtureDocument(
                            id=rec["id"],
                            url=rec["url"],
                            title=rec["title"],
                            summary=rec["summary"],
                            body=rec.get("body", ""),
                        )
                    )
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise CorpusError(f"{path}:{lineno}: bad corpus record: {exc}") from None
        return cls(docs)

    def doc_tokens(self, doc_id: str) -> frozenset[str]:
        return self._tokens[doc_id]


def _tokens(text: str) -> frozenset[str]:
    return frozenset(re.findall(r"[a-z0-9]+", text.lower()))


def fixture_search(corpus: FixtureCorpus, query: str, k: int, engine_id: str = "fixture") -> list[SearchHit]:
    """Token-overlap retrieval over the corpus.

    score(doc) = |query tokens ∩ doc tokens| / |query tokens| over lowercased
    alphanumeric tokens; zero-score docs are dropped and ties break on doc id.
    """
    qtokens = _tokens(query)
    if not qtokens:
        return []
    scored = []
    for doc in corpus.documents:
        overlap = len(qtokens & corpus.doc_tokens(doc.id))
        if overlap:
            scored.append((-overlap / len(qtokens), doc.id, doc))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [
        SearchHit(
            url=doc.url,
            title=doc.title,
            summary=doc.summary,
            source_engine=engine_id,
            rank=i + 1,
        )
        for i, (_, _, doc) in enumerate(scored[:k])
    ]


class FixtureSearchBackend(SearchBackend):
    def __init__(self, corpus: FixtureCorpus, engine_id: str = "fixture", latency: float = 0.0) -> None:
        self.corpus = corpus
        self.engine_id = engine_id
        self.latency = latency

    def search(self, query: str, k: int) -> list[SearchHit]:
        if self.latency:
            time.sleep(self.latency)
        return fixture_search(self.corpus, query, k, self.engine_id)


# -- page fetching ---------------------------------------------------------


class PageFetcher:
    max_fetch_bytes = DEFAULT_MAX_FETCH_BYTES

    def fetch(self, url: str) -> RawPage:
        raise NotImplementedError

    def _bound(self, content: str) -> str:
        raw = content.encode("utf-8")[: self.max_fetch_bytes]
        return raw.decode("utf-8", "ignore")


class FixtureFetcher(PageFetcher):
    def __init__(self, corpus: FixtureCorpus, latency: float = 0.0) -> None:
        self.corpus = corpus
        self.latency = latency

    def fetch(self, url: str) -> RawPage:
        if self.latency:
            time.sleep(self.latency)
        doc = self.corpus.by_url.get(url)
        if doc is None:
            raise FetchError(f"no fixture page for {url}")
        return RawPage(url=url, content=self._bound(doc.body), content_type="text/html")


# -- live adapters ---------------------------------------------------------

_RETRYABLE = {429, 500, 502, 503, 504}


class LiveChatLlm(LlmBackend):
    """HTTP adapter speaking the common chat-completion wire shape.

    Transient failures (429 and 5xx, plus transport errors) are retried twice
    with exponential backoff starting at 500 ms; other HTTP errors surface
    immediately as LlmBackendError.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        model: str = "default",
        timeout: float = 60.0,
        retries: int = 2,
        backoff: float = 0.5,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.last_retries = 0
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def _payload(self, messages, temperature, max_tokens, stop, stream):
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": temperature,
            "stream": stream,
        }
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens
        if stop:
            payload["stop"] = stop
        return payload

    def _request(self, payload, stream: bool):
        self.last_retries = 0
        delay = self.backoff
        for attempt in range(self.retries + 1):
            try:
                if stream:
                    req = self._client.build_request("POST", self.endpoint, json=payload)
                    resp = self._client.send(req, stream=True)
                else:
                    resp = self._client.post(self.endpoint, json=payload)
            except httpx.HTTPError as exc:
                if attempt == self.retries:
                    raise LlmBackendError(f"transport failure: {exc}") from exc
                self.last_retries += 1
                time.sleep(delay)
                delay *= 2
                continue
            if resp.status_code == 200:
                return resp
            if resp.status_code in _RETRYABLE and attempt < self.retries:
                resp.close()
                self.last_retries += 1
                time.sleep(delay)
                delay *= 2
                continue
            resp.close()
            raise LlmBackendError(
                f"chat endpoint returned {resp.status_code}", status=resp.status_code
            )
        raise LlmBackendError("chat endpoint unreachable")

    def generate(self, messages, temperature=0.0, max_tokens=None, stop=None) -> str:
        resp = self._request(self._payload(messages, temperature, max_tokens, stop, False), stream=False)
        try:
            data = resp.json()
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
            raise LlmBackendError(f"malformed chat response: {exc}") from None

    def stream(self, messages, temperature=0.0, max_tokens=None, stop=None):
        resp = self._request(self._payload(messages, temperature, max_tokens, stop, True), stream=True)
        try:
            for line in resp.iter_lines():
                if not line.startswith("data:"):
                    continue
                chunk = line[len("data:"):].strip()
                if chunk == "[DONE]":
                    break
                try:
                    delta = json.loads(chunk)["choices"][0].get("delta", {})
                except (KeyError, IndexError, TypeError, json.JSONDecodeError):
                    continue
                piece = delta.get("content")
                if piece:
                    yield piece
        finally:
            resp.close()


class LiveSearchBackend(SearchBackend):
    """Adapter for a Bing-shaped web search JSON API."""

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        engine_id: str = "bing",
        timeout: float = 15.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.engine_id = engine_id
        headers = {"Ocp-Apim-Subscription-Key": api_key} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def search(self, query: str, k: int) -> list[SearchHit]:
        try:
            resp = self._client.get(self.endpoint, params={"q": query, "count": k})
        except httpx.HTTPError as exc:
            raise SearchBackendError(f"search transport failure: {exc}") from exc
        if resp.status_code != 200:
            raise SearchBackendError(
                f"search endpoint returned {resp.status_code}", status=resp.status_code
            )
        try:
            data = resp.json()
        except json.JSONDecodeError as exc:
            raise SearchBackendError(f"malformed search response: {exc}") from None
        rows = (data.get("webPages") or {}).get("value") or []
        hits = []
        for i, row in enumerate(rows[:k]):
            try:
                hits.append(
                    SearchHit(
                        url=normalize_url(row["url"]),
                        title=row.get("name", ""),
                        summary=row.get("snippet", ""),
                        source_engine=self.engine_id,
                        rank=int(row.get("position", i + 1)),
                    )
                )
            except (KeyError, TypeError) as exc:
                raise SearchBackendError(f"malformed search row: {exc}") from None
        return hits


class LiveFetcher(PageFetcher):
    def __init__(self, timeout: float = 10.0, transport: httpx.BaseTransport | None = None) -> None:
        self.timeout = timeout
        self._client = httpx.Client(timeout=timeout, follow_redirects=True, transport=transport)

    def fetch(self, url: str) -> RawPage:
        try:
            resp = self._client.get(url)
        except httpx.HTTPError as exc:
            raise FetchError(f"fetch failed for {url}: {exc}") from exc
        if resp.status_code != 200:
            raise FetchError(f"fetch for {url} returned {resp.status_code}")
        content_type = resp.headers.get("content-type", "text/html")
        raw = resp.content[: self.max_fetch_bytes]
        return RawPage(url=url, content=raw.decode(resp.encoding or "utf-8", "replace"), content_type=content_type)


# -- bundle ----------------------------------------------------------------


@dataclass
class Backends:
    """The three seams handed to planner, searchers, and the eval harness."""

    llm: LlmBackend
    engines: list[SearchBackend] = field(default_factory=list)
    fetcher: PageFetcher | None = None
