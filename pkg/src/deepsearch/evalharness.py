"""Closed-set QA evaluation: three agent conditions over one dataset format.

Agents: ``nosearch`` (one bare model call), ``react`` (a thought/action loop
with a search tool), and ``mindsearch`` (the full planner engine).  Scoring
is normalized exact match by default, with an optional model judge.  Reports
are line-delimited per-item records plus one aggregate record, and render to
a stdout table of agent rows by tag columns.
"""

from __future__ import annotations

import json
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .backends import Backends, LlmBackendError, SearchBackendError
from .planner import PlannerConfig, run_session
from .templates import TemplateSet

AGENT_KINDS = ("nosearch", "react", "mindsearch")
SCORING_KINDS = ("em", "judge")


class MalformedRecordError(ValueError):
    pass


@dataclass(frozen=True)
class QAItem:
    id: str
    question: str
    gold_answers: tuple[str, ...]
    tags: tuple[str, ...] = ()


def load_dataset(path: str) -> list[QAItem]:
    """Load line-delimited records {id, question, answers[], tags[]}."""
    items: list[QAItem] = []
    ids: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(f"{path}:{lineno}: bad record: {exc}") from None
            if not isinstance(rec, dict):
                raise MalformedRecordError(f"{path}:{lineno}: record must be an object")
            try:
                item = QAItem(
                    id=str(rec["id"]),
                    question=str(rec["question"]),
                    gold_answers=tuple(str(a) for a in rec["answers"]),
                    tags=tuple(str(t) for t in rec.get("tags", [])),
                )
            except KeyError as exc:
                raise MalformedRecordError(
                    f"{path}:{lineno}: missing field {exc.args[0]!r}"
                ) from None
            except TypeError:
                raise MalformedRecordError(f"{path}:{lineno}: malformed field types") from None
            if not item.question:
                raise MalformedRecordError(f"{path}:{lineno}: empty question")
            if not item.gold_answers:
                raise MalformedRecordError(f"{path}:{lineno}: no answers for {item.id!r}")
            if item.id in ids:
                raise MalformedRecordError(f"{path}:{lineno}: duplicate id {item.id!r}")
            ids.add(item.id)
            items.append(item)
    return items


_PUNCT = re.compile(r"[^\w\s]")
_ARTICLES = ("a", "an", "the")


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace, and drop leading
    articles, so surface wording differences do not fail the comparison."""
    tokens = _PUNCT.sub(" ", text.lower()).split()
    while tokens and tokens[0] in _ARTICLES:
        tokens.pop(0)
    return " ".join(tokens)


def exact_match(prediction: str, gold_answers) -> bool:
    pred = normalize_answer(prediction)
    if not pred:
        return False
    return any(pred == normalize_answer(gold) for gold in gold_answers)


def llm_judge(
    question: str,
    prediction: str,
    gold_answers,
    llm,
    templates: TemplateSet,
) -> tuple[bool, str | None]:
    """Model-graded verdict; the reply's first token must be CORRECT or
    INCORRECT.  One retry on a malformed reply, then verdict false plus a
    warning note."""
    prompt = templates.render(
        "judge.system",
        question=question,
        prediction=prediction,
        gold=" | ".join(gold_answers),
    )
    messages = [{"role": "system", "content": prompt}]
    last = ""
    for _ in range(2):
        try:
            reply = llm.generate(messages)
        except LlmBackendError as exc:
            last = f"judge call failed: {exc}"
            continue
        first = reply.split()[0].strip(".,:;!") if reply.split() else ""
        if first == "CORRECT":
            return True, None
        if first == "INCORRECT":
            return False, None
        last = f"judge reply not CORRECT/INCORRECT: {reply[:80]!r}"
    return False, last


def nosearch_agent(question: str, backends: Backends) -> str:
    return backends.llm.generate([{"role": "user", "content": question}])


_ACTION_RE = re.compile(r"Action:\s*search\((['\"])(.*?)\1\)")
_FINAL_RE = re.compile(r"Final Answer:\s*(.*)", re.DOTALL)
_THOUGHT_RE = re.compile(r"Thought:\s*(.*?)(?:\n\s*(?:Action|Final Answer):|\Z)", re.DOTALL)


def react_agent(
    question: str,
    backends: Backends,
    templates: TemplateSet,
    max_steps: int = 6,
    k: int = 5,
) -> tuple[str, str | None]:
    """Thought/action loop against the first configured search engine.

    Returns (prediction, note).  When the step budget runs out without a
    final answer, the last thought becomes the prediction and the note says
    so.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    messages = [
        {"role": "system", "content": templates.render("react.system")},
        {"role": "user", "content": question},
    ]
    last_thought = ""
    for _ in range(max_steps):
        reply = backends.llm.generate(messages)
        messages.append({"role": "assistant", "content": reply})
        thought = _THOUGHT_RE.search(reply)
        if thought:
            last_thought = thought.group(1).strip()
        final = _FINAL_RE.search(reply)
        if final:
            return final.group(1).strip(), None
        action = _ACTION_RE.search(reply)
        if action:
            query = action.group(2)
            try:
                hits = backends.engines[0].search(query, k)
            except SearchBackendError as exc:
                observation = f"search failed: {exc}"
            else:
                if hits:
                    observation = "\n".join(
                        f"{i}. {h.title}: {h.summary}" for i, h in enumerate(hits, start=1)
                    )
                else:
                    observation = "(no results)"
        else:
            observation = "invalid action"
        messages.append({"role": "user", "content": f"Observation: {observation}"})
    return last_thought, "step budget exhausted without a final answer"


@dataclass
class ItemResult:
    id: str
    agent: str
    prediction: str
    verdict: bool
    latency: float
    pages_read: int
    tags: tuple[str, ...] = ()
    note: str | None = None

    def as_dict(self) -> dict:
        rec = {
            "id": self.id,
            "agent": self.agent,
            "prediction": self.prediction,
            "verdict": self.verdict,
            "latency": round(self.latency, 6),
            "pages_read": self.pages_read,
            "tags": list(self.tags),
        }
        if self.note:
            rec["note"] = self.note
        return rec


@dataclass
class EvalReport:
    agent: str
    scoring: str
    rows: list[ItemResult] = field(default_factory=list)

    def overall_accuracy(self) -> float:
        if not self.rows:
            return 0.0
        return sum(1 for r in self.rows if r.verdict) / len(self.rows)

    def tag_counts(self) -> dict[str, tuple[int, int]]:
        """tag -> (correct, total) over rows carrying that tag."""
        counts: dict[str, list[int]] = {}
        for row in self.rows:
            for tag in row.tags:
                bucket = counts.setdefault(tag, [0, 0])
                bucket[1] += 1
                if row.verdict:
                    bucket[0] += 1
        return {tag: (c, t) for tag, (c, t) in counts.items()}

    def aggregate_record(self) -> dict:
        return {
            "aggregate": True,
            "agent": self.agent,
            "scoring": self.scoring,
            "items": len(self.rows),
            "overall_accuracy": self.overall_accuracy(),
            "per_tag": {
                tag: {"correct": c, "total": t, "accuracy": c / t}
                for tag, (c, t) in sorted(self.tag_counts().items())
            },
        }

    def write_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps(row.as_dict(), sort_keys=True, ensure_ascii=False) + "\n")
            fh.write(json.dumps(self.aggregate_record(), sort_keys=True, ensure_ascii=False) + "\n")


def _predict(
    item: QAItem,
    agent_kind: str,
    backends: Backends,
    templates: TemplateSet,
    planner_config: PlannerConfig,
    react_max_steps: int,
) -> tuple[str, int, str | None]:
    """(prediction, pages_read, note) for one item under one agent."""
    if agent_kind == "nosearch":
        return nosearch_agent(item.question, backends), 0, None
    if agent_kind == "react":
        prediction, note = react_agent(
            item.question, backends, templates, max_steps=react_max_steps
        )
        return prediction, 0, note
    session = run_session(item.question, planner_config, backends, templates)
    pages = sum(len(t.pages) for t in session.transcripts.values())
    if session.final_response is None:
        return "", pages, f"session aborted: {session.error}"
    return session.final_response.answer_text, pages, None


def run_eval(
    items: list[QAItem],
    agent_kind: str,
    scoring: str,
    backends: Backends,
    templates: TemplateSet,
    planner_config: PlannerConfig | None = None,
    judge_llm=None,
    max_workers: int = 4,
    react_max_steps: int = 6,
) -> EvalReport:
    """Evaluate every item under one agent condition.

    Items run with bounded parallelism; rows keep dataset order.  Per-item
    failures score false with a note instead of stopping the run.
    """
    if agent_kind not in AGENT_KINDS:
        raise ValueError(f"unknown agent {agent_kind!r}")
    if scoring not in SCORING_KINDS:
        raise ValueError(f"unknown scoring {scoring!r}")
    if not items:
        raise ValueError("dataset is empty")
    planner_config = planner_config or PlannerConfig()
    judge = judge_llm or backends.llm

    def run_item(item: QAItem) -> ItemResult:
        started = time.perf_counter()
        note = None
        pages = 0
        try:
            prediction, pages, note = _predict(
                item, agent_kind, backends, templates, planner_config, react_max_steps
            )
        except Exception as exc:
            prediction = ""
            note = f"agent failed: {exc}"
        latency = time.perf_counter() - started
        if note and not prediction:
            verdict = False
        elif scoring == "em":
            verdict = exact_match(prediction, item.gold_answers)
        else:
            verdict, judge_note = llm_judge(
                item.question, prediction, item.gold_answers, judge, templates
            )
            if judge_note:
                note = f"{note}; {judge_note}" if note else judge_note
        return ItemResult(
            id=item.id,
            agent=agent_kind,
            prediction=prediction,
            verdict=verdict,
            latency=latency,
            pages_read=pages,
            tags=item.tags,
            note=note,
        )

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        rows = list(pool.map(run_item, items))
    return EvalReport(agent=agent_kind, scoring=scoring, rows=rows)


def render_table(reports: list[EvalReport]) -> str:
    """Accuracy table, one agent per row, one column per tag plus Overall."""
    tags = sorted({tag for report in reports for tag in report.tag_counts()})
    header = ["Agent"] + tags + ["Overall"]
    body: list[list[str]] = []
    for report in reports:
        counts = report.tag_counts()
        row = [report.agent]
        for tag in tags:
            if tag in counts:
                c, t = counts[tag]
                row.append(f"{100.0 * c / t:.1f}")
            else:
                row.append("-")
        row.append(f"{100.0 * report.overall_accuracy():.1f}")
        body.append(row)
    widths = [
        max(len(header[i]), *(len(row[i]) for row in body)) if body else len(header[i])
        for i in range(len(header))
    ]
    lines = [
        "  ".join(header[i].ljust(widths[i]) for i in range(len(header))).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(header))),
    ]
    for row in body:
        cells = [row[0].ljust(widths[0])]
        cells.extend(row[i].rjust(widths[i]) for i in range(1, len(header)))
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)
