"""Shared hermetic scenarios: fixture corpora plus scripted model replies.

Each builder returns everything a test needs to run a full session offline.
Scripted rules match on distinctive single-line phrases from the prompt
templates, so one script can address individual pipeline stages and nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from deepsearch.backends import (
    Backends,
    FixtureCorpus,
    FixtureDocument,
    FixtureFetcher,
    FixtureSearchBackend,
    ScriptedLlm,
    ScriptRule,
)

REWRITE_MARK = "alternative search queries for: "
SELECT_MARK = "worth reading in full for: "
SUMMARIZE_MARK = "Answer the sub-question: "
FINALIZE_MARK = "write the final answer to: "


def code_block(*statements: str) -> str:
    return "Extending the graph.\n```\n" + "\n".join(statements) + "\n```"


@dataclass
class Scenario:
    question: str
    backends: Backends
    corpus: FixtureCorpus
    llm: ScriptedLlm
    extra: dict = field(default_factory=dict)


def _doc(id: str, url: str, title: str, summary: str, body: str) -> FixtureDocument:
    return FixtureDocument(id=id, url=url, title=title, summary=summary, body=body)


# -- observatory scenario: 3-way decomposition, 12 docs, 2 planted facts ----

OBS_QUESTION = (
    "When was the Aurora Observatory founded, and who served as its first director?"
)
OBS_Q_YEAR = "When was the Aurora Observatory founded?"
OBS_Q_DIRECTOR = "Who was the first director of the Aurora Observatory?"
OBS_Q_SITE = "Where was the Aurora Observatory built?"
OBS_FACT_YEAR = "1912"
OBS_FACT_DIRECTOR = "Clara Voss"
OBS_FINAL = (
    "The Aurora Observatory was founded in 1912 on the Mount Helm ridge, "
    "and its first director was Clara Voss."
)


def observatory_corpus() -> FixtureCorpus:
    docs = [
        _doc(
            "obs01", "https://aurora.example/founding", "Aurora Observatory founding",
            "The Aurora Observatory was founded in 1912.",
            "<html><head><title>Aurora Observatory founding</title></head><body>"
            "<p>Records show the Aurora Observatory was founded in 1912 after two "
            "years of fundraising.</p><script>track()</script></body></html>",
        ),
        _doc(
            "obs02", "https://aurora.example/directors", "Directors of the Aurora Observatory",
            "Clara Voss served as the first director of the Aurora Observatory.",
            "<p>Clara Voss served as the first director of the Aurora Observatory "
            "from its opening until 1934.</p>",
        ),
        _doc(
            "obs03", "https://aurora.example/site", "Aurora Observatory site survey",
            "The observatory was built on the Mount Helm ridge.",
            "<p>The Aurora Observatory was built on the Mount Helm ridge, chosen "
            "for its clear winters.</p>",
        ),
        _doc(
            "obs04", "https://aurora.example/instruments", "Observatory instruments",
            "The Aurora Observatory operated a 24-inch refractor.",
            "<p>The founding instrument of the Aurora Observatory was a 24-inch refractor.</p>",
        ),
        _doc(
            "obs05", "https://aurora.example/annual-1913", "Annual report 1913",
            "First annual report of the Aurora Observatory.",
            "<p>The first director opened the report noting the observatory's founding year.</p>",
        ),
        _doc(
            "obs06", "https://birds.example/aurora-owls", "Owls of the aurora belt",
            "Aurora belt owl migration patterns.",
            "<p>Owls migrate across the aurora belt every winter.</p>",
        ),
        _doc(
            "obs07", "https://history.example/1912-events", "Events of 1912",
            "Notable events of the year 1912.",
            "<p>Many institutions were founded in 1912.</p>",
        ),
        _doc(
            "obs08", "https://people.example/voss-family", "The Voss family papers",
            "Papers of the Voss family, including Clara Voss.",
            "<p>The Voss family papers include the letters of Clara Voss.</p>",
        ),
        _doc(
            "obs09", "https://geo.example/mount-helm", "Mount Helm geology",
            "Geology of the Mount Helm ridge.",
            "<p>Mount Helm is a granite ridge.</p>",
        ),
        _doc(
            "obs10", "https://astro.example/refractors", "Refractor telescopes",
            "A survey of refractor telescopes.",
            "<p>Refractors dominated observatory design before 1920.</p>",
        ),
        _doc(
            "obs11", "https://city.example/helmsburg", "Helmsburg town records",
            "Town records of Helmsburg, near Mount Helm.",
            "<p>Helmsburg grew around the observatory staff.</p>",
        ),
        _doc(
            "obs12", "https://press.example/centennial", "Observatory centennial press",
            "Centennial of the Aurora Observatory.",
            "<p>The centennial celebrated a century of observations.</p>",
        ),
    ]
    return FixtureCorpus(docs)


def observatory_scenario(
    search_latency: float = 0.0, llm_latency: float = 0.0
) -> Scenario:
    corpus = observatory_corpus()
    turn1 = code_block(
        f'graph.add_node(name="founding_year", content="{OBS_Q_YEAR}")',
        f'graph.add_node(name="first_director", content="{OBS_Q_DIRECTOR}")',
        f'graph.add_node(name="site", content="{OBS_Q_SITE}")',
        'graph.add_edge(start_node="root", end_node="founding_year")',
        'graph.add_edge(start_node="root", end_node="first_director")',
        'graph.add_edge(start_node="root", end_node="site")',
    )
    turn2 = code_block(
        'graph.add_node(name="response", content="final answer")',
        'graph.add_edge(start_node="founding_year", end_node="response")',
        'graph.add_edge(start_node="first_director", end_node="response")',
        'graph.add_edge(start_node="site", end_node="response")',
    )
    rules = [
        ScriptRule("substring", FINALIZE_MARK, OBS_FINAL),
        ScriptRule(
            "substring", REWRITE_MARK + OBS_Q_YEAR,
            "Aurora Observatory founding year\naurora observatory founded 1912",
        ),
        ScriptRule(
            "substring", REWRITE_MARK + OBS_Q_DIRECTOR,
            "Aurora Observatory first director\nAurora Observatory directors history",
        ),
        ScriptRule(
            "substring", REWRITE_MARK + OBS_Q_SITE,
            "Aurora Observatory location\nAurora Observatory Mount Helm site",
        ),
        ScriptRule("substring", SELECT_MARK + OBS_Q_YEAR, "1, 2"),
        ScriptRule("substring", SELECT_MARK + OBS_Q_DIRECTOR, "1"),
        ScriptRule("substring", SELECT_MARK + OBS_Q_SITE, "1, 2"),
        ScriptRule(
            "substring", SUMMARIZE_MARK + OBS_Q_YEAR,
            "The Aurora Observatory was founded in 1912 [1].",
        ),
        ScriptRule(
            "substring", SUMMARIZE_MARK + OBS_Q_DIRECTOR,
            "Clara Voss was the first director of the Aurora Observatory [1].",
        ),
        ScriptRule(
            "substring", SUMMARIZE_MARK + OBS_Q_SITE,
            "It was built on the Mount Helm ridge [1].",
        ),
        ScriptRule("substring", "[node founding_year]", turn2),
        ScriptRule("turn", 0, turn1),
    ]
    llm = ScriptedLlm(rules, default="(no further changes)", latency=llm_latency)
    backends = Backends(
        llm=llm,
        engines=[FixtureSearchBackend(corpus, latency=search_latency)],
        fetcher=FixtureFetcher(corpus),
    )
    return Scenario(
        question=OBS_QUESTION,
        backends=backends,
        corpus=corpus,
        llm=llm,
        extra={
            "facts": (OBS_FACT_YEAR, OBS_FACT_DIRECTOR),
            "node_questions": {
                "founding_year": OBS_Q_YEAR,
                "first_director": OBS_Q_DIRECTOR,
                "site": OBS_Q_SITE,
            },
        },
    )


# -- chain scenario: root -> a -> b -> c, one node per wave -----------------

CHAIN_QUESTION = "Trace the history of the Harlan relay station."
CHAIN_QA = "When was the Harlan relay station built?"
CHAIN_QB = "Which group operated the Harlan relay station?"
CHAIN_QC = "When was the Harlan relay station decommissioned?"
CHAIN_ANSWERS = {
    "a": "The Harlan relay station was built in 1931 [1].",
    "b": "The Ostrander group operated the relay station [1].",
    "c": "It was decommissioned in 1977 [1].",
}
CHAIN_FINAL = (
    "Built in 1931, operated by the Ostrander group, and decommissioned in 1977."
)


def chain_corpus() -> FixtureCorpus:
    docs = [
        _doc(
            "ch1", "https://relay.example/built",
            "Harlan relay construction",
            "The Harlan relay station was built in 1931.",
            "<p>The Harlan relay station was built in 1931.</p>",
        ),
        _doc(
            "ch2", "https://relay.example/operators", "Harlan relay operators",
            "The Ostrander group operated the Harlan relay station.",
            "<p>The Ostrander group operated the Harlan relay station for decades.</p>",
        ),
        _doc(
            "ch3", "https://relay.example/closure", "Harlan relay decommissioned",
            "The Harlan relay station was decommissioned in 1977.",
            "<p>The station was decommissioned in 1977 after the network moved on.</p>",
        ),
        _doc(
            "ch4", "https://relay.example/map", "Relay network map",
            "Map of the regional relay network including Harlan.",
            "<p>The Harlan relay station anchored the eastern span.</p>",
        ),
    ]
    return FixtureCorpus(docs)


def chain_scenario() -> Scenario:
    corpus = chain_corpus()
    turn1 = code_block(
        f'graph.add_node(name="a", content="{CHAIN_QA}")',
        f'graph.add_node(name="b", content="{CHAIN_QB}")',
        f'graph.add_node(name="c", content="{CHAIN_QC}")',
        'graph.add_edge(start_node="root", end_node="a")',
        'graph.add_edge(start_node="a", end_node="b")',
        'graph.add_edge(start_node="b", end_node="c")',
    )
    closing = code_block(
        'graph.add_node(name="response", content="final answer")',
        'graph.add_edge(start_node="c", end_node="response")',
    )
    rules = [
        ScriptRule("substring", FINALIZE_MARK, CHAIN_FINAL),
        ScriptRule("substring", SUMMARIZE_MARK + CHAIN_QA, CHAIN_ANSWERS["a"]),
        ScriptRule("substring", SUMMARIZE_MARK + CHAIN_QB, CHAIN_ANSWERS["b"]),
        ScriptRule("substring", SUMMARIZE_MARK + CHAIN_QC, CHAIN_ANSWERS["c"]),
        ScriptRule("substring", REWRITE_MARK, "Harlan relay station history"),
        ScriptRule("substring", SELECT_MARK, "1"),
        ScriptRule("substring", "[node c]", closing),
        ScriptRule("substring", "[node", "Waiting for the next result."),
        ScriptRule("turn", 0, turn1),
    ]
    llm = ScriptedLlm(rules, default="(idle)")
    backends = Backends(
        llm=llm,
        engines=[FixtureSearchBackend(corpus)],
        fetcher=FixtureFetcher(corpus),
    )
    return Scenario(
        question=CHAIN_QUESTION,
        backends=backends,
        corpus=corpus,
        llm=llm,
        extra={"answers": CHAIN_ANSWERS},
    )


# -- fan-out scenarios: N independent sector nodes --------------------------


def sector_corpus(sectors: int, docs_per_sector: int) -> FixtureCorpus:
    docs = []
    for g in range(sectors):
        for j in range(docs_per_sector):
            docs.append(
                _doc(
                    f"g{g:02d}d{j:02d}",
                    f"https://sectors.example/{g}/{j}",
                    f"Sector {g} survey part {j}",
                    f"Observations for sector {g} recorded in part {j}.",
                    f"<p>Sector {g} readings, part {j}: value {g * 100 + j}.</p>",
                )
            )
    return FixtureCorpus(docs)


def fanout_scenario(
    sectors: int,
    docs_per_sector: int = 20,
    search_latency: float = 0.0,
    fetch_latency: float = 0.0,
) -> Scenario:
    """N independent nodes added in one turn, closed in the next."""
    corpus = sector_corpus(sectors, docs_per_sector)
    names = [f"s{g:02d}" for g in range(sectors)]
    turn1_lines = [
        f'graph.add_node(name="{name}", content="What are the observations for sector {g}?")'
        for g, name in enumerate(names)
    ] + [f'graph.add_edge(start_node="root", end_node="{name}")' for name in names]
    turn2_lines = ['graph.add_node(name="response", content="final answer")'] + [
        f'graph.add_edge(start_node="{name}", end_node="response")' for name in names
    ]
    rules = [
        ScriptRule("substring", FINALIZE_MARK, "All sector observations were collected."),
        ScriptRule(
            "substring", REWRITE_MARK,
            "sector survey readings\nsector recorded observations\nsector report values",
        ),
        ScriptRule("substring", SELECT_MARK, "1, 2, 3, 4"),
        ScriptRule("substring", SUMMARIZE_MARK, "The sector readings were recorded [1][2]."),
        ScriptRule("substring", "[node s00]", code_block(*turn2_lines)),
        ScriptRule("turn", 0, code_block(*turn1_lines)),
    ]
    llm = ScriptedLlm(rules, default="(idle)")
    backends = Backends(
        llm=llm,
        engines=[FixtureSearchBackend(corpus, latency=search_latency)],
        fetcher=FixtureFetcher(corpus, latency=fetch_latency),
    )
    return Scenario(
        question="Survey the observations recorded for every sector.",
        backends=backends,
        corpus=corpus,
        llm=llm,
        extra={"names": names},
    )


# -- eval scenario: 12 items with hand-computed accuracies ------------------

EVAL_ITEM_COUNT = 12


def eval_items() -> list[dict]:
    items = []
    for i in range(1, EVAL_ITEM_COUNT + 1):
        items.append(
            {
                "id": f"item{i:02d}",
                "question": f"What is the planted token for archive entry {i:02d}?",
                "answers": [f"token{i:02d}"],
                "tags": ["2-hop" if i <= 6 else "3-hop"],
            }
        )
    return items


def eval_dataset_file(tmp_path) -> str:
    import json

    path = tmp_path / "dataset.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for rec in eval_items():
            fh.write(json.dumps(rec) + "\n")
    return str(path)


def eval_corpus() -> FixtureCorpus:
    # deliberately shares no tokens with the eval questions
    return FixtureCorpus(
        [
            _doc(
                "bg1", "https://archive.example/background", "Background reading",
                "General background notes.", "<p>Nothing of note.</p>",
            ),
            _doc(
                "bg2", "https://archive.example/index", "Archive index",
                "Index of unrelated material.", "<p>See elsewhere.</p>",
            ),
        ]
    )


def write_corpus_file(path, corpus: FixtureCorpus) -> str:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            fh.write(
                json.dumps(
                    {
                        "id": doc.id,
                        "url": doc.url,
                        "title": doc.title,
                        "summary": doc.summary,
                        "body": doc.body,
                    }
                )
                + "\n"
            )
    return str(path)


def write_script_file(path, llm: ScriptedLlm) -> str:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for rule in llm.rules:
            fh.write(
                json.dumps(
                    {"kind": rule.kind, "value": rule.value, "response": rule.response}
                )
                + "\n"
            )
        if llm.default is not None:
            fh.write(json.dumps({"kind": "default", "response": llm.default}) + "\n")
    return str(path)


def _answer_for(i: int, correct: bool) -> str:
    return f"token{i:02d}" if correct else "an entirely wrong answer"


def nosearch_eval_backends(correct_ids: set[int]) -> Backends:
    rules = [
        ScriptRule(
            "substring",
            f"archive entry {i:02d}",
            _answer_for(i, i in correct_ids),
        )
        for i in range(1, EVAL_ITEM_COUNT + 1)
    ]
    llm = ScriptedLlm(rules)
    corpus = eval_corpus()
    return Backends(
        llm=llm, engines=[FixtureSearchBackend(corpus)], fetcher=FixtureFetcher(corpus)
    )


def react_eval_backends(correct_ids: set[int]) -> Backends:
    rules = [
        ScriptRule(
            "substring",
            f"archive entry {i:02d}",
            "Thought: the archive is indexed by entry number.\n"
            f"Final Answer: {_answer_for(i, i in correct_ids)}",
        )
        for i in range(1, EVAL_ITEM_COUNT + 1)
    ]
    llm = ScriptedLlm(rules)
    corpus = eval_corpus()
    return Backends(
        llm=llm, engines=[FixtureSearchBackend(corpus)], fetcher=FixtureFetcher(corpus)
    )


def mindsearch_eval_backends(correct_ids: set[int]) -> Backends:
    decompose = code_block(
        'graph.add_node(name="lookup", content="Locate the archive entry token.")',
        'graph.add_edge(start_node="root", end_node="lookup")',
    )
    closing = code_block(
        'graph.add_node(name="response", content="final answer")',
        'graph.add_edge(start_node="lookup", end_node="response")',
    )
    rules = [
        ScriptRule(
            "substring",
            FINALIZE_MARK + f"What is the planted token for archive entry {i:02d}?",
            _answer_for(i, i in correct_ids),
        )
        for i in range(1, EVAL_ITEM_COUNT + 1)
    ]
    rules += [
        ScriptRule("substring", REWRITE_MARK, "archive token registry"),
        ScriptRule("substring", SELECT_MARK, "1"),
        ScriptRule("substring", SUMMARIZE_MARK, "No token found in the excerpts."),
        ScriptRule("substring", "[node lookup]", closing),
        ScriptRule("substring", "archive entry", decompose),
    ]
    llm = ScriptedLlm(rules, default="(idle)")
    corpus = eval_corpus()
    return Backends(
        llm=llm, engines=[FixtureSearchBackend(corpus)], fetcher=FixtureFetcher(corpus)
    )
