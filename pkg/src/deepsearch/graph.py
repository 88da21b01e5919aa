"""Mutable thought-graph: the DAG of sub-questions driving a search session.

The graph always starts with a single ``root`` node holding the user question
and may grow exactly one ``response`` node holding the final answer.  All
other nodes are search tasks.  Mutations preserve acyclicity; the ready-set
computation decides which nodes may be dispatched concurrently.
"""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass, field
from enum import Enum

ROOT_NAME = "root"
END_NAME = "response"

_NAME_RE = re.compile(r"[a-z][a-z0-9_]{0,63}\Z")


class GraphError(Exception):
    """Base class for thought-graph violations; ``code`` is the stable token
    used in diagnostics and wire payloads."""

    code = "GraphError"


class EmptyQuestionError(GraphError):
    code = "EmptyQuestion"


class EmptyContentError(GraphError):
    code = "EmptyContent"


class DuplicateNodeError(GraphError):
    code = "DuplicateNode"


class InvalidNameError(GraphError):
    code = "InvalidName"


class ReservedNameError(GraphError):
    code = "ReservedName"


class UnknownNodeError(GraphError):
    code = "UnknownNode"


class SelfLoopError(GraphError):
    code = "SelfLoop"


class CycleCreatedError(GraphError):
    code = "CycleCreated"


class EdgeFromEndError(GraphError):
    code = "EdgeFromEnd"


class InvalidTransitionError(GraphError):
    code = "InvalidTransition"


class NodeKind(str, Enum):
    START = "start"
    SEARCH = "search"
    END = "end"


class NodeState(str, Enum):
    PENDING = "pending"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


RESOLVED_STATES = (NodeState.DONE, NodeState.FAILED)


@dataclass
class NodeResponse:
    """Answer produced for one node by a searcher (or the final-answer turn)."""

    answer_text: str
    citations: list[tuple[str, str]] = field(default_factory=list)
    transcript_digest: str = ""

    def as_dict(self) -> dict:
        return {
            "answer_text": self.answer_text,
            "citations": [list(c) for c in self.citations],
            "transcript_digest": self.transcript_digest,
        }


@dataclass
class GraphNode:
    name: str
    content: str
    kind: NodeKind
    seq: int
    state: NodeState = NodeState.PENDING
    response: NodeResponse | None = None
    error: str | None = None


def content_digest(content: str) -> str:
    """First 8 hex chars of the content's SHA-256, used in snapshots."""
    return hashlib.sha256(content.encode("utf-8")).hexdigest()[:8]


@dataclass(frozen=True)
class SnapshotNode:
    name: str
    kind: str
    state: str
    seq: int
    digest: str


@dataclass(frozen=True)
class Snapshot:
    """Canonical, order-stable structural encoding of a thought-graph."""

    nodes: tuple[SnapshotNode, ...]
    edges: tuple[tuple[str, str], ...]

    def render(self) -> str:
        lines = [
            f"node {n.name} {n.kind} {n.state} {n.seq} {n.digest}"
            for n in sorted(self.nodes, key=lambda n: n.seq)
        ]
        lines.extend(sorted(f"edge {a} {b}" for a, b in self.edges))
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> Snapshot:
        nodes: list[SnapshotNode] = []
        edges: list[tuple[str, str]] = []
        for raw in text.splitlines():
            if not raw.strip():
                continue
            parts = raw.split()
            if parts[0] == "node" and len(parts) == 6:
                nodes.append(
                    SnapshotNode(parts[1], parts[2], parts[3], int(parts[4]), parts[5])
                )
            elif parts[0] == "edge" and len(parts) == 3:
                edges.append((parts[1], parts[2]))
            else:
                raise ValueError(f"unrecognized snapshot line: {raw!r}")
        return cls(tuple(nodes), tuple(edges))


class ThoughtGraph:
    """DAG of sub-question nodes with a state machine per node.

    Mutation is expected from a single owner (the planner turn loop) but
    snapshots and ready-set reads may happen concurrently; all public
    methods take the internal lock so readers observe consistent states.
    """

    def __init__(self, question: str) -> None:
        if not question:
            raise EmptyQuestionError("question must be non-empty")
        self._lock = threading.RLock()
        self._nodes: dict[str, GraphNode] = {}
        self._out: dict[str, set[str]] = {}
        self._in: dict[str, set[str]] = {}
        self._seq = 0
        self._insert(ROOT_NAME, question, NodeKind.START, NodeState.DONE)

    # -- accessors ---------------------------------------------------------

    @property
    def root_name(self) -> str:
        return ROOT_NAME

    @property
    def end_name(self) -> str | None:
        return END_NAME if END_NAME in self._nodes else None

    @property
    def question(self) -> str:
        return self._nodes[ROOT_NAME].content

    def __contains__(self, name: str) -> bool:
        with self._lock:
            return name in self._nodes

    def __len__(self) -> int:
        with self._lock:
            return len(self._nodes)

    def node(self, name: str) -> GraphNode:
        with self._lock:
            try:
                return self._nodes[name]
            except KeyError:
                raise UnknownNodeError(f"no node named {name!r}") from None

    def nodes(self) -> list[GraphNode]:
        """Nodes in insertion (seq) order."""
        with self._lock:
            return list(self._nodes.values())

    def edges(self) -> list[tuple[str, str]]:
        with self._lock:
            return sorted((a, b) for a, outs in self._out.items() for b in outs)

    def parents(self, name: str) -> list[GraphNode]:
        """Direct in-neighbors of ``name`` in seq order."""
        with self._lock:
            self._require(name)
            preds = [self._nodes[p] for p in self._in[name]]
            return sorted(preds, key=lambda n: n.seq)

    # -- mutations ---------------------------------------------------------

    def add_node(self, name: str, content: str) -> GraphNode:
        """Add a search node (or the end node when ``name`` is reserved)."""
        with self._lock:
            if name == ROOT_NAME:
                raise ReservedNameError(f"{ROOT_NAME!r} is the start node")
            if not _NAME_RE.match(name):
                raise InvalidNameError(f"bad node name {name!r}")
            if name in self._nodes:
                raise DuplicateNodeError(f"node {name!r} already exists")
            if not content:
                raise EmptyContentError(f"node {name!r} has empty content")
            kind = NodeKind.END if name == END_NAME else NodeKind.SEARCH
            return self._insert(name, content, kind, NodeState.PENDING)

    def add_edge(self, src: str, dst: str) -> bool:
        """Insert ``src -> dst``; returns False for an idempotent duplicate."""
        with self._lock:
            self._require(src)
            self._require(dst)
            if src == dst:
                raise SelfLoopError(f"self loop on {src!r}")
            if self._nodes[src].kind is NodeKind.END:
                raise EdgeFromEndError("end node cannot have outgoing edges")
            if dst in self._out[src]:
                return False
            if self._reaches(dst, src):
                raise CycleCreatedError(f"edge {src!r}->{dst!r} would close a cycle")
            self._out[src].add(dst)
            self._in[dst].add(src)
            return True

    def mark_running(self, name: str) -> None:
        with self._lock:
            node = self.node(name)
            if node.state is not NodeState.PENDING:
                raise InvalidTransitionError(
                    f"{name!r} is {node.state.value}, expected pending"
                )
            node.state = NodeState.RUNNING

    def record_result(self, name: str, outcome: NodeResponse | str) -> GraphNode:
        """Resolve a running node: a NodeResponse means done, error text means
        failed.  The end node only ever completes successfully."""
        with self._lock:
            node = self.node(name)
            if node.state is not NodeState.RUNNING:
                raise InvalidTransitionError(
                    f"{name!r} is {node.state.value}, expected running"
                )
            if isinstance(outcome, NodeResponse):
                node.state = NodeState.DONE
                node.response = outcome
            else:
                if node.kind is NodeKind.END:
                    raise InvalidTransitionError("end node cannot fail")
                node.state = NodeState.FAILED
                node.error = str(outcome)
            return node

    # -- queries -----------------------------------------------------------

    def ready_nodes(self) -> list[str]:
        """Pending nodes whose in-neighbors are all resolved, in seq order.

        A failed predecessor still satisfies its dependents (the searcher
        context carries a failure note instead).  The end node is ready only
        once every other node is resolved.
        """
        with self._lock:
            ready = []
            for node in self._nodes.values():
                if node.state is not NodeState.PENDING:
                    continue
                if node.kind is NodeKind.END:
                    others = (
                        n for n in self._nodes.values() if n.name != node.name
                    )
                    if all(n.state in RESOLVED_STATES for n in others):
                        ready.append(node.name)
                elif all(
                    self._nodes[p].state in RESOLVED_STATES for p in self._in[node.name]
                ):
                    ready.append(node.name)
            return ready

    def topological_order(self) -> list[str]:
        """Kahn ordering; raises CycleCreatedError if the invariant broke."""
        with self._lock:
            indegree = {name: len(self._in[name]) for name in self._nodes}
            frontier = [n for n, d in indegree.items() if d == 0]
            order: list[str] = []
            while frontier:
                name = frontier.pop(0)
                order.append(name)
                for child in sorted(self._out[name]):
                    indegree[child] -= 1
                    if indegree[child] == 0:
                        frontier.append(child)
            if len(order) != len(self._nodes):
                raise CycleCreatedError("graph is not acyclic")
            return order

    def structure(self) -> Snapshot:
        with self._lock:
            nodes = tuple(
                SnapshotNode(
                    n.name, n.kind.value, n.state.value, n.seq, content_digest(n.content)
                )
                for n in self._nodes.values()
            )
            edges = tuple(self.edges())
            return Snapshot(nodes, edges)

    def snapshot(self) -> str:
        """Deterministic textual encoding; equal graphs render byte-identical."""
        return self.structure().render()

    # -- internals ---------------------------------------------------------

    def _insert(
        self, name: str, content: str, kind: NodeKind, state: NodeState
    ) -> GraphNode:
        node = GraphNode(name=name, content=content, kind=kind, seq=self._seq, state=state)
        self._seq += 1
        self._nodes[name] = node
        self._out[name] = set()
        self._in[name] = set()
        return node

    def _require(self, name: str) -> None:
        if name not in self._nodes:
            raise UnknownNodeError(f"no node named {name!r}")

    def _reaches(self, start: str, target: str) -> bool:
        if start == target:
            return True
        seen = {start}
        stack = [start]
        while stack:
            for child in self._out[stack.pop()]:
                if child == target:
                    return True
                if child not in seen:
                    seen.add(child)
                    stack.append(child)
        return False


def new_graph(question: str) -> ThoughtGraph:
    """Fresh graph holding only the start node with the user question."""
    return ThoughtGraph(question)
