"""Restricted code-action language emitted by the planner model.

A planner reply may contain a fenced code block whose statements are limited
to ``graph.add_node(...)`` and ``graph.add_edge(...)`` with string-literal
arguments.  A hand-written lexer and recursive-descent parser turn the block
into typed actions; anything else becomes an error diagnostic.  Parsing is
total: any byte sequence yields a ParseOutcome, never an exception.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .graph import (
    CycleCreatedError,
    GraphError,
    NodeKind,
    ThoughtGraph,
)

MAX_STATEMENTS = 64

Span = tuple[int, int]  # (byte offset, byte length) into the code text


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    span: Span
    line: int
    col: int
    code: str
    message: str

    def render(self) -> str:
        return f"{self.severity} {self.line}:{self.col} {self.code} {self.message}"


@dataclass(frozen=True)
class AddNode:
    name: str
    content: str
    span: Span = field(default=(0, 0), compare=False)
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class AddEdge:
    src: str
    dst: str
    span: Span = field(default=(0, 0), compare=False)
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


CodeAction = AddNode | AddEdge


@dataclass
class ParseOutcome:
    """Actions plus diagnostics; any error diagnostic empties the actions."""

    actions: list[CodeAction]
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return not any(d.severity == "error" for d in self.diagnostics)


# -- lexer -----------------------------------------------------------------

_IDENT_START = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CONT = _IDENT_START | set("0123456789")
_DIGITS = set("0123456789")
_ESCAPES = {"\\": "\\", "'": "'", '"': '"', "n": "\n", "t": "\t"}
_PUNCT = {".": "dot", "(": "lparen", ")": "rparen", ",": "comma", "=": "eq"}


@dataclass(frozen=True)
class _Token:
    kind: str  # ident | number | string | dot | lparen | rparen | comma | eq | bad | eof
    text: str
    value: str  # decoded payload for strings, raw text otherwise
    span: Span
    line: int
    col: int


class _Lexer:
    def __init__(self, code: str) -> None:
        self.code = code
        self.pos = 0
        self.byte = 0
        self.line = 1
        self.col = 1
        self.diagnostics: list[Diagnostic] = []

    def _advance(self) -> None:
        ch = self.code[self.pos]
        self.pos += 1
        self.byte += len(ch.encode("utf-8"))
        if ch == "\n":
            self.line += 1
            self.col = 1
        else:
            self.col += 1

    def tokens(self) -> list[_Token]:
        out: list[_Token] = []
        code = self.code
        while self.pos < len(code):
            ch = code[self.pos]
            if ch in " \t\r\n":
                self._advance()
                continue
            if ch == "#":
                while self.pos < len(code) and code[self.pos] != "\n":
                    self._advance()
                continue
            start = (self.pos, self.byte, self.line, self.col)
            if ch in _IDENT_START:
                while self.pos < len(code) and code[self.pos] in _IDENT_CONT:
                    self._advance()
                out.append(self._tok("ident", start))
            elif ch in _DIGITS:
                while self.pos < len(code) and (
                    code[self.pos] in _IDENT_CONT or code[self.pos] == "."
                ):
                    self._advance()
                out.append(self._tok("number", start))
            elif ch in _PUNCT:
                self._advance()
                out.append(self._tok(_PUNCT[ch], start))
            elif ch in "'\"":
                out.append(self._string(start))
            else:
                self._advance()
                tok = self._tok("bad", start)
                out.append(tok)
        eof_span = (self.byte, 0)
        out.append(_Token("eof", "", "", eof_span, self.line, self.col))
        return out

    def _tok(self, kind: str, start: tuple[int, int, int, int], value: str | None = None) -> _Token:
        pos0, byte0, line0, col0 = start
        text = self.code[pos0 : self.pos]
        return _Token(kind, text, value if value is not None else text, (byte0, self.byte - byte0), line0, col0)

    def _string(self, start: tuple[int, int, int, int]) -> _Token:
        code = self.code
        quote = code[self.pos]
        triple = code[self.pos : self.pos + 3] in ("'''", '"""')
        closer = quote * 3 if triple else quote
        for _ in range(len(closer)):
            self._advance()
        value: list[str] = []
        while self.pos < len(code):
            if code.startswith(closer, self.pos):
                for _ in range(len(closer)):
                    self._advance()
                return self._tok("string", start, "".join(value))
            ch = code[self.pos]
            if ch == "\n" and not triple:
                break
            if ch == "\\" and self.pos + 1 < len(code):
                self._advance()
                esc = code[self.pos]
                self._advance()
                value.append(_ESCAPES.get(esc, "\\" + esc))
                continue
            self._advance()
            value.append(ch)
        tok = self._tok("string", start, "".join(value))
        self.diagnostics.append(
            Diagnostic(
                "error",
                tok.span,
                tok.line,
                tok.col,
                "UnterminatedString",
                "string literal is never closed",
            )
        )
        return tok


# -- parser ----------------------------------------------------------------

_METHOD_PARAMS = {
    "add_node": (
        ("name", "content"),
        {"name": "name", "node_name": "name", "content": "content", "node_content": "content"},
    ),
    "add_edge": (
        ("start_node", "end_node"),
        {"start_node": "start_node", "end_node": "end_node"},
    ),
}


class _Parser:
    def __init__(self, code: str) -> None:
        lexer = _Lexer(code)
        self.toks = lexer.tokens()
        self.diagnostics = lexer.diagnostics
        self.idx = 0

    def parse(self) -> ParseOutcome:
        actions: list[CodeAction] = []
        statements = 0
        while self.peek().kind != "eof":
            stmt_start = self.peek()
            action = self._statement()
            statements += 1
            if statements > MAX_STATEMENTS:
                self._error(
                    stmt_start,
                    "TooManyStatements",
                    f"more than {MAX_STATEMENTS} statements in one code block",
                )
                break
            if action is not None:
                actions.append(action)
        outcome = ParseOutcome(actions, self.diagnostics)
        if not outcome.ok:
            outcome.actions = []
        return outcome

    def peek(self) -> _Token:
        return self.toks[self.idx]

    def next(self) -> _Token:
        tok = self.toks[self.idx]
        if tok.kind != "eof":
            self.idx += 1
        return tok

    def _error(self, tok: _Token, code: str, message: str) -> None:
        self.diagnostics.append(
            Diagnostic("error", tok.span, tok.line, tok.col, code, message)
        )

    def _recover(self) -> None:
        """Skip to the next plausible statement start so later statements can
        still be diagnosed."""
        while True:
            tok = self.peek()
            if tok.kind == "eof" or (tok.kind == "ident" and tok.text == "graph"):
                return
            self.next()

    def _statement(self) -> CodeAction | None:
        first = self.next()
        if first.kind != "ident" or first.text != "graph":
            self._error(
                first,
                "BadReceiver",
                f"statements must call methods on 'graph', got {first.text!r}",
            )
            self._recover()
            return None
        if self.peek().kind != "dot":
            self._error(self.peek(), "BadReceiver", "expected '.' after 'graph'")
            self._recover()
            return None
        self.next()
        method_tok = self.next()
        if method_tok.kind != "ident" or method_tok.text not in _METHOD_PARAMS:
            self._error(
                method_tok,
                "UnknownMethod",
                f"unknown graph method {method_tok.text!r}; use add_node or add_edge",
            )
            self._recover()
            return None
        if self.peek().kind != "lparen":
            self._error(self.peek(), "BadSyntax", "expected '(' after method name")
            self._recover()
            return None
        self.next()
        args = self._arguments()
        if args is None:
            self._recover()
            return None
        positional, keywords = args
        closer = self.next()  # the closing paren _arguments stopped at
        end = closer.span[0] + closer.span[1]
        span = (first.span[0], end - first.span[0])
        return self._bind(method_tok, positional, keywords, span, first)

    def _arguments(self) -> tuple[list[str], dict[str, tuple[_Token, str]]] | None:
        """Parse the argument list up to (not including) the closing paren."""
        positional: list[str] = []
        keywords: dict[str, tuple[_Token, str]] = {}
        seen_keyword = False
        while True:
            tok = self.peek()
            if tok.kind == "rparen":
                return positional, keywords
            if tok.kind == "eof":
                self._error(tok, "BadSyntax", "unclosed argument list")
                return None
            if tok.kind == "ident" and self.toks[self.idx + 1].kind == "eq":
                key = self.next()
                self.next()  # '='
                value = self.next()
                if value.kind != "string":
                    self._error(
                        value,
                        "NonLiteralArgument",
                        "arguments must be string literals",
                    )
                    return None
                if key.text in keywords:
                    self._error(
                        key, "ArityMismatch", f"keyword {key.text!r} given twice"
                    )
                    return None
                keywords[key.text] = (key, value.value)
                seen_keyword = True
            elif tok.kind == "string":
                if seen_keyword:
                    self._error(
                        tok,
                        "ArityMismatch",
                        "positional argument after keyword argument",
                    )
                    return None
                positional.append(self.next().value)
            else:
                self._error(
                    tok,
                    "NonLiteralArgument",
                    f"arguments must be string literals, got {tok.text!r}",
                )
                return None
            # separator
            tok = self.peek()
            if tok.kind == "comma":
                self.next()
            elif tok.kind != "rparen":
                self._error(tok, "BadSyntax", "expected ',' or ')' in argument list")
                return None

    def _bind(
        self,
        method_tok: _Token,
        positional: list[str],
        keywords: dict[str, tuple[_Token, str]],
        span: Span,
        first: _Token,
    ) -> CodeAction | None:
        params, aliases = _METHOD_PARAMS[method_tok.text]
        bound: dict[str, str] = {}
        for i, value in enumerate(positional):
            if i >= len(params):
                self._error(
                    method_tok,
                    "ArityMismatch",
                    f"{method_tok.text} takes {len(params)} arguments",
                )
                return None
            bound[params[i]] = value
        for key, (key_tok, value) in keywords.items():
            canonical = aliases.get(key)
            if canonical is None:
                self._error(key_tok, "UnknownKeyword", f"unknown keyword {key!r}")
                return None
            if canonical in bound:
                self._error(
                    key_tok, "ArityMismatch", f"parameter {canonical!r} given twice"
                )
                return None
            bound[canonical] = value
        missing = [p for p in params if p not in bound]
        if missing:
            self._error(
                method_tok,
                "ArityMismatch",
                f"{method_tok.text} missing argument {missing[0]!r}",
            )
            return None
        if method_tok.text == "add_node":
            return AddNode(bound["name"], bound["content"], span, first.line, first.col)
        return AddEdge(bound["start_node"], bound["end_node"], span, first.line, first.col)


def parse(code: str) -> ParseOutcome:
    """Parse a code block into actions; total for any input string."""
    return _Parser(code).parse()


# -- code extraction -------------------------------------------------------


def extract_code(message: str) -> str | None:
    """Contents of the last fenced code block in a model reply.

    Without a fence the whole message counts only if it already parses
    cleanly; plain prose yields None.
    """
    lines = message.split("\n")
    fences = [i for i, ln in enumerate(lines) if ln.lstrip().startswith("```")]
    if fences:
        blocks = []
        open_at: int | None = None
        for i in fences:
            if open_at is None:
                open_at = i
            else:
                blocks.append((open_at, i))
                open_at = None
        if open_at is not None:  # model got cut off mid-block
            blocks.append((open_at, len(lines)))
        start, end = blocks[-1]
        return "\n".join(lines[start + 1 : end])
    return message if parse(message).ok else None


def render_actions(actions: list[CodeAction]) -> str:
    """Pretty-print actions back into canonical statement form."""
    lines = []
    for action in actions:
        if isinstance(action, AddNode):
            lines.append(
                f"graph.add_node(name={_quote(action.name)}, content={_quote(action.content)})"
            )
        else:
            lines.append(
                f"graph.add_edge(start_node={_quote(action.src)}, end_node={_quote(action.dst)})"
            )
    return "\n".join(lines)


def _quote(value: str) -> str:
    escaped = (
        value.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\t", "\\t")
    )
    return f'"{escaped}"'


# -- application -----------------------------------------------------------


@dataclass
class ApplyOutcome:
    """Result of applying a parsed action batch to a graph."""

    new_nodes: list[str]  # names of newly added Search nodes, in order
    applied: list[CodeAction]  # every action that changed the graph, in order
    diagnostics: list[Diagnostic]
    aborted: bool = False


def apply_actions(
    g: ThoughtGraph, actions: list[CodeAction], max_nodes: int | None = None
) -> ApplyOutcome:
    """Apply actions in order.  Individual graph rejections downgrade to
    warnings and the action is skipped, except a cycle, which aborts the
    rest of the batch (earlier actions stay applied)."""
    new_nodes: list[str] = []
    applied: list[CodeAction] = []
    diagnostics: list[Diagnostic] = []
    for action in actions:
        try:
            if isinstance(action, AddNode):
                if max_nodes is not None and len(g) >= max_nodes:
                    diagnostics.append(_apply_diag(
                        action, "warning", "NodeBudgetExhausted",
                        f"node budget ({max_nodes}) reached; {action.name!r} skipped",
                    ))
                    continue
                node = g.add_node(action.name, action.content)
                applied.append(action)
                if node.kind is NodeKind.SEARCH:
                    new_nodes.append(node.name)
            else:
                if g.add_edge(action.src, action.dst):  # False = already present
                    applied.append(action)
        except CycleCreatedError as exc:
            diagnostics.append(_apply_diag(action, "error", exc.code, str(exc)))
            return ApplyOutcome(new_nodes, applied, diagnostics, aborted=True)
        except GraphError as exc:
            diagnostics.append(_apply_diag(action, "warning", exc.code, str(exc)))
    return ApplyOutcome(new_nodes, applied, diagnostics)


def _apply_diag(action: CodeAction, severity: str, code: str, message: str) -> Diagnostic:
    return Diagnostic(severity, action.span, action.line, action.col, code, message)
