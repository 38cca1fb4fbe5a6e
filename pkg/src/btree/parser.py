"""
BT-DSL reader.

Trees are s-expressions; see docs/bt_grammar.md. Node ids are assigned in
pre-order starting at 0, so a trace can be matched back to the source text.
"""
import math
from pathlib import Path
from typing import Iterator, List, NamedTuple, Union

from ..errors import TreeParseError
from .nodes import CONDITION_KINDS, TASK_ALIASES, TASK_KINDS, Condition, Node, Selector, Sequence, Task

_THRESHOLD_KINDS = ("dist-lt", "dist-gt")


class Token(NamedTuple):
    text: str
    line: int
    column: int


def tokenize(text: str) -> Iterator[Token]:
    line, column = 1, 1
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line, column = line + 1, 1
            i += 1
            continue
        if ch.isspace():
            i, column = i + 1, column + 1
            continue
        if ch == ";":
            while i < len(text) and text[i] != "\n":
                i += 1
            continue
        if ch in "()":
            yield Token(ch, line, column)
            i, column = i + 1, column + 1
            continue
        start, start_col = i, column
        while i < len(text) and not text[i].isspace() and text[i] not in "();":
            i, column = i + 1, column + 1
        yield Token(text[start:i], line, start_col)


# An s-expression: an atom token or a list with its opening paren.
class SExpr(NamedTuple):
    open: Token
    items: List[Union["SExpr", Token]]


def _read(tokens: List[Token]) -> SExpr:
    if not tokens:
        raise TreeParseError("empty tree source", 1, 1)
    pos = 0

    def read_one() -> Union[SExpr, Token]:
        nonlocal pos
        if pos >= len(tokens):
            last = tokens[-1]
            raise TreeParseError("unexpected end of input, missing ')'", last.line, last.column)
        tok = tokens[pos]
        pos += 1
        if tok.text == ")":
            raise TreeParseError("unexpected ')'", tok.line, tok.column)
        if tok.text != "(":
            return tok
        items = []
        while True:
            if pos >= len(tokens):
                raise TreeParseError("unclosed '('", tok.line, tok.column)
            if tokens[pos].text == ")":
                pos += 1
                return SExpr(tok, items)
            items.append(read_one())

    expr = read_one()
    if pos != len(tokens):
        extra = tokens[pos]
        raise TreeParseError(f"unexpected trailing input '{extra.text}'", extra.line, extra.column)
    if isinstance(expr, Token):
        raise TreeParseError(f"expected '(' but found '{expr.text}'", expr.line, expr.column)
    return expr


class _Builder:
    def __init__(self):
        self.next_id = 0

    def take_id(self) -> int:
        node_id = self.next_id
        self.next_id += 1
        return node_id

    def build(self, expr: Union[SExpr, Token]) -> Node:
        if isinstance(expr, Token):
            raise TreeParseError(f"expected a node but found '{expr.text}'", expr.line, expr.column)
        if not expr.items:
            raise TreeParseError("empty node '()'", expr.open.line, expr.open.column)
        head = expr.items[0]
        if isinstance(head, SExpr):
            raise TreeParseError("node kind must be a name", head.open.line, head.open.column)
        args = expr.items[1:]
        kind = head.text

        if kind in ("selector", "sequence"):
            if not args:
                raise TreeParseError(f"'{kind}' needs at least one child", head.line, head.column)
            node_id = self.take_id()
            children = tuple(self.build(a) for a in args)
            cls = Selector if kind == "selector" else Sequence
            return cls(node_id, children)
        if kind == "not":
            if len(args) != 1:
                raise TreeParseError("'not' takes exactly one condition", head.line, head.column)
            inner = args[0]
            node = self.build(inner)
            if not isinstance(node, Condition):
                where = inner.open if isinstance(inner, SExpr) else inner
                raise TreeParseError("'not' can only wrap a condition", where.line, where.column)
            return Condition(node.id, node.kind, node.threshold, not node.negate)
        if kind in CONDITION_KINDS:
            return self._condition(kind, head, args)
        if kind == "task":
            if len(args) != 1 or isinstance(args[0], SExpr):
                raise TreeParseError("'task' takes exactly one task name", head.line, head.column)
            name = TASK_ALIASES.get(args[0].text, args[0].text)
            if name not in TASK_KINDS:
                raise TreeParseError(
                    f"unknown task '{args[0].text}', expected one of {', '.join(TASK_KINDS)}",
                    args[0].line,
                    args[0].column,
                )
            return Task(self.take_id(), name)
        raise TreeParseError(f"unknown node kind '{kind}'", head.line, head.column)

    def _condition(self, kind: str, head: Token, args) -> Condition:
        if kind in _THRESHOLD_KINDS:
            if len(args) != 1 or isinstance(args[0], SExpr):
                raise TreeParseError(f"'{kind}' takes exactly one number", head.line, head.column)
            tok = args[0]
            try:
                threshold = float(tok.text)
            except ValueError:
                raise TreeParseError(f"malformed number '{tok.text}'", tok.line, tok.column) from None
            if not math.isfinite(threshold):
                raise TreeParseError(f"malformed number '{tok.text}'", tok.line, tok.column)
            return Condition(self.take_id(), kind, threshold)
        if args:
            first = args[0]
            where = first.open if isinstance(first, SExpr) else first
            raise TreeParseError(f"'{kind}' takes no arguments", where.line, where.column)
        return Condition(self.take_id(), kind)


def parse_tree(text: str) -> Node:
    """Parse BT-DSL source into a tree; errors carry line and column."""
    return _Builder().build(_read(list(tokenize(text))))


def load_tree(path: Union[str, Path]) -> Node:
    return parse_tree(Path(path).read_text(encoding="utf-8"))
