"""Small S-expression reader shared by the problem parser and the SMT layer.

Atoms are returned as plain strings (quoted symbols ``|...|`` keep their
bars stripped); lists are Python lists.  A located variant attaches
(line, column) for parser diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

SExpr = Union[str, list]


class SExprError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}" if line else message)
        self.line = line
        self.col = col


@dataclass
class Located:
    value: Union[str, list]
    line: int
    col: int

    def is_atom(self) -> bool:
        return isinstance(self.value, str)


def tokenize(text: str) -> Iterator[tuple[str, int, int]]:
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in "()":
            yield ch, line, col
            i += 1
            col += 1
            continue
        if ch == "|":
            j = text.find("|", i + 1)
            if j < 0:
                raise SExprError("unterminated |symbol|", line, col)
            yield text[i + 1 : j], line, col
            col += j - i + 1
            i = j + 1
            continue
        if ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 1
            if j >= n:
                raise SExprError("unterminated string", line, col)
            yield text[i : j + 1], line, col
            col += j - i + 1
            i = j + 1
            continue
        j = i
        while j < n and text[j] not in ' \t\r\n();"|':
            j += 1
        yield text[i:j], line, col
        col += j - i
        i = j
    yield "", line, col  # end marker


def read_all(text: str) -> list[SExpr]:
    """Parse every toplevel expression as plain nested lists/strings."""
    return [node_to_plain(n) for n in read_all_located(text)]


def read_all_located(text: str) -> list[Located]:
    toks = tokenize(text)
    out = []
    stack: list[Located] = []
    for tok, line, col in toks:
        if tok == "":
            break
        if tok == "(":
            node = Located([], line, col)
            stack.append(node)
        elif tok == ")":
            if not stack:
                raise SExprError("unbalanced ')'", line, col)
            node = stack.pop()
            if stack:
                stack[-1].value.append(node)
            else:
                out.append(node)
        else:
            node = Located(tok, line, col)
            if stack:
                stack[-1].value.append(node)
            else:
                out.append(node)
    if stack:
        raise SExprError("unbalanced '('", stack[-1].line, stack[-1].col)
    return out


def node_to_plain(node: Located) -> SExpr:
    if isinstance(node.value, str):
        return node.value
    return [node_to_plain(x) for x in node.value]


def needs_quoting(symbol: str) -> bool:
    if not symbol:
        return True
    ok = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789~!@$%^&*_-+=<>.?/")
    return any(c not in ok for c in symbol) or symbol[0].isdigit()


def quote_symbol(symbol: str) -> str:
    return f"|{symbol}|" if needs_quoting(symbol) else symbol


def render(e: SExpr) -> str:
    if isinstance(e, str):
        return e
    return "(" + " ".join(render(x) for x in e) + ")"
