"""Recursive-descent parser for the expression grammar.

    expr  := term (('+'|'-') term)*
    term  := unary (('*'|'/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?
    atom  := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'

A minus sign directly in front of a numeric literal (and not followed by
``^``) produces a negative constant rather than a negation node.
"""

from __future__ import annotations

import re
from typing import Sequence

from .expr import (
    ADD, DIV, FUNC, FUNCTIONS, MUL, NAMED_CONSTANTS, NEG, POW, SUB,
    Expr, ParseError, UnknownIdentifierError, const, raw, var,
)

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    data = text.encode("utf-8")
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            offset = len(text[:pos].encode("utf-8")) + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[pos:].lstrip()[:1]!r}", offset)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), len(text[:start].encode("utf-8"))))
        pos = m.end()
    tokens.append(("end", "", len(data)))
    return tokens


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.tokens = tokenize(text)
        self.i = 0
        self.index = {name: i for i, name in enumerate(names)}

    def peek(self, ahead: int = 0):
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, op: str):
        tok = self.take()
        if tok[0] != "op" or tok[1] != op:
            raise ParseError(f"expected {op!r}, found {tok[1] or 'end of input'!r}", tok[2])

    def is_op(self, *ops: str, ahead: int = 0) -> bool:
        tok = self.peek(ahead)
        return tok[0] == "op" and tok[1] in ops

    def expr(self) -> Expr:
        node = self.term()
        while self.is_op("+", "-"):
            op = self.take()[1]
            node = raw(ADD if op == "+" else SUB, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.is_op("*", "/"):
            op = self.take()[1]
            node = raw(MUL if op == "*" else DIV, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.is_op("-"):
            self.take()
            if self.peek()[0] == "num" and not self.is_op("^", ahead=1):
                return const(-float(self.take()[1]))
            return raw(NEG, self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.is_op("^"):
            self.take()
            return raw(POW, base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, text, offset = self.take()
        if kind == "num":
            return const(float(text))
        if kind == "ident":
            if self.is_op("("):
                if text not in FUNCTIONS:
                    raise UnknownIdentifierError(text, offset)
                self.take()
                arg = self.expr()
                self.expect(")")
                return raw(FUNC, arg, name=text)
            if text in self.index:
                return var(self.index[text])
            if text in NAMED_CONSTANTS:
                return const(NAMED_CONSTANTS[text])
            raise UnknownIdentifierError(text, offset)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError(f"unexpected {text or 'end of input'!r}", offset)


def parse(text: str, names: Sequence[str]) -> Expr:
    """Parse ``text`` over the ordered variable ``names``."""
    if len(set(names)) != len(names):
        raise ValueError("duplicate variable names")
    p = _Parser(text, names)
    node = p.expr()
    kind, tok, offset = p.peek()
    if kind != "end":
        raise ParseError(f"unexpected {tok!r}", offset)
    return node
