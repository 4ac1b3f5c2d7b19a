"""Tiny expression language for scenario potentials.

Grammar (standard precedence, ^ binds tightest and associates right):

    expr   := term (('+'|'-') term)*
    term   := unary (('*'|'/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := number | ident | ident '(' args ')' | '(' expr ')'

Variables x1..xn, functions abs, exp, sin, cos, min, max, and
dist(c1, ..., cn) = euclidean distance to the fixed point (c1, ..., cn).
Evaluation is vectorized over coordinate arrays and total on the box.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

import numpy as np


class ExprError(ValueError):
    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} at offset {offset}"
        super().__init__(message)


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)

_FUNCTIONS = {
    "abs": (1, np.abs),
    "exp": (1, np.exp),
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "min": (None, None),  # variadic, handled specially
    "max": (None, None),
    "dist": (None, None),
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0-based axis


@dataclass(frozen=True)
class Unary:
    op: str
    arg: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass
class PotentialExpr:
    """Parsed expression with its source text and dimension bound."""

    root: object
    text: str
    max_var: int  # highest axis index referenced + 1

    def __call__(self, *coords):
        return evaluate(self.root, coords)

    def to_text(self) -> str:
        return unparse(self.root)


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.tokens = []
        self._scan()
        self.i = 0

    def _scan(self):
        pos = 0
        while pos < len(self.text):
            m = _TOKEN_RE.match(self.text, pos)
            if not m or m.end() == pos:
                stripped = self.text[pos:].lstrip()
                if not stripped:
                    break
                off = len(self.text) - len(stripped)
                raise ExprError(f"unexpected character {stripped[0]!r}", off)
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.text))

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok


class _Parser:
    def __init__(self, text: str):
        self.toks = _Tokenizer(text)
        self.max_var = 0

    def parse(self):
        node = self.expr()
        kind, val, off = self.toks.peek()
        if kind is not None:
            raise ExprError(f"unexpected token {val!r}", off)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, off = self.toks.peek()
            if kind == "op" and val in "+-":
                self.toks.next()
                node = Binary(val, node, self.term())
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, val, off = self.toks.peek()
            if kind == "op" and val in "*/":
                self.toks.next()
                node = Binary(val, node, self.unary())
            else:
                return node

    def unary(self):
        kind, val, off = self.toks.peek()
        if kind == "op" and val == "-":
            self.toks.next()
            return Unary("-", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, off = self.toks.peek()
        if kind == "op" and val == "^":
            self.toks.next()
            return Binary("^", base, self.unary())  # right-associative
        return base

    def atom(self):
        kind, val, off = self.toks.next()
        if kind == "number":
            return Num(float(val))
        if kind == "ident":
            m = re.fullmatch(r"x(\d+)", val)
            nkind, nval, noff = self.toks.peek()
            if nkind == "op" and nval == "(":
                if val not in _FUNCTIONS:
                    raise ExprError(f"unknown function {val!r}", off)
                self.toks.next()
                args = self.args()
                arity = _FUNCTIONS[val][0]
                if arity is not None and len(args) != arity:
                    raise ExprError(
                        f"function {val!r} takes {arity} argument(s), got {len(args)}", off
                    )
                if val in ("min", "max") and len(args) < 2:
                    raise ExprError(f"function {val!r} needs at least 2 arguments", off)
                if val == "dist" and len(args) < 1:
                    raise ExprError("dist needs the reference point coordinates", off)
                return Call(val, tuple(args))
            if m:
                idx = int(m.group(1))
                if idx < 1:
                    raise ExprError(f"bad variable {val!r}", off)
                self.max_var = max(self.max_var, idx)
                return Var(idx - 1)
            raise ExprError(f"unknown identifier {val!r}", off)
        if kind == "op" and val == "(":
            node = self.expr()
            kind2, val2, off2 = self.toks.next()
            if not (kind2 == "op" and val2 == ")"):
                raise ExprError("expected ')'", off2)
            return node
        raise ExprError("syntax error", off)

    def args(self):
        args = [self.expr()]
        while True:
            kind, val, off = self.toks.next()
            if kind == "op" and val == ",":
                args.append(self.expr())
            elif kind == "op" and val == ")":
                return args
            else:
                raise ExprError("expected ',' or ')'", off)


def parse_expr(text: str) -> PotentialExpr:
    parser = _Parser(text)
    root = parser.parse()
    return PotentialExpr(root=root, text=text, max_var=parser.max_var)


def evaluate(node, coords):
    if isinstance(node, Num):
        return node.value * np.ones_like(coords[0])
    if isinstance(node, Var):
        if node.index >= len(coords):
            raise ExprError(f"variable x{node.index + 1} exceeds dimension {len(coords)}")
        return coords[node.index]
    if isinstance(node, Unary):
        return -evaluate(node.arg, coords)
    if isinstance(node, Binary):
        a = evaluate(node.left, coords)
        b = evaluate(node.right, coords)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return a / b
        if node.op == "^":
            return a**b
        raise ExprError(f"unknown operator {node.op!r}")
    if isinstance(node, Call):
        if node.name == "dist":
            refs = [evaluate(a, coords) for a in node.args]
            if len(refs) != len(coords):
                raise ExprError(
                    f"dist takes {len(coords)} coordinates in dimension {len(coords)}"
                )
            return np.sqrt(sum((c - r) ** 2 for c, r in zip(coords, refs)))
        if node.name == "min":
            vals = [evaluate(a, coords) for a in node.args]
            out = vals[0]
            for v in vals[1:]:
                out = np.minimum(out, v)
            return out
        if node.name == "max":
            vals = [evaluate(a, coords) for a in node.args]
            out = vals[0]
            for v in vals[1:]:
                out = np.maximum(out, v)
            return out
        arity, fn = _FUNCTIONS[node.name]
        return fn(evaluate(node.args[0], coords))
    raise ExprError(f"unknown node {node!r}")


def unparse(node) -> str:
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Unary):
        return f"(-{unparse(node.arg)})"
    if isinstance(node, Binary):
        return f"({unparse(node.left)} {node.op} {unparse(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(unparse(a) for a in node.args)})"
    raise ExprError(f"unknown node {node!r}")
