"""Arithmetic expressions over standardized features.

Grammar (whitespace is ignored)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | atom
    atom   := NUMBER | VAR | CONST | FUNC "(" expr ")" | "(" expr ")"
    VAR    := "x0" .. "x7"
    CONST  := "c" DIGITS          (bound from the formula file)
    FUNC   := abs | exp | log | sqrt | log1p

Binary operators are left associative. Evaluation is total: each operator
that can leave its domain is guarded (see :func:`eval_expr`).
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

N_FEATURES = 8
EPS = 1e-12
SENTINEL = 1e12
EXP_CLAMP = 700.0
FUNCTIONS = ("abs", "exp", "log", "sqrt", "log1p")


class ExprError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Num, Var, Const, Neg, Call, Bin]

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/(),])
""", re.VERBOSE)


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExprError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), _byte_offset(text, pos)))
        pos = m.end()
    tokens.append(("end", "", len(text.encode("utf-8"))))
    return tokens


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, max_depth: int, max_nodes: int):
        self.tokens = _tokenize(text)
        self.i = 0
        self.max_depth = max_depth
        self.max_nodes = max_nodes
        self.nodes = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprError(f"expected {value!r}, found {found}", off)

    def node(self, n: Node, depth: int) -> Node:
        self.nodes += 1
        if self.nodes > self.max_nodes:
            raise ExprError(f"expression exceeds {self.max_nodes} nodes")
        if depth > self.max_depth:
            raise ExprError(f"expression exceeds depth {self.max_depth}")
        return n

    def expr(self, depth: int) -> Node:
        left = self.term(depth + 1)
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            left = self.node(Bin(op, left, self.term(depth + 1)), depth)
        return left

    def term(self, depth: int) -> Node:
        left = self.unary(depth + 1)
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            left = self.node(Bin(op, left, self.unary(depth + 1)), depth)
        return left

    def unary(self, depth: int) -> Node:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return self.node(Neg(self.unary(depth + 1)), depth)
        return self.atom(depth)

    def atom(self, depth: int) -> Node:
        kind, text, off = self.take()
        if kind == "num":
            return self.node(Num(float(text)), depth)
        if kind == "name":
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr(depth + 1)
                if self.peek()[1] == ",":
                    raise ExprError(f"{text}() takes exactly 1 argument", self.peek()[2])
                self.expect(")")
                return self.node(Call(text, arg), depth)
            if self.peek()[1] == "(":
                raise ExprError(f"unknown function {text!r}", off)
            m = re.fullmatch(r"x(\d+)", text)
            if m and int(m.group(1)) < N_FEATURES and str(int(m.group(1))) == m.group(1):
                return self.node(Var(int(m.group(1))), depth)
            if re.fullmatch(r"c\d+", text):
                return self.node(Const(text), depth)
            raise ExprError(f"unknown identifier {text!r}", off)
        if text == "(":
            inner = self.expr(depth + 1)
            self.expect(")")
            return inner
        found = "end of input" if kind == "end" else repr(text)
        raise ExprError(f"unexpected {found}", off)


def parse_expr(text: str, max_depth: int = 64, max_nodes: int = 512) -> Node:
    p = _Parser(text, max_depth, max_nodes)
    tree = p.expr(0)
    kind, tok, off = p.peek()
    if kind != "end":
        raise ExprError(f"unexpected {tok!r}", off)
    return tree


# -- printing ----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _fmt_num(v: float) -> str:
    text = repr(float(v))
    if text in ("inf", "nan"):
        raise ExprError(f"non-finite literal {text}")
    return text


def to_text(node: Node) -> str:
    """Minimal-parenthesis rendering; ``parse_expr(to_text(t)) == t``."""
    return _show(node, 0)


def _show(node: Node, ctx: int) -> str:
    if isinstance(node, Num):
        out, prec = _fmt_num(node.value), 4
    elif isinstance(node, Var):
        out, prec = f"x{node.index}", 4
    elif isinstance(node, Const):
        out, prec = node.name, 4
    elif isinstance(node, Call):
        out, prec = f"{node.fn}({_show(node.arg, 0)})", 4
    elif isinstance(node, Neg):
        out, prec = "-" + _show(node.arg, 3), 3
    else:
        prec = _PREC[node.op]
        # left associative: a right operand of equal precedence needs parens
        out = f"{_show(node.left, prec)} {node.op} {_show(node.right, prec + 1)}"
    return f"({out})" if prec < ctx else out


def variables(node: Node) -> set[int]:
    if isinstance(node, Var):
        return {node.index}
    if isinstance(node, (Neg, Call)):
        return variables(node.arg)
    if isinstance(node, Bin):
        return variables(node.left) | variables(node.right)
    return set()


def constants(node: Node) -> set[str]:
    if isinstance(node, Const):
        return {node.name}
    if isinstance(node, (Neg, Call)):
        return constants(node.arg)
    if isinstance(node, Bin):
        return constants(node.left) | constants(node.right)
    return set()


# -- evaluation --------------------------------------------------------------

def guarded_div(num: float, den: float) -> float:
    if abs(den) < EPS:
        if num == 0:
            return 0.0
        return math.copysign(SENTINEL, num) * math.copysign(1.0, den)
    return num / den


def _apply(fn: str, u: float) -> float:
    if fn == "abs":
        return abs(u)
    if fn == "exp":
        return math.exp(min(u, EXP_CLAMP))
    if fn == "log":
        return math.log(abs(u) + EPS)
    if fn == "sqrt":
        return math.sqrt(abs(u))
    # log1p
    if u > -1.0:
        return math.log1p(u)
    return math.log(abs(1.0 + u) + EPS)


def eval_expr(node: Node, x: Sequence[float], consts: Mapping[str, float] | None = None) -> float:
    """Evaluate at standardized features ``x``.

    Guards: log(u) -> log(|u| + 1e-12); sqrt(u) -> sqrt(|u|); exp argument
    capped at 700; log1p(u) for u <= -1 -> log(|1 + u| + 1e-12); a / b with
    |b| < 1e-12 -> 0 if a == 0 else sign(a)*sign(b)*1e12.
    """
    consts = consts or {}
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return float(x[node.index])
    if isinstance(node, Const):
        try:
            return float(consts[node.name])
        except KeyError:
            raise ExprError(f"constant {node.name} is not bound") from None
    if isinstance(node, Neg):
        return -eval_expr(node.arg, x, consts)
    if isinstance(node, Call):
        return _apply(node.fn, eval_expr(node.arg, x, consts))
    a = eval_expr(node.left, x, consts)
    b = eval_expr(node.right, x, consts)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    return guarded_div(a, b)


BEAGLE_EXPR = (
    "c0*log(exp(x5)*log(sqrt(abs((x0 + c1)/(x5 - log1p(exp(0.5*x4))/(c2*x5 + c3)))) + 1)"
    "*(abs(x4 + x6 + c4) + 1)) + c5"
)
