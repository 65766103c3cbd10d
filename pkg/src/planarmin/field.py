"""Planar vector fields: builtins and a small expression language.

Grammar (whitespace is insignificant)::

    expr   = term { ("+"|"-") term } ;
    term   = factor { ("*"|"/") factor } ;
    factor = base [ "^" number ] | "-" factor ;
    base   = number | "x" | "y" | ident | func "(" expr ")" | "(" expr ")" ;
    func   = "sin"|"cos"|"exp"|"tanh"|"sqrt"|"abs" ;

Identifiers other than x, y and the function names resolve against the
parameter map given to :func:`parse_field`.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field as dc_field
from typing import Callable, Mapping, Optional, Union

from .geom import PointLike, Vec2, as_vec

FUNCTIONS = ("sin", "cos", "exp", "tanh", "sqrt", "abs")
MAX_DEPTH = 64


class FieldError(ValueError):
    pass


class FieldParseError(FieldError):
    """Syntax, identifier or arity error at a character offset."""

    def __init__(self, message: str, pos: int, source: str = "", which: str = ""):
        self.pos = pos
        self.source = source
        self.which = which
        where = f"{which}: " if which else ""
        super().__init__(f"{where}{message} at offset {pos}")


class FieldDomainError(FieldError, ArithmeticError):
    """Evaluation left the domain of an operation (or produced inf/nan)."""


# -- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # "x" or "y"


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Param, Neg, BinOp, Call]

# -- tokenizer ---------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # num, ident, op, end
    text: str
    pos: int


def tokenize(src: str, which: str = "") -> list[Token]:
    out: list[Token] = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise FieldParseError(f"unexpected character {src[pos]!r}", pos, src, which)
        kind = m.lastgroup
        if kind != "ws":
            out.append(Token(kind, m.group(), pos))
        pos = m.end()
    out.append(Token("end", "", len(src)))
    return out


class _Parser:
    def __init__(self, src: str, params: Mapping[str, float], which: str):
        self.src = src
        self.params = params
        self.which = which
        self.toks = tokenize(src, which)
        self.i = 0
        self.depth = 0

    def error(self, msg: str, tok: Optional[Token] = None) -> FieldParseError:
        tok = tok or self.peek()
        return FieldParseError(msg, tok.pos, self.src, self.which)

    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.text != text or tok.kind != "op":
            found = "end of input" if tok.kind == "end" else repr(tok.text)
            raise self.error(f"expected {text!r}, found {found}")
        return self.next()

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise self.error(f"unexpected {tok.text!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.next().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.next().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        tok = self.peek()
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise self.error("expression nested too deeply")
        try:
            if tok.kind == "op" and tok.text == "-":
                self.next()
                return Neg(self.factor())
            return self.power()
        finally:
            self.depth -= 1

    def power(self) -> Node:
        node = self.base()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.next()
            exp_tok = self.peek()
            if exp_tok.kind != "num":
                raise self.error("exponent must be a number")
            self.next()
            node = BinOp("^", node, Num(float(exp_tok.text)))
        return node

    def base(self) -> Node:
        tok = self.next()
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if tok.kind == "ident":
            name = tok.text
            if name in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                if self.peek().kind == "op" and self.peek().text == ",":
                    raise self.error(f"{name}() takes exactly one argument")
                self.expect(")")
                return Call(name, arg)
            if self.peek().kind == "op" and self.peek().text == "(":
                raise self.error(f"unknown function {name!r}", tok)
            if name in ("x", "y"):
                return Var(name)
            if name in self.params:
                return Param(name)
            raise self.error(f"unknown identifier {name!r}", tok)
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        raise self.error(f"unexpected {found}", tok)


def parse_expr(src: str, params: Mapping[str, float] = (), which: str = "") -> Node:
    return _Parser(src, dict(params), which).parse()


def to_python(node: Node) -> str:
    """Python source for a node; every operation goes through ``math`` so
    domain violations raise instead of returning nan or complex values."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Param):
        return f"P[{node.name!r}]"
    if isinstance(node, Neg):
        return f"(-{to_python(node.arg)})"
    if isinstance(node, Call):
        fn = "fabs" if node.func == "abs" else node.func
        return f"math.{fn}({to_python(node.arg)})"
    if node.op == "^":
        return f"math.pow({to_python(node.left)}, {to_python(node.right)})"
    return f"({to_python(node.left)} {node.op} {to_python(node.right)})"


def _compile(ax: Node, ay: Node, params: Mapping[str, float]) -> Callable[[float, float], tuple[float, float]]:
    code = f"lambda x, y: ({to_python(ax)}, {to_python(ay)})"
    try:
        return eval(code, {"math": math, "P": dict(params), "__builtins__": {}})
    except (RecursionError, SyntaxError, MemoryError) as exc:
        raise FieldParseError(f"expression too complex ({type(exc).__name__})", 0) from None


# -- Field -------------------------------------------------------------------

@dataclass(frozen=True)
class Field:
    """An autonomous planar vector field (fx(x, y), fy(x, y))."""

    fx: str
    fy: str
    name: str = "custom"
    params: tuple[tuple[str, float], ...] = ()
    _fn: Callable[[float, float], tuple[float, float]] = dc_field(
        default=None, repr=False, compare=False)

    def __call__(self, x: float, y: float) -> tuple[float, float]:
        try:
            u, v = self._fn(x, y)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise FieldDomainError(f"{self.name}: {exc} at ({x!r}, {y!r})") from exc
        if not (math.isfinite(u) and math.isfinite(v)):
            raise FieldDomainError(f"{self.name}: non-finite value at ({x!r}, {y!r})")
        return u, v

    def eval(self, p: PointLike) -> Vec2:
        q = as_vec(p)
        return Vec2(*self(q.x, q.y))

    @property
    def param_map(self) -> dict[str, float]:
        return dict(self.params)

    def describe(self) -> dict:
        return {"name": self.name, "fx": self.fx, "fy": self.fy,
                "params": {k: v for k, v in self.params}}

    def fingerprint(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


def parse_field(src_x: str, src_y: str, params: Optional[Mapping[str, float]] = None,
                name: str = "custom") -> Field:
    params = {k: float(v) for k, v in (params or {}).items()}
    for k in params:
        if k in ("x", "y") or k in FUNCTIONS or not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", k):
            raise FieldError(f"invalid parameter name {k!r}")
    ax = parse_expr(src_x, params, "fx")
    ay = parse_expr(src_y, params, "fy")
    return Field(src_x, src_y, name, tuple(sorted(params.items())), _compile(ax, ay, params))


def evaluate(f: Field, p: PointLike) -> Vec2:
    return f.eval(p)


# Hand-written twins of the builtin sources; kept separate so parsing can be
# checked against them.
_BUILTINS: dict[str, tuple[str, str, dict[str, float], Callable]] = {
    "center": ("-y", "x", {}, lambda P: (lambda x, y: (-y, x))),
    "vdp": ("y", "mu*(1-x^2)*y - x", {"mu": 1.0},
            lambda P: (lambda x, y, mu=P["mu"]: (y, mu * (1.0 - x * x) * y - x))),
    "stable_focus": ("-x - y", "x - y", {}, lambda P: (lambda x, y: (-x - y, x - y))),
    "saddle": ("x", "-y", {}, lambda P: (lambda x, y: (x, -y))),
    "harmonic": ("y", "-x", {}, lambda P: (lambda x, y: (y, -x))),
}

BUILTIN_NAMES = tuple(_BUILTINS)


def builtin(name: str, **params: float) -> Field:
    try:
        sx, sy, defaults, make = _BUILTINS[name]
    except KeyError:
        raise FieldError(f"unknown builtin field {name!r}; choose from {', '.join(BUILTIN_NAMES)}") from None
    unknown = set(params) - set(defaults)
    if unknown:
        raise FieldError(f"builtin {name!r} has no parameter(s) {sorted(unknown)}")
    P = {**defaults, **{k: float(v) for k, v in params.items()}}
    return Field(sx, sy, name, tuple(sorted(P.items())), make(P))


def builtin_source(name: str) -> tuple[str, str, dict[str, float]]:
    sx, sy, defaults, _ = _BUILTINS[name]
    return sx, sy, dict(defaults)
