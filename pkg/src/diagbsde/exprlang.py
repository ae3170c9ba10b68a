"""Small arithmetic expression language for generator components and terminal data.

Expressions are parsed once into an immutable tree and evaluated many times,
usually on whole path ensembles at once (every variable may be a numpy array).

Grammar, lowest to highest precedence::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := NUMBER | NAME | NAME '(' args ')' | 'z' '[' INT ']' '[' INT ']'
             | '(' expr ')'

Functions: ``abs sgn sin cos exp ln sqrt`` (one argument), ``pow min max``
(two arguments) and the norm intrinsics ``norm(y)``, ``norm(z)``,
``norm(zrow(i))`` and ``norm(b)``.

Variables: ``t``, ``y1..yn``, ``z[i][j]`` (1-based), ``b1..bd`` and ``r`` when
the context enables them, ``pi``, and any declared constant.

``sgn(0)`` is **-1**: ``sgn(x) = 1`` if ``x > 0`` else ``-1``.  Most numeric
libraries return 0 at the origin; this one does not.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

__all__ = [
    "Context",
    "Expr",
    "Num",
    "Var",
    "Unary",
    "Binary",
    "Norm",
    "ExprSyntaxError",
    "ExprDomainError",
    "parse",
    "evaluate",
    "pretty",
    "free_variables",
]

UNARY_FUNCS = ("abs", "sgn", "sin", "cos", "exp", "ln", "sqrt")
BINARY_FUNCS = ("pow", "min", "max")


class ExprSyntaxError(ValueError):
    """Raised for malformed source, unknown names, arity or index errors."""

    def __init__(self, message: str, pos: int | None = None, source: str | None = None):
        self.pos = pos
        self.source = source
        if pos is not None:
            message = f"{message} (at position {pos})"
        super().__init__(message)


class ExprDomainError(ArithmeticError):
    """Raised when an evaluation leaves the domain of an operation."""

    def __init__(self, message: str, subexpr: str):
        self.subexpr = subexpr
        super().__init__(f"{message} in '{subexpr}'")


@dataclass(frozen=True)
class Context:
    """Names that are legal inside an expression.

    ``brownian`` enables ``b1..bd`` and ``norm(b)``; ``radius`` enables the
    single variable ``r`` used for growth moduli.
    """

    n: int = 1
    d: int = 1
    constants: Mapping[str, float] = field(default_factory=dict)
    state: bool = True
    brownian: bool = False
    radius: bool = False


# ---------------------------------------------------------------------------
# tree


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or one of UNARY_FUNCS
    arg: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str  # '+', '-', '*', '/', 'pow', 'min', 'max'
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Norm:
    kind: str  # 'y', 'z', 'zrow', 'b'
    index: int = 0  # 1-based row for 'zrow'


Expr = Union[Num, Var, Unary, Binary, Norm]


# ---------------------------------------------------------------------------
# tokenizer

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),\[\]])"
    r")"
)


def _tokenize(source: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    stripped_end = len(source.rstrip())
    while pos < stripped_end:
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            pos += len(source[pos:]) - len(source[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos, source)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, ctx: Context):
        self.source = source
        self.ctx = ctx
        self.tokens = _tokenize(source)
        self.i = 0

    # helpers
    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.i]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str) -> tuple[str, str, int]:
        tok = self.peek()
        if tok[1] != value or tok[0] == "end":
            got = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ExprSyntaxError(f"expected {value!r}, got {got}", tok[2], self.source)
        return self.advance()

    def error(self, message: str, pos: int) -> ExprSyntaxError:
        return ExprSyntaxError(message, pos, self.source)

    # grammar
    def parse(self) -> Expr:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise self.error(f"unexpected token {tok[1]!r}", tok[2])
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Unary("neg", self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return Binary("pow", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            self.advance()
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                return self.call(text, pos)
            if text == "z" and nxt[0] == "op" and nxt[1] == "[":
                return self.z_entry(pos)
            return self.variable(text, pos)
        if kind == "end":
            raise self.error("unexpected end of input", pos)
        raise self.error(f"unexpected token {text!r}", pos)

    def index(self) -> tuple[int, int]:
        self.expect("[")
        kind, text, pos = self.advance()
        if kind != "num" or not text.isdigit():
            raise self.error("index must be a positive integer", pos)
        self.expect("]")
        return int(text), pos

    def z_entry(self, pos: int) -> Expr:
        if not self.ctx.state:
            raise self.error("unknown identifier 'z'", pos)
        i, ipos = self.index()
        j, jpos = self.index()
        if not 1 <= i <= self.ctx.n:
            raise self.error(f"row index {i} out of range 1..{self.ctx.n}", ipos)
        if not 1 <= j <= self.ctx.d:
            raise self.error(f"column index {j} out of range 1..{self.ctx.d}", jpos)
        return Var(f"z[{i}][{j}]")

    def call(self, name: str, pos: int) -> Expr:
        self.expect("(")
        if name == "norm":
            node = self.norm_arg(pos)
            self.expect(")")
            return node
        args = [self.expr()]
        while self.peek()[0] == "op" and self.peek()[1] == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        if name in UNARY_FUNCS:
            if len(args) != 1:
                raise self.error(f"{name}() takes 1 argument, got {len(args)}", pos)
            return Unary(name, args[0])
        if name in BINARY_FUNCS:
            if len(args) != 2:
                raise self.error(f"{name}() takes 2 arguments, got {len(args)}", pos)
            return Binary(name, args[0], args[1])
        if name == "zrow":
            raise self.error("zrow() is only valid inside norm()", pos)
        raise self.error(f"unknown function {name!r}", pos)

    def norm_arg(self, pos: int) -> Expr:
        kind, text, apos = self.advance()
        if kind != "name":
            raise self.error("norm() expects y, z, b or zrow(i)", apos)
        if text == "zrow":
            if not self.ctx.state:
                raise self.error("unknown identifier 'zrow'", apos)
            self.expect("(")
            _, text_i, ipos = self.advance()
            if not text_i.isdigit():
                raise self.error("zrow index must be a positive integer", ipos)
            self.expect(")")
            i = int(text_i)
            if not 1 <= i <= self.ctx.n:
                raise self.error(f"zrow index {i} out of range 1..{self.ctx.n}", ipos)
            return Norm("zrow", i)
        if text in ("y", "z") and self.ctx.state:
            return Norm(text)
        if text == "b" and self.ctx.brownian:
            return Norm("b")
        raise self.error(f"norm() of unknown vector {text!r}", apos)

    def variable(self, name: str, pos: int) -> Expr:
        if _is_legal(name, self.ctx):
            return Var(name)
        raise self.error(f"unknown identifier {name!r}", pos)


def _indexed(name: str, prefix: str) -> int | None:
    m = re.fullmatch(prefix + r"([1-9]\d*)", name)
    return int(m.group(1)) if m else None


def _is_legal(name: str, ctx: Context) -> bool:
    if name in ctx.constants or name == "pi":
        return True
    if ctx.state:
        if name == "t":
            return True
        i = _indexed(name, "y")
        if i is not None and i <= ctx.n:
            return True
    if ctx.brownian:
        if name == "t":
            return True
        j = _indexed(name, "b")
        if j is not None and j <= ctx.d:
            return True
    if ctx.radius and name == "r":
        return True
    return False


def parse(source: str, ctx: Context | None = None) -> Expr:
    """Parse ``source`` into an expression tree legal in ``ctx``."""
    if ctx is None:
        ctx = Context()
    if not isinstance(source, str) or not source.strip():
        raise ExprSyntaxError("empty expression", 0, source)
    return _Parser(source, ctx).parse()


# ---------------------------------------------------------------------------
# printing

_LEVEL = {"+": 1, "-": 1, "*": 2, "/": 2}


def _level(node: Expr) -> int:
    if isinstance(node, Binary):
        if node.op in _LEVEL:
            return _LEVEL[node.op]
        if node.op == "pow":
            return 4
        return 5  # min/max print as calls
    if isinstance(node, Unary):
        return 3 if node.op == "neg" else 5
    return 5


def pretty(node: Expr) -> str:
    """Render ``node`` as source text that parses back to the same tree."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Norm):
        if node.kind == "zrow":
            return f"norm(zrow({node.index}))"
        return f"norm({node.kind})"
    if isinstance(node, Unary):
        if node.op == "neg":
            inner = pretty(node.arg)
            if _level(node.arg) < 3 or (isinstance(node.arg, Num) and node.arg.value < 0):
                inner = f"({inner})"
            return "-" + inner
        return f"{node.op}({pretty(node.arg)})"
    if isinstance(node, Binary):
        if node.op in ("min", "max"):
            return f"{node.op}({pretty(node.left)}, {pretty(node.right)})"
        left, right = pretty(node.left), pretty(node.right)
        if node.op == "pow":
            if _level(node.left) <= 4 or _negative_literal(node.left):
                left = f"({left})"
            if _level(node.right) < 3:
                right = f"({right})"
            return f"{left}^{right}"
        p = _LEVEL[node.op]
        if _level(node.left) < p:
            left = f"({left})"
        if _level(node.right) <= p:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def _negative_literal(node: Expr) -> bool:
    return isinstance(node, Num) and node.value < 0


def free_variables(node: Expr) -> set[str]:
    """Variable names (and norm intrinsics) used by ``node``."""
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Norm):
        return {pretty(node)}
    if isinstance(node, Unary):
        return free_variables(node.arg)
    if isinstance(node, Binary):
        return free_variables(node.left) | free_variables(node.right)
    return set()


# ---------------------------------------------------------------------------
# evaluation


def _lookup(name: str, env: Mapping):
    if name in env:
        return env[name]
    consts = env.get("constants") or {}
    if name in consts:
        return consts[name]
    if name == "pi":
        return np.pi
    if name.startswith("z["):
        i, j = (int(s) for s in re.findall(r"\d+", name))
        return np.asarray(env["z"])[..., i - 1, j - 1]
    if name.startswith("y") and name[1:].isdigit():
        return np.asarray(env["y"])[..., int(name[1:]) - 1]
    if name.startswith("b") and name[1:].isdigit():
        return np.asarray(env["b"])[..., int(name[1:]) - 1]
    raise KeyError(f"no value for variable {name!r}")


def _norm(node: Norm, env: Mapping):
    if node.kind == "zrow":
        row = np.asarray(env["z"])[..., node.index - 1, :]
        return np.sqrt(np.sum(row * row, axis=-1))
    if node.kind == "z":
        z = np.asarray(env["z"])
        return np.sqrt(np.sum(z * z, axis=(-2, -1)))
    v = np.asarray(env[node.kind])
    return np.sqrt(np.sum(v * v, axis=-1))


def _any(mask) -> bool:
    return bool(np.any(mask))


def evaluate(node: Expr, env: Mapping):
    """Evaluate ``node``.

    ``env`` maps ``t``, ``r`` to scalars or arrays, ``y`` to ``(..., n)``,
    ``z`` to ``(..., n, d)``, ``b`` to ``(..., d)`` and ``constants`` to a
    name -> value mapping.  Arrays broadcast against each other; the result has
    the broadcast leading shape.
    """
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return _lookup(node.name, env)
    if isinstance(node, Norm):
        return _norm(node, env)
    if isinstance(node, Unary):
        a = evaluate(node.arg, env)
        op = node.op
        if op == "neg":
            return -a
        if op == "abs":
            return np.abs(a)
        if op == "sgn":
            return np.where(np.asarray(a) > 0, 1.0, -1.0)
        if op == "sin":
            return np.sin(a)
        if op == "cos":
            return np.cos(a)
        if op == "exp":
            with np.errstate(over="ignore"):
                return np.exp(a)
        if op == "ln":
            if _any(np.asarray(a) <= 0):
                raise ExprDomainError("logarithm of a non-positive value", pretty(node))
            return np.log(a)
        if op == "sqrt":
            if _any(np.asarray(a) < 0):
                raise ExprDomainError("square root of a negative value", pretty(node))
            return np.sqrt(a)
        raise ValueError(f"unknown unary op {op!r}")
    if isinstance(node, Binary):
        a = evaluate(node.left, env)
        b = evaluate(node.right, env)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if _any(np.asarray(b) == 0):
                raise ExprDomainError("division by zero", pretty(node))
            return a / b
        if op == "min":
            return np.minimum(a, b)
        if op == "max":
            return np.maximum(a, b)
        if op == "pow":
            aa, bb = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
            if _any((aa == 0) & (bb < 0)):
                raise ExprDomainError("zero raised to a negative power", pretty(node))
            if _any((aa < 0) & (bb != np.round(bb))):
                raise ExprDomainError("negative base with non-integer exponent", pretty(node))
            with np.errstate(over="ignore"):
                out = np.power(aa, bb)
            return out if out.ndim else float(out)
        raise ValueError(f"unknown binary op {op!r}")
    raise TypeError(f"not an expression node: {node!r}")
