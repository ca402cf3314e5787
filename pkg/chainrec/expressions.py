"""
Expression language for user-supplied maps.

A program is one expression per output coordinate, separated by ``;``::

    program := expr (';' expr)*
    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | primary
    primary := NUMBER | VARIABLE | FUNC '(' expr ')' | '(' expr ')'

Variables are ``x1`` .. ``xd`` for a d-dimensional domain and the only
functions are ``sin`` and ``cos``. Positions in errors are 1-based character
offsets; the end of input is ``len(text) + 1``.

Parsing produces an immutable tree that evaluates on whole ``(n, d)``
coordinate arrays at once, and ``format_program`` prints a tree back to text
that parses to the same tree.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

FUNCTIONS: Dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": np.sin,
    "cos": np.cos,
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/();])
    """,
    re.VERBOSE,
)
_VARIABLE_RE = re.compile(r"x([1-9][0-9]*)")


class ParseError(ValueError):
    """Malformed map text; ``position`` is 1-based."""

    def __init__(self, message: str, position: int, expected: Optional[str] = None):
        self.message = message
        self.position = position
        self.expected = expected
        detail = f"{message} at position {position}"
        if expected:
            detail += f" (expected {expected})"
        super().__init__(detail)


# ---- Tree ----


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # zero-based axis


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Num, Var, Neg, Call, BinOp]

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}
_UNARY_PRECEDENCE = 3
_ATOM_PRECEDENCE = 4


@dataclass(frozen=True)
class Program:
    """One expression per output coordinate of a ``dim``-dimensional map."""

    components: Tuple[Expr, ...]
    dim: int

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate on ``(n, dim)`` coordinates; returns ``(n, dim)``."""
        pts = np.asarray(points, dtype=float)
        with np.errstate(all="ignore"):
            columns = [
                np.broadcast_to(evaluate(expr, pts), pts.shape[:1])
                for expr in self.components
            ]
        return np.stack(columns, axis=-1)

    def __str__(self) -> str:
        return format_program(self)


def evaluate(expr: Expr, points: np.ndarray) -> np.ndarray:
    """Vectorised evaluation of one expression on ``(n, dim)`` coordinates."""
    if isinstance(expr, Num):
        return np.full(points.shape[0], expr.value)
    if isinstance(expr, Var):
        return points[:, expr.index]
    if isinstance(expr, Neg):
        return -evaluate(expr.operand, points)
    if isinstance(expr, Call):
        return FUNCTIONS[expr.func](evaluate(expr.arg, points))
    left = evaluate(expr.left, points)
    right = evaluate(expr.right, points)
    if expr.op == "+":
        return left + right
    if expr.op == "-":
        return left - right
    if expr.op == "*":
        return left * right
    return left / right


def constant_value(expr: Expr) -> Optional[float]:
    """Value of a variable-free expression, ``None`` if it uses a variable."""
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        return None
    if isinstance(expr, Neg):
        inner = constant_value(expr.operand)
        return None if inner is None else -inner
    if isinstance(expr, Call):
        inner = constant_value(expr.arg)
        return None if inner is None else float(FUNCTIONS[expr.func](inner))
    left = constant_value(expr.left)
    right = constant_value(expr.right)
    if left is None or right is None:
        return None
    with np.errstate(all="ignore"):
        return float(evaluate(expr, np.zeros((1, 0)))[0])


# ---- Tokenizer ----


@dataclass(frozen=True)
class Token:
    kind: str  # number | ident | op | eof
    text: str
    position: int


def tokenize(text: str) -> List[Token]:
    tokens: List[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos + 1)
        kind = m.lastgroup or ""
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos + 1))
        pos = m.end()
    tokens.append(Token("eof", "", len(text) + 1))
    return tokens


# ---- Parser ----


class _Parser:
    def __init__(self, text: str, dim: int):
        self.text = text
        self.dim = dim
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.current
        if tok.kind != "op" or tok.text != text:
            raise ParseError(_describe(tok), tok.position, f"'{text}'")
        return self.advance()

    def program(self) -> Program:
        components = [self.expr()]
        starts = [1]
        while self.current.kind == "op" and self.current.text == ";":
            self.advance()
            starts.append(self.current.position)
            components.append(self.expr())
        tok = self.current
        if tok.kind != "eof":
            raise ParseError(_describe(tok), tok.position, "operator or ';'")
        if len(components) > self.dim:
            raise ParseError(
                f"{len(components)} expressions for a {self.dim}-dimensional domain",
                starts[self.dim],
                f"{self.dim} expressions",
            )
        if len(components) < self.dim:
            raise ParseError(
                f"{len(components)} expressions for a {self.dim}-dimensional domain",
                tok.position,
                f"';' and {self.dim - len(components)} more expression(s)",
            )
        return Program(components=tuple(components), dim=self.dim)

    def expr(self) -> Expr:
        node = self.term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.current.kind == "op" and self.current.text in "*/":
            op = self.advance().text
            divisor_at = self.current.position
            right = self.unary()
            if op == "/" and constant_value(right) == 0.0:
                raise ParseError("division by constant zero", divisor_at)
            node = BinOp(op, node, right)
        return node

    def unary(self) -> Expr:
        if self.current.kind == "op" and self.current.text == "-":
            self.advance()
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Expr:
        tok = self.current
        if tok.kind == "number":
            self.advance()
            value = float(tok.text)
            if not np.isfinite(value):
                raise ParseError(f"number {tok.text} out of range", tok.position)
            return Num(value)
        if tok.kind == "ident":
            self.advance()
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            m = _VARIABLE_RE.fullmatch(tok.text)
            if m and 1 <= int(m.group(1)) <= self.dim:
                return Var(int(m.group(1)) - 1)
            raise ParseError(
                f"unknown identifier {tok.text!r}",
                tok.position,
                f"x1..x{self.dim}, sin or cos",
            )
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError(_describe(tok), tok.position, "operand")


def _describe(tok: Token) -> str:
    return "unexpected end of input" if tok.kind == "eof" else f"unexpected {tok.text!r}"


def parse_program(text: str, dim: int) -> Program:
    """Parse map text for a ``dim``-dimensional domain; raises ``ParseError``."""
    return _Parser(text, dim).program()


# ---- Pretty-printer ----


def _precedence(expr: Expr) -> int:
    if isinstance(expr, BinOp):
        return _PRECEDENCE[expr.op]
    if isinstance(expr, Neg):
        return _UNARY_PRECEDENCE
    return _ATOM_PRECEDENCE


def format_expr(expr: Expr) -> str:
    """Text that parses back to exactly ``expr``."""
    if isinstance(expr, Num):
        return repr(expr.value)
    if isinstance(expr, Var):
        return f"x{expr.index + 1}"
    if isinstance(expr, Call):
        return f"{expr.func}({format_expr(expr.arg)})"
    if isinstance(expr, Neg):
        inner = format_expr(expr.operand)
        if _precedence(expr.operand) < _UNARY_PRECEDENCE:
            inner = f"({inner})"
        return f"-{inner}"
    prec = _PRECEDENCE[expr.op]
    left = format_expr(expr.left)
    if _precedence(expr.left) < prec:
        left = f"({left})"
    right = format_expr(expr.right)
    # left-associative: an equal-precedence right operand keeps its parens
    if _precedence(expr.right) <= prec:
        right = f"({right})"
    return f"{left} {expr.op} {right}"


def format_program(program: Program) -> str:
    return "; ".join(format_expr(e) for e in program.components)
