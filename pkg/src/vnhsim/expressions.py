"""Scalar expressions over a mechanical state, with exact first derivatives.

An expression is written over position variables ``q[i]``, velocity variables
``v[i]`` and named real parameters.  The grammar:

* decimal literals (``2``, ``0.5``, ``9.81``, ``1e-3``)
* ``q[i]`` / ``v[i]`` with a literal integer index below the declared dimension
* identifiers for parameters bound at evaluation time
* ``+  -  *  /  ^`` with the usual precedence, ``^`` binding tightest and
  right-associative, everything else left-associative, plus unary minus
* function calls ``sin  cos  exp  sqrt  abs``
* parentheses; whitespace is insignificant

``^`` only accepts an integer literal exponent, which keeps every expression
differentiable by forward-mode arithmetic without branching on run-time
exponents.

Evaluation returns the value together with all ``2n`` first partial
derivatives (n with respect to positions, then n with respect to velocities),
computed by dual numbers, so derivatives are exact to rounding.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import EvaluationError, ParseError

FUNCTIONS = ("sin", "cos", "exp", "sqrt", "abs")
_RESERVED = {"q", "v"} | set(FUNCTIONS)


class Expr:
    """Base class for parsed expression nodes."""

    def __str__(self) -> str:
        return format_expression(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Var(Expr):
    kind: str  # "q" or "v"
    index: int
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Param(Expr):
    name: str
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Neg(Expr):
    operand: Expr
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr
    offset: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True, eq=False)
class DualValue:
    """Value of an expression plus its gradient in (q, v)."""

    value: float
    partials: np.ndarray  # length 2n: d/dq[0..n) then d/dv[0..n)

    @property
    def dq(self) -> np.ndarray:
        n = self.partials.shape[0] // 2
        return self.partials[:n]

    @property
    def dv(self) -> np.ndarray:
        n = self.partials.shape[0] // 2
        return self.partials[n:]


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<symbol>[-+*/^()\[\]])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


class _Parser:
    """Recursive-descent parser for the grammar in the module docstring."""

    def __init__(self, source: str, dimension: int, parameters: frozenset[str]):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.dimension = dimension
        self.parameters = parameters

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.peek()
        if tok.kind != "symbol" or tok.text != text:
            raise ParseError(f"expected {text!r}", tok.offset)
        return self.advance()

    def parse(self) -> Expr:
        expr = self.expression()
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected {tok.text!r}", tok.offset)
        return expr

    def expression(self) -> Expr:
        node = self.term()
        while self.peek().kind == "symbol" and self.peek().text in "+-":
            op = self.advance()
            node = BinOp(op.text, node, self.term(), offset=op.offset)
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek().kind == "symbol" and self.peek().text in "*/":
            op = self.advance()
            node = BinOp(op.text, node, self.unary(), offset=op.offset)
        return node

    def unary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "symbol" and tok.text == "-":
            self.advance()
            return Neg(self.unary(), offset=tok.offset)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        tok = self.peek()
        if tok.kind == "symbol" and tok.text == "^":
            self.advance()
            exponent = self.unary()
            return Pow(base, self._integer_exponent(exponent), offset=tok.offset)
        return base

    def _integer_exponent(self, node: Expr) -> int:
        sign = 1
        if isinstance(node, Neg):
            sign = -1
            node = node.operand
        if isinstance(node, Num) and float(node.value).is_integer():
            return sign * int(node.value)
        raise ParseError("exponent must be an integer literal", node.offset)

    def atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Num(float(tok.text), offset=tok.offset)
        if tok.kind == "ident":
            return self._identifier()
        if tok.kind == "symbol" and tok.text == "(":
            self.advance()
            node = self.expression()
            self.expect(")")
            return node
        if tok.kind == "end":
            raise ParseError("unexpected end of input", tok.offset)
        raise ParseError(f"unexpected {tok.text!r}", tok.offset)

    def _identifier(self) -> Expr:
        tok = self.advance()
        name = tok.text
        after = self.peek()
        if name in ("q", "v"):
            self.expect("[")
            idx_tok = self.peek()
            if idx_tok.kind != "number" or not float(idx_tok.text).is_integer():
                raise ParseError("variable index must be an integer literal", idx_tok.offset)
            self.advance()
            index = int(float(idx_tok.text))
            if index >= self.dimension:
                raise ParseError(
                    f"variable index {index} out of range for dimension {self.dimension}",
                    idx_tok.offset,
                )
            self.expect("]")
            return Var(name, index, offset=tok.offset)
        if after.kind == "symbol" and after.text == "(":
            if name not in FUNCTIONS:
                raise ParseError(f"unknown function {name!r}", tok.offset)
            self.advance()
            arg = self.expression()
            self.expect(")")
            return Call(name, arg, offset=tok.offset)
        if name in self.parameters:
            return Param(name, offset=tok.offset)
        raise ParseError(f"unknown identifier {name!r}", tok.offset)


def parse(source: str, dimension: int, parameters: Iterable[str] = ()) -> Expr:
    """Parse ``source`` against a state dimension and a set of parameter names."""
    if dimension < 1:
        raise ValueError(f"dimension must be positive, got {dimension}")
    names = frozenset(parameters)
    bad = sorted(names & _RESERVED)
    if bad:
        raise ValueError(f"parameter names collide with reserved words: {bad}")
    if not source.strip():
        raise ParseError("empty expression", 0)
    return _Parser(source, dimension, names).parse()


_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _precedence(node: Expr) -> int:
    if isinstance(node, BinOp):
        return _PREC_ADD if node.op in "+-" else _PREC_MUL
    if isinstance(node, Neg):
        return _PREC_NEG
    if isinstance(node, Pow):
        return _PREC_POW
    return _PREC_ATOM


def _format_number(value: float) -> str:
    if float(value).is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(float(value))


def format_expression(node: Expr) -> str:
    """Render a tree to source that parses back to a structurally equal tree."""
    if isinstance(node, Num):
        return _format_number(node.value)
    if isinstance(node, Var):
        return f"{node.kind}[{node.index}]"
    if isinstance(node, Param):
        return node.name
    if isinstance(node, Neg):
        inner = format_expression(node.operand)
        if _precedence(node.operand) <= _PREC_NEG:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        mine = _precedence(node)
        left = format_expression(node.left)
        if _precedence(node.left) < mine:
            left = f"({left})"
        right = format_expression(node.right)
        # the grammar is left-associative, so an equal-precedence right child
        # must keep its parentheses to survive a round trip
        if _precedence(node.right) <= mine:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    if isinstance(node, Pow):
        base = format_expression(node.base)
        if _precedence(node.base) <= _PREC_POW:
            base = f"({base})"
        return f"{base}^{node.exponent}"
    if isinstance(node, Call):
        return f"{node.func}({format_expression(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def expression_variables(node: Expr) -> set[tuple[str, int]]:
    """Collect the (kind, index) pairs of all state variables used."""
    out: set[tuple[str, int]] = set()
    _walk_variables(node, out)
    return out


def _walk_variables(node: Expr, out: set[tuple[str, int]]) -> None:
    if isinstance(node, Var):
        out.add((node.kind, node.index))
    elif isinstance(node, Neg):
        _walk_variables(node.operand, out)
    elif isinstance(node, BinOp):
        _walk_variables(node.left, out)
        _walk_variables(node.right, out)
    elif isinstance(node, Pow):
        _walk_variables(node.base, out)
    elif isinstance(node, Call):
        _walk_variables(node.arg, out)


def expression_parameters(node: Expr) -> set[str]:
    """Collect the parameter names an expression refers to."""
    if isinstance(node, Param):
        return {node.name}
    if isinstance(node, Neg):
        return expression_parameters(node.operand)
    if isinstance(node, BinOp):
        return expression_parameters(node.left) | expression_parameters(node.right)
    if isinstance(node, Pow):
        return expression_parameters(node.base)
    if isinstance(node, Call):
        return expression_parameters(node.arg)
    return set()


def additive_terms(node: Expr) -> list[Expr]:
    """Split the top-level sum into its terms, ignoring signs."""
    if isinstance(node, BinOp) and node.op in "+-":
        return additive_terms(node.left) + additive_terms(node.right)
    if isinstance(node, Neg):
        return additive_terms(node.operand)
    return [node]


def _check_state(q: np.ndarray, v: np.ndarray) -> int:
    if q.shape != v.shape or q.ndim != 1:
        raise EvaluationError(f"state shapes disagree: q{q.shape} vs v{v.shape}")
    return q.shape[0]


def eval_value(
    e: Expr, q: np.ndarray, v: np.ndarray, params: Mapping[str, float] | None = None
) -> float:
    """Evaluate to a float, without derivatives."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    n = _check_state(q, v)
    try:
        value = _value(e, q, v, params or {}, n)
    except (ZeroDivisionError, OverflowError) as exc:
        raise EvaluationError(f"{exc} while evaluating {e}") from exc
    if not math.isfinite(value):
        raise EvaluationError(f"non-finite value while evaluating {e}")
    return value


def eval_with_gradient(
    e: Expr, q: np.ndarray, v: np.ndarray, params: Mapping[str, float] | None = None
) -> DualValue:
    """Evaluate to a DualValue carrying all 2n first partials."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    n = _check_state(q, v)
    zeros = np.zeros(2 * n)
    try:
        value, grad = _dual(e, q, v, params or {}, n, zeros)
    except (ZeroDivisionError, OverflowError) as exc:
        raise EvaluationError(f"{exc} while evaluating {e}") from exc
    if not math.isfinite(value) or not np.all(np.isfinite(grad)):
        raise EvaluationError(f"non-finite value while evaluating {e}")
    if grad is zeros:
        grad = zeros.copy()
    return DualValue(value, grad)


def _lookup(params: Mapping[str, float], name: str) -> float:
    try:
        return float(params[name])
    except KeyError:
        raise EvaluationError(f"unbound parameter {name!r}") from None


def _var_value(node: Var, q: np.ndarray, v: np.ndarray, n: int) -> float:
    if node.index >= n:
        raise EvaluationError(
            f"variable {node} out of range for state of dimension {n}"
        )
    return q[node.index] if node.kind == "q" else v[node.index]


def _value(e: Expr, q, v, params, n) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return _var_value(e, q, v, n)
    if isinstance(e, Param):
        return _lookup(params, e.name)
    if isinstance(e, Neg):
        return -_value(e.operand, q, v, params, n)
    if isinstance(e, BinOp):
        lhs = _value(e.left, q, v, params, n)
        rhs = _value(e.right, q, v, params, n)
        if e.op == "+":
            return lhs + rhs
        if e.op == "-":
            return lhs - rhs
        if e.op == "*":
            return lhs * rhs
        if rhs == 0.0:
            raise EvaluationError(f"division by zero in {e}")
        return lhs / rhs
    if isinstance(e, Pow):
        base = _value(e.base, q, v, params, n)
        if e.exponent == 0:
            return 1.0
        return base ** e.exponent
    if isinstance(e, Call):
        arg = _value(e.arg, q, v, params, n)
        return _apply_function(e, arg)
    raise TypeError(f"not an expression node: {e!r}")


def _apply_function(e: Call, x: float) -> float:
    if e.func == "sin":
        return math.sin(x)
    if e.func == "cos":
        return math.cos(x)
    if e.func == "exp":
        return math.exp(x)
    if e.func == "sqrt":
        if x < 0.0:
            raise EvaluationError(f"square root of negative value in {e}")
        return math.sqrt(x)
    return abs(x)


def _dual(e: Expr, q, v, params, n, zeros):
    # Returns (value, gradient).  The shared `zeros` array is never mutated;
    # every combining operation allocates a fresh array.
    if isinstance(e, Num):
        return e.value, zeros
    if isinstance(e, Var):
        grad = zeros.copy()
        if e.kind == "q":
            grad[e.index] = 1.0
        else:
            grad[n + e.index] = 1.0
        return _var_value(e, q, v, n), grad
    if isinstance(e, Param):
        return _lookup(params, e.name), zeros
    if isinstance(e, Neg):
        val, grad = _dual(e.operand, q, v, params, n, zeros)
        return -val, -grad
    if isinstance(e, BinOp):
        lv, lg = _dual(e.left, q, v, params, n, zeros)
        rv, rg = _dual(e.right, q, v, params, n, zeros)
        if e.op == "+":
            return lv + rv, lg + rg
        if e.op == "-":
            return lv - rv, lg - rg
        if e.op == "*":
            return lv * rv, lg * rv + rg * lv
        if rv == 0.0:
            raise EvaluationError(f"division by zero in {e}")
        val = lv / rv
        return val, (lg - val * rg) / rv
    if isinstance(e, Pow):
        bv, bg = _dual(e.base, q, v, params, n, zeros)
        k = e.exponent
        if k == 0:
            return 1.0, zeros
        val = bv ** k
        return val, (k * bv ** (k - 1)) * bg
    if isinstance(e, Call):
        av, ag = _dual(e.arg, q, v, params, n, zeros)
        val = _apply_function(e, av)
        if e.func == "sin":
            return val, math.cos(av) * ag
        if e.func == "cos":
            return val, -math.sin(av) * ag
        if e.func == "exp":
            return val, val * ag
        if e.func == "sqrt":
            if val == 0.0:
                raise EvaluationError(f"derivative of sqrt undefined at zero in {e}")
            return val, ag / (2.0 * val)
        # abs: subgradient 0 at the kink
        return val, math.copysign(1.0, av) * ag if av != 0.0 else 0.0 * ag
    raise TypeError(f"not an expression node: {e!r}")
