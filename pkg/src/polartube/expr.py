"""Scalar expression language with exact first- and second-order derivatives.

Expressions are parsed from infix source into an immutable AST and evaluated by
propagating truncated second-order Taylor jets (value, gradient, Hessian)
through the tree, so all derivatives are exact to rounding. Evaluation is
batched: a jet may carry one point or a whole grid of points at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Union

import numpy as np

__all__ = [
    "Expression",
    "Jet2",
    "ExprError",
    "ParseError",
    "EvalDomainError",
    "parse",
    "eval_jet2",
    "eval_value",
    "differentiate",
]


class ExprError(ValueError):
    """Base class for expression-language errors."""


class ParseError(ExprError):
    """Syntax or name-resolution failure, with the byte offset of the fault."""

    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        self.offset = offset
        self.expected = expected
        detail = f"{message} at offset {offset}"
        if expected:
            detail += " (expected " + ", ".join(expected) + ")"
        super().__init__(detail)


class EvalDomainError(ExprError):
    """Evaluation left the real domain (log/sqrt/div), or produced non-finite values."""

    def __init__(self, message: str, node: "Node | None" = None):
        self.node = node
        if node is not None:
            message += f" in '{format_node(node, 0)}'"
        super().__init__(message)


# --- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str  # '+', '-', '*', '/'
    left: Node
    right: Node


@dataclass(frozen=True)
class Pow(Node):
    base: Node
    exponent: Fraction  # rational constant exponents only


@dataclass(frozen=True)
class Call(Node):
    fn: str
    arg: Node


# value, first and second derivative of each supported function
_FUNCTIONS: dict[str, tuple[Callable, Callable, Callable]] = {
    "sin": (np.sin, np.cos, lambda x: -np.sin(x)),
    "cos": (np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)),
    "sinh": (np.sinh, np.cosh, np.sinh),
    "cosh": (np.cosh, np.sinh, np.cosh),
    "exp": (np.exp, np.exp, np.exp),
    "log": (np.log, lambda x: 1.0 / x, lambda x: -1.0 / (x * x)),
    "sqrt": (
        np.sqrt,
        lambda x: 0.5 / np.sqrt(x),
        lambda x: -0.25 / (x * np.sqrt(x)),
    ),
    "atan": (
        np.arctan,
        lambda x: 1.0 / (1.0 + x * x),
        lambda x: -2.0 * x / (1.0 + x * x) ** 2,
    ),
}

_CONSTANTS = {"pi": math.pi}


# --- Jets --------------------------------------------------------------------

@dataclass
class Jet2:
    """Second-order jet: value, gradient and (symmetric) Hessian.

    All three carry a common leading batch shape; `grad` appends one axis of
    length k (number of variables) and `hess` two.
    """

    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray

    @property
    def nvars(self) -> int:
        return self.grad.shape[-1]


def _jet_const(value, batch_shape, k) -> Jet2:
    v = np.broadcast_to(np.asarray(value, dtype=float), batch_shape).copy()
    return Jet2(v, np.zeros(batch_shape + (k,)), np.zeros(batch_shape + (k, k)))


def _jet_var(x, index, batch_shape, k) -> Jet2:
    g = np.zeros(batch_shape + (k,))
    g[..., index] = 1.0
    return Jet2(np.asarray(x, dtype=float).copy(), g, np.zeros(batch_shape + (k, k)))


def _jet_add(a: Jet2, b: Jet2) -> Jet2:
    return Jet2(a.value + b.value, a.grad + b.grad, a.hess + b.hess)


def _jet_sub(a: Jet2, b: Jet2) -> Jet2:
    return Jet2(a.value - b.value, a.grad - b.grad, a.hess - b.hess)


def _outer2(g1, g2):
    return g1[..., :, None] * g2[..., None, :]


def _jet_mul(a: Jet2, b: Jet2) -> Jet2:
    av, bv = a.value[..., None], b.value[..., None]
    grad = a.grad * bv + b.grad * av
    hess = (
        a.hess * b.value[..., None, None]
        + b.hess * a.value[..., None, None]
        + _outer2(a.grad, b.grad)
        + _outer2(b.grad, a.grad)
    )
    return Jet2(a.value * b.value, grad, hess)


def _jet_div(a: Jet2, b: Jet2, node: Node) -> Jet2:
    if np.any(b.value == 0.0):
        raise EvalDomainError("division by zero", node)
    v = a.value / b.value
    grad = (a.grad - v[..., None] * b.grad) / b.value[..., None]
    hess = (
        a.hess
        - _outer2(grad, b.grad)
        - _outer2(b.grad, grad)
        - v[..., None, None] * b.hess
    ) / b.value[..., None, None]
    return Jet2(v, grad, hess)


def _jet_chain(u: Jet2, f, df, d2f) -> Jet2:
    fv, d1, d2 = f(u.value), df(u.value), d2f(u.value)
    grad = d1[..., None] * u.grad
    hess = d1[..., None, None] * u.hess + d2[..., None, None] * _outer2(u.grad, u.grad)
    return Jet2(fv, grad, hess)


def _jet_pow(u: Jet2, r: Fraction, node: Node) -> Jet2:
    rf = float(r)
    if r.denominator == 1:
        n = r.numerator
        if n < 0 and np.any(u.value == 0.0):
            raise EvalDomainError("zero raised to a negative power", node)
        # integer powers are defined for negative bases as well
        f = lambda x: x ** float(n)
        df = lambda x: float(n) * x ** float(n - 1) if n != 0 else np.zeros_like(x)
        d2f = (
            lambda x: float(n * (n - 1)) * x ** float(n - 2)
            if n not in (0, 1)
            else np.zeros_like(x)
        )
        return _jet_chain(u, f, df, d2f)
    if np.any(u.value <= 0.0):
        raise EvalDomainError("fractional power of a non-positive base", node)
    return _jet_chain(
        u,
        lambda x: x**rf,
        lambda x: rf * x ** (rf - 1.0),
        lambda x: rf * (rf - 1.0) * x ** (rf - 2.0),
    )


def _eval_node(node: Node, env: Mapping[str, int], x: np.ndarray, batch_shape, k) -> Jet2:
    if isinstance(node, Const):
        return _jet_const(node.value, batch_shape, k)
    if isinstance(node, Var):
        return _jet_var(x[..., env[node.name]], env[node.name], batch_shape, k)
    if isinstance(node, Neg):
        u = _eval_node(node.arg, env, x, batch_shape, k)
        return Jet2(-u.value, -u.grad, -u.hess)
    if isinstance(node, BinOp):
        a = _eval_node(node.left, env, x, batch_shape, k)
        b = _eval_node(node.right, env, x, batch_shape, k)
        if node.op == "+":
            return _jet_add(a, b)
        if node.op == "-":
            return _jet_sub(a, b)
        if node.op == "*":
            return _jet_mul(a, b)
        return _jet_div(a, b, node)
    if isinstance(node, Pow):
        return _jet_pow(_eval_node(node.base, env, x, batch_shape, k), node.exponent, node)
    if isinstance(node, Call):
        u = _eval_node(node.arg, env, x, batch_shape, k)
        if node.fn in ("log", "sqrt") and np.any(u.value <= 0.0):
            raise EvalDomainError(f"{node.fn} of a non-positive argument", node)
        return _jet_chain(u, *_FUNCTIONS[node.fn])
    raise TypeError(f"unknown node {node!r}")


def _eval_value_node(node: Node, env: Mapping[str, int], x: np.ndarray, node0: Node):
    """Value-only evaluation (no derivative bookkeeping); used on large grids."""
    if isinstance(node, Const):
        return np.broadcast_to(np.float64(node.value), x.shape[:-1])
    if isinstance(node, Var):
        return x[..., env[node.name]]
    if isinstance(node, Neg):
        return -_eval_value_node(node.arg, env, x, node0)
    if isinstance(node, BinOp):
        a = _eval_value_node(node.left, env, x, node0)
        b = _eval_value_node(node.right, env, x, node0)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if np.any(b == 0.0):
            raise EvalDomainError("division by zero", node)
        return a / b
    if isinstance(node, Pow):
        base = _eval_value_node(node.base, env, x, node0)
        r = node.exponent
        if r.denominator == 1:
            if r.numerator < 0 and np.any(base == 0.0):
                raise EvalDomainError("zero raised to a negative power", node)
            return base ** float(r.numerator)
        if np.any(base <= 0.0):
            raise EvalDomainError("fractional power of a non-positive base", node)
        return base ** float(r)
    if isinstance(node, Call):
        u = _eval_value_node(node.arg, env, x, node0)
        if node.fn in ("log", "sqrt") and np.any(u <= 0.0):
            raise EvalDomainError(f"{node.fn} of a non-positive argument", node)
        return _FUNCTIONS[node.fn][0](u)
    raise TypeError(f"unknown node {node!r}")


# --- Tokenizer / parser ------------------------------------------------------

_OPS = "+-*/^(),"


def _tokenize(source: str):
    """Yield (kind, text, offset) triples; kinds: num, ident, op, end."""
    tokens = []
    i, n = 0, len(source)
    while i < n:
        c = source[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and source[i + 1].isdigit()):
            j = i
            seen_dot = seen_exp = False
            while j < n:
                d = source[j]
                if d.isdigit():
                    j += 1
                elif d == "." and not seen_dot and not seen_exp:
                    seen_dot = True
                    j += 1
                elif d in "eE" and not seen_exp and j > i and source[j - 1] not in "eE":
                    # exponent must be followed by digits (optionally signed)
                    k2 = j + 1
                    if k2 < n and source[k2] in "+-":
                        k2 += 1
                    if k2 < n and source[k2].isdigit():
                        seen_exp = True
                        j = k2
                    else:
                        break
                else:
                    break
            tokens.append(("num", source[i:j], i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            tokens.append(("ident", source[i:j], i))
            i = j
        elif c in _OPS:
            tokens.append(("op", c, i))
            i += 1
        else:
            raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    """Recursive-descent parser: left-assoc + - * /, right-assoc ^, unary minus."""

    def __init__(self, source: str, variables: tuple[str, ...]):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str):
        kind, text, off = self.peek()
        if kind == "op" and text == op:
            return self.advance()
        raise ParseError("syntax error", off, expected=(repr(op),))

    def parse(self) -> Node:
        node = self.expr()
        kind, _, off = self.peek()
        if kind != "end":
            raise ParseError("trailing input", off, expected=("end of input",))
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = BinOp(text, node, self.term())
            else:
                return node

    def term(self) -> Node:
        node = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = BinOp(text, node, self.unary())
            else:
                return node

    def unary(self) -> Node:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        kind, text, off = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            exponent = self.unary()  # right-associative: x^-2, x^2^3
            return Pow(base, _as_rational(exponent, off))
        return base

    def atom(self) -> Node:
        kind, text, off = self.advance()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            nk, nt, _ = self.peek()
            if nk == "op" and nt == "(":
                if text not in _FUNCTIONS:
                    raise ParseError(
                        f"unknown function {text!r}", off, expected=tuple(sorted(_FUNCTIONS))
                    )
                self.advance()
                arg = self.expr()
                self.expect_op(")")
                return Call(text, arg)
            if text in self.variables:
                return Var(text)
            if text in _CONSTANTS:
                return Const(_CONSTANTS[text])
            declared = ", ".join(self.variables) if self.variables else "(none)"
            raise ParseError(
                f"unknown identifier {text!r}; declared variables: {declared}",
                off,
                expected=self.variables,
            )
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError("syntax error", off, expected=("number", "identifier", "'('"))


def _as_rational(node: Node, offset: int) -> Fraction:
    """Constant-fold an exponent subtree into an exact rational, or fail."""
    if isinstance(node, Const):
        return Fraction(node.value)  # exact binary rational of the literal
    if isinstance(node, Neg):
        return -_as_rational(node.arg, offset)
    if isinstance(node, BinOp):
        a = _as_rational(node.left, offset)
        b = _as_rational(node.right, offset)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if b == 0:
            raise ParseError("zero denominator in exponent", offset)
        return a / b
    if isinstance(node, Pow):
        r = _as_rational(node.base, offset)
        if node.exponent.denominator != 1:
            raise ParseError("exponent must be a rational constant", offset)
        return r ** node.exponent.numerator
    raise ParseError("exponent must be a rational constant", offset)


# --- Printer -----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _fmt_float(v: float) -> str:
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def format_node(node: Node, parent_prec: int) -> str:
    """Canonical rendering: spaces around + and -, none around * / ^."""
    if isinstance(node, Const):
        s, prec = _fmt_float(node.value), _PREC["atom"]
    elif isinstance(node, Var):
        s, prec = node.name, _PREC["atom"]
    elif isinstance(node, Neg):
        s, prec = "-" + format_node(node.arg, _PREC["neg"]), _PREC["neg"]
    elif isinstance(node, BinOp):
        prec = _PREC[node.op]
        left = format_node(node.left, prec - 1)  # left-assoc: same prec ok on the left
        right = format_node(node.right, prec)
        pad = " " if node.op in "+-" else ""
        s = f"{left}{pad}{node.op}{pad}{right}"
    elif isinstance(node, Pow):
        prec = _PREC["^"]
        base = format_node(node.base, prec)
        e = node.exponent
        exp = str(e.numerator) if e.denominator == 1 else f"({e.numerator}/{e.denominator})"
        if e < 0 and e.denominator == 1:
            exp = f"({e.numerator})"
        s = f"{base}^{exp}"
    elif isinstance(node, Call):
        s, prec = f"{node.fn}({format_node(node.arg, 0)})", _PREC["atom"]
    else:
        raise TypeError(f"unknown node {node!r}")
    if prec <= parent_prec:
        return f"({s})"
    return s


# --- Symbolic derivative -----------------------------------------------------

def _simp_add(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and a.value == 0.0:
        return b
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    return BinOp("+", a, b)


def _simp_sub(a: Node, b: Node) -> Node:
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(a, Const) and a.value == 0.0:
        return Neg(b)
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    return BinOp("-", a, b)


def _simp_mul(a: Node, b: Node) -> Node:
    for x, y in ((a, b), (b, a)):
        if isinstance(x, Const):
            if x.value == 0.0:
                return Const(0.0)
            if x.value == 1.0:
                return y
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    return BinOp("*", a, b)


def _simp_div(a: Node, b: Node) -> Node:
    if isinstance(a, Const) and a.value == 0.0:
        return Const(0.0)
    if isinstance(b, Const) and b.value == 1.0:
        return a
    return BinOp("/", a, b)


def _derive(node: Node, var: str) -> Node:
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0 if node.name == var else 0.0)
    if isinstance(node, Neg):
        d = _derive(node.arg, var)
        return Const(0.0) if isinstance(d, Const) and d.value == 0.0 else Neg(d)
    if isinstance(node, BinOp):
        da, db = _derive(node.left, var), _derive(node.right, var)
        if node.op == "+":
            return _simp_add(da, db)
        if node.op == "-":
            return _simp_sub(da, db)
        if node.op == "*":
            return _simp_add(_simp_mul(da, node.right), _simp_mul(node.left, db))
        num = _simp_sub(_simp_mul(da, node.right), _simp_mul(node.left, db))
        return _simp_div(num, Pow(node.right, Fraction(2)))
    if isinstance(node, Pow):
        r = node.exponent
        if r == 0:
            return Const(0.0)
        du = _derive(node.base, var)
        factor = _simp_mul(Const(float(r)), Pow(node.base, r - 1) if r != 1 else Const(1.0))
        if r == 1:
            factor = Const(float(r))
        return _simp_mul(factor, du)
    if isinstance(node, Call):
        du = _derive(node.arg, var)
        u = node.arg
        outer: Node
        if node.fn == "sin":
            outer = Call("cos", u)
        elif node.fn == "cos":
            outer = Neg(Call("sin", u))
        elif node.fn == "sinh":
            outer = Call("cosh", u)
        elif node.fn == "cosh":
            outer = Call("sinh", u)
        elif node.fn == "exp":
            outer = Call("exp", u)
        elif node.fn == "log":
            outer = _simp_div(Const(1.0), u)
        elif node.fn == "sqrt":
            outer = _simp_div(Const(0.5), Call("sqrt", u))
        elif node.fn == "atan":
            outer = _simp_div(Const(1.0), _simp_add(Const(1.0), _simp_mul(u, u)))
        else:
            raise TypeError(f"no derivative rule for {node.fn}")
        return _simp_mul(outer, du)
    raise TypeError(f"unknown node {node!r}")


def _substitute(node: Node, mapping: Mapping[str, Node]) -> Node:
    if isinstance(node, Var) and node.name in mapping:
        return mapping[node.name]
    if isinstance(node, Neg):
        return Neg(_substitute(node.arg, mapping))
    if isinstance(node, BinOp):
        return BinOp(node.op, _substitute(node.left, mapping), _substitute(node.right, mapping))
    if isinstance(node, Pow):
        return Pow(_substitute(node.base, mapping), node.exponent)
    if isinstance(node, Call):
        return Call(node.fn, _substitute(node.arg, mapping))
    return node


def _free_vars(node: Node, out: set):
    if isinstance(node, Var):
        out.add(node.name)
    elif isinstance(node, Neg):
        _free_vars(node.arg, out)
    elif isinstance(node, BinOp):
        _free_vars(node.left, out)
        _free_vars(node.right, out)
    elif isinstance(node, Pow):
        _free_vars(node.base, out)
    elif isinstance(node, Call):
        _free_vars(node.arg, out)


# --- Public surface ----------------------------------------------------------

class Expression:
    """Immutable parsed expression bound to an ordered variable list.

    Supports arithmetic operators for assembling composite maps symbolically;
    operands must not disagree on shared variable names (the union of the
    variable lists, left first, becomes the new binding).
    """

    __slots__ = ("root", "variables")

    def __init__(self, root: Node, variables: Iterable[str]):
        self.root = root
        self.variables = tuple(variables)

    def __str__(self) -> str:
        return format_node(self.root, 0)

    def __repr__(self) -> str:
        return f"Expression({str(self)!r}, vars={self.variables})"

    # -- evaluation

    def eval_jet2(self, point) -> Jet2:
        """Jet (value, gradient, Hessian) at one point or a batch of points."""
        x = np.asarray(point, dtype=float)
        if x.ndim == 0:
            x = x[None]
        if x.shape[-1] != len(self.variables):
            raise ExprError(
                f"point has {x.shape[-1]} coordinates, expression declares "
                f"{len(self.variables)} variables"
            )
        env = {name: i for i, name in enumerate(self.variables)}
        jet = _eval_node(self.root, env, x, x.shape[:-1], len(self.variables))
        if not (
            np.all(np.isfinite(jet.value))
            and np.all(np.isfinite(jet.grad))
            and np.all(np.isfinite(jet.hess))
        ):
            raise EvalDomainError("non-finite result", self.root)
        return jet

    def eval_value(self, point) -> np.ndarray:
        """Value-only evaluation (cheaper than a jet on big grids)."""
        x = np.asarray(point, dtype=float)
        env = {name: i for i, name in enumerate(self.variables)}
        v = np.asarray(_eval_value_node(self.root, env, x, self.root), dtype=float)
        if not np.all(np.isfinite(v)):
            raise EvalDomainError("non-finite result", self.root)
        return v

    # -- symbolic operations

    def derivative(self, var: str) -> "Expression":
        if var not in self.variables:
            raise ExprError(f"variable {var!r} not declared in {self.variables}")
        return Expression(_derive(self.root, var), self.variables)

    def substitute(self, values: Mapping[str, Union[float, "Expression"]]) -> "Expression":
        """Bind some variables to constants or sub-expressions."""
        mapping: dict[str, Node] = {}
        extra_vars: list[str] = []
        for name, val in values.items():
            if name not in self.variables:
                raise ExprError(f"variable {name!r} not declared in {self.variables}")
            if isinstance(val, Expression):
                mapping[name] = val.root
                extra_vars.extend(v for v in val.variables if v not in extra_vars)
            else:
                mapping[name] = Const(float(val))
        remaining = [v for v in self.variables if v not in mapping]
        for v in extra_vars:
            if v not in remaining:
                remaining.append(v)
        return Expression(_substitute(self.root, mapping), remaining)

    def with_variables(self, variables: Iterable[str]) -> "Expression":
        """Rebind to a superset (or reordering) of the declared variables."""
        variables = tuple(variables)
        used: set = set()
        _free_vars(self.root, used)
        missing = used - set(variables)
        if missing:
            raise ExprError(f"new variable list drops used names {sorted(missing)}")
        return Expression(self.root, variables)

    # -- assembly operators

    @staticmethod
    def number(value: float, variables: Iterable[str] = ()) -> "Expression":
        return Expression(Const(float(value)), variables)

    @staticmethod
    def variable(name: str, variables: Iterable[str] | None = None) -> "Expression":
        return Expression(Var(name), (name,) if variables is None else variables)

    def _coerce(self, other) -> "Expression":
        if isinstance(other, Expression):
            return other
        return Expression(Const(float(other)), ())

    def _merged_vars(self, other: "Expression") -> tuple[str, ...]:
        merged = list(self.variables)
        for v in other.variables:
            if v not in merged:
                merged.append(v)
        return tuple(merged)

    def __add__(self, other):
        other = self._coerce(other)
        return Expression(_simp_add(self.root, other.root), self._merged_vars(other))

    def __radd__(self, other):
        return self._coerce(other).__add__(self)

    def __sub__(self, other):
        other = self._coerce(other)
        return Expression(_simp_sub(self.root, other.root), self._merged_vars(other))

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        other = self._coerce(other)
        return Expression(_simp_mul(self.root, other.root), self._merged_vars(other))

    def __rmul__(self, other):
        return self._coerce(other).__mul__(self)

    def __truediv__(self, other):
        other = self._coerce(other)
        return Expression(_simp_div(self.root, other.root), self._merged_vars(other))

    def __neg__(self):
        return Expression(Neg(self.root), self.variables)


def parse(source: str, variables: Iterable[str]) -> Expression:
    """Parse infix source against an ordered list of declared variable names."""
    if not source or not source.strip():
        raise ParseError("empty expression", 0, expected=("expression",))
    variables = tuple(variables)
    seen = set()
    for v in variables:
        if v in seen:
            raise ExprError(f"duplicate variable name {v!r}")
        seen.add(v)
    return Expression(_Parser(source, variables).parse(), variables)


def eval_jet2(expr: Expression, point) -> Jet2:
    return expr.eval_jet2(point)


def eval_value(expr: Expression, point) -> np.ndarray:
    return expr.eval_value(point)


def differentiate(expr: Expression, var: str) -> Expression:
    return expr.derivative(var)
