"""Minimal arithmetic expression language for user-supplied model functions.

Supports numbers, the variables ``x`` and ``zeta``, the binary operators
``+ - * / ^``, unary minus, and the functions ``exp``, ``log``, ``abs``,
``tanh``, ``sin``, ``cos``, ``sqrt``.  Expressions parse to a small AST that
evaluates on floats or numpy arrays and differentiates symbolically, so
custom models get exact derivative accessors instead of finite differences.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np


class ExpressionError(ValueError):
    """Raised for syntax errors or unknown names in an expression."""


_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[()+\-*/^])"
    r")"
)

_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
    "tanh": np.tanh,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
}

ALLOWED_VARS = ("x", "zeta")


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            rest = text[pos:].strip()
            if not rest:
                break
            raise ExpressionError(f"cannot tokenize {rest!r}")
        if m.group("num") is not None:
            tokens.append(("num", m.group("num")))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name")))
        else:
            op = m.group("op")
            tokens.append(("op", "^" if op == "**" else op))
        pos = m.end()
    return tokens


@dataclass(frozen=True)
class Num:
    value: float

    def ev(self, env):
        return self.value

    def diff(self, var):
        return Num(0.0)

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True)
class Var:
    name: str

    def ev(self, env):
        return env[self.name]

    def diff(self, var):
        return Num(1.0 if var == self.name else 0.0)

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Bin:
    op: str
    a: object
    b: object

    def ev(self, env):
        a, b = self.a.ev(env), self.b.ev(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return a / b
        return np.power(a, b)

    def diff(self, var):
        a, b, op = self.a, self.b, self.op
        da, db = a.diff(var), b.diff(var)
        if op in "+-":
            return Bin(op, da, db)
        if op == "*":
            return Bin("+", Bin("*", da, b), Bin("*", a, db))
        if op == "/":
            num = Bin("-", Bin("*", da, b), Bin("*", a, db))
            return Bin("/", num, Bin("*", b, b))
        # power: constant exponent gets the simple rule, else full u^v form
        if isinstance(b, Num):
            n = b.value
            return Bin("*", Bin("*", Num(n), Bin("^", a, Num(n - 1.0))), da)
        logterm = Bin("*", db, Call("log", a))
        ratio = Bin("/", Bin("*", b, da), a)
        return Bin("*", self, Bin("+", logterm, ratio))

    def __str__(self):
        return f"({self.a} {self.op} {self.b})"


@dataclass(frozen=True)
class Neg:
    a: object

    def ev(self, env):
        return -self.a.ev(env)

    def diff(self, var):
        return Neg(self.a.diff(var))

    def __str__(self):
        return f"(-{self.a})"


@dataclass(frozen=True)
class Call:
    fn: str
    a: object

    def ev(self, env):
        return _FUNCS[self.fn](self.a.ev(env))

    def diff(self, var):
        a, da = self.a, self.a.diff(var)
        fn = self.fn
        if fn == "exp":
            outer = self
        elif fn == "log":
            return Bin("/", da, a)
        elif fn == "abs":
            outer = Call("_sign", a)
        elif fn == "tanh":
            t = Call("tanh", a)
            outer = Bin("-", Num(1.0), Bin("*", t, t))
        elif fn == "sin":
            outer = Call("cos", a)
        elif fn == "cos":
            outer = Neg(Call("sin", a))
        elif fn == "sqrt":
            return Bin("/", da, Bin("*", Num(2.0), self))
        elif fn == "_sign":
            return Num(0.0)
        else:  # pragma: no cover
            raise ExpressionError(f"cannot differentiate {fn}")
        return Bin("*", outer, da)

    def __str__(self):
        return f"{self.fn}({self.a})"


_FUNCS["_sign"] = np.sign


class _Parser:
    def __init__(self, tokens, variables):
        self.tokens = tokens
        self.pos = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise ExpressionError("unexpected end of expression")
        self.pos += 1
        return tok

    def expect(self, op):
        tok = self.take()
        if tok != ("op", op):
            raise ExpressionError(f"expected {op!r}, got {tok!r}")

    def parse(self):
        node = self.sum()
        if self.peek() is not None:
            raise ExpressionError(f"trailing input at {self.peek()!r}")
        return node

    def sum(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = Bin(op, node, self.unary())
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        kind, text = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text in _FUNCS and text != "_sign":
                self.expect("(")
                arg = self.sum()
                self.expect(")")
                return Call(text, arg)
            if text in self.variables:
                return Var(text)
            raise ExpressionError(f"unknown name {text!r}")
        if (kind, text) == ("op", "("):
            node = self.sum()
            self.expect(")")
            return node
        raise ExpressionError(f"unexpected token {text!r}")


def parse_expression(text: str, variables=ALLOWED_VARS):
    """Parse ``text`` into an AST node with ``.ev(env)`` and ``.diff(var)``."""
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("expression must be a non-empty string")
    return _Parser(_tokenize(text), tuple(variables)).parse()


def compile_univariate(text: str, var: str):
    """Compile a single-variable expression to (f, f', f'') callables."""
    node = parse_expression(text, variables=(var,))
    d1 = node.diff(var)
    d2 = d1.diff(var)

    def make(n):
        return lambda v: n.ev({var: v})

    return make(node), make(d1), make(d2)


def compile_bivariate(text: str):
    """Compile gamma(x, zeta) to its value and partials up to order two.

    Returns a dict with keys f, dx, dz, dxx, dzz, dxz plus ``x_free`` telling
    whether the expression actually references x.
    """
    node = parse_expression(text, variables=("x", "zeta"))
    dx = node.diff("x")
    dz = node.diff("zeta")
    out = {
        "f": node,
        "dx": dx,
        "dz": dz,
        "dxx": dx.diff("x"),
        "dzz": dz.diff("zeta"),
        "dxz": dx.diff("zeta"),
    }

    def uses_x(n):
        if isinstance(n, Var):
            return n.name == "x"
        if isinstance(n, Bin):
            return uses_x(n.a) or uses_x(n.b)
        if isinstance(n, (Neg, Call)):
            return uses_x(n.a)
        return False

    fns = {}
    for key, n in out.items():
        fns[key] = (lambda nn: lambda x, z: nn.ev({"x": x, "zeta": z}))(n)
    fns["x_free"] = not uses_x(node)
    return fns
