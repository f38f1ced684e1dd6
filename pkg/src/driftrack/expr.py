"""Expression trees: parsing, printing, symbolic differentiation, compilation.

Grammar (ASCII, case-sensitive)::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := '-' factor | base ('^' factor)?
    base   := number | 'pi' | variable | func '(' expr ')' | '(' expr ')'
    func   := sin | cos | exp | log | sqrt | abs

A leading minus binds looser than ``^`` so ``-z^2`` means ``-(z^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Union

from .errors import EvaluationDomainError, ExpressionSyntaxError, UnknownIdentifierError

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Pi, Neg, Bin, Call]

ZERO = Num(0.0)
ONE = Num(1.0)


# ---------------------------------------------------------------- parsing


class _Parser:
    def __init__(self, text: str, variables: Iterable[str]):
        self.text = text
        self.variables = frozenset(variables)
        self.pos = 0

    def _skip(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def _peek(self) -> str:
        self._skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def parse(self) -> Node:
        self._skip()
        if self.pos >= len(self.text):
            raise ExpressionSyntaxError("empty expression", self.pos)
        node = self._expr()
        self._skip()
        if self.pos != len(self.text):
            raise ExpressionSyntaxError(f"unexpected {self.text[self.pos]!r}", self.pos)
        return node

    def _expr(self) -> Node:
        node = self._term()
        while self._peek() in ("+", "-") and self._peek() != "":
            op = self.text[self.pos]
            self.pos += 1
            node = Bin(op, node, self._term())
        return node

    def _term(self) -> Node:
        node = self._factor()
        while self._peek() in ("*", "/") and self._peek() != "":
            op = self.text[self.pos]
            self.pos += 1
            node = Bin(op, node, self._factor())
        return node

    def _factor(self) -> Node:
        if self._peek() == "-":
            self.pos += 1
            return Neg(self._factor())
        base = self._base()
        if self._peek() == "^":
            self.pos += 1
            return Bin("^", base, self._factor())
        return base

    def _number(self) -> Node:
        start = self.pos
        text = self.text
        n = len(text)
        while self.pos < n and text[self.pos].isdigit():
            self.pos += 1
        if self.pos < n and text[self.pos] == ".":
            self.pos += 1
            while self.pos < n and text[self.pos].isdigit():
                self.pos += 1
        if self.pos < n and text[self.pos] in "eE":
            save = self.pos
            self.pos += 1
            if self.pos < n and text[self.pos] in "+-":
                self.pos += 1
            if self.pos < n and text[self.pos].isdigit():
                while self.pos < n and text[self.pos].isdigit():
                    self.pos += 1
            else:
                self.pos = save
        literal = text[start:self.pos]
        if literal in (".", ""):
            raise ExpressionSyntaxError("malformed number", start)
        return Num(float(literal))

    def _base(self) -> Node:
        ch = self._peek()
        start = self.pos
        if ch == "":
            raise ExpressionSyntaxError("unexpected end of input", start)
        if ch.isdigit() or ch == ".":
            return self._number()
        if ch == "(":
            self.pos += 1
            node = self._expr()
            if self._peek() != ")":
                raise ExpressionSyntaxError("expected ')'", self.pos)
            self.pos += 1
            return node
        if ch.isalpha() or ch == "_":
            while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] == "_"):
                self.pos += 1
            name = self.text[start:self.pos]
            if name == "pi":
                return Pi()
            if name in self.variables:
                return Var(name)
            if name in FUNCTIONS:
                if self._peek() != "(":
                    raise ExpressionSyntaxError("expected '('", self.pos)
                self.pos += 1
                arg = self._expr()
                if self._peek() != ")":
                    raise ExpressionSyntaxError("expected ')'", self.pos)
                self.pos += 1
                return Call(name, arg)
            raise UnknownIdentifierError(name, start)
        raise ExpressionSyntaxError(f"unexpected {ch!r}", start)


def parse(text: str, variables: Iterable[str] = ("z",)) -> Node:
    """Parse ``text`` into an expression tree over the given variable names."""
    if not isinstance(text, str):
        raise ExpressionSyntaxError("expression must be a string", 0)
    try:
        text.encode("ascii")
    except UnicodeEncodeError as exc:
        raise ExpressionSyntaxError("non-ASCII character", exc.start) from None
    return _Parser(text, variables).parse()


# ---------------------------------------------------------------- printing


def to_text(node: Node) -> str:
    """Fully parenthesised text that parses back to an equal-valued tree."""
    if isinstance(node, Num):
        r = repr(float(node.value))
        return f"(-{r[1:]})" if r.startswith("-") else r
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Pi):
        return "pi"
    if isinstance(node, Neg):
        return f"(-{to_text(node.arg)})"
    if isinstance(node, Call):
        return f"{node.func}({to_text(node.arg)})"
    return f"({to_text(node.left)}{node.op}{to_text(node.right)})"


# ---------------------------------------------------------------- construction helpers


def is_const(node: Node, value: float | None = None) -> bool:
    if not isinstance(node, Num):
        return False
    return value is None or node.value == value


def add(a: Node, b: Node) -> Node:
    if is_const(a, 0.0):
        return b
    if is_const(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Bin("+", a, b)


def sub(a: Node, b: Node) -> Node:
    if is_const(b, 0.0):
        return a
    if is_const(a, 0.0):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return Bin("-", a, b)


def mul(a: Node, b: Node) -> Node:
    if is_const(a, 0.0) or is_const(b, 0.0):
        return ZERO
    if is_const(a, 1.0):
        return b
    if is_const(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Bin("*", a, b)


def div(a: Node, b: Node) -> Node:
    if is_const(b, 1.0):
        return a
    if is_const(a, 0.0) and not is_const(b, 0.0):
        return ZERO
    return Bin("/", a, b)


def neg(a: Node) -> Node:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a: Node, b: Node) -> Node:
    if is_const(b, 1.0):
        return a
    if is_const(b, 0.0):
        return ONE
    return Bin("^", a, b)


def call(func: str, arg: Node) -> Node:
    return Call(func, arg)


def free_variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, (Neg, Call)):
        return free_variables(node.arg)
    if isinstance(node, Bin):
        return free_variables(node.left) | free_variables(node.right)
    return set()


def substitute(node: Node, values: dict[str, Node]) -> Node:
    """Replace variables by subtrees, folding trivial identities on the way."""
    if isinstance(node, Var):
        return values.get(node.name, node)
    if isinstance(node, Neg):
        return neg(substitute(node.arg, values))
    if isinstance(node, Call):
        return Call(node.func, substitute(node.arg, values))
    if isinstance(node, Bin):
        left = substitute(node.left, values)
        right = substitute(node.right, values)
        return _BUILD[node.op](left, right)
    return node


_BUILD = {"+": add, "-": sub, "*": mul, "/": div, "^": power}


# ---------------------------------------------------------------- differentiation


def diff(node: Node, var: str) -> Node:
    """Symbolic derivative of ``node`` with respect to ``var``."""
    if isinstance(node, (Num, Pi)):
        return ZERO
    if isinstance(node, Var):
        return ONE if node.name == var else ZERO
    if isinstance(node, Neg):
        return neg(diff(node.arg, var))
    if isinstance(node, Call):
        u = node.arg
        du = diff(u, var)
        if is_const(du, 0.0):
            return ZERO
        f = node.func
        if f == "sin":
            outer = Call("cos", u)
        elif f == "cos":
            outer = neg(Call("sin", u))
        elif f == "exp":
            outer = node
        elif f == "log":
            return div(du, u)
        elif f == "sqrt":
            return div(du, mul(Num(2.0), node))
        else:  # abs
            return div(mul(u, du), node)
        return mul(outer, du)
    u, v = node.left, node.right
    du, dv = diff(u, var), diff(v, var)
    op = node.op
    if op == "+":
        return add(du, dv)
    if op == "-":
        return sub(du, dv)
    if op == "*":
        return add(mul(du, v), mul(u, dv))
    if op == "/":
        if is_const(dv, 0.0):
            return div(du, v)
        return div(sub(mul(du, v), mul(u, dv)), power(v, Num(2.0)))
    # power
    if var not in free_variables(v):
        if is_const(du, 0.0):
            return ZERO
        exponent = sub(v, ONE) if not isinstance(v, Num) else Num(v.value - 1.0)
        return mul(mul(v, power(u, exponent)), du)
    return mul(node, add(mul(dv, Call("log", u)), div(mul(v, du), u)))


# ---------------------------------------------------------------- evaluation


def _div(a: float, b: float) -> float:
    if b == 0.0:
        raise EvaluationDomainError("division by zero")
    return a / b


def _pow(a: float, b: float) -> float:
    if a == 0.0 and b < 0.0:
        raise EvaluationDomainError("zero raised to a negative power")
    if a < 0.0 and b != math.floor(b):
        raise EvaluationDomainError("negative base with non-integer exponent")
    try:
        return math.pow(a, b)
    except OverflowError:
        raise EvaluationDomainError("overflow in power") from None


def _log(a: float) -> float:
    if a <= 0.0:
        raise EvaluationDomainError("log of a non-positive number")
    return math.log(a)


def _sqrt(a: float) -> float:
    if a < 0.0:
        raise EvaluationDomainError("sqrt of a negative number")
    return math.sqrt(a)


def _exp(a: float) -> float:
    try:
        return math.exp(a)
    except OverflowError:
        raise EvaluationDomainError("overflow in exp") from None


def _finite(x: float) -> float:
    if not math.isfinite(x):
        raise EvaluationDomainError("non-finite value")
    return x


_ENV = {
    "_div": _div,
    "_pow": _pow,
    "_log": _log,
    "_sqrt": _sqrt,
    "_exp": _exp,
    "_sin": math.sin,
    "_cos": math.cos,
    "_abs": abs,
    "_finite": _finite,
    "_PI": math.pi,
}


def _emit(node: Node) -> str:
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Pi):
        return "_PI"
    if isinstance(node, Neg):
        return f"(-{_emit(node.arg)})"
    if isinstance(node, Call):
        return f"_{node.func}({_emit(node.arg)})"
    a, b = _emit(node.left), _emit(node.right)
    if node.op == "/":
        return f"_div({a}, {b})"
    if node.op == "^":
        return f"_pow({a}, {b})"
    return f"({a} {node.op} {b})"


def compile_node(node: Node, variables: tuple[str, ...]) -> Callable[..., float]:
    """Compile a tree into a plain Python function of the named variables.

    The returned function raises :class:`EvaluationDomainError` rather than
    returning a non-finite value.
    """
    args = ", ".join(variables)
    source = f"lambda {args}: _finite({_emit(node)})"
    fn = eval(source, dict(_ENV))  # noqa: S307 - source is generated from a validated tree

    def guarded(*vals: float) -> float:
        try:
            return fn(*vals)
        except (OverflowError, ValueError, ZeroDivisionError) as exc:
            raise EvaluationDomainError(str(exc)) from None

    return guarded
