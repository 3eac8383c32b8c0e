"""Symbolic real expressions: parse, print, evaluate, differentiate.

Every structure function, metric entry and section component in this package
is an :class:`Expr`.  Trees are immutable and hash-consed by structure, so
they can be shared freely and used as dictionary keys.

Grammar (``^`` is right-associative, unary minus binds looser than ``*``)::

    expr    := signed (('+' | '-') term)*
    signed  := '-' signed | term
    term    := factor (('*' | '/') factor)*
    factor  := '-' factor | power
    power   := atom ('^' factor)?
    atom    := NUMBER | IDENT | IDENT '(' expr ')' | '(' expr ')'
"""
from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

import numpy as np

FUNCTIONS = ("sin", "cos", "tan", "sinh", "cosh", "tanh", "exp", "log", "sqrt")
BINARY_OPS = ("+", "-", "*", "/", "^")


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class UnknownFunctionError(ExprSyntaxError):
    pass


class MissingVariableError(ExprError):
    def __init__(self, name: str):
        super().__init__(f"no value bound for variable {name!r}")
        self.name = name


class EvalDomainError(ExprError, ArithmeticError):
    """Raised when a node cannot be evaluated (log of non-positive, 1/0, ...).

    ``node`` is the printed form of the offending sub-expression.
    """

    def __init__(self, message: str, node: str):
        super().__init__(f"{message} in {node!r}")
        self.node = node


# ---------------------------------------------------------------------------
# nodes


class Expr:
    __slots__ = ("_hash",)

    # arithmetic sugar, all routed through the folding constructors
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __rpow__(self, other):
        return power(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __hash__(self):
        return self._hash

    def __str__(self):
        return to_string(self)

    @property
    def is_const(self) -> bool:
        return isinstance(self, Const)

    def free_vars(self) -> frozenset[str]:
        return free_vars(self)

    def diff(self, name: str) -> "Expr":
        return diff(self, name)

    def eval(self, binding: Mapping[str, float] | None = None, **kw) -> float:
        b = dict(binding or {})
        b.update(kw)
        return evaluate(self, b)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value: float):
        self.value = float(value)
        self._hash = hash(("c", self.value))

    def __eq__(self, other):
        return isinstance(other, Const) and other.value == self.value

    __hash__ = Expr.__hash__

    def __repr__(self):
        return f"Const({self.value!r})"


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name
        self._hash = hash(("v", name))

    def __eq__(self, other):
        return isinstance(other, Var) and other.name == self.name

    __hash__ = Expr.__hash__

    def __repr__(self):
        return f"Var({self.name!r})"


class Unary(Expr):
    __slots__ = ("op", "arg")

    def __init__(self, op: str, arg: Expr):
        self.op = op
        self.arg = arg
        self._hash = hash(("u", op, arg._hash))

    def __eq__(self, other):
        if self is other:
            return True
        return (isinstance(other, Unary) and other._hash == self._hash
                and other.op == self.op and other.arg == self.arg)

    __hash__ = Expr.__hash__

    def __repr__(self):
        return f"Unary({self.op!r}, {self.arg!r})"


class Binary(Expr):
    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Expr, right: Expr):
        self.op = op
        self.left = left
        self.right = right
        self._hash = hash(("b", op, left._hash, right._hash))

    def __eq__(self, other):
        if self is other:
            return True
        return (isinstance(other, Binary) and other._hash == self._hash
                and other.op == self.op and other.left == self.left
                and other.right == self.right)

    __hash__ = Expr.__hash__

    def __repr__(self):
        return f"Binary({self.op!r}, {self.left!r}, {self.right!r})"


ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Const(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def const(value: float) -> Const:
    return Const(value)


def var(name: str) -> Var:
    return Var(name)


# ---------------------------------------------------------------------------
# folding constructors (constant folding + 0/1 identities only)


def _finite(x: float) -> bool:
    return math.isfinite(x)


def _is(e: Expr, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(b, Unary) and b.op == "neg":
        return sub(a, b.arg)
    return Binary("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    if isinstance(b, Unary) and b.op == "neg":
        return add(a, b.arg)
    return Binary("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    if isinstance(b, Const) and not isinstance(a, Const):
        a, b = b, a
    return Binary("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if _is(b, 1.0):
        return a
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    return Binary("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        try:
            value = _pow(a.value, b.value)
        except (ValueError, ZeroDivisionError, OverflowError):
            return Binary("^", a, b)
        if _finite(value):
            return Const(value)
        return Binary("^", a, b)
    if _is(b, 1.0):
        return a
    if _is(b, 0.0):
        return ONE
    return Binary("^", a, b)


def func(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    if isinstance(a, Const):
        try:
            value = _FUNC_IMPL[name](a.value)
        except (ValueError, ZeroDivisionError, OverflowError):
            return Unary(name, a)
        if _finite(value):
            return Const(value)
    return Unary(name, a)


def sin(a): return func("sin", as_expr(a))
def cos(a): return func("cos", as_expr(a))
def tan(a): return func("tan", as_expr(a))
def sinh(a): return func("sinh", as_expr(a))
def cosh(a): return func("cosh", as_expr(a))
def tanh(a): return func("tanh", as_expr(a))
def exp(a): return func("exp", as_expr(a))
def log(a): return func("log", as_expr(a))
def sqrt(a): return func("sqrt", as_expr(a))


def total(terms: Iterable[Expr]) -> Expr:
    acc: Expr = ZERO
    for t in terms:
        acc = add(acc, t)
    return acc


# ---------------------------------------------------------------------------
# parsing


class _Lexer:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        self._scan()
        self.pos = 0

    def _offset(self, i: int) -> int:
        return len(self.text[:i].encode("utf-8"))

    def _scan(self) -> None:
        t = self.text
        i = 0
        n = len(t)
        while i < n:
            ch = t[i]
            if ch.isspace():
                i += 1
            elif ch.isdigit() or (ch == "." and i + 1 < n and t[i + 1].isdigit()):
                j = i
                while j < n and t[j].isdigit():
                    j += 1
                if j < n and t[j] == ".":
                    j += 1
                    while j < n and t[j].isdigit():
                        j += 1
                if j < n and t[j] in "eE":
                    k = j + 1
                    if k < n and t[k] in "+-":
                        k += 1
                    if k < n and t[k].isdigit():
                        while k < n and t[k].isdigit():
                            k += 1
                        j = k
                self.tokens.append(("num", t[i:j], self._offset(i)))
                i = j
            elif ch.isalpha() or ch == "_":
                j = i
                while j < n and (t[j].isalnum() or t[j] == "_"):
                    j += 1
                self.tokens.append(("id", t[i:j], self._offset(i)))
                i = j
            elif ch in "+-*/^(),":
                self.tokens.append(("op", ch, self._offset(i)))
                i += 1
            else:
                raise ExprSyntaxError(f"unexpected character {ch!r}", self._offset(i))
        self.tokens.append(("end", "", self._offset(n)))

    def peek(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def next(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def accept(self, value: str) -> bool:
        kind, text, _ = self.peek()
        if kind == "op" and text == value:
            self.pos += 1
            return True
        return False

    def expect(self, value: str) -> None:
        kind, text, off = self.peek()
        if not (kind == "op" and text == value):
            found = text or "end of input"
            raise ExprSyntaxError(f"expected {value!r}, found {found!r}", off)
        self.pos += 1


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    >>> str(parse("x1^2 + sin(x2)"))
    'x1^2 + sin(x2)'
    """
    lex = _Lexer(text)
    e = _parse_expr(lex)
    kind, tok, off = lex.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected token {tok!r}", off)
    return e


def _parse_expr(lex: _Lexer) -> Expr:
    left = _parse_signed(lex)
    while True:
        if lex.accept("+"):
            left = Binary("+", left, _parse_term(lex))
        elif lex.accept("-"):
            left = Binary("-", left, _parse_term(lex))
        else:
            return left


def _parse_signed(lex: _Lexer) -> Expr:
    if lex.accept("-"):
        return Unary("neg", _parse_signed(lex))
    return _parse_term(lex)


def _parse_term(lex: _Lexer) -> Expr:
    left = _parse_factor(lex)
    while True:
        if lex.accept("*"):
            left = Binary("*", left, _parse_factor(lex))
        elif lex.accept("/"):
            left = Binary("/", left, _parse_factor(lex))
        else:
            return left


def _parse_factor(lex: _Lexer) -> Expr:
    if lex.accept("-"):
        return Unary("neg", _parse_factor(lex))
    base = _parse_atom(lex)
    if lex.accept("^"):
        return Binary("^", base, _parse_factor(lex))
    return base


def _parse_atom(lex: _Lexer) -> Expr:
    kind, text, off = lex.next()
    if kind == "num":
        return Const(float(text))
    if kind == "id":
        if lex.accept("("):
            if text not in FUNCTIONS:
                raise UnknownFunctionError(f"unknown function {text!r}", off)
            arg = _parse_expr(lex)
            lex.expect(")")
            return Unary(text, arg)
        return Var(text)
    if kind == "op" and text == "(":
        e = _parse_expr(lex)
        lex.expect(")")
        return e
    raise ExprSyntaxError(f"unexpected {text or 'end of input'!r}", off)


# ---------------------------------------------------------------------------
# printing

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _fmt_number(x: float) -> str:
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def to_string(e: Expr) -> str:
    return _str(e)


def _str(e: Expr) -> str:
    if isinstance(e, Const):
        s = _fmt_number(e.value)
        return f"({s})" if e.value < 0 or s.startswith("-") else s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = _str(e.arg)
            if isinstance(e.arg, Binary) and e.arg.op in "+-":
                inner = f"({inner})"
            return f"-{inner}"
        return f"{e.op}({_str(e.arg)})"
    assert isinstance(e, Binary)
    p = _PREC[e.op]
    ls = _str(e.left)
    rs = _str(e.right)
    if _needs_parens(e.left, p, right=False, op=e.op):
        ls = f"({ls})"
    if _needs_parens(e.right, p, right=True, op=e.op):
        rs = f"({rs})"
    if e.op in "+-":
        return f"{ls} {e.op} {rs}"
    return f"{ls}{e.op}{rs}"


def _needs_parens(child: Expr, p: int, right: bool, op: str) -> bool:
    if isinstance(child, Unary):
        return child.op == "neg"
    if not isinstance(child, Binary):
        return False
    cp = _PREC[child.op]
    if op == "^":
        # base: anything compound; exponent: right-assoc pow is fine
        return not right or cp < 4
    # right operand of equal precedence always gets parens: a - (b + c), a/(b*c)
    return cp < p or (right and cp == p)


# ---------------------------------------------------------------------------
# evaluation


def _pow(a: float, b: float) -> float:
    if b.is_integer() and abs(b) <= 64:
        if a == 0.0 and b < 0:
            raise ZeroDivisionError("0 raised to a negative power")
        return a ** int(b)
    return math.pow(a, b)


def _checked_log(x: float) -> float:
    if x <= 0.0:
        raise ValueError("log of non-positive value")
    return math.log(x)


def _checked_sqrt(x: float) -> float:
    if x < 0.0:
        raise ValueError("sqrt of negative value")
    return math.sqrt(x)


_FUNC_IMPL = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "sinh": math.sinh,
    "cosh": math.cosh,
    "tanh": math.tanh,
    "exp": math.exp,
    "log": _checked_log,
    "sqrt": _checked_sqrt,
}


def evaluate(e: Expr, binding: Mapping[str, float]) -> float:
    """Recursive double-precision evaluation; errors name the failing node."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return float(binding[e.name])
        except KeyError:
            raise MissingVariableError(e.name) from None
    if isinstance(e, Unary):
        x = evaluate(e.arg, binding)
        if e.op == "neg":
            return -x
        try:
            value = _FUNC_IMPL[e.op](x)
        except (ValueError, OverflowError) as exc:
            raise EvalDomainError(str(exc) or "domain error", to_string(e)) from None
        return value
    assert isinstance(e, Binary)
    a = evaluate(e.left, binding)
    b = evaluate(e.right, binding)
    op = e.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0.0:
            raise EvalDomainError("division by zero", to_string(e))
        return a / b
    try:
        return _pow(a, b)
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise EvalDomainError(str(exc) or "invalid power", to_string(e)) from None


def free_vars(e: Expr) -> frozenset[str]:
    out: set[str] = set()
    stack = [e]
    seen: set[int] = set()
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        if isinstance(n, Var):
            out.add(n.name)
        elif isinstance(n, Unary):
            stack.append(n.arg)
        elif isinstance(n, Binary):
            stack.append(n.left)
            stack.append(n.right)
    return frozenset(out)


# ---------------------------------------------------------------------------
# differentiation

_DIFF_CACHE: dict[tuple[Expr, str], Expr] = {}


def diff(e: Expr, name: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to the variable ``name``."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == name else ZERO
    key = (e, name)
    hit = _DIFF_CACHE.get(key)
    if hit is not None:
        return hit
    if name not in free_vars(e):
        result: Expr = ZERO
    else:
        result = _diff(e, name)
    if len(_DIFF_CACHE) > 200_000:
        _DIFF_CACHE.clear()
    _DIFF_CACHE[key] = result
    return result


def _diff(e: Expr, v: str) -> Expr:
    if isinstance(e, Unary):
        a = e.arg
        da = diff(a, v)
        op = e.op
        if op == "neg":
            return neg(da)
        if op == "sin":
            return mul(func("cos", a), da)
        if op == "cos":
            return neg(mul(func("sin", a), da))
        if op == "tan":
            return div(da, power(func("cos", a), Const(2.0)))
        if op == "sinh":
            return mul(func("cosh", a), da)
        if op == "cosh":
            return mul(func("sinh", a), da)
        if op == "tanh":
            return mul(sub(ONE, power(func("tanh", a), Const(2.0))), da)
        if op == "exp":
            return mul(e, da)
        if op == "log":
            return div(da, a)
        if op == "sqrt":
            return div(da, mul(Const(2.0), e))
        raise AssertionError(op)
    assert isinstance(e, Binary)
    a, b = e.left, e.right
    op = e.op
    if op == "+":
        return add(diff(a, v), diff(b, v))
    if op == "-":
        return sub(diff(a, v), diff(b, v))
    if op == "*":
        return add(mul(diff(a, v), b), mul(a, diff(b, v)))
    if op == "/":
        da, db = diff(a, v), diff(b, v)
        if _is(db, 0.0):
            return div(da, b)
        return div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))
    # power
    da, db = diff(a, v), diff(b, v)
    if _is(db, 0.0):
        return mul(mul(b, power(a, sub(b, ONE))), da)
    term = mul(db, func("log", a))
    if not _is(da, 0.0):
        term = add(term, div(mul(b, da), a))
    return mul(e, term)


def gradient(e: Expr, names: Sequence[str]) -> list[Expr]:
    return [diff(e, n) for n in names]


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (re-folding constants)."""
    if isinstance(e, Const):
        return e
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Unary):
        a = substitute(e.arg, mapping)
        return neg(a) if e.op == "neg" else func(e.op, a)
    assert isinstance(e, Binary)
    a = substitute(e.left, mapping)
    b = substitute(e.right, mapping)
    return {"+": add, "-": sub, "*": mul, "/": div, "^": power}[e.op](a, b)


# ---------------------------------------------------------------------------
# compilation to Python callables


def _codegen(exprs: Sequence[Expr], names: Sequence[str], vectorized: bool) -> str:
    fn = "np" if vectorized else "math"
    argmap = {n: f"a{i}" for i, n in enumerate(names)}
    lines: list[str] = []
    memo: dict[Expr, str] = {}

    def emit(e: Expr) -> str:
        if isinstance(e, Const):
            return f"({e.value!r})"
        if isinstance(e, Var):
            try:
                return argmap[e.name]
            except KeyError:
                raise MissingVariableError(e.name) from None
        got = memo.get(e)
        if got is not None:
            return got
        # explicit stack would be nicer; trees here are shallow enough
        if isinstance(e, Unary):
            a = emit(e.arg)
            if e.op == "neg":
                code = f"-{a}"
            elif vectorized:
                code = f"np.{e.op}({a})"
            elif e.op in ("log", "sqrt"):
                code = f"_{e.op}({a})"
            else:
                code = f"{fn}.{e.op}({a})"
        else:
            assert isinstance(e, Binary)
            a = emit(e.left)
            b = emit(e.right)
            if e.op == "^":
                if isinstance(e.right, Const) and e.right.value.is_integer() \
                        and abs(e.right.value) <= 64:
                    code = f"{a}**{int(e.right.value)}" if e.right.value >= 0 \
                        else f"1.0/({a}**{int(-e.right.value)})"
                else:
                    code = f"np.power({a}, {b})" if vectorized else f"math.pow({a}, {b})"
            else:
                code = f"{a} {e.op} {b}"
        tmp = f"t{len(memo)}"
        memo[e] = tmp
        lines.append(f"    {tmp} = {code}")
        return tmp

    outs = [emit(e) for e in exprs]
    args = ", ".join(argmap[n] for n in names)
    body = "\n".join(lines)
    ret = ", ".join(outs) + ("," if len(outs) == 1 else "")
    return f"def _f({args}):\n{body}\n    return ({ret})\n"


def _c_log(x):
    if x <= 0.0:
        raise ValueError("log of non-positive value")
    return math.log(x)


def _c_sqrt(x):
    if x < 0.0:
        raise ValueError("sqrt of negative value")
    return math.sqrt(x)


class CompiledExprs:
    """A batch of expressions compiled to one Python function.

    ``__call__(point)`` evaluates at a single point and returns a float array
    of shape ``shape``.  ``at(points)`` evaluates at an ``(N, len(names))``
    array and returns shape ``(N, *shape)``.  Domain failures are re-raised
    as :class:`EvalDomainError` naming the failing node.
    """

    def __init__(self, exprs, names: Sequence[str], shape: tuple[int, ...] | None = None):
        flat = [as_expr(e) for e in np.asarray(exprs, dtype=object).ravel()] \
            if not isinstance(exprs, Expr) else [exprs]
        self.exprs = flat
        self.names = list(names)
        self.shape = tuple(shape) if shape is not None else (
            np.asarray(exprs, dtype=object).shape if not isinstance(exprs, Expr) else ())
        if int(np.prod(self.shape, dtype=int)) != len(flat):
            raise ValueError("shape does not match number of expressions")
        self.constant = all(isinstance(e, Const) for e in flat)
        if self.constant:
            self._const = np.array([e.value for e in flat], dtype=float).reshape(self.shape)
            return
        if not flat:
            self._scalar = lambda *a: ()
            self._vector = self._scalar
            return
        ns_s = {"math": math, "_log": _c_log, "_sqrt": _c_sqrt}
        exec(_codegen(flat, self.names, vectorized=False), ns_s)
        self._scalar = ns_s["_f"]
        ns_v = {"np": np}
        exec(_codegen(flat, self.names, vectorized=True), ns_v)
        self._vector = ns_v["_f"]

    def __call__(self, point) -> np.ndarray:
        if self.constant:
            return self._const.copy()
        try:
            vals = self._scalar(*[float(p) for p in point])
        except (ValueError, ZeroDivisionError, OverflowError):
            self._locate(point)
            raise
        return np.array(vals, dtype=float).reshape(self.shape)

    def at(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, len(self.names)) if self.names else pts.reshape(-1, 0)
        npts = pts.shape[0]
        if self.constant:
            return np.broadcast_to(self._const, (npts,) + self.shape).copy()
        if not self.exprs:
            return np.zeros((npts,) + self.shape)
        with np.errstate(all="ignore"):
            vals = self._vector(*[pts[:, i] for i in range(pts.shape[1])])
            out = np.empty((len(self.exprs), npts))
            for i, v in enumerate(vals):
                out[i] = v
        bad = ~np.isfinite(out)
        if bad.any():
            j = int(np.argwhere(bad.any(axis=0))[0][0])
            self._locate(pts[j])
            raise EvalDomainError("non-finite value", "<vectorized>")
        return out.T.reshape((npts,) + self.shape)

    def _locate(self, point) -> None:
        binding = dict(zip(self.names, (float(p) for p in point)))
        for e in self.exprs:
            evaluate(e, binding)


def compile_exprs(exprs, names: Sequence[str]) -> CompiledExprs:
    return CompiledExprs(exprs, names)
