"""Scalar expression language for scene fields.

Expressions are immutable, hash-consed trees: two structurally equal trees are
the same Python object, so structural equality is identity and memoisation can
key on ``id``.  The grammar (see ``docs/expr-grammar.md``)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom (('^' | '**') unary)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Evaluation works on floats, numpy arrays (vectorised) and ``mpmath.mpf``.
"""
from __future__ import annotations

import math
import weakref
from typing import Callable, Iterable, Mapping

import mpmath
import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Add", "Sub", "Mul", "Div", "Pow", "Neg", "Func",
    "ExprError", "ParseError", "UnknownIdentifierError", "EvaluationError",
    "FUNCTIONS", "parse", "differentiate", "diff", "evaluate", "simplify",
    "substitute", "free_vars", "const", "var", "as_expr", "ZERO", "ONE",
    "sqrt", "exp", "log", "sin", "cos", "tan", "arccos", "absolute", "size",
]


class ExprError(Exception):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int, expected: str | None = None):
        self.offset = offset
        self.expected = expected
        hint = f", expected {expected}" if expected else ""
        super().__init__(f"{message} at offset {offset}{hint}")


class UnknownIdentifierError(ParseError):
    def __init__(self, name: str, offset: int, declared: Iterable[str]):
        self.name = name
        self.declared = tuple(declared)
        ExprError.__init__(
            self,
            f"unknown identifier {name!r} at offset {offset}; "
            f"declared variables: {', '.join(self.declared) or '(none)'}",
        )
        self.offset = offset
        self.expected = None


class EvaluationError(ExprError):
    def __init__(self, message: str, node: "Expr"):
        self.node = node
        super().__init__(f"{message} in node `{node}`")


# --------------------------------------------------------------------------
# node types

_INTERN: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


class Expr:
    __slots__ = ("_key", "args", "_dcache", "_order", "__weakref__")
    precedence = 100
    args: tuple

    def __new__(cls, *args):
        key = cls._make_key(args)
        node = _INTERN.get(key)
        if node is not None:
            return node
        node = object.__new__(cls)
        node._key = key
        node.args = tuple(args)
        node._dcache = {}
        node._order = None
        _INTERN[key] = node
        return node

    @classmethod
    def _make_key(cls, args):
        return (cls.__name__,) + tuple(id(a) for a in args)

    def __reduce__(self):
        return (parse, (str(self),))

    def __hash__(self):
        return id(self)

    def __eq__(self, other):
        return self is other

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(map(repr, self.args))})"

    def __str__(self):
        return to_string(self)

    # operator sugar builds lightly simplified trees
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

    @property
    def is_const(self) -> bool:
        return False


class Const(Expr):
    __slots__ = ()

    def __new__(cls, value):
        return Expr.__new__(cls, float(value) + 0.0)  # folds -0.0 into 0.0

    @classmethod
    def _make_key(cls, args):
        (v,) = args
        return ("Const", repr(v))

    @property
    def value(self) -> float:
        return self.args[0]

    @property
    def is_const(self) -> bool:
        return True


class Var(Expr):
    __slots__ = ()

    @classmethod
    def _make_key(cls, args):
        return ("Var", args[0])

    @property
    def name(self) -> str:
        return self.args[0]


class Add(Expr):
    __slots__ = ()
    precedence = 1


class Sub(Expr):
    __slots__ = ()
    precedence = 1


class Mul(Expr):
    __slots__ = ()
    precedence = 2


class Div(Expr):
    __slots__ = ()
    precedence = 2


class Neg(Expr):
    __slots__ = ()
    precedence = 3


class Pow(Expr):
    __slots__ = ()
    precedence = 4


class Func(Expr):
    __slots__ = ()

    @classmethod
    def _make_key(cls, args):
        name, arg = args
        return ("Func", name, id(arg))

    @property
    def name(self) -> str:
        return self.args[0]

    @property
    def arg(self) -> Expr:
        return self.args[1]


ZERO = Const(0.0)
ONE = Const(1.0)
TWO = Const(2.0)
HALF = Const(0.5)

FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos", "tan", "arccos", "abs")
_ALIASES = {"acos": "arccos", "ln": "log", "fabs": "abs"}
_NAMED_CONSTANTS = {"pi": math.pi}


def const(value) -> Const:
    return Const(value)


def var(name: str) -> Var:
    return Var(name)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return parse(x)
    return Const(x)


# --------------------------------------------------------------------------
# smart constructors: cheap local folding used by differentiate and sugar


def _c(e: Expr, v: float) -> bool:
    return type(e) is Const and e.value == v


def add(a: Expr, b: Expr) -> Expr:
    if type(a) is Const and type(b) is Const:
        return Const(a.value + b.value)
    if _c(a, 0):
        return b
    if _c(b, 0):
        return a
    if type(b) is Neg:
        return sub(a, b.args[0])
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if type(a) is Const and type(b) is Const:
        return Const(a.value - b.value)
    if _c(b, 0):
        return a
    if _c(a, 0):
        return neg(b)
    if a is b:
        return ZERO
    if type(b) is Neg:
        return add(a, b.args[0])
    return Sub(a, b)


def neg(a: Expr) -> Expr:
    if type(a) is Const:
        return Const(-a.value)
    if type(a) is Neg:
        return a.args[0]
    return Neg(a)


def mul(a: Expr, b: Expr) -> Expr:
    if type(a) is Const and type(b) is Const:
        return Const(a.value * b.value)
    if _c(a, 0) or _c(b, 0):
        return ZERO
    if _c(a, 1):
        return b
    if _c(b, 1):
        return a
    if _c(a, -1):
        return neg(b)
    if _c(b, -1):
        return neg(a)
    if type(b) is Const:
        a, b = b, a
    if type(a) is Neg:
        return neg(mul(a.args[0], b))
    if type(b) is Neg:
        return neg(mul(a, b.args[0]))
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if type(a) is Const and type(b) is Const and b.value != 0:
        return Const(a.value / b.value)
    if _c(a, 0):
        return ZERO
    if _c(b, 1):
        return a
    if _c(b, -1):
        return neg(a)
    if a is b:
        return ONE
    if type(a) is Neg:
        return neg(div(a.args[0], b))
    return Div(a, b)


def power(a: Expr, b: Expr) -> Expr:
    if type(b) is Const:
        if b.value == 0:
            return ONE
        if b.value == 1:
            return a
        if type(a) is Const:
            try:
                return Const(_pow_scalar(a.value, b.value))
            except (ValueError, ZeroDivisionError):
                pass
    if _c(a, 1):
        return ONE
    return Pow(a, b)


def func(name: str, a: Expr) -> Expr:
    name = _ALIASES.get(name, name)
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function {name!r}")
    if type(a) is Const:
        try:
            return Const(_SCALAR_FUNCS[name](a.value))
        except (ValueError, ZeroDivisionError):
            pass
    return Func(name, a)


def sqrt(a) -> Expr:
    return func("sqrt", as_expr(a))


def exp(a) -> Expr:
    return func("exp", as_expr(a))


def log(a) -> Expr:
    return func("log", as_expr(a))


def sin(a) -> Expr:
    return func("sin", as_expr(a))


def cos(a) -> Expr:
    return func("cos", as_expr(a))


def tan(a) -> Expr:
    return func("tan", as_expr(a))


def arccos(a) -> Expr:
    return func("arccos", as_expr(a))


def absolute(a) -> Expr:
    return func("abs", as_expr(a))


def _pow_scalar(a: float, b: float) -> float:
    if float(b).is_integer():
        if a == 0 and b < 0:
            raise ZeroDivisionError
        return a ** int(b)
    if a < 0 or (a == 0 and b < 0):
        raise ValueError
    return a ** b


def _checked_sqrt(x):
    if x < 0:
        raise ValueError
    return math.sqrt(x)


def _checked_log(x):
    if x <= 0:
        raise ValueError
    return math.log(x)


_SCALAR_FUNCS: dict[str, Callable[[float], float]] = {
    "exp": math.exp,
    "log": _checked_log,
    "sqrt": _checked_sqrt,
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "arccos": math.acos,
    "abs": abs,
}


# --------------------------------------------------------------------------
# parser

_OPERATORS = ("**", "+", "-", "*", "/", "^", "(", ")")


def _tokenize(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            try:
                value = float(text[i:j])
            except ValueError:
                raise ParseError(f"malformed number {text[i:j]!r}", i) from None
            tokens.append(("num", value, i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("name", text[i:j], i))
            i = j
            continue
        if text.startswith("**", i):
            tokens.append(("op", "^", i))
            i += 2
            continue
        if ch in "+-*/^()":
            tokens.append(("op", ch, i))
            i += 1
            continue
        raise ParseError(f"unexpected character {ch!r}", i)
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    def __init__(self, text: str, variables):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.variables = None if variables is None else tuple(variables)

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op):
        kind, value, offset = self.peek()
        if kind != "op" or value != op:
            raise ParseError("unexpected token", offset, repr(op))
        self.take()

    def parse(self) -> Expr:
        e = self.expr()
        kind, value, offset = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {value!r}", offset, "operator or end of input")
        return e

    def expr(self) -> Expr:
        left = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.take()
                right = self.term()
                left = Add(left, right) if value == "+" else Sub(left, right)
            else:
                return left

    def term(self) -> Expr:
        left = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.take()
                right = self.unary()
                left = Mul(left, right) if value == "*" else Div(left, right)
            else:
                return left

    def unary(self) -> Expr:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.take()
            operand = self.unary()
            if type(operand) is Const:
                return Const(-operand.value)
            return Neg(operand)
        if kind == "op" and value == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.take()
            exponent = self.unary()
            if _constant_only(exponent):
                exponent = Const(_fold_constant(exponent))
            return Pow(base, exponent)
        return base

    def atom(self) -> Expr:
        kind, value, offset = self.take()
        if kind == "num":
            return Const(value)
        if kind == "name":
            nk, nv, _ = self.peek()
            if nk == "op" and nv == "(":
                name = _ALIASES.get(value, value)
                if name not in FUNCTIONS:
                    raise ParseError(f"unknown function {value!r}", offset,
                                     "one of " + ", ".join(FUNCTIONS))
                self.take()
                arg = self.expr()
                self.expect_op(")")
                return Func(name, arg)
            if value in _NAMED_CONSTANTS and (self.variables is None or value not in self.variables):
                return Const(_NAMED_CONSTANTS[value])
            if self.variables is not None and value not in self.variables:
                raise UnknownIdentifierError(value, offset, self.variables)
            return Var(value)
        if kind == "op" and value == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        raise ParseError("unexpected " + ("end of input" if kind == "end" else f"token {value!r}"),
                         offset, "operand")


def _constant_only(e: Expr) -> bool:
    return not free_vars(e)


def _fold_constant(e: Expr) -> float:
    return float(evaluate(e, {}))


def parse(text: str, variables: Iterable[str] | None = None) -> Expr:
    """Parse infix ``text``; if ``variables`` is given, other names are errors."""
    return _Parser(text, variables).parse()


# --------------------------------------------------------------------------
# printing


def _fmt_const(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        s = str(int(v))
    else:
        s = repr(v)
    return s


def to_string(e: Expr) -> str:
    memo: dict[int, str] = {}

    def wrap(child: Expr, min_prec: int) -> str:
        s = go(child)
        prec = child.precedence
        if type(child) is Const and child.value < 0:
            prec = Neg.precedence
        return f"({s})" if prec < min_prec else s

    def go(node: Expr) -> str:
        hit = memo.get(id(node))
        if hit is not None:
            return hit
        t = type(node)
        if t is Const:
            s = _fmt_const(node.value)
        elif t is Var:
            s = node.name
        elif t is Func:
            s = f"{node.name}({go(node.arg)})"
        elif t is Neg:
            s = "-" + wrap(node.args[0], Neg.precedence)
        elif t is Add:
            s = f"{wrap(node.args[0], 1)} + {wrap(node.args[1], 2)}"
        elif t is Sub:
            s = f"{wrap(node.args[0], 1)} - {wrap(node.args[1], 2)}"
        elif t is Mul:
            s = f"{wrap(node.args[0], 2)}*{wrap(node.args[1], 3)}"
        elif t is Div:
            s = f"{wrap(node.args[0], 2)}/{wrap(node.args[1], 3)}"
        elif t is Pow:
            base, ex = node.args
            bs = go(base)
            if type(base) not in (Var, Func) and not (type(base) is Const and base.value >= 0):
                bs = f"({bs})"
            es = go(ex)
            if type(ex) not in (Var, Func, Pow) and not (type(ex) is Const and ex.value >= 0):
                es = f"({es})"
            s = f"{bs}^{es}"
        else:  # pragma: no cover
            raise TypeError(t)
        memo[id(node)] = s
        return s

    return go(e)


# --------------------------------------------------------------------------
# traversal helpers


def _postorder(root: Expr) -> list[Expr]:
    if root._order is not None:
        return root._order
    order: list[Expr] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for child in _children(node):
            if id(child) not in seen:
                stack.append((child, False))
    root._order = order
    return order


def _children(node: Expr) -> tuple:
    t = type(node)
    if t is Const or t is Var:
        return ()
    if t is Func:
        return (node.arg,)
    return node.args


def size(e: Expr) -> int:
    """Number of distinct nodes in the expression DAG."""
    return len(_postorder(e))


def free_vars(e: Expr) -> frozenset[str]:
    return frozenset(n.name for n in _postorder(e) if type(n) is Var)


def _rebuild(node: Expr, kids: list[Expr]) -> Expr:
    t = type(node)
    if t is Func:
        return func(node.name, kids[0])
    if t is Neg:
        return neg(kids[0])
    a, b = kids
    return {Add: add, Sub: sub, Mul: mul, Div: div, Pow: power}[t](a, b)


def substitute(e: Expr, mapping: Mapping[str, Expr | float]) -> Expr:
    """Replace variables by expressions (light folding applied)."""
    repl = {k: as_expr(v) for k, v in mapping.items()}
    out: dict[int, Expr] = {}
    for node in _postorder(e):
        t = type(node)
        if t is Const:
            out[id(node)] = node
        elif t is Var:
            out[id(node)] = repl.get(node.name, node)
        else:
            out[id(node)] = _rebuild(node, [out[id(c)] for c in _children(node)])
    return out[id(e)]


# --------------------------------------------------------------------------
# differentiation


def differentiate(e: Expr, v: str) -> Expr:
    """Exact partial derivative of ``e`` with respect to variable ``v``."""
    for node in _postorder(e):
        if v in node._dcache:
            continue
        node._dcache[v] = _diff_node(node, v)
    return e._dcache[v]


def diff(e: Expr, *vs: str) -> Expr:
    for v in vs:
        e = differentiate(e, v)
    return e


def _diff_node(node: Expr, v: str) -> Expr:
    t = type(node)
    if t is Const:
        return ZERO
    if t is Var:
        return ONE if node.name == v else ZERO
    d = lambda c: c._dcache[v]  # noqa: E731
    if t is Add:
        return add(d(node.args[0]), d(node.args[1]))
    if t is Sub:
        return sub(d(node.args[0]), d(node.args[1]))
    if t is Neg:
        return neg(d(node.args[0]))
    if t is Mul:
        a, b = node.args
        return add(mul(d(a), b), mul(a, d(b)))
    if t is Div:
        a, b = node.args
        da, db = d(a), d(b)
        if db is ZERO:
            return div(da, b)
        return div(sub(mul(da, b), mul(a, db)), power(b, TWO))
    if t is Pow:
        a, b = node.args
        da, db = d(a), d(b)
        if db is ZERO:
            if type(b) is Const:
                return mul(mul(b, power(a, Const(b.value - 1))), da)
            return mul(mul(b, power(a, sub(b, ONE))), da)
        # general case: a^b (log a)' form, base must be positive
        return mul(node, add(mul(db, func("log", a)), div(mul(b, da), a)))
    if t is Func:
        u = node.arg
        du = d(u)
        if du is ZERO:
            return ZERO
        name = node.name
        if name == "exp":
            inner = node
        elif name == "log":
            return div(du, u)
        elif name == "sqrt":
            return div(du, mul(TWO, node))
        elif name == "sin":
            inner = func("cos", u)
        elif name == "cos":
            inner = neg(func("sin", u))
        elif name == "tan":
            inner = add(ONE, power(node, TWO))
        elif name == "arccos":
            inner = neg(div(ONE, func("sqrt", sub(ONE, power(u, TWO)))))
        elif name == "abs":
            inner = div(u, node)
        else:  # pragma: no cover
            raise ExprError(name)
        return mul(inner, du)
    raise TypeError(t)  # pragma: no cover


# --------------------------------------------------------------------------
# evaluation


def _is_mp(x) -> bool:
    return isinstance(x, (mpmath.mpf, mpmath.mpc))


def _np_check(bad, node, message):
    if np.any(bad):
        raise EvaluationError(message, node)


def evaluate(e: Expr, point: Mapping[str, object]):
    """Evaluate at ``point`` (floats, numpy arrays, or mpmath numbers).

    Domain violations raise :class:`EvaluationError` naming the node.
    """
    values: dict[int, object] = {}
    use_mp = any(_is_mp(x) for x in point.values())
    order = _postorder(e)
    # remaining consumers per node: intermediate arrays are dropped once no parent needs them
    uses: dict[int, int] = {}
    for node in order:
        for c in _children(node):
            uses[id(c)] = uses.get(id(c), 0) + 1
    for node in order:
        t = type(node)
        if t is Const:
            val = mpmath.mpf(node.value) if use_mp else node.value
        elif t is Var:
            try:
                val = point[node.name]
            except KeyError:
                raise EvaluationError(f"variable {node.name!r} not assigned", node) from None
        elif t is Func:
            val = _eval_func(node, values[id(node.arg)], use_mp)
        else:
            args = [values[id(c)] for c in node.args]
            val = _eval_binary(node, t, args, use_mp)
        values[id(node)] = val
        for c in _children(node):
            k = id(c)
            uses[k] -= 1
            if uses[k] == 0:
                del values[k]
    return values[id(e)]


def _eval_binary(node, t, args, use_mp):
    if t is Neg:
        return -args[0]
    a, b = args
    if t is Add:
        return a + b
    if t is Sub:
        return a - b
    if t is Mul:
        return a * b
    if t is Div:
        if use_mp:
            if b == 0:
                raise EvaluationError("division by zero", node)
            return a / b
        _np_check(np.asarray(b) == 0, node, "division by zero")
        return np.true_divide(a, b)
    if t is Pow:
        ex = node.args[1]
        if type(ex) is Const and ex.value.is_integer():
            n = int(ex.value)
            if n < 0:
                if use_mp:
                    if a == 0:
                        raise EvaluationError("zero to a negative power", node)
                else:
                    _np_check(np.asarray(a) == 0, node, "zero to a negative power")
            if use_mp:
                return a ** n
            if n == 2:
                return a * a
            return np.power(a, float(n)) if isinstance(a, np.ndarray) else float(a) ** n
        if use_mp:
            if a < 0 or (a == 0 and b <= 0):
                raise EvaluationError("fractional power of non-positive base", node)
            return mpmath.power(a, b)
        aa = np.asarray(a)
        bb = np.asarray(b)
        _np_check((aa < 0) | ((aa == 0) & (bb <= 0)), node, "fractional power of non-positive base")
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.power(a, b)
    raise TypeError(t)  # pragma: no cover


def _eval_func(node, u, use_mp):
    name = node.name
    if use_mp:
        if name == "log" and u <= 0:
            raise EvaluationError("log of non-positive value", node)
        if name == "sqrt" and u < 0:
            raise EvaluationError("sqrt of negative value", node)
        if name == "arccos" and abs(u) > 1:
            raise EvaluationError("arccos argument outside [-1, 1]", node)
        return {"exp": mpmath.exp, "log": mpmath.log, "sqrt": mpmath.sqrt, "sin": mpmath.sin,
                "cos": mpmath.cos, "tan": mpmath.tan, "arccos": mpmath.acos,
                "abs": abs}[name](u)
    arr = np.asarray(u)
    if name == "log":
        _np_check(arr <= 0, node, "log of non-positive value")
        return np.log(u)
    if name == "sqrt":
        _np_check(arr < 0, node, "sqrt of negative value")
        return np.sqrt(u)
    if name == "arccos":
        _np_check(np.abs(arr) > 1, node, "arccos argument outside [-1, 1]")
        return np.arccos(u)
    return {"exp": np.exp, "sin": np.sin, "cos": np.cos, "tan": np.tan, "abs": np.abs}[name](u)


# --------------------------------------------------------------------------
# simplification


def simplify(e: Expr) -> Expr:
    """Constant folding, 0/1 identities, flattening of sums and products.

    Like terms and repeated factors with constant exponents are merged.  The
    result is a fixed point: ``simplify(simplify(e)) is simplify(e)``.
    """
    out: dict[int, Expr] = {}
    for node in _postorder(e):
        t = type(node)
        if t is Const or t is Var:
            out[id(node)] = node
            continue
        kids = [out[id(c)] for c in _children(node)]
        if t is Func:
            r = func(node.name, kids[0])
        elif t is Pow:
            r = _simplify_pow(kids[0], kids[1])
        elif t is Neg:
            r = _simplify_sum(Neg(kids[0])) if type(kids[0]) in (Add, Sub) else _product(Neg(kids[0]))
        elif t in (Add, Sub):
            r = _simplify_sum(t(*kids))
        else:
            r = _product(t(*kids))
        out[id(node)] = r
    return out[id(e)]


def _flatten_sum(e: Expr, sign: float, acc: list):
    t = type(e)
    if t is Add:
        _flatten_sum(e.args[0], sign, acc)
        _flatten_sum(e.args[1], sign, acc)
    elif t is Sub:
        _flatten_sum(e.args[0], sign, acc)
        _flatten_sum(e.args[1], -sign, acc)
    elif t is Neg and type(e.args[0]) in (Add, Sub):
        _flatten_sum(e.args[0], -sign, acc)
    else:
        c, top, bottom = _product_parts(e)
        acc.append((sign * c, _build_product(1.0, top, bottom)))


def _simplify_sum(e: Expr) -> Expr:
    acc: list = []
    _flatten_sum(e, 1.0, acc)
    order: list[Expr] = []
    coeffs: dict[int, float] = {}
    for c, rest in acc:
        if id(rest) not in coeffs:
            order.append(rest)
            coeffs[id(rest)] = 0.0
        coeffs[id(rest)] += c
    terms = [(coeffs[id(r)], r) for r in order if coeffs[id(r)] != 0.0]
    if not terms:
        return ZERO
    c0, r0 = terms[0]
    result = _scaled(c0, r0)
    for c, rest in terms[1:]:
        piece = _scaled(abs(c), rest)
        result = Sub(result, piece) if c < 0 else Add(result, piece)
    return result


def _scaled(c: float, rest: Expr) -> Expr:
    if rest is ONE:
        return Const(c)
    _, top, bottom = _product_parts(rest)
    return _build_product(c, top, bottom)


def _collect_factors(e: Expr, sign: float, factors: list, coeff: list):
    t = type(e)
    if t is Mul:
        _collect_factors(e.args[0], sign, factors, coeff)
        _collect_factors(e.args[1], sign, factors, coeff)
    elif t is Div:
        _collect_factors(e.args[0], sign, factors, coeff)
        _collect_factors(e.args[1], -sign, factors, coeff)
    elif t is Neg:
        coeff[0] = -coeff[0]
        _collect_factors(e.args[0], sign, factors, coeff)
    elif t is Const and (sign > 0 or e.value != 0):
        coeff[0] = coeff[0] * e.value if sign > 0 else coeff[0] / e.value
    elif t is Pow and type(e.args[1]) is Const and type(e.args[0]) is not Const:
        factors.append((e.args[0], sign * e.args[1].value))
    else:
        factors.append((e, sign))


def _product_parts(e: Expr):
    """Split ``e`` into (coefficient, numerator factors, denominator factors)."""
    factors: list = []
    coeff = [1.0]
    _collect_factors(e, 1.0, factors, coeff)
    exps: dict[int, float] = {}
    order: list[Expr] = []
    for base, ex in factors:
        if id(base) not in exps:
            exps[id(base)] = 0.0
            order.append(base)
        exps[id(base)] += ex
    top, bottom = [], []
    for base in order:
        ex = exps[id(base)]
        if ex > 0:
            top.append((base, ex))
        elif ex < 0:
            bottom.append((base, -ex))
    return coeff[0], top, bottom


def _chain(factors) -> Expr | None:
    result = None
    for base, ex in factors:
        f = base if ex == 1.0 else Pow(base, Const(ex))
        result = f if result is None else Mul(result, f)
    return result


def _build_product(c: float, top, bottom) -> Expr:
    if c == 0.0:
        return ZERO
    num = _chain(top)
    den = _chain(bottom)
    negative = c < 0 and num is not None and c == -1.0
    if num is None:
        num = Const(c)
    elif c != 1.0 and not negative:
        num = Mul(Const(c), num)
    result = num if den is None else Div(num, den)
    return Neg(result) if negative else result


def _product(e: Expr) -> Expr:
    c, top, bottom = _product_parts(e)
    return _build_product(c, top, bottom)


def _simplify_pow(a: Expr, b: Expr) -> Expr:
    if type(b) is Const:
        if b.value == 0:
            return ONE
        if b.value == 1:
            return a
        if type(a) is Const:
            try:
                return Const(_pow_scalar(a.value, b.value))
            except (ValueError, ZeroDivisionError):
                return Pow(a, b)
        if type(a) is Pow and type(a.args[1]) is Const and b.value.is_integer():
            return _simplify_pow(a.args[0], Const(a.args[1].value * b.value))
    if _c(a, 1):
        return ONE
    return Pow(a, b)
