"""Expression trees for defining functions r^t(z).

Grammar (whitespace insensitive)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := ('-' | '+') factor | base ('^' exponent)?
    base   := number | number 'i' | 'i' | 'z'k | 't'
            | ident '(' expr ')' | '(' expr ')'
    ident  := conj | re | im | abs2 | exp | log | chi0 | chi1 | phi | step
              (smooth profiles may carry a derivative suffix, e.g. chi1_d2)

Variables are ``z1 .. zn`` and the parameter ``t``; ``conj(zj)`` is the
antiholomorphic variable.  Complex literals are written ``(a+bi)``.

Nodes are immutable and hash-consed by structure.  Differentiation is
Wirtinger-exact: ``d/dz_j``, ``d/dzbar_j`` and ``d/dt`` map the grammar to
itself.  ``compile`` turns a tree into a vectorised numpy function with
common subexpressions evaluated once.
"""

from __future__ import annotations

import functools
import re as _re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .smooth import SMOOTH_FUNCTIONS

__all__ = [
    "Expr",
    "DefiningExpr",
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ArityError",
    "EvaluationError",
    "parse",
    "parse_defining_function",
    "to_text",
    "const",
    "var",
    "conj_var",
    "param",
]


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ArityError(ExprSyntaxError):
    pass


class EvaluationError(ExprError, ArithmeticError):
    """Domain error during evaluation (division by zero, log of a nonpositive real)."""


_UNARY_FUNCS = ("conj", "re", "im", "abs2", "exp", "log")
_BINARY = ("add", "sub", "mul", "div")


class Expr:
    """Immutable expression node.

    ``op`` is one of ``const var param neg add sub mul div pow conj re im
    abs2 exp log smooth``.  ``data`` holds the constant value, variable
    index, integer exponent or ``(name, order)`` for smooth profiles.
    """

    __slots__ = ("op", "args", "data", "_hash")

    def __init__(self, op: str, args: tuple = (), data=None):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "args", tuple(args))
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "_hash", hash((op, data, self.args)))

    def __setattr__(self, key, value):
        raise AttributeError("Expr nodes are immutable")

    def __hash__(self):
        return self._hash

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Expr) or self._hash != other._hash:
            return False
        return self.op == other.op and self.data == other.data and self.args == other.args

    def __repr__(self):
        return f"Expr({to_text(self)!r})"

    def __str__(self):
        return to_text(self)

    # arithmetic sugar, all routed through the simplifying constructors
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __pow__(self, k: int):
        return power(self, k)

    def __neg__(self):
        return neg(self)

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    @property
    def is_real(self) -> bool:
        """Conservative test that the node always evaluates to a real number."""
        return _is_real(self)

    def variables(self) -> set:
        out = set()
        stack = [self]
        seen = set()
        while stack:
            e = stack.pop()
            if id(e) in seen:
                continue
            seen.add(id(e))
            if e.op == "var":
                out.add(e.data)
            stack.extend(e.args)
        return out


def _is_real(e: Expr, _cache={}) -> bool:  # noqa: B006
    r = _cache.get(e)
    if r is None:
        op = e.op
        if op == "const":
            r = e.data.imag == 0.0
        elif op in ("param", "re", "im", "abs2", "smooth"):
            r = True
        elif op in ("neg", "add", "sub", "mul", "div", "pow", "exp"):
            r = all(_is_real(a) for a in e.args)
        else:
            r = False
        if len(_cache) < 500_000:
            _cache[e] = r
    return r


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float, complex, np.number)):
        return const(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


# ---------------------------------------------------------------- constructors

def const(value) -> Expr:
    v = complex(value)
    # normalise signed zeros so printing and hashing agree
    v = complex(v.real + 0.0, v.imag + 0.0)
    return Expr("const", (), v)


ZERO = const(0)
ONE = const(1)


def var(j: int) -> Expr:
    """The holomorphic coordinate z_{j+1} (0-based index)."""
    return Expr("var", (), int(j))


def conj_var(j: int) -> Expr:
    return Expr("conj", (var(j),))


def param() -> Expr:
    return Expr("param", ())


def _is_zero(e):
    return e.op == "const" and e.data == 0


def _is_one(e):
    return e.op == "const" and e.data == 1


def add(a: Expr, b: Expr) -> Expr:
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    if a.is_const and b.is_const:
        return const(a.data + b.data)
    if b.op == "neg":
        return sub(a, b.args[0])
    return Expr("add", (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if _is_zero(b):
        return a
    if _is_zero(a):
        return neg(b)
    if a.is_const and b.is_const:
        return const(a.data - b.data)
    if a == b:
        return ZERO
    return Expr("sub", (a, b))


def neg(a: Expr) -> Expr:
    if a.is_const:
        return const(-a.data)
    if a.op == "neg":
        return a.args[0]
    return Expr("neg", (a,))


def mul(a: Expr, b: Expr) -> Expr:
    if _is_zero(a) or _is_zero(b):
        return ZERO
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    if a.is_const and b.is_const:
        return const(a.data * b.data)
    if a.is_const and a.data == -1:
        return neg(b)
    if b.is_const and b.data == -1:
        return neg(a)
    if b.is_const and not a.is_const:
        a, b = b, a
    return Expr("mul", (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if _is_zero(a):
        return ZERO
    if _is_one(b):
        return a
    if a.is_const and b.is_const and b.data != 0:
        return const(a.data / b.data)
    return Expr("div", (a, b))


def power(a: Expr, k: int) -> Expr:
    k = int(k)
    if k == 0:
        return ONE
    if k == 1:
        return a
    if a.is_const and not (a.data == 0 and k < 0):
        return const(a.data**k)
    return Expr("pow", (a,), k)


def conj(a: Expr) -> Expr:
    if a.is_const:
        return const(a.data.conjugate())
    if a.op == "conj":
        return a.args[0]
    if a.is_real:
        return a
    return Expr("conj", (a,))


def real_part(a: Expr) -> Expr:
    if a.is_const:
        return const(a.data.real)
    if a.is_real:
        return a
    return Expr("re", (a,))


def imag_part(a: Expr) -> Expr:
    if a.is_const:
        return const(a.data.imag)
    if a.is_real:
        return ZERO
    return Expr("im", (a,))


def abs2(a: Expr) -> Expr:
    if a.is_const:
        return const(abs(a.data) ** 2)
    return Expr("abs2", (a,))


def exp(a: Expr) -> Expr:
    if _is_zero(a):
        return ONE
    return Expr("exp", (a,))


def log(a: Expr) -> Expr:
    if _is_one(a):
        return ZERO
    return Expr("log", (a,))


def smooth(name: str, a: Expr, order: int = 0) -> Expr:
    if name not in SMOOTH_FUNCTIONS:
        raise ValueError(f"unknown smooth profile {name!r}")
    return Expr("smooth", (a,), (name, int(order)))


def sqrt(a: Expr) -> Expr:
    """Principal square root, expressed as exp(log(a)/2) to stay in the grammar."""
    return exp(mul(const(0.5), log(a)))


_FUNC_BUILDERS = {
    "conj": conj,
    "re": real_part,
    "im": imag_part,
    "abs2": abs2,
    "exp": exp,
    "log": log,
}

# raw constructors (no simplification) used by the parser so that
# parse(print(tree)) reproduces the tree node for node
_RAW = {
    "add": lambda a, b: Expr("add", (a, b)),
    "sub": lambda a, b: Expr("sub", (a, b)),
    "mul": lambda a, b: Expr("mul", (a, b)),
    "div": lambda a, b: Expr("div", (a, b)),
}


# --------------------------------------------------------------------- printer

def _fmt_real(x: float) -> str:
    # repr round-trips floats exactly
    return repr(float(x))


def _fmt_const(c: complex) -> str:
    re_, im_ = c.real, c.imag
    if im_ == 0.0:
        return _fmt_real(re_) if re_ >= 0 else f"(-{_fmt_real(-re_)})"
    if re_ == 0.0:
        return f"{_fmt_real(im_)}i" if im_ > 0 else f"(-{_fmt_real(-im_)}i)"
    rs = _fmt_real(re_) if re_ >= 0 else f"-{_fmt_real(-re_)}"
    sign = "+" if im_ > 0 else "-"
    return f"({rs}{sign}{_fmt_real(abs(im_))}i)"


_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def to_text(e: Expr) -> str:
    """Canonical fully parenthesised text; ``parse`` inverts it exactly."""
    memo: dict[int, str] = {}

    def go(node: Expr) -> str:
        key = id(node)
        if key in memo:
            return memo[key]
        op = node.op
        if op == "const":
            s = _fmt_const(node.data)
        elif op == "var":
            s = f"z{node.data + 1}"
        elif op == "param":
            s = "t"
        elif op in _SYMBOL:
            s = f"({go(node.args[0])} {_SYMBOL[op]} {go(node.args[1])})"
        elif op == "neg":
            s = f"(-{go(node.args[0])})"
        elif op == "pow":
            k = node.data
            base = go(node.args[0])
            if node.args[0].op == "pow":
                base = f"({base})"
            s = f"{base}^{k}" if k >= 0 else f"{base}^(-{-k})"
        elif op == "smooth":
            name, order = node.data
            fname = name if order == 0 else f"{name}_d{order}"
            s = f"{fname}({go(node.args[0])})"
        else:
            s = f"{op}({go(node.args[0])})"
        memo[key] = s
        return s

    return go(e)


def tree_lines(e: Expr, indent: str = "") -> list[str]:
    """Indented one-node-per-line dump (used by the CLI ``parse`` command)."""
    op = e.op
    if op == "const":
        label = _fmt_const(e.data)
    elif op == "var":
        label = f"z{e.data + 1}"
    elif op == "param":
        label = "t"
    elif op == "pow":
        label = f"pow {e.data}"
    elif op == "smooth":
        label = f"{e.data[0]} (derivative {e.data[1]})"
    else:
        label = op
    out = [indent + label]
    for a in e.args:
        out.extend(tree_lines(a, indent + "  "))
    return out


# ---------------------------------------------------------------------- parser

_TOKEN_RE = _re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<imag>i(?![A-Za-z0-9_]))?"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^(),]))"
)
_SMOOTH_NAME_RE = _re.compile(r"^(?P<name>[a-z0-9]+?)(?:_d(?P<order>\d+))?$")


@dataclass
class _Tok:
    kind: str
    text: str
    offset: int
    value: object = None


def _tokenize(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    raw = text
    while pos < len(raw):
        if raw[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(raw, pos)
        if not m or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {raw[pos]!r}", _byte_offset(raw, pos))
        start = m.start(m.lastgroup) if m.lastgroup else pos
        if m.group("num") is not None:
            v = float(m.group("num"))
            if m.group("imag"):
                toks.append(_Tok("num", m.group(0).strip(), _byte_offset(raw, start), complex(0, v)))
            else:
                toks.append(_Tok("num", m.group("num"), _byte_offset(raw, start), complex(v)))
        elif m.group("ident") is not None:
            toks.append(_Tok("ident", m.group("ident"), _byte_offset(raw, m.start("ident"))))
        else:
            toks.append(_Tok("op", m.group("op"), _byte_offset(raw, m.start("op"))))
        pos = m.end()
    toks.append(_Tok("end", "", _byte_offset(raw, len(raw))))
    return toks


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, n: int):
        self.toks = _tokenize(text)
        self.i = 0
        self.n = n

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.take()
        if tok.kind != "op" or tok.text != text:
            got = tok.text or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, got {got!r}", tok.offset)
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected token {tok.text!r}", tok.offset)
        return e

    def _binary(self, op: str, a: Expr, b: Expr) -> Expr:
        if a.is_const and b.is_const:
            if op == "div" and b.data == 0:
                raise EvaluationError("division by zero in constant expression")
            return {"add": add, "sub": sub, "mul": mul, "div": div}[op](a, b)
        return _RAW[op](a, b)

    def expr(self) -> Expr:
        e = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = "add" if self.take().text == "+" else "sub"
            e = self._binary(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = "mul" if self.take().text == "*" else "div"
            e = self._binary(op, e, self.factor())
        return e

    def factor(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.take()
            a = self.factor()
            return const(-a.data) if a.is_const else Expr("neg", (a,))
        if tok.kind == "op" and tok.text == "+":
            self.take()
            return self.factor()
        base = self.base()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            k = self.exponent()
            if base.is_const:
                if base.data == 0 and k < 0:
                    raise EvaluationError("division by zero in constant expression")
                return const(base.data**k)
            return Expr("pow", (base,), k)
        return base

    def exponent(self) -> int:
        tok = self.peek()
        sign = 1
        paren = False
        if tok.kind == "op" and tok.text == "(":
            self.take()
            paren = True
            tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.take()
            sign = -1
            tok = self.peek()
        tok = self.take()
        if tok.kind != "num" or tok.value.imag != 0 or not _re.fullmatch(r"\d+", tok.text):
            raise ExprSyntaxError("exponent must be an integer", tok.offset)
        if paren:
            self.expect(")")
        return sign * int(tok.text)

    def base(self) -> Expr:
        tok = self.take()
        if tok.kind == "num":
            return const(tok.value)
        if tok.kind == "op" and tok.text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind == "ident":
            name = tok.text
            if name == "t":
                return param()
            if name == "i":
                return const(1j)
            m = _re.fullmatch(r"z(\d+)", name)
            if m:
                k = int(m.group(1))
                if not 1 <= k <= self.n:
                    raise UnknownIdentifierError(
                        f"unknown identifier {name!r} (dimension n={self.n})", tok.offset
                    )
                return var(k - 1)
            builder = self._function(name, tok.offset)
            self.expect("(")
            args = [self.expr()]
            while self.peek().kind == "op" and self.peek().text == ",":
                self.take()
                args.append(self.expr())
            close = self.expect(")")
            if len(args) != 1:
                raise ArityError(f"{name} takes 1 argument, got {len(args)}", close.offset)
            return builder(args[0])
        got = tok.text or "end of input"
        raise ExprSyntaxError(f"unexpected token {got!r}", tok.offset)

    def _function(self, name: str, offset: int):
        if name in _UNARY_FUNCS:
            # fold constants only where the result stays a plain constant
            fold = name in ("conj", "re", "im", "abs2")
            return lambda a: _FUNC_BUILDERS[name](a) if (fold and a.is_const) else Expr(name, (a,))
        m = _SMOOTH_NAME_RE.match(name)
        if m and m.group("name") in SMOOTH_FUNCTIONS:
            order = int(m.group("order") or 0)
            return lambda a: Expr("smooth", (a,), (m.group("name"), order))
        raise UnknownIdentifierError(f"unknown identifier {name!r}", offset)


def parse(text: str, n: int) -> Expr:
    """Parse ``text`` into an expression over z1..zn and t."""
    if n < 1:
        raise ValueError("dimension n must be >= 1")
    return _Parser(text, n).parse()


# ------------------------------------------------------------ differentiation

@functools.lru_cache(maxsize=400_000)
def derivative(e: Expr, wrt: tuple) -> Expr:
    """Wirtinger derivative of ``e``.

    ``wrt`` is ``("z", j)``, ``("zbar", j)`` (0-based j) or ``("t",)``.
    """
    op = e.op
    if op == "const":
        return ZERO
    if op == "var":
        return ONE if wrt == ("z", e.data) else ZERO
    if op == "param":
        return ONE if wrt == ("t",) else ZERO
    if op == "add":
        return add(derivative(e.args[0], wrt), derivative(e.args[1], wrt))
    if op == "sub":
        return sub(derivative(e.args[0], wrt), derivative(e.args[1], wrt))
    if op == "neg":
        return neg(derivative(e.args[0], wrt))
    if op == "mul":
        a, b = e.args
        return add(mul(derivative(a, wrt), b), mul(a, derivative(b, wrt)))
    if op == "div":
        a, b = e.args
        da, db = derivative(a, wrt), derivative(b, wrt)
        return sub(div(da, b), div(mul(a, db), power(b, 2)))
    if op == "pow":
        a = e.args[0]
        k = e.data
        return mul(mul(const(k), power(a, k - 1)), derivative(a, wrt))
    if op == "exp":
        return mul(e, derivative(e.args[0], wrt))
    if op == "log":
        a = e.args[0]
        return div(derivative(a, wrt), a)
    if op == "conj":
        return conj(derivative(e.args[0], _flip(wrt)))
    if op == "re":
        a = e.args[0]
        return mul(const(0.5), add(derivative(a, wrt), conj(derivative(a, _flip(wrt)))))
    if op == "im":
        a = e.args[0]
        return mul(const(-0.5j), sub(derivative(a, wrt), conj(derivative(a, _flip(wrt)))))
    if op == "abs2":
        a = e.args[0]
        ca = conj(a)
        return add(mul(derivative(a, wrt), ca), mul(a, conj(derivative(a, _flip(wrt)))))
    if op == "smooth":
        name, order = e.data
        a = e.args[0]
        return mul(Expr("smooth", (a,), (name, order + 1)), derivative(a, wrt))
    raise ExprError(f"cannot differentiate node {op!r}")


def _flip(wrt: tuple) -> tuple:
    if wrt[0] == "z":
        return ("zbar", wrt[1])
    if wrt[0] == "zbar":
        return ("z", wrt[1])
    return wrt


def substitute(e: Expr, images: dict) -> Expr:
    """Replace variables: ``images`` maps 0-based index j to the Expr for z_j.

    ``conj(z_j)`` becomes ``conj(image)`` automatically.  The parameter ``t``
    may be replaced via the key ``"t"``.
    """
    memo: dict[int, Expr] = {}

    def go(node: Expr) -> Expr:
        key = id(node)
        if key in memo:
            return memo[key]
        op = node.op
        if op == "var":
            out = images.get(node.data, node)
        elif op == "param":
            out = images.get("t", node)
        elif op == "const":
            out = node
        else:
            args = [go(a) for a in node.args]
            if op == "add":
                out = add(*args)
            elif op == "sub":
                out = sub(*args)
            elif op == "mul":
                out = mul(*args)
            elif op == "div":
                out = div(*args)
            elif op == "neg":
                out = neg(args[0])
            elif op == "pow":
                out = power(args[0], node.data)
            elif op == "conj":
                out = conj(args[0])
            elif op == "re":
                out = real_part(args[0])
            elif op == "im":
                out = imag_part(args[0])
            elif op == "abs2":
                out = abs2(args[0])
            elif op == "exp":
                out = exp(args[0])
            elif op == "log":
                out = log(args[0])
            elif op == "smooth":
                out = Expr("smooth", (args[0],), node.data)
            else:  # pragma: no cover
                raise ExprError(op)
        memo[key] = out
        return out

    return go(e)


# ------------------------------------------------------------------- compiler

def _check_div(den):
    if np.any(den == 0):
        raise EvaluationError("division by zero")
    return den


def _check_log(a):
    a = np.asarray(a)
    bad = (a.imag == 0) & (a.real <= 0)
    if np.any(bad):
        raise EvaluationError("log of a nonpositive real number")
    return np.log(a)


def _smooth_eval(name, order, a):
    fn, max_order = SMOOTH_FUNCTIONS[name]
    if order > max_order:
        raise EvaluationError(f"{name} derivative of order {order} not available")
    return fn(np.real(a), order).astype(complex)


def compile_exprs(exprs: list[Expr], n: int, checked: bool = True):
    """Compile several trees into one numpy function sharing subexpressions.

    The returned callable takes ``z`` of shape ``(..., n)`` (complex) and a
    scalar or broadcastable ``t``; it returns a list of complex arrays.
    With ``checked`` False, domain errors give inf/nan instead of raising.
    """
    names: dict[Expr, str] = {}
    lines: list[str] = []
    counter = [0]

    def emit(node: Expr) -> str:
        if node in names:
            return names[node]
        op = node.op
        if op == "const":
            code = f"{node.data!r}"
        elif op == "var":
            code = f"z[..., {node.data}]"
        elif op == "param":
            code = "t"
        else:
            a = [emit(x) for x in node.args]
            if op == "add":
                code = f"{a[0]} + {a[1]}"
            elif op == "sub":
                code = f"{a[0]} - {a[1]}"
            elif op == "mul":
                code = f"{a[0]} * {a[1]}"
            elif op == "div":
                code = f"{a[0]} / _check_div({a[1]})"
            elif op == "neg":
                code = f"-{a[0]}"
            elif op == "pow":
                k = node.data
                if k > 0:
                    code = f"{a[0]} ** {k}"
                else:
                    code = f"1.0 / _check_div({a[0]} ** {-k})"
            elif op == "conj":
                code = f"np.conj({a[0]})"
            elif op == "re":
                code = f"np.real({a[0]}) + 0j"
            elif op == "im":
                code = f"np.imag({a[0]}) + 0j"
            elif op == "abs2":
                code = f"(np.real({a[0]}) ** 2 + np.imag({a[0]}) ** 2) + 0j"
            elif op == "exp":
                code = f"np.exp({a[0]})"
            elif op == "log":
                code = f"_check_log({a[0]})"
            elif op == "smooth":
                name, order = node.data
                code = f"_smooth_eval({name!r}, {order}, {a[0]})"
            else:  # pragma: no cover
                raise ExprError(op)
        counter[0] += 1
        name = f"v{counter[0]}"
        lines.append(f"    {name} = {code}")
        names[node] = name
        return name

    outs = [emit(e) for e in exprs]
    src = "def _f(z, t):\n"
    src += "\n".join(lines) if lines else "    pass"
    src += f"\n    return [{', '.join(outs)}]\n"
    scope = {"np": np, "_smooth_eval": _smooth_eval}
    if checked:
        scope.update(_check_div=_check_div, _check_log=_check_log)
    else:
        scope.update(_check_div=lambda d: d, _check_log=np.log)
    exec(compile(src, "<crlab-expr>", "exec"), scope)
    raw = scope["_f"]

    def fn(z, t=0.0):
        z = np.asarray(z, dtype=complex)
        if z.shape[-1] != n:
            raise ValueError(f"expected points with last axis {n}, got shape {z.shape}")
        t = np.asarray(t, dtype=float)
        shape = z.shape[:-1]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            vals = raw(z, t)
        return [np.broadcast_to(np.asarray(v, dtype=complex), np.broadcast_shapes(shape, t.shape)) for v in vals]

    fn.source = src
    return fn


# ------------------------------------------------------------- DefiningExpr

IMAG_TOL = 1e-12


@dataclass(frozen=True)
class DefiningExpr:
    """A real-valued expression r(z, t) over C^n, with exact symbolic calculus."""

    root: Expr
    n: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    @classmethod
    def parse(cls, text: str, n: int) -> DefiningExpr:
        return cls(parse(text, n), n)

    def __str__(self):
        return to_text(self.root)

    @cached_property
    def _compiled(self):
        return compile_exprs([self.root], self.n)

    @cached_property
    def _compiled_unchecked(self):
        return compile_exprs([self.root], self.n, checked=False)

    def evaluate_complex(self, z, t=0.0, checked: bool = True):
        if checked:
            return self._compiled(z, t)[0]
        return self._compiled_unchecked(z, t)[0]

    def evaluate(self, z, t=0.0):
        """Real value of r at ``z`` (shape ``(..., n)``); rejects complex residue."""
        v = self.evaluate_complex(z, t)
        if not np.all(np.isfinite(v)):
            raise EvaluationError("non-finite value")
        resid = np.abs(v.imag)
        if np.any(resid > IMAG_TOL * np.maximum(1.0, np.abs(v.real))):
            raise EvaluationError(f"defining expression is not real (imaginary residue {resid.max():.3e})")
        out = v.real
        return float(out) if out.ndim == 0 else out

    def d(self, wrt: tuple) -> DefiningExpr:
        key = ("d", wrt)
        if key not in self._cache:
            self._cache[key] = DefiningExpr(derivative(self.root, wrt), self.n)
        return self._cache[key]

    def dz(self, j: int) -> DefiningExpr:
        return self.d(("z", j))

    def dzbar(self, j: int) -> DefiningExpr:
        return self.d(("zbar", j))

    def dt(self) -> DefiningExpr:
        return self.d(("t",))

    def substitute(self, images: dict, n: int | None = None) -> DefiningExpr:
        return DefiningExpr(substitute(self.root, images), self.n if n is None else n)

    def compiled_derivatives(self, orders: str = "grad", checked: bool = True):
        """Compiled evaluator for derivative bundles.

        ``"grad"`` returns ``[r, r_z1..r_zn]``; ``"second"`` returns
        ``[r, r_z (n), levi (n*n, row-major r_{z_j zbar_k}), holo (n*n)]``.
        """
        key = ("compiled", orders, checked)
        if key in self._cache:
            return self._cache[key]
        n = self.n
        exprs = [self.root] + [derivative(self.root, ("z", j)) for j in range(n)]
        if orders == "second":
            grads = exprs[1:]
            exprs += [derivative(grads[j], ("zbar", k)) for j in range(n) for k in range(n)]
            exprs += [derivative(grads[j], ("z", k)) for j in range(n) for k in range(n)]
        elif orders != "grad":
            raise ValueError(orders)
        fn = compile_exprs(exprs, n, checked=checked)
        self._cache[key] = fn
        return fn


def parse_defining_function(text: str, n: int) -> DefiningExpr:
    return DefiningExpr.parse(text, n)
