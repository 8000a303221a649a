"""Expression trees for entire functions: parsing, evaluation, calculus.

Functions come in as text expressions over ``z`` (grammar below) or as
coefficient lists for a truncated power series.  Evaluation never raises on
large values: past native floating range it degrades to a log-magnitude
estimate carried by :class:`EvalResult`.

Grammar (whitespace insensitive)::

    expr   := term { ("+"|"-") term }
    term   := factor { ("*"|"/") factor }
    factor := base [ "^" uint ] | "-" factor
    base   := number | "z" | "i" | "pi" | "e" | ident "(" expr ")" | "(" expr ")"
    ident  in {exp, sin, cos, sinh, cosh, sqrt, log}

``^`` accepts non-negative integer exponents only; ``sqrt`` and ``log``
use the principal branch.  Whether the written expression is actually
entire is the caller's responsibility (``cos(sqrt(z))`` is, ``sqrt(z)``
alone is not).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import backend
from ._tape import compile_tape

BUILTINS = ("exp", "sin", "cos", "sinh", "cosh", "sqrt", "log")

_CONSTANTS = {"i": 1j, "pi": complex(math.pi), "e": complex(math.e)}


class ExprError(ValueError):
    """Parse failure; ``offset`` is the byte offset into the source text."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Const:
    value: complex


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    arg: "ExprAst"


@dataclass(frozen=True)
class Add:
    left: "ExprAst"
    right: "ExprAst"


@dataclass(frozen=True)
class Mul:
    left: "ExprAst"
    right: "ExprAst"


@dataclass(frozen=True)
class Div:
    num: "ExprAst"
    den: "ExprAst"


@dataclass(frozen=True)
class Pow:
    base: "ExprAst"
    exponent: int


@dataclass(frozen=True)
class Call:
    name: str
    arg: "ExprAst"


@dataclass(frozen=True)
class Poly:
    """Exact truncated power series sum(coeffs[k] * z^k).

    ``tail_bound``, when supplied by the producer of the coefficients,
    documents a bound on the discarded tail on the intended radius range;
    it travels with the node and is not used in evaluation.
    """

    coeffs: tuple
    tail_bound: Optional[float] = None

    def __post_init__(self):
        if len(self.coeffs) == 0 or all(c == 0 for c in self.coeffs):
            raise ValueError("coefficient list needs at least one nonzero coefficient")


ExprAst = Union[Const, Var, Neg, Add, Mul, Div, Pow, Call, Poly]


@dataclass(frozen=True)
class EvalResult:
    """Value of f(z): exactly one of the finite / overflow variants.

    finite   -> ``value`` is set and ``log_magnitude == ln|value|``.
    overflow -> ``value`` is None; ``log_magnitude`` estimates ln|f(z)| by
                factorwise log accumulation, usable while ``valid``.
    """

    value: Optional[complex]
    log_magnitude: float
    valid: bool

    @property
    def is_finite(self):
        return self.value is not None


# ---------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            raise ExprError(f"unexpected character {stripped[0]!r}", len(text) - len(stripped))
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name"), m.start("name")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            raise ExprError(f"expected {op!r}", off)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExprError(f"trailing input {val!r}", off)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, val, off = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.term()
                node = Add(node, rhs if val == "+" else Neg(rhs))
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, val, off = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.factor()
                node = Mul(node, rhs) if val == "*" else Div(node, rhs)
            else:
                return node

    def factor(self):
        kind, val, off = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.factor())
        node = self.base()
        kind, val, off = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            kind, val, off = self.peek()
            if kind != "num":
                raise ExprError("expected non-negative integer exponent after '^'", off)
            if not val.isdigit():
                raise ExprError(f"non-integer exponent {val!r}", off)
            self.advance()
            node = Pow(node, int(val))
        return node

    def base(self):
        kind, val, off = self.advance()
        if kind == "num":
            return Const(complex(float(val)))
        if kind == "name":
            if val in _CONSTANTS:
                return Const(_CONSTANTS[val])
            if val == "z":
                return Var()
            if val in BUILTINS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(val, arg)
            raise ExprError(f"unknown identifier {val!r}", off)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExprError(f"unexpected token {val!r}" if val else "unexpected end of input", off)


def parse(text: str) -> ExprAst:
    """Parse an expression in the module grammar into an AST."""
    return _Parser(text).parse()


def load_coefficients(path) -> Poly:
    """Read a "poly:" coefficient file: one "re im" pair per line, degree 0 first.

    An optional second header line "tail: <float>" records a caller-supplied
    bound on the truncated tail.
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or lines[0] != "poly:":
        raise ValueError(f"{path}: expected 'poly:' header")
    tail = None
    body = lines[1:]
    if body and body[0].startswith("tail:"):
        tail = float(body[0].split(":", 1)[1])
        body = body[1:]
    coeffs = []
    for ln in body:
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"{path}: bad coefficient line {ln!r}")
        coeffs.append(complex(float(parts[0]), float(parts[1])))
    return Poly(tuple(coeffs), tail)


# --------------------------------------------------------------- printing

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _fmt_real(x: float) -> str:
    if x == int(x) and abs(x) < 1e16:
        return repr(float(x))
    return repr(x)


def _prec(node) -> int:
    if isinstance(node, (Const, Var, Call, Poly)):
        if isinstance(node, Const):
            c = node.value
            if c.imag == 0 and c.real >= 0:
                return _PREC_ATOM
            if c == 1j:
                return _PREC_ATOM
            return _PREC_ADD  # printed as a composite
        return _PREC_ATOM
    if isinstance(node, Pow):
        return _PREC_POW
    if isinstance(node, Neg):
        return _PREC_NEG
    if isinstance(node, (Mul, Div)):
        return _PREC_MUL
    return _PREC_ADD


def _wrap(node, context_prec) -> str:
    s = to_source(node)
    if _prec(node) < context_prec:
        return f"({s})"
    return s


def to_source(node) -> str:
    """Render an AST back to grammar text; inverse of :func:`parse` on its image."""
    if isinstance(node, Const):
        c = node.value
        if c == 1j:
            return "i"
        if c.imag == 0:
            if c.real < 0:
                return f"-{_fmt_real(-c.real)}"
            return _fmt_real(c.real)
        re_part = _fmt_real(abs(c.real)) if c.real else None
        im_mag = _fmt_real(abs(c.imag))
        im_part = f"{im_mag}*i"
        if re_part is None:
            return im_part if c.imag > 0 else f"-{im_part}"
        sign = "+" if c.imag > 0 else "-"
        lead = re_part if c.real > 0 else f"-{re_part}"
        return f"({lead} {sign} {im_part})"
    if isinstance(node, Var):
        return "z"
    if isinstance(node, Neg):
        return "-" + _wrap(node.arg, _PREC_NEG)
    if isinstance(node, Add):
        left = _wrap(node.left, _PREC_ADD)
        if isinstance(node.right, Neg):
            return f"{left} - {_wrap(node.right.arg, _PREC_NEG)}"
        right = node.right
        rs = to_source(right)
        if _prec(right) < _PREC_ADD or isinstance(right, Add) or rs.startswith("-"):
            rs = f"({rs})"
        return f"{left} + {rs}"
    if isinstance(node, Mul):
        left = _wrap(node.left, _PREC_MUL)
        right = node.right
        rs = to_source(right)
        if _prec(right) < _PREC_MUL or isinstance(right, (Mul, Div)):
            rs = f"({rs})"
        return f"{left}*{rs}"
    if isinstance(node, Div):
        left = _wrap(node.num, _PREC_MUL)
        rs = to_source(node.den)
        if _prec(node.den) < _PREC_MUL or isinstance(node.den, (Mul, Div)):
            rs = f"({rs})"
        return f"{left}/{rs}"
    if isinstance(node, Pow):
        base = node.base
        bs = to_source(base)
        if _prec(base) < _PREC_ATOM:
            bs = f"({bs})"
        return f"{bs}^{node.exponent}"
    if isinstance(node, Call):
        return f"{node.name}({to_source(node.arg)})"
    if isinstance(node, Poly):
        raise ValueError("coefficient-list nodes have no text form; write a poly: file")
    raise TypeError(f"cannot print {type(node).__name__}")


# ------------------------------------------------------------- evaluation

def eval_many(f: ExprAst, zs) -> tuple:
    """Vectorized evaluation: returns (value, logabs, finite) arrays."""
    tape = compile_tape(f)
    return backend.eval_batch(tape, np.asarray(zs, dtype=np.complex128))


def evaluate(f: ExprAst, z: complex) -> EvalResult:
    """Evaluate f at a single point; overflow degrades to a log estimate."""
    value, logabs, finite = eval_many(f, np.array([z], dtype=np.complex128))
    la = float(logabs[0])
    if bool(finite[0]):
        v = complex(value[0])
        return EvalResult(v, math.log(abs(v)) if v != 0 else -math.inf, True)
    return EvalResult(None, la, not math.isnan(la))


# -------------------------------------------------------------- calculus

def _is_const(node, value=None):
    return isinstance(node, Const) and (value is None or node.value == value)


def _fold(node):
    if isinstance(node, Neg):
        a = _fold(node.arg)
        if isinstance(a, Const):
            return Const(-a.value)
        return Neg(a)
    if isinstance(node, Add):
        l, r = _fold(node.left), _fold(node.right)
        if isinstance(l, Const) and isinstance(r, Const):
            return Const(l.value + r.value)
        if _is_const(l, 0):
            return r
        if _is_const(r, 0):
            return l
        return Add(l, r)
    if isinstance(node, Mul):
        l, r = _fold(node.left), _fold(node.right)
        if isinstance(l, Const) and isinstance(r, Const):
            return Const(l.value * r.value)
        if _is_const(l, 0) or _is_const(r, 0):
            return Const(0)
        if _is_const(l, 1):
            return r
        if _is_const(r, 1):
            return l
        return Mul(l, r)
    if isinstance(node, Div):
        n, d = _fold(node.num), _fold(node.den)
        if isinstance(n, Const) and isinstance(d, Const) and d.value != 0:
            return Const(n.value / d.value)
        if _is_const(n, 0):
            return Const(0)
        if _is_const(d, 1):
            return n
        return Div(n, d)
    if isinstance(node, Pow):
        b = _fold(node.base)
        if node.exponent == 0:
            return Const(1)
        if node.exponent == 1:
            return b
        if isinstance(b, Const):
            return Const(b.value ** node.exponent)
        return Pow(b, node.exponent)
    if isinstance(node, Call):
        return Call(node.name, _fold(node.arg))
    return node


def _diff(node):
    if isinstance(node, Const):
        return Const(0)
    if isinstance(node, Var):
        return Const(1)
    if isinstance(node, Neg):
        return Neg(_diff(node.arg))
    if isinstance(node, Add):
        return Add(_diff(node.left), _diff(node.right))
    if isinstance(node, Mul):
        return Add(Mul(_diff(node.left), node.right), Mul(node.left, _diff(node.right)))
    if isinstance(node, Div):
        num = Add(Mul(_diff(node.num), node.den), Neg(Mul(node.num, _diff(node.den))))
        return Div(num, Pow(node.den, 2))
    if isinstance(node, Pow):
        inner = Mul(Const(node.exponent), Pow(node.base, node.exponent - 1))
        return Mul(inner, _diff(node.base))
    if isinstance(node, Call):
        u, du = node.arg, _diff(node.arg)
        if node.name == "exp":
            outer = Call("exp", u)
        elif node.name == "sin":
            outer = Call("cos", u)
        elif node.name == "cos":
            outer = Neg(Call("sin", u))
        elif node.name == "sinh":
            outer = Call("cosh", u)
        elif node.name == "cosh":
            outer = Call("sinh", u)
        elif node.name == "sqrt":
            outer = Div(Const(1), Mul(Const(2), Call("sqrt", u)))
        elif node.name == "log":
            outer = Div(Const(1), u)
        else:  # pragma: no cover
            raise ValueError(f"no derivative rule for {node.name}")
        return Mul(outer, du)
    if isinstance(node, Poly):
        if len(node.coeffs) == 1:
            return Const(0)
        dcoeffs = tuple(k * c for k, c in enumerate(node.coeffs) if k >= 1)
        if all(c == 0 for c in dcoeffs):
            return Const(0)
        return Poly(dcoeffs, None)
    raise TypeError(f"cannot differentiate {type(node).__name__}")


def derivative(f: ExprAst) -> ExprAst:
    """Symbolic derivative; simplification is limited to constant folding."""
    return _fold(_diff(f))


def is_real_symmetric(f: ExprAst, tol: float = 1e-9) -> bool:
    """True when conj(f(z)) == f(conj(z)) at a fixed probe set.

    Holds for expressions with real coefficients; used to halve circle
    sweeps via |f(r e^{-i t})| = |f(r e^{i t})|.
    """
    rng = np.random.default_rng(20260314)
    pts = rng.uniform(-3, 3, size=8) + 1j * rng.uniform(-3, 3, size=8)
    va, la, fa = eval_many(f, pts)
    vb, lb, fb = eval_many(f, np.conj(pts))
    if not (np.all(fa) and np.all(fb)):
        return False
    scale = np.maximum(1.0, np.abs(va))
    return bool(np.all(np.abs(np.conj(va) - vb) <= tol * scale))


# ------------------------------------------------------ Taylor coefficients

@dataclass(frozen=True)
class TaylorResult:
    coefficients: np.ndarray     # a_0 .. a_{count-1}
    error_bounds: np.ndarray     # per-coefficient bound: aliasing + roundoff
    radius: float
    samples: int


def taylor_coefficients(f: ExprAst, count: int, radius: float) -> TaylorResult:
    """Power-series coefficients a_k recovered from circle samples.

    Uniform samples of f on |z| = radius are pushed through a DFT; column k
    divided by radius^k estimates a_k.  The reported error bound combines
    measured high-band magnitudes (aliasing) with a DFT roundoff term, both
    scaled down by radius^k.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if radius <= 0:
        raise ValueError("radius must be positive")
    n = 128
    while n < 4 * count:
        n *= 2
    theta = 2.0 * np.pi * np.arange(n) / n
    zs = radius * np.exp(1j * theta)
    vals, logabs, finite = eval_many(f, zs)
    if not np.all(finite):
        raise OverflowError(f"function overflows on the sampling circle |z| = {radius}")
    b = np.fft.fft(vals) / n  # b_k ~= a_k * radius^k (plus aliases)
    vmax = float(np.max(np.abs(vals)))
    band = np.abs(b[n // 2:])
    alias = 2.0 * float(np.max(band)) if band.size else 0.0
    roundoff = 4.0 * n * np.finfo(float).eps * vmax
    ks = np.arange(count)
    scale = radius ** ks.astype(float)
    coeffs = b[:count] / scale
    bounds = (alias + roundoff) / scale
    return TaylorResult(coeffs, bounds, float(radius), n)
