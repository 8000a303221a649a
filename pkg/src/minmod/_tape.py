"""Flat instruction tapes for batch evaluation of expression trees.

An AST is compiled once into a postfix program over a small value stack.
Both the compiled kernel and the numpy fallback execute the same tape, so
they agree on operation order (and hence on rounding) wherever no rescaling
is triggered.

Values travel in scaled form ``m * exp(s)`` with a complex mantissa ``m``
and a real exponent ``s``, which keeps log-magnitudes meaningful far past
native floating range.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

OP_CONST = 0
OP_Z = 1
OP_NEG = 2
OP_ADD = 3
OP_MUL = 4
OP_DIV = 5
OP_POW = 6
OP_EXP = 7
OP_SIN = 8
OP_COS = 9
OP_SINH = 10
OP_COSH = 11
OP_SQRT = 12
OP_LOG = 13
OP_POLY = 14

_CALL_OPS = {
    "exp": OP_EXP,
    "sin": OP_SIN,
    "cos": OP_COS,
    "sinh": OP_SINH,
    "cosh": OP_COSH,
    "sqrt": OP_SQRT,
    "log": OP_LOG,
}

# Mantissas are renormalized into ~[1e-140, 1e140] so that one more
# multiply or divide can never overflow the mantissa itself.
RENORM_HI = 1e140
RENORM_LO = 1e-140

# exp(z) evaluated directly while |Re z| stays below this; past it the
# scaled path takes over.  Well inside the double exp range on purpose.
DIRECT_EXP_LIMIT = 700.0

# A reconstructed complex value counts as finite below this log-magnitude.
LOG_FINITE_LIMIT = 709.0


@dataclass(frozen=True)
class Tape:
    code: np.ndarray        # (n, 2) int64: opcode, argument
    consts: np.ndarray      # complex128 pool for OP_CONST
    poly_offsets: np.ndarray  # int64, len n_polys+1, into poly_coeffs
    poly_coeffs: np.ndarray   # complex128, coefficients low degree first
    stack_need: int

    def __len__(self):
        return len(self.code)


def _compile_node(node, code, consts, poly_off, poly_co):
    # local import: expr defines the node classes and imports this module
    from . import expr as E

    if isinstance(node, E.Const):
        code.append((OP_CONST, len(consts)))
        consts.append(complex(node.value))
        return 1
    if isinstance(node, E.Var):
        code.append((OP_Z, 0))
        return 1
    if isinstance(node, E.Neg):
        d = _compile_node(node.arg, code, consts, poly_off, poly_co)
        code.append((OP_NEG, 0))
        return d
    if isinstance(node, E.Add):
        dl = _compile_node(node.left, code, consts, poly_off, poly_co)
        dr = _compile_node(node.right, code, consts, poly_off, poly_co)
        code.append((OP_ADD, 0))
        return max(dl, dr + 1)
    if isinstance(node, E.Mul):
        dl = _compile_node(node.left, code, consts, poly_off, poly_co)
        dr = _compile_node(node.right, code, consts, poly_off, poly_co)
        code.append((OP_MUL, 0))
        return max(dl, dr + 1)
    if isinstance(node, E.Div):
        dl = _compile_node(node.num, code, consts, poly_off, poly_co)
        dr = _compile_node(node.den, code, consts, poly_off, poly_co)
        code.append((OP_DIV, 0))
        return max(dl, dr + 1)
    if isinstance(node, E.Pow):
        d = _compile_node(node.base, code, consts, poly_off, poly_co)
        code.append((OP_POW, node.exponent))
        return d
    if isinstance(node, E.Call):
        d = _compile_node(node.arg, code, consts, poly_off, poly_co)
        code.append((_CALL_OPS[node.name], 0))
        return d
    if isinstance(node, E.Poly):
        idx = len(poly_off) - 1
        poly_co.extend(complex(c) for c in node.coeffs)
        poly_off.append(len(poly_co))
        code.append((OP_POLY, idx))
        return 1
    raise TypeError(f"cannot compile node of type {type(node).__name__}")


@lru_cache(maxsize=512)
def compile_tape(ast) -> Tape:
    code: list[tuple[int, int]] = []
    consts: list[complex] = []
    poly_off: list[int] = [0]
    poly_co: list[complex] = []
    depth = _compile_node(ast, code, consts, poly_off, poly_co)
    return Tape(
        code=np.array(code, dtype=np.int64).reshape(-1, 2),
        consts=np.array(consts, dtype=np.complex128),
        poly_offsets=np.array(poly_off, dtype=np.int64),
        poly_coeffs=np.array(poly_co, dtype=np.complex128),
        stack_need=depth,
    )
