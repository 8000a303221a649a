"""Pure-numpy tape execution: the fallback when the compiled core is absent.

Implements exactly the same scaled-value semantics as the compiled kernel:
every stack slot is a pair (mantissa complex128 array, exponent float64
array) representing ``m * exp(s)``.  Transcendental calls switch to a
log-accumulating path only when a direct evaluation would leave native
range, so moderate inputs keep full double accuracy.
"""

from __future__ import annotations

import numpy as np

from ._tape import (
    DIRECT_EXP_LIMIT,
    LOG_FINITE_LIMIT,
    OP_ADD,
    OP_CONST,
    OP_COS,
    OP_COSH,
    OP_DIV,
    OP_EXP,
    OP_LOG,
    OP_MUL,
    OP_NEG,
    OP_POLY,
    OP_POW,
    OP_SIN,
    OP_SINH,
    OP_SQRT,
    OP_Z,
    RENORM_HI,
    RENORM_LO,
    Tape,
)

BACKEND_NAME = "python"


def _renorm(m, s):
    a = np.abs(m)
    bad = ((a > RENORM_HI) | ((a < RENORM_LO) & (a > 0.0))) & np.isfinite(a)
    if np.any(bad):
        k = np.log(a[bad])
        m = m.copy()
        s = s.copy()
        # two half-steps: exp(-k) itself overflows for subnormal mantissas
        e = np.exp(-0.5 * k)
        m[bad] = (m[bad] * e) * e
        s[bad] += k
    return m, s


def _add(ma, sa, mb, sb):
    # align onto the larger exponent; the smaller term may underflow to 0,
    # which is the honest rounding of a hopelessly subdominant summand
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        sa_eff = np.where(ma == 0, -np.inf, sa)
        sb_eff = np.where(mb == 0, -np.inf, sb)
        use_a = sa_eff >= sb_eff
        s_hi = np.where(use_a, sa, sb)
        shift = np.where(use_a, sb - sa, sa - sb)
        shift = np.where(np.isnan(shift), -np.inf, shift)  # 0 + 0 case
        scale = np.exp(np.minimum(shift, 0.0))
        m = np.where(use_a, ma + mb * scale, mb + ma * scale)
        both_zero = (ma == 0) & (mb == 0)
        m = np.where(both_zero, 0.0 + 0.0j, m)
        s_hi = np.where(both_zero, 0.0, s_hi)
        nan = np.isnan(sa) | np.isnan(sb) | np.isnan(ma) | np.isnan(mb)
        if np.any(nan):
            m = np.where(nan, np.nan + 1j * np.nan, m)
            s_hi = np.where(nan, 0.0, s_hi)
    return _renorm(m, s_hi)


def _to_complex(m, s):
    """Collapse (m, s) to plain complex where possible; inf/nan otherwise."""
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        f = np.exp(np.minimum(s, 710.0))
        # explicit zero components dodge 0*inf -> nan when f overflows
        re = np.where(m.real == 0, 0.0, m.real * f)
        im = np.where(m.imag == 0, 0.0, m.imag * f)
        return re + 1j * im


def _exp(m, s):
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        z = _to_complex(m, s)
        direct = np.isfinite(z) & (np.abs(z.real) <= DIRECT_EXP_LIMIT)
        out_m = np.empty_like(m)
        out_s = np.zeros_like(s)
        if np.any(direct):
            out_m[direct] = np.exp(z[direct])
        rest = ~direct
        if np.any(rest):
            zr = z.real[rest]
            zi = z.imag[rest]
            out_m[rest] = np.cos(zi) + 1j * np.sin(zi)
            out_s[rest] = zr
    return out_m, out_s


def _trig_pair(m, s, kind):
    """sin/cos/sinh/cosh via the exponential formulas once arguments are big."""
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        z = _to_complex(m, s)
        if kind in ("sin", "cos"):
            grow = np.abs(z.imag)
        else:
            grow = np.abs(z.real)
        direct = np.isfinite(z) & (grow <= DIRECT_EXP_LIMIT)
        out_m = np.empty_like(m)
        out_s = np.zeros_like(s)
        if np.any(direct):
            zd = z[direct]
            fn = {"sin": np.sin, "cos": np.cos, "sinh": np.sinh, "cosh": np.cosh}[kind]
            out_m[direct] = fn(zd)
        rest = ~direct
        if np.any(rest):
            zr = z.real[rest]
            zi = z.imag[rest]
            if kind in ("sin", "cos"):
                # e^{iz} has log-magnitude -zi, e^{-iz} has +zi
                s1, m1 = -zi, np.cos(zr) + 1j * np.sin(zr)
                s2, m2 = zi, np.cos(zr) - 1j * np.sin(zr)
            else:
                s1, m1 = zr, np.cos(zi) + 1j * np.sin(zi)
                s2, m2 = -zr, np.cos(zi) - 1j * np.sin(zi)
            if kind in ("sin", "sinh"):
                m2 = -m2
            mm, ss = _add(m1, s1, m2, s2)
            if kind == "sin":
                mm = mm / 2j
            else:
                mm = mm / 2
            out_m[rest] = mm
            out_s[rest] = ss
    return _renorm(out_m, out_s)


def _pow_int(m, s, k):
    if k == 0:
        return np.ones_like(m), np.zeros_like(s)
    rm, rs = m.copy(), s.copy()
    k -= 1
    bm, bs = m, s
    while k:
        if k & 1:
            with np.errstate(over="ignore", invalid="ignore", under="ignore"):
                rm, rs = _renorm(rm * bm, rs + bs)
            k -= 1
        else:
            with np.errstate(over="ignore", invalid="ignore", under="ignore"):
                bm, bs = _renorm(bm * bm, bs + bs)
            k >>= 1
    return rm, rs


def _poly(z, coeffs):
    n = len(coeffs)
    m = np.full_like(z, coeffs[n - 1])
    s = np.zeros(z.shape, dtype=np.float64)
    for j in range(n - 2, -1, -1):
        with np.errstate(over="ignore", invalid="ignore", under="ignore"):
            m, s = _renorm(m * z, s)
            m, s = _add(m, s, np.full_like(z, coeffs[j]), np.zeros_like(s))
    return m, s


def run_tape(tape: Tape, z: np.ndarray):
    """Execute ``tape`` over points ``z``.

    Returns (mantissa, exponent) arrays for the final value ``m * exp(s)``.
    """
    z = np.ascontiguousarray(z, dtype=np.complex128)
    stack: list[tuple[np.ndarray, np.ndarray]] = []
    zeros = np.zeros(z.shape, dtype=np.float64)
    for op, arg in tape.code:
        if op == OP_CONST:
            stack.append((np.full_like(z, tape.consts[arg]), zeros.copy()))
        elif op == OP_Z:
            stack.append((z.copy(), zeros.copy()))
        elif op == OP_NEG:
            m, s = stack[-1]
            stack[-1] = (-m, s)
        elif op == OP_ADD:
            mb, sb = stack.pop()
            ma, sa = stack[-1]
            stack[-1] = _add(ma, sa, mb, sb)
        elif op == OP_MUL:
            mb, sb = stack.pop()
            ma, sa = stack[-1]
            with np.errstate(over="ignore", invalid="ignore", under="ignore"):
                stack[-1] = _renorm(ma * mb, sa + sb)
        elif op == OP_DIV:
            mb, sb = stack.pop()
            ma, sa = stack[-1]
            with np.errstate(over="ignore", invalid="ignore", under="ignore", divide="ignore"):
                stack[-1] = _renorm(ma / mb, sa - sb)
        elif op == OP_POW:
            m, s = stack[-1]
            stack[-1] = _pow_int(m, s, int(arg))
        elif op == OP_EXP:
            m, s = stack[-1]
            stack[-1] = _exp(m, s)
        elif op == OP_SIN:
            m, s = stack[-1]
            stack[-1] = _trig_pair(m, s, "sin")
        elif op == OP_COS:
            m, s = stack[-1]
            stack[-1] = _trig_pair(m, s, "cos")
        elif op == OP_SINH:
            m, s = stack[-1]
            stack[-1] = _trig_pair(m, s, "sinh")
        elif op == OP_COSH:
            m, s = stack[-1]
            stack[-1] = _trig_pair(m, s, "cosh")
        elif op == OP_SQRT:
            m, s = stack[-1]
            stack[-1] = (np.sqrt(m), s / 2.0)
        elif op == OP_LOG:
            m, s = stack[-1]
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.log(m)
            stack[-1] = (w + s, np.zeros_like(s))
        elif op == OP_POLY:
            lo, hi = tape.poly_offsets[arg], tape.poly_offsets[arg + 1]
            stack.append(_poly(z, tape.poly_coeffs[lo:hi]))
        else:  # pragma: no cover
            raise RuntimeError(f"bad opcode {op}")
    m, s = stack.pop()
    return m, s


def eval_batch(tape: Tape, z: np.ndarray):
    """Evaluate the tape at points ``z``.

    Returns (value, logabs, finite): value is meaningful where ``finite``;
    logabs = ln|f(z)| is valid (possibly +/-inf) wherever it is not NaN.
    """
    m, s = run_tape(tape, z)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        am = np.abs(m)
        logabs = np.where(am > 0, np.log(np.where(am > 0, am, 1.0)) + s, -np.inf)
        logabs = np.where(np.isnan(am), np.nan, logabs)
        finite = np.isfinite(am) & (logabs < LOG_FINITE_LIMIT)
        value = np.where(finite, _to_complex(m, np.where(finite, s, 0.0)), np.nan + 1j * np.nan)
    return value, logabs, finite


def escape_scan(tape: Tape, z0: np.ndarray, log_thresholds: np.ndarray, horizon: int):
    """First-exit scan: least n with ln|w_n| >= log_thresholds[n], w_0 = z.

    Tests run at n = 0..min(horizon, len(thresholds)-1).  An iterate whose
    magnitude can no longer be tracked in native range counts as an exit at
    that step with the overflow flag set.

    Returns (exit_index int32 [-1 when no exit], last_logabs, overflowed).
    """
    z0 = np.ascontiguousarray(z0, dtype=np.complex128)
    n = z0.shape[0]
    exit_idx = np.full(n, -1, dtype=np.int32)
    overflow = np.zeros(n, dtype=bool)
    last_logabs = np.full(n, -np.inf)
    active = np.arange(n)
    w = z0.copy()
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        aw = np.abs(w)
        logw = np.where(aw > 0, np.log(np.where(aw > 0, aw, 1.0)), -np.inf)
    last_step = min(horizon, len(log_thresholds) - 1)
    for step in range(last_step + 1):
        if active.size == 0:
            break
        valid = ~np.isnan(logw)
        last_logabs[active[valid]] = logw[valid]
        ov = ~valid | (logw > LOG_FINITE_LIMIT)
        hit = ov | (valid & (logw >= log_thresholds[step]))
        if np.any(hit):
            idx = active[hit]
            exit_idx[idx] = step
            overflow[idx] = ov[hit]
            keep = ~hit
            active = active[keep]
            w = w[keep]
            logw = logw[keep]
        if active.size == 0 or step == last_step:
            break
        m, s = run_tape(tape, w)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
            am = np.abs(m)
            logw = np.where(am > 0, np.log(np.where(am > 0, am, 1.0)) + s, -np.inf)
            logw = np.where(np.isnan(am), np.nan, logw)
            w = _to_complex(m, np.minimum(s, 710.0))
    return exit_idx, last_logabs, overflow
