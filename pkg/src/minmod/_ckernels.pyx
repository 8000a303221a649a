# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled tape execution: the hot kernels behind circle sweeps and renders.

Semantics mirror minmod._pykernels op for op; see that module for the
scaled-value model.  Complex arithmetic is spelled out on (re, im) pairs so
rounding matches the numpy fallback wherever no rescaling triggers.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport (atan2, cos, cosh, exp, fabs, hypot, isfinite, isnan,
                        log, sin, sinh, sqrt, NAN, INFINITY)

from ._tape import (OP_ADD, OP_CONST, OP_COS, OP_COSH, OP_DIV, OP_EXP,
                    OP_LOG, OP_MUL, OP_NEG, OP_POLY, OP_POW, OP_SIN,
                    OP_SINH, OP_SQRT, OP_Z)

cnp.import_array()

BACKEND_NAME = "compiled"

DEF RENORM_HI = 1e140
DEF RENORM_LO = 1e-140
DEF DIRECT_EXP_LIMIT = 700.0
DEF LOG_FINITE_LIMIT = 709.0
DEF MAX_STACK = 64

CODE_OP_CONST = OP_CONST
CODE_OP_Z = OP_Z


cdef struct SV:  # scaled value: (re + i*im) * exp(s)
    double re
    double im
    double s


cdef inline SV sv_make(double re, double im, double s) noexcept nogil:
    cdef SV v
    v.re = re
    v.im = im
    v.s = s
    return v


cdef inline SV sv_renorm(SV a) noexcept nogil:
    cdef double m = hypot(a.re, a.im)
    cdef double k, e
    if isfinite(m) and (m > RENORM_HI or (m < RENORM_LO and m > 0.0)):
        k = log(m)
        # two half-steps: exp(-k) itself overflows for subnormal mantissas
        e = exp(-0.5 * k)
        a.re = (a.re * e) * e
        a.im = (a.im * e) * e
        a.s += k
    return a


cdef inline SV sv_add(SV a, SV b) noexcept nogil:
    cdef double shift, scale
    cdef SV out
    if isnan(a.s) or isnan(b.s) or isnan(a.re) or isnan(a.im) or isnan(b.re) or isnan(b.im):
        return sv_make(NAN, NAN, 0.0)
    if a.re == 0.0 and a.im == 0.0:
        if b.re == 0.0 and b.im == 0.0:
            return sv_make(0.0, 0.0, 0.0)
        return b
    if b.re == 0.0 and b.im == 0.0:
        return a
    if a.s >= b.s:
        shift = b.s - a.s
        if shift < 0.0:
            scale = exp(shift)
        else:
            scale = 1.0
        out = sv_make(a.re + b.re * scale, a.im + b.im * scale, a.s)
    else:
        shift = a.s - b.s
        if shift < 0.0:
            scale = exp(shift)
        else:
            scale = 1.0
        out = sv_make(b.re + a.re * scale, b.im + a.im * scale, b.s)
    return sv_renorm(out)


cdef inline SV sv_mul(SV a, SV b) noexcept nogil:
    return sv_renorm(sv_make(a.re * b.re - a.im * b.im,
                             a.re * b.im + a.im * b.re,
                             a.s + b.s))


cdef inline SV sv_div(SV a, SV b) noexcept nogil:
    # same naive quotient formula numpy applies for complex128
    cdef double d = b.re * b.re + b.im * b.im
    return sv_renorm(sv_make((a.re * b.re + a.im * b.im) / d,
                             (a.im * b.re - a.re * b.im) / d,
                             a.s - b.s))


cdef inline SV sv_pow(SV a, long k) noexcept nogil:
    cdef SV r, b
    if k == 0:
        return sv_make(1.0, 0.0, 0.0)
    r = a
    b = a
    k -= 1
    while k:
        if k & 1:
            r = sv_mul(r, b)
            k -= 1
        else:
            b = sv_mul(b, b)
            k >>= 1
    return r


cdef inline void sv_collapse(SV a, double* zre, double* zim) noexcept nogil:
    cdef double f = exp(a.s if a.s < 710.0 else 710.0)
    zre[0] = 0.0 if a.re == 0.0 else a.re * f
    zim[0] = 0.0 if a.im == 0.0 else a.im * f


cdef inline SV sv_exp(SV a) noexcept nogil:
    cdef double zre, zim, e
    sv_collapse(a, &zre, &zim)
    if isfinite(zre) and isfinite(zim) and fabs(zre) <= DIRECT_EXP_LIMIT:
        e = exp(zre)
        return sv_make(e * cos(zim), e * sin(zim), 0.0)
    return sv_make(cos(zim), sin(zim), zre)


cdef inline SV sv_trig(SV a, int kind) noexcept nogil:
    # kind: 0 sin, 1 cos, 2 sinh, 3 cosh
    cdef double zre, zim, grow
    cdef SV w1, w2, out
    sv_collapse(a, &zre, &zim)
    if kind == 0 or kind == 1:
        grow = fabs(zim)
    else:
        grow = fabs(zre)
    if isfinite(zre) and isfinite(zim) and grow <= DIRECT_EXP_LIMIT:
        # direct complex formulas, standard componentwise identities
        if kind == 0:
            return sv_make(sin(zre) * cosh(zim), cos(zre) * sinh(zim), 0.0)
        elif kind == 1:
            return sv_make(cos(zre) * cosh(zim), -sin(zre) * sinh(zim), 0.0)
        elif kind == 2:
            return sv_make(sinh(zre) * cos(zim), cosh(zre) * sin(zim), 0.0)
        else:
            return sv_make(cosh(zre) * cos(zim), sinh(zre) * sin(zim), 0.0)
    if kind == 0 or kind == 1:
        w1 = sv_make(cos(zre), sin(zre), -zim)   # e^{iz}
        w2 = sv_make(cos(zre), -sin(zre), zim)   # e^{-iz}
    else:
        w1 = sv_make(cos(zim), sin(zim), zre)    # e^{z}
        w2 = sv_make(cos(zim), -sin(zim), -zre)  # e^{-z}
    if kind == 0 or kind == 2:
        w2.re = -w2.re
        w2.im = -w2.im
    out = sv_add(w1, w2)
    if kind == 0:
        # divide by 2i
        return sv_make(out.im * 0.5, -out.re * 0.5, out.s)
    return sv_make(out.re * 0.5, out.im * 0.5, out.s)


cdef inline SV sv_sqrt(SV a) noexcept nogil:
    # principal square root of the mantissa; exp(s/2) keeps the argument
    cdef double m = hypot(a.re, a.im)
    cdef double u, v
    if m == 0.0:
        return sv_make(0.0, 0.0, 0.0)
    u = sqrt((m + a.re) / 2.0)
    v = sqrt((m - a.re) / 2.0)
    if a.im < 0.0:
        v = -v
    return sv_make(u, v, a.s / 2.0)


cdef inline SV sv_log(SV a) noexcept nogil:
    cdef double m = hypot(a.re, a.im)
    if m == 0.0:
        return sv_make(-INFINITY, 0.0, 0.0)
    return sv_make(log(m) + a.s, atan2(a.im, a.re), 0.0)


cdef inline SV sv_poly(double zre, double zim, const double complex* co, Py_ssize_t n) noexcept nogil:
    cdef SV acc, zz, term
    cdef Py_ssize_t j
    zz = sv_make(zre, zim, 0.0)
    acc = sv_make((<const double*> &co[n - 1])[0], (<const double*> &co[n - 1])[1], 0.0)
    for j in range(n - 2, -1, -1):
        acc = sv_mul(acc, zz)
        term = sv_make((<const double*> &co[j])[0], (<const double*> &co[j])[1], 0.0)
        acc = sv_add(acc, term)
    return acc


cdef inline SV run_point(const long long[:, ::1] code, const double complex[::1] consts,
                         const long long[::1] poly_off, const double complex[::1] poly_co,
                         double zre, double zim, SV* stack) noexcept nogil:
    cdef Py_ssize_t ip, sp = 0
    cdef long long op, arg
    cdef SV a, b
    cdef Py_ssize_t lo, hi
    for ip in range(code.shape[0]):
        op = code[ip, 0]
        arg = code[ip, 1]
        if op == 0:    # CONST
            stack[sp] = sv_make((<const double*> &consts[arg])[0],
                                (<const double*> &consts[arg])[1], 0.0)
            sp += 1
        elif op == 1:  # Z
            stack[sp] = sv_make(zre, zim, 0.0)
            sp += 1
        elif op == 2:  # NEG
            stack[sp - 1].re = -stack[sp - 1].re
            stack[sp - 1].im = -stack[sp - 1].im
        elif op == 3:  # ADD
            sp -= 1
            stack[sp - 1] = sv_add(stack[sp - 1], stack[sp])
        elif op == 4:  # MUL
            sp -= 1
            stack[sp - 1] = sv_mul(stack[sp - 1], stack[sp])
        elif op == 5:  # DIV
            sp -= 1
            stack[sp - 1] = sv_div(stack[sp - 1], stack[sp])
        elif op == 6:  # POW
            stack[sp - 1] = sv_pow(stack[sp - 1], arg)
        elif op == 7:  # EXP
            stack[sp - 1] = sv_exp(stack[sp - 1])
        elif op == 8:  # SIN
            stack[sp - 1] = sv_trig(stack[sp - 1], 0)
        elif op == 9:  # COS
            stack[sp - 1] = sv_trig(stack[sp - 1], 1)
        elif op == 10:  # SINH
            stack[sp - 1] = sv_trig(stack[sp - 1], 2)
        elif op == 11:  # COSH
            stack[sp - 1] = sv_trig(stack[sp - 1], 3)
        elif op == 12:  # SQRT
            stack[sp - 1] = sv_sqrt(stack[sp - 1])
        elif op == 13:  # LOG
            stack[sp - 1] = sv_log(stack[sp - 1])
        else:           # POLY
            lo = poly_off[arg]
            hi = poly_off[arg + 1]
            stack[sp] = sv_poly(zre, zim, &poly_co[lo], hi - lo)
            sp += 1
    sp -= 1
    return stack[sp]


cdef inline double sv_logabs(SV a) noexcept nogil:
    cdef double m = hypot(a.re, a.im)
    if isnan(m):
        return NAN
    if m == 0.0:
        return -INFINITY
    return log(m) + a.s


def eval_batch(tape, object z):
    """Mirror of _pykernels.eval_batch on the compiled path."""
    z = np.asarray(z, dtype=np.complex128)
    orig_shape = z.shape
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] zz = np.ascontiguousarray(z).ravel()
    cdef Py_ssize_t n = zz.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] value = np.empty(n, dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] logabs = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray finite = np.empty(n, dtype=bool)
    cdef cnp.uint8_t[::1] fin = finite.view(np.uint8)
    cdef const long long[:, ::1] code = tape.code
    cdef const double complex[::1] consts = tape.consts
    cdef const long long[::1] poly_off = tape.poly_offsets
    cdef const double complex[::1] poly_co = tape.poly_coeffs
    if tape.stack_need > MAX_STACK:
        raise ValueError("expression nests too deeply for the compiled kernel")
    cdef SV stack[MAX_STACK]
    cdef SV out
    cdef double la, zre, zim
    cdef Py_ssize_t i
    cdef double complex* vptr = <double complex*> value.data
    cdef double* lptr = <double*> logabs.data
    cdef const double complex* zptr = <const double complex*> zz.data
    with nogil:
        for i in range(n):
            out = run_point(code, consts, poly_off, poly_co,
                            (<const double*> &zptr[i])[0], (<const double*> &zptr[i])[1], stack)
            la = sv_logabs(out)
            lptr[i] = la
            if isfinite(hypot(out.re, out.im)) and la < LOG_FINITE_LIMIT:
                fin[i] = 1
                sv_collapse(out, &zre, &zim)
                (<double*> &vptr[i])[0] = zre
                (<double*> &vptr[i])[1] = zim
            else:
                fin[i] = 0
                (<double*> &vptr[i])[0] = NAN
                (<double*> &vptr[i])[1] = NAN
    if len(orig_shape) != 1:
        return value.reshape(orig_shape), logabs.reshape(orig_shape), finite.reshape(orig_shape)
    return value, logabs, finite


def escape_scan(tape, object z0, object log_thresholds, int horizon):
    """Mirror of _pykernels.escape_scan on the compiled path."""
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] zz = np.ascontiguousarray(z0, dtype=np.complex128).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] thr = np.ascontiguousarray(log_thresholds, dtype=np.float64)
    cdef Py_ssize_t n = zz.shape[0]
    cdef cnp.ndarray[cnp.int32_t, ndim=1] exit_idx = np.full(n, -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] last_logabs = np.full(n, -np.inf)
    cdef cnp.ndarray overflow = np.zeros(n, dtype=bool)
    cdef cnp.uint8_t[::1] ovf = overflow.view(np.uint8)
    cdef const long long[:, ::1] code = tape.code
    cdef const double complex[::1] consts = tape.consts
    cdef const long long[::1] poly_off = tape.poly_offsets
    cdef const double complex[::1] poly_co = tape.poly_coeffs
    if tape.stack_need > MAX_STACK:
        raise ValueError("expression nests too deeply for the compiled kernel")
    cdef SV stack[MAX_STACK]
    cdef SV w
    cdef int last_step = horizon if horizon < thr.shape[0] - 1 else thr.shape[0] - 1
    cdef int step
    cdef Py_ssize_t i
    cdef double logw, zre, zim
    cdef bint ov
    cdef cnp.int32_t* eptr = <cnp.int32_t*> exit_idx.data
    cdef double* lptr = <double*> last_logabs.data
    cdef const double complex* zptr = <const double complex*> zz.data
    cdef const double* tptr = <const double*> thr.data
    with nogil:
        for i in range(n):
            zre = (<const double*> &zptr[i])[0]
            zim = (<const double*> &zptr[i])[1]
            w = sv_make(zre, zim, 0.0)
            for step in range(last_step + 1):
                logw = sv_logabs(w)
                if not isnan(logw):
                    lptr[i] = logw
                ov = isnan(logw) or logw > LOG_FINITE_LIMIT
                if ov or logw >= tptr[step]:
                    eptr[i] = step
                    ovf[i] = 1 if ov else 0
                    break
                if step == last_step:
                    break
                sv_collapse(w, &zre, &zim)
                w = run_point(code, consts, poly_off, poly_co, zre, zim, stack)
    return exit_idx, last_logabs, overflow
