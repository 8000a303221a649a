"""Certified circle extrema: m(r), M(r) and the running-max envelope.

``min_modulus`` / ``max_modulus`` bracket the extremum of |f| on |z| = r by
uniform sampling plus branch-and-bound pruning under a sampled Lipschitz
bound: |d/dt |f(r e^{it})|| <= r * max|f'| on the circle, with the sampled
derivative maximum inflated by 1.25 because sampling can undershoot it.
The bracket is *certified* when the slope bound came from derivative samples
at least four times denser than the finest surviving subdivision; the
brute-force oracle in the test suite backstops the remaining heuristic.

``build_profile`` assembles both extrema over a geometric radius grid and
the envelope max(m(s): s <= r), which decides the escape condition
(envelope above the identity from some radius on).
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backend
from ._tape import compile_tape
from .expr import ExprAst, derivative, is_real_symmetric

COARSE_SAMPLES = 512
SLOPE_INFLATION = 1.25
DEFAULT_TOL = 1e-6
MAX_ROUNDS = 96
# total evaluation budget per extremum call; smooth minima converge in a
# tiny fraction of this, flat |f| (f = c z^k) exhausts it and comes back
# with the best bracket reached, certified=False
EVAL_BUDGET = 1_500_000


class CircleOverflowError(OverflowError):
    """|f| left evaluable range on the circle where a finite value was required."""


@dataclass(frozen=True)
class CircleExtremum:
    """Bracketed extremum of |f| on |z| = radius.

    ``low <= true extremum <= high``; the best sampled point sits at
    ``arg_theta``.  For kind='min' the best sample equals ``high``, for
    kind='max' it equals ``low``.  When ``log_scale`` is set (max side after
    an overflow) all three value fields are natural logs of the modulus.
    """

    radius: float
    kind: str
    low: float
    high: float
    arg_theta: float
    certified: bool
    log_scale: bool = False

    @property
    def best(self) -> float:
        return self.high if self.kind == "min" else self.low

    @property
    def width(self) -> float:
        return self.high - self.low


@dataclass(frozen=True)
class ModulusProfile:
    """Min/max extrema over an increasing radius grid plus the m-envelope."""

    radii: np.ndarray
    minima: tuple
    maxima: tuple
    envelope: np.ndarray
    envelope_src: np.ndarray
    tol: float

    def min_values(self) -> np.ndarray:
        return np.array([e.best for e in self.minima])

    def max_values(self) -> np.ndarray:
        """Best max estimates on the linear scale; inf where only ln was representable."""
        out = []
        for e in self.maxima:
            if e.log_scale:
                out.append(math.exp(e.best) if e.best < 709.0 else math.inf)
            else:
                out.append(e.best)
        return np.array(out)

    def ln_max_values(self) -> np.ndarray:
        """ln M(r) per grid point, valid even where M overflowed the linear scale."""
        out = []
        for e in self.maxima:
            if e.log_scale:
                out.append(e.best)
            else:
                out.append(math.log(e.best) if e.best > 0 else -math.inf)
        return np.array(out)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "m_low", "m_high", "M_low", "M_high", "envelope",
                        "envelope_src_index", "certified_min", "certified_max"])
            for i, r in enumerate(self.radii):
                mn, mx = self.minima[i], self.maxima[i]
                w.writerow([repr(float(r)), repr(mn.low), repr(mn.high),
                            repr(mx.low), repr(mx.high), repr(float(self.envelope[i])),
                            int(self.envelope_src[i]), int(mn.certified), int(mx.certified)])


def _eval_abs(tape, r, thetas):
    """|f(r e^{i theta})| with overflow reported via (values, logabs, finite)."""
    z = r * np.exp(1j * thetas)
    value, logabs, finite = backend.eval_batch(tape, z)
    with np.errstate(invalid="ignore"):
        av = np.where(finite, np.abs(value), np.nan)
    return av, logabs, finite


def _directional_slope(fval, d1val, fv, d1v, r, thetas):
    """|d|f|/dtheta| at sample points, exact where f is nonzero.

    d|f|/dt = Re(conj(f) * i r e^{it} f') / |f|; falls back to the always
    valid r|f'| where |f| vanishes or the values are not available.
    """
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        w = 1j * r * np.exp(1j * thetas) * d1val
        g = np.abs(fval.real * w.real + fval.imag * w.imag) / fv
    bad = ~np.isfinite(g)
    if np.any(bad):
        g = np.where(bad, r * d1v, g)
    return g


def _circle_extremum(f, r, tol, kind):
    """Shared branch-and-bound for both orientations.

    Cells are centered on their sample.  On each cell the modulus is
    bracketed by a second-order bound: the exact directional derivative of
    |f| at the center plus a curvature constant from |f'| and |f''| samples
    at quarter-width spacing (inherited across splits, so every cell rests
    on a sample grid 4x finer than itself, inflated by 1.25).  Where a zero
    of f inside the cell cannot be excluded, the cusp-safe variant with
    r|f'(center)| in place of the directional derivative is used; it comes
    from the complex Taylor expansion and needs no smoothness of |f|.

    When the circle overflows on the max side, the whole search degrades to
    log-magnitude values with a first-order slope bound r * max|f'/f|, and
    the returned bracket is in ln units (log_scale=True).
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    tape = compile_tape(f)
    d1tape = compile_tape(derivative(f))
    d2tape = compile_tape(derivative(derivative(f)))
    half = is_real_symmetric(f)
    span = math.pi if half else 2.0 * math.pi

    n0 = COARSE_SAMPLES
    h = span / n0
    dn = 4 * n0
    # the quarter-spacing grid contains the cell centers at every 4th entry
    dtheta = np.arange(0, dn + 1) * (h / 4.0) if half else np.arange(0, dn) * (h / 4.0)
    fval, flog, ffin = backend.eval_batch(tape, r * np.exp(1j * dtheta))
    if np.any(np.isnan(flog)):
        raise CircleOverflowError(f"|f| not evaluable on |z| = {r} (invalid log-magnitude)")

    log_scale = False
    if not np.all(ffin):
        if kind == "min":
            if not np.any(ffin):
                raise CircleOverflowError(f"|f| overflows everywhere on |z| = {r}")
        else:
            log_scale = True

    d1val, d1log, d1fin = backend.eval_batch(d1tape, r * np.exp(1j * dtheta))

    if log_scale:
        return _extremum_logscale(tape, d1tape, r, tol, kind, half, span, n0, h,
                                  dtheta, flog, d1log)

    _, d2log, _ = backend.eval_batch(d2tape, r * np.exp(1j * dtheta))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        fv = np.where(ffin, np.abs(fval), np.inf)
        d1v = np.exp(d1log)
        d2v = np.exp(d2log)
        c2 = r * d1v + r * r * d2v + r * r * d1v * d1v / fv
        c2 = np.where(fv == 0, np.inf, c2)
    gexact = _directional_slope(fval, d1val, fv, d1v, r, dtheta)

    evals = 3 * dtheta.size
    ci = np.arange(0, dtheta.size, 4) if half else np.arange(0, dn, 4)
    centers = dtheta[ci]
    sgn = 1.0 if kind == "min" else -1.0

    # per-cell state; c2mat holds curvature samples at center + halfw*[-1,-1/2,0,1/2,1]
    c = centers.copy()
    hw = np.full(c.shape, h / 2.0)
    cfv = fv[ci]
    cg = gexact[ci]
    cdloc = d1v[ci]
    didx = ci[:, None] + np.array([-2, -1, 0, 1, 2])[None, :]
    if half:
        didx = np.abs(didx)
        didx = np.where(didx > dn, 2 * dn - didx, didx)
    else:
        didx = didx % dn
    c2mat = c2[didx]

    finite_fv = cfv[np.isfinite(cfv)]
    if finite_fv.size == 0:
        raise CircleOverflowError(f"|f| overflows everywhere on |z| = {r}")
    if kind == "min":
        i0 = int(np.argmin(np.where(np.isfinite(cfv), cfv, np.inf)))
        incumbent = float(cfv[i0])
    else:
        i0 = int(np.argmax(np.where(np.isfinite(cfv), cfv, -np.inf)))
        incumbent = float(cfv[i0])
    best_theta = float(c[i0])

    def probe(points):
        v0, l0, f0 = backend.eval_batch(tape, r * np.exp(1j * points))
        v1, l1, f1_ = backend.eval_batch(d1tape, r * np.exp(1j * points))
        _, l2, _ = backend.eval_batch(d2tape, r * np.exp(1j * points))
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            pf = np.where(f0, np.abs(v0), np.inf)
            p1 = np.exp(l1)
            p2 = np.exp(l2)
            pc2 = r * p1 + r * r * p2 + r * r * p1 * p1 / pf
            pc2 = np.where(pf == 0, np.inf, pc2)
        pg = _directional_slope(v0, v1, pf, p1, r, points)
        return pf, pg, p1, pc2

    budget_ok = True
    bound_gap = math.inf

    def cell_bounds():
        """(lower, upper) envelopes of |f| per cell from the quadratic model."""
        with np.errstate(invalid="ignore", over="ignore"):
            c2max = SLOPE_INFLATION * np.max(c2mat, axis=1)
            quad = 0.5 * c2max * hw * hw
            cusp_lo = cfv - SLOPE_INFLATION * r * cdloc * hw - quad
            zero_free = cusp_lo > 0
            smooth_lo = cfv - SLOPE_INFLATION * cg * hw - quad
            lo = np.where(zero_free, np.maximum(smooth_lo, cusp_lo), cusp_lo)
            lo = np.maximum(lo, 0.0)
            hi_slope = np.where(zero_free, np.minimum(SLOPE_INFLATION * cg, r * cdloc * SLOPE_INFLATION),
                                SLOPE_INFLATION * r * cdloc)
            hi = cfv + hi_slope * hw + quad
        lo = np.where(np.isnan(lo), 0.0, lo)
        # an overflowed center cannot plausibly hide the minimum: pin a
        # huge finite floor so these cells never look promising
        lo = np.where(np.isfinite(cfv), lo, 1e306)
        hi = np.where(np.isnan(hi), np.inf, hi)
        return lo, hi

    for _ in range(MAX_ROUNDS):
        lo_env, hi_env = cell_bounds()
        if kind == "min":
            bound = float(np.min(lo_env))
            gap = incumbent - bound
            work = lo_env < incumbent
        else:
            with np.errstate(invalid="ignore"):
                bound = float(np.max(hi_env))
            gap = bound - incumbent
            work = hi_env > incumbent
        bound_gap = gap
        if gap <= tol * max(1.0, abs(incumbent)):
            break
        if evals >= EVAL_BUDGET:
            budget_ok = False
            break
        if not np.any(work):
            bound_gap = 0.0
            break
        hold = ~work
        hc, hh, hf, hg, hd, hcm = c[hold], hw[hold], cfv[hold], cg[hold], cdloc[hold], c2mat[hold]
        wc, wh, wf, wg, wd, wcm = c[work], hw[work], cfv[work], cg[work], cdloc[work], c2mat[work]
        if wc.size > 16384:
            score = lo_env[work] if kind == "min" else -hi_env[work]
            order = np.argsort(score)
            now, later = order[:16384], order[16384:]
            hc = np.concatenate([hc, wc[later]])
            hh = np.concatenate([hh, wh[later]])
            hf = np.concatenate([hf, wf[later]])
            hg = np.concatenate([hg, wg[later]])
            hd = np.concatenate([hd, wd[later]])
            hcm = np.concatenate([hcm, wcm[later]], axis=0)
            wc, wh, wf, wg, wd, wcm = wc[now], wh[now], wf[now], wg[now], wd[now], wcm[now]
        child_c = np.concatenate([wc - wh / 2.0, wc + wh / 2.0])
        child_h = np.concatenate([wh, wh]) / 2.0
        pf, pg, p1, pc2 = probe(child_c)
        q = np.concatenate([wc - 0.75 * wh, wc - 0.25 * wh,
                            wc + 0.25 * wh, wc + 0.75 * wh])
        _, _, _, qc2 = probe(q)
        evals += 3 * (child_c.size + q.size)
        w = wc.size
        child_cm = np.empty((2 * w, 5))
        child_cm[:w, 0] = wcm[:, 0]
        child_cm[:w, 1] = qc2[0:w]
        child_cm[:w, 2] = wcm[:, 1]
        child_cm[:w, 3] = qc2[w:2 * w]
        child_cm[:w, 4] = wcm[:, 2]
        child_cm[w:, 0] = wcm[:, 2]
        child_cm[w:, 1] = qc2[2 * w:3 * w]
        child_cm[w:, 2] = wcm[:, 3]
        child_cm[w:, 3] = qc2[3 * w:4 * w]
        child_cm[w:, 4] = wcm[:, 4]
        fin = np.isfinite(pf)
        if kind == "min":
            j = int(np.argmin(np.where(fin, pf, np.inf)))
            if pf[j] < incumbent:
                incumbent = float(pf[j])
                best_theta = float(child_c[j])
        else:
            j = int(np.argmax(np.where(fin, pf, -np.inf)))
            if np.isfinite(pf[j]) and pf[j] > incumbent:
                incumbent = float(pf[j])
                best_theta = float(child_c[j])
        c = np.concatenate([hc, child_c])
        hw = np.concatenate([hh, child_h])
        cfv = np.concatenate([hf, np.where(fin, pf, np.inf)])
        cg = np.concatenate([hg, pg])
        cdloc = np.concatenate([hd, p1])
        c2mat = np.concatenate([hcm, child_cm], axis=0)
    else:
        budget_ok = False

    certified = budget_ok and bound_gap <= tol * max(1.0, abs(incumbent))

    lo_env, hi_env = cell_bounds()
    if kind == "min":
        low = float(min(np.min(lo_env), incumbent))
        high = incumbent
    else:
        low = incumbent
        with np.errstate(invalid="ignore"):
            high = float(max(np.max(hi_env), incumbent))
    if not half:
        best_theta %= 2.0 * math.pi
    elif best_theta < 0:
        best_theta = abs(best_theta)
    return CircleExtremum(float(r), kind, float(low), float(high),
                          float(best_theta), certified, False)


def _extremum_logscale(tape, d1tape, r, tol, kind, half, span, n0, h, dtheta, flog, d1log):
    """Max-side search in ln|f| units once the circle overflows.

    First-order bound only: slope of ln|f| along the circle is at most
    r * |f'/f|, sampled at quarter-cell spacing and inflated by 1.25.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(d1log - flog)
    ratio = np.where(np.isnan(ratio), np.inf, ratio)
    dn = 4 * n0
    ci = np.arange(0, dtheta.size, 4) if half else np.arange(0, dn, 4)
    c = dtheta[ci].copy()
    hw = np.full(c.shape, h / 2.0)
    cv = -flog[ci]  # minimize the negated log-magnitude
    didx = ci[:, None] + np.array([-2, -1, 0, 1, 2])[None, :]
    if half:
        didx = np.abs(didx)
        didx = np.where(didx > dn, 2 * dn - didx, didx)
    else:
        didx = didx % dn
    dmat = ratio[didx]

    incumbent = float(np.min(cv))
    best_theta = float(c[int(np.argmin(cv))])
    evals = 2 * dtheta.size
    budget_ok = True
    global_lb = -math.inf

    def slope_probe(points):
        _, l0, _ = backend.eval_batch(tape, r * np.exp(1j * points))
        _, l1, _ = backend.eval_batch(d1tape, r * np.exp(1j * points))
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.exp(l1 - l0)
        return l0, np.where(np.isnan(out), np.inf, out)

    for _ in range(MAX_ROUNDS):
        slope = SLOPE_INFLATION * r * np.max(dmat, axis=1)
        with np.errstate(invalid="ignore"):
            lbs = cv - slope * hw
        lbs = np.where(np.isnan(lbs), -np.inf, lbs)
        global_lb = float(np.min(lbs))
        if incumbent - global_lb <= tol * max(1.0, abs(incumbent)):
            break
        if evals >= EVAL_BUDGET:
            budget_ok = False
            break
        work = lbs < incumbent
        if not np.any(work):
            global_lb = incumbent
            break
        hc, hh, hv, hd = c[~work], hw[~work], cv[~work], dmat[~work]
        wc, wh, wv, wd = c[work], hw[work], cv[work], dmat[work]
        if wc.size > 16384:
            order = np.argsort(lbs[work])
            now, later = order[:16384], order[16384:]
            hc = np.concatenate([hc, wc[later]])
            hh = np.concatenate([hh, wh[later]])
            hv = np.concatenate([hv, wv[later]])
            hd = np.concatenate([hd, wd[later]], axis=0)
            wc, wh, wv, wd = wc[now], wh[now], wv[now], wd[now]
        child_c = np.concatenate([wc - wh / 2.0, wc + wh / 2.0])
        child_h = np.concatenate([wh, wh]) / 2.0
        l0, _ = slope_probe(child_c)  # need ln|f| at child centers
        child_v = -l0
        q = np.concatenate([wc - 0.75 * wh, wc - 0.25 * wh,
                            wc + 0.25 * wh, wc + 0.75 * wh])
        _, dq = slope_probe(q)
        evals += 2 * (child_c.size + q.size)
        w = wc.size
        child_d = np.empty((2 * w, 5))
        child_d[:w, 0] = wd[:, 0]
        child_d[:w, 1] = dq[0:w]
        child_d[:w, 2] = wd[:, 1]
        child_d[:w, 3] = dq[w:2 * w]
        child_d[:w, 4] = wd[:, 2]
        child_d[w:, 0] = wd[:, 2]
        child_d[w:, 1] = dq[2 * w:3 * w]
        child_d[w:, 2] = wd[:, 3]
        child_d[w:, 3] = dq[3 * w:4 * w]
        child_d[w:, 4] = wd[:, 4]
        child_v = np.where(np.isnan(child_v), np.inf, child_v)
        j = int(np.argmin(child_v))
        if child_v[j] < incumbent:
            incumbent = float(child_v[j])
            best_theta = float(child_c[j])
        c = np.concatenate([hc, child_c])
        hw = np.concatenate([hh, child_h])
        cv = np.concatenate([hv, child_v])
        dmat = np.concatenate([hd, child_d], axis=0)
    else:
        budget_ok = False

    certified = budget_ok and (incumbent - global_lb) <= tol * max(1.0, abs(incumbent))
    low, high = -incumbent, -global_lb
    low = min(low, high)
    if not half:
        best_theta %= 2.0 * math.pi
    elif best_theta < 0:
        best_theta = abs(best_theta)
    return CircleExtremum(float(r), kind, float(low), float(high),
                          float(best_theta), certified, True)


def min_modulus(f: ExprAst, r: float, tol: float = DEFAULT_TOL) -> CircleExtremum:
    """Bracket m(r) = min |f| on |z| = r to relative width ``tol``."""
    return _circle_extremum(f, r, tol, "min")


def max_modulus(f: ExprAst, r: float, tol: float = DEFAULT_TOL) -> CircleExtremum:
    """Bracket M(r) = max |f| on |z| = r; overflow degrades to a ln-scale bracket."""
    return _circle_extremum(f, r, tol, "max")


def _profile_radii(r_min, r_max, grid):
    if not (0 < r_min < r_max):
        raise ValueError("need 0 < r_min < r_max")
    if grid < 2:
        raise ValueError("grid needs at least two radii")
    return np.geomspace(r_min, r_max, grid)


def build_profile(f: ExprAst, r_min: float, r_max: float, grid: int = 128,
                  tol: float = DEFAULT_TOL, threads: int = 1) -> ModulusProfile:
    """Min/max extrema on a geometric grid plus the running-max envelope.

    One local subdivision is inserted around interior local maxima of m
    (three-point pattern) so envelope plateaus start near true peaks.
    Per-radius work items run on a thread pool; assembly order is fixed by
    radius index, so results do not depend on ``threads``.
    """
    radii = _profile_radii(r_min, r_max, grid)

    def one(r):
        return min_modulus(f, r, tol), max_modulus(f, r, tol)

    def run_batch(rs):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(one, rs))
        return [one(r) for r in rs]

    base = run_batch(radii)
    mvals = np.array([mn.best for mn, _ in base])

    extra = []
    for i in range(1, len(radii) - 1):
        if mvals[i] > mvals[i - 1] and mvals[i] > mvals[i + 1]:
            extra.append(math.sqrt(radii[i - 1] * radii[i]))
            extra.append(math.sqrt(radii[i] * radii[i + 1]))
    if extra:
        extra = np.array(sorted(set(extra)))
        extra_res = run_batch(extra)
        all_r = np.concatenate([radii, extra])
        order = np.argsort(all_r)
        radii = all_r[order]
        pairs = base + extra_res
        pairs = [pairs[j] for j in order]
    else:
        pairs = base

    minima = tuple(p[0] for p in pairs)
    maxima = tuple(p[1] for p in pairs)
    best = np.array([mn.best for mn in minima])
    envelope = np.maximum.accumulate(best)
    src = np.zeros(len(best), dtype=np.int64)
    run = 0
    for i in range(len(best)):
        if best[i] >= best[run]:
            run = i
        src[i] = run
    return ModulusProfile(radii, minima, maxima, envelope, src, tol)


@dataclass(frozen=True)
class Crossing:
    radius: float
    direction: str  # 'down': envelope overtakes the identity; 'up': identity overtakes


def envelope_crossings(profile: ModulusProfile, f: Optional[ExprAst] = None,
                       refine_tol: float = 1e-6) -> list[Crossing]:
    """Sign changes of envelope(r) - r along the profile grid.

    Direction names follow the residual r - envelope(r): where it descends
    through zero (the envelope comes back above the identity) the crossing
    is 'down'; where it ascends (the identity overtakes a plateau) it is
    'up'.  With ``f`` supplied, each crossing is refined by locally dense
    m-sampling and bisection on the piecewise-linear local envelope to width
    ``refine_tol * r``; otherwise grid-level linear interpolation is used.

    Exact tangencies within tolerance are not reported (equality of
    envelope and identity, as for f(z) = z, yields no crossings).
    """
    r = np.asarray(profile.radii, dtype=float)
    g = profile.envelope - r
    tol_eq = 1e-9 * np.maximum(1.0, r)
    sign = np.where(g > tol_eq, 1, np.where(g < -tol_eq, -1, 0))
    out = []
    nz = np.nonzero(sign)[0]
    if nz.size == 0:
        return out
    for a, b in zip(nz[:-1], nz[1:]):
        if sign[a] == sign[b]:
            continue
        direction = "down" if sign[a] < 0 else "up"
        lo, hi = r[a], r[b]
        env_base = profile.envelope[a]
        if f is not None:
            xs = np.geomspace(lo, hi, 33)
            ms = np.array([min_modulus(f, x, profile.tol).best for x in xs])
            env_local = np.maximum(env_base, np.maximum.accumulate(ms))
            gg = env_local - xs
            ss = np.where(gg > 0, 1, -1)
            flips = np.nonzero(ss[:-1] != ss[1:])[0]
            if flips.size:
                j = flips[0] if direction == "up" else flips[-1]
                x0, x1 = xs[j], xs[j + 1]
                g0, g1 = gg[j], gg[j + 1]
                # bisection on the PL interpolant between local samples
                while (x1 - x0) > refine_tol * x0:
                    xm = 0.5 * (x0 + x1)
                    gm = np.interp(xm, xs, env_local) - xm
                    if (gm > 0) == (g0 > 0):
                        x0, g0 = xm, gm
                    else:
                        x1, g1 = xm, gm
                root = 0.5 * (x0 + x1)
            else:
                root = 0.5 * (lo + hi)
        else:
            root = lo - g[a] * (hi - lo) / (g[b] - g[a])
        out.append(Crossing(float(root), direction))
    return out
