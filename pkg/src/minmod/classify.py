"""Growth and gap classification of entire functions.

Order/type come from envelope slopes of (ln r, lnln M) rather than plain
regression: limsup and liminf statements belong to the upper and lower
convex envelopes.  Gap verdicts are three-valued because finite coefficient
lists can only trend.  The iterated-comparison checks (minimum-modulus
iterates against maximum-modulus iterates, and the regularity chain) run on
growth models and report every extrapolated comparison; a verdict that
leans on extrapolation is labeled model-based rather than sampled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .growth import ExtReal, GrowthModel, IterateEntry, RangeExhausted, iterate_growth_map
from .modulus import ModulusProfile

SCHEMA_VERSION = 1
ZERO_TOL = 1e-12
ZERO_WINDOW = 5


class InsufficientSpanError(ValueError):
    """Profile does not cover enough decades to fit growth exponents."""


@dataclass(frozen=True)
class OrderEstimates:
    order: float
    lower_order: float
    type: float
    order_residual: float
    lower_order_residual: float
    decade_span: float

    def to_dict(self):
        return {
            "order": self.order,
            "lower_order": self.lower_order,
            "type": self.type,
            "order_residual": self.order_residual,
            "lower_order_residual": self.lower_order_residual,
            "decade_span": self.decade_span,
        }


def _upper_hull(x, y):
    """Indices of the upper convex hull of the points, left to right."""
    pts = list(range(len(x)))
    hull = []
    for i in pts:
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def estimate_orders(profile: ModulusProfile) -> OrderEstimates:
    """Growth order, lower order and type from the profile's max values.

    order = steepest upper-hull segment slope of (ln r, lnln M) over the top
    decade, lower order = the shallowest lower-hull segment slope, type =
    the largest ln M / r^order over the same decade.  Residuals report the
    scatter of the data around the fitted slope.
    """
    r = np.asarray(profile.radii, dtype=float)
    ln_big = profile.ln_max_values()
    ok = np.isfinite(ln_big) & (ln_big > 0.0)
    if ok.sum() < 4:
        raise InsufficientSpanError("profile has too few finite ln M values")
    x_all = np.log(r[ok])
    y_all = np.log(ln_big[ok])
    span = (x_all[-1] - x_all[0]) / math.log(10.0)
    if span < 2.0 - 1e-9:
        raise InsufficientSpanError(
            f"profile spans {span:.2f} decades with usable ln M; need >= 2")
    top = x_all >= x_all[-1] - math.log(10.0)
    x, y = x_all[top], y_all[top]
    if x.size < 3:
        raise InsufficientSpanError("top decade holds too few samples")

    hull_u = _upper_hull(x, y)
    slopes_u = [(y[b] - y[a]) / (x[b] - x[a]) for a, b in zip(hull_u[:-1], hull_u[1:])]
    hull_l = _upper_hull(x, -y)
    slopes_l = [-( -y[b] + y[a]) / (x[b] - x[a]) for a, b in zip(hull_l[:-1], hull_l[1:])]
    rho = max(slopes_u) if slopes_u else float((y[-1] - y[0]) / (x[-1] - x[0]))
    lam = min(slopes_l) if slopes_l else rho
    chord = (y[-1] - y[0]) / (x[-1] - x[0])
    resid_u = float(np.max(np.abs(y - (y[0] + chord * (x - x[0])))))
    tau_samples = ln_big[ok][top] / np.exp(rho * x)
    tau = float(np.max(tau_samples))
    return OrderEstimates(float(rho), float(lam), tau, resid_u, resid_u, float(span))


@dataclass(frozen=True)
class GapVerdicts:
    exponents: tuple           # n_k: indices of nonzero coefficients
    fabry_slope: float         # least-squares slope of n_k / k on the top half
    fabry: str                 # consistent | inconsistent | inconclusive
    hayman_fraction: float     # share of tested k >= 10 satisfying the bound
    hayman: str
    alpha: float

    def to_dict(self):
        return {
            "exponents": list(self.exponents),
            "fabry_slope": self.fabry_slope,
            "fabry": self.fabry,
            "hayman_fraction": self.hayman_fraction,
            "hayman": self.hayman,
            "alpha": self.alpha,
        }


def gap_analysis(coeffs: Sequence[complex], zero_tol: float = ZERO_TOL,
                 alpha: float = 2.5) -> GapVerdicts:
    """Power-series sparsity verdicts from a coefficient list.

    A coefficient counts as zero when its magnitude falls below zero_tol
    times the running maximum over a window of five indices (Fourier
    extraction leaves aliasing noise there).  The sparse-exponent trend
    statistic is the least-squares slope of n_k/k over the top half of k;
    the strong-gap check counts the fraction of k >= 10 with
    n_k > k log k (log log k)^alpha.
    """
    mags = np.abs(np.asarray(coeffs, dtype=complex))
    if mags.size == 0:
        raise ValueError("empty coefficient list")
    thresh = np.empty_like(mags)
    for j in range(mags.size):
        lo = max(0, j - ZERO_WINDOW)
        hi = min(mags.size, j + ZERO_WINDOW + 1)
        thresh[j] = np.max(mags[lo:hi])
    nonzero = np.nonzero(mags > zero_tol * np.maximum(thresh, 1e-300))[0]
    if nonzero.size < 10:
        raise ValueError(f"need at least 10 nonzero coefficients, found {nonzero.size}")

    n_k = nonzero.astype(float)
    k = np.arange(1, n_k.size + 1, dtype=float)
    ratio = n_k / k
    half = ratio.size // 2
    ks, rs = k[half:], ratio[half:]
    slope = float(np.polyfit(ks, rs, 1)[0]) if ks.size >= 2 else 0.0
    # positive trend comparable to the mean growth per index: sparse-consistent
    scale = max(1.0, float(np.mean(rs)) / max(1.0, float(np.mean(ks))))
    if slope > 0.05 * scale:
        fabry = "consistent"
    elif slope < 0.005 * scale and ratio[-1] < 2.0 * max(1.0, ratio[0]):
        fabry = "inconsistent"
    else:
        fabry = "inconclusive"

    tested = 0
    hits = 0
    for idx in range(n_k.size):
        kk = idx + 1
        if kk < 10:
            continue
        tested += 1
        bound = kk * math.log(kk) * (math.log(math.log(kk)) ** alpha)
        if n_k[idx] > bound:
            hits += 1
    frac = hits / tested if tested else 0.0
    if tested == 0:
        hayman = "inconclusive"
    elif frac >= 0.95:
        hayman = "consistent"
    elif frac <= 0.05:
        hayman = "inconsistent"
    else:
        hayman = "inconclusive"
    return GapVerdicts(tuple(int(n) for n in nonzero), slope, fabry, frac,
                       hayman, float(alpha))


def order_from_coefficients(coeffs: Sequence[complex], zero_tol: float = ZERO_TOL) -> float:
    """Independent order estimate from coefficient decay.

    The classical exponent statistic k ln k / ln(1/|a_k|) converges only
    like 1/ln k, so the limsup is evaluated by regressing ln(1/|a_k|) on
    (k ln k - k): for order-rho decay the slope tends to 1/rho with an
    O(ln k) intercept, which the regression absorbs.
    """
    mags = np.abs(np.asarray(coeffs, dtype=complex))
    idx = np.nonzero(mags > 0)[0]
    idx = idx[idx >= 3]
    if idx.size < 5:
        raise ValueError("too few usable coefficients")
    kk = idx.astype(float)
    y = -np.log(mags[idx])
    x = kk * np.log(kk) - kk
    slope = float(np.polyfit(x, y, 1)[0])
    if slope <= 0:
        return math.inf
    return 1.0 / slope


@dataclass(frozen=True)
class MaxMinWitness:
    r: float
    s: Optional[float]        # least grid s in (r, r^C) with m(s) >= M(r)
    m_low_at_s: Optional[float]
    M_high_at_r: float
    searched_to: float        # top of the searched s-range
    range_truncated: bool     # r^C exceeded the profile top


@dataclass(frozen=True)
class MaxMinVerdict:
    C: float
    witnesses: tuple
    fraction_passed: float

    def to_dict(self):
        return {
            "C": self.C,
            "fraction_passed": self.fraction_passed,
            "witnesses": [
                {"r": w.r, "s": w.s, "m_low_at_s": w.m_low_at_s,
                 "M_high_at_r": w.M_high_at_r, "searched_to": w.searched_to,
                 "range_truncated": w.range_truncated}
                for w in self.witnesses
            ],
        }


def maxmin_check(profile: ModulusProfile, C: float) -> MaxMinVerdict:
    """Per-radius search for s in (r, r^C) where the minimum modulus beats M(r).

    Uses certified bracket ends conservatively: a witness needs the m-bracket
    low at s to reach the M-bracket high at r.  Radii whose s-range has no
    grid points at all are skipped (coverage gap); a truncated range (r^C
    beyond the profile) is flagged on the per-radius record.
    """
    if C <= 1:
        raise ValueError("C must exceed 1")
    r = np.asarray(profile.radii, dtype=float)
    m_low = np.array([e.low for e in profile.minima])
    M_high = np.array([e.high for e in profile.maxima])
    witnesses = []
    passed = 0
    tested = 0
    for i, ri in enumerate(r):
        if ri <= 1.0:
            continue  # r^C collapses below r
        s_top = ri ** C
        inside = np.nonzero((r > ri) & (r < s_top))[0]
        if inside.size == 0:
            continue
        tested += 1
        hit = None
        for j in inside:
            if m_low[j] >= M_high[i]:
                hit = j
                break
        truncated = s_top > r[-1]
        if hit is not None:
            passed += 1
            witnesses.append(MaxMinWitness(float(ri), float(r[hit]), float(m_low[hit]),
                                           float(M_high[i]), float(min(s_top, r[-1])),
                                           truncated))
        else:
            witnesses.append(MaxMinWitness(float(ri), None, None, float(M_high[i]),
                                           float(min(s_top, r[-1])), truncated))
    if tested == 0:
        raise ValueError("profile has no radius with usable (r, r^C) coverage")
    return MaxMinVerdict(float(C), tuple(witnesses), passed / tested)


@dataclass(frozen=True)
class VAComparison:
    n: int
    ln_m_iter: float
    ln_M_iter: float
    margin: float
    extrapolated: bool


@dataclass(frozen=True)
class VAVerdict:
    pair: Optional[tuple]          # (r, R) or None
    comparisons: tuple             # per-n records for the found pair
    model_based: bool              # any comparison used extrapolation
    horizon: int

    @property
    def found(self):
        return self.pair is not None

    def to_dict(self):
        return {
            "pair": list(self.pair) if self.pair else None,
            "model_based": self.model_based,
            "horizon": self.horizon,
            "comparisons": [
                {"n": c.n, "ln_m_iter": c.ln_m_iter, "ln_M_iter": c.ln_M_iter,
                 "margin": c.margin, "extrapolated": c.extrapolated}
                for c in self.comparisons
            ],
        }


def va_check(profile: ModulusProfile, model_m: GrowthModel, model_M: GrowthModel,
             horizon: int) -> VAVerdict:
    """First grid pair (r, R), r >= R, with min-modulus iterates from r
    dominating max-modulus iterates from R for all n <= horizon.

    Comparisons run on extended-range values; each records its ln-space
    margin and whether either side needed extrapolation.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    radii = np.asarray(profile.radii, dtype=float)
    for iR, R in enumerate(radii):
        try:
            M_seq = iterate_growth_map(model_M, ExtReal.from_value(float(R)), horizon)
        except RangeExhausted:
            continue
        if any(b.value <= a.value for a, b in zip(M_seq, M_seq[1:])):
            continue  # max-modulus iterates must escape
        for r in radii[iR:]:
            try:
                m_seq = iterate_growth_map(model_m, ExtReal.from_value(float(r)), horizon)
            except RangeExhausted:
                continue
            comps = []
            good = True
            for n in range(1, horizon + 1):
                mv, Mv = m_seq[n], M_seq[n]
                if mv.value < Mv.value:
                    good = False
                    break
                comps.append(VAComparison(
                    n, mv.value.ln(), Mv.value.ln(),
                    mv.value.ln() - Mv.value.ln(),
                    mv.extrapolated or Mv.extrapolated))
            if good:
                return VAVerdict((float(r), float(R)), tuple(comps),
                                 any(c.extrapolated for c in comps), horizon)
    return VAVerdict(None, (), False, horizon)


@dataclass(frozen=True)
class RegularityVerdict:
    feasible: bool
    C: float
    R: float
    witness_ln: tuple              # ln r_0 .. ln r_N when feasible
    failed_step: Optional[int]
    extrapolated: bool
    checks: tuple                  # (n, ln M(r_n), C * ln r_{n+1}) records

    def to_dict(self):
        return {
            "feasible": self.feasible,
            "C": self.C,
            "R": self.R,
            "witness_ln": list(self.witness_ln),
            "witness": [math.exp(x) if x < 700 else None for x in self.witness_ln],
            "failed_step": self.failed_step,
            "model_based": self.extrapolated,
            "checks": [list(c) for c in self.checks],
        }


def regularity_check(model_M: GrowthModel, R: float, C: float, horizon: int,
                     extension_decades: float = 6.0) -> RegularityVerdict:
    """Greedy search for a regular-growth chain r_0 .. r_horizon.

    Chain requirements: r_n at least the n-th max-modulus iterate of R, and
    ln M(r_n) at least C times ln r_{n+1}.  Candidates are the model's
    table grid extended a few decades via the extrapolation fit; the greedy
    choice is the least candidate that keeps the next step's floor
    satisfiable (one-step lookahead).  Reports the witness chain in ln form
    or the step at which the candidate interval became empty.
    """
    if C <= 1:
        raise ValueError("C must exceed 1")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if R <= 0:
        raise ValueError("R must be positive")
    used_extrap = False

    lnM_iter = [math.log(R)]
    for _ in range(horizon + 1):
        try:
            y, flag = model_M.eval_ln(lnM_iter[-1])
        except RangeExhausted:
            return RegularityVerdict(False, C, R, (), len(lnM_iter) - 1,
                                     used_extrap, ())
        used_extrap = used_extrap or flag
        lnM_iter.append(y)

    step = (model_M.ln_r[-1] - model_M.ln_r[0]) / max(1, len(model_M.ln_r) - 1)
    n_ext = int(extension_decades * math.log(10.0) / max(step, 1e-9)) + 1
    grid = np.concatenate([model_M.ln_r,
                           model_M.ln_r[-1] + np.arange(1, n_ext) * step])

    chain_ln = []
    chain_lnM = []
    upper = math.inf
    for n in range(horizon + 1):
        lower = lnM_iter[n]
        cands = grid[(grid >= lower - 1e-12) & (grid <= upper + 1e-12)]
        chosen = None
        for x in cands:
            try:
                lnM_x, flag = model_M.eval_ln(float(x))
            except RangeExhausted:
                break
            if n < horizon and lnM_x < C * lnM_iter[n + 1]:
                continue  # lookahead: next floor would be unreachable
            chosen = (float(x), float(lnM_x), flag)
            break
        if chosen is None:
            return RegularityVerdict(False, C, R, tuple(chain_ln), n,
                                     used_extrap, ())
        x, lnM_x, flag = chosen
        used_extrap = used_extrap or flag
        chain_ln.append(x)
        chain_lnM.append(lnM_x)
        upper = lnM_x / C

    checks = []
    for n in range(len(chain_ln) - 1):
        checks.append((n, chain_lnM[n], C * chain_ln[n + 1]))
        if chain_lnM[n] < C * chain_ln[n + 1] - 1e-9 * max(1.0, abs(chain_lnM[n])):
            return RegularityVerdict(False, C, R, tuple(chain_ln), n,
                                     used_extrap, tuple(checks))
    return RegularityVerdict(True, C, R, tuple(chain_ln), None, used_extrap,
                             tuple(checks))


def zip_rate(orbit: Sequence[ExtReal]) -> list:
    """log+ log+ of each orbit value over its 1-based index.

    Tower-level entries map through exactly; values whose double log
    overflows a float come back as inf.
    """
    if len(orbit) == 0:
        raise ValueError("empty orbit")
    out = []
    for n, v in enumerate(orbit, start=1):
        if isinstance(v, (int, float)):
            v = ExtReal.from_value(float(v))
        out.append(v.log_plus_log_plus() / n)
    return out


@dataclass(frozen=True)
class ClassificationReport:
    function: str
    orders: OrderEstimates
    gaps: Optional[GapVerdicts]
    maxmin: Optional[MaxMinVerdict]
    va: Optional[VAVerdict]
    regularity: Optional[RegularityVerdict]
    zip_rates: tuple
    zip_flags: tuple
    notes: tuple = ()

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "function": self.function,
            "orders": self.orders.to_dict(),
            "gaps": self.gaps.to_dict() if self.gaps else None,
            "maxmin": self.maxmin.to_dict() if self.maxmin else None,
            "va": self.va.to_dict() if self.va else None,
            "regularity": self.regularity.to_dict() if self.regularity else None,
            "zip_rates": list(self.zip_rates),
            "zip_flags": list(self.zip_flags),
            "notes": list(self.notes),
        }

    def to_json(self, path=None):
        doc = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(doc + "\n")
        return doc
