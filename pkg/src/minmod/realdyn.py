"""Escape dynamics of a positive continuous function on a window of [0, inf).

Everything here is window-scoped: verdicts and certificates never claim
asymptotic truth from finite data.  The central construction brackets an
orbit inside an interval chain E_0, E_1, ... where phi maps each interval
onto the next; backward interval shooting then pins a witness point whose
orbit visits every interval, and the certificate records re-checkable
covering evidence plus per-step residuals.

Tabulated functions are piecewise linear, so continuity is exact and
bisection on them is sound; analytic callables get dense sampling plus
bisection with recorded residuals.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

SCHEMA_VERSION = 1
EQ_TOL = 1e-9  # relative tangency band for envelope-vs-identity comparisons
# a run of the identity hugging the window top this closely (log scale) is
# treated as out of scope rather than evidence that the escape holds
TAIL_EXCLUSION = 0.25


class EscapeConstructionError(RuntimeError):
    """Orbit construction failed at a specific step (tabulation artifacts)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class PitNotFoundError(RuntimeError):
    """No interval with a deep-enough dip: slow-orbit construction inapplicable."""


@dataclass(frozen=True)
class PhiFunction:
    """Positive continuous function on [t_lo, t_hi].

    Either an analytic callable wrapper or a tabulated piecewise-linear
    function on knots.  ``nondecreasing`` is a verified hint: when set the
    running maximum equals the function itself.
    """

    t_lo: float
    t_hi: float
    kind: str  # 'analytic' | 'tabulated'
    fn: Optional[Callable] = None
    knots_t: Optional[np.ndarray] = None
    knots_y: Optional[np.ndarray] = None
    eval_tol: float = 1e-12
    nondecreasing: Optional[bool] = None
    descriptor: str = ""

    @staticmethod
    def from_callable(fn, t_lo, t_hi, eval_tol=1e-12, descriptor="") -> "PhiFunction":
        return PhiFunction(float(t_lo), float(t_hi), "analytic", fn=fn,
                           eval_tol=eval_tol, descriptor=descriptor)

    @staticmethod
    def from_table(ts, ys, eval_tol=1e-12, descriptor="") -> "PhiFunction":
        ts = np.asarray(ts, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if ts.ndim != 1 or ts.size < 2 or not np.all(np.diff(ts) > 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(ys < 0):
            raise ValueError("phi must be non-negative")
        nd = bool(np.all(np.diff(ys) >= 0))
        return PhiFunction(float(ts[0]), float(ts[-1]), "tabulated",
                           knots_t=ts, knots_y=ys, eval_tol=eval_tol,
                           nondecreasing=nd, descriptor=descriptor)

    @staticmethod
    def from_profile_min(profile, descriptor="m(r) from profile") -> "PhiFunction":
        return PhiFunction.from_table(profile.radii, profile.min_values(),
                                      eval_tol=max(profile.tol, 1e-12),
                                      descriptor=descriptor)

    @staticmethod
    def from_profile_envelope(profile, descriptor="envelope from profile") -> "PhiFunction":
        return PhiFunction.from_table(profile.radii, profile.envelope,
                                      eval_tol=max(profile.tol, 1e-12),
                                      descriptor=descriptor)

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if self.kind == "analytic":
            out = np.asarray(self.fn(t_arr), dtype=float)
        else:
            out = np.interp(t_arr, self.knots_t, self.knots_y)
        return float(out) if np.isscalar(t) or t_arr.ndim == 0 else out

    def call_exact(self, t: Fraction) -> Fraction:
        """Exact rational evaluation of the piecewise-linear table.

        Float knots are exact rationals, so the interpolant value at a
        rational point is an exact rational; this is what makes orbit
        certificates on tabulated functions replay with zero residual.
        """
        if self.kind != "tabulated":
            raise ValueError("exact evaluation needs a tabulated function")
        ts, ys = self.knots_t, self.knots_y
        if t <= Fraction(float(ts[0])):
            return Fraction(float(ys[0]))
        if t >= Fraction(float(ts[-1])):
            return Fraction(float(ys[-1]))
        i = bisect_right(ts, float(t)) - 1
        i = max(0, min(i, len(ts) - 2))
        x0, x1 = Fraction(float(ts[i])), Fraction(float(ts[i + 1]))
        if t < x0:
            i -= 1
            x0, x1 = Fraction(float(ts[i])), Fraction(float(ts[i + 1]))
        elif t > x1:
            i += 1
            x0, x1 = Fraction(float(ts[i])), Fraction(float(ts[i + 1]))
        y0, y1 = Fraction(float(ys[i])), Fraction(float(ys[i + 1]))
        if x1 == x0:
            return y0
        return y0 + (t - x0) * (y1 - y0) / (x1 - x0)

    @property
    def window(self):
        return (self.t_lo, self.t_hi)

    def grid(self, n=2048):
        """Evaluation grid: knots for tables, log-spaced samples otherwise."""
        if self.kind == "tabulated":
            return self.knots_t
        lo = max(self.t_lo, 1e-300)
        if self.t_lo <= 0:
            return np.linspace(self.t_lo, self.t_hi, n)
        return np.geomspace(lo, self.t_hi, n)


def maximal_function(phi: PhiFunction) -> PhiFunction:
    """Running maximum of phi over [0, t], tabulated unless phi already is it.

    For a verified non-decreasing analytic phi the function itself is
    returned (exactness matters for closed-form orbit arithmetic).  The
    tabulated construction inserts plateau-crossing knots so the result is
    exactly the running maximum of the piecewise-linear input.
    """
    if phi.kind == "analytic":
        g = phi.grid()
        v = phi(g)
        if np.any(v < 0):
            raise ValueError("phi must be non-negative on its window")
        if np.all(np.diff(v) >= 0):
            return PhiFunction(phi.t_lo, phi.t_hi, "analytic", fn=phi.fn,
                               eval_tol=phi.eval_tol, nondecreasing=True,
                               descriptor=phi.descriptor + " (verified nondecreasing)")
        # refine around interior local maxima so plateaus start near peaks
        extra = []
        for i in range(1, len(g) - 1):
            if v[i] > v[i - 1] and v[i] > v[i + 1]:
                extra.extend(np.linspace(g[i - 1], g[i + 1], 9)[1:-1])
        ts = np.unique(np.concatenate([g, np.array(extra)])) if extra else g
        ys = phi(ts)
        return PhiFunction.from_table(ts, np.maximum.accumulate(ys),
                                      eval_tol=phi.eval_tol,
                                      descriptor=phi.descriptor + " running max")
    ts, ys = phi.knots_t, phi.knots_y
    out_t = [ts[0]]
    out_y = [ys[0]]
    run = ys[0]
    for i in range(1, len(ts)):
        t0, t1, y0, y1 = ts[i - 1], ts[i], ys[i - 1], ys[i]
        if y1 >= run:
            if y0 < run < y1:
                # crossing where the segment re-emerges above the plateau
                tc = t0 + (run - y0) * (t1 - t0) / (y1 - y0)
                if tc > out_t[-1]:
                    out_t.append(tc)
                    out_y.append(run)
            run = y1
            out_t.append(t1)
            out_y.append(run)
        else:
            out_t.append(t1)
            out_y.append(run)
    return PhiFunction.from_table(np.array(out_t), np.array(out_y),
                                  eval_tol=phi.eval_tol,
                                  descriptor=phi.descriptor + " running max")


@dataclass(frozen=True)
class EscapeVerdict:
    """Window-scoped decision of "running max above the identity from T on".

    Exactly one of threshold/counterexample is set.  ``margin`` is the
    minimum of maxphi(t) - t beyond the threshold (holds) and the tangency
    flags record isolated near-equalities that were not counted as failures.
    """

    outcome: str  # 'holds-on-window' | 'fails'
    window: tuple
    threshold: Optional[float] = None
    counterexample: Optional[float] = None
    counterexample_value: Optional[float] = None
    margin: Optional[float] = None
    tangencies: tuple = ()

    @property
    def holds(self):
        return self.outcome == "holds-on-window"

    def to_dict(self):
        return {
            "outcome": self.outcome,
            "window": list(self.window),
            "threshold": self.threshold,
            "counterexample": self.counterexample,
            "counterexample_value": self.counterexample_value,
            "margin": self.margin,
            "tangencies": list(self.tangencies),
        }


def check_escape(phi: PhiFunction) -> EscapeVerdict:
    """Decide whether the running max of phi dominates the identity up the window.

    Holds: reports the smallest grid T with maxphi(t) > t on [T, t_hi],
    refined by bisection to 1e-6 relative.  Isolated tangencies within a
    relative band of 1e-9 are flagged, not fatal.  A failure in the top
    quarter of the window (log scale) defeats the verdict: a hold-region
    clinging to the scope boundary is not evidence for an asymptotic
    property, so the verdict is 'fails' with the topmost failing t as
    counterexample.
    """
    mphi = maximal_function(phi)
    g = mphi.grid()
    if mphi.kind == "analytic" and g.size < 4096:
        g = np.geomspace(max(phi.t_lo, 1e-300), phi.t_hi, 4096) if phi.t_lo > 0 else \
            np.linspace(phi.t_lo, phi.t_hi, 4096)
    v = mphi(g)
    resid = v - g
    band = EQ_TOL * np.maximum(1.0, g)
    failures = resid < -band
    tangent = np.abs(resid) <= band

    if not np.any(failures):
        t0 = float(g[0])
        margin = float(np.min(resid))
        return EscapeVerdict("holds-on-window", mphi.window, threshold=t0,
                             margin=margin, tangencies=tuple(g[tangent][:16]))

    last_fail = int(np.nonzero(failures)[0][-1])
    lo, hi = mphi.t_lo, mphi.t_hi
    if lo > 0:
        frac = (math.log(g[last_fail]) - math.log(lo)) / max(1e-300, math.log(hi) - math.log(lo))
    else:
        frac = (g[last_fail] - lo) / (hi - lo)
    if frac >= 1.0 - TAIL_EXCLUSION or last_fail == len(g) - 1:
        return EscapeVerdict("fails", mphi.window,
                             counterexample=float(g[last_fail]),
                             counterexample_value=float(v[last_fail]),
                             tangencies=tuple(g[tangent][:16]))

    # refine the boundary between the last failure and the following hold
    a, b = float(g[last_fail]), float(g[last_fail + 1])
    fa = float(mphi(a) - a)
    while (b - a) > 1e-6 * max(1.0, a):
        m = 0.5 * (a + b)
        fm = float(mphi(m) - m)
        if fm < 0:
            a, fa = m, fm
        else:
            b = m
    threshold = b
    tail = g[g >= threshold]
    margin = float(np.min(mphi(tail) - tail)) if tail.size else 0.0
    return EscapeVerdict("holds-on-window", mphi.window, threshold=float(threshold),
                         margin=margin, tangencies=tuple(g[tangent][:16]))


# ------------------------------------------------------------ certificates

@dataclass(frozen=True)
class CoveringEvidence:
    """Points u, v inside interval n witnessing phi(E_n) covering E_{n+1}."""

    step: int
    u: float
    phi_u: float
    v: float
    phi_v: float


@dataclass(frozen=True)
class OrbitCertificate:
    """Interval chain with covering evidence and a concrete witness orbit.

    intervals[n] brackets the n-th orbit value; evidence[n] witnesses that
    phi maps interval n onto interval n+1; residuals are relative distances
    of the recomputed orbit outside its interval (0 when inside).
    """

    kind: str  # 'fastest' | 'slow'
    phi_descriptor: str
    window: tuple
    intervals: tuple       # ((lo, hi), ...)
    evidence: tuple        # CoveringEvidence per step
    witness: float
    orbit: tuple           # phi^n(witness), n = 0..N
    residuals: tuple
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "phi_source_descriptor": self.phi_descriptor,
            "window": list(self.window),
            "intervals": [[lo, hi] for lo, hi in self.intervals],
            "evidence": [
                {"step": e.step, "u": e.u, "phi_u": e.phi_u, "v": e.v, "phi_v": e.phi_v}
                for e in self.evidence
            ],
            "witness": self.witness,
            "orbit": list(self.orbit),
            "residuals": list(self.residuals),
            "meta": self.meta,
        }

    def to_json(self, path=None):
        doc = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(doc + "\n")
        return doc


def replay_certificate(cert: OrbitCertificate, phi: PhiFunction,
                       residual_factor: float = 2.0) -> dict:
    """Re-evaluate every covering inequality and orbit membership from scratch.

    Returns a report dict; ``ok`` is True when all evidence inequalities
    hold within evaluation tolerance and the re-run orbit stays within
    residual_factor times the stated residuals.  Certificates carrying an
    exact witness replay in exact rational arithmetic against a tabulated
    function, so their orbit memberships are checked with zero slack.
    """
    tol = max(phi.eval_tol, 1e-12)
    exact = bool(cert.meta.get("witness_exact")) and phi.kind == "tabulated"
    problems = []
    for e in cert.evidence:
        lo_next, hi_next = cert.intervals[e.step + 1]
        fu, fv = float(phi(e.u)), float(phi(e.v))
        scale = max(1.0, abs(lo_next), abs(hi_next))
        if fu > lo_next + tol * scale * 4:
            problems.append(f"step {e.step}: phi(u)={fu} exceeds left end {lo_next}")
        if fv < hi_next - tol * scale * 4:
            problems.append(f"step {e.step}: phi(v)={fv} under right end {hi_next}")
    if exact:
        num, den = cert.meta["witness_exact"]
        t = Fraction(int(num), int(den))
    else:
        t = cert.witness
    worst = 0.0
    for n, (lo, hi) in enumerate(cert.intervals):
        if exact:
            lof, hif = Fraction(lo), Fraction(hi)
            scale = max(Fraction(1), abs(lof), abs(hif))
            resid = float(max(Fraction(0), (lof - t) / scale, (t - hif) / scale))
        else:
            scale = max(1.0, abs(lo), abs(hi))
            resid = max(0.0, (lo - t) / scale, (t - hi) / scale)
        allowed = residual_factor * max(cert.residuals[n] if n < len(cert.residuals) else 0.0,
                                        1e-12 if exact else 1e-9)
        worst = max(worst, resid)
        if resid > allowed:
            problems.append(f"step {n}: orbit value {float(t)} outside [{lo}, {hi}] by {resid}")
        if n + 1 < len(cert.intervals):
            t = phi.call_exact(t) if exact else float(phi(t))
    return {"ok": not problems, "problems": problems, "worst_residual": worst}


def _exact_points_between(phi, u: Fraction, v: Fraction):
    """Path u -> v (either direction) through every knot strictly between."""
    ts = phi.knots_t
    lo, hi = (u, v) if u <= v else (v, u)
    inner = [Fraction(float(t)) for t in ts if lo < Fraction(float(t)) < hi]
    if u > v:
        inner.reverse()
    return [u] + inner + [v]


def _exact_interval_extrema(phi, lo: Fraction, hi: Fraction):
    """(min_val, argmin, max_val, argmax) of a PL table on [lo, hi], exact."""
    pts = _exact_points_between(phi, lo, hi)
    vals = [phi.call_exact(p) for p in pts]
    mn = min(range(len(pts)), key=lambda i: vals[i])
    mx = max(range(len(pts)), key=lambda i: vals[i])
    return vals[mn], pts[mn], vals[mx], pts[mx]


def _exact_shrink_into(phi, u: Fraction, v: Fraction, lo_next: Fraction, hi_next: Fraction):
    """Exact subinterval of [u..v] that a PL table maps into [lo_next, hi_next].

    Walks from u (phi <= lo_next side) toward v (phi >= hi_next side); the
    crossing equations are linear on each knot cell, so the edges solve
    exactly.  Targets are inset by a sliver so float-rounded chain ends
    cannot starve the walk; the result still maps inside the target.
    """
    inset = (hi_next - lo_next) / 1000000
    cap = Fraction(1, 10 ** 9) * max(Fraction(1), abs(hi_next))
    if inset > cap:
        inset = cap
    lo_t = lo_next + inset
    hi_t = hi_next - inset
    pts = _exact_points_between(phi, u, v)
    vals = [phi.call_exact(p) for p in pts]
    j = next((k for k, val in enumerate(vals) if val >= hi_t), None)
    if j is None:
        raise EscapeConstructionError(
            f"PL walk never reaches the right target {float(hi_t)} between "
            f"{float(u)} and {float(v)}")
    i = next((k for k in range(j, -1, -1) if vals[k] <= lo_t), None)
    if i is None:
        raise EscapeConstructionError(
            f"PL walk never dips to the left target {float(lo_t)} before the right crossing")
    if vals[i] == lo_t or i == j:
        a = pts[i]
    else:
        p0, p1, f0, f1 = pts[i], pts[i + 1], vals[i], vals[i + 1]
        a = p0 + (lo_t - f0) * (p1 - p0) / (f1 - f0)
    if vals[j] == hi_t:
        b = pts[j]
    else:
        p0, p1, f0, f1 = pts[j - 1], pts[j], vals[j - 1], vals[j]
        b = p0 + (hi_t - f0) * (p1 - p0) / (f1 - f0)
    return (a, b) if a <= b else (b, a)


def _exact_backward_shoot(phi, intervals_exact, evidence_exact):
    """Witness (exact rational) whose PL orbit visits every interval."""
    j_lo, j_hi = intervals_exact[-1]
    for n in range(len(intervals_exact) - 2, -1, -1):
        u, v = evidence_exact[n]
        try:
            j_lo, j_hi = _exact_shrink_into(phi, u, v, j_lo, j_hi)
        except EscapeConstructionError as exc:
            raise EscapeConstructionError(str(exc), step=n) from None
    return (j_lo + j_hi) / 2


def _exact_orbit_and_residuals(phi, witness: Fraction, intervals_exact):
    orbit = [witness]
    residuals = []
    t = witness
    for n, (lo, hi) in enumerate(intervals_exact):
        scale = max(Fraction(1), abs(lo), abs(hi))
        resid = max(Fraction(0), (lo - t) / scale, (t - hi) / scale)
        residuals.append(float(resid))
        if n + 1 < len(intervals_exact):
            t = phi.call_exact(t)
            orbit.append(t)
    return orbit, residuals


def _iterate_maxphi_exact(mphi, T, steps, eval_tol=1e-12):
    """Exact chain of running-max iterates on a tabulated function."""
    out = [Fraction(T)]
    top = Fraction(float(mphi.t_hi))
    for n in range(steps):
        nxt = mphi.call_exact(out[-1])
        if nxt > top:
            break
        if float(nxt - out[-1]) < 1e4 * max(eval_tol, 1e-14) * max(1.0, float(out[-1])):
            raise EscapeConstructionError(
                f"interval {n} is degenerate ({float(out[-1])} -> {float(nxt)}): "
                "T sits too close to the escape threshold; choose T with positive margin",
                step=n)
        out.append(nxt)
    return out


def _iterate_maxphi(mphi, T, steps, eval_tol=1e-12):
    """maxphi^n(T) for n = 0..steps; stops early at the window top.

    Rejects degenerate steps: when the running max creeps by less than the
    tabulation/evaluation noise, interval covering cannot be told apart
    from that noise, which happens when T sits essentially on the escape
    threshold.
    """
    out = [float(T)]
    for n in range(steps):
        nxt = float(mphi(out[-1]))
        if nxt > mphi.t_hi:
            break
        if nxt - out[-1] < 1e4 * max(eval_tol, 1e-14) * max(1.0, out[-1]):
            raise EscapeConstructionError(
                f"interval {n} is degenerate ({out[-1]} -> {nxt}): T sits too "
                "close to the escape threshold; choose T with positive margin",
                step=n)
        out.append(nxt)
    return out


def _locate_crossing(phi, a, b, target, tol):
    """Point t between a and b (either order) with phi(t) ~= target.

    Bisection on the segment; requires phi(a) <= target <= phi(b).
    """
    fa = float(phi(a))
    fb = float(phi(b))
    scale = max(1.0, abs(target))
    if not (fa <= target + tol * scale and fb >= target - tol * scale):
        raise EscapeConstructionError(
            f"bisection bracket lost: phi({a})={fa}, phi({b})={fb}, target={target}")
    lo, hi = a, b
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = float(phi(mid))
        if abs(fm - target) <= tol * max(1.0, abs(target)) or abs(hi - lo) <= 1e-15 * max(1.0, abs(lo)):
            return mid
        if fm < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _shrink_into(phi, u, v, lo_next, hi_next, tol):
    """Subinterval of [u..v] mapping into [lo_next, hi_next] under phi.

    Walks from u (where phi <= lo_next) toward v (where phi >= hi_next):
    takes the last sample below the left target before the first sample
    above the right target, then bisects both edges.  Between those edges
    phi stays inside the target interval at the sampling resolution.
    """
    n = 257
    ts = np.linspace(u, v, n)
    vals = np.asarray(phi(ts), dtype=float)
    scale = max(1.0, abs(hi_next))
    above = np.nonzero(vals >= hi_next - tol * scale)[0]
    if above.size == 0:
        raise EscapeConstructionError(
            f"no sample reaches the right target {hi_next} between {u} and {v}")
    j = int(above[0])
    below = np.nonzero(vals[:j + 1] <= lo_next + tol * scale)[0] if j >= 0 else np.array([])
    if below.size == 0:
        raise EscapeConstructionError(
            f"no sample under the left target {lo_next} before the right crossing")
    i = int(below[-1])
    if i == j:
        a = b = ts[i]
    else:
        a = _locate_crossing(phi, ts[i], ts[i + 1], lo_next, tol)
        b = _locate_crossing(phi, ts[j - 1], ts[j], hi_next, tol)
    lo, hi = (a, b) if a <= b else (b, a)
    return lo, hi


def _backward_shoot(phi, intervals, evidence, tol):
    """Witness whose orbit visits every interval: backward interval shooting."""
    n_steps = len(intervals) - 1
    j_lo, j_hi = intervals[-1]
    for n in range(n_steps - 1, -1, -1):
        e = evidence[n]
        try:
            a, b = _shrink_into(phi, e.u, e.v, j_lo, j_hi, tol)
        except EscapeConstructionError as exc:
            raise EscapeConstructionError(str(exc), step=n) from None
        j_lo, j_hi = a, b
    return 0.5 * (j_lo + j_hi)


def _orbit_and_residuals(phi, witness, intervals):
    orbit = [float(witness)]
    residuals = []
    t = float(witness)
    for n, (lo, hi) in enumerate(intervals):
        scale = max(1.0, abs(lo), abs(hi))
        residuals.append(max(0.0, (lo - t) / scale, (t - hi) / scale))
        if n + 1 < len(intervals):
            t = float(phi(t))
            orbit.append(t)
    return orbit, residuals


def fastest_orbit(phi: PhiFunction, T: float, horizon: int) -> OrbitCertificate:
    """Certificate for an orbit racing the iterated running maximum.

    Intervals E_n = [maxphi^n(T), maxphi^{n+1}(T)]; covering evidence is
    u_n = maxphi^n(T) (phi there cannot exceed the next running max) and
    v_n = the point where phi attains maxphi^{n+1}(T); backward shooting
    produces a witness with phi^n(t) in E_n for every n up to the horizon.

    Tabulated functions run the whole construction in exact rational
    arithmetic (piecewise-linear crossings solve exactly), so residuals
    are zero and replay is exact; analytic callables use dense sampling
    plus bisection with recorded residuals.
    """
    if phi.kind == "tabulated":
        return _fastest_orbit_exact(phi, T, horizon)
    mphi = maximal_function(phi)
    if mphi.kind == "tabulated":
        # running max of a non-monotone analytic function is tabulated:
        # hand the certificate machinery the tabulation of phi itself
        tab = PhiFunction.from_table(mphi.knots_t, phi(mphi.knots_t),
                                     eval_tol=phi.eval_tol,
                                     descriptor=phi.descriptor + " (tabulated)")
        return _fastest_orbit_exact(tab, T, horizon)
    tails = _iterate_maxphi(mphi, T, horizon + 1, phi.eval_tol)
    if len(tails) < 2:
        raise EscapeConstructionError("window too small for even one iteration", step=0)
    n_int = len(tails) - 1
    intervals = [(tails[n], tails[n + 1]) for n in range(n_int)]
    tol = max(phi.eval_tol, 1e-12)

    evidence = []
    for n in range(n_int - 1):
        lo_next, hi_next = intervals[n + 1]
        u = tails[n]
        v = tails[n + 1]  # nondecreasing analytic phi: argmax is the right end
        fu, fv = float(phi(u)), float(phi(v))
        if fu > lo_next * (1 + 4 * tol) + 4 * tol:
            raise EscapeConstructionError(
                f"covering evidence failed at step {n}: phi({u})={fu} > {lo_next}", step=n)
        if fv < hi_next * (1 - 4 * tol) - 4 * tol:
            raise EscapeConstructionError(
                f"covering evidence failed at step {n}: phi({v})={fv} < {hi_next}", step=n)
        evidence.append(CoveringEvidence(n, float(u), fu, float(v), fv))

    witness = _backward_shoot(phi, intervals, evidence, tol) if evidence else \
        0.5 * (intervals[0][0] + intervals[0][1])
    orbit, residuals = _orbit_and_residuals(phi, witness, intervals)
    return OrbitCertificate(
        kind="fastest", phi_descriptor=phi.descriptor or phi.kind,
        window=phi.window, intervals=tuple(intervals), evidence=tuple(evidence),
        witness=float(witness), orbit=tuple(orbit), residuals=tuple(residuals),
        meta={"T": float(T), "horizon": int(horizon),
              "iterates": [float(x) for x in tails]},
    )


def _fastest_orbit_exact(phi: PhiFunction, T: float, horizon: int) -> OrbitCertificate:
    mphi = maximal_function(phi)
    tails = _iterate_maxphi_exact(mphi, T, horizon + 1, phi.eval_tol)
    if len(tails) < 2:
        raise EscapeConstructionError("window too small for even one iteration", step=0)
    n_int = len(tails) - 1
    intervals_exact = [(tails[n], tails[n + 1]) for n in range(n_int)]

    evidence = []
    evidence_exact = []
    for n in range(n_int - 1):
        lo_next, hi_next = intervals_exact[n + 1]
        u = tails[n]
        _, _, vmax, argmax = _exact_interval_extrema(phi, tails[n], tails[n + 1])
        fu = phi.call_exact(u)
        band = Fraction(1, 10 ** 7) * max(Fraction(1), abs(hi_next))
        if fu > lo_next + band:
            raise EscapeConstructionError(
                f"covering evidence failed at step {n}: phi({float(u)})={float(fu)} "
                f"> {float(lo_next)}", step=n)
        if vmax < hi_next - band:
            raise EscapeConstructionError(
                f"covering evidence failed at step {n}: max phi {float(vmax)} "
                f"< {float(hi_next)}", step=n)
        evidence.append(CoveringEvidence(n, float(u), float(fu), float(argmax), float(vmax)))
        evidence_exact.append((u, argmax))

    if evidence_exact:
        witness = _exact_backward_shoot(phi, intervals_exact, evidence_exact)
    else:
        witness = (intervals_exact[0][0] + intervals_exact[0][1]) / 2
    orbit_exact, residuals = _exact_orbit_and_residuals(phi, witness, intervals_exact)
    return OrbitCertificate(
        kind="fastest", phi_descriptor=phi.descriptor or phi.kind,
        window=phi.window,
        intervals=tuple((float(a), float(b)) for a, b in intervals_exact),
        evidence=tuple(evidence), witness=float(witness),
        orbit=tuple(float(x) for x in orbit_exact), residuals=tuple(residuals),
        meta={"T": float(T), "horizon": int(horizon),
              "iterates": [float(x) for x in tails],
              "witness_exact": [str(witness.numerator), str(witness.denominator)],
              "exact": True},
    )


def slow_orbit(phi: PhiFunction, T: float, targets: Sequence[float],
               horizon: int) -> OrbitCertificate:
    """Certificate for an orbit escaping no faster than the given targets.

    Builds the fast chain E_n, finds pit intervals whose minimum dips below
    the chain bottom (so phi maps them over the whole chain so far), and
    repeats each pit interval in the chain often enough that the witness
    orbit obeys phi^m(t) <= targets[m] from the reported index N_a on.

    Needs exact interval shooting to pin an orbit through long repeated
    chains, so the function is tabulated first if it is not already.
    """
    targets = [float(a) for a in targets]
    if any(b <= a for a, b in zip(targets, targets[1:])):
        raise ValueError("targets must be strictly increasing")
    if phi.kind != "tabulated":
        g = phi.grid(8192)
        phi = PhiFunction.from_table(g, phi(g), eval_tol=phi.eval_tol,
                                     descriptor=(phi.descriptor or "analytic") + " (tabulated)")
    mphi = maximal_function(phi)
    tails = _iterate_maxphi_exact(mphi, T, horizon + 1, phi.eval_tol)
    n_int = len(tails) - 1
    if n_int < 2:
        raise EscapeConstructionError("window too small for the interval chain", step=0)
    intervals_exact = [(tails[n], tails[n + 1]) for n in range(n_int)]

    extrema = [_exact_interval_extrema(phi, lo, hi) for lo, hi in intervals_exact]
    pit_min = [e[0] for e in extrema]
    pit_arg = [e[1] for e in extrema]

    n0 = None
    pits = []
    for cand in range(n_int):
        ok = [k for k in range(cand, n_int) if pit_min[k] <= tails[cand]]
        if ok:
            n0, pits = cand, ok
            break
    if n0 is None:
        raise PitNotFoundError(
            "no interval's minimum dips below the chain bottom; "
            "slow-orbit construction inapplicable on this window")

    def target_at(m):
        return targets[min(m, len(targets) - 1)]

    def required_position(n):
        """Least chain position whose target covers the right end of E_n."""
        u = float(tails[n + 1])
        if targets[-1] < u:
            return None
        lo_i, hi_i = 0, len(targets) - 1
        while lo_i < hi_i:
            mid = (lo_i + hi_i) // 2
            if targets[mid] >= u:
                hi_i = mid
            else:
                lo_i = mid + 1
        return lo_i

    # drop trailing intervals the target sequence can never cover
    n_eff = n_int
    while n_eff > n0 + 1 and required_position(n_eff - 1) is None:
        n_eff -= 1

    # chain of interval indices: each pit repeats until every interval up to
    # the next pit lands at a position whose target covers it
    pit_set = set(p for p in pits if p < n_eff)
    if not pit_set:
        raise PitNotFoundError("all pit intervals lie beyond the targets' reach")
    chain = []
    rep_counts = {}
    for n in range(n0, n_eff):
        chain.append(n)
        if n in pit_set:
            later = [p for p in sorted(pit_set) if p > n]
            j_hi = later[0] if later else n_eff - 1
            extra = 0
            for j in range(n, j_hi + 1):
                rq = required_position(j)
                if rq is None:
                    continue
                base_pos = len(chain) - 1 + (j - n)
                extra = max(extra, rq - base_pos)
            if extra > 0:
                chain.extend([n] * extra)
            rep_counts[n] = 1 + max(0, extra)
        if len(chain) > horizon:
            break
    chain = chain[:horizon + 1]

    cert_intervals_exact = [intervals_exact[i] for i in chain]
    evidence = []
    evidence_exact = []
    for step in range(len(chain) - 1):
        i_cur, i_next = chain[step], chain[step + 1]
        if i_next == i_cur:
            # pit self-step: the pit point maps below the chain bottom,
            # the interval maximum maps beyond its own right end
            u, v = pit_arg[i_cur], extrema[i_cur][3]
        else:
            u, v = tails[i_cur], extrema[i_cur][3]
        evidence_exact.append((u, v))
        evidence.append(CoveringEvidence(step, float(u), float(phi.call_exact(u)),
                                         float(v), float(phi.call_exact(v))))

    witness = _exact_backward_shoot(phi, cert_intervals_exact, evidence_exact)
    orbit_exact, residuals = _exact_orbit_and_residuals(phi, witness, cert_intervals_exact)

    # N_a: first index from which every chain interval sits under its target
    n_a = None
    for m in range(len(cert_intervals_exact)):
        if all(float(cert_intervals_exact[k][1]) <= target_at(k)
               for k in range(m, len(cert_intervals_exact))):
            n_a = m
            break
    if n_a is None:
        raise EscapeConstructionError(
            "repetition counts could not pin the chain under the targets",
            step=len(chain) - 1)

    return OrbitCertificate(
        kind="slow", phi_descriptor=phi.descriptor or phi.kind,
        window=phi.window,
        intervals=tuple((float(a), float(b)) for a, b in cert_intervals_exact),
        evidence=tuple(evidence), witness=float(witness),
        orbit=tuple(float(x) for x in orbit_exact), residuals=tuple(residuals),
        meta={"T": float(T), "horizon": int(horizon), "targets": targets,
              "N_a": int(n_a), "pit_indices": [int(p) for p in pits],
              "base_index": int(n0),
              "witness_exact": [str(witness.numerator), str(witness.denominator)],
              "exact": True,
              "repetitions": {str(k): int(v) for k, v in rep_counts.items()}},
    )


def iterate_phi(phi: PhiFunction, t: float, horizon: int) -> dict:
    """Raw orbit of phi from t: values until the horizon or window exit."""
    if not (phi.t_lo <= t <= phi.t_hi):
        raise ValueError(f"start {t} outside window {phi.window}")
    values = [float(t)]
    reason = "completed"
    for _ in range(horizon):
        nxt = float(phi(values[-1]))
        if nxt < phi.t_lo or nxt > phi.t_hi:
            values.append(nxt)
            reason = "escaped-window"
            break
        values.append(nxt)
    return {"values": values, "exit_reason": reason}
