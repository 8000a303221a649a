"""Command-line entry point: minimum-modulus computations as shell commands.

Exit codes separate science from failure: 0 = computed and positive,
2 = computed and mathematically negative (escape fails, no pair found,
construction inapplicable), 1 = malformed input or runtime error, reported
as machine-readable JSON on stderr.  All defaults are echoed into the
output JSON so every report is self-contained, and outputs carry no
timestamps: identical configurations reproduce bit-identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import classify, expr, grid, growth, modulus, realdyn
from .backend import BACKEND_NAME

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NEGATIVE = 2


class CliError(Exception):
    def __init__(self, message, kind="invalid-argument"):
        super().__init__(message)
        self.kind = kind


def _parse_range(text):
    try:
        lo, hi = text.split(":")
        lo, hi = float(lo), float(hi)
    except ValueError:
        raise CliError(f"--range expects lo:hi, got {text!r}") from None
    if not (0 < lo < hi):
        raise CliError(f"--range needs 0 < lo < hi, got {text!r}")
    return lo, hi


def _parse_window(text):
    try:
        x0, x1, y0, y1 = (float(p) for p in text.split(":"))
    except ValueError:
        raise CliError(f"--window expects x0:x1:y0:y1, got {text!r}") from None
    return x0, x1, y0, y1


def _parse_targets(text):
    """start:step:add (arithmetic) or start:ratio:mul (geometric)."""
    parts = text.split(":")
    if len(parts) != 3 or parts[2] not in ("add", "mul"):
        raise CliError(f"--targets expects start:step:add or start:ratio:mul, got {text!r}")
    start, step = float(parts[0]), float(parts[1])
    if parts[2] == "mul" and step <= 1:
        raise CliError("geometric targets need ratio > 1")
    if parts[2] == "add" and step <= 0:
        raise CliError("arithmetic targets need step > 0")
    return start, step, parts[2]


def _load_function(args):
    if args.fn and args.coeffs:
        raise CliError("give either --fn or --coeffs, not both")
    if args.fn:
        try:
            return expr.parse(args.fn), args.fn
        except expr.ExprError as e:
            raise CliError(str(e), "parse-error") from None
    if args.coeffs:
        try:
            node = expr.load_coefficients(args.coeffs)
        except (OSError, ValueError) as e:
            raise CliError(str(e), "coeffs-error") from None
        return node, f"poly:{os.path.basename(args.coeffs)}"
    raise CliError("a function is required: --fn EXPR or --coeffs FILE")


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _config_echo(args, **extra):
    cfg = {
        "fn": args.fn,
        "coeffs": args.coeffs,
        "range": getattr(args, "range", None),
        "grid": getattr(args, "grid", None),
        "tol": getattr(args, "tol", None),
        "threads": args.threads,
        "out": args.out,
        "backend": BACKEND_NAME,
    }
    cfg.update(extra)
    return cfg


def _sanitize(obj):
    """Plain JSON types only: numpy scalars unwrapped, non-finite floats to None."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _write_json(path, payload):
    with open(path, "w") as fh:
        fh.write(json.dumps(_sanitize(payload), indent=2, sort_keys=True) + "\n")


def _build_profile(fnode, args):
    lo, hi = _parse_range(args.range)
    return modulus.build_profile(fnode, lo, hi, grid=args.grid, tol=args.tol,
                                 threads=args.threads)


def cmd_profile(args):
    fnode, desc = _load_function(args)
    profile = _build_profile(fnode, args)
    path = _out_path(args, "profile.csv")
    profile.to_csv(path)
    print(path)
    return EXIT_OK


def cmd_escape_check(args):
    fnode, desc = _load_function(args)
    profile = _build_profile(fnode, args)
    phi = realdyn.PhiFunction.from_profile_min(profile, f"m(r) of {desc}")
    verdict = realdyn.check_escape(phi)
    crossings = modulus.envelope_crossings(profile, fnode)
    payload = {
        "function": desc,
        "verdict": verdict.to_dict(),
        "crossings": [{"radius": c.radius, "direction": c.direction} for c in crossings],
        "config": _config_echo(args),
    }
    _write_json(_out_path(args, "escape_check.json"), payload)
    print(_out_path(args, "escape_check.json"))
    return EXIT_OK if verdict.holds else EXIT_NEGATIVE


def cmd_orbit_fast(args):
    fnode, desc = _load_function(args)
    profile = _build_profile(fnode, args)
    phi = realdyn.PhiFunction.from_profile_min(profile, f"m(r) of {desc}")
    T = args.r if args.r is not None else None
    if T is None:
        verdict = realdyn.check_escape(phi)
        if not verdict.holds:
            payload = {"function": desc, "outcome": "escape-fails",
                       "verdict": verdict.to_dict(), "config": _config_echo(args)}
            _write_json(_out_path(args, "orbit_fast.json"), payload)
            print(_out_path(args, "orbit_fast.json"))
            return EXIT_NEGATIVE
        T = verdict.threshold * 1.05
    try:
        cert = realdyn.fastest_orbit(phi, T, args.horizon)
    except realdyn.EscapeConstructionError as e:
        payload = {"function": desc, "outcome": "construction-failed",
                   "failed_step": e.step, "message": str(e), "config": _config_echo(args)}
        _write_json(_out_path(args, "orbit_fast.json"), payload)
        print(_out_path(args, "orbit_fast.json"))
        return EXIT_NEGATIVE
    payload = cert.to_dict()
    payload["function"] = desc
    payload["config"] = _config_echo(args, T=T, horizon=args.horizon)
    _write_json(_out_path(args, "orbit_fast.json"), payload)
    print(_out_path(args, "orbit_fast.json"))
    return EXIT_OK


def cmd_orbit_slow(args):
    fnode, desc = _load_function(args)
    profile = _build_profile(fnode, args)
    phi = realdyn.PhiFunction.from_profile_min(profile, f"m(r) of {desc}")
    start, step, kind = _parse_targets(args.targets)
    n_targets = 4 * args.horizon + 16
    if kind == "add":
        targets = [start + step * n for n in range(n_targets)]
    else:
        targets = [start * (step ** n) for n in range(n_targets)]
    top = phi.t_hi
    targets = [min(t, top) for t in targets]
    # keep them strictly increasing after the cap
    out = [targets[0]]
    for t in targets[1:]:
        if t > out[-1]:
            out.append(t)
    targets = out
    T = args.r if args.r is not None else None
    if T is None:
        verdict = realdyn.check_escape(phi)
        if not verdict.holds:
            payload = {"function": desc, "outcome": "escape-fails",
                       "verdict": verdict.to_dict(), "config": _config_echo(args)}
            _write_json(_out_path(args, "orbit_slow.json"), payload)
            print(_out_path(args, "orbit_slow.json"))
            return EXIT_NEGATIVE
        T = verdict.threshold * 1.05
    try:
        cert = realdyn.slow_orbit(phi, T, targets, args.horizon)
    except realdyn.PitNotFoundError as e:
        payload = {"function": desc, "outcome": "inapplicable", "message": str(e),
                   "config": _config_echo(args)}
        _write_json(_out_path(args, "orbit_slow.json"), payload)
        print(_out_path(args, "orbit_slow.json"))
        return EXIT_NEGATIVE
    except realdyn.EscapeConstructionError as e:
        payload = {"function": desc, "outcome": "construction-failed",
                   "failed_step": e.step, "message": str(e), "config": _config_echo(args)}
        _write_json(_out_path(args, "orbit_slow.json"), payload)
        print(_out_path(args, "orbit_slow.json"))
        return EXIT_NEGATIVE
    payload = cert.to_dict()
    payload["function"] = desc
    payload["config"] = _config_echo(args, T=T, horizon=args.horizon, targets=args.targets)
    _write_json(_out_path(args, "orbit_slow.json"), payload)
    print(_out_path(args, "orbit_slow.json"))
    return EXIT_OK


def _models_from_profile(profile):
    ln_r = np.log(np.asarray(profile.radii, dtype=float))
    model_m = growth.GrowthModel.from_samples(
        ln_r, np.log(np.maximum(profile.min_values(), 1e-300)), "m(r)")
    model_M = growth.GrowthModel.from_samples(ln_r, profile.ln_max_values(), "M(r)")
    model_env = growth.GrowthModel.from_samples(
        ln_r, np.log(np.maximum(profile.envelope, 1e-300)), "envelope")
    return model_m, model_M, model_env


def cmd_classify(args):
    fnode, desc = _load_function(args)
    profile = _build_profile(fnode, args)
    notes = []
    orders = classify.estimate_orders(profile)
    try:
        if isinstance(fnode, expr.Poly):
            coeffs = list(fnode.coeffs)
        else:
            lo, hi = _parse_range(args.range)
            coeffs = list(expr.taylor_coefficients(fnode, 64, math.sqrt(lo * hi)).coefficients)
        gaps = classify.gap_analysis(coeffs, alpha=args.alpha)
    except (ValueError, OverflowError) as e:
        gaps = None
        notes.append(f"gap analysis unavailable: {e}")
    try:
        maxmin = classify.maxmin_check(profile, args.C)
    except ValueError as e:
        maxmin = None
        notes.append(f"max-min check unavailable: {e}")
    model_m, model_M, model_env = _models_from_profile(profile)
    va = classify.va_check(profile, model_m, model_M, args.horizon)
    R0 = args.R if args.R is not None else float(profile.radii[0])
    reg = classify.regularity_check(model_M, R0, args.C, args.horizon)
    try:
        entries = growth.iterate_growth_map(
            model_env, growth.ExtReal.from_value(float(profile.radii[0])), args.horizon + 4)
        rates = classify.zip_rate([e.value for e in entries[1:]])
        flags = [e.extrapolated for e in entries[1:]]
    except growth.RangeExhausted:
        rates, flags = [], []
    report = classify.ClassificationReport(
        function=desc, orders=orders, gaps=gaps, maxmin=maxmin, va=va,
        regularity=reg, zip_rates=tuple(rates), zip_flags=tuple(flags),
        notes=tuple(notes))
    payload = report.to_dict()
    payload["config"] = _config_echo(args, C=args.C, alpha=args.alpha,
                                     horizon=args.horizon, R=args.R)
    _write_json(_out_path(args, "classification.json"), payload)
    print(_out_path(args, "classification.json"))
    return EXIT_OK


def cmd_va_check(args):
    fnode, desc = _load_function(args)
    profile = _build_profile(fnode, args)
    model_m, model_M, _ = _models_from_profile(profile)
    verdict = classify.va_check(profile, model_m, model_M, args.horizon)
    payload = {"function": desc, "va": verdict.to_dict(),
               "config": _config_echo(args, horizon=args.horizon)}
    _write_json(_out_path(args, "va_check.json"), payload)
    print(_out_path(args, "va_check.json"))
    return EXIT_OK if verdict.found else EXIT_NEGATIVE


def cmd_regularity(args):
    fnode, desc = _load_function(args)
    profile = _build_profile(fnode, args)
    _, model_M, _ = _models_from_profile(profile)
    R0 = args.R if args.R is not None else float(profile.radii[0])
    verdict = classify.regularity_check(model_M, R0, args.C, args.horizon)
    payload = {"function": desc, "regularity": verdict.to_dict(),
               "config": _config_echo(args, C=args.C, horizon=args.horizon, R=R0)}
    _write_json(_out_path(args, "regularity.json"), payload)
    print(_out_path(args, "regularity.json"))
    return EXIT_OK if verdict.feasible else EXIT_NEGATIVE


def cmd_render(args):
    fnode, desc = _load_function(args)
    if args.range:
        lo, hi = _parse_range(args.range)
    else:
        lo = max(args.start / 4.0, 1e-3)
        hi = args.start * 64.0
    profile = modulus.build_profile(fnode, lo, hi, grid=args.grid, tol=args.tol,
                                    threads=args.threads)
    try:
        plan = grid.plan_thresholds(profile, args.kind, args.start, args.horizon)
    except grid.PlanError as e:
        payload = {"function": desc, "outcome": "plan-failed", "message": str(e),
                   "config": _config_echo(args)}
        _write_json(_out_path(args, "escape.json"), payload)
        print(_out_path(args, "escape.json"))
        return EXIT_NEGATIVE
    x0, x1, y0, y1 = _parse_window(args.window)
    window = grid.Window(x0, x1, y0, y1, args.res, args.res)
    eg = grid.render_escape_grid(fnode, plan, window, args.horizon, threads=args.threads)
    ppm = _out_path(args, "escape.ppm")
    eg.to_ppm(ppm)
    eg.to_csv(_out_path(args, "escape_exits.csv"))
    doc = json.loads(eg.sidecar())
    doc["function"] = desc
    doc["config"] = _config_echo(args, start=args.start, horizon=args.horizon,
                                 window=args.window, res=args.res, kind=args.kind)
    _write_json(_out_path(args, "escape.json"), doc)
    print(ppm)
    return EXIT_OK


def cmd_coeffs(args):
    fnode, desc = _load_function(args)
    radius = args.r if args.r is not None else 2.0
    count = args.grid if args.grid else 32
    try:
        res = expr.taylor_coefficients(fnode, count, radius)
    except OverflowError as e:
        raise CliError(str(e), "overflow") from None
    path = _out_path(args, "coeffs.csv")
    with open(path, "w", newline="") as fh:
        import csv as _csv
        w = _csv.writer(fh)
        w.writerow(["k", "re", "im", "error_bound"])
        for k, (c, b) in enumerate(zip(res.coefficients, res.error_bounds)):
            w.writerow([k, repr(float(c.real)), repr(float(c.imag)), repr(float(b))])
    print(path)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="minmod",
        description="Minimum-modulus iteration toolkit for entire functions.",
        epilog="Exit codes: 0 success, 1 error, 2 mathematically negative verdict.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, range_required=True):
        sp.add_argument("--fn", help="function as an expression in z, e.g. '2*z*(1+exp(-z))'")
        sp.add_argument("--coeffs", help="coefficient file ('poly:' header, one 're im' per line)")
        sp.add_argument("--range", required=range_required, metavar="LO:HI",
                        help="radius range for the modulus profile")
        sp.add_argument("--grid", type=int, default=128,
                        help="profile grid size (default 128)")
        sp.add_argument("--tol", type=float, default=1e-6,
                        help="relative bracket tolerance for circle extrema (default 1e-6)")
        sp.add_argument("--out", default=".", help="output directory (default .)")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for circle sweeps and rendering (default 1)")

    sp = sub.add_parser("profile", help="modulus profile CSV over a radius range")
    common(sp)
    sp.set_defaults(func=cmd_profile)

    sp = sub.add_parser("escape-check",
                        help="decide the escape condition on the range (exit 2 when it fails)")
    common(sp)
    sp.set_defaults(func=cmd_escape_check)

    sp = sub.add_parser("orbit-fast", help="fast-orbit certificate JSON")
    common(sp)
    sp.add_argument("--r", type=float, default=None,
                    help="starting threshold T (default: refined escape threshold * 1.05)")
    sp.add_argument("--horizon", type=int, default=8, help="orbit length (default 8)")
    sp.set_defaults(func=cmd_orbit_fast)

    sp = sub.add_parser("orbit-slow", help="slow-orbit certificate JSON")
    common(sp)
    sp.add_argument("--r", type=float, default=None,
                    help="starting threshold T (default: refined escape threshold * 1.05)")
    sp.add_argument("--horizon", type=int, default=48, help="chain length (default 48)")
    sp.add_argument("--targets", default="12.6:1.05:mul", metavar="START:STEP:KIND",
                    help="escape-rate targets, arithmetic 'start:step:add' or "
                         "geometric 'start:ratio:mul' (default 12.6:1.05:mul)")
    sp.set_defaults(func=cmd_orbit_slow)

    sp = sub.add_parser("classify", help="growth/gap classification report JSON")
    common(sp)
    sp.add_argument("--C", type=float, default=8.0,
                    help="max-min exponent: look for s in (r, r^C) (default 8)")
    sp.add_argument("--alpha", type=float, default=2.5,
                    help="strong-gap exponent alpha (default 2.5)")
    sp.add_argument("--R", type=float, default=None,
                    help="base radius for iterated comparisons (default: range low end)")
    sp.add_argument("--horizon", type=int, default=3,
                    help="iterated-comparison horizon (default 3)")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("va-check",
                        help="search for min-iterates dominating max-iterates (exit 2 if none)")
    common(sp)
    sp.add_argument("--horizon", type=int, default=3)
    sp.set_defaults(func=cmd_va_check)

    sp = sub.add_parser("regularity",
                        help="regular-growth chain search (exit 2 when infeasible)")
    common(sp)
    sp.add_argument("--C", type=float, default=2.0)
    sp.add_argument("--R", type=float, default=None)
    sp.add_argument("--horizon", type=int, default=3)
    sp.set_defaults(func=cmd_regularity)

    sp = sub.add_parser("render", help="escape-set image (PPM + CSV + JSON)")
    common(sp, range_required=False)
    sp.add_argument("--start", type=float, required=True,
                    help="threshold ladder start radius")
    sp.add_argument("--horizon", type=int, default=6)
    sp.add_argument("--kind", default="envelope-iterates",
                    choices=["m-iterates", "envelope-iterates", "M-iterates"],
                    help="threshold ladder source (default envelope-iterates; "
                         "raw m-iterates can die in minimum-modulus pits)")
    sp.add_argument("--window", required=True, metavar="X0:X1:Y0:Y1")
    sp.add_argument("--res", type=int, default=256, help="pixels per side (default 256)")
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("coeffs", help="power-series coefficients CSV")
    common(sp, range_required=False)
    sp.add_argument("--r", type=float, default=None, help="sampling radius (default 2)")
    sp.set_defaults(func=cmd_coeffs)

    return p


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    # argparse rejects values that open with '-': glue them onto their flag
    glued = []
    join_next = False
    for tok in argv:
        if join_next:
            glued[-1] = glued[-1] + "=" + tok
            join_next = False
            continue
        glued.append(tok)
        if tok in ("--window", "--range", "--targets"):
            join_next = True
    parser = build_parser()
    args = parser.parse_args(glued)
    try:
        return args.func(args)
    except CliError as e:
        json.dump({"error": {"type": e.kind, "message": str(e)}}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_ERROR
    except (modulus.CircleOverflowError, growth.RangeExhausted,
            classify.InsufficientSpanError) as e:
        json.dump({"error": {"type": type(e).__name__, "message": str(e)}}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_ERROR
    except ValueError as e:
        json.dump({"error": {"type": "value-error", "message": str(e)}}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
