"""Escape-set rendering against iterated-modulus threshold ladders.

A threshold plan is an increasing ladder rho_0 < rho_1 < ... of
extended-range radii (minimum-modulus iterates, envelope iterates,
maximum-modulus iterates, or custom).  A pixel's first-exit index is the
least n with |f^n(z)| >= rho_n; pixels that never exit within the horizon
are the finite-horizon proxy of the trapped set.

Pixels are independent work items: rendering splits rows across a thread
pool and writes into disjoint slices, so output is bit-identical for every
thread count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import backend
from ._tape import compile_tape
from .expr import ExprAst
from .growth import ExtReal, GrowthModel, RangeExhausted, iterate_growth_map

SCHEMA_VERSION = 1
PLAN_KINDS = ("m-iterates", "envelope-iterates", "M-iterates", "custom")
MAX_PLAN_LEVEL = 2

# first-exit colors cycle through this palette; no-exit pixels stay black
PALETTE = (
    (68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98),
    (253, 231, 37), (220, 50, 32), (0, 114, 178), (240, 228, 66),
    (204, 121, 167), (86, 180, 233), (230, 159, 0), (148, 103, 189),
    (23, 190, 207), (188, 189, 34), (140, 86, 75), (227, 119, 194),
)


class PlanError(ValueError):
    """Threshold ladder could not be built (non-increasing or out of range)."""


@dataclass(frozen=True)
class ThresholdPlan:
    kind: str
    radii: tuple               # ExtReal, strictly increasing
    extrapolated: tuple        # provenance flag per entry
    source: str
    start: float

    def __post_init__(self):
        if self.kind not in PLAN_KINDS:
            raise PlanError(f"unknown plan kind {self.kind!r}")
        vals = list(self.radii)
        for a, b in zip(vals, vals[1:]):
            if not (a < b):
                raise PlanError("threshold radii must be strictly increasing")
        for v in vals:
            if v.level > MAX_PLAN_LEVEL:
                raise PlanError(
                    f"threshold beyond tower level {MAX_PLAN_LEVEL}; shorten the horizon")

    def __len__(self):
        return len(self.radii)

    def log_radii(self) -> np.ndarray:
        return np.array([v.ln() for v in self.radii])

    def to_dict(self):
        return {
            "kind": self.kind,
            "source": self.source,
            "start": self.start,
            "ln_radii": [v.ln() for v in self.radii],
            "levels": [v.level for v in self.radii],
            "extrapolated": list(self.extrapolated),
        }


def plan_thresholds(source, kind: str, start: float, horizon: int) -> ThresholdPlan:
    """Threshold ladder rho_n for n = 0..horizon from a profile or model.

    source: a GrowthModel, or a ModulusProfile (the model is then built
    from the profile column the kind names).  Raises PlanError when the
    iterates fail to increase (the escape condition fails at this start)
    or would pass tower level 2.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if isinstance(source, GrowthModel):
        model = source
        descriptor = model.descriptor or "model"
    else:
        profile = source
        ln_r = np.log(np.asarray(profile.radii, dtype=float))
        if kind == "m-iterates":
            vals = np.log(np.maximum(profile.min_values(), 1e-300))
            descriptor = "profile m(r)"
        elif kind == "envelope-iterates":
            vals = np.log(np.maximum(profile.envelope, 1e-300))
            descriptor = "profile envelope"
        elif kind == "M-iterates":
            vals = profile.ln_max_values()
            descriptor = "profile M(r)"
        else:
            raise PlanError("custom plans take explicit radii; use custom_plan()")
        model = GrowthModel.from_samples(ln_r, vals, descriptor)
    if not (math.exp(model.ln_r_min) * (1 - 1e-12) <= start <= math.exp(model.ln_r_max) * (1 + 1e-12)):
        raise PlanError(f"start {start} outside the sampled range of {descriptor}")
    try:
        entries = iterate_growth_map(model, ExtReal.from_value(float(start)), horizon)
    except RangeExhausted as exc:
        raise PlanError(f"iterates left the representable range: {exc}") from None
    radii = tuple(e.value for e in entries)
    for a, b in zip(radii, radii[1:]):
        if not (a < b):
            raise PlanError(
                "iterates are non-increasing at this start: the escape "
                "condition fails here")
    return ThresholdPlan(kind, radii, tuple(e.extrapolated for e in entries),
                         descriptor, float(start))


def custom_plan(radii: Sequence[float], source: str = "custom") -> ThresholdPlan:
    """Plan from explicit increasing radii; the covering property of the
    matching domains is the caller's hypothesis."""
    vals = tuple(ExtReal.from_value(float(r)) for r in radii)
    return ThresholdPlan("custom", vals, tuple(False for _ in vals), source, float(radii[0]))


@dataclass(frozen=True)
class Window:
    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError("window must have positive extent")
        if self.nx < 1 or self.ny < 1:
            raise ValueError("resolution must be positive")

    def pixel_centers(self):
        xs = self.x0 + (np.arange(self.nx) + 0.5) * (self.x1 - self.x0) / self.nx
        ys = self.y1 - (np.arange(self.ny) + 0.5) * (self.y1 - self.y0) / self.ny
        return xs, ys  # ys run top row first, the image convention

    def to_dict(self):
        return {"x0": self.x0, "x1": self.x1, "y0": self.y0, "y1": self.y1,
                "nx": self.nx, "ny": self.ny}


@dataclass(frozen=True)
class EscapeGrid:
    window: Window
    exit_index: np.ndarray     # int32 (ny, nx); -1 = no exit within horizon
    last_logabs: np.ndarray    # float64 (ny, nx): ln|f^n(z)| at the last tracked step
    overflow: np.ndarray       # bool (ny, nx)
    horizon: int
    plan: ThresholdPlan

    def histogram(self) -> dict:
        vals, counts = np.unique(self.exit_index, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def to_ppm(self, path) -> None:
        """Binary PPM (P6), 8-bit RGB, palette by exit index, no-exit black."""
        img = np.zeros((self.window.ny, self.window.nx, 3), dtype=np.uint8)
        pal = np.array(PALETTE, dtype=np.uint8)
        hit = self.exit_index >= 0
        img[hit] = pal[self.exit_index[hit] % len(pal)]
        with open(path, "wb") as fh:
            fh.write(f"P6\n{self.window.nx} {self.window.ny}\n255\n".encode())
            fh.write(img.tobytes())

    def to_csv(self, path) -> None:
        """Per-pixel exit indices, row-major, one image row per CSV row."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.exit_index:
                w.writerow([int(v) for v in row])

    def sidecar(self, path=None) -> str:
        doc = json.dumps({
            "schema_version": SCHEMA_VERSION,
            "window": self.window.to_dict(),
            "horizon": self.horizon,
            "plan": self.plan.to_dict(),
            "exit_histogram": {str(k): v for k, v in sorted(self.histogram().items())},
            "overflow_pixels": int(np.count_nonzero(self.overflow)),
        }, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(doc + "\n")
        return doc


def render_escape_grid(f: ExprAst, plan: ThresholdPlan, window: Window,
                       horizon: int, threads: int = 1) -> EscapeGrid:
    """Classify every pixel center by first-exit index against the plan.

    Comparison convention: test n uses rho_n starting at n = 0, so a pixel
    already beyond rho_0 exits immediately; f applies between tests.  An
    iterate whose magnitude leaves the trackable range exits with the
    overflow flag set.
    """
    if len(plan) < horizon:
        raise ValueError(f"plan holds {len(plan)} radii; horizon {horizon} needs at least that many")
    tape = compile_tape(f)
    log_thr = plan.log_radii()
    xs, ys = window.pixel_centers()
    exit_index = np.empty((window.ny, window.nx), dtype=np.int32)
    last_logabs = np.empty((window.ny, window.nx), dtype=np.float64)
    overflow = np.empty((window.ny, window.nx), dtype=bool)

    def run_rows(i0, i1):
        zs = (xs[None, :] + 1j * ys[i0:i1, None]).ravel()
        e, la, ov = backend.escape_scan(tape, zs, log_thr, horizon)
        exit_index[i0:i1] = e.reshape(i1 - i0, window.nx)
        last_logabs[i0:i1] = la.reshape(i1 - i0, window.nx)
        overflow[i0:i1] = ov.reshape(i1 - i0, window.nx)

    if threads > 1:
        chunk = max(1, window.ny // (threads * 4))
        spans = [(i, min(i + chunk, window.ny)) for i in range(0, window.ny, chunk)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda s: run_rows(*s), spans))
    else:
        run_rows(0, window.ny)
    return EscapeGrid(window, exit_index, last_logabs, overflow, horizon, plan)
