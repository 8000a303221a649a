"""Extended-range positive values and sampled growth models.

Iterates of circle extrema blow through native floating range after two or
three steps for any transcendental entire function, so comparisons like
"n-th iterate of the running-max of the minimum modulus against the n-th
iterate of the maximum modulus" are carried out on :class:`ExtReal` values:
an exponential-tower level plus a residual in a fixed canonical band.

:class:`GrowthModel` wraps a sampled table of ln phi against ln r with a
straight-line extrapolation of lnln phi over the top sampled decade; every
value produced past the table is flagged so downstream reports can separate
computed facts from modeled ones.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import total_ordering
from typing import Sequence

import numpy as np

# canonical residual band for level >= 1: one exp step keeps the
# residual representable and ordering lexicographic
BAND_LO = math.log(10.0)
BAND_HI = 100.0 * math.log(10.0)


class RangeExhausted(ValueError):
    """A value left the range a model or representation can honestly cover."""


@total_ordering
@dataclass(frozen=True)
class ExtReal:
    """value = exp applied ``level`` times to ``residual``, canonical form.

    Level 0 stores the value itself (anything below 10, including <= 0);
    level >= 1 keeps the residual inside [ln 10, ln 10^100).
    """

    level: int
    residual: float

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be non-negative")
        if self.level == 0:
            if self.residual >= 10.0:
                raise ValueError("level-0 residual must stay below 10; use canonical()")
        elif not (BAND_LO <= self.residual < BAND_HI):
            raise ValueError(f"residual {self.residual} outside canonical band at level {self.level}")

    # construction ---------------------------------------------------------

    @staticmethod
    def canonical(level: int, residual: float) -> "ExtReal":
        if math.isnan(residual):
            raise ValueError("residual is NaN")
        while level >= 1 and residual < BAND_LO:
            residual = math.exp(residual)
            level -= 1
        while residual >= (BAND_HI if level >= 1 else 10.0):
            residual = math.log(residual)
            level += 1
        return ExtReal(level, residual)

    @staticmethod
    def from_value(x: float) -> "ExtReal":
        return ExtReal.canonical(0, float(x))

    @staticmethod
    def from_log(ln_value: float) -> "ExtReal":
        """Canonical representation of exp(ln_value) for any float ln_value."""
        if math.isinf(ln_value) and ln_value > 0:
            raise RangeExhausted("log-value is +inf: beyond level-indexed range")
        if ln_value < BAND_LO:
            return ExtReal(0, math.exp(ln_value))
        return ExtReal.canonical(1, ln_value)

    # conversions ----------------------------------------------------------

    def ln(self) -> float:
        """Natural log of the represented value as a float (may overflow to inf)."""
        if self.level == 0:
            if self.residual < 0:
                raise ValueError("log of a negative value")
            return math.log(self.residual) if self.residual > 0 else -math.inf
        if self.level == 1:
            return self.residual
        x = self.residual
        for _ in range(self.level - 1):
            if x > 709.78:
                return math.inf
            x = math.exp(x)
        return x

    def __float__(self) -> float:
        if self.level == 0:
            return self.residual
        ln = self.ln()
        if ln > 709.78:
            raise OverflowError("value exceeds native floating range")
        return math.exp(ln)

    # arithmetic (the little this package needs) ---------------------------

    def exp(self) -> "ExtReal":
        if self.level == 0:
            return ExtReal.from_log(self.residual)
        return ExtReal.canonical(self.level + 1, self.residual)

    def log(self) -> "ExtReal":
        if self.level == 0:
            if self.residual <= 0:
                raise ValueError("log of a non-positive value")
            return ExtReal.from_value(math.log(self.residual))
        return ExtReal.canonical(self.level - 1, self.residual)

    def mul_const(self, c: float) -> "ExtReal":
        """Multiply by a moderate positive constant (levels 0 and 1 only)."""
        if c <= 0:
            raise ValueError("constant must be positive")
        if self.level == 0:
            return ExtReal.canonical(0, self.residual * c)
        if self.level == 1:
            return ExtReal.canonical(1, self.residual + math.log(c))
        raise ValueError("constant multiplication is defined at levels 0 and 1 only")

    def log_plus_log_plus(self) -> float:
        """log+ log+ of the represented value; exact passthrough at level >= 2."""
        if self.level >= 2:
            x = self.residual
            for _ in range(self.level - 2):
                if x > 709.78:
                    return math.inf
                x = math.exp(x)
            return x
        if self.level == 1:
            return math.log(self.residual) if self.residual > 1.0 else 0.0
        v = self.residual
        if v <= 1.0:
            return 0.0
        lv = math.log(v)
        return math.log(lv) if lv > 1.0 else 0.0

    # ordering -------------------------------------------------------------

    def _key(self):
        return (self.level, self.residual)

    def __lt__(self, other):
        if not isinstance(other, ExtReal):
            return NotImplemented
        return self._key() < other._key()

    def __eq__(self, other):
        if not isinstance(other, ExtReal):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        if self.level == 0:
            return f"ExtReal({self.residual!r})"
        return f"ExtReal(level={self.level}, residual={self.residual!r})"


def ext_from_log(ln_value: float) -> ExtReal:
    return ExtReal.from_log(ln_value)


def ext_compare(a: ExtReal, b: ExtReal) -> int:
    """Total order on canonical forms: -1, 0 or 1."""
    ka, kb = a._key(), b._key()
    return (ka > kb) - (ka < kb)


# --------------------------------------------------------------- GrowthModel

@dataclass(frozen=True)
class GrowthModel:
    """Sampled (ln r, ln phi) table plus an order-style extrapolation.

    ``slope``/``intercept`` fit lnln phi against ln r over the top sampled
    decade; NaN when the fit is unavailable (then extrapolation raises).
    """

    ln_r: np.ndarray
    ln_phi: np.ndarray
    slope: float
    intercept: float
    descriptor: str = ""

    def __post_init__(self):
        if len(self.ln_r) < 2:
            raise ValueError("growth model needs at least two samples")
        if not np.all(np.diff(self.ln_r) > 0):
            raise ValueError("ln_r grid must be strictly increasing")

    @staticmethod
    def from_samples(ln_r, ln_phi, descriptor: str = "") -> "GrowthModel":
        ln_r = np.asarray(ln_r, dtype=float)
        ln_phi = np.asarray(ln_phi, dtype=float)
        top = ln_r >= ln_r[-1] - math.log(10.0)
        usable = top & (ln_phi > 0)
        if usable.sum() >= 2:
            x = ln_r[usable]
            y = np.log(ln_phi[usable])
            slope, intercept = np.polyfit(x, y, 1)
        else:
            slope, intercept = math.nan, math.nan
        return GrowthModel(ln_r, ln_phi, float(slope), float(intercept), descriptor)

    @staticmethod
    def from_log_function(fn, ln_r_lo: float, ln_r_hi: float, n: int = 256,
                          descriptor: str = "") -> "GrowthModel":
        """Tabulate a synthetic map ln r -> ln phi(r) on an even grid."""
        xs = np.linspace(ln_r_lo, ln_r_hi, n)
        ys = np.array([fn(x) for x in xs], dtype=float)
        return GrowthModel.from_samples(xs, ys, descriptor)

    @property
    def ln_r_min(self) -> float:
        return float(self.ln_r[0])

    @property
    def ln_r_max(self) -> float:
        return float(self.ln_r[-1])

    def eval_ln(self, x: float) -> tuple[float, bool]:
        """ln phi at ln r = x; returns (value, extrapolated)."""
        if x < self.ln_r[0] - 1e-12:
            raise RangeExhausted(
                f"ln r = {x:.6g} below the model table (min {self.ln_r[0]:.6g})")
        if x <= self.ln_r[-1]:
            return float(np.interp(x, self.ln_r, self.ln_phi)), False
        if math.isnan(self.slope):
            raise RangeExhausted("no extrapolation fit available above the table")
        lnln = self.slope * x + self.intercept
        if lnln > 709.78:
            raise RangeExhausted("extrapolated ln phi overflows a float")
        return math.exp(lnln), True

    def to_csv(self, path, extrapolation_points: int = 8) -> None:
        """Write ln_r, ln_phi, regime rows; a few extrapolated rows document the fit."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ln_r", "ln_phi", "regime"])
            for x, y in zip(self.ln_r, self.ln_phi):
                w.writerow([repr(float(x)), repr(float(y)), "sampled"])
            if not math.isnan(self.slope) and extrapolation_points > 0:
                step = (self.ln_r[-1] - self.ln_r[0]) / max(1, len(self.ln_r) - 1)
                x = self.ln_r[-1]
                for _ in range(extrapolation_points):
                    x += step
                    try:
                        y, _ = self.eval_ln(float(x))
                    except RangeExhausted:
                        break
                    w.writerow([repr(float(x)), repr(float(y)), "extrapolated"])

    @staticmethod
    def from_csv(path) -> "GrowthModel":
        xs, ys = [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["regime"] == "sampled":
                    xs.append(float(row["ln_r"]))
                    ys.append(float(row["ln_phi"]))
        return GrowthModel.from_samples(np.array(xs), np.array(ys))


@dataclass(frozen=True)
class IterateEntry:
    value: ExtReal
    extrapolated: bool


def iterate_growth_map(model: GrowthModel, start: ExtReal, steps: int) -> list[IterateEntry]:
    """Orbit x_0 = start, x_{k+1} = phi(x_k) under the sampled/extrapolated model.

    Returns steps+1 entries including the start; each carries a provenance
    flag (the start itself counts as sampled input).  Raises
    :class:`RangeExhausted` when an iterate falls below the table or its
    log-value cannot be held in a float.
    """
    if isinstance(start, (int, float)):
        start = ExtReal.from_value(float(start))
    out = [IterateEntry(start, False)]
    x = start
    for _ in range(steps):
        lx = x.ln()
        if math.isinf(lx):
            raise RangeExhausted("iterate's log-value exceeds float range")
        ly, flag = model.eval_ln(lx)
        x = ExtReal.from_log(ly)
        out.append(IterateEntry(x, flag))
    return out
