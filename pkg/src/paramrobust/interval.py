"""Outward-rounded interval arithmetic on numpy arrays, and the ``Box`` type.

Every primitive takes lower and upper bound arrays and returns a new pair.
Arrays broadcast, so the same code evaluates one box or a batch of boxes.
Results of rounded operations are widened by one ulp in each direction;
transcendental functions get ``TRANSCENDENTAL_ULPS`` because libm only
promises faithful (not correctly rounded) results.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

TRANSCENDENTAL_ULPS = 4
_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny


def down(x, ulps: int = 1):
    x = np.asarray(x, dtype=float)
    for _ in range(ulps):
        x = np.nextafter(x, -np.inf)
    return x


def up(x, ulps: int = 1):
    x = np.asarray(x, dtype=float)
    for _ in range(ulps):
        x = np.nextafter(x, np.inf)
    return x


def _loose(lo, hi):
    # slack for inverse-function projections, whose absolute error is not
    # bounded by a fixed number of ulps near cancellation
    pad = 8 * _EPS * np.abs(np.where(np.isfinite(lo), lo, 0.0)) + 1e-300
    pad_hi = 8 * _EPS * np.abs(np.where(np.isfinite(hi), hi, 0.0)) + 1e-300
    return lo - pad - 4 * _TINY, hi + pad_hi + 4 * _TINY


def _nan_safe(lo, hi):
    lo = np.where(np.isnan(lo), -np.inf, lo)
    hi = np.where(np.isnan(hi), np.inf, hi)
    return lo, hi


def add(alo, ahi, blo, bhi):
    return down(alo + blo), up(ahi + bhi)


def sub(alo, ahi, blo, bhi):
    return down(alo - bhi), up(ahi - blo)


def neg(alo, ahi):
    return -ahi, -alo


def mul(alo, ahi, blo, bhi):
    with np.errstate(invalid="ignore"):
        p = np.stack(np.broadcast_arrays(alo * blo, alo * bhi, ahi * blo, ahi * bhi))
    # 0 * inf only arises for unbounded projections; treat as 0
    p = np.where(np.isnan(p), 0.0, p)
    return down(p.min(axis=0)), up(p.max(axis=0))


def div(alo, ahi, blo, bhi):
    """a / b, valid only where b excludes zero (callers mask the rest)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.stack(np.broadcast_arrays(alo / blo, alo / bhi, ahi / blo, ahi / bhi))
    lo = np.nanmin(np.where(np.isnan(q), np.inf, q), axis=0)
    hi = np.nanmax(np.where(np.isnan(q), -np.inf, q), axis=0)
    return down(lo), up(hi)


def iabs(alo, ahi):
    lo = np.where(alo >= 0, alo, np.where(ahi <= 0, -ahi, 0.0))
    hi = np.maximum(np.abs(alo), np.abs(ahi))
    return lo, hi


def imax(alo, ahi, blo, bhi):
    return np.maximum(alo, blo), np.maximum(ahi, bhi)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):
        e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def exp(alo, ahi):
    with np.errstate(over="ignore"):
        lo = down(np.exp(alo), TRANSCENDENTAL_ULPS)
        hi = up(np.exp(ahi), TRANSCENDENTAL_ULPS)
    return np.maximum(lo, 0.0), hi


def isigmoid(alo, ahi):
    lo = down(sigmoid(alo), TRANSCENDENTAL_ULPS)
    hi = up(sigmoid(ahi), TRANSCENDENTAL_ULPS)
    return np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)


def itanh(alo, ahi):
    lo = down(np.tanh(alo), TRANSCENDENTAL_ULPS)
    hi = up(np.tanh(ahi), TRANSCENDENTAL_ULPS)
    return np.clip(lo, -1.0, 1.0), np.clip(hi, -1.0, 1.0)


def ilog(clo, chi):
    """Preimage of [clo, chi] under exp."""
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.where(clo > 0, np.log(np.maximum(clo, _TINY)), -np.inf)
        hi = np.where(chi > 0, np.log(np.maximum(chi, _TINY)), -np.inf)
    return _loose(lo, hi)


def ilogit(clo, chi):
    """Preimage of [clo, chi] under the logistic sigmoid."""
    clo = np.clip(clo, 0.0, 1.0)
    chi = np.clip(chi, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.log(clo) - np.log1p(-clo)
        hi = np.log(chi) - np.log1p(-chi)
    lo = np.where(clo <= 0, -np.inf, np.where(clo >= 1, np.inf, lo))
    hi = np.where(chi <= 0, -np.inf, np.where(chi >= 1, np.inf, hi))
    return _loose(lo, hi)


def iatanh(clo, chi):
    clo = np.clip(clo, -1.0, 1.0)
    chi = np.clip(chi, -1.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = np.arctanh(clo)
        hi = np.arctanh(chi)
    return _loose(lo, hi)


def dsigmoid(alo, ahi):
    """Enclosure of sigmoid'(z) = s(1-s) over [alo, ahi]."""
    s_lo = sigmoid(alo)
    s_hi = sigmoid(ahi)
    d_lo, d_hi = s_lo * (1 - s_lo), s_hi * (1 - s_hi)
    lo = np.minimum(d_lo, d_hi)
    hi = np.where((alo <= 0) & (ahi >= 0), 0.25, np.maximum(d_lo, d_hi))
    return np.maximum(down(lo, TRANSCENDENTAL_ULPS), 0.0), np.minimum(up(hi, TRANSCENDENTAL_ULPS), 0.25)


def dtanh(alo, ahi):
    t_lo, t_hi = np.tanh(alo), np.tanh(ahi)
    d_lo, d_hi = 1 - t_lo * t_lo, 1 - t_hi * t_hi
    lo = np.minimum(d_lo, d_hi)
    hi = np.where((alo <= 0) & (ahi >= 0), 1.0, np.maximum(d_lo, d_hi))
    return np.maximum(down(lo, TRANSCENDENTAL_ULPS), 0.0), np.minimum(up(hi, TRANSCENDENTAL_ULPS), 1.0)


def hull(alo, ahi, blo, bhi):
    return np.minimum(alo, blo), np.maximum(ahi, bhi)


def intersect(alo, ahi, blo, bhi):
    return np.maximum(alo, blo), np.minimum(ahi, bhi)


def sum_outward(lo_terms, hi_terms, axis=-1):
    """Sum interval terms along ``axis`` with a rigorous rounding pad."""
    n = lo_terms.shape[axis]
    lo = lo_terms.sum(axis=axis)
    hi = hi_terms.sum(axis=axis)
    pad_lo = (n + 1) * _EPS * np.abs(lo_terms).sum(axis=axis)
    pad_hi = (n + 1) * _EPS * np.abs(hi_terms).sum(axis=axis)
    return down(lo - pad_lo), up(hi + pad_hi)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def __contains__(self, v) -> bool:
        return self.lo <= v <= self.hi

    def contains(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def __iter__(self):
        yield self.lo
        yield self.hi


class Box:
    """Axis-aligned product of closed intervals ``[lo[i], hi[i]]``."""

    __slots__ = ("lo", "hi", "names")

    def __init__(self, lo: Iterable[float], hi: Iterable[float], names: Sequence[str] | None = None):
        lo = np.array(lo, dtype=float).reshape(-1)
        hi = np.array(hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have the same length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("box bounds must not be NaN")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise ValueError(f"empty box: dimension {bad} has lo={lo[bad]} > hi={hi[bad]}")
        if names is not None and len(names) != lo.size:
            raise ValueError("one name per dimension required")
        lo.flags.writeable = False
        hi.flags.writeable = False
        self.lo = lo
        self.hi = hi
        self.names = tuple(names) if names is not None else None

    @classmethod
    def point(cls, x, names=None) -> "Box":
        return cls(x, x, names)

    @classmethod
    def from_pairs(cls, pairs, names=None) -> "Box":
        pairs = list(pairs)
        return cls([a for a, _ in pairs], [b for _, b in pairs], names)

    def __len__(self) -> int:
        return self.lo.size

    def __getitem__(self, i) -> Interval:
        return Interval(float(self.lo[i]), float(self.hi[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __repr__(self) -> str:
        dims = ", ".join(f"[{a:.6g}, {b:.6g}]" for a, b in zip(self.lo, self.hi))
        return f"Box({dims})"

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def midpoint(self) -> np.ndarray:
        return np.clip(0.5 * (self.lo + self.hi), self.lo, self.hi)

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))

    def contains_point(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.lo <= x) and np.all(x <= self.hi))

    def contains(self, other: "Box") -> bool:
        return bool(np.all(self.lo <= other.lo) and np.all(other.hi <= self.hi))

    def concat(self, other: "Box") -> "Box":
        names = None
        if self.names is not None and other.names is not None:
            names = self.names + other.names
        return Box(np.concatenate([self.lo, other.lo]), np.concatenate([self.hi, other.hi]), names)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, len(self)))

    def to_dict(self) -> dict:
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}
