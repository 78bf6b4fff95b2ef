"""Correctly rounded fused multiply-add for binary64 and binary32 values.

CPython 3.10 lacks math.fma, so fma64 computes round(a*b + c) with a single
rounding itself:

* fast path: Dekker two-product splits a*b into an exact hi+lo pair, then
  math.fsum delivers the correctly rounded (round-to-nearest-even) sum of
  hi + lo + c.  Valid while the splitting cannot overflow and the product
  stays comfortably normal.
* slow path: exact rational arithmetic via fractions.Fraction; CPython's
  int/int true division rounds correctly, so float(Fraction) is exact-to-
  nearest as well.

fma32 always takes the exact path and rounds once to binary32.
"""

from __future__ import annotations

import math
import struct
from fractions import Fraction

_SPLITTER = 134217729.0  # 2**27 + 1
_FAST_MAX = 2.0**400  # |a|,|b|,|c| below this keep the splitting exact
_FAST_MIN_PROD = 2.0**-800  # product magnitude above this stays normal


def _fma_exact(a: float, b: float, c: float) -> float:
    exact = Fraction(a) * Fraction(b) + Fraction(c)
    try:
        return float(exact)
    except OverflowError:
        return math.inf if exact > 0 else -math.inf


def fma64(a: float, b: float, c: float) -> float:
    """round(a*b + c) in binary64 with one rounding (round-to-nearest-even)."""
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(c)):
        return a * b + c  # special values: IEEE result is exact anyway
    aa, ab, ac = abs(a), abs(b), abs(c)
    if aa < _FAST_MAX and ab < _FAST_MAX and ac < _FAST_MAX:
        p = a * b
        # a product underflowing to zero from nonzero factors poisons the
        # error term, so only exact zeros may pass
        if (a == 0.0 or b == 0.0) or abs(p) > _FAST_MIN_PROD:
            ka = _SPLITTER * a
            a_hi = ka - (ka - a)
            a_lo = a - a_hi
            kb = _SPLITTER * b
            b_hi = kb - (kb - b)
            b_lo = b - b_hi
            err = ((a_hi * b_hi - p) + a_hi * b_lo + a_lo * b_hi) + a_lo * b_lo
            try:
                return math.fsum((p, err, c))
            except OverflowError:
                pass
    return _fma_exact(a, b, c)


# ---------------------------------------------------------------------------
# binary32


def _f32_bits(x: float) -> int:
    return struct.unpack("<I", struct.pack("<f", x))[0]


def _f32_from_bits(bits: int) -> float:
    return struct.unpack("<f", struct.pack("<I", bits & 0xFFFFFFFF))[0]


def _f32_neighbors(x: float) -> tuple[float, float]:
    """The binary32 values one step below and above x (x itself binary32)."""
    bits = _f32_bits(x)
    sign = bits >> 31
    mag = bits & 0x7FFFFFFF

    def from_mag(s: int, m: int) -> float:
        if m < 0:
            return _f32_from_bits(((s ^ 1) << 31) | 1)
        return _f32_from_bits((s << 31) | m)

    if sign == 0:
        return from_mag(0, mag - 1), from_mag(0, mag + 1)
    return from_mag(1, mag + 1), from_mag(1, mag - 1)


_F32_MAX = Fraction((2 - Fraction(1, 2**23)) * Fraction(2**127))
_F32_MAX_F = float(_F32_MAX)


def round_to_f32(exact: Fraction) -> float:
    """Round an exact rational to the nearest binary32 (ties to even)."""
    if exact == 0:
        return 0.0
    if exact >= _F32_MAX + Fraction(2**103):  # max + half ulp
        return math.inf
    if exact <= -_F32_MAX - Fraction(2**103):
        return -math.inf
    # A binary64 seed is within one binary32 ulp of the answer.  Packing
    # rejects doubles beyond the binary32 finite range outright, so clamp;
    # the neighbor scan below restores correctness.
    clamped = min(max(float(exact), -_F32_MAX_F), _F32_MAX_F)
    seed = float(struct.unpack("<f", struct.pack("<f", clamped))[0])
    lo, hi = _f32_neighbors(seed)
    best = seed
    best_err = abs(Fraction(seed) - exact)
    for cand in (lo, hi):
        if not math.isfinite(cand):
            continue
        err = abs(Fraction(cand) - exact)
        if err < best_err or (err == best_err and _f32_bits(cand) & 1 == 0 and _f32_bits(best) & 1 == 1):
            best, best_err = cand, err
    return best


def to_f32(x: float) -> float:
    """Nearest binary32 value to x (round-to-nearest-even, overflow to inf)."""
    if x == 0.0 or not math.isfinite(x):
        return x  # preserves zero sign, nan, inf
    return round_to_f32(Fraction(x))


def fma32(a: float, b: float, c: float) -> float:
    """round(a*b + c) in binary32 with one rounding; operands binary32-valued."""
    if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(c)):
        return a * b + c  # result is special, exactly representable
    if (a == 0.0 or b == 0.0) and c == 0.0:
        return a * b + c  # exact, keeps IEEE zero-sign rules
    return round_to_f32(Fraction(a) * Fraction(b) + Fraction(c))


def add32(a: float, b: float) -> float:
    if a == 0.0 and b == 0.0 or not (math.isfinite(a) and math.isfinite(b)):
        return a + b
    return round_to_f32(Fraction(a) + Fraction(b))


def mul32(a: float, b: float) -> float:
    if a == 0.0 or b == 0.0 or not (math.isfinite(a) and math.isfinite(b)):
        return a * b
    return round_to_f32(Fraction(a) * Fraction(b))
