"""Bit-exactness of the fused multiply-add primitives.

The oracle here is deliberately written from scratch: exact rational
arithmetic plus CPython's correctly rounded int/int division.
"""

import math
import struct
from fractions import Fraction

import numpy as np
import pytest

from rvvlab import fpmath


def oracle_fma64(a: float, b: float, c: float) -> float:
    exact = Fraction(a) * Fraction(b) + Fraction(c)
    try:
        return float(exact)
    except OverflowError:
        return math.inf if exact > 0 else -math.inf


def bits64(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def bits32(x: float) -> int:
    return struct.unpack("<I", struct.pack("<f", x))[0]


def test_simple_values():
    assert fpmath.fma64(2.0, 3.0, 1.0) == 7.0
    assert fpmath.fma64(0.0, 5.0, 1.5) == 1.5
    assert fpmath.fma64(1.0, 1.0, -1.0) == 0.0


def test_single_rounding_differs_from_two_roundings():
    # (1+eps)^2 - 1 = 2 eps + eps^2; the eps^2 term survives only if the
    # product is not rounded before the add
    eps = 2.0**-30
    a = 1.0 + eps
    assert a * a - 1.0 == 2 * eps  # two roundings lose eps^2
    assert fpmath.fma64(a, a, -1.0) == 2 * eps + eps * eps
    assert fpmath.fma64(a, a, -1.0) == oracle_fma64(a, a, -1.0)


@pytest.mark.parametrize("scale_bits", [0, 100, -100, 300, -300, 510, -510, -1000])
def test_random_triples_match_oracle(scale_bits):
    rng = np.random.Generator(np.random.Philox(key=1234 + scale_bits))
    scale = math.ldexp(1.0, scale_bits)
    for _ in range(1500):
        a = float(rng.uniform(-2, 2)) * scale
        b = float(rng.uniform(-2, 2))
        c = float(rng.uniform(-2, 2)) * scale
        got = fpmath.fma64(a, b, c)
        want = oracle_fma64(a, b, c)
        assert bits64(got) == bits64(want), (a, b, c)


def test_exact_cancellation_and_tiny_results():
    # a*b exactly cancels c, plus residues far below the add's rounding step
    a = 1.0 + 2.0**-30
    prod = a * a  # representable? force exact cancel via fma(a, a, -fma(a,a,0))
    assert fpmath.fma64(a, a, -(a * a)) == oracle_fma64(a, a, -prod)
    # subnormal territory
    tiny = 5e-324
    assert fpmath.fma64(tiny, 0.5, 0.0) == oracle_fma64(tiny, 0.5, 0.0)
    assert fpmath.fma64(2.0**-600, 2.0**-600, 1.0) == 1.0
    assert fpmath.fma64(2.0**-600, 2.0**-600, 0.0) == oracle_fma64(2.0**-600, 2.0**-600, 0.0)


def test_special_values():
    assert math.isnan(fpmath.fma64(math.nan, 1.0, 1.0))
    assert fpmath.fma64(math.inf, 2.0, -1.0) == math.inf
    assert math.isnan(fpmath.fma64(math.inf, 0.0, 1.0))
    assert fpmath.fma64(1e308, 1e308, 0.0) == math.inf
    assert fpmath.fma64(-1e308, 1e308, 0.0) == -math.inf


def test_overflow_boundary():
    big = math.ldexp(1.0, 1023)
    assert fpmath.fma64(big, 2.0, 0.0) == math.inf
    assert fpmath.fma64(big, 2.0, -big) == big == oracle_fma64(big, 2.0, -big)


# ---------------------------------------------------------------------------
# binary32


def ulp32(x: float) -> Fraction:
    return Fraction(np.spacing(np.float32(abs(x)), dtype=np.float32).item())


def test_fma32_is_correctly_rounded():
    rng = np.random.Generator(np.random.Philox(key=77))
    for _ in range(2000):
        a = float(np.float32(rng.uniform(-4, 4)))
        b = float(np.float32(rng.uniform(-4, 4)))
        c = float(np.float32(rng.uniform(-4, 4)))
        got = fpmath.fma32(a, b, c)
        assert np.float32(got) == got  # representable in binary32
        exact = Fraction(a) * Fraction(b) + Fraction(c)
        err = abs(Fraction(got) - exact)
        half = ulp32(got) / 2
        assert err <= half, (a, b, c, got)
        if err == half:  # tie must land on an even significand
            assert bits32(got) & 1 == 0


def test_fma32_differs_from_double_rounding():
    # product exact in binary64; adding c makes a tie at binary32 precision
    # that an intermediate binary64 rounding would break the wrong way
    a = float(np.float32(1.0 + 2.0**-12))
    b = float(np.float32(1.0 + 2.0**-12))
    c = float(np.float32(2.0**-25))
    got = fpmath.fma32(a, b, c)
    exact = Fraction(a) * Fraction(b) + Fraction(c)
    assert abs(Fraction(got) - exact) <= ulp32(got) / 2


def test_round_to_f32_edges():
    max32 = float(np.finfo(np.float32).max)
    assert fpmath.round_to_f32(Fraction(max32)) == max32
    assert fpmath.round_to_f32(Fraction(2) ** 128) == math.inf
    assert fpmath.round_to_f32(-(Fraction(2) ** 128)) == -math.inf
    # halfway between max finite and "2^128": ties toward the even (infinite) side
    boundary = Fraction(2**128) - Fraction(2**103)
    assert fpmath.round_to_f32(boundary) == math.inf
    assert fpmath.round_to_f32(boundary - 1) == max32
    tiny = Fraction(5e-324)
    assert fpmath.round_to_f32(tiny) == 0.0
