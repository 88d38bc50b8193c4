"""Coefficients of the k-step BDF method and of its explicit extrapolation."""
from __future__ import annotations

from fractions import Fraction
from math import comb

MAX_ORDER = 5


def _check_order(k: int) -> None:
    if int(k) != k or not 1 <= k <= MAX_ORDER:
        raise ValueError(f"BDF order must be an integer in 1..{MAX_ORDER}, got {k!r}")


def bdf_coefficients_exact(k: int) -> list[Fraction]:
    """delta_0..delta_k of ``delta(z) = sum_{l=1}^k (1 - z)^l / l`` as fractions."""
    _check_order(k)
    return [
        sum((Fraction((-1) ** j * comb(l, j), l) for l in range(max(j, 1), k + 1)), Fraction(0))
        for j in range(k + 1)
    ]


def extrapolation_coefficients_exact(k: int) -> list[Fraction]:
    """gamma_0..gamma_{k-1} of ``gamma(z) = (1 - (1 - z)^k) / z`` as fractions."""
    _check_order(k)
    return [Fraction((-1) ** i * comb(k, i + 1)) for i in range(k)]


def bdf_coefficients(k: int) -> tuple[float, ...]:
    return tuple(float(c) for c in bdf_coefficients_exact(k))


def extrapolation_coefficients(k: int) -> tuple[float, ...]:
    return tuple(float(c) for c in extrapolation_coefficients_exact(k))
