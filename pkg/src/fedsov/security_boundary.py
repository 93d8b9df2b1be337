"""Exact near-collision combinatorics and the watermark-error security boundary.

All probabilities are handled as ``log2`` values or as exact integer
comparisons against ``2**n``; nothing at the ``2**-128`` scale goes through
floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import mpmath

MAX_N = 1 << 16


def log2_int(a: int) -> float:
    """``log2`` of a positive big integer without overflowing a float."""
    if a <= 0:
        raise ValueError("log2 of a non-positive integer")
    shift = max(a.bit_length() - 64, 0)
    return shift + math.log2(a >> shift)


def _binomial_prefix(n: int):
    """Yield ``(i, sum_{j<=i} C(n, j))`` for ``i = 0..n``."""
    c = total = 1
    yield 0, total
    for i in range(1, n + 1):
        c = c * (n - i + 1) // i
        total += c
        yield i, total


def cumulative_ball_size(n: int, radius: int) -> int:
    """Number of ``n``-bit strings within Hamming distance ``radius`` of a fixed one."""
    if not 0 <= n <= MAX_N:
        raise ValueError(f"n must lie in [0, {MAX_N}]")
    if not 0 <= radius <= n:
        raise ValueError(f"radius {radius} outside [0, {n}]")
    for i, total in _binomial_prefix(n):
        if i == radius:
            return total
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class AdvantageBound:
    n: int
    err: int
    k: int
    q: int
    bound_log2: float

    @property
    def probability(self) -> float:
        return 2.0**self.bound_log2


def attacker_bound(n: int, err: int, k: int = 1, q: int = 1) -> AdvantageBound:
    """Union bound on forging a watermark within ``err`` errors of one of ``q`` stolen ones.

    The attacker must land within ``2*err`` of a stolen watermark in ``k``
    hash evaluations. Capped at probability 1.
    """
    if n < 1 or err < 0 or k < 1 or q < 1:
        raise ValueError("need n >= 1, err >= 0, k >= 1, q >= 1")
    radius = min(2 * err, n)
    a = cumulative_ball_size(n, radius)
    raw = math.log2(k) + math.log2(q) - n + log2_int(a)
    return AdvantageBound(n, err, k, q, min(0.0, raw))


@dataclass(frozen=True)
class BoundaryResult:
    n: int
    target_pa_log2: float
    err_n: int
    r_n: Fraction
    bracket_low_log2: float
    bracket_high_log2: float
    # first radius whose ball probability reaches the target; 2*err_n or 2*err_n + 1
    critical_radius: int

    @property
    def r_float(self) -> float:
        return float(self.r_n)

    def as_row(self) -> dict:
        return {
            "n": self.n,
            "target_pa_log2": self.target_pa_log2,
            "err_n": self.err_n,
            "r_n": float(self.r_n),
            "bracket_low_log2": self.bracket_low_log2,
            "bracket_high_log2": self.bracket_high_log2,
        }


class InfeasibleTarget(ValueError):
    pass


def _reaches(total: int, n: int, target_pa_log2: float) -> bool:
    """Exact test of ``total / 2**n >= 2**target_pa_log2``."""
    t = Fraction(target_pa_log2)
    exponent = n + t
    if exponent.denominator == 1:
        e = int(exponent)
        return total >= (1 << e) if e >= 0 else True
    # irrational threshold 2**exponent: compare logs with certified precision
    prec = 128
    while prec <= 1 << 14:
        with mpmath.workprec(prec):
            diff = mpmath.log(mpmath.mpf(total), 2) - mpmath.mpf(exponent.numerator) / exponent.denominator
            if abs(diff) > mpmath.mpf(2) ** (-(prec // 2)):
                return diff > 0
        prec *= 2
    raise ArithmeticError("could not separate ball size from the target threshold")


def solve_boundary(n: int, target_pa_log2: float = -128.0) -> BoundaryResult:
    """Largest tolerated watermark error count for an attacker success target ``2**target_pa_log2``.

    Finds the first radius ``R`` whose ball probability ``S(R) / 2**n`` reaches
    the target and sets ``err_n = R // 2``, so that
    ``S(2*err_n - 1) < P_A * 2**n <= S(R)`` with ``R`` in ``{2*err_n, 2*err_n + 1}``.
    """
    if not 1 <= n <= MAX_N:
        raise ValueError(f"n must lie in [1, {MAX_N}]")
    if target_pa_log2 > 0:
        raise ValueError("target probability cannot exceed 1")
    if target_pa_log2 <= -n:
        raise InfeasibleTarget(f"P_A = 2^{target_pa_log2} is below the 2^-{n} granularity")
    for radius, total in _binomial_prefix(n):
        if _reaches(total, n, target_pa_log2):
            break
    err_n = radius // 2
    low_total = cumulative_ball_size(n, 2 * err_n - 1) if err_n > 0 else 0
    low_log2 = log2_int(low_total) - n if low_total else -math.inf
    return BoundaryResult(
        n=n,
        target_pa_log2=float(target_pa_log2),
        err_n=err_n,
        r_n=1 - Fraction(err_n, n),
        bracket_low_log2=low_log2,
        bracket_high_log2=log2_int(total) - n,
        critical_radius=radius,
    )


def convergence_curve(err_fraction: float, n_values: Iterable[int]) -> list[tuple[int, float]]:
    """``(n, 1 - log2(a)/n)`` with ``a`` the ball size at radius ``2*floor(err_fraction*n)``."""
    if not 0 < err_fraction < 0.5:
        raise ValueError("err_fraction must lie in (0, 0.5)")
    out = []
    for n in n_values:
        radius = min(2 * math.floor(err_fraction * n), n)
        out.append((n, 1.0 - log2_int(cumulative_ball_size(n, radius)) / n))
    return out
