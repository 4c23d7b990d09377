"""Student's t distribution via the regularized incomplete beta function."""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 500


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for I_x(a, b)
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b) for a, b > 0."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0
    return min(1.0, max(0.0, betainc(0.5 * df, 0.5, df / (df + t * t))))


class TTest(NamedTuple):
    t: float
    df: int
    p_value: float
    degenerate: bool


def mean(xs: Sequence[float]) -> float:
    """Correctly rounded sum over n; exact for constant samples."""
    if min(xs) == max(xs):
        return float(xs[0])
    return math.fsum(xs) / len(xs)


def student_ttest(a: Sequence[float], b: Sequence[float]) -> TTest:
    """Two-sided, equal-variance two-sample t-test.

    With zero pooled variance the test is degenerate: p is 1 when the means
    agree and 0 otherwise.
    """
    n1, n2 = len(a), len(b)
    df = n1 + n2 - 2
    if n1 < 1 or n2 < 1 or df < 1:
        raise ValueError("need at least 3 observations across two non-empty groups")
    m1, m2 = mean(a), mean(b)
    ss = math.fsum((x - m1) ** 2 for x in a) + math.fsum((x - m2) ** 2 for x in b)
    pooled = ss / df
    if pooled == 0.0:
        if m1 == m2:
            return TTest(0.0, df, 1.0, True)
        return TTest(math.copysign(math.inf, m1 - m2), df, 0.0, True)
    t = (m1 - m2) / math.sqrt(pooled * (1.0 / n1 + 1.0 / n2))
    return TTest(t, df, t_sf_two_sided(t, df), False)
