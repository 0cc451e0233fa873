"""Exact arithmetic in the quadratic ring Z[tau] for L = Q(sqrt(a)).

tau convention: tau = sqrt(a) when a = 2,3 mod 4, tau = (1+sqrt(a))/2 when
a = 1 mod 4, so that {1, tau} is always a Z-basis of the ring of integers.
Includes the antisymmetric skew-trace pairing, the tau-coordinate twisted
exponential e_q, and its Ramanujan-type sum over residues with no rational
common divisor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .arith import cyclo_sum_int, divisors, mobius, squarefree
from .errors import ValidationError

SQRT_A = "SQRT_A"
HALF = "HALF"


class QuadElem(NamedTuple):
    """c1 + c2*tau with exact coordinates (int or Fraction)."""

    c1: object
    c2: object


@dataclass(frozen=True)
class FieldParams:
    a: int
    tau_kind: str
    tr_tau: int
    tr_tau2: int
    dl_sq: int

    @classmethod
    def for_a(cls, a: int) -> "FieldParams":
        a = int(a)
        if a in (0, 1) or not squarefree(a):
            raise ValidationError(f"a={a} must be squarefree and != 0, 1")
        if a % 4 == 1:
            # tau^2 = tau + (a-1)/4
            return cls(a, HALF, 1, (a + 1) // 2, a)
        return cls(a, SQRT_A, 0, 2 * a, 4 * a)

    def __post_init__(self):
        if 2 * self.tr_tau2 - self.tr_tau**2 != self.dl_sq or self.dl_sq == 0:
            raise ValidationError("inconsistent trace data for tau")

    @property
    def norm_tau(self) -> int:
        # N(tau) = tau * tau^sigma
        return -self.a if self.tau_kind == SQRT_A else -(self.a - 1) // 4

    @property
    def tau_sq(self) -> tuple[int, int]:
        """tau^2 = t0 + t1*tau."""
        if self.tau_kind == SQRT_A:
            return (self.a, 0)
        return ((self.a - 1) // 4, 1)

    @property
    def kappa(self) -> int:
        return 1 if self.tr_tau % 2 == 0 else 0

    def d_l(self) -> QuadElem:
        """D = tau - tau^sigma = 2*tau - tr(tau); D^2 = dl_sq in Q."""
        return QuadElem(-self.tr_tau, 2)


def mul(x: QuadElem, y: QuadElem, params: FieldParams) -> QuadElem:
    t0, t1 = params.tau_sq
    c2 = x.c2 * y.c2
    return QuadElem(x.c1 * y.c1 + c2 * t0, x.c1 * y.c2 + x.c2 * y.c1 + c2 * t1)


def conj(x: QuadElem, params: FieldParams) -> QuadElem:
    return QuadElem(x.c1 + x.c2 * params.tr_tau, -x.c2)


def norm(x: QuadElem, params: FieldParams):
    return x.c1**2 + params.tr_tau * x.c1 * x.c2 + params.norm_tau * x.c2**2


def trace(x: QuadElem, params: FieldParams):
    return 2 * x.c1 + params.tr_tau * x.c2


def conj_norm_trace(x: QuadElem, params: FieldParams):
    """(x^sigma, N(x), tr(x)), all exact."""
    return conj(x, params), norm(x, params), trace(x, params)


def inv(x: QuadElem, params: FieldParams) -> QuadElem:
    n = Fraction(norm(x, params))
    if n == 0:
        raise ZeroDivisionError("inverting a zero-norm element")
    xc = conj(x, params)
    return QuadElem(Fraction(xc.c1) / n, Fraction(xc.c2) / n)


def skew_trace(x: QuadElem, y: QuadElem, params: FieldParams):
    """tr(x * y^sigma / D) with D = tau - tau^sigma.

    Expanding in the {1,tau} basis collapses to x2*y1 - x1*y2 for either
    tau convention; the pairing is integer valued and antisymmetric.
    """
    return x.c2 * y.c1 - x.c1 * y.c2


def eL_q(x, q: int) -> Fraction:
    """Exponent (in [0,1)) of the twisted exponential at x: the
    tau-coordinate of x divided by q, mod 1.  Callers apply e(.) when a
    complex value is wanted."""
    if q < 1:
        raise ValidationError("q must be >= 1")
    c2 = x[1] if not isinstance(x, QuadElem) else x.c2
    fr = Fraction(c2) / q
    return fr - math.floor(fr)


def star_residues(q: int) -> list[QuadElem]:
    """Residues y mod q with no integer d > 1 dividing q, y.c1 and y.c2."""
    if q < 1:
        raise ValidationError("q must be >= 1")
    if q == 1:
        return [QuadElem(0, 0)]
    out = []
    for c1 in range(q):
        for c2 in range(q):
            if math.gcd(math.gcd(c1, c2), q) == 1:
                out.append(QuadElem(c1, c2))
    return out


def ramanujan_L(q: int, y: QuadElem, params: FieldParams) -> int:
    """Sum of e_q over star residues x of the tau-coordinate of x*y,
    computed both directly (exact cyclotomic reduction) and by the closed
    form sum_{d | gcd(q, y)} d^2 mu(q/d); the routes must agree."""
    if q < 1:
        raise ValidationError("q must be >= 1")
    g = math.gcd(math.gcd(int(y.c1), int(y.c2)), q)
    closed = sum(d * d * mobius(q // d) for d in divisors(q) if g % d == 0)
    if q <= 60:
        counts: dict[int, int] = {}
        for x in star_residues(q):
            b = mul(x, y, params).c2 % q
            counts[b] = counts.get(b, 0) + 1
        direct = cyclo_sum_int(counts, q)
        if direct != closed:
            raise AssertionError(
                f"ramanujan sum mismatch at q={q}, y={y}: {direct} != {closed}")
    return closed


def exp_orthogonality_buckets(q: int, y: QuadElem, params: FieldParams) -> int:
    """Exact value of sum over all x mod q of e_q((x*y).c2), via exponent
    bucketing; equals q^2 if q | y and 0 otherwise."""
    counts: dict[int, int] = {}
    for c1 in range(q):
        for c2 in range(q):
            b = mul(QuadElem(c1, c2), y, params).c2 % q
            counts[b] = counts.get(b, 0) + 1
    return cyclo_sum_int(counts, q)
