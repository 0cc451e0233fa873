"""Small exact number-theory helpers used across the package."""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache


def factorize(n: int) -> dict[int, int]:
    n = abs(int(n))
    out: dict[int, int] = {}
    d = 2
    while d * d <= n:
        while n % d == 0:
            out[d] = out.get(d, 0) + 1
            n //= d
        d += 1 if d == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def mobius(n: int) -> int:
    if n == 1:
        return 1
    f = factorize(n)
    if any(e > 1 for e in f.values()):
        return 0
    return -1 if len(f) % 2 else 1


def divisors(n: int) -> list[int]:
    ds = [1]
    for p, e in factorize(n).items():
        ds = [d * p**k for d in ds for k in range(e + 1)]
    return sorted(ds)


def primes_upto(n: int) -> list[int]:
    if n < 2:
        return []
    sieve = bytearray([1]) * (n + 1)
    sieve[0:2] = b"\0\0"
    for p in range(2, int(n**0.5) + 1):
        if sieve[p]:
            sieve[p * p:: p] = b"\0" * len(sieve[p * p:: p])
    return [i for i in range(n + 1) if sieve[i]]


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31):
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def squarefree(n: int) -> bool:
    return all(e == 1 for e in factorize(n).values())


@lru_cache(maxsize=None)
def cyclotomic_poly(q: int) -> tuple[int, ...]:
    """Coefficients (low degree first) of the q-th cyclotomic polynomial,
    by dividing X^q - 1 by the cyclotomics of the proper divisors."""
    num = [0] * q + [1]
    num[0] = -1
    for d in divisors(q)[:-1]:
        phi = cyclotomic_poly(d)
        num = _polydiv_exact(num, list(phi))
    return tuple(num)


def _polydiv_exact(num: list[int], den: list[int]) -> list[int]:
    num = list(num)
    out = [0] * (len(num) - len(den) + 1)
    for k in range(len(out) - 1, -1, -1):
        c = num[k + len(den) - 1]
        assert c % den[-1] == 0
        c //= den[-1]
        out[k] = c
        for j, dj in enumerate(den):
            num[k + j] -= c * dj
    assert all(v == 0 for v in num), "non-exact polynomial division"
    return out


def cyclo_sum_int(counts: dict[int, int], q: int) -> int:
    """Exact value of sum_b counts[b] * zeta_q^b, which must be a rational
    integer.  Reduces mod the q-th cyclotomic polynomial."""
    poly = [0] * q
    for b, c in counts.items():
        poly[b % q] += c
    phi = list(cyclotomic_poly(q))
    deg = len(phi) - 1
    # monic reduction of poly mod phi
    for k in range(q - 1, deg - 1, -1):
        c = poly[k]
        if c:
            poly[k] = 0
            for j in range(deg):
                poly[k - deg + j] -= c * phi[j]
    assert all(v == 0 for v in poly[1:deg]), "sum is not a rational integer"
    return poly[0]


def crt_pair(r1: int, m1: int, r2: int, m2: int) -> tuple[int, int]:
    """Solve x = r1 (m1), x = r2 (m2); moduli need not be coprime but the
    system must be consistent."""
    g = math.gcd(m1, m2)
    if (r2 - r1) % g:
        raise ValueError("inconsistent congruences")
    lcm = m1 // g * m2
    t = ((r2 - r1) // g * pow(m1 // g, -1, m2 // g)) % (m2 // g)
    return (r1 + m1 * t) % lcm, lcm


def hilbert_symbol(a: Fraction | int, b: Fraction | int, p) -> int:
    """Hilbert symbol (a,b)_p over Q_p (p a prime or the string 'inf').

    Returns +1 if z^2 = a x^2 + b y^2 has a nontrivial solution over the
    completion, else -1.
    """
    a, b = Fraction(a), Fraction(b)
    if a == 0 or b == 0:
        raise ValueError("hilbert symbol needs nonzero arguments")
    if p == "inf":
        return -1 if (a < 0 and b < 0) else 1
    p = int(p)

    def split(x: Fraction):
        v = 0
        num, den = x.numerator, x.denominator
        while num % p == 0:
            num //= p
            v += 1
        while den % p == 0:
            den //= p
            v -= 1
        return v, Fraction(num, den)

    al, u = split(a)
    be, w = split(b)
    if p != 2:
        s = 1
        if al % 2 and be % 2:
            # tame formula: (-1)^{(p-1)/2 * al*be} * legendre factors
            if (p - 1) // 2 % 2 == 1:
                s = -s
        if be % 2:
            s *= _legendre_frac(u, p)
        if al % 2:
            s *= _legendre_frac(w, p)
        return s
    # p = 2
    u2 = u.numerator * pow(u.denominator, -1, 8) % 8
    w2 = w.numerator * pow(w.denominator, -1, 8) % 8
    eps = ((u2 - 1) // 2) * ((w2 - 1) // 2)
    s = -1 if eps % 2 else 1
    if be % 2 and (u2 * u2 - 1) // 8 % 2:
        s = -s
    if al % 2 and (w2 * w2 - 1) // 8 % 2:
        s = -s
    return s


def _legendre_frac(u: Fraction, p: int) -> int:
    r = u.numerator * pow(u.denominator, -1, p) % p
    ls = pow(r, (p - 1) // 2, p)
    return 1 if ls == 1 else -1
