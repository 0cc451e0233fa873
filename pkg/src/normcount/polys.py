"""Sparse multivariate polynomials with exact integer (or Fraction)
coefficients.

Just enough ring arithmetic to expand norm forms symbolically and to
evaluate them exactly on int vectors or fast on numpy batches.  Keys are
exponent tuples of fixed length nvars.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np


class SparsePoly:
    __slots__ = ("nvars", "coeffs")

    def __init__(self, nvars: int, coeffs: dict | None = None):
        self.nvars = nvars
        self.coeffs = {}
        if coeffs:
            for e, c in coeffs.items():
                if c:
                    self.coeffs[tuple(e)] = c

    @classmethod
    def const(cls, nvars, c):
        p = cls(nvars)
        if c:
            p.coeffs[(0,) * nvars] = c
        return p

    @classmethod
    def var(cls, nvars, i, c=1):
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): c})

    def copy(self):
        return SparsePoly(self.nvars, dict(self.coeffs))

    def __bool__(self):
        return bool(self.coeffs)

    def __eq__(self, other):
        return isinstance(other, SparsePoly) and self.coeffs == other.coeffs

    def __add__(self, other):
        if not isinstance(other, SparsePoly):
            other = SparsePoly.const(self.nvars, other)
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            s = out.get(e, 0) + c
            if s:
                out[e] = s
            else:
                out.pop(e, None)
        return SparsePoly(self.nvars, out)

    def __neg__(self):
        return SparsePoly(self.nvars, {e: -c for e, c in self.coeffs.items()})

    def __sub__(self, other):
        if not isinstance(other, SparsePoly):
            other = SparsePoly.const(self.nvars, other)
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, SparsePoly):
            if other == 0:
                return SparsePoly(self.nvars)
            return SparsePoly(self.nvars,
                              {e: c * other for e, c in self.coeffs.items()})
        out = {}
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                s = out.get(e, 0) + c1 * c2
                if s:
                    out[e] = s
                else:
                    out.pop(e, None)
        return SparsePoly(self.nvars, out)

    __rmul__ = __mul__

    def degree(self):
        return max((sum(e) for e in self.coeffs), default=0)

    def is_homogeneous(self, d=None):
        degs = {sum(e) for e in self.coeffs}
        if not degs:
            return True
        if d is None:
            return len(degs) == 1
        return degs == {d}

    def map_coeffs(self, f):
        return SparsePoly(self.nvars, {e: f(c) for e, c in self.coeffs.items()})

    def eval_int(self, x):
        """Exact evaluation at a vector of ints / Fractions."""
        tot = 0
        for e, c in self.coeffs.items():
            t = c
            for xi, ei in zip(x, e):
                if ei:
                    t *= xi ** ei
            tot += t
        return tot

    def grad(self):
        outs = []
        for i in range(self.nvars):
            d = {}
            for e, c in self.coeffs.items():
                if e[i]:
                    e2 = list(e)
                    e2[i] -= 1
                    d[tuple(e2)] = d.get(tuple(e2), 0) + c * e[i]
            outs.append(SparsePoly(self.nvars, d))
        return outs

    # --- numpy batch evaluation -------------------------------------

    def compiled(self):
        """(coeff array, exponent matrix) for batch evaluation."""
        if not self.coeffs:
            return np.zeros(0, dtype=np.int64), np.zeros((0, self.nvars), np.int64)
        es = np.array(list(self.coeffs.keys()), dtype=np.int64)
        cs = np.array([int(self.coeffs[tuple(e)]) for e in es], dtype=np.int64)
        return cs, es

    def eval_batch(self, pts, dtype=np.int64):
        """Evaluate on an (m, nvars) array.  int64 throughout; caller is
        responsible for ranges that avoid overflow."""
        pts = np.asarray(pts)
        cs, es = self.compiled()
        out = np.zeros(pts.shape[0], dtype=dtype)
        for c, e in zip(cs, es):
            term = np.full(pts.shape[0], c, dtype=dtype)
            for j in range(self.nvars):
                for _ in range(int(e[j])):
                    term = term * pts[:, j].astype(dtype)
            out += term
        return out

    def eval_batch_mod(self, pts, q):
        """Evaluate mod q on an (m, nvars) int array, values in [0, q)."""
        pts = np.asarray(pts) % q
        cs, es = self.compiled()
        out = np.zeros(pts.shape[0], dtype=np.int64)
        for c, e in zip(cs, es):
            term = np.full(pts.shape[0], int(c) % q, dtype=np.int64)
            for j in range(self.nvars):
                for _ in range(int(e[j])):
                    term = (term * pts[:, j]) % q
            out = (out + term) % q
        return out

    def __repr__(self):
        terms = []
        for e, c in sorted(self.coeffs.items()):
            mon = "*".join(f"x{i}^{k}" if k > 1 else f"x{i}"
                           for i, k in enumerate(e) if k)
            terms.append(f"{c}" + (f"*{mon}" if mon else ""))
        return " + ".join(terms) if terms else "0"


def det_poly(mat):
    """Determinant of a matrix of SparsePoly entries, by cofactor
    expansion.  Fine for the small n used here."""
    m = len(mat)
    if m == 1:
        return mat[0][0]
    nv = mat[0][0].nvars
    out = SparsePoly(nv)
    for j in range(m):
        minor = [[mat[r][c] for c in range(m) if c != j] for r in range(1, m)]
        term = mat[0][j] * det_poly(minor)
        out = out + term if j % 2 == 0 else out - term
    return out


def bareiss_det(mat):
    """Exact integer/Fraction determinant of a numeric matrix."""
    m = [list(map(Fraction, row)) for row in mat]
    n = len(m)
    sign = 1
    for k in range(n):
        if m[k][k] == 0:
            for r in range(k + 1, n):
                if m[r][k] != 0:
                    m[k], m[r] = m[r], m[k]
                    sign = -sign
                    break
            else:
                return Fraction(0)
        for r in range(k + 1, n):
            f = m[r][k] / m[k][k]
            for c in range(k, n):
                m[r][c] -= f * m[k][c]
    det = Fraction(sign)
    for k in range(n):
        det *= m[k][k]
    return det
