"""Field contexts: a degree-n field K given by an integral multiplication
table, an embedded quadratic subfield L = Q(sqrt(a)), and the norm forms.

The full norm form N_{K/Q} is the determinant of the regular
representation; the relative norm N_{K/L} = N1 + N2*tau is the
determinant of multiplication acting on K as an L-module.  All coefficient
extraction is exact; the coefficients land in Z for an integral basis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DeltaZero, NotABasis, TauNotEmbedded, ValidationError
from .polys import SparsePoly, det_poly
from .quad_ring import FieldParams, QuadElem


@dataclass(frozen=True)
class FormPoly:
    degree: int
    coeffs: dict
    nvars: int

    @classmethod
    def from_sparse(cls, p: SparsePoly) -> "FormPoly":
        d = p.degree()
        if not p.is_homogeneous(d):
            raise ValidationError("norm form is not homogeneous")
        cc = {}
        for e, c in p.coeffs.items():
            c = Fraction(c)
            if c.denominator != 1:
                raise ValidationError("norm form has non-integer coefficients")
            cc[e] = int(c)
        return cls(d, cc, p.nvars)

    def sparse(self) -> SparsePoly:
        return SparsePoly(self.nvars, self.coeffs)

    def eval_int(self, x):
        return self.sparse().eval_int(x)

    def eval_batch(self, pts, dtype=np.int64):
        return self.sparse().eval_batch(pts, dtype=dtype)

    def eval_batch_mod(self, pts, q):
        return self.sparse().eval_batch_mod(pts, q)

    def grad(self):
        return [FormPoly.from_sparse(g) for g in self.sparse().grad()]


class FieldCtx:
    """Validated field data plus cached norm forms.

    Attributes: params (FieldParams), n, mul_tensor (nested int tuples),
    tau_coords, delta (QuadElem of Fractions), norm_form, n1_form, n2_form.
    """

    def __init__(self, params, n, mul_tensor, tau_coords, delta,
                 integral_basis_claimed=True):
        self.params = params
        self.n = n
        self.mul_tensor = mul_tensor
        self.tau_coords = tuple(int(t) for t in tau_coords)
        self.delta = delta
        self.integral_basis_claimed = integral_basis_claimed
        self.nonmaximal_warning = not integral_basis_claimed
        self._derive()

    # --- coordinate algebra ------------------------------------------

    def star(self, x, y):
        """Multiplication of coordinate vectors through the tensor."""
        n, T = self.n, self.mul_tensor
        out = [0] * n
        for i in range(n):
            if not x[i]:
                continue
            for j in range(n):
                if not y[j]:
                    continue
                c = x[i] * y[j]
                row = T[i][j]
                for k in range(n):
                    if row[k]:
                        out[k] += c * row[k]
        return out

    def repr_matrix(self, x):
        """Matrix of multiplication by x in the basis: row j holds the
        coordinates of x * omega_j."""
        n, T = self.n, self.mul_tensor
        M = [[0] * n for _ in range(n)]
        for j in range(n):
            for i in range(n):
                if x[i]:
                    for k in range(n):
                        if T[i][j][k]:
                            M[j][k] += x[i] * T[i][j][k]
        return M

    def elem_inv(self, x):
        """Coordinates of x^{-1}, exact Fractions."""
        n = self.n
        M = [[Fraction(v) for v in row] for row in self.repr_matrix(x)]
        # solve y * M = e1, i.e. M^T y = e1
        A = [[M[j][k] for j in range(n)] for k in range(n)]
        b = [Fraction(1)] + [Fraction(0)] * (n - 1)
        return _solve_exact(A, b)

    # --- construction -------------------------------------------------

    def _derive(self):
        n, T = self.n, self.mul_tensor
        if n < 4 or n % 2:
            raise ValidationError("degree n must be even and >= 4")
        if len(T) != n or any(len(r) != n or any(len(c) != n for c in r)
                              for r in T):
            raise NotABasis("mul_tensor must be n x n x n")
        # omega_1 = 1 acts as identity on both sides
        for j in range(n):
            for k in range(n):
                want = 1 if j == k else 0
                if T[0][j][k] != want or T[j][0][k] != want:
                    raise NotABasis("omega_1 is not the identity")
        for i in range(n):
            for j in range(i):
                if T[i][j] != T[j][i]:
                    raise NotABasis("multiplication table is not commutative")
        for i in range(1, n):
            for j in range(1, n):
                for k in range(1, n):
                    ei = [0] * n
                    ei[i] = 1
                    ej = [0] * n
                    ej[j] = 1
                    ek = [0] * n
                    ek[k] = 1
                    lhs = self.star(self.star(ei, ej), ek)
                    rhs = self.star(ei, self.star(ej, ek))
                    if lhs != rhs:
                        raise NotABasis("multiplication table is not associative")
        # tau satisfies its minimal relation
        t0, t1 = self.params.tau_sq
        tt = self.star(self.tau_coords, self.tau_coords)
        want = [t0 + t1 * self.tau_coords[0]] + \
               [t1 * self.tau_coords[k] for k in range(1, n)]
        if tt != want:
            raise TauNotEmbedded(
                f"tau_coords do not satisfy tau^2 = {t0} + {t1}*tau")
        if self.delta.c1 == 0 and self.delta.c2 == 0:
            raise DeltaZero("delta must be nonzero")

        self.norm_form = self._norm_kq_poly()
        self.n1_form, self.n2_form = self._rel_norm_polys()
        self._check_unit_values()
        self.norm_grad = self.norm_form.grad()

    def _norm_kq_poly(self) -> FormPoly:
        n, T = self.n, self.mul_tensor
        xs = [SparsePoly.var(n, i) for i in range(n)]
        M = [[SparsePoly(n) for _ in range(n)] for _ in range(n)]
        for j in range(n):
            for i in range(n):
                for k in range(n):
                    if T[i][j][k]:
                        M[j][k] = M[j][k] + xs[i] * T[i][j][k]
        return FormPoly.from_sparse(det_poly(M))

    def _l_basis(self):
        """Greedy L-basis of K from the omega's: vectors b with
        {b, tau*b} a Q-basis of K."""
        n = self.n
        m = n // 2
        basis = []
        span_cols = []

        def rank_with(cols):
            A = [[Fraction(c[r]) for c in cols] for r in range(n)]
            return _rank_exact(A)

        for i in range(n):
            e = [0] * n
            e[i] = 1
            te = self.star(list(self.tau_coords), e)
            if rank_with(span_cols + [e, te]) == len(span_cols) + 2:
                basis.append(e)
                span_cols.extend([e, te])
                if len(basis) == m:
                    break
        if len(basis) != m:
            raise NotABasis("could not extract an L-basis; tau may be "
                            "degenerate in this table")
        return basis

    def _rel_norm_polys(self):
        """Expand N_{K/L} = N1 + N2*tau symbolically."""
        n = self.n
        m = n // 2
        B = self._l_basis()
        TB = [self.star(list(self.tau_coords), b) for b in B]
        # E: columns B_1..B_m, tau*B_1..tau*B_m
        E = [[Fraction(col[r]) for col in (B + TB)] for r in range(n)]
        Einv = _inv_exact(E)
        xs = [SparsePoly.var(n, i) for i in range(n)]
        # entries of the L-matrix of multiplication by x: pairs (c, d)
        # meaning c + d*tau, with SparsePoly c, d
        Lmat = [[None] * m for _ in range(m)]
        for j in range(m):
            # x * B_j as polynomial coordinate vector
            vec = [SparsePoly(n) for _ in range(n)]
            for i in range(n):
                prod = self.star([1 if t == i else 0 for t in range(n)], B[j])
                for k in range(n):
                    if prod[k]:
                        vec[k] = vec[k] + xs[i] * prod[k]
            # coords in E-basis: Einv @ vec
            for k in range(m):
                c = SparsePoly(n)
                d = SparsePoly(n)
                for r in range(n):
                    if Einv[k][r]:
                        c = c + vec[r].map_coeffs(lambda v, f=Einv[k][r]: v * f)
                    if Einv[k + m][r]:
                        d = d + vec[r].map_coeffs(
                            lambda v, f=Einv[k + m][r]: v * f)
                Lmat[j][k] = (c, d)
        c, d = _det_pair(Lmat, self.params)
        return FormPoly.from_sparse(c), FormPoly.from_sparse(d)

    def _check_unit_values(self):
        unit = [1] + [0] * (self.n - 1)
        if self.norm_form.eval_int(unit) != 1:
            raise NotABasis("N_{K/Q}(1,0,...,0) != 1")
        if (self.n1_form.eval_int(unit), self.n2_form.eval_int(unit)) != (1, 0):
            raise NotABasis("N_{K/L}(1,0,...,0) != 1")
        # transitivity spot check on a deterministic vector
        v = [(3 * i + 1) % 7 - 3 for i in range(self.n)]
        n1, n2 = self.n1_form.eval_int(v), self.n2_form.eval_int(v)
        p = self.params
        if n1 * n1 + p.tr_tau * n1 * n2 + p.norm_tau * n2 * n2 != \
                self.norm_form.eval_int(v):
            raise NotABasis("norm transitivity fails; table inconsistent")

    # --- public operations ---------------------------------------------

    def norm_kq(self, x):
        """(N_{K/Q}(x), grad N_{K/Q}(x)), exact."""
        return (self.norm_form.eval_int(x),
                tuple(g.eval_int(x) for g in self.norm_grad))

    def relnorm_kl(self, x) -> QuadElem:
        return QuadElem(self.n1_form.eval_int(x), self.n2_form.eval_int(x))

    def form_polynomials(self):
        return self.n1_form, self.n2_form, self.norm_form

    def delta_norm_polys(self):
        """Forms of delta * N_{K/L} as (P1, P2) with Fraction coefficients
        plus the common denominator den, so that den*P1, den*P2 are
        integral."""
        d1, d2 = Fraction(self.delta.c1), Fraction(self.delta.c2)
        t0, t1 = self.params.tau_sq
        n1 = self.n1_form.sparse().map_coeffs(Fraction)
        n2 = self.n2_form.sparse().map_coeffs(Fraction)
        p1 = n1.map_coeffs(lambda c: c * d1) + n2.map_coeffs(lambda c: c * d2 * t0)
        p2 = n2.map_coeffs(lambda c: c * d1) + n1.map_coeffs(lambda c: c * d2) \
            + n2.map_coeffs(lambda c: c * d2 * t1)
        den = 1
        for poly in (p1, p2):
            for c in poly.coeffs.values():
                den = den * Fraction(c).denominator // \
                    __import__("math").gcd(den, Fraction(c).denominator)
        ip1 = p1.map_coeffs(lambda c: int(c * den))
        ip2 = p2.map_coeffs(lambda c: int(c * den))
        return ip1, ip2, den


# --- exact linear algebra helpers ---------------------------------------

def _rank_exact(A):
    A = [row[:] for row in A]
    rows, cols = len(A), len(A[0]) if A else 0
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if A[i][c] != 0), None)
        if piv is None:
            continue
        A[r], A[piv] = A[piv], A[r]
        for i in range(rows):
            if i != r and A[i][c] != 0:
                f = A[i][c] / A[r][c]
                A[i] = [a - f * b for a, b in zip(A[i], A[r])]
        r += 1
        if r == rows:
            break
    return r


def _solve_exact(A, b):
    n = len(A)
    M = [row[:] + [b[i]] for i, row in enumerate(A)]
    for c in range(n):
        piv = next((i for i in range(c, n) if M[i][c] != 0), None)
        if piv is None:
            raise ValidationError("singular system in exact solve")
        M[c], M[piv] = M[piv], M[c]
        inv = 1 / M[c][c]
        M[c] = [v * inv for v in M[c]]
        for i in range(n):
            if i != c and M[i][c] != 0:
                f = M[i][c]
                M[i] = [v - f * w for v, w in zip(M[i], M[c])]
    return [M[i][n] for i in range(n)]


def _inv_exact(A):
    n = len(A)
    cols = []
    for j in range(n):
        e = [Fraction(1) if i == j else Fraction(0) for i in range(n)]
        cols.append(_solve_exact(A, e))
    return [[cols[j][i] for j in range(n)] for i in range(n)]  # inv rows


def _det_pair(Lmat, params: FieldParams):
    """Determinant of a matrix with entries c + d*tau, as a (c, d) pair of
    SparsePolys."""
    t0, t1 = params.tau_sq

    def pmul(p, q):
        (c1, d1), (c2, d2) = p, q
        cd = d1 * d2
        return (c1 * c2 + cd * t0, c1 * d2 + d1 * c2 + cd * t1)

    def padd(p, q):
        return (p[0] + q[0], p[1] + q[1])

    def pneg(p):
        return (-p[0], -p[1])

    def det(mat):
        m = len(mat)
        if m == 1:
            return mat[0][0]
        nv = mat[0][0][0].nvars
        acc = (SparsePoly(nv), SparsePoly(nv))
        for j in range(m):
            minor = [[mat[r][c] for c in range(m) if c != j]
                     for r in range(1, m)]
            t = pmul(mat[0][j], det(minor))
            acc = padd(acc, t if j % 2 == 0 else pneg(t))
        return acc

    return det(Lmat)


# --- construction from spec data -----------------------------------------

def build_field(spec: dict) -> FieldCtx:
    """Validate a field description and derive the norm forms.

    Keys: a, n, mul_tensor (n^3 ints, row-major, or nested lists),
    tau_coords (n ints), delta = [num1, den1, num2, den2].
    """
    try:
        a = int(spec["a"])
        n = int(spec["n"])
        raw = spec["mul_tensor"]
        tau_coords = [int(t) for t in spec["tau_coords"]]
        dr = spec["delta"]
    except (KeyError, TypeError, ValueError) as err:
        raise ValidationError(f"malformed field spec: {err}") from err
    params = FieldParams.for_a(a)
    if isinstance(raw[0], (list, tuple)):
        tensor = tuple(tuple(tuple(int(v) for v in row) for row in plane)
                       for plane in raw)
    else:
        flat = [int(v) for v in raw]
        if len(flat) != n**3:
            raise NotABasis("mul_tensor must hold n^3 integers")
        tensor = tuple(tuple(tuple(flat[(i * n + j) * n + k]
                                   for k in range(n))
                             for j in range(n)) for i in range(n))
    if len(dr) != 4:
        raise ValidationError("delta must be [num1, den1, num2, den2]")
    delta = QuadElem(Fraction(int(dr[0]), int(dr[1])),
                     Fraction(int(dr[2]), int(dr[3])))
    return FieldCtx(params, n, tensor, tau_coords, delta,
                    integral_basis_claimed=spec.get("integral_basis", True))


def load_field(source) -> FieldCtx:
    """Load a field spec from a path, a builtin name, or a dict."""
    if isinstance(source, dict):
        return build_field(source)
    s = str(source)
    if s.startswith("builtin:"):
        return build_field(builtin_spec(s.split(":", 1)[1]))
    p = Path(s)
    if p.exists():
        return build_field(json.loads(p.read_text()))
    try:
        data = resources.files("normcount.data").joinpath(s + ".json")
        return build_field(json.loads(data.read_text()))
    except FileNotFoundError:
        raise ValidationError(f"no field spec at {source!r}")


def builtin_spec(name: str) -> dict:
    """Multiplication tables for the shipped fixtures."""
    if name == "zeta8":
        # K = Q(zeta_8), basis 1, z, z^2, z^3 with z^4 = -1; tau = z^2 = i
        n = 4
        tensor = [[[0] * n for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j in range(n):
                e = i + j
                if e < 4:
                    tensor[i][j][e] = 1
                else:
                    tensor[i][j][e - 4] = -1
        return {"a": -1, "n": 4, "mul_tensor": tensor,
                "tau_coords": [0, 0, 1, 0], "delta": [1, 1, 0, 1]}
    if name == "sqrt2_sqrt3":
        # K = Q(sqrt2, sqrt3), basis 1, sqrt2, sqrt3, sqrt6; tau = sqrt6
        b = {  # products of basis elements by index
            (1, 1): [2, 0, 0, 0], (1, 2): [0, 0, 0, 1], (1, 3): [0, 0, 2, 0],
            (2, 2): [3, 0, 0, 0], (2, 3): [0, 3, 0, 0], (3, 3): [6, 0, 0, 0],
        }
        n = 4
        tensor = [[[0] * n for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j in range(n):
                if i == 0 or j == 0:
                    tensor[i][j][max(i, j)] = 1
                else:
                    tensor[i][j] = list(b[(min(i, j), max(i, j))])
        return {"a": 6, "n": 4, "mul_tensor": tensor,
                "tau_coords": [0, 0, 0, 1], "delta": [1, 1, 0, 1]}
    if name == "zeta5":
        # K = Q(zeta_5), basis 1, z, z^2, z^3; tau = (1+sqrt5)/2 = -z^2-z^3
        n = 4
        tensor = [[[0] * n for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j in range(n):
                e = i + j
                if e < 4:
                    tensor[i][j][e] = 1
                elif e == 4:
                    tensor[i][j] = [-1, -1, -1, -1]
                elif e == 5:
                    tensor[i][j][0] = 1
                else:
                    tensor[i][j][1] = 1
        return {"a": 5, "n": 4, "mul_tensor": tensor,
                "tau_coords": [0, 0, -1, -1], "delta": [1, 1, 0, 1]}
    raise ValidationError(f"unknown builtin field {name!r}")
