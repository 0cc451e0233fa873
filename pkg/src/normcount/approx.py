"""Local approximation of arithmetic weights by density times smooth
weight, over Z and over the quadratic ring.

Given class densities rho(a,q) for q <= Q and a smooth majorant omega,
the approximant resamples the weight through truncated exponential sums;
its class sums then track the true class sums up to W*Q^3 + E over Z and
W*Q^4 + E over the ring.  The module provides the generic construction,
exact synthetic instances for sharp cap tests, the production family
attached to a box weight, L^2 reports, and the dispersion diagnostic
(class-restricted square sums of the balanced remainder).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .arith import mobius, primes_upto
from .densities import MData, _delta_pair_polys, _pair_hist_scaled
from .errors import EmptyBox, ValidationError
from .fields import FieldCtx
from .quad_ring import QuadElem, mul as qmul
from .weights import WeightFn, WeightTable, pushforward_table


def _e(x: float) -> complex:
    return cmath.exp(2j * math.pi * x)


# --------------------------------------------------------------------------
# sequences over Z
# --------------------------------------------------------------------------


@dataclass
class SchemeZ:
    """A sequence k(1..N) with class densities rho(a,q), a bounded weight
    omega(n), a cutoff Q, and declared bounds E, W."""

    N: int
    k: np.ndarray
    rho: dict                  # (a, q) -> Fraction, for q <= Q
    omega: np.ndarray
    Q: int
    E: Fraction
    W: Fraction

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=np.complex128)
        self.omega = np.asarray(self.omega, dtype=np.float64)
        if len(self.k) != self.N or len(self.omega) != self.N:
            raise ValidationError("sequence length mismatch")
        if self.rho.get((0, 1)) != 1:
            raise ValidationError("rho(0,1) must be 1")
        for (r, s) in [(1, 2), (2, 3), (1, self.Q)]:
            if r * s > self.Q:
                continue
            for b in range(r):
                lhs = sum(self.rho.get((a, r * s), Fraction(0))
                          for a in range(r * s) if a % r == b)
                if lhs != self.rho.get((b, r), Fraction(0)):
                    raise ValidationError("rho violates the class-sum "
                                          "compatibility relation")


def khat_Z(scheme: SchemeZ) -> np.ndarray:
    """The approximant: omega(n) times the truncated sum over q <= Q of
    sum*_a e_q(-an) sum_c rho(c,q) e_q(ac).  Depends on the sequence only
    through rho."""
    N, Q = scheme.N, scheme.Q
    out = np.zeros(N, dtype=np.complex128)
    n_mod = np.arange(1, N + 1)
    for q in range(1, Q + 1):
        c_aq = {}
        for a in range(q):
            if math.gcd(a, q) != 1:
                continue
            c_aq[a] = sum(complex(self_rho) * _e(a * c / q)
                          for c in range(q)
                          if (self_rho := scheme.rho.get((c, q),
                                                         Fraction(0))))
        tab = np.zeros(q, dtype=np.complex128)
        for m in range(q):
            tab[m] = sum(_e(-a * m / q) * v for a, v in c_aq.items())
        out += tab[n_mod % q]
    return scheme.omega * out


def class_sums_Z(values: np.ndarray, h: int) -> np.ndarray:
    """sum over n = b mod h of values[n-1], for all b."""
    n = np.arange(1, len(values) + 1)
    out = np.zeros(h, dtype=np.complex128)
    np.add.at(out, n % h, values)
    return out


def defect_Z(scheme: SchemeZ):
    """Measured max |S(b,h) - Shat(b,h)| over h <= Q and classes b, with
    the theoretical cap W*Q^3 + E."""
    kh = khat_Z(scheme)
    rows = []
    worst = 0.0
    for h in range(1, scheme.Q + 1):
        s = class_sums_Z(scheme.k, h)
        sh = class_sums_Z(kh, h)
        d = np.abs(s - sh)
        b = int(np.argmax(d))
        rows.append({"h": h, "class": b, "S": complex(s[b]),
                     "Shat": complex(sh[b]), "defect": float(d[b])})
        worst = max(worst, float(d.max()))
    cap = float(scheme.W * scheme.Q**3 + scheme.E)
    return {"rows": rows, "max_defect": worst, "cap": cap,
            "within_cap": worst <= cap * (1 + 1e-9) + 1e-9}


def synthetic_scheme_Z(m: int, reps: int, rng) -> SchemeZ:
    """Exact-density instance: k(n) = f(n mod m) on N = m*reps terms with
    constant omega; rho is the exact empirical density, so E = 0."""
    N = m * reps
    f = rng.integers(0, 5, size=m).astype(np.float64)
    if f.sum() == 0:
        f[0] = 1.0
    k = f[(np.arange(1, N + 1)) % m]
    total = Fraction(int(k.sum()))
    Q = min(8, m + 1)
    rho = {}
    fr = [Fraction(int(round(v))) for v in k]
    for q in range(1, Q + 1):
        for a in range(q):
            s = sum(fr[i] for i in range(N) if (i + 1) % q == a)
            rho[(a, q)] = s / total
    mean = total / N
    omega = np.full(N, float(mean))
    W = Fraction(0)
    for q in range(1, Q * Q + 1):
        cnt = np.bincount(np.arange(1, N + 1) % q, minlength=q)
        for a in range(q):
            W = max(W, abs(mean * int(cnt[a]) - total / q))
    return SchemeZ(N=N, k=k, rho=rho, omega=omega, Q=Q, E=Fraction(0), W=W)


def large_sieve_check_Z2(N: int, Q: int, params, rng) -> dict:
    """Instance check of the two-dimensional large sieve: for coefficients
    on a square of side 2N, the star-class exponential-sum mass is at most
    (sqrt(2N) + Q)^4 times the coefficient mass."""
    side = 2 * N
    c = rng.standard_normal((side, side)) + 1j * rng.standard_normal(
        (side, side))
    lhs = 0.0
    for q in range(1, Q + 1):
        for t1 in range(q):
            for t2 in range(q):
                if math.gcd(math.gcd(t1, t2), q) != 1:
                    continue
                acc = 0.0j
                for i in range(side):
                    for j in range(side):
                        x = QuadElem(i, j)
                        ph = qmul(x, QuadElem(t1, t2), params).c2 / q
                        acc += c[i, j] * _e(ph)
                lhs += abs(acc) ** 2
    rhs = (math.sqrt(2 * N) + Q) ** 4 * float(np.sum(np.abs(c) ** 2))
    return {"lhs": lhs, "rhs": rhs, "ok": lhs <= rhs}


def vonmangoldt_demo(N: int, A: float) -> dict:
    """Compare class sums of the von Mangoldt weight with its truncated
    major-arc resampling at cutoff Q = (log N)^A."""
    if N > 10**7:
        raise ValidationError("demo capped at N = 1e7")
    lam = np.zeros(N + 1)
    for p in primes_upto(N):
        pk = p
        while pk <= N:
            lam[pk] = math.log(p)
            pk *= p
    Q = max(1, int(math.log(N) ** A))
    # Lambda_Q(n) = sum_{q<=Q} mu(q)/phi(q) sum*_a e_q(an), tabulated mod q
    out = np.zeros(N + 1)
    n_mod = np.arange(N + 1)
    ram_rows = []
    for q in range(1, Q + 1):
        mq = mobius(q)
        if mq == 0:
            continue
        phi = sum(1 for a in range(q) if math.gcd(a, q) == 1)
        tab = np.array([sum(_e(a * m / q) for a in range(q)
                            if math.gcd(a, q) == 1).real for m in range(q)])
        out += (mq / phi) * tab[n_mod % q]
        ram_rows.append((q, mq, phi))
    dev = []
    for h in range(1, Q + 1):
        for b in range(h):
            s1 = float(np.sum(lam[b::h][1 if b == 0 else 0:]))
            idx = np.arange(N + 1) % h == b
            idx[0] = False
            s2 = float(np.sum(out[idx]))
            dev.append(abs(s1 - s2))
    return {"N": N, "Q": Q, "max_class_deviation": max(dev),
            "chebyshev_total": float(lam.sum()),
            "scale": N, "terms": ram_rows}


# --------------------------------------------------------------------------
# synthetic instances over the quadratic ring
# --------------------------------------------------------------------------


@dataclass
class SchemeOL:
    """A finitely supported weight on Z^2 (coordinates in the 1,tau basis)
    with exact class densities; used for sharp cap tests of the ring
    version of the approximation."""

    params: object
    side: int
    alpha: dict                # (x1, x2) -> value
    rho: dict                  # (y1, y2, q) -> Fraction
    omega_val: Fraction
    Q: int
    E: Fraction
    W: Fraction

    def khat(self, x1: int, x2: int) -> complex:
        acc = 0.0j
        for q in range(1, self.Q + 1):
            for t1 in range(q):
                for t2 in range(q):
                    if math.gcd(math.gcd(t1, t2), q) != 1:
                        continue
                    t = QuadElem(t1, t2)
                    ph = -qmul(t, QuadElem(x1, x2), self.params).c2 / q
                    cq = 0.0j
                    for (z1, z2, qq), r in self.rho.items():
                        if qq != q or r == 0:
                            continue
                        cq += complex(r) * _e(
                            qmul(t, QuadElem(z1, z2), self.params).c2 / q)
                    acc += _e(ph) * cq
        return complex(self.omega_val) * acc


def synthetic_scheme_OL(params, m: int, reps: int, rng) -> SchemeOL:
    """alpha(x) = f(x mod m) on a side m*reps square anchored at 0, with
    constant omega and exact empirical rho; E = 0 by construction."""
    side = m * reps
    f = rng.integers(0, 4, size=(m, m)).astype(np.int64)
    if f.sum() == 0:
        f[0, 0] = 1
    alpha = {}
    for i in range(side):
        for j in range(side):
            v = int(f[i % m, j % m])
            if v:
                alpha[(i, j)] = v
    total = Fraction(sum(alpha.values()))
    Q = min(6, m + 1)
    rho = {}
    for q in range(1, Q + 1):
        for y1 in range(q):
            for y2 in range(q):
                s = Fraction(sum(v for (x1, x2), v in alpha.items()
                                 if x1 % q == y1 and x2 % q == y2))
                rho[(y1, y2, q)] = s / total
    mean = total / side**2
    W = Fraction(0)
    for q in range(1, Q * Q + 1):
        for y1 in range(q):
            n1 = (side - y1 + q - 1) // q
            for y2 in range(q):
                n2 = (side - y2 + q - 1) // q
                W = max(W, abs(mean * n1 * n2 - total / q**2))
    return SchemeOL(params=params, side=side, alpha=alpha, rho=rho,
                    omega_val=mean, Q=Q, E=Fraction(0), W=W)


def defect_OL(scheme: SchemeOL):
    """Measured class-sum defect against the W*Q^4 + E cap, over the full
    support square, all moduli h <= Q and classes z mod h."""
    kh = {}
    for x in scheme.alpha:
        kh[x] = scheme.khat(*x)
    for i in range(scheme.side):
        for j in range(scheme.side):
            if (i, j) not in kh:
                kh[(i, j)] = scheme.khat(i, j)
    worst = 0.0
    rows = []
    for h in range(1, scheme.Q + 1):
        s = np.zeros((h, h), dtype=np.complex128)
        sh = np.zeros((h, h), dtype=np.complex128)
        for (x1, x2), v in scheme.alpha.items():
            s[x1 % h, x2 % h] += v
        for (x1, x2), v in kh.items():
            sh[x1 % h, x2 % h] += v
        d = np.abs(s - sh)
        worst = max(worst, float(d.max()))
        z = np.unravel_index(int(np.argmax(d)), d.shape)
        rows.append({"h": h, "class": (int(z[0]), int(z[1])),
                     "defect": float(d.max())})
    cap = float(scheme.W * scheme.Q**4 + scheme.E)
    return {"rows": rows, "max_defect": worst, "cap": cap,
            "within_cap": worst <= cap * (1 + 1e-9) + 1e-9}


# --------------------------------------------------------------------------
# the production family
# --------------------------------------------------------------------------


@dataclass
class AlphaFamily:
    """Exact representation counts alpha keyed by the image point, the
    tabulated approximant alpha_hat = weight * arithmetic factor, and
    their difference."""

    ctx: FieldCtx
    wf: WeightFn
    mdata: MData
    Q: int
    lq: int
    wt: WeightTable
    ktab: np.ndarray           # (lq, lq) float: arithmetic factor
    keys1: np.ndarray          # distinct image points, int64
    keys2: np.ndarray
    counts: np.ndarray         # multiplicities, int64
    n_points: int
    bbox: tuple                # tight int bounds (x1lo, x1hi, x2lo, x2hi)
    ktab_exact: bool = False
    u_samples: int = 0

    def alpha(self, x1: int, x2: int) -> int:
        i = np.searchsorted(self._packed, self._pack(x1, x2))
        if i < len(self._packed) and self._packed[i] == self._pack(x1, x2):
            return int(self.counts[i])
        return 0

    def alpha_hat(self, x1, x2):
        x1 = np.asarray(x1, dtype=np.int64)
        x2 = np.asarray(x2, dtype=np.int64)
        i1 = (x1 - self.wt.t1lo) // self.wt.cell
        i2 = (x2 - self.wt.t2lo) // self.wt.cell
        h, w = self.wt.table.shape
        ok = (i1 >= 0) & (i1 < h) & (i2 >= 0) & (i2 < w)
        out = np.zeros(x1.shape, dtype=np.float64)
        out[ok] = self.wt.table[i1[ok], i2[ok]] * \
            self.ktab[x1[ok] % self.lq, x2[ok] % self.lq]
        return out if out.shape else float(out)

    def alpha0(self, x1: int, x2: int) -> float:
        return self.alpha(x1, x2) - float(self.alpha_hat(x1, x2))

    def _pack(self, x1, x2):
        span = self.bbox[3] - self.bbox[2] + 1
        return (x1 - self.bbox[0]) * span + (x2 - self.bbox[2])

    def __post_init__(self):
        self._packed = self._pack(self.keys1, self.keys2)


def arithmetic_factor_table(ctx: FieldCtx, mdata: MData, Q: int):
    """The truncated exponential-sum factor K(r) for r mod lcm(1..Q),
    from the exact class densities; (K-table, lq, exact_flag).  Exact
    rational arithmetic when lcm(1..Q) <= 2, else complex128 with the
    imaginary part checked small."""
    lq = 1
    for q in range(2, Q + 1):
        lq = lq // math.gcd(lq, q) * q
    M = mdata.M
    out = np.zeros((lq, lq), dtype=np.complex128)
    out += 1.0  # q = 1 term
    params = ctx.params
    for q in range(2, Q + 1):
        r = M // math.gcd(M, q) * q
        ip1, ip2, invden = _delta_pair_polys(ctx, r)
        bins = _pair_hist_scaled(ip1, ip2, invden, ctx.n, r, M,
                                 mdata.u_class)
        # reduce value classes mod q
        rho_tab = np.zeros((q, q), dtype=np.float64)
        keys = np.nonzero(bins)[0]
        tot = bins.sum()
        for key in keys:
            z1, z2 = int(key) // r, int(key) % r
            rho_tab[z1 % q, z2 % q] += bins[key] / tot
        block = np.zeros((q, q), dtype=np.complex128)
        for t1 in range(q):
            for t2 in range(q):
                if math.gcd(math.gcd(t1, t2), q) != 1:
                    continue
                t = QuadElem(t1, t2)
                cq = 0.0j
                for z1 in range(q):
                    for z2 in range(q):
                        if rho_tab[z1, z2]:
                            cq += rho_tab[z1, z2] * _e(
                                qmul(t, QuadElem(z1, z2), params).c2 / q)
                for x1 in range(q):
                    for x2 in range(q):
                        ph = -qmul(t, QuadElem(x1, x2), params).c2 / q
                        block[x1, x2] += _e(ph) * cq
        reps = lq // q
        out += np.tile(block, (reps, reps))
    if np.max(np.abs(out.imag)) > 1e-9 * max(1.0, np.max(np.abs(out.real))):
        raise ValidationError("arithmetic factor has a large imaginary part")
    return out.real.copy(), lq, lq <= 2


def enumerate_box_lattice(wf: WeightFn, mdata: MData, chunk=1 << 20):
    """Integer points of the box in the class u = u_class mod M, yielded
    as (m, n) int64 chunks."""
    n = wf.ctx.n
    M = mdata.M
    cls = mdata.u_class
    ranges = wf.coord_ranges()
    axes = []
    for k in range(n):
        lo, hi = ranges[k]
        start = math.ceil(lo)
        start += (cls[k] - start) % M
        axes.append(np.arange(start, math.floor(hi) + 1, M, dtype=np.int64))
    if any(len(a) == 0 for a in axes):
        raise EmptyBox("no lattice points in the box class")
    tail = np.stack([g.ravel() for g in np.meshgrid(*axes[1:], indexing="ij")],
                    axis=1)
    rows = max(1, chunk // max(tail.shape[0], 1))
    for i0 in range(0, len(axes[0]), rows):
        lead = axes[0][i0:i0 + rows]
        blk = np.empty((len(lead) * tail.shape[0], n), dtype=np.int64)
        blk[:, 0] = np.repeat(lead, tail.shape[0])
        blk[:, 1:] = np.tile(tail, (len(lead), 1))
        keep = wf.contains(blk.astype(np.float64))
        if keep.any():
            yield blk[keep]


def alpha_family(ctx: FieldCtx, wf: WeightFn, mdata: MData, Q: int,
                 wt: WeightTable | None = None, push_samples=2 * 10**7,
                 cell=128, seed=1) -> AlphaFamily:
    """Enumerate the class lattice points of the box, accumulate the exact
    representation counts, and attach the tabulated approximant."""
    ip1, ip2, den = ctx.delta_norm_polys()
    if den != 1:
        raise ValidationError("the counting pipeline needs integral delta")
    ktab, lq, exact = arithmetic_factor_table(ctx, mdata, Q)
    cell = _pick_cell(cell, lq, Q)
    if wt is None or wt.cell != cell:
        wt = pushforward_table(wf, cell=cell, n_samples=push_samples,
                               seed=seed)
    packs = []
    n_points = 0
    b = None
    for blk in enumerate_box_lattice(wf, mdata):
        x1 = ip1.eval_batch(blk)
        x2 = ip2.eval_batch(blk)
        n_points += len(blk)
        lo1, hi1 = int(x1.min()), int(x1.max())
        lo2, hi2 = int(x2.min()), int(x2.max())
        b = (min(b[0], lo1), max(b[1], hi1), min(b[2], lo2), max(b[3], hi2)) \
            if b else (lo1, hi1, lo2, hi2)
        packs.append((x1, x2))
    if n_points == 0:
        raise EmptyBox("empty lattice class")
    span = b[3] - b[2] + 1
    allpacked = np.concatenate([(x1 - b[0]) * span + (x2 - b[2])
                                for x1, x2 in packs])
    keys, counts = np.unique(allpacked, return_counts=True)
    k1 = keys // span + b[0]
    k2 = keys % span + b[2]
    return AlphaFamily(ctx=ctx, wf=wf, mdata=mdata, Q=Q, lq=lq, wt=wt,
                       ktab=ktab, keys1=k1.astype(np.int64),
                       keys2=k2.astype(np.int64),
                       counts=counts.astype(np.int64), n_points=n_points,
                       bbox=b, ktab_exact=exact, u_samples=wt.n_samples)


def _pick_cell(base: int, lq: int, Q: int) -> int:
    m = lq
    for q in range(2, Q + 1):
        m = m // math.gcd(m, q) * q
    return m * max(1, round(base / m))


def l2_report(fam: AlphaFamily) -> dict:
    """(sum alpha^2 exact, sum alpha_hat^2, sum alpha0^2), with ratios
    against the U^n scale."""
    s_a2 = int(np.sum(fam.counts.astype(object) ** 2))
    cell = fam.wt.cell
    k2_mean = float(np.mean(fam.ktab**2))
    s_h2 = float(np.sum(fam.wt.table**2)) * cell * cell * k2_mean
    ah = fam.alpha_hat(fam.keys1, fam.keys2)
    s_cross = float(np.dot(fam.counts.astype(np.float64), ah))
    s_02 = s_a2 - 2 * s_cross + s_h2
    un = fam.wf.U ** fam.ctx.n
    return {"sum_alpha_sq": s_a2, "sum_alpha_hat_sq": s_h2,
            "sum_alpha0_sq": s_02, "ratio_alpha": s_a2 / un,
            "ratio_alpha_hat": s_h2 / un, "ratio_alpha0": s_02 / un,
            "parallelogram_ok": s_02 <= 2 * s_a2 + 2 * s_h2 + 1e-6}


def family_defect(fam: AlphaFamily) -> dict:
    """Class-sum defect of the production family for moduli h <= Q
    dividing the table cell (exact class counting per cell)."""
    rows = []
    worst = 0.0
    cell = fam.wt.cell
    tab_total = float(np.sum(fam.wt.table)) * cell * cell
    for h in range(1, fam.Q + 1):
        if cell % h:
            continue
        s = np.zeros((h, h))
        np.add.at(s, (fam.keys1 % h, fam.keys2 % h),
                  fam.counts.astype(np.float64))
        t_h = _class_factor(fam, h)
        for z1 in range(h):
            for z2 in range(h):
                sh = tab_total * t_h[z1, z2]
                d = abs(s[z1, z2] - sh)
                worst = max(worst, d)
                rows.append({"h": h, "class": (z1, z2), "S": s[z1, z2],
                             "Shat": sh, "defect": d})
    return {"rows": rows, "max_defect": worst}


def _class_factor(fam: AlphaFamily, h: int) -> np.ndarray:
    """Average of the arithmetic factor over the class z mod h, as a
    fraction of the total cell mass; needs h | cell."""
    lq = fam.lq
    m = lq // math.gcd(lq, h) * h
    t = np.zeros((h, h))
    for x1 in range(m):
        for x2 in range(m):
            t[x1 % h, x2 % h] += fam.ktab[x1 % lq, x2 % lq]
    return t / (m * m)


def dispersion_sum(fam: AlphaFamily, Q0: int, sides=None, offsets=2) -> dict:
    """sum over q <= Q0 of q^2 sum over classes y of the max over the
    square family of |sum of alpha0 over the square in class y|^2, with
    the square family: cell-aligned squares of the given dyadic sides,
    anchor stride side/offsets.  Also returns the trivial comparator
    Q0 * U^n * sum alpha0^2."""
    cell = fam.wt.cell
    tab = fam.wt.table
    h, w = tab.shape
    if sides is None:
        sides = []
        s = 1
        while s <= max(h, w):
            sides.append(s)
            s *= 2
    P_tab = _prefix(tab * (cell * cell))
    total = 0.0
    per_q = []
    for q in range(1, Q0 + 1):
        if cell % q:
            per_q.append({"q": q, "skipped": "q does not divide the cell"})
            continue
        t_q = _class_factor(fam, q)
        # alpha mass per (class, cell); points beyond the cropped table
        # go to the nearest edge cell (their weight mass is zero there)
        grids = np.zeros((q * q, h, w), dtype=np.float64)
        i1 = np.clip((fam.keys1 - fam.wt.t1lo) // cell, 0, h - 1)
        i2 = np.clip((fam.keys2 - fam.wt.t2lo) // cell, 0, w - 1)
        cls = (fam.keys1 % q) * q + (fam.keys2 % q)
        np.add.at(grids, (cls, i1, i2), fam.counts.astype(np.float64))
        best = np.zeros(q * q)
        for ci, c in enumerate(range(q * q)):
            z1, z2 = c // q, c % q
            P = _prefix(grids[c])
            for side in sides:
                stride = max(1, side // offsets)
                m = _max_square_diff(P, P_tab, t_q[z1, z2], side, stride)
                best[ci] = max(best[ci], m)
        contrib = float(q * q * np.sum(best**2))
        total += contrib
        per_q.append({"q": q, "classes": q * q, "contribution": contrib,
                      "max_class_defect": float(best.max())})
    l2 = l2_report(fam)
    trivial = Q0 * fam.wf.U ** fam.ctx.n * l2["sum_alpha0_sq"]
    return {"value": total, "trivial_bound": trivial, "per_q": per_q,
            "sides_cells": sides, "cell": cell,
            "grid_note": "max over cell-aligned dyadic squares only; the "
                         "true square max may be larger"}


def _prefix(a):
    p = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    np.cumsum(a, axis=0, out=p[1:, 1:])
    np.cumsum(p[1:, 1:], axis=1, out=p[1:, 1:])
    return p


def _max_square_diff(P, P_tab, factor, side, stride):
    h = P.shape[0] - 1
    w = P.shape[1] - 1
    if side > h or side > w:
        side = min(h, w)
    i = np.arange(0, h - side + 1, stride)
    j = np.arange(0, w - side + 1, stride)
    ii, jj = np.meshgrid(i, j, indexing="ij")
    a = P[ii + side, jj + side] - P[ii + side, jj] - P[ii, jj + side] \
        + P[ii, jj]
    t = P_tab[ii + side, jj + side] - P_tab[ii + side, jj] \
        - P_tab[ii, jj + side] + P_tab[ii, jj]
    return float(np.max(np.abs(a - factor * t)))
