"""Finite-place computations for the trace-norm equation

    F(v; w; s) = 2^{-kappa} ( tr(delta N_{K/L}(s) N_{K/L}(v)) - 2 N_{K/Q}(w) )

over blocks of residues: value histograms, the class density rho(y,q),
point counts M(p^beta, p^mu), R(k), N_M(k,u), the two-variable
multiplicative function f0, per-prime densities sigma_p with lift
stabilization certificates, and the truncated singular series by two
independent routes.

All counts are exact integers; densities are Fractions.  Histogram
construction iterates block residues with numpy, never the full
p^(3n beta) product space.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .arith import divisors, factorize, mobius, primes_upto
from .errors import DeltaNotIntegralAtQ, TooLarge, ValidationError
from .fields import FieldCtx
from .quad_ring import QuadElem

POINT_BUDGET = 10**8


@dataclass(frozen=True)
class MData:
    """Congruence data: modulus M and classes for the three blocks.
    u_class restricts the s-block, v_class the v-block, w_class the
    w-block."""

    M: int
    u_class: tuple
    v_class: tuple
    w_class: tuple

    @classmethod
    def trivial(cls, n):
        z = (0,) * n
        return cls(1, z, z, z)

    def reduce(self, m):
        return MData(m, tuple(c % m for c in self.u_class),
                     tuple(c % m for c in self.v_class),
                     tuple(c % m for c in self.w_class))


@dataclass
class NormHistogram:
    modulus: int
    kind: str              # "pair" or "scalar"
    table: dict = field(default_factory=dict)

    def total(self):
        return sum(self.table.values())


# --- block enumeration ----------------------------------------------------


def _block_chunks(n, q, M, cls, chunk=1 << 19):
    """Yield (m, n) int64 arrays covering {cls + M*t : t in [0, q/M)^n}."""
    if q % M:
        raise ValidationError(f"class modulus {M} must divide {q}")
    side = q // M
    total = side**n
    if total > POINT_BUDGET:
        raise TooLarge(f"{total} block points exceeds budget {POINT_BUDGET}")
    cls = np.asarray(cls, dtype=np.int64) % M
    axes = [np.arange(side, dtype=np.int64) * M + cls[i] for i in range(n)]
    rows = max(1, chunk // max(side ** (n - 1), 1))
    tail = np.stack([g.ravel() for g in np.meshgrid(*axes[1:], indexing="ij")],
                    axis=1) if n > 1 else np.zeros((1, 0), np.int64)
    for i0 in range(0, side, rows):
        lead = axes[0][i0:i0 + rows]
        blk = np.empty((len(lead) * tail.shape[0], n), dtype=np.int64)
        blk[:, 0] = np.repeat(lead, tail.shape[0])
        blk[:, 1:] = np.tile(tail, (len(lead), 1))
        yield blk


def _accumulate(bins, fn, chunks, threads=1):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            for part in ex.map(fn, chunks):
                bins += part
    else:
        for blk in chunks:
            bins += fn(blk)
    return bins


def _pair_hist(p1, p2, n, q, M, cls, vmod=None, threads=1):
    """Counts of (p1, p2) mod vmod over the block; vmod defaults to q."""
    vmod = vmod or q
    bins = np.zeros(vmod * vmod, dtype=np.int64)

    def one(blk):
        v1 = p1.eval_batch_mod(blk, vmod)
        v2 = p2.eval_batch_mod(blk, vmod)
        return np.bincount(v1 * vmod + v2, minlength=vmod * vmod)

    return _accumulate(bins, one, _block_chunks(n, q, M, cls), threads)


def _scalar_hist(poly, n, q, M, cls, vmod=None, scale=1, threads=1):
    vmod = vmod or q
    bins = np.zeros(vmod, dtype=np.int64)

    def one(blk):
        v = poly.eval_batch_mod(blk, vmod)
        if scale != 1:
            v = (v * (scale % vmod)) % vmod
        return np.bincount(v, minlength=vmod)

    return _accumulate(bins, one, _block_chunks(n, q, M, cls), threads)


def _delta_pair_polys(ctx: FieldCtx, q: int):
    """Integer forms (P1, P2, inv_den) with delta*N_{K/L} = (P1, P2)/den
    and den invertible mod q."""
    ip1, ip2, den = ctx.delta_norm_polys()
    if math.gcd(den, q) != 1:
        raise DeltaNotIntegralAtQ(
            f"delta denominator {den} shares a factor with modulus {q}")
    return ip1, ip2, pow(den, -1, q) if q > 1 else 1


def _trace_coeffs(ctx: FieldCtx):
    """Integer coefficients (t1, t2) of T(xi) = 2^{-kappa} tr(xi) and the
    scale 2^{1-kappa} applied to N_{K/Q}(w)."""
    p = ctx.params
    if p.kappa == 1:
        return 1, p.tr_tau // 2, 1
    return 2, p.tr_tau, 2


def _mul_mod(x1, x2, y1, y2, ctx, q):
    t0, t1 = ctx.params.tau_sq
    z1 = (x1 * y1 + (x1 * 0 + x2 * y2) * (t0 % q)) % q
    z2 = (x1 * y2 + x2 * y1 + x2 * y2 * (t1 % q)) % q
    return z1, z2


# --- public histogram op --------------------------------------------------


def norm_histogram(ctx: FieldCtx, form, q: int, congruence=None,
                   threads=1) -> NormHistogram:
    """Exact value histogram of a form (or pair of forms) over (Z/q)^n,
    optionally restricted to a congruence class (M, class) with M | q."""
    if q < 1:
        raise ValidationError("q must be >= 1")
    M, cls = (1, (0,) * ctx.n) if congruence is None else congruence
    if isinstance(form, tuple):
        p1, p2 = form
        bins = _pair_hist(p1, p2, ctx.n, q, M, cls, threads=threads)
        table = {}
        nz = np.nonzero(bins)[0]
        for key in nz:
            table[QuadElem(int(key) // q, int(key) % q)] = int(bins[key])
        return NormHistogram(q, "pair", table)
    bins = _scalar_hist(form, ctx.n, q, M, cls, threads=threads)
    table = {int(v): int(bins[v]) for v in np.nonzero(bins)[0]}
    return NormHistogram(q, "scalar", table)


# --- rho -------------------------------------------------------------------


def rho(ctx: FieldCtx, mdata: MData, y: QuadElem, q: int) -> Fraction:
    """Density of the class {delta N_{K/L}(s) = y mod q} among s = u_class
    mod M: (M^n / lcm(M,q)^n) * #matching residues mod lcm(M,q)."""
    if q < 1:
        raise ValidationError("q must be >= 1")
    M = mdata.M
    r = M // math.gcd(M, q) * q
    ip1, ip2, invden = _delta_pair_polys(ctx, r)
    count = 0
    for blk in _block_chunks(ctx.n, r, M, mdata.u_class):
        v1 = (ip1.eval_batch_mod(blk, r) * invden) % r
        v2 = (ip2.eval_batch_mod(blk, r) * invden) % r
        count += int(np.sum((v1 % q == int(y.c1) % q)
                            & (v2 % q == int(y.c2) % q)))
    return Fraction(M**ctx.n, r**ctx.n) * count


# --- the point counts ------------------------------------------------------


def count_M(ctx: FieldCtx, mdata: MData, p: int, beta: int, mu: int,
            threads=1) -> int:
    """#{(v,w,s) mod p^beta : class mod p^mu, p^beta | F, p does not
    divide N_{K/L}(v)}, by three value histograms and a pair convolution.
    """
    if beta < max(mu, 1):
        raise ValidationError("need beta >= max(mu, 1)")
    q = p**beta
    pmu = p**mu
    n = ctx.n
    md = mdata.reduce(pmu) if mu else MData.trivial(n)
    ip1, ip2, invden = _delta_pair_polys(ctx, q)
    t1c, t2c, wscale = _trace_coeffs(ctx)

    # s-block: values of delta N_{K/L}
    A = _pair_hist_scaled(ip1, ip2, invden, n, q, pmu, md.u_class, threads)
    # v-block: values of N_{K/L}, dropping p | both coordinates
    B = _pair_hist(ctx.n1_form, ctx.n2_form, n, q, pmu, md.v_class,
                   threads=threads)
    B = _drop_p_divisible(B, q, p)
    # w-block: values of 2^{1-kappa} N_{K/Q}
    C = _scalar_hist(ctx.norm_form, n, q, pmu, md.w_class, scale=wscale,
                     threads=threads)
    return _convolve(A, B, C, ctx, q, q, t1c, t2c)


def _pair_hist_scaled(ip1, ip2, invden, n, q, M, cls, threads=1):
    bins = np.zeros(q * q, dtype=np.int64)

    def one(blk):
        v1 = ip1.eval_batch_mod(blk, q)
        v2 = ip2.eval_batch_mod(blk, q)
        if invden not in (0, 1):
            v1 = (v1 * invden) % q
            v2 = (v2 * invden) % q
        return np.bincount(v1 * q + v2, minlength=q * q)

    return _accumulate(bins, one, _block_chunks(n, q, M, cls), threads)


def _drop_p_divisible(bins, q, p):
    """Zero the buckets where p divides both coordinates of the value."""
    keys = np.nonzero(bins)[0]
    v1, v2 = keys // q, keys % q
    bad = (v1 % p == 0) & (v2 % p == 0)
    out = bins.copy()
    out[keys[bad]] = 0
    return out


def _keep_k_divisible(bins, q, k):
    keys = np.nonzero(bins)[0]
    v1, v2 = keys // q, keys % q
    good = (v1 % k == 0) & (v2 % k == 0)
    out = np.zeros_like(bins)
    out[keys[good]] = bins[keys[good]]
    return out


def _convolve(A, B, C, ctx, q, umod, t1c, t2c) -> int:
    """sum over value pairs of A[x] B[y] C[T(x*y) mod umod].  The outer
    accumulation runs in Python integers: row sums stay below 2^63 but
    their weighted total can overflow int64 at deep levels."""
    ka = np.nonzero(A)[0]
    kb = np.nonzero(B)[0]
    if len(ka) == 0 or len(kb) == 0:
        return 0
    xa1, xa2, ca = ka // q, ka % q, A[ka]
    yb1, yb2, cb = kb // q, kb % q, B[kb]
    total = 0
    step = max(1, int(2e6) // max(len(kb), 1))
    for s in range(0, len(ka), step):
        e = min(s + step, len(ka))
        z1, z2 = _mul_mod(xa1[s:e, None], xa2[s:e, None],
                          yb1[None, :], yb2[None, :], ctx, q)
        t = (t1c * z1 + t2c * z2) % umod
        rows = (cb[None, :] * C[t]).sum(axis=1)
        total += sum(int(w) * int(r) for w, r in zip(ca[s:e], rows))
    return total


def count_R(ctx: FieldCtx, k: int, threads=1) -> int:
    """#{v mod k : k | N_{K/L}(v) componentwise}."""
    if k == 1:
        return 1
    bins = _pair_hist(ctx.n1_form, ctx.n2_form, ctx.n, k, 1,
                      (0,) * ctx.n, threads=threads)
    return int(bins[0])


def count_NM(ctx: FieldCtx, mdata: MData, k: int, u: int,
             delta_mod=None, threads=1) -> int:
    """#{(v,w,s) mod Delta : classes mod M, u | F, k | N_{K/L}(v)} with
    Delta = lcm(M, u, k) unless overridden."""
    M = mdata.M
    D = delta_mod or _lcm3(M, u, k)
    if D == 1:
        return 1
    n = ctx.n
    umod = max(u, 1)
    ip1, ip2, invden = _delta_pair_polys(ctx, D)
    t1c, t2c, wscale = _trace_coeffs(ctx)
    # values reduced mod lcm(u, k); the filter needs mod k, the trace
    # condition mod u
    vm = u // math.gcd(u, k) * k
    vm = max(vm, 1)
    A = _pair_hist_scaled_mod(ip1, ip2, invden, n, D, M, mdata.u_class, vm,
                              threads)
    B = _pair_hist(ctx.n1_form, ctx.n2_form, n, D, M, mdata.v_class,
                   vmod=vm, threads=threads)
    if k > 1:
        B = _keep_k_divisible(B, vm, k)
    C = _scalar_hist(ctx.norm_form, n, D, M, mdata.w_class, vmod=umod,
                     scale=wscale, threads=threads)
    return _convolve(A, B, C, ctx, vm, umod, t1c, t2c)


def _pair_hist_scaled_mod(ip1, ip2, invden, n, D, M, cls, vm, threads=1):
    bins = np.zeros(vm * vm, dtype=np.int64)
    inv = invden % vm

    def one(blk):
        v1 = (ip1.eval_batch_mod(blk, vm) * inv) % vm if vm > 1 else \
            np.zeros(len(blk), np.int64)
        v2 = (ip2.eval_batch_mod(blk, vm) * inv) % vm if vm > 1 else \
            np.zeros(len(blk), np.int64)
        return np.bincount(v1 * vm + v2, minlength=vm * vm)

    return _accumulate(bins, one, _block_chunks(n, D, M, cls), threads)


def _lcm3(a, b, c):
    l = a // math.gcd(a, b) * b
    return l // math.gcd(l, c) * c


# --- f0, sigma_p, the singular series --------------------------------------


class DensityEngine:
    """Caches the expensive counts for one (ctx, mdata) pair.

    The identities computed here are algebraic and hold for any M; the
    main-term interpretation additionally wants M to contain the primes
    of 2 D_L^2, which make_experiment enforces via augment_mdata.  The
    kappa_augmented flag records whether that holds."""

    def __init__(self, ctx: FieldCtx, mdata: MData, threads=1):
        self.kappa_augmented = not any(
            mdata.M % p for p in factorize(2 * ctx.params.dl_sq))
        self.ctx = ctx
        self.mdata = mdata
        self.threads = threads
        self._nm_cache: dict = {}
        self._r_cache: dict = {}
        self._m_cache: dict = {}
        self._p_engines: dict = {}

    def p_engine(self, p: int) -> "DensityEngine":
        """Engine for the p-part of the congruence data; the per-prime
        factor of the two-variable multiplicative function lives there."""
        if self.mdata.M == p ** factorize(self.mdata.M).get(p, 0):
            return self
        if p not in self._p_engines:
            mu = factorize(self.mdata.M).get(p, 0)
            self._p_engines[p] = DensityEngine(
                self.ctx, self.mdata.reduce(p**mu) if mu else
                MData.trivial(self.ctx.n), self.threads)
        return self._p_engines[p]

    def f0_p(self, p: int, alpha: int) -> Fraction:
        return self.p_engine(p).f0(p**alpha)

    def R(self, k: int) -> int:
        if k not in self._r_cache:
            self._r_cache[k] = count_R(self.ctx, k, self.threads)
        return self._r_cache[k]

    def NM(self, k: int, u: int, delta_mod=None) -> int:
        key = (k, u, delta_mod)
        if key not in self._nm_cache:
            self._nm_cache[key] = count_NM(self.ctx, self.mdata, k, u,
                                           delta_mod, self.threads)
        return self._nm_cache[key]

    def M_count(self, p: int, beta: int) -> int:
        mu = factorize(self.mdata.M).get(p, 0)
        key = (p, beta)
        if key not in self._m_cache:
            self._m_cache[key] = count_M(self.ctx, self.mdata, p, beta, mu,
                                         self.threads)
        return self._m_cache[key]

    # f0(q, M) per the Moebius expansion; exact Fraction
    def f0(self, q: int) -> Fraction:
        M = self.mdata.M
        n3 = 3 * self.ctx.n
        out = Fraction(0)
        for u in divisors(q):
            mq = mobius(q // u)
            if mq == 0:
                continue
            lmu = M // math.gcd(M, u) * u
            euler = Fraction(1)
            for p in factorize(u * M):
                euler *= Fraction(p**self.ctx.n,
                                  p**self.ctx.n - self.R(p))
            inner = Fraction(0)
            for k in divisors(u * M):
                mk = mobius(k)
                if mk == 0:
                    continue
                inner += mk * self.NM(k, u, delta_mod=lmu)
            out += u * mq * inner * euler / lmu**n3
        return out

    def sigma_p(self, p: int, depth=2):
        """(sigma_p, sigma_p*, beta_used, stabilized).  sigma_p is the
        partial sum of the p-part f0(p^alpha, p^mu) in closed form at the
        deepest feasible beta; sigma_p* drops the R-factor.  stabilized
        means one more level multiplies the count by exactly p^(3n-1)."""
        mu = factorize(self.mdata.M).get(p, 0)
        n = self.ctx.n
        best = None
        for beta in range(max(mu, 1), max(mu, 1) + depth):
            try:
                m = self.M_count(p, beta)
            except TooLarge:
                break
            best = (beta, m)
        if best is None:
            raise TooLarge(f"no feasible level for p={p}")
        beta, m = best
        stab = False
        if beta > max(mu, 1):
            prev = self._m_cache[(p, beta - 1)]
            stab = (m == p**(3 * n - 1) * prev)
        star = Fraction(m, p**((3 * n - 1) * beta))
        sig = star * Fraction(p**n, p**n - self.R(p))
        return sig, star, beta, stab


def augment_mdata(ctx: FieldCtx, mdata: MData) -> MData:
    """Extend M by the prime divisors of 2 D_L^2, picking classes whose
    residue point not only solves the equation mod the new modulus but
    also keeps its deeper lift counts positive (so the per-prime
    densities stay positive)."""
    M = mdata.M
    extra = 1
    for p in factorize(2 * ctx.params.dl_sq):
        if M % p:
            extra *= p
    if extra == 1:
        return mdata
    M2 = M * extra
    fallback = None
    for cand in _solve_classes_mod_iter(ctx, mdata, M2):
        if fallback is None:
            fallback = cand
        ok = True
        for p, mu in factorize(M2).items():
            try:
                if count_M(ctx, cand, p, mu + 2, mu) == 0:
                    ok = False
                    break
            except TooLarge:
                pass
        if ok:
            return cand
    if fallback is None:
        raise ValidationError(f"no residue solution mod {M2} compatible "
                              f"with the given classes")
    return fallback


def _solve_classes_mod_iter(ctx: FieldCtx, mdata: MData, M2: int):
    """Candidate classes mod M2 lifting mdata's classes with
    v = (1,0,...,0) and F = 0 mod M2, unit-norm candidates first."""
    n = ctx.n
    t1c, t2c, wscale = _trace_coeffs(ctx)
    ip1, ip2, invden = _delta_pair_polys(ctx, M2)
    v = tuple([1 % M2] + [0] * (n - 1))
    nv = ctx.relnorm_kl(v)
    preferred = []
    fallback = []
    for ublk in _block_chunks(n, M2, mdata.M, mdata.u_class):
        for urow in ublk:
            x1 = int(ip1.eval_int(urow)) * invden % M2
            x2 = int(ip2.eval_int(urow)) * invden % M2
            z1, z2 = _mul_mod(x1, x2, nv.c1 % M2, nv.c2 % M2, ctx, M2)
            tval = (t1c * z1 + t2c * z2) % M2
            u_unit = math.gcd(math.gcd(x1, x2), M2) == 1
            for wblk in _block_chunks(n, M2, mdata.M, mdata.w_class):
                nw = ctx.norm_form.eval_batch_mod(wblk, M2)
                hit = np.nonzero((nw * wscale) % M2 == tval)[0]
                for i in hit:
                    md = MData(M2, tuple(int(c) for c in urow), v,
                               tuple(int(c) for c in wblk[i]))
                    if u_unit and math.gcd(int(nw[i]), M2) == 1:
                        preferred.append(md)
                    else:
                        fallback.append(md)
    yield from preferred
    yield from fallback


def _solve_classes_mod(ctx: FieldCtx, mdata: MData, M2: int):
    return next(_solve_classes_mod_iter(ctx, mdata, M2), None)


def hensel_solvable(ctx: FieldCtx, mdata: MData, p: int):
    """(solvable, certificate): search for a point mod p on F = 0 with
    p not dividing N_{K/L}(v), matching the classes mod gcd-power of p,
    and with nonzero gradient mod p (via the Euler identity when p does
    not divide n N_{K/Q}(w), else by direct gradient evaluation)."""
    n = ctx.n
    mu = min(factorize(mdata.M).get(p, 0), 1)
    pm = p**mu
    md = mdata.reduce(pm) if mu else MData.trivial(n)
    t1c, t2c, wscale = _trace_coeffs(ctx)
    ip1, ip2, invden = _delta_pair_polys(ctx, p)

    # bucket the w-block by target value, keeping exemplars
    wex: dict[int, list] = {}
    for blk in _block_chunks(n, p, pm, md.w_class):
        tv = (ctx.norm_form.eval_batch_mod(blk, p) * wscale) % p
        nk = ctx.norm_form.eval_batch_mod(blk, p)
        for i in range(len(blk)):
            wex.setdefault(int(tv[i]), [])
            if len(wex[int(tv[i])]) < 6:
                wex[int(tv[i])].append((tuple(int(c) for c in blk[i]),
                                        int(nk[i])))

    for sblk in _block_chunks(n, p, pm, md.u_class):
        sv1 = (ip1.eval_batch_mod(sblk, p) * invden) % p
        sv2 = (ip2.eval_batch_mod(sblk, p) * invden) % p
        for vblk in _block_chunks(n, p, pm, md.v_class):
            nv1 = ctx.n1_form.eval_batch_mod(vblk, p)
            nv2 = ctx.n2_form.eval_batch_mod(vblk, p)
            ok = ~((nv1 == 0) & (nv2 == 0))
            idx = np.nonzero(ok)[0]
            for i in range(len(sblk)):
                z1, z2 = _mul_mod(int(sv1[i]), int(sv2[i]), nv1[idx],
                                  nv2[idx], ctx, p)
                t = (t1c * z1 + t2c * z2) % p
                for j, tv in enumerate(t):
                    for wv, nkw in wex.get(int(tv), []):
                        point = (tuple(int(c) for c in vblk[idx[j]]), wv,
                                 tuple(int(c) for c in sblk[i]))
                        grad = _grad_F_mod(ctx, point, p)
                        if any(g % p for g in grad):
                            return True, {"p": p, "point": point,
                                          "grad": grad,
                                          "euler_unit": nkw % p != 0}
    return False, {"p": p, "exhausted": True}


def _grad_F_mod(ctx: FieldCtx, point, p):
    """Gradient of 2^{-kappa} F at (v, w, s), mod p, exact."""
    v, w, s = point
    t1c, t2c, wscale = _trace_coeffs(ctx)
    d = ctx.delta
    t0, t1 = ctx.params.tau_sq
    # gradient in w: -wscale * grad N_{K/Q}(w)
    gw = [(-wscale * g) % p for g in ctx.norm_kq(list(w))[1]]
    # gradients in v and s via product rule on the pair forms
    ns = ctx.relnorm_kl(list(s))
    nv = ctx.relnorm_kl(list(v))
    dns = QuadElem(Fraction(d.c1) * ns.c1 + Fraction(d.c2) * ns.c2 * t0,
                   Fraction(d.c1) * ns.c2 + Fraction(d.c2) * ns.c1
                   + Fraction(d.c2) * ns.c2 * t1)
    gv = []
    for a, b in zip((g.eval_int(list(v)) for g in ctx.n1_form.grad()),
                    (g.eval_int(list(v)) for g in ctx.n2_form.grad())):
        z1 = dns.c1 * a + dns.c2 * b * t0
        z2 = dns.c1 * b + dns.c2 * a + dns.c2 * b * t1
        gv.append(_frac_mod(t1c * z1 + t2c * z2, p))
    gs = []
    for a, b in zip((g.eval_int(list(s)) for g in ctx.n1_form.grad()),
                    (g.eval_int(list(s)) for g in ctx.n2_form.grad())):
        da1 = Fraction(d.c1) * a + Fraction(d.c2) * b * t0
        da2 = Fraction(d.c1) * b + Fraction(d.c2) * a + Fraction(d.c2) * b * t1
        z1 = da1 * nv.c1 + da2 * nv.c2 * t0
        z2 = da1 * nv.c2 + da2 * nv.c1 + da2 * nv.c2 * t1
        gs.append(_frac_mod(t1c * z1 + t2c * z2, p))
    return gv + list(gw) + gs


def _frac_mod(x, p):
    x = Fraction(x)
    if math.gcd(x.denominator, p) != 1:
        raise DeltaNotIntegralAtQ(f"denominator not invertible mod {p}")
    return x.numerator * pow(x.denominator, -1, p) % p


@dataclass
class DensityReport:
    n: int
    M: int
    per_prime: list
    r_table: dict
    c_value: Fraction
    c_interval: tuple
    s_truncated: Fraction
    s_product: Fraction
    s_product_interval: tuple
    tail_halfwidth: Fraction
    agreement: bool
    bugle_constant: Fraction
    k_cap: int
    Q: int
    P0: int
    mlem_constant: Fraction

    def to_jsonable(self):
        def fr(x):
            return f"{Fraction(x).numerator}/{Fraction(x).denominator}"
        return {
            "n": self.n, "M": self.M, "Q": self.Q, "P0": self.P0,
            "k_cap": self.k_cap,
            "per_prime": [
                {"p": p, "mu": mu, "beta": b, "sigma_p": fr(s),
                 "sigma_p_star": fr(st), "stabilized": bool(flag),
                 "m_counts": mc}
                for (p, mu, b, s, st, flag, mc) in self.per_prime],
            "R": {str(k): v for k, v in self.r_table.items()},
            "c": fr(self.c_value),
            "c_interval": [fr(self.c_interval[0]), fr(self.c_interval[1])],
            "S_truncated": fr(self.s_truncated),
            "S_product": fr(self.s_product),
            "S_product_interval": [fr(self.s_product_interval[0]),
                                   fr(self.s_product_interval[1])],
            "tail_halfwidth": fr(self.tail_halfwidth),
            "agreement": bool(self.agreement),
            "bugle_constant": fr(self.bugle_constant),
            "mlem_constant": fr(self.mlem_constant),
        }


def _sqrt_frac(x: Fraction) -> Fraction:
    """Rational upper approximation of sqrt(x)."""
    num = math.isqrt(int(x * 10**12)) + 1
    return Fraction(num, 10**6)


def singular_series(ctx: FieldCtx, mdata: MData, Q: int, P0=13, depth=2,
                    k_cap=12, threads=1) -> DensityReport:
    """Truncated singular series by direct summation and by the Euler
    product, with measured tail intervals.

    Route 1 sums u mu(q/u) mu(k) Delta^{-3n} N_M(k,u) for q <= Q and
    squarefree k <= k_cap; the discarded k carry a tail bounded by the
    measured N_M(k,u) k / Delta^{3n-1} constant.  Route 2 multiplies the
    per-prime densities for p <= P0; the p > P0 tail uses the measured
    deviation |sigma_p* - 1| p^{3/2}.  Both cores are exact rationals.
    """
    eng = DensityEngine(ctx, mdata, threads)
    n = ctx.n
    n3 = 3 * n
    M = mdata.M

    # route 1: direct truncated sum over q <= Q, k squarefree <= k_cap
    s_trunc = Fraction(0)
    bugle = Fraction(0)
    u_weight = Fraction(0)
    for q in range(1, Q + 1):
        for u in divisors(q):
            mq = mobius(q // u)
            if mq == 0:
                continue
            u_weight += u
            for k in range(1, k_cap + 1):
                mk = mobius(k)
                if mk == 0:
                    continue
                D = _lcm3(M, u, k)
                nm = eng.NM(k, u)
                s_trunc += Fraction(u * mq * mk * nm, D**n3)
                if nm:
                    bugle = max(bugle, Fraction(nm * k, D**(n3 - 1)))
    # tail of the k-sum: |u mu mu N_M / D^{3n}| <= u * bugle / (k D)
    # and D >= k, so the k > k_cap mass is <= u_weight * bugle * 2/k_cap
    k_tail = u_weight * bugle * Fraction(2, k_cap)

    # route 2: Euler product c * prod sigma_p over p <= P0
    primes = primes_upto(P0)
    r_table = {1: 1}
    c = Fraction(1)
    c_r_const = Fraction(0)
    for p in primes:
        r_table[p] = eng.R(p)
        c *= 1 - Fraction(r_table[p], p**n)
        c_r_const = max(c_r_const, Fraction(r_table[p], p**(n - 2)))
    c_lo = c * (1 - c_r_const * Fraction(2, P0))
    c_int = (min(c_lo, c), max(c_lo, c))

    per_prime = []
    s_prod = c
    mlem_c = Fraction(0)
    f0_abs: dict[int, Fraction] = {}
    mpart = factorize(M)
    for p in primes:
        sig, star, beta, stab = eng.sigma_p(p, depth=depth)
        mc = {b: eng._m_cache[(p, b)] for b in range(1, beta + 1)
              if (p, b) in eng._m_cache}
        per_prime.append((p, mpart.get(p, 0), beta, sig, star, stab, mc))
        s_prod *= sig
        if mpart.get(p, 0) == 0:
            dev = abs(Fraction(eng.M_count(p, 1), p**(n3 - 1)) - 1)
            mlem_c = max(mlem_c, dev * p * _sqrt_frac(Fraction(p)))
        # per-prime |f0(p^alpha, p^mu)| masses including alpha = 0 (which
        # is not 1 when p | M), for the cross-route interval
        mass = Fraction(0)
        for al in range(0, beta + 1):
            mass += abs(eng.f0_p(p, al))
        mass += abs(eng.f0_p(p, beta)) * Fraction(2, p)  # geometric slack
        f0_abs[p] = mass

    # interval: |f0| mass of the q-support seen by the product but not by
    # the truncated sum, plus the prime tail, plus the k-truncation tail
    prod_all = Fraction(1)
    for p in primes:
        prod_all *= f0_abs[p]
    shared = Fraction(0)
    for q in range(1, Q + 1):
        fac = factorize(q)
        if any(p > P0 for p in fac):
            continue
        fq = Fraction(1)
        for p in primes:
            fq *= abs(eng.f0_p(p, fac.get(p, 0)))
        shared += fq
    cross = max(Fraction(0), c * (prod_all - shared))
    star_tail = mlem_c * 2 * _sqrt_frac(Fraction(1, P0))
    tail_prime = abs(s_prod) * star_tail * 2
    halfwidth = k_tail + cross + tail_prime
    s_int = (s_prod - halfwidth, s_prod + halfwidth)
    agree = abs(s_trunc - s_prod) <= halfwidth

    return DensityReport(
        n=n, M=M, per_prime=per_prime, r_table=r_table, c_value=c,
        c_interval=c_int, s_truncated=s_trunc, s_product=s_prod,
        s_product_interval=s_int, tail_halfwidth=halfwidth, agreement=agree,
        bugle_constant=bugle, k_cap=k_cap, Q=Q, P0=P0, mlem_constant=mlem_c)
