"""The end-to-end counting experiment.

Boxes at scales U = H V (u-block), V (v-block), W = H^{1/2} V (w-block)
with congruence classes mod M; the direct count of lattice solutions of
the trace-norm equation; the bilinear count split into a main term from
the tabulated approximant plus a balanced remainder; the line integrals
I(v,w), the lattice singular integral, its congruence-restricted
variants; and the main-term prediction 2^kappa M^n sigma_inf S(Q).

The solution condition is used in the integerized form
    a1' x1 + a2' x2 = 2^{1-kappa} N_{K/Q}(w),
with (a1, a2) the trace coefficients of N_{K/L}(v) and a' = a / 2^kappa,
which is an exact bijection with the original equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .approx import AlphaFamily, alpha_family
from .densities import (DensityReport, MData, _trace_coeffs, augment_mdata,
                        singular_series)
from .errors import (BadCongruence, BothCoeffsZero, Budget,
                     CenterOnNullcone, EmptyBox, NotUnimodular,
                     ValidationError)
from .fields import FieldCtx
from .quad_ring import QuadElem
from .weights import WeightFn, WeightTable, build_weight, omega

PAIR_BUDGET = 3 * 10**10
LAM_RANGE_BUDGET = 3 * 10**8


@dataclass
class ExperimentConfig:
    ctx: FieldCtx
    V: int
    H0: int
    G: float
    Q: int
    mdata: MData
    u_r: np.ndarray
    v_r: np.ndarray
    w_r: np.ndarray
    wf: WeightFn
    seed: int = 0
    budget: int = PAIR_BUDGET
    k_cap: int = 12
    depth: int = 2
    P0: int = 13
    push_samples: int = 2 * 10**7
    cell: int = 128
    proj_samples: int = 200_000

    @property
    def H(self):
        return self.H0**2

    @property
    def U(self):
        return self.H * self.V

    @property
    def Wscale(self):
        return self.H0 * self.V

    @property
    def eps_box(self):
        """Radius of the coordinate box guaranteed to contain the form
        box (the weak-approximation radius implied by G)."""
        return 2.0 / (self.wf.lam * self.G)

    def v_box(self):
        c = self.V * self.v_r
        return [(c[k] - self.V / self.G, c[k] + self.V / self.G)
                for k in range(self.ctx.n)]

    def w_box(self):
        c = self.Wscale * self.w_r
        return [(c[k] - self.Wscale / self.G, c[k] + self.Wscale / self.G)
                for k in range(self.ctx.n)]


def make_experiment(ctx: FieldCtx, V: int, H0: int, G: float,
                    mdata: MData | None = None, u_center=None,
                    w_center=None, Q: int | None = None, seed=0,
                    **knobs) -> ExperimentConfig:
    """Validate parameters, augment the congruence modulus by the primes
    of 2 D_L^2, solve the real center constraint, and build the weight."""
    n = ctx.n
    H = H0 * H0
    if not (V >= H >= 1):
        raise ValidationError("need V >= H0^2 >= 1")
    if mdata is None:
        mdata = MData.trivial(n)
    if tuple(c % mdata.M for c in mdata.v_class) != \
            tuple([1 % mdata.M] + [0] * (n - 1)):
        raise BadCongruence("v class must be (1, 0, ..., 0)")
    mdata = augment_mdata(ctx, mdata)
    M = mdata.M
    if H0 % M != 1 % M or V % M != 1 % M:
        raise BadCongruence(f"H0 and V must be 1 mod M = {M}")
    if not _class_solves(ctx, mdata):
        raise BadCongruence("congruence classes do not solve the equation "
                            f"mod {M}")

    u_r = np.asarray(u_center if u_center is not None
                     else _default_u_center(n), dtype=np.float64)
    v_r = np.array([1.0] + [0.0] * (n - 1))
    U = H * V
    wf = build_weight(ctx, U, G, u_r, M=M)
    u_r = wf.u_center
    if w_center is None:
        w_r = _solve_w_center(ctx, u_r, v_r)
    else:
        w_r = np.asarray(w_center, dtype=np.float64)
    if abs(ctx.norm_form.eval_batch(w_r[None, :], np.float64)[0]) < 1e-12:
        raise CenterOnNullcone("N_{K/Q}(w_center) = 0")
    resid = _center_residual(ctx, u_r, v_r, w_r)
    if abs(resid) > 1e-9:
        raise ValidationError(f"real centers miss the equation by {resid}")
    Q = Q if Q is not None else max(1, math.ceil(H ** ((n - 1) / 12)))
    return ExperimentConfig(ctx=ctx, V=V, H0=H0, G=float(G), Q=Q,
                            mdata=mdata, u_r=u_r, v_r=v_r, w_r=w_r, wf=wf,
                            seed=seed, **knobs)


def _default_u_center(n):
    base = [1.0, 0.2, 0.3, 0.15, 0.12, 0.1, 0.08, 0.07]
    return np.array(base[:n])


def _solve_w_center(ctx, u_r, v_r):
    t1c, t2c, wscale = _trace_coeffs(ctx)
    kap = ctx.params.kappa
    nu = _rel_float(ctx, u_r)
    nv = _rel_float(ctx, v_r)
    d = ctx.delta
    t0, t1 = ctx.params.tau_sq
    df = (float(Fraction(d.c1)), float(Fraction(d.c2)))
    z = _qmul_float(df, _qmul_float(nu, nv, (t0, t1)), (t0, t1))
    target = (2 * z[0] + ctx.params.tr_tau * z[1]) / 2.0  # tr / 2 = N(w)
    if target <= 0:
        raise CenterOnNullcone(
            "trace of the center product is nonpositive; pick another "
            "u_center")
    s = target ** (1.0 / ctx.n)
    return np.array([s] + [0.0] * (ctx.n - 1))


def _rel_float(ctx, u):
    return (float(ctx.n1_form.eval_batch(u[None, :], np.float64)[0]),
            float(ctx.n2_form.eval_batch(u[None, :], np.float64)[0]))


def _qmul_float(x, y, tsq):
    t0, t1 = tsq
    return (x[0] * y[0] + x[1] * y[1] * t0,
            x[0] * y[1] + x[1] * y[0] + x[1] * y[1] * t1)


def _center_residual(ctx, u_r, v_r, w_r):
    t0, t1 = ctx.params.tau_sq
    d = ctx.delta
    df = (float(Fraction(d.c1)), float(Fraction(d.c2)))
    z = _qmul_float(df, _qmul_float(_rel_float(ctx, u_r),
                                    _rel_float(ctx, v_r), (t0, t1)), (t0, t1))
    tr = 2 * z[0] + ctx.params.tr_tau * z[1]
    nw = float(ctx.norm_form.eval_batch(w_r[None, :], np.float64)[0])
    scale = max(abs(tr), abs(2 * nw), 1e-30)
    return (tr - 2 * nw) / scale


def _class_solves(ctx, mdata: MData) -> bool:
    M = mdata.M
    if M == 1:
        return True
    t1c, t2c, wscale = _trace_coeffs(ctx)
    from .densities import _delta_pair_polys, _mul_mod
    ip1, ip2, invden = _delta_pair_polys(ctx, M)
    x1 = int(ip1.eval_int(mdata.u_class)) * invden % M
    x2 = int(ip2.eval_int(mdata.u_class)) * invden % M
    nv = ctx.relnorm_kl(list(mdata.v_class))
    z1, z2 = _mul_mod(x1, x2, nv.c1 % M, nv.c2 % M, ctx, M)
    lhs = (t1c * z1 + t2c * z2) % M
    rhs = wscale * ctx.norm_form.eval_int(mdata.w_class) % M
    return lhs == rhs


# --------------------------------------------------------------------------
# coefficients and the v/w side
# --------------------------------------------------------------------------


def coeffs_ab(ctx: FieldCtx, v, w):
    """(a1, a2, b, kappa): the linear-form coefficients of the x-condition
    attached to v, and b = 2 N_{K/Q}(w)."""
    p = ctx.params
    nv = ctx.relnorm_kl(list(v))
    a1 = 2 * nv.c1 + p.tr_tau * nv.c2
    a2 = p.tr_tau * nv.c1 + p.tr_tau2 * nv.c2
    b = 2 * ctx.norm_form.eval_int(list(w))
    return a1, a2, b, p.kappa


@dataclass
class BetaLambda:
    """Enumerated v- and w-side data for one experiment."""

    beta: dict                  # QuadElem key -> count (Econd holds)
    lam: dict                   # l = 2 N_{K/Q}(w) -> count
    max_key_gcd: int            # measured bound for the key gcds
    v_rows: np.ndarray          # (a1', a2', econd) per class v point
    v_pts: np.ndarray
    lam_dense: np.ndarray       # int32 counts indexed by c - c_lo
    c_lo: int
    c_hi: int
    w_count: int
    kappa: int

    def lam_lookup(self, c):
        if self.c_lo <= c <= self.c_hi:
            return int(self.lam_dense[c - self.c_lo])
        return 0


def _box_lattice(box, M, cls, n):
    axes = []
    for k in range(n):
        lo, hi = box[k]
        start = math.ceil(lo)
        if math.floor(hi) < start:
            return None
        start += (cls[k] - start) % M
        axes.append(np.arange(start, math.floor(hi) + 1, M, dtype=np.int64))
    if any(len(a) == 0 for a in axes):
        return None
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def beta_lambda(config: ExperimentConfig) -> BetaLambda:
    ctx = config.ctx
    n = ctx.n
    md = config.mdata
    p = ctx.params
    kap = p.kappa

    vpts = _box_lattice(config.v_box(), md.M, md.v_class, n)
    if vpts is None:
        raise EmptyBox("v box has no class points")
    n1 = ctx.n1_form.eval_batch(vpts)
    n2 = ctx.n2_form.eval_batch(vpts)
    a1 = 2 * n1 + p.tr_tau * n2
    a2 = p.tr_tau * n1 + p.tr_tau2 * n2
    g = np.gcd(n1, n2)
    econd = (g == 1) | (g == -1)
    beta = {}
    maxg = 0
    for i in np.nonzero(econd)[0]:
        key = QuadElem(int(a2[i]), int(-a1[i]))
        beta[key] = beta.get(key, 0) + 1
        maxg = max(maxg, math.gcd(abs(key.c1), abs(key.c2)))
    v_rows = np.stack([a1 >> kap, a2 >> kap, econd.astype(np.int64)],
                      axis=1).astype(np.int64)

    wpts = _box_lattice(config.w_box(), md.M, md.w_class, n)
    if wpts is None:
        raise EmptyBox("w box has no class points")
    nw = ctx.norm_form.eval_batch(wpts)
    lam = {}
    vals, cnts = np.unique(2 * nw, return_counts=True)
    for l, c in zip(vals, cnts):
        lam[int(l)] = int(c)
    cvals = (2 * nw) >> kap          # c = 2^{1-kappa} N_{K/Q}(w)
    c_lo, c_hi = int(cvals.min()), int(cvals.max())
    if c_hi - c_lo + 1 > LAM_RANGE_BUDGET:
        raise Budget("dense target table would exceed the range budget")
    dense = np.bincount(cvals - c_lo,
                        minlength=c_hi - c_lo + 1).astype(np.int32)
    return BetaLambda(beta=beta, lam=lam, max_key_gcd=maxg, v_rows=v_rows,
                      v_pts=vpts, lam_dense=dense, c_lo=c_lo, c_hi=c_hi,
                      w_count=len(wpts), kappa=kap)


# --------------------------------------------------------------------------
# counts
# --------------------------------------------------------------------------


def count_direct(config: ExperimentConfig, fam: AlphaFamily,
                 bl: BetaLambda) -> int:
    """Exact count of class solutions in the boxes, no coprimality
    condition on v: pair iteration over (image points, v) with the dense
    target table."""
    n_pairs = fam.n_points * len(bl.v_rows)
    if n_pairs > config.budget:
        raise Budget(f"{n_pairs} pairs exceed the budget {config.budget}")
    total = 0
    for a1p, a2p, _ in bl.v_rows:
        total += kernels.pair_correlate(fam.keys1, fam.keys2, fam.counts,
                                        int(a1p), int(a2p), bl.lam_dense,
                                        bl.c_lo)
    return int(total)


def bilinear_count(config: ExperimentConfig, fam: AlphaFamily,
                   bl: BetaLambda) -> dict:
    """The bilinear count over the coprimality-filtered v, split into the
    approximant main term and the balanced remainder, accumulated per v
    so the split identity is a real float consistency check."""
    lam_keys = np.array(sorted(bl.lam.keys()), dtype=np.int64)
    lam_cnts = np.array([bl.lam[int(k)] for k in lam_keys], dtype=np.int64)
    cp = lam_keys >> bl.kappa     # c values, sorted
    wt = fam.wt
    tb = _tight_bbox(wt)
    n_sum = 0
    m_sum = 0.0
    e_sum = 0.0
    for a1p, a2p, ec in bl.v_rows:
        if not ec:
            continue
        nv = kernels.pair_correlate(fam.keys1, fam.keys2, fam.counts,
                                    int(a1p), int(a2p), bl.lam_dense,
                                    bl.c_lo)
        g = math.gcd(int(a1p), int(a2p))
        if g != 1:
            raise ValidationError("coprimality filter failed to make the "
                                  "reduced coefficients coprime")
        ab1, ab2 = _bezout(int(a1p), int(a2p))
        mv = kernels.line_sum(cp, lam_cnts, ab1, ab2, int(a2p), int(-a1p),
                              tb[0], tb[1], tb[2], tb[3],
                              wt.table, wt.t1lo, wt.t2lo, wt.cell,
                              fam.ktab, fam.lq)
        n_sum += int(nv)
        m_sum += mv
        e_sum += nv - mv
    gap = abs(n_sum - (m_sum + e_sum))
    return {"N_bilinear": n_sum, "M_main": m_sum, "E_rem": e_sum,
            "split_gap": gap,
            "split_ok": gap <= 1e-6 * max(abs(n_sum), 1.0)}


def _tight_bbox(wt: WeightTable):
    nz = np.nonzero(wt.table)
    if len(nz[0]) == 0:
        return (0, -1, 0, -1)
    return (wt.t1lo + int(nz[0].min()) * wt.cell,
            wt.t1lo + (int(nz[0].max()) + 1) * wt.cell - 1,
            wt.t2lo + int(nz[1].min()) * wt.cell,
            wt.t2lo + (int(nz[1].max()) + 1) * wt.cell - 1)


def _bezout(a, b):
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        qq = old_r // r
        old_r, r = r, old_r - qq * r
        old_s, s = s, old_s - qq * s
        old_t, t = t, old_t - qq * t
    if old_r < 0:
        old_s, old_t = -old_s, -old_t
    return old_s, old_t


def brute_force_triple_count(config: ExperimentConfig, econd: bool) -> int:
    """Independent oracle: loop over the class lattices of the three
    boxes evaluating the defining trace equation directly, with the
    innermost w-loop folded into a value counter.  Pure python integer
    arithmetic end to end; micro instances only."""
    ctx = config.ctx
    n = ctx.n
    md = config.mdata
    upts = _collect_u(config)
    vpts = _box_lattice(config.v_box(), md.M, md.v_class, n)
    wpts = _box_lattice(config.w_box(), md.M, md.w_class, n)
    if upts is None or vpts is None or wpts is None:
        return 0
    if len(upts) * len(vpts) * len(wpts) > 10**9:
        raise Budget("brute force oracle is for micro instances only")
    from collections import Counter
    from .quad_ring import mul as qmul, trace as qtrace
    d = QuadElem(Fraction(config.ctx.delta.c1), Fraction(config.ctx.delta.c2))
    wcount = Counter(2 * ctx.norm_form.eval_int([int(c) for c in w])
                     for w in wpts)
    nus = [qmul(d, ctx.relnorm_kl([int(c) for c in u]), ctx.params)
           for u in upts]
    total = 0
    for v in vpts:
        nv = ctx.relnorm_kl([int(c) for c in v])
        if econd and math.gcd(int(nv.c1), int(nv.c2)) != 1:
            continue
        for nu in nus:
            lhs = qtrace(qmul(nu, nv, ctx.params), ctx.params)
            total += wcount.get(lhs, 0)
    return total


def _collect_u(config: ExperimentConfig):
    from .approx import enumerate_box_lattice
    try:
        blocks = list(enumerate_box_lattice(config.wf, config.mdata))
    except EmptyBox:
        return None
    return np.concatenate(blocks, axis=0) if blocks else None


def sample_solutions(config: ExperimentConfig, fam: AlphaFamily,
                     bl: BetaLambda, k=25, seed=0):
    """Up to k counted triples (u, v, w), for the exact recovery check.
    Scans v in seeded random order and picks image points hitting the
    target table, then any matching w by re-enumeration."""
    rng = np.random.default_rng(seed)
    ctx = config.ctx
    md = config.mdata
    upts = _collect_u(config)
    ip1, ip2, _ = ctx.delta_norm_polys()
    ux1 = ip1.eval_batch(upts)
    ux2 = ip2.eval_batch(upts)
    wpts = _box_lattice(config.w_box(), md.M, md.w_class, ctx.n)
    wc = (2 * ctx.norm_form.eval_batch(wpts)) >> bl.kappa
    order = rng.permutation(len(bl.v_rows))
    out = []
    for vi in order:
        a1p, a2p, _ = bl.v_rows[vi]
        t = a1p * ux1 + a2p * ux2
        idx = t - bl.c_lo
        ok = (idx >= 0) & (idx <= bl.c_hi - bl.c_lo)
        hits = np.nonzero(ok)[0]
        hits = hits[bl.lam_dense[idx[hits]] > 0]
        for ui in hits[:3]:
            wi = int(np.nonzero(wc == t[ui])[0][0])
            out.append((tuple(int(c) for c in upts[ui]),
                        tuple(int(c) for c in bl.v_pts[vi]),
                        tuple(int(c) for c in wpts[wi])))
            if len(out) >= k:
                return out
    return out


# --------------------------------------------------------------------------
# generic bilinear evaluator with diagnostics
# --------------------------------------------------------------------------


def bilinear_general(alpha: dict, beta: dict, lam: dict, mmat, E=10**9,
                     with_diag=False, k_cut=1):
    """Exact sum over x, y of alpha(x) beta(y) lam(x^T M y), with the
    y-sum restricted to gcd(y1, y2) <= E; optionally the Cauchy-side
    diagnostics T2(alpha; q) and T3."""
    det = mmat[0][0] * mmat[1][1] - mmat[0][1] * mmat[1][0]
    if det not in (1, -1):
        raise NotUnimodular(f"matrix determinant {det}")
    total = 0
    for (y1, y2), bv in beta.items():
        if math.gcd(abs(y1), abs(y2)) > E:
            continue
        c1 = mmat[0][0] * y1 + mmat[0][1] * y2
        c2 = mmat[1][0] * y1 + mmat[1][1] * y2
        for (x1, x2), av in alpha.items():
            lv = lam.get(x1 * c1 + x2 * c2)
            if lv:
                total += av * bv * lv
    if not with_diag:
        return total
    A = max((max(abs(x1), abs(x2)) for (x1, x2) in alpha), default=1)
    B = max((max(abs(y1), abs(y2)) for (y1, y2) in beta), default=1)
    M0 = max(abs(v) for row in mmat for v in row)
    C = max(1, (4 * M0 * A * min(E, B) + B - 1) // max(B, 1))
    t2 = {}
    qmax = min(C * k_cut, 50)
    for q in range(1, qmax + 1):
        t2[q] = t2_diag(alpha, q)
    t3 = sum(q * q * t2[q] for q in t2)
    return {"value": total, "T2": t2, "T3": t3, "C": C, "A": A, "B": B}


def t2_diag(alpha: dict, q: int) -> float:
    """sum over classes u mod q of the max over dyadic squares of
    |sum of alpha over the square in the class|^2."""
    if not alpha:
        return 0.0
    xs = sorted(alpha)
    lo1 = min(x for x, _ in xs)
    hi1 = max(x for x, _ in xs)
    lo2 = min(y for _, y in xs)
    hi2 = max(y for _, y in xs)
    best = {}
    side = 1
    while side <= 2 * max(hi1 - lo1 + 1, hi2 - lo2 + 1):
        a1s = range(lo1, hi1 + 1, max(1, side // 2))
        a2s = range(lo2, hi2 + 1, max(1, side // 2))
        for a1 in a1s:
            for a2 in a2s:
                acc = {}
                for (x1, x2), v in alpha.items():
                    if a1 <= x1 < a1 + side and a2 <= x2 < a2 + side:
                        key = (x1 % q, x2 % q)
                        acc[key] = acc.get(key, 0) + v
                for key, v in acc.items():
                    best[key] = max(best.get(key, 0.0), abs(v) ** 2)
        side *= 2
    return float(sum(best.values()))


# --------------------------------------------------------------------------
# archimedean side
# --------------------------------------------------------------------------


def integral_I(wf: WeightFn, a1, a2, b, rel_tol=5e-3, max_depth=7):
    """Line integral of the weight along a1 x1 + a2 x2 = b, parametrized
    as omega(a2 x, -a1 x + b/a2) (roles swapped when a2 = 0), by adaptive
    Simpson on the support window."""
    if a1 == 0 and a2 == 0:
        raise BothCoeffsZero("line coefficients are both zero")
    swap = a2 == 0
    if swap:
        a1, a2 = a2, a1

    def f(x):
        pt = (a2 * x, -a1 * x + b / a2)
        if swap:
            pt = (pt[1], pt[0])
        return omega(wf, pt)

    lo1, hi1, lo2, hi2 = wf.support_bbox
    if swap:
        lo1, hi1, lo2, hi2 = lo2, hi2, lo1, hi1
    xr = _interval_intersect(a2, lo1, hi1)
    xr2 = _interval_intersect(-a1, lo2 - b / a2, hi2 - b / a2)
    lo = max(xr[0], xr2[0])
    hi = min(xr[1], xr2[1])
    if not (lo < hi):
        return 0.0
    return _adaptive_simpson(f, lo, hi, rel_tol, max_depth)


def _interval_intersect(c, lo, hi):
    if c == 0:
        return (-math.inf, math.inf) if lo <= 0 <= hi else (1.0, 0.0)
    a, b = lo / c, hi / c
    return (min(a, b), max(a, b))


def _adaptive_simpson(f, lo, hi, rel_tol, max_depth, n0=17):
    xs = np.linspace(lo, hi, n0)
    vals = np.array([f(x) for x in xs])
    prev = _simpson(vals, xs[1] - xs[0])
    for _ in range(max_depth):
        xs2 = np.linspace(lo, hi, 2 * (len(xs) - 1) + 1)
        vals2 = np.empty(len(xs2))
        vals2[::2] = vals
        vals2[1::2] = [f(x) for x in xs2[1::2]]
        cur = _simpson(vals2, xs2[1] - xs2[0])
        xs, vals = xs2, vals2
        if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-12):
            return cur
        prev = cur
    return prev


def _simpson(vals, h):
    if len(vals) % 2 == 0:
        head = _simpson(vals[:-1], h)
        return head + 0.5 * h * (vals[-2] + vals[-1])
    return h / 3 * (vals[0] + vals[-1] + 4 * vals[1:-1:2].sum()
                    + 2 * vals[2:-2:2].sum())


@dataclass
class ProjectionData:
    """Shared pieces of the lattice singular-integral sums."""

    x1: np.ndarray               # float image samples
    x2: np.ndarray
    scale: float                 # norm * meas(box) / n_samples
    v_full: np.ndarray           # full-box v lattice
    w_b: np.ndarray              # full-box values b = 2 N_{K/Q}(w)
    w_pts: np.ndarray
    a1: np.ndarray
    a2: np.ndarray


def _projection_data(config: ExperimentConfig, wt: WeightTable):
    ctx = config.ctx
    n = ctx.n
    vpts = _box_lattice(config.v_box(), 1, (0,) * n, n)
    wpts = _box_lattice(config.w_box(), 1, (0,) * n, n)
    if vpts is None or wpts is None:
        raise EmptyBox("singular integral needs nonempty boxes")
    p = ctx.params
    n1 = ctx.n1_form.eval_batch(vpts)
    n2 = ctx.n2_form.eval_batch(vpts)
    a1 = 2 * n1 + p.tr_tau * n2
    a2 = p.tr_tau * n1 + p.tr_tau2 * n2
    b = 2 * ctx.norm_form.eval_batch(wpts)
    ns = min(config.proj_samples, len(wt.samples_x1))
    scale = wt.meas / ns
    return ProjectionData(x1=wt.samples_x1[:ns], x2=wt.samples_x2[:ns],
                          scale=scale, v_full=vpts, w_b=b, w_pts=wpts,
                          a1=a1, a2=a2)


def _proj_sum(pd: ProjectionData, vmask, wmask, bins=4096):
    """sum over masked (v, w) of I(v, w), by binned projection of the
    image samples onto the direction of each distinct coefficient pair.
    Bins are anchored to the full b-range, so class-restricted sums
    partition the full sum exactly."""
    b = pd.w_b[wmask]
    if len(b) == 0:
        return 0.0
    blo, bhi = float(pd.w_b.min()), float(pd.w_b.max())
    width = max((bhi - blo) / bins, 1.0)
    nb = int((bhi - blo) / width) + 2
    wbins = np.bincount(((b - blo) / width).astype(np.int64),
                        minlength=nb).astype(np.float64)
    a1 = pd.a1[vmask]
    a2 = pd.a2[vmask]
    pairs = np.stack([a1, a2], axis=1)
    up, cnt = np.unique(pairs, axis=0, return_counts=True)
    return kernels.proj_bin_many(
        up[:, 0].astype(np.float64), up[:, 1].astype(np.float64),
        cnt.astype(np.float64), pd.x1, pd.x2, wbins,
        blo, width) * pd.scale / width


def sigma_infinity(config: ExperimentConfig, wt: WeightTable,
                   pd: ProjectionData | None = None) -> float:
    """Lattice sum of I(v, w) over the full v and w boxes."""
    pd = pd or _projection_data(config, wt)
    ones_v = np.ones(len(pd.a1), dtype=bool)
    ones_w = np.ones(len(pd.w_b), dtype=bool)
    return _proj_sum(pd, ones_v, ones_w)


def congruence_I_sum(config: ExperimentConfig, wt: WeightTable, D: int,
                     p_cls, q_cls, pd: ProjectionData | None = None):
    """Class-restricted lattice sum of I(v, w) and its comparison against
    D^{-2n} times the full sum."""
    pd = pd or _projection_data(config, wt)
    n = config.ctx.n
    vmask = np.all(pd.v_full % D == np.asarray(p_cls) % D, axis=1)
    wmask = np.all(pd.w_pts % D == np.asarray(q_cls) % D, axis=1)
    val = _proj_sum(pd, vmask, wmask)
    full = _proj_sum(pd, np.ones(len(pd.a1), bool),
                     np.ones(len(pd.w_b), bool))
    scale = D ** (-2 * n + 1) * config.H ** n * config.V ** (2 * n - 1)
    const = abs(val - D ** (-2 * n) * full) / scale
    return {"I_D": val, "I_1": full, "D": D, "deviation_scale": scale,
            "measured_constant": const}


# --------------------------------------------------------------------------
# the report
# --------------------------------------------------------------------------


@dataclass
class CountReport:
    N_direct: int
    N_bilinear: int
    M_main: float
    E_rem: float
    split_gap: float
    sigma_inf: float
    S_truncated: Fraction
    prediction: float
    ratio: float
    Q: int
    kappa: int
    M: int
    diagnostics: dict = field(default_factory=dict)

    def to_jsonable(self):
        return {
            "N_direct": self.N_direct, "N_bilinear": self.N_bilinear,
            "M_main": self.M_main, "E_rem": self.E_rem,
            "split_gap": self.split_gap, "sigma_inf": self.sigma_inf,
            "S_truncated": f"{self.S_truncated.numerator}/"
                           f"{self.S_truncated.denominator}",
            "prediction": self.prediction, "ratio": self.ratio,
            "Q": self.Q, "kappa": self.kappa, "M": self.M,
            "diagnostics": self.diagnostics,
        }


def run_experiment(config: ExperimentConfig, density: DensityReport | None
                   = None, with_dispersion=False, recovery_samples=20
                   ) -> tuple[CountReport, dict]:
    """The full pipeline: family, direct and bilinear counts, singular
    integral and series, prediction, and the exact recovery check on
    sampled triples."""
    from . import approx as apx
    from . import descent

    fam = alpha_family(config.ctx, config.wf, config.mdata, config.Q,
                       push_samples=config.push_samples, cell=config.cell,
                       seed=config.seed + 1)
    bl = beta_lambda(config)
    nd = count_direct(config, fam, bl)
    bil = bilinear_count(config, fam, bl)
    pd = _projection_data(config, fam.wt)
    sinf = sigma_infinity(config, fam.wt, pd)
    if density is None:
        density = singular_series(config.ctx, config.mdata, config.Q,
                                  P0=config.P0, depth=config.depth,
                                  k_cap=config.k_cap)
    kap = config.ctx.params.kappa
    pred = (2**kap * config.mdata.M**config.ctx.n * sinf
            * float(density.s_truncated))
    ratio = nd / pred if pred else math.inf
    diag = {"l2": l2_json(apx.l2_report(fam)),
            "defect": {k: v for k, v in apx.family_defect(fam).items()
                       if k == "max_defect"},
            "beta_key_gcd": bl.max_key_gcd,
            "eps_box": config.eps_box,
            "u_points": fam.n_points,
            "v_points": len(bl.v_rows),
            "w_points": bl.w_count}
    if with_dispersion:
        diag["dispersion"] = apx.dispersion_sum(fam, max(config.Q, 2))
    rec_ok = None
    if recovery_samples:
        triples = sample_solutions(config, fam, bl, k=recovery_samples,
                                   seed=config.seed + 2)
        rec_ok = all(descent.recovered_identity_holds(config.ctx, t)
                     for t in triples)
        diag["recovery_samples"] = len(triples)
        diag["recovery_exact"] = rec_ok
    report = CountReport(
        N_direct=nd, N_bilinear=bil["N_bilinear"], M_main=bil["M_main"],
        E_rem=bil["E_rem"], split_gap=bil["split_gap"], sigma_inf=sinf,
        S_truncated=density.s_truncated, prediction=pred, ratio=ratio,
        Q=config.Q, kappa=kap, M=config.mdata.M, diagnostics=diag)
    return report, {"family": fam, "bl": bl, "density": density, "pd": pd}


def l2_json(d):
    return {k: (float(v) if not isinstance(v, bool) else v)
            for k, v in d.items()}
