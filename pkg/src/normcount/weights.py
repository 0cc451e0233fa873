"""The smooth box weight on the image plane.

A box in u-space is carved out by linear forms: two forms u_i and
u_i + lam*u_j on a pivot pair of coordinates, plus the remaining
coordinates.  The weight at a point x of the image plane is the
(n-2)-dimensional fiber integral of 1/|J| over the w-block, where J is
the pivot Jacobian of the pair map u -> delta*N_{K/L}(u); equivalently,
M^{-n} times the density of the pushforward of Lebesgue measure on the
box.  The normalization M^{-n} matches the per-class lattice density that
the approximation machinery compares against.

Evaluation is midpoint quadrature with a damped 2x2 Newton solve per
node; a seeded Monte Carlo pushforward estimates box measures
independently, and a quasi-Monte Carlo pushforward tabulates the weight
on a cell grid for the counting pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NewtonDivergence, SingularCenter, ValidationError
from .fields import FieldCtx

NEWTON_MAX = 60
NEWTON_DAMP = 0.5


@dataclass
class WeightFn:
    ctx: FieldCtx
    U: float
    G: float
    M: int
    u_center: np.ndarray          # scale-1 center, after any perturbation
    pivot: tuple                  # (i, j): forms are u_i and u_i + lam*u_j
    lam: float
    r: float                      # form-box halfwidth, U/G
    j_min: float                  # recorded min |J| over box samples
    j_scale: float                # j_min / U^(n-2)
    omega_sup: float              # measured sup of the weight
    omega_lb: float               # recorded value at the image center
    support_bbox: tuple           # outer int bounds (x1lo, x1hi, x2lo, x2hi)
    support_radius: float
    nodes: int = 32
    perturbed: bool = False
    p1coef: tuple = field(default=None, repr=False)
    p2coef: tuple = field(default=None, repr=False)
    den: int = 1

    @property
    def norm_const(self) -> float:
        return float(self.M) ** (-self.ctx.n)

    def center_u(self):
        return self.U * self.u_center

    def form_centers(self):
        i, j = self.pivot
        c = self.center_u()
        return c[i], c[i] + self.lam * c[j]

    def coord_ranges(self):
        """Outer coordinate ranges of the box."""
        n = self.ctx.n
        i, j = self.pivot
        c = self.center_u()
        c1, c2 = self.form_centers()
        out = []
        for k in range(n):
            if k == i:
                out.append((c1 - self.r, c1 + self.r))
            elif k == j:
                lo = (c2 - c1 - 2 * self.r) / self.lam
                hi = (c2 - c1 + 2 * self.r) / self.lam
                out.append((min(lo, hi), max(lo, hi)))
            else:
                out.append((c[k] - self.r, c[k] + self.r))
        return out

    def contains(self, pts):
        """Vectorized box membership for an (m, n) array."""
        i, j = self.pivot
        c1, c2 = self.form_centers()
        f1 = pts[:, i]
        f2 = pts[:, i] + self.lam * pts[:, j]
        ok = (np.abs(f1 - c1) < self.r) & (np.abs(f2 - c2) < self.r)
        for k in range(self.ctx.n):
            if k in (i, j):
                continue
            ck = self.center_u()[k]
            ok &= np.abs(pts[:, k] - ck) < self.r
        return ok

    def image_pair(self, pts):
        """delta*N_{K/L} on an (m, n) float array -> (x1, x2) floats."""
        x1 = _eval_float(self.p1coef, pts) / self.den
        x2 = _eval_float(self.p2coef, pts) / self.den
        return x1, x2

    def box_measure(self):
        return (2 * self.r) ** self.ctx.n / abs(self.lam)


def _compile(poly):
    cs, es = poly.compiled()
    return cs.astype(np.float64), es


def _eval_float(compiled, pts):
    cs, es = compiled
    out = np.zeros(pts.shape[0], dtype=np.float64)
    for c, e in zip(cs, es):
        term = np.full(pts.shape[0], c)
        for k in range(pts.shape[1]):
            for _ in range(int(e[k])):
                term *= pts[:, k]
        out += term
    return out


def build_weight(ctx: FieldCtx, U, G, u_center, M=1, nodes=32) -> WeightFn:
    """Choose the pivot pair maximizing |J| at the center, perturb the
    center if a partial of N_{K/Q} vanishes, pick the largest dyadic lam
    passing the implicit-derivative test, and record the J lower bound
    and support bounds."""
    n = ctx.n
    u_center = np.asarray(u_center, dtype=np.float64).copy()
    if len(u_center) != n:
        raise ValidationError("center has wrong dimension")
    nval = ctx.norm_form.eval_batch(u_center[None, :], dtype=np.float64)[0]
    scale = float(np.max(np.abs(u_center))) or 1.0
    if abs(nval) < 1e-12 * scale**n:
        raise SingularCenter("N_{K/Q}(u_center) = 0")

    perturbed = False
    for _ in range(4):
        grad = np.array([g.eval_batch(u_center[None, :], np.float64)[0]
                         for g in ctx.norm_grad])
        if np.all(np.abs(grad) > 1e-9 * scale ** (n - 1)):
            break
        pattern = np.array([((k * 2654435761) % 97 - 48) / 48.0
                            for k in range(n)])
        u_center = u_center * (1 + 1e-6 * pattern) + 1e-7 * scale * pattern
        perturbed = True

    ip1, ip2, den = ctx.delta_norm_polys()
    p1c, p2c = _compile(ip1), _compile(ip2)
    g1 = [_compile(g) for g in ip1.grad()]
    g2 = [_compile(g) for g in ip2.grad()]
    cu = (float(U) * u_center)[None, :]
    d1 = np.array([_eval_float(g, cu)[0] for g in g1]) / den
    d2 = np.array([_eval_float(g, cu)[0] for g in g2]) / den

    best, best_j = None, 0.0
    for i in range(n):
        for j in range(i + 1, n):
            jij = abs(d1[i] * d2[j] - d1[j] * d2[i])
            if jij > best_j:
                best, best_j = (i, j), jij
    if best is None or best_j <= 1e-12 * float(U) ** (2 * (n // 2 - 1)):
        raise SingularCenter("no nonsingular pivot pair at the center")
    i, j = best

    # implicit derivatives dv/dw3 at the center: -Jv^{-1} d(x)/dw3
    w3 = next(k for k in range(n) if k not in (i, j))
    Jv = np.array([[d1[i], d1[j]], [d2[i], d2[j]]])
    rhs = -np.array([d1[w3], d2[w3]])
    dv = np.linalg.solve(Jv, rhs)
    if abs(dv[1]) > abs(dv[0]):
        i, j = j, i          # work with the better-behaved pivot first
        Jv = np.array([[d1[i], d1[j]], [d2[i], d2[j]]])
        dv = np.linalg.solve(Jv, -np.array([d1[w3], d2[w3]]))
    lam = 1.0
    for _ in range(14):
        if abs(dv[0] + lam * dv[1]) >= 0.5 * abs(dv[0]):
            break
        lam *= 0.5
    else:
        raise SingularCenter("no admissible dyadic lam")

    wf = WeightFn(ctx=ctx, U=float(U), G=float(G), M=M, u_center=u_center,
                  pivot=(i, j), lam=lam, r=float(U) / float(G),
                  j_min=0.0, j_scale=0.0, omega_sup=0.0, omega_lb=0.0,
                  support_bbox=(0, 0, 0, 0), support_radius=0.0,
                  nodes=nodes, perturbed=perturbed, p1coef=p1c, p2coef=p2c,
                  den=den)

    # J lower bound over a deterministic box sample
    samples = _box_sample(wf, 512)
    jvals = _jacobian(wf, samples)
    wf.j_min = float(np.min(np.abs(jvals)))
    if wf.j_min <= 0 or np.min(jvals) * np.max(jvals) < 0:
        raise SingularCenter(
            "pivot Jacobian changes sign on the box; increase G")
    wf.j_scale = wf.j_min / float(U) ** (n - 2)

    # outer support bounds by coefficient bounds on the ranges
    ranges = wf.coord_ranges()
    b1 = _poly_range_bound(ip1, ranges) / den
    b2 = _poly_range_bound(ip2, ranges) / den
    pad = 2.0
    wf.support_bbox = (int(math.floor(-b1 - pad)), int(math.ceil(b1 + pad)),
                       int(math.floor(-b2 - pad)), int(math.ceil(b2 + pad)))
    wf.support_radius = float(max(b1, b2) + pad)
    xc1, xc2 = wf.image_pair(wf.center_u()[None, :])
    wf.omega_lb = omega(wf, (float(xc1[0]), float(xc2[0])))
    return wf


def _poly_range_bound(poly, ranges):
    bound = 0.0
    for e, c in poly.coeffs.items():
        t = abs(int(c))
        for k, ek in enumerate(e):
            m = max(abs(ranges[k][0]), abs(ranges[k][1]))
            t *= m**ek
        bound += t
    return bound


def _box_sample(wf: WeightFn, count):
    """Deterministic low-discrepancy sample of the box (corners plus a
    rank-1 lattice)."""
    n = wf.ctx.n
    ranges = wf.coord_ranges()
    g = _r1_generator(n)
    k = np.arange(count)[:, None]
    u01 = (k * g[None, :]) % 1.0
    pts = np.empty((count, n))
    for d in range(n):
        lo, hi = ranges[d]
        pts[:, d] = lo + (hi - lo) * u01[:, d]
    pts = pts[wf.contains(pts)]
    center = wf.center_u()[None, :]
    return np.concatenate([pts, center], axis=0)


def _r1_generator(n):
    # fractional parts of sqrt(primes): a standard rank-1 lattice direction
    ps = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29][:n]
    return np.array([math.sqrt(p) % 1.0 for p in ps])


def _jacobian(wf: WeightFn, pts):
    i, j = wf.pivot
    ip1, ip2, den = wf.ctx.delta_norm_polys()
    g1 = [_compile(g) for g in ip1.grad()]
    g2 = [_compile(g) for g in ip2.grad()]
    a = _eval_float(g1[i], pts) / den
    b = _eval_float(g1[j], pts) / den
    c = _eval_float(g2[i], pts) / den
    d = _eval_float(g2[j], pts) / den
    return a * d - b * c


# --- quadrature evaluation -------------------------------------------------


def omega(wf: WeightFn, x, return_detail=False):
    """Weight at x = (x1, x2): midpoint quadrature over the w-block of
    1/|J| at the Newton solution v(x, w), restricted to fibers whose
    solution lies in the pivot parallelogram.  Nonnegative; exactly 0
    outside the declared support bounds."""
    x1t, x2t = float(x[0]), float(x[1])
    lo1, hi1, lo2, hi2 = wf.support_bbox
    if not (lo1 <= x1t <= hi1 and lo2 <= x2t <= hi2):
        return (0.0, {}) if return_detail else 0.0
    n = wf.ctx.n
    i, j = wf.pivot
    wdims = [k for k in range(n) if k not in (i, j)]
    ranges = wf.coord_ranges()
    K = wf.nodes
    grids = [np.linspace(ranges[k][0], ranges[k][1], K, endpoint=False)
             + (ranges[k][1] - ranges[k][0]) / (2 * K) for k in wdims]
    mesh = np.meshgrid(*grids, indexing="ij")
    wpts = np.stack([m.ravel() for m in mesh], axis=1)
    cellvol = 1.0
    for k in wdims:
        cellvol *= (ranges[k][1] - ranges[k][0]) / K

    vsol, ok, skipped = _newton_fiber(wf, wpts, x1t, x2t)
    inside, margin = _pivot_membership(wf, vsol)
    good = ok & inside
    pts = _assemble(wf, vsol, wpts)
    jv = np.abs(_jacobian(wf, pts))
    dens = np.where(good & (jv > 0), 1.0 / np.maximum(jv, 1e-300), 0.0)

    # refine fibers whose pivot membership is marginal
    cell_r = max((ranges[k][1] - ranges[k][0]) / K for k in wdims)
    margin_tol = cell_r * _dv_dw_scale(wf)
    border = ok & (np.abs(margin) < margin_tol)
    val = float(np.sum(dens)) * cellvol
    if border.any():
        val -= float(np.sum(dens[border])) * cellvol
        val += _refine_cells(wf, wpts[border], x1t, x2t, cellvol,
                             [(ranges[k][1] - ranges[k][0]) / K
                              for k in wdims])
    frac = skipped / max(len(wpts), 1)
    if frac > 0.01:
        raise NewtonDivergence(
            f"{frac:.1%} Newton nodes diverged", failed_frac=frac)
    out = val * wf.norm_const
    wf.omega_sup = max(wf.omega_sup, out)
    if return_detail:
        return out, {"skipped_frac": frac, "nodes": len(wpts)}
    return out


def _dv_dw_scale(wf):
    # |dv/dw| ~ U^{n/2-1} * U / j_min, capped to keep refinement sane
    n = wf.ctx.n
    est = wf.U ** (n / 2 - 1) * 4.0 * wf.U / max(wf.j_min, 1e-12)
    return min(max(est, 1e-3), 1e6)


def _assemble(wf, vsol, wpts):
    n = wf.ctx.n
    i, j = wf.pivot
    wdims = [k for k in range(n) if k not in (i, j)]
    pts = np.empty((len(wpts), n))
    pts[:, i] = vsol[:, 0]
    pts[:, j] = vsol[:, 1]
    for d, k in enumerate(wdims):
        pts[:, k] = wpts[:, d]
    return pts


def _pivot_membership(wf, vsol):
    c1, c2 = wf.form_centers()
    f1 = vsol[:, 0]
    f2 = vsol[:, 0] + wf.lam * vsol[:, 1]
    m1 = wf.r - np.abs(f1 - c1)
    m2 = wf.r - np.abs(f2 - c2)
    margin = np.minimum(m1, m2)
    return margin > 0, margin


def _newton_fiber(wf, wpts, x1t, x2t, max_iter=NEWTON_MAX):
    """Solve delta*N(v, w) = x for the pivot coordinates at every w node.
    Returns (solutions, converged mask, diverged count)."""
    n = wf.ctx.n
    i, j = wf.pivot
    cu = wf.center_u()
    vsol = np.tile(np.array([cu[i], cu[j]]), (len(wpts), 1))
    tol = 1e-10 * wf.U ** (n / 2)
    ip1, ip2, den = wf.ctx.delta_norm_polys()
    g1 = [_compile(g) for g in ip1.grad()]
    g2 = [_compile(g) for g in ip2.grad()]
    p1c, p2c = wf.p1coef, wf.p2coef
    active = np.ones(len(wpts), dtype=bool)
    prev = np.full(len(wpts), np.inf)
    diverged = np.zeros(len(wpts), dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        pts = _assemble(wf, vsol, wpts)[active]
        r1 = _eval_float(p1c, pts) / den - x1t
        r2 = _eval_float(p2c, pts) / den - x2t
        res = np.maximum(np.abs(r1), np.abs(r2))
        a = _eval_float(g1[i], pts) / den
        b = _eval_float(g1[j], pts) / den
        c = _eval_float(g2[i], pts) / den
        d = _eval_float(g2[j], pts) / den
        det = a * d - b * c
        bad = np.abs(det) < 1e-14 * wf.U ** (n - 2)
        det = np.where(bad, np.inf, det)
        s1 = (d * r1 - b * r2) / det
        s2 = (a * r2 - c * r1) / det
        damp = np.where(res > prev[active], NEWTON_DAMP, 1.0)
        idx = np.nonzero(active)[0]
        vsol[idx, 0] -= damp * s1
        vsol[idx, 1] -= damp * s2
        prev[idx] = res
        done = res <= tol
        blown = (np.abs(vsol[idx]).max(axis=1) > 16 * wf.U + 1e9) | \
            np.isnan(res) | bad
        diverged[idx[blown]] = True
        active[idx[done | blown]] = False
    conv = prev <= tol
    return vsol, conv, int(np.sum(diverged))


def _refine_cells(wf, wcenters, x1t, x2t, cellvol, widths, sub=4):
    """Re-integrate marginal fibers on a sub-grid."""
    if len(wcenters) == 0:
        return 0.0
    dims = len(widths)
    offs = [(np.arange(sub) + 0.5) / sub - 0.5 for _ in range(dims)]
    mesh = np.meshgrid(*offs, indexing="ij")
    off = np.stack([m.ravel() for m in mesh], axis=1)
    subpts = (wcenters[:, None, :] +
              off[None, :, :] * np.asarray(widths)[None, None, :])
    subpts = subpts.reshape(-1, dims)
    vsol, ok, _ = _newton_fiber(wf, subpts, x1t, x2t)
    inside, _ = _pivot_membership(wf, vsol)
    pts = _assemble(wf, vsol, subpts)
    jv = np.abs(_jacobian(wf, pts))
    dens = np.where(ok & inside & (jv > 0), 1.0 / np.maximum(jv, 1e-300), 0.0)
    return float(np.sum(dens)) * cellvol / sub**dims


# --- Monte Carlo measure oracle -------------------------------------------


def omega_box_mc(wf: WeightFn, R, samples: int, seed: int):
    """Seeded Monte Carlo estimate of M^{-n} * meas{u in box:
    delta N_{K/L}(u) in R}, with a standard-error estimate.
    R = (x1lo, x1hi, x2lo, x2hi)."""
    if samples < 10**4:
        raise ValidationError("need at least 1e4 samples")
    rng = np.random.default_rng(seed)
    n = wf.ctx.n
    i, j = wf.pivot
    c1, c2 = wf.form_centers()
    cu = wf.center_u()
    hits = 0
    total = 0
    x1lo, x1hi, x2lo, x2hi = (float(t) for t in R)
    chunk = 1 << 18
    left = samples
    while left > 0:
        m = min(chunk, left)
        left -= m
        pts = np.empty((m, n))
        f1 = c1 + wf.r * (2 * rng.random(m) - 1)
        f2 = c2 + wf.r * (2 * rng.random(m) - 1)
        pts[:, i] = f1
        pts[:, j] = (f2 - f1) / wf.lam
        for k in range(n):
            if k not in (i, j):
                pts[:, k] = cu[k] + wf.r * (2 * rng.random(m) - 1)
        x1, x2 = wf.image_pair(pts)
        hits += int(np.sum((x1 >= x1lo) & (x1 <= x1hi)
                           & (x2 >= x2lo) & (x2 <= x2hi)))
        total += m
    p = hits / total
    meas = wf.box_measure() * wf.norm_const
    # Poisson-type error estimate, nondegenerate at zero hits
    se = meas * math.sqrt((hits + 1.0) * max(1 - p, 1e-12)) / total
    return meas * p, se


def omega_square_quad(wf: WeightFn, R, outer=24):
    """Tensor quadrature of the weight over the square R."""
    x1lo, x1hi, x2lo, x2hi = (float(t) for t in R)
    xs = np.linspace(x1lo, x1hi, outer, endpoint=False) + \
        (x1hi - x1lo) / (2 * outer)
    ys = np.linspace(x2lo, x2hi, outer, endpoint=False) + \
        (x2hi - x2lo) / (2 * outer)
    cell = (x1hi - x1lo) * (x2hi - x2lo) / outer**2
    tot = 0.0
    for xv in xs:
        for yv in ys:
            tot += omega(wf, (xv, yv))
    return tot * cell


# --- QMC pushforward table -------------------------------------------------


@dataclass
class WeightTable:
    t1lo: int
    t2lo: int
    cell: int
    table: np.ndarray            # weight density per cell
    samples_x1: np.ndarray       # float image samples (subsampled)
    samples_x2: np.ndarray
    n_samples: int
    meas: float                  # M^{-n} * box measure


def pushforward_table(wf: WeightFn, cell=32, n_samples=2 * 10**7,
                      seed=1, keep_samples=200_000) -> WeightTable:
    """Tabulate the weight on a cell grid by quasi-Monte Carlo pushforward
    of the box measure; also keeps a float subsample of the image for
    projection sums."""
    n = wf.ctx.n
    i, j = wf.pivot
    c1, c2 = wf.form_centers()
    cu = wf.center_u()
    lo1, hi1, lo2, hi2 = wf.support_bbox
    t1lo = (lo1 // cell) * cell
    t2lo = (lo2 // cell) * cell
    h = (hi1 - t1lo) // cell + 1
    w = (hi2 - t2lo) // cell + 1
    bins = np.zeros(h * w, dtype=np.int64)
    g = _r1_generator(n)
    shift = ((seed * 0.6180339887498949) % 1.0) * np.ones(n)
    keep1 = []
    keep2 = []
    stride = max(1, n_samples // max(keep_samples, 1))
    chunk = 1 << 19
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        k = (np.arange(done, done + m, dtype=np.float64))[:, None]
        u01 = (k * g[None, :] + shift[None, :]) % 1.0
        pts = np.empty((m, n))
        f1 = c1 + wf.r * (2 * u01[:, 0] - 1)
        f2 = c2 + wf.r * (2 * u01[:, 1] - 1)
        pts[:, i] = f1
        pts[:, j] = (f2 - f1) / wf.lam
        col = 2
        for kk in range(n):
            if kk not in (i, j):
                pts[:, kk] = cu[kk] + wf.r * (2 * u01[:, col] - 1)
                col += 1
        x1, x2 = wf.image_pair(pts)
        i1 = ((x1 - t1lo) // cell).astype(np.int64)
        i2 = ((x2 - t2lo) // cell).astype(np.int64)
        inb = (i1 >= 0) & (i1 < h) & (i2 >= 0) & (i2 < w)
        bins += np.bincount(i1[inb] * w + i2[inb], minlength=h * w)
        keep1.append(x1[::stride].copy())
        keep2.append(x2[::stride].copy())
        done += m
    meas = wf.box_measure() * wf.norm_const
    dens = bins.reshape(h, w).astype(np.float64) * \
        (meas / (n_samples * cell * cell))
    # crop to the occupied cells (plus one cell of padding); removed
    # cells are exactly zero so all lookups are unchanged
    nz = np.nonzero(dens)
    if len(nz[0]):
        r0 = max(int(nz[0].min()) - 1, 0)
        r1 = min(int(nz[0].max()) + 2, h)
        c0 = max(int(nz[1].min()) - 1, 0)
        c1 = min(int(nz[1].max()) + 2, w)
        dens = np.ascontiguousarray(dens[r0:r1, c0:c1])
        t1lo += r0 * cell
        t2lo += c0 * cell
    return WeightTable(t1lo=t1lo, t2lo=t2lo, cell=cell, table=dens,
                       samples_x1=np.concatenate(keep1),
                       samples_x2=np.concatenate(keep2),
                       n_samples=n_samples, meas=meas)
