"""Pure numpy fallback implementations of the hot kernels.

Semantics must match normcount._kernels exactly; tests compare the two
backends on random inputs.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def pair_correlate(x1, x2, wt, a1, a2, lam, lo):
    """sum_i wt[i] * lam[a1*x1[i] + a2*x2[i] - lo], with out-of-range
    indices contributing 0.  lam is a dense int32 table."""
    t = a1 * x1.astype(np.int64) + a2 * x2.astype(np.int64)
    idx = t - lo
    ok = (idx >= 0) & (idx < lam.shape[0])
    if not ok.any():
        return 0
    return int(np.sum(lam[idx[ok]].astype(np.int64) * wt[ok].astype(np.int64)))


def line_sum(bp, bcnt, abar1, abar2, d1, d2,
             x1lo, x1hi, x2lo, x2hi,
             table, t1lo, t2lo, cell, ktab, lq):
    """For each b in bp: walk the lattice points x = (abar1*b + m*d1,
    abar2*b + m*d2) inside the bounding box, accumulate
    table[(x1-t1lo)//cell, (x2-t2lo)//cell] * ktab[x1 % lq, x2 % lq],
    weight the per-b total by bcnt[b], and return the grand total."""
    bp = bp.astype(np.int64)
    X10 = abar1 * bp
    X20 = abar2 * bp
    mlo, mhi = _m_ranges(X10, X20, d1, d2, x1lo, x1hi, x2lo, x2hi)
    lens = np.maximum(mhi - mlo + 1, 0)
    keep = lens > 0
    if not keep.any():
        return 0.0
    X10, X20, mlo = X10[keep], X20[keep], mlo[keep]
    lens = lens[keep]
    w = bcnt[keep].astype(np.float64)
    total = int(lens.sum())
    starts = np.zeros(len(lens), dtype=np.int64)
    np.cumsum(lens[:-1], out=starts[1:])
    flat = np.arange(total, dtype=np.int64)
    rep = np.repeat(np.arange(len(lens)), lens)
    m = flat - starts[rep] + mlo[rep]
    x1 = X10[rep] + m * d1
    x2 = X20[rep] + m * d2
    vals = table[(x1 - t1lo) // cell, (x2 - t2lo) // cell]
    vals = vals * ktab[x1 % lq, x2 % lq]
    out = np.zeros(len(lens), dtype=np.float64)
    np.add.at(out, rep, vals)
    return float(np.dot(out, w))


def _m_ranges(X10, X20, d1, d2, x1lo, x1hi, x2lo, x2hi):
    big = np.int64(2**62)
    mlo = np.full(X10.shape, -big, dtype=np.int64)
    mhi = np.full(X10.shape, big, dtype=np.int64)

    def clamp(x0, d, lo, hi):
        nonlocal mlo, mhi
        if d > 0:
            mlo = np.maximum(mlo, -(-(lo - x0) // d))
            mhi = np.minimum(mhi, (hi - x0) // d)
        elif d < 0:
            mlo = np.maximum(mlo, -(-(hi - x0) // d))
            mhi = np.minimum(mhi, (lo - x0) // d)
        else:
            bad = (x0 < lo) | (x0 > hi)
            mhi = np.where(bad, mlo - 1, mhi)

    clamp(X10, d1, x1lo, x1hi)
    clamp(X20, d2, x2lo, x2hi)
    return mlo, mhi


def proj_bin_many(a1, a2, vw, x1, x2, wbins, lo, width):
    """sum over rows v and samples s of
    vw[v] * wbins[floor((a1[v]*x1[s] + a2[v]*x2[s] - lo)/width)], with
    out-of-range bins contributing 0."""
    nb = wbins.shape[0]
    acc = 0.0
    chunk = max(1, int(4e6 // max(len(x1), 1)))
    for s in range(0, len(a1), chunk):
        e = min(s + chunk, len(a1))
        t = a1[s:e, None] * x1[None, :] + a2[s:e, None] * x2[None, :]
        idx = np.floor((t - lo) / width).astype(np.int64)
        ok = (idx >= 0) & (idx < nb)
        idx[~ok] = 0
        vals = wbins[idx]
        vals[~ok] = 0.0
        acc += float(np.dot(vw[s:e], vals.sum(axis=1)))
    return acc
