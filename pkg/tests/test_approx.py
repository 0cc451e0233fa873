import math
from fractions import Fraction

import numpy as np
import pytest

from normcount import approx as apx
from normcount.arith import mobius
from normcount.quad_ring import FieldParams

rng = np.random.default_rng(23)


def test_khat_Q1_is_omega():
    N = 40
    k = rng.standard_normal(N)
    omega = rng.uniform(0.5, 1.5, N)
    sch = apx.SchemeZ(N=N, k=k, rho={(0, 1): Fraction(1)}, omega=omega,
                      Q=1, E=Fraction(1), W=Fraction(1))
    kh = apx.khat_Z(sch)
    assert np.allclose(kh.real, omega) and np.allclose(kh.imag, 0)


def test_khat_vonmangoldt_closed_form():
    # with rho(a,q) = 1/phi(q) on coprime classes the resampled weight is
    # the classical truncated major-arc weight sum_q mu(q)/phi(q) sum* e
    N, Q = 60, 5
    rho = {}
    for q in range(1, Q + 1):
        phi = sum(1 for a in range(q) if math.gcd(a, q) == 1)
        for a in range(q):
            rho[(a, q)] = Fraction(1, phi) if math.gcd(a, q) == 1 \
                else Fraction(0)
    sch = apx.SchemeZ(N=N, k=np.ones(N), rho=rho, omega=np.ones(N), Q=Q,
                      E=Fraction(1), W=Fraction(1))
    kh = apx.khat_Z(sch)
    for n in range(1, N + 1):
        direct = 0.0
        for q in range(1, Q + 1):
            phi = sum(1 for a in range(q) if math.gcd(a, q) == 1)
            ram = sum(math.cos(2 * math.pi * a * n / q)
                      for a in range(q) if math.gcd(a, q) == 1)
            direct += mobius(q) / phi * ram
        assert abs(kh[n - 1].real - direct) < 1e-8
        assert abs(kh[n - 1].imag) < 1e-9


def test_khat_depends_only_on_rho_omega_Q():
    N = 36
    m = 3
    f = np.array([2.0, 0.0, 1.0])
    k1 = f[np.arange(1, N + 1) % m]
    sch1 = apx.synthetic_scheme_Z(m, N // m, np.random.default_rng(1))
    sch2 = apx.SchemeZ(N=sch1.N, k=rng.standard_normal(sch1.N),
                       rho=sch1.rho, omega=sch1.omega, Q=sch1.Q,
                       E=sch1.E, W=sch1.W)
    assert np.allclose(apx.khat_Z(sch1), apx.khat_Z(sch2))


def test_exact_density_periodic_defect_zero():
    # k(n) periodic mod 3 with exact densities: the class sums at h = 1, 3
    # are reproduced exactly
    reps = 12
    sch = apx.synthetic_scheme_Z(3, reps, np.random.default_rng(8))
    kh = apx.khat_Z(sch)
    for h in (1, 3):
        s = apx.class_sums_Z(sch.k, h)
        sh = apx.class_sums_Z(kh, h)
        assert np.max(np.abs(s - sh)) < 1e-7


def test_defect_caps_Z():
    for i in range(5):
        g = np.random.default_rng(100 + i)
        sch = apx.synthetic_scheme_Z(int(g.integers(3, 9)),
                                     int(g.integers(4, 9)), g)
        res = apx.defect_Z(sch)
        assert res["within_cap"], (res["max_defect"], res["cap"])


def test_defect_caps_OL():
    params = FieldParams.for_a(-1)
    for i in range(3):
        g = np.random.default_rng(200 + i)
        sch = apx.synthetic_scheme_OL(params, int(g.integers(2, 5)),
                                      int(g.integers(2, 4)), g)
        res = apx.defect_OL(sch)
        assert res["within_cap"], (res["max_defect"], res["cap"])


def test_large_sieve_instances():
    params = FieldParams.for_a(-1)
    for (N, Q) in [(3, 2), (4, 3), (6, 4)]:
        res = apx.large_sieve_check_Z2(N, Q, params,
                                       np.random.default_rng(N * Q))
        assert res["ok"]


def test_vonmangoldt_demo_small():
    rep = apx.vonmangoldt_demo(200000, 1.2)
    # Chebyshev scale: total Lambda mass within 15% of x
    assert abs(rep["chebyshev_total"] - rep["N"]) < 0.15 * rep["N"]
    assert rep["max_class_deviation"] < 0.2 * rep["N"]


def test_vonmangoldt_parity_classes():
    # near-equal mass in the two odd classes mod 4
    import numpy as np
    from normcount.arith import primes_upto
    N = 200000
    lam = np.zeros(N + 1)
    for p in primes_upto(N):
        pk = p
        while pk <= N:
            lam[pk] = math.log(p)
            pk *= p
    m1 = lam[1::4].sum()
    m3 = lam[3::4].sum()
    assert abs(m1 - m3) < 0.05 * (m1 + m3)


def test_arithmetic_factor_zeta8(zeta8, zeta8_mdata):
    ktab, lq, exact = apx.arithmetic_factor_table(zeta8, zeta8_mdata, 2)
    assert lq == 2 and exact
    # the factor localizes on the class of delta N(u_class) mod 2
    z = zeta8.relnorm_kl(list(zeta8_mdata.u_class))
    z0 = (int(z.c1) % 2, int(z.c2) % 2)
    for r1 in range(2):
        for r2 in range(2):
            want = 4.0 if (r1, r2) == z0 else 0.0
            assert ktab[r1, r2] == pytest.approx(want, abs=1e-12)


def test_alpha_family_basic(zeta8, micro_config, micro_family):
    fam = micro_family
    assert int(fam.counts.sum()) == fam.n_points
    # pointwise split: alpha0 = alpha - alpha_hat by construction
    i = len(fam.keys1) // 2
    x1, x2 = int(fam.keys1[i]), int(fam.keys2[i])
    assert fam.alpha(x1, x2) >= 1
    assert fam.alpha0(x1, x2) == fam.alpha(x1, x2) - fam.alpha_hat(x1, x2)
    assert fam.alpha(10**7, 10**7) == 0


def test_alpha_family_mass_matches_table(micro_family):
    # total approximant mass tracks the point count; at micro scale the
    # class-lattice count fluctuates around measure/M^n at the boundary
    # scale n * M / side
    fam = micro_family
    tab_mass = float(np.sum(fam.wt.table)) * fam.wt.cell**2 \
        * float(np.mean(fam.ktab))
    side = 2 * fam.wf.r
    tol = 4 * fam.ctx.n * fam.mdata.M / side
    assert abs(tab_mass - fam.n_points) / fam.n_points < tol


def test_alpha_multiplicity_bounded(micro_family):
    # representation numbers stay at divisor-bound scale on the fixture
    assert int(micro_family.counts.max()) <= 32


def test_empty_box(zeta8):
    from normcount.approx import alpha_family
    from normcount.densities import MData
    from normcount.errors import EmptyBox
    from normcount.weights import build_weight
    wf = build_weight(zeta8, 6.0, 24.0, np.array([1.0, 0.21, 0.13, 0.17]))
    with pytest.raises(EmptyBox):
        alpha_family(zeta8, wf, MData.trivial(4), 1, push_samples=10**4)


def test_l2_report(micro_family):
    rep = apx.l2_report(micro_family)
    assert rep["sum_alpha_sq"] >= micro_family.n_points
    assert rep["sum_alpha_hat_sq"] > 0
    assert rep["parallelogram_ok"]
    assert rep["sum_alpha0_sq"] <= 2 * rep["sum_alpha_sq"] + \
        2 * rep["sum_alpha_hat_sq"] + 1e-6


def test_family_defect_runs(micro_family):
    res = apx.family_defect(micro_family)
    assert res["max_defect"] >= 0
    hs = {r["h"] for r in res["rows"]}
    assert 1 in hs and 2 in hs


def test_dispersion_zero_remainder(zeta8, micro_config, micro_family):
    import copy
    fam = copy.copy(micro_family)
    fam.keys1 = np.zeros(0, dtype=np.int64)
    fam.keys2 = np.zeros(0, dtype=np.int64)
    fam.counts = np.zeros(0, dtype=np.int64)
    fam.__post_init__()
    wt = copy.copy(fam.wt)
    wt.table = np.zeros_like(fam.wt.table)
    fam.wt = wt
    res = apx.dispersion_sum(fam, 2)
    assert res["value"] == 0.0


def test_dispersion_below_trivial(micro_family):
    res = apx.dispersion_sum(micro_family, 2)
    assert 0 <= res["value"] < res["trivial_bound"]
    assert "grid_note" in res


def test_dispersion_growth_monitored(micro_family):
    v2 = apx.dispersion_sum(micro_family, 2)["value"]
    v4 = apx.dispersion_sum(micro_family, 4)["value"]
    assert v4 >= v2  # more moduli, larger sum
