import math
import numpy as np
import pytest

from normcount import counting as ct
from normcount.counting import (beta_lambda, bilinear_count,
                                bilinear_general, brute_force_triple_count,
                                coeffs_ab, congruence_I_sum, count_direct,
                                integral_I, make_experiment, sigma_infinity)
from normcount.errors import (BadCongruence, CenterOnNullcone,
                              NotUnimodular, ValidationError)
from normcount.quad_ring import QuadElem, mul as qmul, trace as qtrace


def test_make_experiment_fixture(zeta8):
    cfg = make_experiment(zeta8, V=21, H0=3, G=4.0, seed=0)
    assert cfg.mdata.M == 2 and cfg.Q == 2
    assert cfg.U == 189 and cfg.Wscale == 63
    assert cfg.eps_box >= 1 / cfg.G


def test_make_experiment_validations(zeta8):
    with pytest.raises(BadCongruence):
        make_experiment(zeta8, V=21, H0=2, G=4.0)    # H0 even, M = 2
    with pytest.raises(BadCongruence):
        make_experiment(zeta8, V=20, H0=3, G=4.0)    # V even
    with pytest.raises(ValidationError):
        make_experiment(zeta8, V=5, H0=3, G=4.0)     # V < H
    with pytest.raises(CenterOnNullcone):
        make_experiment(zeta8, V=9, H0=1, G=3.0,
                        w_center=np.zeros(4))


def test_coeffs_ab(zeta8):
    # a = -1: tr tau = 0, tr tau^2 = -2
    v = [2, 1, -1, 3]
    nv = zeta8.relnorm_kl(v)
    a1, a2, b, kap = coeffs_ab(zeta8, v, [1, 0, 0, 0])
    assert (a1, a2) == (2 * nv.c1, -2 * nv.c2)
    assert b == 2 and kap == 1
    a1, a2, b, _ = coeffs_ab(zeta8, [1, 0, 0, 0], [2, 0, 0, 0])
    assert (a1, a2) == (2, 0) and b == 2 * 16


def test_coeffs_gcd_is_two_to_kappa(zeta8, micro_config, micro_bl):
    # under the coprimality condition and the augmented class data
    found = 0
    for a1p, a2p, ec in micro_bl.v_rows:
        if ec:
            assert math.gcd(int(a1p), int(a2p)) == 1
            found += 1
    assert found > 0


def test_beta_lambda_contents(zeta8, micro_config, micro_bl):
    bl = micro_bl
    # beta total = number of coprimality-passing class points
    assert sum(bl.beta.values()) == int(bl.v_rows[:, 2].sum())
    # every lambda key is even (the factor 2 in the target)
    assert all(k % 2 == 0 for k in bl.lam)
    assert sum(bl.lam.values()) == bl.w_count
    assert bl.max_key_gcd >= 2  # keys carry the 2 from D_L


def test_beta_key_formula(zeta8, micro_config, micro_bl):
    # keys are (N(v) D)^sigma = (a2, -a1)
    md = micro_config.mdata
    from normcount.counting import _box_lattice
    vpts = _box_lattice(micro_config.v_box(), md.M, md.v_class, 4)
    for v in vpts[:8]:
        nv = zeta8.relnorm_kl([int(c) for c in v])
        if math.gcd(int(nv.c1), int(nv.c2)) != 1:
            continue
        d = zeta8.params.d_l()
        y = qmul(nv, d, zeta8.params)
        ys = QuadElem(y.c1 + y.c2 * zeta8.params.tr_tau, -y.c2)
        a1, a2, _, _ = coeffs_ab(zeta8, [int(c) for c in v], [1, 0, 0, 0])
        assert ys == QuadElem(a2, -a1)
        assert ys in micro_bl.beta


def test_skew_trace_equation_equivalence(zeta8):
    # pairing against (N(v) D)^sigma equals the plain trace of the product
    from normcount.quad_ring import skew_trace
    g = np.random.default_rng(2)
    d = zeta8.params.d_l()
    for _ in range(1000):
        u = [int(t) for t in g.integers(-9, 10, 4)]
        v = [int(t) for t in g.integers(-9, 10, 4)]
        x = zeta8.relnorm_kl(u)
        nv = zeta8.relnorm_kl(v)
        y = qmul(nv, d, zeta8.params)
        ysig = QuadElem(y.c1 + y.c2 * zeta8.params.tr_tau, -y.c2)
        assert skew_trace(x, ysig, zeta8.params) == \
            qtrace(qmul(x, nv, zeta8.params), zeta8.params)


def test_micro_oracle_equivalence(zeta8, micro_config, micro_family,
                                  micro_bl):
    nd = count_direct(micro_config, micro_family, micro_bl)
    brute = brute_force_triple_count(micro_config, econd=False)
    assert nd == brute
    bil = bilinear_count(micro_config, micro_family, micro_bl)
    bruteE = brute_force_triple_count(micro_config, econd=True)
    assert bil["N_bilinear"] == bruteE
    assert bil["split_ok"]
    assert nd >= bil["N_bilinear"]
    assert nd > 0


def test_bilinear_general_matches_fixture(zeta8, micro_family, micro_bl):
    alpha = {(int(a), int(b)): int(c) for a, b, c in
             zip(micro_family.keys1, micro_family.keys2,
                 micro_family.counts)}
    beta = {(int(k.c1), int(k.c2)): v for k, v in micro_bl.beta.items()}
    lam = dict(micro_bl.lam)
    mm = [[0, -1], [1, 0]]
    val = bilinear_general(alpha, beta, lam, mm, E=micro_bl.max_key_gcd)
    bil = bilinear_count(None, micro_family, micro_bl)
    assert val == bil["N_bilinear"]


def test_bilinear_general_basics():
    assert bilinear_general({(1, 2): 1}, {(0, 1): 1}, {}, [[0, -1], [1, 0]]) \
        == 0
    with pytest.raises(NotUnimodular):
        bilinear_general({}, {}, {}, [[2, 0], [0, 1]])
    # brute triple check on random dicts
    g = np.random.default_rng(4)
    for _ in range(20):
        alpha = {(int(a), int(b)): int(c) for a, b, c in
                 g.integers(-6, 7, (8, 3))}
        beta = {(int(a), int(b)): int(c) for a, b, c in
                g.integers(-6, 7, (8, 3))}
        lam = {int(v): int(c) for v, c in g.integers(-40, 40, (10, 2))}
        E = int(g.integers(1, 4))
        got = bilinear_general(alpha, beta, lam, [[0, -1], [1, 0]], E=E)
        want = 0
        for (x1, x2), av in alpha.items():
            for (y1, y2), bv in beta.items():
                if math.gcd(abs(y1), abs(y2)) > E:
                    continue
                want += av * bv * lam.get(x1 * -y2 + x2 * y1, 0)
        assert got == want


def test_bilinear_general_diagnostics():
    alpha = {(i, j): 1 for i in range(4) for j in range(4)}
    res = bilinear_general(alpha, {(1, 0): 1}, {0: 1}, [[0, -1], [1, 0]],
                           with_diag=True)
    assert res["T3"] >= 0 and res["T2"][1] >= 0
    assert res["value"] == 4  # pairs with x2 * 1 - x1 * 0 ... x^T M y = x2


def test_integral_I_properties(zeta8, micro_config):
    wf = micro_config.wf
    x1, x2 = wf.image_pair(wf.center_u()[None, :])
    # a line far away from the support misses it
    far = integral_I(wf, 1, 1, 10 * (abs(float(x1[0])) + wf.support_radius))
    assert far == 0.0
    # a line through the center image is positive and bounded
    v = [micro_config.V, 0, 0, 0]
    w = [int(round(micro_config.Wscale * micro_config.w_r[0])), 0, 0, 0]
    a1, a2, b, _ = coeffs_ab(zeta8, v, w)
    val = integral_I(wf, a1, a2, b)
    assert val >= 0
    lo1, hi1, _, _ = wf.support_bbox
    assert val <= max(wf.omega_sup, 1.0) * (hi1 - lo1) / max(abs(a2), 1)


def test_integral_I_monte_carlo(zeta8, micro_config):
    from normcount.errors import BothCoeffsZero
    wf = micro_config.wf
    with pytest.raises(BothCoeffsZero):
        integral_I(wf, 0, 0, 5)
    v = [micro_config.V, 0, 1, 0]    # N2(v) != 0 so a2 != 0
    w = [int(round(micro_config.Wscale * micro_config.w_r[0])), 0, 0, 0]
    a1, a2, b, _ = coeffs_ab(zeta8, v, w)
    assert a2 != 0
    val = integral_I(wf, a1, a2, b, rel_tol=1e-3)
    # Monte Carlo line integral
    from normcount.weights import omega
    rng = np.random.default_rng(9)
    lo1, hi1, lo2, hi2 = wf.support_bbox
    xr = sorted((lo1 / a2, hi1 / a2))
    n = 400
    xs = rng.uniform(xr[0], xr[1], n)
    vals = np.array([omega(wf, (a2 * x, -a1 * x + b / a2)) for x in xs])
    mc = float(vals.mean()) * (xr[1] - xr[0])
    se = float(vals.std(ddof=1)) / math.sqrt(n) * (xr[1] - xr[0])
    assert abs(val - mc) <= 3 * max(se, 1e-6 * abs(val) + 1e-12)


@pytest.fixture(scope="module")
def tiny_sigma(zeta8):
    """A very small experiment for the archimedean oracle checks."""
    uc = np.array([1.0, 0.3, -0.25, 0.2])
    cfg = make_experiment(zeta8, V=5, H0=1, G=2.4, u_center=uc, seed=7,
                          push_samples=2 * 10**6, proj_samples=150_000)
    cfg.wf.nodes = 12   # cheap fiber quadrature for the oracle integrals
    from normcount.weights import pushforward_table
    wt = pushforward_table(cfg.wf, cell=32, n_samples=2 * 10**6, seed=8)
    return cfg, wt


def test_sigma_infinity_vs_direct(zeta8, tiny_sigma):
    # the projection sum is linear over v and w separately, so comparing
    # a masked sub-sum against the direct lattice sum of line integrals
    # exercises the whole mechanism
    cfg, wt = tiny_sigma
    pd = ct._projection_data(cfg, wt)
    rng = np.random.default_rng(17)
    vmask = np.zeros(len(pd.a1), dtype=bool)
    wmask = np.zeros(len(pd.w_b), dtype=bool)
    vmask[rng.choice(len(vmask), size=min(10, len(vmask)), replace=False)] \
        = True
    wmask[rng.choice(len(wmask), size=min(16, len(wmask)), replace=False)] \
        = True
    got = ct._proj_sum(pd, vmask, wmask)
    direct = 0.0
    for i in np.nonzero(vmask)[0]:
        for j in np.nonzero(wmask)[0]:
            direct += integral_I(cfg.wf, int(pd.a1[i]), int(pd.a2[i]),
                                 int(pd.w_b[j]), rel_tol=1e-3)
    assert direct > 0
    assert abs(got - direct) / direct < 0.02
    full = sigma_infinity(cfg, wt, pd)
    assert full >= got > 0


def test_congruence_partition(zeta8, tiny_sigma):
    cfg, wt = tiny_sigma
    pd = ct._projection_data(cfg, wt)
    full = sigma_infinity(cfg, wt, pd)
    total = 0.0
    D = 2
    for pc in range(D**4):
        p_cls = [(pc >> k) & 1 for k in range(4)]
        for qc in range(D**4):
            q_cls = [(qc >> k) & 1 for k in range(4)]
            r = congruence_I_sum(cfg, wt, D, p_cls, q_cls, pd)
            total += r["I_D"]
    assert abs(total - full) <= 1e-6 * abs(full)


def test_count_direct_budget(zeta8, micro_config, micro_family, micro_bl):
    from normcount.errors import Budget
    import dataclasses
    small = dataclasses.replace(micro_config, budget=10)
    with pytest.raises(Budget):
        count_direct(small, micro_family, micro_bl)


def test_bad_congruence_classes(zeta8):
    from normcount.densities import MData
    bad = MData(2, (0, 0, 0, 0), (1, 0, 0, 0), (1, 0, 0, 0))
    with pytest.raises(BadCongruence):
        make_experiment(zeta8, V=9, H0=1, G=3.0, mdata=bad)


def test_remainder_shrinks_with_Q(zeta8):
    # the approximant at Q = 2 knows the mod-2 localization that Q = 1
    # misses, so the remainder mass drops
    uc = np.array([1.0, 0.35, -0.2, 0.3])
    rem = {}
    for Q in (1, 2):
        cfg = make_experiment(zeta8, V=9, H0=1, G=3.1, u_center=uc,
                              seed=3, Q=Q, push_samples=6 * 10**5)
        from normcount.approx import alpha_family
        fam = alpha_family(zeta8, cfg.wf, cfg.mdata, Q,
                           push_samples=6 * 10**5, seed=4)
        bl = beta_lambda(cfg)
        bil = bilinear_count(cfg, fam, bl)
        rem[Q] = abs(bil["E_rem"])
    assert rem[2] < rem[1]


def test_count_direct_monotone_in_G(zeta8):
    uc = np.array([1.0, 0.35, -0.2, 0.3])
    counts = []
    for G in (3.4, 3.1, 2.8):   # shrinking G grows the boxes
        cfg = make_experiment(zeta8, V=9, H0=1, G=G, u_center=uc, seed=3,
                              push_samples=3 * 10**5)
        from normcount.approx import alpha_family
        fam = alpha_family(zeta8, cfg.wf, cfg.mdata, cfg.Q,
                           push_samples=3 * 10**5, seed=3)
        bl = beta_lambda(cfg)
        counts.append(count_direct(cfg, fam, bl))
    assert counts[0] <= counts[1] <= counts[2]


def test_run_experiment_micro(zeta8):
    from normcount.counting import run_experiment
    uc = np.array([1.0, 0.35, -0.2, 0.3])
    cfg = make_experiment(zeta8, V=9, H0=1, G=3.1, u_center=uc, seed=3,
                          Q=2, push_samples=6 * 10**5, proj_samples=50_000)
    rep, extras = run_experiment(cfg, recovery_samples=5)
    assert rep.N_direct > 0
    assert rep.split_gap <= 1e-6 * max(abs(rep.N_bilinear), 1)
    assert rep.prediction > 0
    assert rep.diagnostics["recovery_exact"]
    data = rep.to_jsonable()
    assert "S_truncated" in data and "/" in data["S_truncated"]
