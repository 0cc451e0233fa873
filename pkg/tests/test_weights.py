import math

import numpy as np
import pytest

from normcount.errors import SingularCenter
from normcount.weights import (build_weight, omega, omega_box_mc,
                               omega_square_quad, pushforward_table)

UC = np.array([1.0, 0.2, 0.3, 0.15])


@pytest.fixture(scope="module")
def wf(zeta8):
    return build_weight(zeta8, 189.0, 4.0, UC, M=2)


def test_build_records_bounds(wf):
    assert wf.j_min > 0 and wf.j_scale > 0
    assert wf.support_radius > 0
    assert wf.omega_lb > 0
    assert wf.lam in [2.0**-k for k in range(15)]
    i, j = wf.pivot
    assert i != j


def test_perturbation_trigger(zeta8):
    # all partials of N_{K/Q} vanish at e1 except the first
    wf2 = build_weight(zeta8, 50.0, 4.0, np.array([1.0, 0.0, 0.0, 0.0]),
                       M=1)
    assert wf2.perturbed


def test_singular_center(zeta8):
    with pytest.raises(SingularCenter):
        build_weight(zeta8, 50.0, 4.0, np.array([0.0, 0.0, 0.0, 0.0]))


def test_omega_nonnegative_and_supported(wf):
    rng = np.random.default_rng(3)
    lo1, hi1, lo2, hi2 = wf.support_bbox
    for _ in range(25):
        x = (rng.uniform(lo1, hi1), rng.uniform(lo2, hi2))
        assert omega(wf, x) >= 0
    assert omega(wf, (hi1 + 10.0, 0.0)) == 0.0
    assert omega(wf, (0.0, hi2 * 2.0)) == 0.0
    assert omega(wf, (wf.support_radius * 3, wf.support_radius * 3)) == 0.0


def test_omega_positive_near_center_image(wf):
    x1, x2 = wf.image_pair(wf.center_u()[None, :])
    v = omega(wf, (float(x1[0]), float(x2[0])))
    assert v > 0
    # a nearby point inside the G^-1 U^{n/2} disc is also positive
    v2 = omega(wf, (float(x1[0]) + wf.U**2 / 100, float(x2[0])))
    assert v2 > 0


def test_omega_lipschitz_measured(wf):
    rng = np.random.default_rng(5)
    x1, x2 = wf.image_pair(wf.center_u()[None, :])
    worst = 0.0
    for _ in range(20):
        x = (float(x1[0]) + rng.uniform(-1, 1) * wf.U**2 / 10,
             float(x2[0]) + rng.uniform(-1, 1) * wf.U**2 / 10)
        h = rng.uniform(1.0, 30.0)
        d = abs(omega(wf, (x[0] + h, x[1])) - omega(wf, x))
        worst = max(worst, d / h)
    # scaled constant is finite and modest
    assert worst * wf.U**2 < 1e3


def test_omint_quadrature_vs_mc(wf):
    rng = np.random.default_rng(11)
    x1, x2 = wf.image_pair(wf.center_u()[None, :])
    for i in range(3):
        side = float(np.exp(rng.uniform(math.log(50), math.log(wf.U**2))))
        cx = float(x1[0]) + rng.uniform(-0.1, 0.1) * wf.U**2
        cy = float(x2[0]) + rng.uniform(-0.1, 0.1) * wf.U**2
        R = (cx - side / 2, cx + side / 2, cy - side / 2, cy + side / 2)
        q = omega_square_quad(wf, R, outer=12)
        mc, se = omega_box_mc(wf, R, 30000, seed=50 + i)
        assert abs(q - mc) <= 3 * max(se, 1e-9)


def test_mc_determinism(wf):
    R = (30000, 40000, 15000, 25000)
    a = omega_box_mc(wf, R, 20000, seed=9)
    b = omega_box_mc(wf, R, 20000, seed=9)
    assert a == b


def test_pushforward_table_mass(wf):
    wt = pushforward_table(wf, cell=64, n_samples=10**6, seed=1)
    total = float(wt.table.sum()) * wt.cell**2
    assert abs(total - wt.meas) < 1e-9 * wt.meas
    assert len(wt.samples_x1) == len(wt.samples_x2) > 0


def test_pushforward_matches_omega_locally(wf):
    # cell averages of the table track the quadrature weight
    wt = pushforward_table(wf, cell=64, n_samples=4 * 10**6, seed=2)
    x1, x2 = wf.image_pair(wf.center_u()[None, :])
    i1 = int((x1[0] - wt.t1lo) // wt.cell)
    i2 = int((x2[0] - wt.t2lo) // wt.cell)
    tab = wt.table[i1, i2]
    # quadrature value at the cell center
    cx = wt.t1lo + (i1 + 0.5) * wt.cell
    cy = wt.t2lo + (i2 + 0.5) * wt.cell
    qv = omega(wf, (cx, cy))
    assert qv > 0
    assert abs(tab - qv) / qv < 0.8  # sampling noise at this budget
