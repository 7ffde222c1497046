import math

import numpy as np
import pytest

from crossing_lab import INF, make_distribution
from crossing_lab.annealed import BlockTable, block_table_exact, block_table_mc, crossing_time_mc, localtime_weight

from conftest import constant_block_z


def test_srw_exact_table(srw):
    t = block_table_exact(srw, 14)
    np.testing.assert_allclose(t.z0, 1 / (2 * t.r), rtol=0, atol=1e-12)


def test_srw_mc_zero_variance(srw):
    t = block_table_mc(srw, 8, 50, 1)
    np.testing.assert_allclose(t.z0, 1 / (2 * t.r), atol=1e-14)
    assert np.all(t.z0_stderr < 1e-14)


def test_constant_mc_matches_closed_form():
    t = block_table_mc(make_distribution([(0.5, 1.0)]), 6, 10, 2)
    np.testing.assert_allclose(t.z0, [constant_block_z(0.5, r) for r in t.r], rtol=1e-12)


def test_two_site_independence(two_atom, zero_inf):
    for d in (two_atom, zero_inf):
        t = block_table_exact(d, 4)
        ee = float(d.expect_exp(1.0))
        assert t.z0[0] == pytest.approx(ee / 2, rel=1e-13)
        assert t.z0[1] == pytest.approx(ee**2 / 4, rel=1e-13)


def test_exact_vs_mc(two_atom):
    ex = block_table_exact(two_atom, 8)
    mc = block_table_mc(two_atom, 8, 4000, 11)
    assert np.all(np.abs(mc.z0 - ex.z0) <= 4 * mc.z0_stderr + 1e-15)
    assert np.all(np.abs(mc.a - ex.a) <= 4 * mc.a_stderr + 1e-15)


def test_exact_methods_agree(two_atom):
    a = block_table_exact(two_atom, 10, method="enumerate")
    b = block_table_exact(two_atom, 10, method="localtime")
    np.testing.assert_allclose(b.z0, a.z0, rtol=1e-9)
    np.testing.assert_allclose(b.a, a.a, rtol=1e-9)


def test_absorbing_atom_factor(zero_inf):
    t = block_table_exact(zero_inf, 6)
    srw = block_table_exact(make_distribution([(0.0, 1.0)]), 6)
    assert np.all(t.z0 <= 0.5 ** t.r * srw.z0 * (1 + 1e-12))


def test_csv_round_trip(two_atom, tmp_path):
    t = block_table_exact(two_atom, 5)
    p = tmp_path / "t.csv"
    with open(p, "w", newline="") as fh:
        t.to_csv(fh)
    assert p.read_text().splitlines()[0] == "r,z0,z0_stderr,a,a_stderr"
    with open(p) as fh:
        back = BlockTable.from_csv(fh, mode="exact")
    np.testing.assert_array_equal(back.z0, t.z0)
    np.testing.assert_array_equal(back.a, t.a)


def test_crossing_time_y1_and_constant():
    lam = 0.5
    d = make_distribution([(lam, 1.0)])
    est = crossing_time_mc(d, 1, None, 4, 0, kind="block")
    assert est.tau.mean >= 1.0
    # E tau = -d/dlam log z(lam) for a uniform shift; finite differences on the closed form
    r, h = 12, 1e-6
    fd = -(math.log(constant_block_z(lam + h, r)) - math.log(constant_block_z(lam - h, r))) / (2 * h)
    est = crossing_time_mc(d, r, None, 4, 0, kind="block")
    assert est.tau.mean == pytest.approx(fd, rel=1e-6)


def test_counterexample_grows(zero_inf):
    d = make_distribution([(0.0, 0.9), (INF, 0.1)])
    small = crossing_time_mc(d, 8, None, 300, 1, kind="window", proposal="open").tau_per_y
    large = crossing_time_mc(d, 32, None, 300, 1, kind="window", proposal="open").tau_per_y
    assert large > small


def test_localtime_weight_examples():
    lam = 0.3
    d = make_distribution([(lam, 1.0)])
    assert localtime_weight([0, 1, 2], d) == pytest.approx(math.exp(-2 * lam))
    assert localtime_weight([0], d) == 1.0


def test_localtime_weight_enumeration(two_atom):
    path = [0, 1, 0, 1, 2, 3]
    # visits before tau: 0 twice, 1 twice, 2 once
    direct = np.mean([math.exp(-(2 * a + 2 * b + c)) for a in (0, 1) for b in (0, 1) for c in (0, 1)])
    assert localtime_weight(path, two_atom) == pytest.approx(direct, abs=1e-12)
