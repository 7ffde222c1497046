import json
import math

import numpy as np
import pytest

from crossing_lab import INF, make_distribution
from crossing_lab.annealed import block_table_exact
from crossing_lab.diagnostics import (CheckReport, aggregate_exit_code, check_bias_domination,
                                      check_block_inequalities, check_jensen, check_localtime_geometric,
                                      check_prefactor_bound, check_xy_tail, counterexample_scaling,
                                      crossing_scaling, srw_localtime_tail)
from crossing_lab.renewal import deconvolve_blocks


def test_localtime_geometric_examples():
    tail = srw_localtime_tail(-1, 1, 3)  # index m holds P(l > m)
    assert tail[0] == pytest.approx(0.5, abs=1e-15)
    for y, z in ((7, -3), (20, -1), (3, -9)):
        t = srw_localtime_tail(z, y, 10)
        assert t[0] == pytest.approx(y / (y + abs(z)), rel=1e-14)
        np.testing.assert_allclose(t[1:] / t[:-1], 1 - 1 / (2 * (y + abs(z))), rtol=1e-13)
        assert check_localtime_geometric(y, z, 30).passed


def test_bias_domination(two_atom, srw):
    rep = check_bias_domination(two_atom, 20, 5, 10, 8, 100, 1, 20)
    assert rep.passed
    rep = check_bias_domination(srw, 20, 5, 10, 6, 50, 2, 20)
    assert rep.passed


def test_prefactor(two_atom):
    rep = check_prefactor_bound(two_atom, 10, 400, 1)
    assert rep.passed and rep.statistic < 1


def test_block_inequalities_all_fixtures(two_atom, zero_inf, srw):
    for d in (two_atom, zero_inf, srw, make_distribution([(0.5, 1.0)])):
        t = block_table_exact(d, 10)
        assert check_block_inequalities(t, deconvolve_blocks(t)).passed


def test_jensen(two_atom):
    assert check_jensen(two_atom, 64, 300, 4).passed


def test_xy_tail_negative_control(zero_inf):
    rep = check_xy_tail(zero_inf, 64, 200, 3, proposal="open")
    assert not rep.passed


def test_xy_tail_slope_negative(two_atom):
    rep = check_xy_tail(two_atom, 64, 300, 3)
    assert rep.statistic < 0
    assert 0 < rep.details["reasonable_density"] <= 1


def test_counterexample_small_y_lower_bound():
    rep = counterexample_scaling(0.9, [8, 16], 50, 1, method="exact")
    assert all(t >= y for y, t in zip([8, 16], rep.details["mean_tau"]))


def test_report_serialization():
    rep = CheckReport("x", 1.0, 2.0, False, {"a": np.float64(1.5), "b": INF})
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["passed"] is False and d["details"]["a"] == 1.5
    assert "FAIL" in rep.line()
    assert aggregate_exit_code([rep]) != 0
    assert aggregate_exit_code([CheckReport("y", 0, 1, True)]) == 0
