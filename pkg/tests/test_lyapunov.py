import io
import math

import numpy as np
import pytest

from crossing_lab import INF, make_distribution
from crossing_lab.lyapunov import (alpha_quenched, beta_slope, constant_beta, constant_beta_derivative,
                                   derivative_at_zero, jackknife_groups)


@pytest.mark.parametrize("lam", [0.25, 0.5, 1.0])
def test_constant_slope_closed_form(lam):
    d = make_distribution([(lam, 1.0)])
    b = beta_slope(d, 64, None, 4, 0)
    a = alpha_quenched(d, 64, None, 4, 0)
    assert b.mean == pytest.approx(constant_beta(lam), abs=1e-3)
    assert a.mean == pytest.approx(b.mean, abs=1e-12)


def test_srw_beta_zero(srw):
    # Lambda(1) = 0: the window stops at its cap, leaving a log(1 + y/W)/y truncation bias
    assert beta_slope(srw, 64, None, 4, 0).mean == pytest.approx(0.0, abs=1e-3)


def test_jensen_two_atom(two_atom):
    b = beta_slope(two_atom, 64, None, 300, 3)
    a = alpha_quenched(two_atom, 64, None, 300, 3)
    assert b.mean <= a.mean + 3 * math.hypot(a.stderr, b.stderr)


def test_alpha_exclusions():
    p = 0.05
    d = make_distribution([(0.0, 0.5), (1.0, 0.5 - p), (INF, p)])
    y, n = 32, 2000
    a = alpha_quenched(d, y, 1, n, 5)
    expected = 1 - (1 - p) ** (y + 1)
    frac = a.n_excluded / n
    assert abs(frac - expected) < 4 * math.sqrt(expected * (1 - expected) / n) + 2 * p


def test_constant_derivative():
    lam0 = 0.5
    d = make_distribution([(lam0, 1.0)])
    curve = derivative_at_zero(d, [0.0, 0.005, 0.01, 0.02], 64, None, 4, 0)
    assert curve.right_derivative_at_zero == pytest.approx(constant_beta_derivative(lam0), rel=1e-3)
    assert curve.monotone_violations() == 0 and curve.concavity_violations() == 0
    buf = io.StringIO()
    curve.to_csv(buf)
    assert buf.getvalue().splitlines()[0] == "lambda,beta,stderr"


def test_derivative_grid_validation(two_atom):
    with pytest.raises(ValueError):
        derivative_at_zero(two_atom, [0.01, 0.02, 0.03, 0.04], 64, None, 4, 0)
    with pytest.raises(ValueError):
        derivative_at_zero(two_atom, [0.0, 0.1], 64, None, 4, 0)


def test_jackknife_groups_partition():
    groups = jackknife_groups(1003)
    assert len(groups) == 100
    np.testing.assert_array_equal(np.concatenate(groups), np.arange(1003))
    assert len(jackknife_groups(7)) == 7
