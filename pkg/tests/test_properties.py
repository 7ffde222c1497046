"""Property-based checks over random atomic laws."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from crossing_lab import Environment, make_distribution
from crossing_lab.annealed import block_table_exact
from crossing_lab.quenched import solve_block, solve_window
from crossing_lab.renewal import build_kernel, convolve_blocks, deconvolve_blocks, solve_beta

finite_values = st.floats(0.0, 4.0, allow_nan=False)


@st.composite
def laws(draw, max_atoms=3, allow_inf=False):
    k = draw(st.integers(1, max_atoms))
    vals = draw(st.lists(finite_values, min_size=k, max_size=k, unique=True))
    if allow_inf and draw(st.booleans()):
        vals[-1] = math.inf
    w = draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k))
    return make_distribution(list(zip(vals, w)))


@settings(max_examples=30, deadline=None)
@given(laws(allow_inf=True))
def test_round_trip_and_structural_zero(dist):
    t = block_table_exact(dist, 7)
    dec = deconvolve_blocks(t)
    assert abs(dec.zbar[1]) <= 1e-12 * max(t.z0[0] ** 2, 1e-300) + 1e-300
    Z, A = convolve_blocks(dec.zbar, dec.nbar)
    np.testing.assert_allclose(Z, t.z0, rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(A, t.a, rtol=1e-12, atol=1e-300)
    assert np.all(t.a >= t.r * t.z0 * (1 - 1e-12))


@settings(max_examples=30, deadline=None)
@given(laws())
def test_kernel_normalized(dist):
    t = block_table_exact(dist, 8)
    dec = deconvolve_blocks(t)
    beta = solve_beta(dec.zbar)
    k = build_kernel(dec.zbar, dec.nbar, beta)
    assert abs(k.q.sum() - 1.0) < 1e-12
    pos = k.q > 0
    assert np.all(k.g[pos] >= k.r[pos] * (1 - 1e-12))


@settings(max_examples=50, deadline=None)
@given(st.lists(finite_values, min_size=2, max_size=12))
def test_block_residuals_and_monotone(vals):
    s = solve_block(Environment(0, vals))
    rh, rt = s.residuals()
    assert rh < 1e-10 and rt < 1e-10
    r = len(vals) - 1
    assert 0 < s.z <= 1 / (2 * r) * (1 + 1e-12)  # the free walk dominates
    raised = solve_block(Environment(0, np.asarray(vals) + 0.1))
    assert raised.z <= s.z


@settings(max_examples=40, deadline=None)
@given(st.lists(finite_values, min_size=4, max_size=20), st.integers(1, 6))
def test_window_monotone_in_W(vals, extra):
    y = 2
    lo = -(len(vals) - y - 1)
    small = solve_window(Environment(lo, vals), y).z
    big_vals = list(np.zeros(extra)) + list(vals)
    big = solve_window(Environment(lo - extra, big_vals), y).z
    assert big >= small * (1 - 1e-13)
