import io

import numpy as np
import pytest

from crossing_lab import INF, Environment, make_distribution
from crossing_lab.multid import (ballisticity_scan, box_solve, cube_decompose, histogram_decreasing,
                                 pool_histograms, sample_box, write_histogram_csv)
from crossing_lab.quenched import solve_window


def _power_series_z(values, lo, y, n_steps=20_000):
    """Sum of killed-walk weights of paths 0 -> y by repeated one-step propagation."""
    values = np.asarray(values, float)
    d = values.ndim
    w = np.exp(-values) / (2 * d)
    iy = tuple(a - b for a, b in zip(y, lo))
    mass = np.zeros(values.shape)
    mass[tuple(-b for b in lo)] = 1.0
    z = 0.0
    for _ in range(n_steps):
        out = mass * w
        out[iy] = 0.0
        new = np.zeros_like(mass)
        for ax in range(d):
            sl_hi = [slice(None)] * d
            sl_lo = [slice(None)] * d
            sl_hi[ax], sl_lo[ax] = slice(1, None), slice(None, -1)
            new[tuple(sl_hi)] += out[tuple(sl_lo)]
            new[tuple(sl_lo)] += out[tuple(sl_hi)]
        z += new[iy]
        mass = new
        if mass.sum() < 1e-16:
            break
    return z


def test_srw_d2_adjacent_matches_power_series():
    vals = np.zeros((9, 9))
    s = box_solve(vals, (-4, -4), (1, 0))
    assert s.z == pytest.approx(_power_series_z(vals, (-4, -4), (1, 0)), rel=1e-8)
    assert s.residual() < 1e-10


def test_d1_box_matches_window(two_atom):
    from crossing_lab.potential import sample_environment
    env = sample_environment(two_atom, -20, 15, 3, 0)
    assert box_solve(env.values, (-20,), (15,)).z == pytest.approx(solve_window(env, 15).z, rel=1e-12)


def test_geodesic_limit():
    lam = 8.0
    vals = np.full((7, 7), lam)
    s = box_solve(vals, (-3, -3), (2, 1))
    geo = 3 * (np.exp(-lam) / 4) ** 3  # three shortest paths of length 3
    assert s.z / geo == pytest.approx(1.0, rel=1e-3)


def test_decoupled_infinite_site():
    vals = np.full((7, 7), 0.5)
    base = box_solve(vals, (-3, -3), (2, 0)).z
    vals2 = vals.copy()
    vals2[0, 0] = INF  # corner site: walls it off but not any path's interior
    assert box_solve(vals2, (-3, -3), (2, 0)).z <= base
    vals3 = np.full((7, 7), INF)
    vals3[3, 3:6] = 0.5  # corridor 0 -> (0,2) only; the rest absorbing
    corr = box_solve(vals3, (-3, -3), (0, 2)).z
    vals3[0, 0] = 0.5  # isolated finite site: unreachable, changes nothing
    assert box_solve(vals3, (-3, -3), (0, 2)).z == corr


def test_iterative_matches_direct_on_small_box():
    vals = np.full((11, 11), 0.2)
    d = box_solve(vals, (-5, -5), (2, 0))
    it = box_solve(vals, (-5, -5), (2, 0), method="iterative", rtol=1e-12)
    assert it.z == pytest.approx(d.z, rel=1e-6)


def test_constant_scan_flat():
    tab = ballisticity_scan(make_distribution([(1.0, 1.0)]), (1, 0), [4, 8], None, 2, 0)
    r = np.asarray(tab.ratio)
    assert abs(r[1] / r[0] - 1) < 0.15
    buf = io.StringIO()
    tab.to_csv(buf)
    assert buf.getvalue().splitlines()[0] == "y,ratio,stderr,ess"


def test_cube_extremes():
    L = 2
    hi = cube_decompose(np.full((8, 8), 2.0), (-1, -1), L, 1.0)
    assert hi.occupied.all() and hi.n_components == 0
    lo = cube_decompose(np.zeros((8, 8)), (-1, -1), L, 1.0)
    assert not lo.occupied.any() and lo.n_components == 1 and lo.sizes[0] == 16


def test_cube_validation():
    with pytest.raises(ValueError):
        cube_decompose(np.zeros((7, 8)), (-1, -1), 2, 1.0)


def test_cube_histogram_and_csv(two_atom):
    L = 2
    decs = [cube_decompose(sample_box(two_atom, (-1, -1), (32, 32), 5, i), (-1, -1), L, 1.0) for i in range(40)]
    hist = pool_histograms(decs)
    assert hist and min(hist) == 1
    assert histogram_decreasing({1: 10, 2: 5, 3: 1})
    assert not histogram_decreasing({1: 10, 2: 10})
    buf = io.StringIO()
    write_histogram_csv(hist, buf)
    assert buf.getvalue().splitlines()[0] == "size,count"
