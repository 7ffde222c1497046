import math

import numpy as np
import pytest

from crossing_lab import INF, Environment, make_distribution
from crossing_lab.quenched import (path_statistics, sample_conditioned_path, solve_block, solve_window,
                                   solve_window_adaptive)

from conftest import constant_block_z


def test_srw_block():
    s = solve_block(Environment(0, np.zeros(3)))
    assert s.z == pytest.approx(0.25, abs=1e-15)
    assert s.mean_time == pytest.approx(2.0)
    path = sample_conditioned_path(s, 0, seed=1)
    assert list(path.sites) == [0, 1, 2]


def test_absorbing_interior_site():
    s = solve_block(Environment(0, [0.0, INF, 0.0]))
    assert s.z == 0.0
    assert s.mean_time is None


@pytest.mark.parametrize("lam", [0.25, 0.5, 1.0])
@pytest.mark.parametrize("r", [1, 3, 10])
def test_constant_block_closed_form(lam, r):
    s = solve_block(Environment(0, np.full(r + 1, lam)))
    assert s.z == pytest.approx(constant_block_z(lam, r), rel=1e-12)


@pytest.mark.parametrize("W", [1, 5, 40])
def test_gamblers_ruin_window(W):
    s = solve_window(Environment(-W, np.zeros(W + 2)), 1)
    assert s.h_at(0) == pytest.approx(W / (W + 1), rel=1e-14)


def test_residuals_and_transitions(two_atom):
    s, W, tol = solve_window_adaptive(two_atom, 30, 5, 0)
    rh, rt = s.residuals()
    assert rh < 1e-10 and rt < 1e-10
    for x in range(-W + 1, 30):
        if s.h_at(x) > 0:
            assert sum(s.transition(x)) == pytest.approx(1.0, abs=1e-12)


def test_sampler_mean_time(two_atom):
    from crossing_lab.potential import sample_environment
    s = solve_block(sample_environment(two_atom, 0, 6, 9, 2))
    assert s.z > 0
    rng = np.random.default_rng(0)
    taus = np.array([sample_conditioned_path(s, 0, rng).tau for _ in range(20_000)])
    assert abs(taus.mean() - s.mean_time) < 4 * taus.std() / math.sqrt(taus.size)


def test_block_paths_confined(two_atom):
    from crossing_lab.potential import sample_environment
    s = solve_block(sample_environment(two_atom, 0, 8, 3, 4))
    rng = np.random.default_rng(1)
    for _ in range(200):
        p = sample_conditioned_path(s, 0, rng)
        assert p.sites.min() >= 0 and p.sites.max() <= 8
        assert np.all(np.abs(np.diff(p.sites)) == 1)
        assert p.sites[-1] == 8 and np.sum(p.sites[1:] == 0) == 0


def test_path_statistics_examples():
    lt, ren, x = path_statistics([0, 1, 2])
    assert lt == {0: 1, 1: 1} and x == 0
    lt, ren, x = path_statistics([0, 1, 0, 1, 2])
    assert lt[0] == 2 and lt[1] == 2 and x == 2 and ren == [2]


def test_path_local_time_sum(two_atom):
    s, _, _ = solve_window_adaptive(two_atom, 12, 1, 1)
    p = sample_conditioned_path(s, 0, np.random.default_rng(3))
    assert sum(p.local_times.values()) == p.tau
    assert p.x_y == min(p.renewal_sites)


def test_adaptive_window_left_infinite():
    d = make_distribution([(0.5, 1.0)])
    s, W, change = solve_window_adaptive(d, 10, 0, 0)
    assert change < 1e-10
