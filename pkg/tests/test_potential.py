import math

import numpy as np
import pytest

from crossing_lab import INF, make_distribution
from crossing_lab.potential import log_mgf, sample_environment


def test_flags(two_atom, zero_inf, srw):
    assert two_atom.satisfies_V and two_atom.satisfies_d1
    assert zero_inf.satisfies_V and not zero_inf.satisfies_d1
    assert not srw.satisfies_V


def test_merging_and_inf_string():
    d = make_distribution([(1, 0.25), ("inf", 0.5), (1.0, 0.25)])
    assert d.n_atoms == 2
    assert d.p_inf == pytest.approx(0.5)
    assert d.prob_of(lambda v: v == 1.0) == pytest.approx(0.5)


@pytest.mark.parametrize("bad", [[], [(-1.0, 1.0)], [(0.0, -0.1), (1.0, 1.1)], [(1.0,)], [(0.0, 0.0)]])
def test_rejects_invalid(bad):
    with pytest.raises(ValueError):
        make_distribution(bad)


def test_lambda_shift_validation():
    with pytest.raises(ValueError):
        make_distribution([(0.0, 1.0)], lambda_shift=-0.1)


def test_log_mgf_examples(two_atom):
    assert log_mgf(two_atom, 0.0) == 0.0
    assert log_mgf(two_atom, 1.0) == pytest.approx(-math.log((1 + math.exp(-1)) / 2), abs=1e-12)
    const = make_distribution([(0.7, 1.0)])
    assert log_mgf(const, 2.0) == pytest.approx(1.4)
    assert log_mgf(make_distribution([(INF, 1.0)]), 1.0) == INF


def test_environment_determinism_and_frequencies(two_atom):
    e1 = sample_environment(two_atom, -5, 100_000 - 6, 42, 3)
    e2 = sample_environment(two_atom, -5, 100_000 - 6, 42, 3)
    np.testing.assert_array_equal(e1.values, e2.values)
    n = e1.values.size
    frac = np.mean(e1.values == 0.0)
    assert abs(frac - 0.5) < 4 * math.sqrt(0.25 / n)
    const = sample_environment(make_distribution([(3.0, 1.0)]), 0, 9, 1, 0)
    assert np.all(const.values == 3.0)


def test_window_extension_keeps_sites(two_atom):
    small = sample_environment(two_atom, -16, 20, 7, 1)
    big = sample_environment(two_atom, -64, 20, 7, 1)
    np.testing.assert_array_equal(big.window(-16, 20).values, small.values)
