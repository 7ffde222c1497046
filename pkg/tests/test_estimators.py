import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from crossing_lab.estimators import (BlockTableEstimator, CrossingTimeEstimator, DerivativeEstimator,
                                     LyapunovEstimator, RenewalEstimator, check_distribution, check_is_fitted)

ATOMS = [[0.0, 0.5], [1.0, 0.5]]


def test_params_round_trip():
    est = RenewalEstimator(R=10, mode="exact")
    assert est.get_params()["R"] == 10
    c = clone(est.set_params(R=8))
    assert c.R == 8
    with pytest.raises(NotFittedError):
        check_is_fitted(c)


def test_renewal_estimator():
    est = RenewalEstimator(R=12).fit(ATOMS)
    check_is_fitted(est)
    assert est.beta_ > 0 and est.speed_ == pytest.approx(1 / est.inverse_speed_)
    assert est.tail_.passed


def test_mc_requires_seed():
    with pytest.raises(ValueError, match="master_seed"):
        BlockTableEstimator(R=4, mode="mc").fit(ATOMS)
    for cls in (LyapunovEstimator, DerivativeEstimator, CrossingTimeEstimator):
        with pytest.raises(ValueError, match="master_seed"):
            cls().fit(ATOMS)


def test_bad_mode_and_dist():
    with pytest.raises(ValueError):
        BlockTableEstimator(mode="bogus").fit(ATOMS)
    with pytest.raises(ValueError):
        check_distribution([[0.0, -1.0]])


def test_mc_estimators_small():
    ly = LyapunovEstimator(y=32, n_envs=50, master_seed=1).fit(ATOMS)
    assert 0 < ly.beta_ <= ly.alpha_ + 3 * (ly.alpha_estimate_.stderr + ly.beta_estimate_.stderr)
    ct = CrossingTimeEstimator(y=16, n_envs=50, master_seed=1).fit({"atoms": ATOMS})
    assert ct.tau_ >= 16 and 0 < ct.speed_ < 1
