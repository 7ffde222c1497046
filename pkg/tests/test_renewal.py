import io
import math

import numpy as np
import pytest

from crossing_lab import make_distribution
from crossing_lab.annealed import block_table_exact
from crossing_lab.renewal import (build_kernel, convolve_blocks, deconvolve_blocks, kernel_tail_check, mass_defect,
                                  solve_beta)


def _kernel(dist, R):
    t = block_table_exact(dist, R)
    dec = deconvolve_blocks(t)
    beta = solve_beta(dec.zbar)
    return t, dec, build_kernel(dec.zbar, dec.nbar, beta)


def test_first_blocks_and_structural_zero(two_atom):
    t = block_table_exact(two_atom, 8)
    dec = deconvolve_blocks(t)
    assert dec.zbar[0] == t.z0[0]
    assert abs(dec.zbar[1]) < 1e-12
    assert np.all(dec.zbar[2:] > 0)


def test_round_trip(two_atom):
    t = block_table_exact(two_atom, 12)
    dec = deconvolve_blocks(t)
    Z, A = convolve_blocks(dec.zbar, dec.nbar)
    np.testing.assert_allclose(Z, t.z0, rtol=1e-12, atol=0)
    np.testing.assert_allclose(A, t.a, rtol=1e-12, atol=0)


def test_normalization_by_construction(two_atom):
    _, _, k = _kernel(two_atom, 14)
    assert abs(np.sum(k.q) - 1.0) < 1e-12
    assert k.mass_defect == pytest.approx(0.0, abs=1e-12)
    assert np.all(k.g[k.q > 0] >= k.r[k.q > 0] - 1e-12)


def test_constant_beta_converges():
    lam = 0.5
    _, _, k = _kernel(make_distribution([(lam, 1.0)]), 14)
    assert k.beta == pytest.approx(math.acosh(math.exp(lam)), abs=1e-5)
    tail = kernel_tail_check(k)
    assert tail.passed and tail.epsilon_hat > 0


def test_srw_edge_case(srw):
    # the SRW kernel is heavy-tailed: the finite-R root tends to 0 from above, the defect at beta=0 to 0
    t = block_table_exact(srw, 14)
    dec = deconvolve_blocks(t)
    betas = [solve_beta(dec.zbar[:R]) for R in (6, 10, 14)]
    defects = [mass_defect(dec.zbar[:R], 0.0) for R in (6, 10, 14)]
    assert betas[0] > betas[1] > betas[2] > 0
    assert defects[0] > defects[1] > defects[2] > 0
    k = build_kernel(dec.zbar, dec.nbar, betas[-1])
    assert not kernel_tail_check(k).passed
    v = [build_kernel(dec.zbar[:R], dec.nbar[:R], 0.0).v for R in (6, 10, 14)]
    assert v[0] > v[1] > v[2]


def test_two_atom_tail_negative(two_atom):
    _, _, k = _kernel(two_atom, 14)
    tail = kernel_tail_check(k)
    assert tail.passed and tail.epsilon_hat > 0
    slope = np.polyfit(np.log(k.r[3:]), np.log(k.g[3:]), 1)[0]
    assert slope <= 3


def test_kernel_csv_header(two_atom):
    _, _, k = _kernel(two_atom, 6)
    buf = io.StringIO()
    k.to_csv(buf)
    assert buf.getvalue().splitlines()[0] == "r,zbar,nbar,q,g"
    assert len(buf.getvalue().splitlines()) == 7
