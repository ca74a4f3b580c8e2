import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import binomial_return
from dynbrw.groups import FreeGroup, HomTree, LatticeZd, StepLaw
from dynbrw.spectral import (
    DegenerateLawError,
    Regime,
    Verdict,
    classify,
    estimate_rho,
    series_condition,
)

SQRT3_2 = math.sqrt(3) / 2


def tree_rho(degree):
    # Kesten: rho = 2 sqrt(q - 1) / q for SRW on the q-regular tree
    return 2 * math.sqrt(degree - 1) / degree


def test_rho_z(srw_z):
    est = estimate_rho(srw_z, 200)
    assert abs(est.estimate - 1.0) <= 5e-3
    assert np.all(np.diff(est.lower_bounds) >= -1e-12)


def test_rho_f2(srw_f2):
    est = estimate_rho(srw_f2, 2000)
    assert abs(est.estimate - SQRT3_2) <= 5e-3
    assert est.lower_bounds[-1] <= SQRT3_2 + 1e-12
    # polynomial correction exponent of the free group: p^(2n) ~ rho^2n n^(-3/2)
    assert est.fit["lam"] == pytest.approx(1.5, abs=0.05)


def test_rho_homtree(srw_t3):
    est = estimate_rho(srw_t3, 2000)
    assert abs(est.estimate - tree_rho(3)) <= 5e-3


def test_rho_lattice_z2_short_range(srw_z2):
    est = estimate_rho(srw_z2, 120)
    assert abs(est.estimate - 1.0) <= 1e-2


def test_rho_drifted_walk_z():
    # rho = 2 sqrt(pq) for a nearest-neighbour walk with drift
    law = StepLaw(LatticeZd(1), ((1,), (-1,)), (0.7, 0.3))
    est = estimate_rho(law, 400)
    assert est.estimate == pytest.approx(2 * math.sqrt(0.21), abs=5e-3)


def test_rho_degenerate():
    law = StepLaw(LatticeZd(1), ((1,),), (1.0,), generating=True)
    with pytest.raises(DegenerateLawError):
        estimate_rho(law, 50)


def test_rho_small_n_max(srw_z):
    with pytest.raises(ValueError):
        estimate_rho(srw_z, 5)


@pytest.mark.parametrize("family", [LatticeZd(1), LatticeZd(3), FreeGroup(2), FreeGroup(3), HomTree(4)])
def test_lower_bounds_monotone(family):
    n_max = 60 if isinstance(family, LatticeZd) else 600
    est = estimate_rho(StepLaw.simple(family), n_max)
    assert np.all(np.diff(est.lower_bounds) >= -1e-12)
    assert est.lower_bounds[-1] <= est.estimate <= 1.0


# --- classify ----------------------------------------------------------------


def test_classify_examples():
    assert classify(2, 1.0).regime is Regime.RECURRENT
    assert classify(1.1, 0.8660).regime is Regime.TRANSIENT
    # boundary: m rho == 1 exactly in binary floating point
    assert classify(2.0, 0.5).regime is Regime.TRANSIENT
    rhos = np.random.default_rng(5).uniform(0.01, 1.0, 1000)
    assert all(classify(1 / r, r).regime is Regime.TRANSIENT for r in rhos if 1 / r > 1)


def test_classify_rejects_bad_inputs():
    for m, rho in [(1.0, 0.5), (0.5, 0.5), (2, 0.0), (2, 1.5)]:
        with pytest.raises(ValueError):
            classify(m, rho)


def test_classify_near_boundary_flag():
    c = classify(1.16, SQRT3_2, tolerance=0.01)
    assert c.near_boundary
    assert c.regime is Regime.RECURRENT
    assert c.margin == pytest.approx(1.16 - 2 / math.sqrt(3))


@given(st.floats(1.0, 10.0, exclude_min=True), st.floats(0.0, 1.0, exclude_min=True))
def test_classify_depends_on_product(m, rho):
    c = classify(m, rho)
    assert (c.regime is Regime.TRANSIENT) == (m * rho - 1 <= 0)


@given(st.floats(1.0, 100.0, exclude_min=True))
def test_z_always_recurrent(m):
    assert classify(m, 1.0).regime is Regime.RECURRENT


# --- series ------------------------------------------------------------------


def test_series_f2_subcritical(srw_f2):
    assert series_condition(srw_f2, 1.05, 400).verdict is Verdict.CONVERGES


def test_series_f2_supercritical(srw_f2):
    assert series_condition(srw_f2, 2.0, 400).verdict is Verdict.DIVERGES


def test_series_f2_critical(srw_f2):
    # terms behave like n^(-1/2): ratios tend to 1 so no margin is ever met
    v = series_condition(srw_f2, 2 / math.sqrt(3), 400)
    assert v.verdict is Verdict.INCONCLUSIVE
    assert v.ratios["max"] == pytest.approx(1.0, abs=0.01)


def test_series_partial_sum_nondecreasing(srw_f2):
    sums = [series_condition(srw_f2, 1.1, n).partial_sum for n in range(10, 200, 10)]
    assert all(s >= 0 for s in sums)
    assert all(b >= a for a, b in zip(sums, sums[1:]))


def test_series_partial_sum_matches_direct(srw_z):
    m = 1.01
    direct = sum(n * binomial_return(n) * m**n for n in range(41))
    assert series_condition(srw_z, m, 40).partial_sum == pytest.approx(direct, rel=1e-12)


def test_series_rejects_bad_inputs(srw_f2):
    with pytest.raises(ValueError):
        series_condition(srw_f2, 1.0, 100)
    with pytest.raises(ValueError):
        series_condition(srw_f2, 1.5, 100, delta=0.5)
