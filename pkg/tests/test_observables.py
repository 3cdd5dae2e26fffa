import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mipt_unfold.circuit import CircuitConfig, SubsetEntropies, TrajectoryResult, quadrants, run_trajectory
from mipt_unfold.observables import (
    DegenerateCrossingError,
    NoCrossingError,
    aggregate,
    find_crossing,
    mean_and_stderr,
    tripartite_i3,
)
from mipt_unfold.statevector import product_state, subset_entropy
from mipt_unfold.unfoldings import UnfoldingSpec

P = np.linspace(0.05, 0.5, 10)


def _entropies(psi, L):
    regions = quadrants(L)
    return SubsetEntropies(**{k: subset_entropy(psi, v) for k, v in regions.items()})


def test_i3_of_product_state_is_zero():
    assert tripartite_i3(_entropies(product_state(8), 8)) == 0.0


def test_i3_of_ghz():
    ghz = np.zeros(16, complex)
    ghz[0] = ghz[-1] = 1 / math.sqrt(2)
    e = _entropies(ghz, 4)
    assert (e.A, e.B, e.C, e.D, e.AB, e.BC, e.AC) == pytest.approx((1,) * 7, abs=1e-12)
    assert tripartite_i3(e) == pytest.approx(1.0, abs=1e-12)


def test_mean_and_stderr():
    assert mean_and_stderr([0, 1]) == (0.5, 0.5)
    assert mean_and_stderr([2.5, 2.5]) == (2.5, 0.0)
    m, e = mean_and_stderr([1.0])
    assert m == 1.0 and math.isnan(e)
    with pytest.raises(ValueError):
        mean_and_stderr([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40), st.randoms(use_true_random=False))
def test_aggregation_order_independent(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert mean_and_stderr(values) == mean_and_stderr(shuffled)


def test_aggregate_identical_trajectories():
    cfg = CircuitConfig(8, UnfoldingSpec("P", 0.2), n_layers=8)
    r = run_trajectory(cfg, 0)
    row = aggregate([r, TrajectoryResult(1, r.snapshots)], cfg)
    assert row.S_AB_err == 0 and row.I3_err == 0 and row.n_traj == 2
    assert row.S_AB_density == (row.S_AB_mean / 8, 0.0)
    with pytest.raises(ValueError):
        aggregate([], cfg)


def test_deep_volume_law_i3_is_negative():
    cfg = CircuitConfig(16, UnfoldingSpec("P", 0.0), n_layers=48, master_seed=3)
    i3 = [tripartite_i3(run_trajectory(cfg, t).final) for t in range(4)]
    assert np.mean(i3) < -1


def _curve(y, err=0.0):
    return [(p, v, err) for p, v in zip(P, y)]


def test_crossing_of_straight_lines():
    est = find_crossing(_curve(P - 0.2), _curve(2 * (P - 0.2)), n_boot=20)
    assert est.p_c == pytest.approx(0.2, abs=1e-12)
    assert est.bootstrap_error < 1e-12  # noiseless resamples reproduce the root


def test_crossing_errors():
    with pytest.raises(DegenerateCrossingError):
        find_crossing(_curve(P), _curve(P))
    with pytest.raises(NoCrossingError):
        find_crossing(_curve(P), _curve(P + 1))
    with pytest.raises(ValueError):
        find_crossing(_curve(P)[:3], _curve(P)[:3])


def test_crossing_bootstrap_is_reproducible_and_positive():
    c1, c2 = _curve(-2 + 5 * P, 0.05), _curve(-4 + 10 * P, 0.05)
    a = find_crossing(c1, c2, rng=np.random.default_rng(1), kind="P", pair=(8, 12))
    b = find_crossing(c1, c2, rng=np.random.default_rng(1), kind="P", pair=(8, 12))
    assert a == b
    assert a.p_c == pytest.approx(0.4, abs=1e-12)
    assert 0 < a.bootstrap_error < 0.05
    assert a.n_resamples == 200 and a.as_dict()["pair"] == [8, 12]


def test_crossing_returns_lowest_root():
    y2 = np.sin(20 * P)
    est = find_crossing(_curve(np.zeros_like(P)), _curve(y2), n_boot=0)
    assert P[0] <= est.p_c <= P[-1]
    assert abs(np.sin(20 * est.p_c)) < 0.05
