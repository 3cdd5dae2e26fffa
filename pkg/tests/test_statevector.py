import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mipt_unfold.statevector import (
    CapacityError,
    InvalidDensityMatrixError,
    MeasurementDegeneracyError,
    apply_measurement,
    apply_two_qubit,
    bell_state,
    haar_unitary,
    measure_all_sites,
    product_state,
    reduced_density_matrix,
    subset_entropy,
    von_neumann_entropy,
)
from mipt_unfold.unfoldings import UnfoldingSpec, build_kraus, invert_rate

H2_09 = 0.4689955935892812  # -0.9 log2 0.9 - 0.1 log2 0.1


def random_state(L, rng):
    v = rng.standard_normal(2**L) + 1j * rng.standard_normal(2**L)
    return v / np.linalg.norm(v)


def dense_two_qubit(psi, u, i, j):
    """Reference: tensor contraction on the (q_{L-1}, ..., q_0) axis layout."""
    L = int(np.log2(psi.size))
    t = psi.reshape((2,) * L)
    ai, aj = L - 1 - i, L - 1 - j
    t = np.moveaxis(t, (ai, aj), (0, 1))
    t = np.tensordot(u.reshape(2, 2, 2, 2), t, axes=([2, 3], [0, 1]))
    return np.moveaxis(t, (0, 1), (ai, aj)).reshape(-1)


@pytest.mark.parametrize("dim", [2, 4])
@pytest.mark.parametrize("seed", range(5))
def test_haar_unitary_is_unitary(dim, seed):
    u = haar_unitary(dim, np.random.default_rng(seed))
    assert np.abs(u.conj().T @ u - np.eye(dim)).max() < 1e-12
    assert abs(abs(np.linalg.det(u)) - 1) < 1e-12


def test_haar_rejects_other_dims():
    with pytest.raises(ValueError):
        haar_unitary(3, np.random.default_rng(0))


def test_haar_first_moment():
    rng = np.random.default_rng(11)
    vals = np.array([abs(haar_unitary(2, rng)[0, 0]) ** 2 for _ in range(10_000)])
    # for Haar U(2), |U00|^2 is uniform on [0, 1]
    sigma = math.sqrt(1 / 12 / vals.size)
    assert abs(vals.mean() - 0.5) < 3 * sigma
    assert stats.kstest(vals, "uniform").statistic < 0.02


def test_haar_phase_fix_removes_bias():
    # without the R-diagonal phase fix the diagonal of Q is biased toward the positive reals
    rng = np.random.default_rng(5)
    d = np.array([haar_unitary(4, rng)[0, 0] for _ in range(4000)])
    assert abs(d.mean()) < 4 * math.sqrt(0.25 / d.size)


@pytest.mark.parametrize("i, j", [(0, 1), (1, 0), (0, 4), (3, 1), (4, 2)])
def test_gate_kernel_matches_dense_reference(i, j):
    rng = np.random.default_rng(3)
    psi = random_state(5, rng)
    u = haar_unitary(4, rng)
    expected = dense_two_qubit(psi, u, i, j)
    got = apply_two_qubit(psi.copy(), u, i, j)
    np.testing.assert_allclose(got, expected, atol=1e-13)


def test_gate_kron_convention():
    rng = np.random.default_rng(4)
    psi = random_state(3, rng)
    a, b = haar_unitary(2, rng), haar_unitary(2, rng)
    full = np.kron(np.kron(np.eye(2), a), b)  # sites (2, 1, 0) -> a on 1, b on 0
    np.testing.assert_allclose(apply_two_qubit(psi.copy(), np.kron(a, b), 1, 0), full @ psi, atol=1e-13)


def test_identity_gate_is_bitwise_noop():
    psi = random_state(4, np.random.default_rng(0))
    before = psi.copy()
    apply_two_qubit(psi, np.eye(4), 1, 3)
    np.testing.assert_array_equal(psi, before)


def test_swap_and_bell_preparation():
    swap = np.eye(4)[[0, 2, 1, 3]]
    psi = np.zeros(4, complex)
    psi[0b10] = 1  # qubit 0 up, qubit 1 down
    apply_two_qubit(psi, swap, 0, 1)
    assert psi[0b01] == 1
    h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    cnot = np.eye(4)[[0, 1, 3, 2]]
    psi = product_state(2)
    apply_two_qubit(psi, cnot @ np.kron(h, np.eye(2)), 0, 1)
    np.testing.assert_allclose(psi, bell_state(), atol=1e-15)


def test_gate_site_errors():
    psi = product_state(3)
    with pytest.raises(IndexError):
        apply_two_qubit(psi, np.eye(4), 0, 3)
    with pytest.raises(ValueError):
        apply_two_qubit(psi, np.eye(4), 1, 1)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), L=st.integers(2, 7))
def test_gate_norm_preservation(seed, L):
    rng = np.random.default_rng(seed)
    psi = random_state(L, rng)
    for _ in range(10):
        i, j = rng.choice(L, 2, replace=False)
        apply_two_qubit(psi, haar_unitary(4, rng), int(i), int(j))
    assert abs(np.linalg.norm(psi) - 1) < 1e-10


@pytest.mark.parametrize("kind", ["P", "NP", "U", "G"])
def test_measurement_renormalizes(kind):
    rng = np.random.default_rng(1)
    kraus = build_kraus(invert_rate(kind, 0.6))
    psi = random_state(5, rng)
    for site in range(5):
        apply_measurement(psi, kraus, site, rng)
        assert abs(np.linalg.norm(psi) - 1) < 1e-12


def test_projective_collapse_of_bell_pair():
    kraus = build_kraus(UnfoldingSpec("P", 1.0))
    rng = np.random.default_rng(2)
    n = 4000
    ups = 0
    for _ in range(n):
        outcome, psi = apply_measurement(bell_state().copy(), kraus, 1, rng)
        ups += outcome == 0
        assert subset_entropy(psi, [0]) == 0.0
    assert abs(ups / n - 0.5) < 4 * math.sqrt(0.25 / n)


def test_np_projective_limit_on_up_state():
    kraus = build_kraus(UnfoldingSpec("NP", 1.0))
    rng = np.random.default_rng(0)
    for _ in range(200):
        outcome, _ = apply_measurement(product_state(1), kraus, 0, rng)
        assert outcome == 0


@pytest.mark.parametrize("q", [0.1, 0.3, 0.5])
def test_unitary_kick_preserves_entropies(q):
    rng = np.random.default_rng(8)
    psi = random_state(6, rng)
    subsets = [[0], [1, 2], [0, 3, 5], [2, 3, 4]]
    before = [subset_entropy(psi, s) for s in subsets]
    kraus = build_kraus(UnfoldingSpec("U", q))
    for site in range(6):
        apply_measurement(psi, kraus, site, rng)
    after = [subset_entropy(psi, s) for s in subsets]
    np.testing.assert_allclose(after, before, atol=1e-10)


@pytest.mark.parametrize("p", [0.2, 0.5, 0.9])
def test_projective_measurement_rate(p):
    kraus = build_kraus(UnfoldingSpec("P", p))
    rng = np.random.default_rng(17)
    psi0 = random_state(3, np.random.default_rng(1))
    n = 10_000
    hits = sum(apply_measurement(psi0.copy(), kraus, 1, rng)[0] != 2 for _ in range(n))
    assert abs(hits / n - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_gaussian_outcomes_ks():
    alpha = 0.8
    kraus = build_kraus(UnfoldingSpec("G", alpha))
    rng = np.random.default_rng(99)
    xs = np.array([apply_measurement(bell_state().copy(), kraus, 0, rng)[0] for _ in range(100_000)])
    sd = math.sqrt(0.5)

    def cdf(x):
        # outcome density on the Bell pair: 2 sqrt(pi) (G(x - a)^2 + G(x + a)^2) / 2
        return 0.5 * (stats.norm.cdf(x, alpha, sd) + stats.norm.cdf(x, -alpha, sd))

    assert stats.kstest(xs, cdf).statistic < 0.01


@pytest.mark.parametrize("kind", ["P", "NP", "U", "G"])
def test_measure_all_sites_matches_sequential(kind):
    kraus = build_kraus(invert_rate(kind, 0.45))
    psi = random_state(6, np.random.default_rng(21))
    a, b = psi.copy(), psi.copy()
    r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
    for _ in range(4):
        seq = [apply_measurement(a, kraus, s, r1)[0] for s in range(6)]
        fused = measure_all_sites(b, kraus, r2)
        assert seq == pytest.approx(fused, abs=1e-12)
        np.testing.assert_allclose(b, a, atol=1e-12)
    assert r1.random() == r2.random()


def test_degenerate_state_raises():
    kraus = build_kraus(UnfoldingSpec("P", 1.0))
    with pytest.raises(MeasurementDegeneracyError):
        apply_measurement(np.zeros(4, complex), kraus, 0, np.random.default_rng(0))


def test_reduced_density_matrix_examples():
    np.testing.assert_allclose(reduced_density_matrix(bell_state(), [0]), np.eye(2) / 2, atol=1e-15)
    rho = reduced_density_matrix(product_state(4), [1, 3])
    assert np.allclose(rho @ rho, rho) and np.trace(rho).real == pytest.approx(1)
    ghz = np.zeros(8, complex)
    ghz[0] = ghz[7] = 1 / math.sqrt(2)
    expected = np.zeros((4, 4))
    expected[0, 0] = expected[3, 3] = 0.5
    np.testing.assert_allclose(reduced_density_matrix(ghz, [0, 2]), expected, atol=1e-15)


def test_reduced_density_matrix_bit_order():
    # qubit 0 up, qubit 1 down, qubit 2 up: subset [0, 1] sees row index 0b10
    psi = np.zeros(8, complex)
    psi[0b010] = 1
    rho = reduced_density_matrix(psi, [0, 1])
    assert rho[0b10, 0b10] == 1


def test_reduced_density_matrix_errors():
    psi = product_state(4)
    with pytest.raises(CapacityError):
        reduced_density_matrix(psi, [0, 1, 2, 3])
    with pytest.raises(CapacityError):
        reduced_density_matrix(psi, [0, 1, 2], cap=2)
    with pytest.raises(ValueError):
        reduced_density_matrix(psi, [2, 1])
    with pytest.raises(IndexError):
        reduced_density_matrix(psi, [5])


@pytest.mark.parametrize(
    "rho, expected",
    [(np.eye(2) / 2, 1.0), (np.diag([1.0, 0.0]), 0.0), (np.diag([0.9, 0.1]), H2_09)],
)
def test_von_neumann_examples(rho, expected):
    assert von_neumann_entropy(rho) == pytest.approx(expected, abs=1e-12)


def test_negative_eigenvalue_rejected():
    with pytest.raises(InvalidDensityMatrixError):
        von_neumann_entropy(np.diag([1.1, -0.1]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), L=st.integers(2, 8), data=st.data())
def test_entropy_complement_symmetry(seed, L, data):
    psi = random_state(L, np.random.default_rng(seed))
    subset = sorted(data.draw(st.sets(st.integers(0, L - 1), min_size=1, max_size=L - 1)))
    comp = [q for q in range(L) if q not in subset]
    s = von_neumann_entropy(reduced_density_matrix(psi, subset))
    sc = von_neumann_entropy(reduced_density_matrix(psi, comp))
    assert abs(s - sc) < 1e-8
    assert abs(subset_entropy(psi, subset) - s) < 1e-8
    assert -1e-12 <= s <= len(subset) + 1e-9
