"""Small-matrix and closed-form checks of the unfoldings.

Superoperators act on vectorized single-qubit density matrices, one ket leg
and one bra leg per replica, in leg order ``(1, 1b, 2, 2b)``. With
row-major vectorization the outcome-averaged map is
``sum_j (M_j kron conj(M_j)) ** replicas``. Pauli words are strings over
``{"I", "Z"}`` in the same leg order; ``"ZZ"`` at one replica is the
``Z_1 Z_1b`` term.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy import integrate

from .statevector import bell_state, reduced_density_matrix, von_neumann_entropy
from .unfoldings import (
    G_RATE_CAP,
    Kind,
    KrausSet,
    UnfoldingSpec,
    build_kraus,
    embed_named_as_general,
    invert_rate,
)

__all__ = [
    "Superoperator",
    "PauliDecomposition",
    "QuadratureError",
    "StructureError",
    "MeasureConstructionError",
    "averaged_superoperator",
    "dephasing_superoperator",
    "pauli_decomposition",
    "replica2_coefficients",
    "replica2_superoperator",
    "gaussian_replica2_coefficients",
    "replica2_bell_entropy",
    "replica2_bell_entropy_bruteforce",
    "binary_entropy",
    "np_final_entropy",
    "gaussian_final_entropy",
    "bell_entropy_loss",
    "bell_entropy_loss_enumerated",
    "reciprocal_symmetry_check",
    "random_atomic_measure",
    "optimality_scan",
    "verification_report",
    "report_passed",
]

_QUAD_TOL = 1e-10


class QuadratureError(ArithmeticError):
    pass


class StructureError(ValueError):
    """The superoperator lacks the expected permutation-symmetric Z form."""


class MeasureConstructionError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Superoperator:
    replicas: int
    matrix: np.ndarray

    def is_trace_preserving(self, atol: float = 1e-12) -> bool:
        """``<<I|`` is a left fixed point (meaningful for one replica)."""
        ident = np.eye(2).reshape(-1)
        left = reduce(np.kron, [ident] * self.replicas)
        return bool(np.abs(left @ self.matrix - left).max() <= atol)

    def max_difference(self, other: "Superoperator") -> float:
        return float(np.abs(self.matrix - other.matrix).max())


@dataclass(frozen=True)
class PauliDecomposition:
    replicas: int
    coefficients: dict[str, float]

    def reconstruct(self) -> np.ndarray:
        n_legs = 2 * self.replicas
        diag = np.zeros(2**n_legs)
        for word, c in self.coefficients.items():
            diag += c * _word_diagonal(word)
        return np.diag(diag).astype(complex)

    def __getitem__(self, word: str) -> float:
        return self.coefficients[word]


def _word_diagonal(word: str) -> np.ndarray:
    factors = [np.array([1.0, 1.0]) if c == "I" else np.array([1.0, -1.0]) for c in word]
    return reduce(np.kron, factors)


def _kron_power(a: np.ndarray, n: int) -> np.ndarray:
    return reduce(np.kron, [a] * n)


def _quad(f, lo, hi, points):
    val, err = integrate.quad(f, lo, hi, points=points, epsabs=1e-13, epsrel=1e-13, limit=400)
    if not err <= _QUAD_TOL:
        raise QuadratureError(f"quadrature error estimate {err} exceeds {_QUAD_TOL}")
    return val


def averaged_superoperator(kraus: KrausSet, replicas: int = 1) -> Superoperator:
    """Outcome-averaged replicated map ``sum_j (M_j kron conj M_j) ** replicas``."""
    if replicas not in (1, 2):
        raise ValueError("only 1 or 2 replicas are supported")
    n_legs = 2 * replicas
    if not kraus.is_continuum:
        mat = sum(_kron_power(np.kron(m, m.conj()), replicas) for m in kraus.ops)
        return Superoperator(replicas, np.asarray(mat))
    branches = kraus.continuum
    lo, hi = branches.bounds()
    pts = sorted({-branches.alpha, 0.0, branches.alpha})
    diag = np.empty(2**n_legs)
    for idx, bits in enumerate(itertools.product((0, 1), repeat=n_legs)):
        n_down = sum(bits)

        def integrand(x, n_down=n_down):
            up, down = branches.amplitudes(x)
            return up ** (n_legs - n_down) * down**n_down

        diag[idx] = _quad(integrand, lo, hi, pts)
    return Superoperator(replicas, np.diag(diag).astype(complex))


def dephasing_superoperator(p: float) -> Superoperator:
    """``(1 - p/2) II + (p/2) ZZ``: off-diagonals scaled by ``1 - p``."""
    return Superoperator(1, np.diag([1.0, 1 - p, 1 - p, 1.0]).astype(complex))


def pauli_decomposition(superop: Superoperator, atol: float = 1e-14) -> PauliDecomposition:
    """Coefficients of all ``{I, Z}`` words; the map must be Z-diagonal."""
    m = superop.matrix
    off = m - np.diag(np.diagonal(m))
    if np.abs(off).max(initial=0.0) > atol:
        raise StructureError("superoperator has off-diagonal entries; not a Z-word sum")
    n_legs = 2 * superop.replicas
    diag = np.diagonal(m)
    if np.abs(diag.imag).max() > atol:
        raise StructureError("Z-word coefficients are not real")
    coeffs = {}
    for letters in itertools.product("IZ", repeat=n_legs):
        word = "".join(letters)
        coeffs[word] = float(diag.real @ _word_diagonal(word)) / 2**n_legs
    return PauliDecomposition(superop.replicas, coeffs)


_PAIR_WORDS = ["".join("Z" if k in pair else "I" for k in range(4)) for pair in itertools.combinations(range(4), 2)]


def replica2_coefficients(kraus: KrausSet, rtol: float = 1e-10) -> tuple[float, float]:
    """``(alpha, beta)`` of ``T2 ~ 1 + alpha * (6 pair terms) + beta * ZZZZ``.

    Both are taken relative to the identity coefficient.
    """
    dec = pauli_decomposition(averaged_superoperator(kraus, 2))
    c0 = dec["IIII"]
    pairs = np.array([dec[w] for w in _PAIR_WORDS])
    scale = max(abs(c0), np.abs(pairs).max(), 1e-300)
    if np.ptp(pairs) > rtol * scale:
        raise StructureError(f"pair coefficients differ: {pairs}")
    odd = [w for w in dec.coefficients if w.count("Z") % 2]
    if max(abs(dec[w]) for w in odd) > rtol * scale:
        raise StructureError("odd Z words present; the Kraus set is not Z2-symmetric")
    return float(pairs.mean() / c0), float(dec["ZZZZ"] / c0)


def replica2_superoperator(alpha: float, beta: float) -> Superoperator:
    """``1 + alpha * (sum of pair words) + beta * ZZZZ`` as a 16x16 matrix."""
    diag = _word_diagonal("IIII") + alpha * sum(_word_diagonal(w) for w in _PAIR_WORDS)
    diag = diag + beta * _word_diagonal("ZZZZ")
    return Superoperator(2, np.diag(diag).astype(complex))


def gaussian_replica2_coefficients(alpha: float) -> tuple[float, float]:
    """Closed-form ``(alpha, beta)`` replica coefficients of the Gaussian set.

    Writing each leg factor as ``a(x) + b(x) Z`` with ``a, b`` the half sum
    and half difference of the two pointer amplitudes, the identity, pair
    and quartic coefficients are the integrals of ``a^4``, ``a^2 b^2`` and
    ``b^4``; the Gaussian overlaps give the exponentials below.
    """
    e15 = math.exp(-1.5 * alpha**2)
    e2 = math.exp(-2 * alpha**2)
    ident = 2 + 8 * e15 + 6 * e2
    return (2 - 2 * e2) / ident, (2 - 8 * e15 + 6 * e2) / ident


def replica2_bell_entropy(alpha: float, beta: float) -> float:
    """Renyi-2 entropy of qubit 1 of a Bell pair after the replicated map."""
    den = 2 + 4 * alpha + 2 * beta
    if den <= 0:
        raise ValueError("2 + 4 alpha + 2 beta must be positive")
    return -math.log2((1 + 6 * alpha + beta) / den) + 0.0


def _replicated_bell() -> np.ndarray:
    psi = bell_state().reshape(2, 2).T  # axes (site 1, site 2), site 1 = qubit 0
    rho = np.einsum("ab,cd->abcd", psi, psi.conj())  # k1 k2 b1 b2
    return np.einsum("abcd,efgh->abcdefgh", rho, rho)


def replica2_bell_entropy_bruteforce(alpha: float, beta: float, superop: Superoperator | None = None) -> float:
    """Brute-force ``-log2(<<I|C_A|rho>> / <<I|rho>>)`` on 256 components.

    The replicated Bell supervector carries legs
    ``(k1, k2, b1, b2)`` for each replica; the map acts on the four site-1
    legs and ``C_A`` swaps the bra legs of site 1 between replicas.
    """
    if superop is None:
        superop = replica2_superoperator(alpha, beta)
    t = superop.matrix.reshape((2,) * 8)
    r = _replicated_bell()
    # superoperator legs: (ket r1, bra r1, ket r2, bra r2) of site 1
    rf = np.einsum("pqrsaceg,abcdefgh->pbqdrfsh", t, r)
    d = np.eye(2)
    norm = np.einsum("abcdefgh,ac,bd,eg,fh->", rf, d, d, d, d)
    swap = np.einsum("abcdefgh,ag,ec,bd,fh->", rf, d, d, d, d)
    return -math.log2((swap / norm).real) + 0.0


def binary_entropy(q: float) -> float:
    out = 0.0
    for r in (q, 1 - q):
        if r > 0:
            out -= r * math.log2(r)
    return out


def np_final_entropy(lam: float) -> float:
    """Mean entropy of qubit 1 of a Bell pair after the NP(lam) measurement.

    Both outcomes leave qubit 1 with eigenvalues
    ``(1 +/- lam)^2 / (2 (1 + lam^2))``; valid for any ``lam >= 0``.
    """
    lam = float(lam)
    norm = 2 * (1 + lam * lam)
    out = 0.0
    for num in ((1 + lam) ** 2, (1 - lam) ** 2):
        if num > 0:
            out += num / norm * math.log2(norm / num)
    return out


def _gaussian_entropy_integrand(x, alpha):
    # p(x) * H2(q(x)) with q = 1 / (1 + exp(-4 alpha x)), in bits
    t = 4 * alpha * x
    h = (np.logaddexp(0, -t) / (1 + np.exp(-t)) + np.logaddexp(0, t) / (1 + np.exp(t))) / math.log(2)
    px = (np.exp(-((x - alpha) ** 2)) + np.exp(-((x + alpha) ** 2))) / (2 * math.sqrt(math.pi))
    return px * h


def gaussian_final_entropy(alpha: float) -> float:
    if alpha == 0:
        return 1.0
    lo, hi = -alpha - 12, alpha + 12
    return _quad(lambda x: _gaussian_entropy_integrand(x, alpha), lo, hi, sorted({-alpha, 0.0, alpha}))


def bell_entropy_loss(spec: UnfoldingSpec) -> float:
    """Average entropy change of qubit 1 of a Bell pair, ``S_f - 1`` (bits)."""
    k, v = spec.kind, spec.param
    if k is Kind.P:
        return 0.0 - v
    if k is Kind.U:
        return 0.0
    if k is Kind.NP:
        return np_final_entropy(v) - 1
    if k is Kind.G:
        return gaussian_final_entropy(v) - 1
    terms = [w * (1 + x * x) * np_final_entropy(abs(x)) for x, w in spec.expanded_atoms()]
    return math.fsum(terms) - 1


def bell_entropy_loss_enumerated(kraus: KrausSet) -> float:
    """Same quantity by applying every discrete Kraus operator to the Bell state."""
    if kraus.is_continuum:
        raise ValueError("enumeration needs a discrete Kraus set")
    total = []
    for m in kraus.ops:
        psi = bell_state().copy()
        psi = (np.kron(np.eye(2), m) @ psi)  # qubit 0 is the low bit
        prob = float(np.vdot(psi, psi).real)
        if prob <= 0:
            continue
        psi /= math.sqrt(prob)
        total.append(prob * von_neumann_entropy(reduced_density_matrix(psi, [0])))
    return math.fsum(total) - 1


def reciprocal_symmetry_check(lams) -> float:
    """Largest ``|S_f(lam) - S_f(1/lam)|`` over ``lams`` in (0, 1]."""
    lams = np.asarray(lams, dtype=float)
    if np.any(lams <= 0) or np.any(lams > 1):
        raise ValueError("lambda grid must lie in (0, 1]")
    return max(abs(np_final_entropy(l) - np_final_entropy(1 / l)) for l in lams)


def random_atomic_measure(p_eff: float, n_atoms: int, rng: np.random.Generator, max_tries: int = 100000):
    """Random GEN spec with ``n_atoms`` folded atoms in (0, 1] at rate ``p_eff``.

    Positions are uniform; all weights but the first two are drawn at random
    and those two are solved from the normalization and rate constraints.
    Draws with a negative solved weight are rejected.
    """
    if n_atoms < 2:
        raise ValueError("need at least two atoms to satisfy both constraints")
    for _ in range(max_tries):
        x = 1.0 - rng.random(n_atoms)
        free = rng.random(n_atoms - 2) / ((n_atoms - 1) * (1 + x[2:] ** 2))
        a = np.array([[1 + x[0] ** 2, 1 + x[1] ** 2], [x[0] ** 2, x[1] ** 2]])
        b = np.array([1 - free @ (1 + x[2:] ** 2), p_eff / 2 - free @ x[2:] ** 2])
        if abs(np.linalg.det(a)) < 1e-9:
            continue
        w01 = np.linalg.solve(a, b)
        if np.all(w01 > 0):
            w = np.concatenate((w01, free))
            return UnfoldingSpec(Kind.GEN, 0.0, tuple(zip(x.tolist(), w.tolist())))
    raise MeasureConstructionError(f"no valid measure found in {max_tries} draws at p_eff={p_eff}")


def _np_loss_magnitude(x):
    return 1 - np_final_entropy(x)


def optimality_scan(p_eff: float, n_random: int, rng: np.random.Generator, n_atoms: int = 3, x_step: float = 0.02) -> dict:
    """Compare random atomic measures against NP at the same effective rate.

    Also reports the curvature of ``|dS(x)|`` on ``[0, 1]`` and on the
    weighted strength ``y = x^2 / (1 + x^2)``, which is the variable the
    rate constraint is linear in.
    """
    if not 0 < p_eff < 1:
        raise ValueError("p_eff must lie in (0, 1)")
    np_loss = abs(bell_entropy_loss(invert_rate(Kind.NP, p_eff)))
    excess = []
    for _ in range(n_random):
        spec = random_atomic_measure(p_eff, n_atoms, rng)
        excess.append(abs(bell_entropy_loss(spec)) - np_loss)
    xs = np.linspace(0, 1, int(round(1 / x_step)) + 1)
    lx = np.array([_np_loss_magnitude(x) for x in xs])
    d2x = lx[2:] - 2 * lx[1:-1] + lx[:-2]
    ys = np.linspace(0, 0.5, len(xs))
    ly = np.array([_np_loss_magnitude(math.sqrt(y / (1 - y))) for y in ys])
    d2y = ly[2:] - 2 * ly[1:-1] + ly[:-2]
    p_loss = abs(bell_entropy_loss(embed_named_as_general(invert_rate(Kind.P, p_eff))))
    return {
        "p_eff": p_eff,
        "np_loss": np_loss,
        "n_random": n_random,
        "violations": int(sum(e > 1e-12 for e in excess)),
        "max_excess": float(max(excess)) if excess else None,
        "p_embedding_loss": p_loss,
        "convexity_in_x_min_second_difference": float(d2x.min()),
        "convexity_in_x_first_negative": float(xs[1:-1][np.argmax(d2x < -1e-9)]) if np.any(d2x < -1e-9) else None,
        "concavity_in_y_max_second_difference": float(d2y.max()),
    }


def _check(name, value, reference, tolerance, passed):
    return {
        "check": name,
        "value": value,
        "reference": reference,
        "tolerance": tolerance,
        "passed": bool(passed),
    }


def verification_report(kraus_builder=build_kraus, rng: np.random.Generator | None = None, n_random: int = 1000) -> list[dict]:
    """Run every analytic consistency check; one dict per check."""
    rng = np.random.default_rng(20221014) if rng is None else rng
    checks = []
    grid = [round(0.1 * k, 10) for k in range(11)]

    worst = {k: 0.0 for k in ("P", "NP", "U", "G")}
    trace_ok = True
    for p in grid:
        ref = dephasing_superoperator(p)
        for kind in worst:
            spec = invert_rate(kind, min(p, G_RATE_CAP) if kind == "G" else p)
            sup = averaged_superoperator(kraus_builder(spec), 1)
            worst[kind] = max(worst[kind], sup.max_difference(ref))
            trace_ok &= sup.is_trace_preserving(1e-8 if kind == "G" else 1e-12)
    for kind, val in worst.items():
        tol = 1e-8 if kind == "G" else 1e-12
        checks.append(_check(f"channel_equivalence_n1_{kind}", val, 0.0, tol, val <= tol))
    checks.append(_check("trace_preservation_n1", trace_ok, True, None, trace_ok))

    sup2 = {k: averaged_superoperator(kraus_builder(invert_rate(k, 0.5)), 2) for k in ("P", "NP", "U")}
    for a, b in itertools.combinations(sup2, 2):
        diff = sup2[a].max_difference(sup2[b])
        checks.append(_check(f"channel_inequivalence_n2_{a}_vs_{b}", diff, 1e-6, 1e-6, diff > 1e-6))
    for q in (0.1, 0.25, 0.4):
        alpha_u, _ = replica2_coefficients(kraus_builder(UnfoldingSpec(Kind.U, q)))
        checks.append(_check(f"unitary_no_pair_terms_q{q}", alpha_u, 0.0, 0.0, alpha_u == 0.0))

    ab_grid = np.linspace(0, 1, 5)
    table = [
        {
            "alpha": float(a),
            "beta": float(b),
            "formula": replica2_bell_entropy(a, b),
            "bruteforce": replica2_bell_entropy_bruteforce(a, b),
        }
        for a in ab_grid
        for b in ab_grid
    ]
    dev = max(abs(r["formula"] - r["bruteforce"]) for r in table)
    entry = _check("replica2_formula_vs_bruteforce", dev, 0.0, 1e-12, dev <= 1e-12)
    entry["grid"] = table
    checks.append(entry)
    s11 = replica2_bell_entropy(1, 1)
    checks.append(_check("replica2_projective_zero_entropy", s11, 0.0, 1e-12, abs(s11) <= 1e-12))

    dev_p = max(abs(bell_entropy_loss(UnfoldingSpec(Kind.P, p)) + p) for p in grid)
    checks.append(_check("bell_loss_P_equals_minus_p", dev_p, 0.0, 0.0, dev_p == 0.0))
    dev_u = max(abs(bell_entropy_loss(UnfoldingSpec(Kind.U, p / 2))) for p in grid)
    checks.append(_check("bell_loss_U_zero", dev_u, 0.0, 0.0, dev_u == 0.0))
    dev_r = reciprocal_symmetry_check(np.linspace(0.1, 1.0, 10))
    checks.append(_check("np_reciprocal_symmetry", dev_r, 0.0, 1e-12, dev_r < 1e-12))
    dev_e = max(
        abs(bell_entropy_loss(invert_rate("NP", p)) - bell_entropy_loss_enumerated(kraus_builder(invert_rate("NP", p))))
        for p in grid
    )
    checks.append(_check("bell_loss_NP_closed_form_vs_enumeration", dev_e, 0.0, 1e-12, dev_e <= 1e-12))

    order_ok = True
    for p in [round(0.1 * k, 10) for k in range(1, 10)]:
        loss = {k: abs(bell_entropy_loss(invert_rate(k, p))) for k in ("NP", "G", "P", "U")}
        order_ok &= loss["NP"] >= loss["G"] >= loss["P"] >= loss["U"] == 0
    checks.append(_check("bell_proxy_ordering", order_ok, True, None, order_ok))

    for p in (0.2, 0.4, 0.6):
        rep = optimality_scan(p, n_random, rng)
        checks.append(_check(f"np_optimality_p{p}", rep["violations"], 0, 1e-12, rep["violations"] == 0))
    conc = rep["concavity_in_y_max_second_difference"]
    checks.append(_check("loss_concave_in_weighted_strength", conc, 0.0, 1e-9, conc <= 1e-9))
    # |dS(x)| bends over near x ~ 0.46, so this fails; reported, not gating
    conv = rep["convexity_in_x_min_second_difference"]
    entry = _check("loss_convex_in_x", conv, 0.0, 1e-9, conv >= -1e-9)
    entry["advisory"] = True
    checks.append(entry)
    return checks


def report_passed(checks) -> bool:
    """True when every gating (non-advisory) check passed."""
    return all(c["passed"] for c in checks if not c.get("advisory"))
