"""Dense pure-state engine on L qubits.

Amplitudes live in a flat complex128 array of length ``2**L``. Basis index
bit ``k`` is the Z eigenvalue of qubit ``k`` (qubit 0 is the least
significant bit), with bit value 0 meaning spin up (Z = +1).

Two-qubit gates use the index convention ``U[2 a + b, 2 a' + b']`` with
``a`` the bit of the first site argument and ``b`` the bit of the second,
so ``apply_two_qubit(psi, np.kron(A, B), i, j)`` applies ``A`` on ``i`` and
``B`` on ``j``.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from .unfoldings import KrausSet

__all__ = [
    "MeasurementDegeneracyError",
    "InvalidDensityMatrixError",
    "CapacityError",
    "DEFAULT_SUBSET_CAP",
    "product_state",
    "bell_state",
    "n_qubits",
    "haar_unitary",
    "apply_two_qubit",
    "apply_measurement",
    "measure_all_sites",
    "reduced_density_matrix",
    "von_neumann_entropy",
    "entropy_from_eigenvalues",
    "subset_entropy",
]

DEFAULT_SUBSET_CAP = 12
_EIG_CLIP = 1e-12
_EIG_NEGATIVE = -1e-8
_BORN_FLOOR = 1e-14


class MeasurementDegeneracyError(ArithmeticError):
    """Every Born weight of a measurement vanished numerically."""


class InvalidDensityMatrixError(ValueError):
    pass


class CapacityError(ValueError):
    """A reduced density matrix would exceed the configured size cap."""


def product_state(L: int) -> np.ndarray:
    """``|up ... up>`` on L qubits."""
    psi = np.zeros(2**L, dtype=np.complex128)
    psi[0] = 1.0
    return psi


def bell_state() -> np.ndarray:
    """``(|up up> + |down down>) / sqrt(2)`` on qubits 0 and 1."""
    psi = np.zeros(4, dtype=np.complex128)
    psi[0] = psi[3] = 1 / math.sqrt(2)
    return psi


def n_qubits(psi: np.ndarray) -> int:
    L = int(psi.size).bit_length() - 1
    if psi.ndim != 1 or 1 << L != psi.size:
        raise ValueError(f"state length {psi.size} is not a power of two")
    return L


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary: QR of a complex Ginibre matrix with phase fix."""
    if dim not in (2, 4):
        raise ValueError(f"dim must be 2 or 4, got {dim}")
    g = rng.standard_normal((dim, dim, 2))
    z = (g[..., 0] + 1j * g[..., 1]) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


# reassociation only; results are still deterministic for a given build
@numba.njit(cache=True, fastmath=True)
def _two_qubit_kernel(psi, u, qa, qb):
    lo = min(qa, qb)
    hi = max(qa, qb)
    ma = 1 << qa
    mb = 1 << qb
    u00, u01, u02, u03 = u[0, 0], u[0, 1], u[0, 2], u[0, 3]
    u10, u11, u12, u13 = u[1, 0], u[1, 1], u[1, 2], u[1, 3]
    u20, u21, u22, u23 = u[2, 0], u[2, 1], u[2, 2], u[2, 3]
    u30, u31, u32, u33 = u[3, 0], u[3, 1], u[3, 2], u[3, 3]
    n_lo = 1 << lo
    n_mid = 1 << (hi - lo - 1)
    n_hi = psi.size >> (hi + 1)
    for h in range(n_hi):
        for m in range(n_mid):
            off = (h << (hi + 1)) | (m << (lo + 1))
            for k in range(n_lo):
                i0 = off | k
                i1 = i0 | mb
                i2 = i0 | ma
                i3 = i2 | mb
                a0 = psi[i0]
                a1 = psi[i1]
                a2 = psi[i2]
                a3 = psi[i3]
                psi[i0] = u00 * a0 + u01 * a1 + u02 * a2 + u03 * a3
                psi[i1] = u10 * a0 + u11 * a1 + u12 * a2 + u13 * a3
                psi[i2] = u20 * a0 + u21 * a1 + u22 * a2 + u23 * a3
                psi[i3] = u30 * a0 + u31 * a1 + u32 * a2 + u33 * a3


@numba.njit(cache=True)
def _branch_weights(psi, site):
    m = 1 << site
    up = 0.0
    down = 0.0
    for h in range(psi.size >> (site + 1)):
        off = h << (site + 1)
        for k in range(off, off + m):
            a = psi[k]
            up += a.real * a.real + a.imag * a.imag
            b = psi[k + m]
            down += b.real * b.real + b.imag * b.imag
    return up, down


@numba.njit(cache=True)
def _abs2(psi):
    out = np.empty(psi.size)
    for k in range(psi.size):
        out[k] = psi[k].real * psi[k].real + psi[k].imag * psi[k].imag
    return out


@numba.njit(cache=True)
def _apply_site_factors(psi, factors):
    amp = np.empty(psi.size, dtype=np.complex128)
    amp[0] = 1.0
    for s in range(factors.shape[0]):
        n = 1 << s
        fu = factors[s, 0]
        fd = factors[s, 1]
        for i in range(n):
            amp[i + n] = amp[i] * fd
            amp[i] = amp[i] * fu
    for k in range(psi.size):
        psi[k] *= amp[k]


@numba.njit(cache=True)
def _scale_branches(psi, site, f_up, f_down):
    m = 1 << site
    for h in range(psi.size >> (site + 1)):
        off = h << (site + 1)
        for k in range(off, off + m):
            psi[k] *= f_up
            psi[k + m] *= f_down


def _check_site(site: int, L: int) -> None:
    if not 0 <= site < L:
        raise IndexError(f"site {site} out of range for {L} qubits")


def apply_two_qubit(psi: np.ndarray, u4: np.ndarray, i: int, j: int) -> np.ndarray:
    """Apply a 4x4 gate to sites ``(i, j)`` in place and return ``psi``."""
    L = n_qubits(psi)
    _check_site(i, L)
    _check_site(j, L)
    if i == j:
        raise ValueError("two-qubit gate needs distinct sites")
    _two_qubit_kernel(psi, np.ascontiguousarray(u4, dtype=np.complex128), i, j)
    return psi


def _outcome_sampler(kraus: KrausSet):
    """Return ``sample(up, down, rng, site) -> (outcome, f_up, f_down)``.

    ``up`` / ``down`` are the current weights of the two Z branches of the
    site; ``f_up`` / ``f_down`` are the normalized amplitude factors of the
    post-measurement state on those branches.
    """
    if kraus.is_continuum:
        alpha = kraus.continuum.alpha
        sd = math.sqrt(0.5)

        def sample(up, down, rng, site):
            # density over x is up*N(+alpha, 1/2) + down*N(-alpha, 1/2)
            branch_up = rng.random() * (up + down) < up
            x = (alpha if branch_up else -alpha) + rng.standard_normal() * sd
            shift = abs(alpha * x)
            f_up = math.exp(alpha * x - shift)
            f_down = math.exp(-alpha * x - shift)
            weight = f_up * f_up * up + f_down * f_down * down
            if weight < _BORN_FLOOR:
                raise MeasurementDegeneracyError(
                    f"Gaussian outcome x={x} has vanishing weight on site {site}"
                )
            scale = 1 / math.sqrt(weight)
            return x, complex(f_up * scale), complex(f_down * scale)

        return sample

    table = [
        (abs(d0) ** 2, abs(d1) ** 2, complex(d0), complex(d1))
        for d0, d1 in kraus.diagonals.tolist()
    ]

    def sample(up, down, rng, site):
        born = [a * up + b * down for a, b, _, _ in table]
        if not max(born) >= _BORN_FLOOR:
            raise MeasurementDegeneracyError(f"all Born weights below {_BORN_FLOOR} on site {site}")
        r = rng.random() * sum(born)
        j = 0
        acc = born[0]
        while (r >= acc or born[j] == 0) and j < len(born) - 1:
            j += 1
            acc += born[j]
        while born[j] == 0:
            j -= 1
        scale = 1 / math.sqrt(born[j])
        _, _, d0, d1 = table[j]
        return j, d0 * scale, d1 * scale

    return sample


def apply_measurement(psi: np.ndarray, kraus: KrausSet, site: int, rng: np.random.Generator):
    """Sample one outcome of ``kraus`` on ``site`` by the Born rule.

    Returns ``(outcome, psi)`` with ``psi`` updated in place to the
    normalized post-measurement state. Discrete sets report the operator
    index; the Gaussian set reports the real pointer reading ``x``.
    """
    L = n_qubits(psi)
    _check_site(site, L)
    up, down = _branch_weights(psi, site)
    outcome, f_up, f_down = _outcome_sampler(kraus)(up, down, rng, site)
    _scale_branches(psi, site, f_up, f_down)
    return outcome, psi


def measure_all_sites(psi: np.ndarray, kraus: KrausSet, rng: np.random.Generator) -> list:
    """Measure sites ``0 .. L-1`` in order, in place; return the outcomes.

    Same outcome distribution and random-number consumption as calling
    :func:`apply_measurement` site by site. Because every operator is
    Z-diagonal, the conditional branch weights are read from the marginals
    of ``|psi|^2`` and all factors are applied in one final pass.
    """
    L = n_qubits(psi)
    sample = _outcome_sampler(kraus)
    # marg[s][low + b * 2**s] = weight with bit s = b and bits below s = low
    marg = [None] * L
    marg[L - 1] = _abs2(psi)
    for s in range(L - 2, -1, -1):
        half = marg[s + 1].size // 2
        marg[s] = marg[s + 1][:half] + marg[s + 1][half:]
    g = np.ones(1)
    factors = np.empty((L, 2), dtype=np.complex128)
    outcomes = []
    for s in range(L):
        n = g.size
        up = float(marg[s][:n] @ g)
        down = float(marg[s][n:] @ g)
        outcome, f_up, f_down = sample(up, down, rng, s)
        outcomes.append(outcome)
        factors[s, 0] = f_up
        factors[s, 1] = f_down
        if s < L - 1:
            g = np.concatenate((g * (abs(f_up) ** 2), g * (abs(f_down) ** 2)))
    _apply_site_factors(psi, factors)
    return outcomes


def _validated_subset(subset, L: int) -> list[int]:
    subset = [int(s) for s in subset]
    if any(b <= a for a, b in zip(subset, subset[1:])):
        raise ValueError(f"subset must be strictly increasing, got {subset}")
    for s in subset:
        _check_site(s, L)
    return subset


def _subset_matrix(psi: np.ndarray, subset: list[int], L: int) -> np.ndarray:
    """Reshape psi into a (2^|subset|, 2^rest) matrix, row bit r = subset[r]."""
    rest = [q for q in range(L) if q not in subset]
    axes = [L - 1 - q for q in reversed(subset)] + [L - 1 - q for q in reversed(rest)]
    t = psi.reshape((2,) * L).transpose(axes)
    return t.reshape(2 ** len(subset), -1)


def reduced_density_matrix(psi: np.ndarray, subset, cap: int = DEFAULT_SUBSET_CAP) -> np.ndarray:
    """Partial trace of ``|psi><psi|`` onto ``subset`` (any strictly increasing sites).

    Row/column index bit ``r`` of the result refers to ``subset[r]``.
    """
    L = n_qubits(psi)
    subset = _validated_subset(subset, L)
    if len(subset) > min(L - 1, cap):
        raise CapacityError(
            f"subset of {len(subset)} sites exceeds the limit min(L-1, cap)={min(L - 1, cap)}"
        )
    m = _subset_matrix(psi, subset, L)
    return m @ m.conj().T


def entropy_from_eigenvalues(evals) -> float:
    evals = np.asarray(evals, dtype=float)
    if evals.size and evals.min() < _EIG_NEGATIVE:
        raise InvalidDensityMatrixError(f"eigenvalue {evals.min()} is negative")
    evals = evals[evals >= _EIG_CLIP]
    return float(-np.sum(evals * np.log2(evals)) + 0.0)


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Entropy in bits, eigenvalues below 1e-12 treated as zero."""
    return entropy_from_eigenvalues(np.linalg.eigvalsh(rho))


def subset_entropy(psi: np.ndarray, subset) -> float:
    """Entanglement entropy of ``subset`` for a pure state, in bits.

    Diagonalizes whichever of the subset or its complement is smaller, so it
    is not limited by the reduced-density-matrix cap.
    """
    L = n_qubits(psi)
    subset = _validated_subset(subset, L)
    if not subset or len(subset) == L:
        return 0.0
    if 2 * len(subset) > L:
        subset = [q for q in range(L) if q not in subset]
    m = _subset_matrix(psi, subset, L)
    return entropy_from_eigenvalues(np.linalg.eigvalsh(m @ m.conj().T))
