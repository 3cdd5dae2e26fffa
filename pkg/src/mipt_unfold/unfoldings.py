"""Measurement unfoldings of the single-qubit Z-dephasing channel.

Every unfolding here is a Z-diagonal generalized measurement whose
outcome-averaged channel multiplies the off-diagonal elements of a qubit
density matrix by ``1 - p_eff``. The kinds are

* ``P``   probabilistic projective measurement with probability ``p``
* ``NP``  two-outcome weak measurement ``(1 +/- lam Z) / sqrt(2 (1 + lam^2))``
* ``U``   random Z kick with probability ``q``
* ``G``   Gaussian-pointer weak measurement with separation ``alpha``
* ``GEN`` atomic mixture of ``beta(x) (1 + x Z)`` operators

Atoms of a ``GEN`` spec are stored folded: ``(x, w)`` with ``x >= 0`` and
``w`` the total weight of the ``+x`` / ``-x`` pair (an ``x = 0`` atom
carries its own weight). :meth:`UnfoldingSpec.expanded_atoms` returns the
symmetric form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

__all__ = [
    "Kind",
    "UnfoldingSpec",
    "KrausSet",
    "GaussianBranches",
    "UnfoldingDomainError",
    "RateSaturationError",
    "UnsupportedUnfoldingError",
    "effective_rate",
    "invert_rate",
    "build_kraus",
    "embed_named_as_general",
    "X_MAX",
    "G_RATE_CAP",
]

# Finite stand-in for the U atom at x -> infinity.
X_MAX = 1e8
# Largest p_eff accepted when inverting the Gaussian map (alpha diverges at 1).
G_RATE_CAP = 1.0 - 1e-12

_ATOL = 1e-12
_SIGMA_Z = np.diag([1.0, -1.0]).astype(complex)
_IDENTITY = np.eye(2, dtype=complex)


class UnfoldingDomainError(ValueError):
    """A parameter lies outside the admissible range of its unfolding."""


class RateSaturationError(UnfoldingDomainError):
    """The requested effective rate needs an infinite native parameter."""


class UnsupportedUnfoldingError(ValueError):
    """The operation is not defined for this kind of unfolding."""


class Kind(str, enum.Enum):
    P = "P"
    NP = "NP"
    U = "U"
    G = "G"
    GEN = "GEN"


_PARAM_NAME = {Kind.P: "p", Kind.NP: "lambda", Kind.U: "q", Kind.G: "alpha"}


@dataclass(frozen=True)
class UnfoldingSpec:
    """One unfolding and its native parameter.

    ``param`` is ``p`` for P, ``lambda`` for NP, ``q`` for U and ``alpha``
    for G. GEN ignores ``param`` and uses ``atoms`` (folded form).
    """

    kind: Kind
    param: float = 0.0
    atoms: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "param", float(self.param))
        object.__setattr__(
            self, "atoms", tuple((float(x), float(w)) for x, w in self.atoms)
        )
        _validate(self)

    @classmethod
    def general(cls, atoms) -> "UnfoldingSpec":
        """Build a GEN spec from a symmetric list of ``(x, w)`` atoms.

        Each ``(x, w)`` is one Kraus outcome ``sqrt(w) (1 + x Z)``. The list
        must be symmetric under ``x -> -x``; it is folded into pair weights.
        """
        pos: dict[float, float] = {}
        neg: dict[float, float] = {}
        zero = 0.0
        for x, w in atoms:
            x, w = float(x), float(w)
            if w <= 0:
                raise UnfoldingDomainError(f"atom weight must be positive, got {w}")
            if x == 0:
                zero += w
            elif x > 0:
                pos[x] = pos.get(x, 0.0) + w
            else:
                neg[-x] = neg.get(-x, 0.0) + w
        if set(pos) != set(neg) or any(
            not math.isclose(pos[x], neg[x], rel_tol=1e-12, abs_tol=1e-15) for x in pos
        ):
            raise UnfoldingDomainError("atoms must be symmetric under x -> -x")
        folded = [(0.0, zero)] if zero > 0 else []
        folded += [(x, pos[x] + neg[x]) for x in sorted(pos)]
        return cls(Kind.GEN, 0.0, tuple(folded))

    def expanded_atoms(self) -> list[tuple[float, float]]:
        """Symmetric ``(x, w)`` list, one entry per Kraus outcome."""
        out = []
        for x, w in self.atoms:
            if x == 0:
                out.append((0.0, w))
            else:
                out.append((x, w / 2))
                out.append((-x, w / 2))
        return out

    def __str__(self):
        if self.kind is Kind.GEN:
            return f"GEN[{len(self.atoms)} atoms]"
        return f"{self.kind.value}({_PARAM_NAME[self.kind]}={self.param:g})"


def _validate(spec: UnfoldingSpec) -> None:
    kind, v = spec.kind, spec.param
    if not math.isfinite(v):
        raise UnfoldingDomainError(f"{kind.value}: parameter must be finite, got {v}")
    if kind is Kind.P and not 0 <= v <= 1:
        raise UnfoldingDomainError(f"P: need 0 <= p <= 1, got p={v}")
    if kind is Kind.NP and not 0 <= v <= 1:
        raise UnfoldingDomainError(f"NP: need 0 <= lambda <= 1, got lambda={v}")
    if kind is Kind.U and not 0 <= v <= 0.5:
        raise UnfoldingDomainError(f"U: need 0 <= q <= 1/2, got q={v}")
    if kind is Kind.G and v < 0:
        raise UnfoldingDomainError(f"G: need alpha >= 0, got alpha={v}")
    if kind is not Kind.GEN:
        if spec.atoms:
            raise UnfoldingDomainError(f"{kind.value}: atoms are only used by GEN")
        return
    if not spec.atoms:
        raise UnfoldingDomainError("GEN: at least one atom is required")
    for x, w in spec.atoms:
        if x < 0 or not math.isfinite(x):
            raise UnfoldingDomainError(f"GEN: folded atom positions must be >= 0, got {x}")
        if w <= 0 or not math.isfinite(w):
            raise UnfoldingDomainError(f"GEN: atom weights must be positive, got {w}")
    norm = math.fsum(w * (1 + x * x) for x, w in spec.atoms)
    if abs(norm - 1) > _ATOL:
        raise UnfoldingDomainError(
            f"GEN: normalization sum w (1 + x^2) = {norm!r} must equal 1"
        )
    p = 2 * math.fsum(w * x * x for x, w in spec.atoms)
    if p > 1 + _ATOL:
        raise UnfoldingDomainError(f"GEN: effective rate {p!r} exceeds 1")


def effective_rate(spec: UnfoldingSpec) -> float:
    """Rate of the probabilistic projective measurement with the same channel."""
    v = spec.param
    if spec.kind is Kind.P:
        return v
    if spec.kind is Kind.NP:
        return 2 * v * v / (1 + v * v)
    if spec.kind is Kind.U:
        return 2 * v
    if spec.kind is Kind.G:
        return -math.expm1(-v * v)
    return min(1.0, 2 * math.fsum(w * x * x for x, w in spec.atoms))


def invert_rate(kind, p_eff: float) -> UnfoldingSpec:
    """Spec of the given kind whose effective rate is ``p_eff``."""
    kind = Kind(kind)
    p = float(p_eff)
    if not 0 <= p <= 1:
        raise UnfoldingDomainError(f"p_eff must lie in [0, 1], got {p}")
    if kind is Kind.P:
        return UnfoldingSpec(kind, p)
    if kind is Kind.NP:
        return UnfoldingSpec(kind, math.sqrt(p / (2 - p)))
    if kind is Kind.U:
        return UnfoldingSpec(kind, p / 2)
    if kind is Kind.G:
        if p > G_RATE_CAP:
            raise RateSaturationError(
                f"G: p_eff={p} needs alpha -> infinity (cap is {G_RATE_CAP!r})"
            )
        return UnfoldingSpec(kind, math.sqrt(-math.log1p(-p)))
    raise UnsupportedUnfoldingError("GEN has no canonical inverse of the rate map")


@dataclass(frozen=True)
class GaussianBranches:
    """Continuum Kraus family ``M(x) = d_up(x) P_up + d_down(x) P_down``.

    ``|d_up(x)|^2`` is the Normal(+alpha, 1/2) density and ``|d_down(x)|^2``
    the Normal(-alpha, 1/2) density.
    """

    alpha: float

    def amplitudes(self, x):
        """Diagonal entries ``(d_up, d_down)`` of ``M(x)``; broadcasts over x."""
        x = np.asarray(x, dtype=float)
        c = np.pi ** -0.25
        return (
            c * np.exp(-((x - self.alpha) ** 2) / 2),
            c * np.exp(-((x + self.alpha) ** 2) / 2),
        )

    def operator(self, x: float) -> np.ndarray:
        up, down = self.amplitudes(x)
        return np.diag([up, down]).astype(complex)

    def bounds(self, width: float = 12.0) -> tuple[float, float]:
        """Finite integration window; the integrands are below e^-140 outside."""
        return -self.alpha - width, self.alpha + width

    def completeness_error(self) -> float:
        lo, hi = self.bounds()
        pts = sorted({-self.alpha, 0.0, self.alpha})
        worst = 0.0
        for idx in (0, 1):
            val, _ = integrate.quad(
                lambda x: self.amplitudes(x)[idx] ** 2,
                lo,
                hi,
                points=pts,
                epsabs=1e-13,
                epsrel=1e-13,
                limit=200,
            )
            worst = max(worst, abs(val - 1))
        return worst


@dataclass(frozen=True, eq=False)
class KrausSet:
    """Z-diagonal Kraus operators of one unfolding.

    Discrete kinds fill ``ops`` with shape ``(k, 2, 2)``; the Gaussian kind
    leaves ``ops`` empty and sets ``continuum``.
    """

    ops: np.ndarray
    continuum: GaussianBranches | None = None

    def __post_init__(self):
        ops = np.array(self.ops, dtype=complex).reshape(-1, 2, 2)
        ops.setflags(write=False)
        object.__setattr__(self, "ops", ops)
        off = np.abs(ops[:, 0, 1]).max(initial=0.0) + np.abs(ops[:, 1, 0]).max(initial=0.0)
        if off > 0:
            raise UnfoldingDomainError("Kraus operators must be diagonal in the Z basis")
        if self.continuum is None and len(ops) == 0:
            raise UnfoldingDomainError("empty Kraus set")

    @property
    def is_continuum(self) -> bool:
        return self.continuum is not None

    @property
    def diagonals(self) -> np.ndarray:
        """``(k, 2)`` array of diagonal entries ``(M_j[up,up], M_j[down,down])``."""
        d = np.stack([self.ops[:, 0, 0], self.ops[:, 1, 1]], axis=1)
        d.setflags(write=False)
        return d

    def completeness_error(self) -> float:
        """Max-abs deviation of ``sum_j M_j^dag M_j`` from the identity."""
        if self.is_continuum:
            return self.continuum.completeness_error()
        total = np.einsum("kji,kjl->il", self.ops.conj(), self.ops)
        return float(np.abs(total - _IDENTITY).max())

    def __len__(self):
        return len(self.ops)


def _keep_nonzero(ops):
    return [op for op in ops if np.abs(op).max() > 0]


def build_kraus(spec: UnfoldingSpec) -> KrausSet:
    """Kraus operators of ``spec``; zero-weight operators are dropped."""
    k, v = spec.kind, spec.param
    if k is Kind.P:
        up = np.diag([1.0, 0.0])
        down = np.diag([0.0, 1.0])
        ops = [math.sqrt(v) * up, math.sqrt(v) * down, math.sqrt(1 - v) * _IDENTITY]
    elif k is Kind.NP:
        norm = math.sqrt(2 * (1 + v * v))
        ops = [(_IDENTITY + v * _SIGMA_Z) / norm, (_IDENTITY - v * _SIGMA_Z) / norm]
    elif k is Kind.U:
        ops = [math.sqrt(v) * _SIGMA_Z, math.sqrt(1 - v) * _IDENTITY]
    elif k is Kind.G:
        return KrausSet(np.zeros((0, 2, 2)), GaussianBranches(v))
    else:
        ops = [math.sqrt(w) * (_IDENTITY + x * _SIGMA_Z) for x, w in spec.expanded_atoms()]
    return KrausSet(np.array(_keep_nonzero(ops)))


def embed_named_as_general(spec: UnfoldingSpec, x_max: float = X_MAX) -> UnfoldingSpec:
    """Rewrite a P, NP or U spec as an equivalent atomic GEN spec."""
    k, v = spec.kind, spec.param
    if k is Kind.P:
        atoms = [(0.0, 1 - v), (1.0, v / 2)]
    elif k is Kind.NP:
        atoms = [(v, 1 / (1 + v * v))]
    elif k is Kind.U:
        atoms = [(0.0, 1 - v), (x_max, v / (1 + x_max * x_max))]
    elif k is Kind.GEN:
        return spec
    else:
        raise UnsupportedUnfoldingError(
            "G has a continuum of outcomes and no atomic embedding"
        )
    return UnfoldingSpec(Kind.GEN, 0.0, tuple((x, w) for x, w in atoms if w > 0))
