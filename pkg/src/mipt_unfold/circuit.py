"""Brick-wall hybrid circuit on a ring with per-site generalized measurements."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .statevector import (
    MeasurementDegeneracyError,
    apply_two_qubit,
    haar_unitary,
    measure_all_sites,
    product_state,
    subset_entropy,
)
from .unfoldings import UnfoldingSpec, build_kraus

__all__ = [
    "CircuitConfig",
    "SubsetEntropies",
    "TrajectoryResult",
    "quadrants",
    "seed_stream",
    "run_trajectory",
    "bonds",
]

ENTROPY_LABELS = ("A", "B", "C", "D", "AB", "BC", "AC", "ABC")


@dataclass(frozen=True)
class CircuitConfig:
    """Parameters of one circuit ensemble.

    ``n_layers`` and ``burn_in`` default to ``6 L`` and ``4 L``. With
    ``record_series`` unset only the final layer is recorded.
    """

    L: int
    unfolding: UnfoldingSpec
    n_layers: int | None = None
    burn_in: int | None = None
    master_seed: int = 0
    record_series: bool = False

    def __post_init__(self):
        if self.L < 4 or self.L % 4:
            raise ValueError(f"L must be a positive multiple of 4, got {self.L}")
        if self.n_layers is None:
            object.__setattr__(self, "n_layers", 6 * self.L)
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", min(4 * self.L, self.n_layers - 1))
        if self.n_layers < 1:
            raise ValueError("n_layers must be positive")
        if not 0 <= self.burn_in < self.n_layers:
            raise ValueError(f"need 0 <= burn_in < n_layers, got {self.burn_in}, {self.n_layers}")
        if self.master_seed < 0 or self.master_seed >= 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SubsetEntropies:
    """Von Neumann entropies (bits) of the ring quadrants and their unions."""

    A: float
    B: float
    C: float
    D: float
    AB: float
    BC: float
    AC: float
    ABC: float

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in ENTROPY_LABELS}


@dataclass(frozen=True)
class TrajectoryResult:
    trajectory_id: int
    snapshots: tuple[tuple[int, SubsetEntropies], ...] = field(default=())

    @property
    def final(self) -> SubsetEntropies:
        return self.snapshots[-1][1]


def quadrants(L: int) -> dict[str, list[int]]:
    """Site lists of A, B, C, D and the unions used by the entropy snapshot."""
    n = L // 4
    a, b, c, d = (list(range(k * n, (k + 1) * n)) for k in range(4))
    return {"A": a, "B": b, "C": c, "D": d, "AB": a + b, "BC": b + c, "AC": a + c, "ABC": a + b + c}


def bonds(L: int, layer: int) -> list[tuple[int, int]]:
    """Even bonds on even layers, odd bonds (wrapping the ring) on odd layers."""
    start = layer % 2
    return [(i, (i + 1) % L) for i in range(start, L, 2)]


def seed_stream(master_seed: int, trajectory_id: int) -> np.random.Generator:
    """Independent reproducible generator for one trajectory."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(int(trajectory_id),))
    return np.random.Generator(np.random.PCG64(seq))


def _snapshot(psi, regions) -> SubsetEntropies:
    return SubsetEntropies(**{k: subset_entropy(psi, regions[k]) for k in ENTROPY_LABELS})


def run_trajectory(config: CircuitConfig, trajectory_id: int) -> TrajectoryResult:
    """Evolve ``|up...up>`` through ``config.n_layers`` circuit steps.

    Each step applies fresh Haar gates on one brick sublayer and then one
    sampled measurement on every site, all drawn from
    ``seed_stream(config.master_seed, trajectory_id)``.
    """
    L = config.L
    rng = seed_stream(config.master_seed, trajectory_id)
    kraus = build_kraus(config.unfolding)
    regions = quadrants(L)
    psi = product_state(L)
    snapshots = []
    for t in range(config.n_layers):
        for i, j in bonds(L, t):
            apply_two_qubit(psi, haar_unitary(4, rng), i, j)
        try:
            measure_all_sites(psi, kraus, rng)
        except MeasurementDegeneracyError as err:
            raise MeasurementDegeneracyError(
                f"trajectory {trajectory_id}, layer {t}: {err}"
            ) from err
        if t == config.n_layers - 1 or (config.record_series and t >= config.burn_in):
            snapshots.append((t, _snapshot(psi, regions)))
    return TrajectoryResult(int(trajectory_id), tuple(snapshots))
