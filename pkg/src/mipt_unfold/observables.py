"""Tripartite mutual information, ensemble statistics and finite-size crossings."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .circuit import CircuitConfig, SubsetEntropies, TrajectoryResult
from .unfoldings import effective_rate

__all__ = [
    "EnsembleRow",
    "CrossingEstimate",
    "NoCrossingError",
    "DegenerateCrossingError",
    "tripartite_i3",
    "mean_and_stderr",
    "aggregate",
    "find_crossing",
]


class NoCrossingError(LookupError):
    """The two curves do not intersect inside their common range."""


class DegenerateCrossingError(ValueError):
    """The two curves coincide, so the crossing point is undefined."""


def tripartite_i3(e: SubsetEntropies) -> float:
    """``S_A + S_B + S_C + S_D - S_AB - S_BC - S_AC`` in bits."""
    return math.fsum((e.A, e.B, e.C, e.D, -e.AB, -e.BC, -e.AC))


def mean_and_stderr(values) -> tuple[float, float]:
    """Sample mean and standard error of the mean.

    Sums are exactly rounded, so the result does not depend on the order of
    ``values``.
    """
    values = [float(v) for v in values]
    n = len(values)
    if n == 0:
        raise ValueError("no values to aggregate")
    mean = math.fsum(values) / n
    if n == 1:
        return mean, math.nan
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass(frozen=True)
class EnsembleRow:
    """Statistics of one (kind, p_eff, L) cell over final-layer snapshots."""

    kind: str
    p_eff: float
    L: int
    n_traj: int
    S_AB_mean: float
    S_AB_err: float
    I3_mean: float
    I3_err: float
    quadrant_means: dict[str, float] = field(default_factory=dict)
    quadrant_errs: dict[str, float] = field(default_factory=dict)

    @property
    def S_AB_density(self) -> tuple[float, float]:
        return self.S_AB_mean / self.L, self.S_AB_err / self.L

    def as_dict(self) -> dict:
        return asdict(self)


def aggregate(results, config: CircuitConfig) -> EnsembleRow:
    """Reduce trajectories of one cell to means and standard errors."""
    results = list(results)
    if not results:
        raise ValueError("cannot aggregate an empty set of trajectories")
    finals = [r.final if isinstance(r, TrajectoryResult) else r for r in results]
    s_ab = mean_and_stderr(e.AB for e in finals)
    i3 = mean_and_stderr(tripartite_i3(e) for e in finals)
    quads = {q: mean_and_stderr(getattr(e, q) for e in finals) for q in "ABCD"}
    return EnsembleRow(
        kind=config.unfolding.kind.value,
        p_eff=effective_rate(config.unfolding),
        L=config.L,
        n_traj=len(finals),
        S_AB_mean=s_ab[0],
        S_AB_err=s_ab[1],
        I3_mean=i3[0],
        I3_err=i3[1],
        quadrant_means={q: v[0] for q, v in quads.items()},
        quadrant_errs={q: v[1] for q, v in quads.items()},
    )


@dataclass(frozen=True)
class CrossingEstimate:
    kind: str | None
    pair: tuple[int, int] | None
    p_c: float
    bootstrap_error: float
    n_resamples: int = 0
    n_resamples_crossing: int = 0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["pair"] = list(self.pair) if self.pair else None
        return d


def _as_curve(points):
    arr = np.array(sorted((float(p), float(y), float(e)) for p, y, e in points))
    if arr.ndim != 2 or len(arr) < 4:
        raise ValueError("each curve needs at least 4 points")
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise ValueError("curve abscissae must be distinct")
    return arr[:, 0], arr[:, 1], arr[:, 2]


def _first_root(p1, y1, p2, y2, lo, hi, n_grid):
    f1 = PchipInterpolator(p1, y1)
    f2 = PchipInterpolator(p2, y2)

    def diff(x):
        return f1(x) - f2(x)

    grid = np.union1d(np.linspace(lo, hi, n_grid), np.concatenate((p1, p2)))
    grid = grid[(grid >= lo) & (grid <= hi)]
    d = diff(grid)
    scale = 1 + max(np.abs(y1).max(), np.abs(y2).max())
    if np.abs(d).max() <= 1e-12 * scale:
        raise DegenerateCrossingError("curves coincide over the common range")
    for i in range(len(grid) - 1):
        if d[i] == 0:
            return float(grid[i])
        if d[i] * d[i + 1] < 0:
            return float(brentq(diff, grid[i], grid[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps))
    if d[-1] == 0:
        return float(grid[-1])
    return None


def find_crossing(
    curve1,
    curve2,
    *,
    n_boot: int = 200,
    rng: np.random.Generator | None = None,
    kind: str | None = None,
    pair: tuple[int, int] | None = None,
    n_grid: int = 2001,
) -> CrossingEstimate:
    """Lowest-p intersection of two ``(p, I3, err)`` curves.

    Each curve is interpolated with a monotone cubic (PCHIP). The error is
    the standard deviation of the crossing over ``n_boot`` resamples in
    which every point is shifted by Gaussian noise of its stated error;
    resamples without a crossing are skipped.

    Raises :class:`NoCrossingError` when the curves never meet and
    :class:`DegenerateCrossingError` when they coincide.
    """
    p1, y1, e1 = _as_curve(curve1)
    p2, y2, e2 = _as_curve(curve2)
    lo, hi = max(p1[0], p2[0]), min(p1[-1], p2[-1])
    in1 = np.count_nonzero((p1 >= lo) & (p1 <= hi))
    in2 = np.count_nonzero((p2 >= lo) & (p2 <= hi))
    if hi <= lo or in1 < 4 or in2 < 4:
        raise ValueError("curves need at least 4 points each on a common p range")
    root = _first_root(p1, y1, p2, y2, lo, hi, n_grid)
    if root is None:
        raise NoCrossingError(f"no crossing on [{lo:g}, {hi:g}]")
    rng = np.random.default_rng(0) if rng is None else rng
    boots = []
    for _ in range(n_boot):
        b1 = y1 + e1 * rng.standard_normal(y1.shape)
        b2 = y2 + e2 * rng.standard_normal(y2.shape)
        try:
            r = _first_root(p1, b1, p2, b2, lo, hi, n_grid)
        except DegenerateCrossingError:
            r = root
        if r is not None:
            boots.append(r)
    err = float(np.std(boots, ddof=1)) if len(boots) > 1 else math.nan
    return CrossingEstimate(kind, tuple(pair) if pair else None, root, err, n_boot, len(boots))
