"""Measurement unfoldings of dephasing in hybrid random circuits.

Submodules: :mod:`unfoldings` (Kraus sets and rate maps), :mod:`statevector`
(simulator kernels), :mod:`circuit` (brick-wall trajectories),
:mod:`observables` (I3, ensembles, crossings), :mod:`analytic` (replica
superoperators and Bell-pair closed forms) and :mod:`cli`.
"""

from .unfoldings import Kind, KrausSet, UnfoldingSpec, build_kraus, effective_rate, invert_rate

__version__ = "0.1.0"

__all__ = ["Kind", "KrausSet", "UnfoldingSpec", "build_kraus", "effective_rate", "invert_rate", "__version__"]
