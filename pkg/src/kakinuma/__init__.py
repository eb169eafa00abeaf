"""Numerical laboratory for the Kakinuma model of two-layer interfacial
gravity waves: elliptic reconstruction from canonical variables,
Hamiltonian time evolution, exact-reference Laplace solvers, and a
convergence-order verification harness."""

import os

# Desk-scale dense solves (a few hundred unknowns) are far faster on one
# BLAS thread than with a contended pool; override via KAKINUMA_BLAS_THREADS.
try:
    from threadpoolctl import threadpool_limits as _threadpool_limits

    _threadpool_limits(limits=int(os.environ.get("KAKINUMA_BLAS_THREADS", "1")))
except Exception:  # missing threadpoolctl is not fatal
    pass

from .grid import PeriodicGrid, PotentialVec, ScalarField
from .operators import InterfaceState, Velocities
from .params import ExpansionSpec, NondimParams, validate_params

__all__ = [
    "PeriodicGrid",
    "PotentialVec",
    "ScalarField",
    "InterfaceState",
    "Velocities",
    "ExpansionSpec",
    "NondimParams",
    "validate_params",
]

__version__ = "0.1.0"
