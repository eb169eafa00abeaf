"""Nondimensional parameters, expansion choices, and model constants.

The two-layer setup is described by relative densities (rho1, rho2),
relative depths (h1, h2) and a shallowness parameter delta.  Only three of
these are free: the densities sum to one and rho1/h1 + rho2/h2 = 1, so a
parameter set is entered as the triple (rho1, h1, delta) and completed
here.  The per-layer shallowness parameters are delta1 = h1*delta and
delta2 = h2*delta.

The vertical expansion of the layer potentials uses powers H^(p_i) of the
layer thickness.  Two validated exponent choices exist: even powers
p_i = 2i with Nstar = N (flat bottom), and all powers p_i = i with
Nstar = 2N (general bottom).  The upper layer always uses even powers.
"""

import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    ConstraintViolation,
    DegenerateDenominator,
    RegimeWarning,
    SingularBorderedMatrix,
)

#: Depth-ratio gate above which a RegimeWarning is emitted (1/h1 + 1/h2).
REGIME_GATE = 10.0


@dataclass(frozen=True)
class NondimParams:
    """Relative densities, relative depths and shallowness parameter."""

    rho1: float
    rho2: float
    h1: float
    h2: float
    delta: float

    @property
    def delta1(self) -> float:
        return self.h1 * self.delta

    @property
    def delta2(self) -> float:
        return self.h2 * self.delta

    def with_delta(self, delta: float) -> "NondimParams":
        """Same stratification at a different shallowness (sweep helper)."""
        return validate_params(self.rho1, self.h1, delta)


def validate_params(rho1: float, h1: float, delta: float) -> NondimParams:
    """Complete and validate a parameter triple.

    rho2 and h2 are determined by rho1 + rho2 = 1 and
    rho1/h1 + rho2/h2 = 1.  Raises ConstraintViolation naming the violated
    relation; emits RegimeWarning (non-fatal) when 1/h1 + 1/h2 exceeds the
    gate, flagging the depth-ratio regimes excluded by the theory.
    """
    if not 0.0 < rho1 < 1.0:
        raise ConstraintViolation(f"need 0 < rho1 < 1, got rho1={rho1}")
    if h1 <= rho1:
        raise ConstraintViolation(
            f"need h1 > rho1 so that rho2/h2 = 1 - rho1/h1 > 0, got h1={h1}, rho1={rho1}"
        )
    if delta <= 0.0:
        raise ConstraintViolation(f"need delta > 0, got delta={delta}")
    rho2 = 1.0 - rho1
    h2 = rho2 / (1.0 - rho1 / h1)
    if h1 * delta > 1.0:
        raise ConstraintViolation(f"h1*delta = {h1 * delta} exceeds 1")
    if h2 * delta > 1.0:
        raise ConstraintViolation(f"h2*delta = {h2 * delta} exceeds 1")
    if 1.0 / h1 + 1.0 / h2 > REGIME_GATE:
        warnings.warn(
            f"1/h1 + 1/h2 = {1.0 / h1 + 1.0 / h2:.3g} > {REGIME_GATE}: outside the "
            "depth-ratio regime the theory targets",
            RegimeWarning,
            stacklevel=2,
        )
    return NondimParams(rho1=rho1, rho2=rho2, h1=h1, h2=h2, delta=delta)


@dataclass(frozen=True)
class ExpansionSpec:
    """Choice of vertical exponents for the two layer expansions.

    The upper layer always uses exponents (0, 2, ..., 2N).  The lower
    layer uses p = (p_0, ..., p_Nstar) with p_0 = 0 strictly increasing;
    the two validated cases are tagged 'H1' (p_i = 2i, Nstar = N) and
    'H2' (p_i = i, Nstar = 2N).  Other p-sequences are constructible but
    experimental: the consistency order is only established for H1/H2.
    """

    N: int
    Nstar: int
    p: tuple
    case: str

    def __post_init__(self):
        if self.N < 0 or self.Nstar < 0:
            raise ConstraintViolation("N and Nstar must be nonnegative")
        if len(self.p) != self.Nstar + 1 or self.p[0] != 0:
            raise ConstraintViolation("p must have Nstar+1 entries starting at 0")
        if any(b <= a for a, b in zip(self.p, self.p[1:])):
            raise ConstraintViolation("p must be strictly increasing")
        if self.case == "H1" and (self.Nstar != self.N or self.p != tuple(2 * i for i in range(self.N + 1))):
            raise ConstraintViolation("case H1 requires Nstar = N and p_i = 2i")
        if self.case == "H2" and (self.Nstar != 2 * self.N or self.p != tuple(range(2 * self.N + 1))):
            raise ConstraintViolation("case H2 requires Nstar = 2N and p_i = i")

    @property
    def upper_p(self) -> tuple:
        """Exponents of the upper-layer expansion (always even powers)."""
        return tuple(2 * i for i in range(self.N + 1))

    def exponents(self, layer: int) -> tuple:
        if layer == 1:
            return self.upper_p
        if layer == 2:
            return self.p
        raise IndexError(f"layer must be 1 or 2, got {layer}")

    @classmethod
    def flat_bottom(cls, N: int) -> "ExpansionSpec":
        """Case H1: even powers, flat bottom."""
        return cls(N=N, Nstar=N, p=tuple(2 * i for i in range(N + 1)), case="H1")

    @classmethod
    def general_bottom(cls, N: int) -> "ExpansionSpec":
        """Case H2: all powers up to 2N, variable bottom."""
        return cls(N=N, Nstar=2 * N, p=tuple(range(2 * N + 1)), case="H2")

    @classmethod
    def from_case(cls, case: str, N: int) -> "ExpansionSpec":
        if case == "H1":
            return cls.flat_bottom(N)
        if case == "H2":
            return cls.general_bottom(N)
        raise ConstraintViolation(f"unknown expansion case {case!r}")


@dataclass(frozen=True)
class StabilityConstants:
    """The positive constants weighting the shear term of the stability
    condition; they decrease as the expansion order grows."""

    alpha1: float
    alpha2: float


def base_matrix(spec: ExpansionSpec, layer: int) -> np.ndarray:
    """Flat-state Gram matrix of the layer's exponent family,
    entries 1/(p_i + p_j + 1).  Symmetric positive definite."""
    p = spec.exponents(layer)
    n = len(p)
    return np.array([[1.0 / (p[i] + p[j] + 1) for j in range(n)] for i in range(n)])


def _base_matrix_exact(p):
    n = len(p)
    return [[Fraction(1, p[i] + p[j] + 1) for j in range(n)] for i in range(n)]


def _det_exact(mat):
    """Fraction-exact determinant by Gaussian elimination with pivoting."""
    a = [row[:] for row in mat]
    n = len(a)
    det = Fraction(1)
    for k in range(n):
        piv = next((i for i in range(k, n) if a[i][k] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != k:
            a[k], a[piv] = a[piv], a[k]
            det = -det
        det *= a[k][k]
        for i in range(k + 1, n):
            f = a[i][k] / a[k][k]
            for j in range(k, n):
                a[i][j] -= f * a[k][j]
    return det


def alpha_constant(spec: ExpansionSpec, layer: int) -> float:
    """det(A)/det(bordered A) for the layer's flat base matrix.

    Computed in exact rational arithmetic: the matrices are Hilbert-like
    and badly conditioned in floating point already at moderate order.
    """
    p = spec.exponents(layer)
    a = _base_matrix_exact(p)
    n = len(p)
    bordered = [[Fraction(0)] * (n + 1) for _ in range(n + 1)]
    for j in range(n):
        bordered[0][j + 1] = Fraction(1)
    for i in range(n):
        bordered[i + 1][0] = Fraction(-1)
        for j in range(n):
            bordered[i + 1][j + 1] = a[i][j]
    det_a = _det_exact(a)
    det_b = _det_exact(bordered)
    if det_b == 0:
        raise SingularBorderedMatrix(f"bordered base matrix singular for p={p}")
    alpha = det_a / det_b
    if alpha <= 0:
        raise SingularBorderedMatrix(f"nonpositive alpha for p={p}: {alpha}")
    return float(alpha)


def stability_constants(spec: ExpansionSpec) -> StabilityConstants:
    return StabilityConstants(
        alpha1=alpha_constant(spec, 1), alpha2=alpha_constant(spec, 2)
    )


def theta_weights(params: NondimParams, H1, H2, alpha1: float, alpha2: float):
    """Convex weights splitting the interface velocity between the layers.

    theta1 = rho2*h1*H1*alpha1 / (rho1*h2*H2*alpha2 + rho2*h1*H1*alpha1),
    theta2 = 1 - theta1.  H1, H2 may be scalars or arrays (pointwise).
    """
    w1 = params.rho2 * params.h1 * np.asarray(H1, dtype=float) * alpha1
    w2 = params.rho1 * params.h2 * np.asarray(H2, dtype=float) * alpha2
    denom = w1 + w2
    if np.any(denom <= np.finfo(float).tiny):
        raise DegenerateDenominator("theta denominator underflow: layer pinch-off")
    theta1 = w1 / denom
    return theta1, 1.0 - theta1
