"""Operator algebra of the two-layer model.

Both layers share one operator family once written in normalized
variables: a layer is described by its exponent list p, its shallowness
kappa = h_l*delta, its thickness field H, and (lower layer only) the
scaled bottom slope beta = grad(b)/h2.  The upper layer is the flat-slope
member of the family with even exponents; the identities

    L1(H1, delta, h1) = L(H1, 0, h1*delta)
    L2(H2, b, delta, h2) = L(H2, b/h2, h2*delta)

let everything be implemented once.

The family consists of the second order blocks

    L_ij f = -d/dx( H^(pi+pj+1)/(pi+pj+1) * f' - pj/(pi+pj) H^(pi+pj) beta f )
             - pi/(pi+pj) H^(pi+pj) beta f'
             + pi*pj/(pi+pj-1) H^(pi+pj-1) (kappa^-2 + beta^2) f

with the convention 0/0 = 0, realized here as a coefficient table that is
identically zero whenever the defining ratio is 0/0; no runtime division
produces the convention.  The constrained rows are

    calL_0 phi = sum_j L_0j phi_j,
    calL_i phi = sum_j (L_ij - H^(pi) L_0j) phi_j      (i >= 1).
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import CavitationError, IndexOutOfRange
from .grid import PeriodicGrid, PotentialVec, ScalarField
from .params import ExpansionSpec, NondimParams


@dataclass(frozen=True)
class InterfaceState:
    """Interface elevation and bottom over one grid; thicknesses are
    recomputed from (zeta, b, params), never stored."""

    zeta: ScalarField
    b: ScalarField
    params: NondimParams

    @cached_property
    def H1(self) -> ScalarField:
        return ScalarField(self.zeta.grid, 1.0 - self.zeta.values / self.params.h1)

    @cached_property
    def H2(self) -> ScalarField:
        return ScalarField(
            self.zeta.grid, 1.0 + (self.zeta.values - self.b.values) / self.params.h2
        )

    @property
    def grid(self) -> PeriodicGrid:
        return self.zeta.grid

    def min_thickness(self):
        return float(self.H1.values.min()), float(self.H2.values.min())

    def require_noncavitation(self, floor: float = 0.0):
        m1, m2 = self.min_thickness()
        if m1 <= floor or m2 <= floor:
            raise CavitationError(f"layer pinch-off: min H1={m1:.3g}, min H2={m2:.3g}")

    @classmethod
    def rest(cls, grid: PeriodicGrid, params: NondimParams) -> "InterfaceState":
        z = ScalarField.zeros(grid)
        return cls(zeta=z, b=z, params=params)


@dataclass(frozen=True)
class Velocities:
    """Approximate interface velocities; at rest all four vanish."""

    u1: ScalarField
    u2: ScalarField
    w1: ScalarField
    w2: ScalarField


def _ratio(num: int, den: int) -> float:
    """The model's 0/0 = 0 convention, decided at table-build time."""
    if num == 0:
        return 0.0
    return num / den


class LayerOps:
    """One layer's operators in normalized variables (see module docstring).

    Immutable once built; dense assemblies and H-powers are cached, so
    construction is not thread-safe but applications are.
    """

    def __init__(self, p, kappa: float, H: ScalarField, beta: ScalarField | None = None):
        self.p = tuple(int(q) for q in p)
        self.kappa = float(kappa)
        self.H = H
        self.beta = beta
        self.grid = H.grid
        if float(H.values.min()) <= 0.0:
            raise CavitationError(f"min thickness {H.values.min():.3g} <= 0")
        self._Hpow = {}
        self._dense = {}

    @property
    def K(self) -> int:
        return len(self.p)

    def Hpow(self, k: int) -> ScalarField:
        """H^k by repeated dealiased multiplication (exact integer powers)."""
        if k not in self._Hpow:
            self._Hpow[k] = self.H ** k
        return self._Hpow[k]

    # -- l vectors ---------------------------------------------------------

    def lvec(self, order: int = 0) -> PotentialVec:
        """l, l' or l'' evaluated pointwise: components p*H^(p-1) etc.;
        component 0 of l is the constant 1, of l' and l'' it is 0."""
        cached = self._dense.get(("lvec", order))
        if cached is not None:
            return cached
        comps = []
        for q in self.p:
            if order == 0:
                comps.append(self.Hpow(q))
            elif order == 1:
                comps.append(
                    ScalarField.zeros(self.grid) if q == 0 else q * self.Hpow(q - 1)
                )
            elif order == 2:
                comps.append(
                    ScalarField.zeros(self.grid)
                    if q * (q - 1) == 0
                    else q * (q - 1) * self.Hpow(q - 2)
                )
            else:
                raise ValueError("derivative order must be 0, 1 or 2")
        out = PotentialVec(comps)
        self._dense[("lvec", order)] = out
        return out

    def trace(self, phi: PotentialVec) -> ScalarField:
        """l . phi, the expansion evaluated at the interface."""
        return phi.dot(self.lvec(0))

    # -- block applications ------------------------------------------------

    def _block_terms(self, i: int, j: int):
        pi, pj = self.p[i], self.p[j]
        s = pi + pj
        return (
            1.0 / (s + 1),            # flux coefficient of H^(s+1)
            _ratio(pj, s),            # bottom term inside the divergence
            _ratio(pi, s),            # bottom term outside
            _ratio(pi * pj, s - 1),   # zeroth order coefficient of H^(s-1)
            s,
        )

    def apply_block(self, i: int, j: int, f: ScalarField) -> ScalarField:
        """L_ij f by FFT differentiation and dealiased products."""
        a_c, b_c, g_c, c_c, s = self._block_terms(i, j)
        flux = a_c * (self.Hpow(s + 1) * f.deriv())
        if b_c != 0.0 and self.beta is not None:
            flux = flux - b_c * (self.Hpow(s) * (self.beta * f))
        out = -flux.deriv()
        if g_c != 0.0 and self.beta is not None:
            out = out - g_c * (self.Hpow(s) * (self.beta * f.deriv()))
        if c_c != 0.0:
            zero_order = self.kappa ** -2 * self.Hpow(s - 1)
            if self.beta is not None:
                zero_order = zero_order + self.Hpow(s - 1) * (self.beta * self.beta)
            out = out + c_c * (zero_order * f)
        return out

    def apply_L(self, phi: PotentialVec) -> PotentialVec:
        """All rows (sum_j L_ij phi_j)_i."""
        rows = []
        for i in range(self.K):
            acc = ScalarField.zeros(self.grid)
            for j in range(self.K):
                acc = acc + self.apply_block(i, j, phi[j])
            rows.append(acc)
        return PotentialVec(rows)

    def apply_calL(self, phi: PotentialVec, i: int) -> ScalarField:
        """Constrained row: row 0 of L for i = 0, else row i minus H^(pi)
        times row 0."""
        if not 0 <= i < self.K:
            raise IndexOutOfRange(f"row {i} outside 0..{self.K - 1}")
        row = ScalarField.zeros(self.grid)
        for j in range(self.K):
            row = row + self.apply_block(i, j, phi[j])
        if i == 0:
            return row
        row0 = ScalarField.zeros(self.grid)
        for j in range(self.K):
            row0 = row0 + self.apply_block(0, j, phi[j])
        return row - self.Hpow(self.p[i]) * row0

    def apply_calL_all(self, phi: PotentialVec) -> PotentialVec:
        """All constrained rows, sharing the row-0 evaluation."""
        rows = [
            sum(
                (self.apply_block(i, j, phi[j]) for j in range(self.K)),
                ScalarField.zeros(self.grid),
            )
            for i in range(self.K)
        ]
        out = [rows[0]]
        for i in range(1, self.K):
            out.append(rows[i] - self.Hpow(self.p[i]) * rows[0])
        return PotentialVec(out)

    def calL_values(self, mat: np.ndarray) -> np.ndarray:
        """All constrained rows on a raw (K, M) coefficient array with
        plain pointwise products, mirroring the dense collocation matrix
        action (used for factorization-free residual iteration)."""
        K, M = self.K, self.grid.M
        dmat = self.grid.deriv_values(mat)
        flux = np.zeros((K, M))
        rows = np.zeros((K, M))
        beta = self.beta.values if self.beta is not None else None
        dbeta2 = beta**2 if beta is not None else None
        for i in range(K):
            acc_flux = np.zeros(M)
            for j in range(K):
                a_c, b_c, g_c, c_c, s = self._block_terms(i, j)
                acc_flux += a_c * self.Hpow(s + 1).values * dmat[j]
                if beta is not None and b_c != 0.0:
                    acc_flux -= b_c * self.Hpow(s).values * beta * mat[j]
                if beta is not None and g_c != 0.0:
                    rows[i] -= g_c * self.Hpow(s).values * beta * dmat[j]
                if c_c != 0.0:
                    zo = self.kappa ** -2 * self.Hpow(s - 1).values
                    if beta is not None:
                        zo = zo + self.Hpow(s - 1).values * dbeta2
                    rows[i] += c_c * zo * mat[j]
            flux[i] = acc_flux
        rows -= self.grid.deriv_values(flux)
        out = rows.copy()
        for i in range(1, K):
            out[i] = rows[i] - self.Hpow(self.p[i]).values * rows[0]
        return out

    def trace_values(self, mat: np.ndarray) -> np.ndarray:
        """Plain-product trace l . phi on a raw (K, M) array."""
        out = np.zeros(self.grid.M)
        for q, row in zip(self.p, mat):
            out += self.Hpow(q).values * row
        return out

    # -- time-derivative commutators ----------------------------------------

    def apply_dH_block(self, i: int, j: int, f: ScalarField) -> ScalarField:
        """(d/dH L_ij) f: every coefficient polynomial differentiated in H."""
        a_c, b_c, g_c, c_c, s = self._block_terms(i, j)
        pi, pj = self.p[i], self.p[j]
        flux = self.Hpow(s) * f.deriv()
        if b_c != 0.0 and self.beta is not None:
            flux = flux - pj * (self.Hpow(s - 1) * (self.beta * f))
        out = -flux.deriv()
        if g_c != 0.0 and self.beta is not None:
            out = out - pi * (self.Hpow(s - 1) * (self.beta * f.deriv()))
        if c_c != 0.0:
            zero_order = self.kappa ** -2 * self.Hpow(s - 2)
            if self.beta is not None:
                zero_order = zero_order + self.Hpow(s - 2) * (self.beta * self.beta)
            out = out + pi * pj * (zero_order * f)
        return out

    def apply_dH_calL(self, phi: PotentialVec, i: int) -> ScalarField:
        """(d/dH calL_i) phi; for i >= 1 the product rule contributes the
        -pi H^(pi-1) row-0 term."""
        row = ScalarField.zeros(self.grid)
        for j in range(self.K):
            row = row + self.apply_dH_block(i, j, phi[j])
        if i == 0:
            return row
        row0 = ScalarField.zeros(self.grid)
        drow0 = ScalarField.zeros(self.grid)
        for j in range(self.K):
            row0 = row0 + self.apply_block(0, j, phi[j])
            drow0 = drow0 + self.apply_dH_block(0, j, phi[j])
        pi = self.p[i]
        out = row - self.Hpow(pi) * drow0
        if pi > 0:
            out = out - pi * (self.Hpow(pi - 1) * row0)
        return out

    # -- pointwise coefficient matrices --------------------------------------

    def pointwise_A(self) -> np.ndarray:
        """(K, K, M) array A_ij(H) = H^(pi+pj+1)/(pi+pj+1)."""
        K, M = self.K, self.grid.M
        out = np.empty((K, K, M))
        for i in range(K):
            for j in range(K):
                s = self.p[i] + self.p[j]
                out[i, j] = self.Hpow(s + 1).values / (s + 1)
        return out

    def pointwise_C(self) -> np.ndarray:
        """(K, K, M) array C_ij(H) = pi*pj/(pi+pj-1) H^(pi+pj-1), 0/0 = 0."""
        K, M = self.K, self.grid.M
        out = np.zeros((K, K, M))
        for i in range(K):
            for j in range(K):
                c = _ratio(self.p[i] * self.p[j], self.p[i] + self.p[j] - 1)
                if c != 0.0:
                    out[i, j] = c * self.Hpow(self.p[i] + self.p[j] - 1).values
        return out

    def pointwise_B(self) -> np.ndarray:
        """(K, K, M) array B_ij(H) = pj/(pi+pj) H^(pi+pj), 0/0 = 0."""
        K, M = self.K, self.grid.M
        out = np.zeros((K, K, M))
        for i in range(K):
            for j in range(K):
                c = _ratio(self.p[j], self.p[i] + self.p[j])
                if c != 0.0:
                    out[i, j] = c * self.Hpow(self.p[i] + self.p[j]).values
        return out

    # -- velocities and Bernoulli -------------------------------------------

    def velocity(self, phi: PotentialVec) -> ScalarField:
        """Normalized horizontal velocity
        sum_i (H^pi grad(phi_i) - pi H^(pi-1) phi_i beta)."""
        u = ScalarField.zeros(self.grid)
        for q, comp in zip(self.p, phi):
            u = u + self.Hpow(q) * comp.deriv()
        if self.beta is not None:
            u = u - self.beta * phi.dot(self.lvec(1))
        return u

    def vertical(self, phi: PotentialVec) -> ScalarField:
        """Normalized vertical velocity l' . phi."""
        return phi.dot(self.lvec(1))

    def bernoulli(self, phi: PotentialVec, lam: ScalarField | None = None) -> ScalarField:
        """Normalized Bernoulli contribution
        (|u|^2 + kappa^-2 w^2)/2 - w * calL_0(phi)."""
        u = self.velocity(phi)
        w = self.vertical(phi)
        if lam is None:
            lam = self.apply_calL(phi, 0)
        return 0.5 * (u * u + self.kappa ** -2 * (w * w)) - w * lam

    # -- dense assembly -------------------------------------------------------

    def _flux_sandwich(self, s: int) -> np.ndarray:
        """D @ diag(H^(s+1)) @ D, shared across blocks with equal pi+pj."""
        key = ("T", s)
        if key not in self._dense:
            D = self.grid.deriv_matrix(1)
            self._dense[key] = (D * self.Hpow(s + 1).values[None, :]) @ D
        return self._dense[key]

    def dense_block(self, i: int, j: int) -> np.ndarray:
        a_c, b_c, g_c, c_c, s = self._block_terms(i, j)
        D = self.grid.deriv_matrix(1)
        out = -a_c * self._flux_sandwich(s)
        if self.beta is not None and (b_c != 0.0 or g_c != 0.0):
            bv = self.beta.values
            Hs = self.Hpow(s).values
            if b_c != 0.0:
                out = out + b_c * (D * (bv * Hs)[None, :])
            if g_c != 0.0:
                out = out - g_c * ((bv * Hs)[:, None] * D)
        if c_c != 0.0:
            zero_order = self.kappa ** -2 * self.Hpow(s - 1).values
            if self.beta is not None:
                zero_order = zero_order + self.Hpow(s - 1).values * self.beta.values ** 2
            out = out + np.diag(c_c * zero_order)
        return out

    def dense_calL_rows(self) -> np.ndarray:
        """(K*M, K*M) matrix whose i-th block row is calL_i."""
        K, M = self.K, self.grid.M
        blocks = [[self.dense_block(i, j) for j in range(K)] for i in range(K)]
        rows = np.zeros((K * M, K * M))
        for j in range(K):
            rows[:M, j * M:(j + 1) * M] = blocks[0][j]
        for i in range(1, K):
            Hp = self.Hpow(self.p[i]).values[:, None]
            for j in range(K):
                rows[i * M:(i + 1) * M, j * M:(j + 1) * M] = (
                    blocks[i][j] - Hp * blocks[0][j]
                )
        return rows

    def dense_trace_row(self) -> np.ndarray:
        """(M, K*M) matrix of the trace functional l . phi."""
        K, M = self.K, self.grid.M
        row = np.zeros((M, K * M))
        for j in range(K):
            row[:, j * M:(j + 1) * M] = np.diag(self.Hpow(self.p[j]).values)
        return row

    # -- alternate assembly (cross-check path) --------------------------------

    def apply_L_alternate(self, phi: PotentialVec) -> PotentialVec:
        """Matrix-form assembly
        -A(H) Lap(phi) - l (u . grad H) + kappa^-2 C phi
        + (B - B^T)(beta . grad) phi + (beta^2 C + beta' B) phi,
        algebraically equal to apply_L; kept as an independent route."""
        K = self.K
        A = self.pointwise_A()
        C = self.pointwise_C()
        lap = [phi[j].deriv(2).values for j in range(K)]
        u = self.velocity(phi)
        gradH = self.H.deriv()
        advect = (u * gradH).values
        lvals = [self.Hpow(q).values for q in self.p]
        rows = []
        if self.beta is not None:
            B = self.pointwise_B()
            Bt = np.swapaxes(B, 0, 1)
            bv = self.beta.values
            dbv = self.beta.deriv().values
            dphi = [phi[j].deriv().values for j in range(K)]
        for i in range(K):
            vals = np.zeros(self.grid.M)
            for j in range(K):
                vals -= A[i, j] * lap[j]
                vals += self.kappa ** -2 * C[i, j] * phi[j].values
                if self.beta is not None:
                    vals += (B[i, j] - Bt[i, j]) * bv * dphi[j]
                    vals += (bv ** 2 * C[i, j] + dbv * B[i, j]) * phi[j].values
            vals -= lvals[i] * advect
            rows.append(ScalarField(self.grid, vals))
        return PotentialVec(rows)


def layer_ops(state: InterfaceState, params: NondimParams, spec: ExpansionSpec, layer: int) -> LayerOps:
    """Normalized operator family for one layer of a two-layer state."""
    if layer == 1:
        return LayerOps(spec.upper_p, params.delta1, state.H1, beta=None)
    if layer == 2:
        beta = None
        if state.b.max_abs() > 0.0:
            beta = ScalarField(state.grid, state.b.deriv().values / params.h2)
        return LayerOps(spec.p, params.delta2, state.H2, beta=beta)
    raise IndexError(f"layer must be 1 or 2, got {layer}")


def l_vector(H: ScalarField, spec: ExpansionSpec, layer: int, derivative_order: int = 0) -> PotentialVec:
    """l, l' or l'' of the given layer evaluated on a thickness field."""
    ops = LayerOps(spec.exponents(layer), 1.0, H)
    return ops.lvec(derivative_order)


def apply_L1(phi1: PotentialVec, state: InterfaceState, params: NondimParams, spec: ExpansionSpec) -> PotentialVec:
    state.require_noncavitation()
    return layer_ops(state, params, spec, 1).apply_L(phi1)


def apply_L2(phi2: PotentialVec, state: InterfaceState, params: NondimParams, spec: ExpansionSpec) -> PotentialVec:
    state.require_noncavitation()
    return layer_ops(state, params, spec, 2).apply_L(phi2)


def apply_L2_alternate(phi2: PotentialVec, state: InterfaceState, params: NondimParams, spec: ExpansionSpec) -> PotentialVec:
    state.require_noncavitation()
    return layer_ops(state, params, spec, 2).apply_L_alternate(phi2)


def apply_calL(phi: PotentialVec, state: InterfaceState, params: NondimParams, spec: ExpansionSpec, layer: int, i: int) -> ScalarField:
    return layer_ops(state, params, spec, layer).apply_calL(phi, i)


def compute_velocities(phi1: PotentialVec, phi2: PotentialVec, state: InterfaceState,
                       params: NondimParams, spec: ExpansionSpec) -> Velocities:
    """Interface velocities of both layers; the upper layer's vertical
    velocity is minus its normalized one (it grows downward from the lid)."""
    state.require_noncavitation()
    ops1 = layer_ops(state, params, spec, 1)
    ops2 = layer_ops(state, params, spec, 2)
    return Velocities(
        u1=ops1.velocity(phi1),
        u2=ops2.velocity(phi2),
        w1=-ops1.vertical(phi1),
        w2=ops2.vertical(phi2),
    )


def bernoulli_BN(phi: PotentialVec, state: InterfaceState, params: NondimParams,
                 spec: ExpansionSpec, layer: int, lam: ScalarField | None = None) -> ScalarField:
    """Layer Bernoulli contribution; lam may pass a precomputed calL_0(phi)
    (the approximate normal velocity) to avoid recomputation."""
    state.require_noncavitation()
    return layer_ops(state, params, spec, layer).bernoulli(phi, lam=lam)
