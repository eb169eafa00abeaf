"""Linear solves behind the characteristic-hypersurface structure.

Two discrete systems appear throughout:

* the per-layer trace problem: given an interface trace phi, find the
  coefficient stack with l . phi_vec = phi and calL_i phi_vec = 0 for
  i >= 1 (unique); its row 0 defines the layer's approximate
  Dirichlet-to-Neumann map;

* the coupled system over both layers: constrained rows equal to given
  data, the combined row h1*calL1_0 + h2*calL2_0 equal to div(f3), and
  the weighted trace difference equal to f4.  Its kernel is the constant
  direction (rho2 on phi_{1,0}, rho1 on phi_{2,0}); the discrete solve is
  gauge-fixed by mean(phi_{1,0}) = 0 through one bordered row/column.

Discretization is dense spectral collocation (direct solve with one step
of iterative refinement); desk-scale sizes keep this well under a second.
Solver objects hold factorizations: build once, solve repeatedly.
"""

import numpy as np
import scipy.linalg as sla

from .errors import (
    CompatibilityViolation,
    GaugeInconsistency,
    NonZeroMean,
    SolverSingular,
)
from .grid import PotentialVec, ScalarField, _require_mean_free
from .operators import InterfaceState, LayerOps, compute_velocities, layer_ops
from .params import ExpansionSpec, NondimParams

RESIDUAL_RTOL = 1e-10
COMPAT_RTOL = 1e-9
GAUGE_RTOL = 1e-8


def _lu_solve_refined(lu_piv, A, b):
    """Direct solve plus one refinement pass; keeps residuals near eps
    even when kappa^-2 terms skew the row scales."""
    x = sla.lu_solve(lu_piv, b)
    x += sla.lu_solve(lu_piv, b - A @ x)
    return x


class LayerTraceSolver:
    """Factorized solver of the per-layer trace problem (fixed state)."""

    def __init__(self, state: InterfaceState, params: NondimParams,
                 spec: ExpansionSpec, layer: int):
        state.require_noncavitation()
        self.ops = layer_ops(state, params, spec, layer)
        self.layer = layer
        K, M = self.ops.K, self.ops.grid.M
        A = np.zeros((K * M, K * M))
        A[:M] = self.ops.dense_trace_row()
        A[M:] = self.ops.dense_calL_rows()[M:]
        self._A = A
        try:
            self._lu = sla.lu_factor(A)
        except Exception as exc:  # LinAlgError on exact singularity
            raise SolverSingular(f"layer {layer} trace system: {exc}") from None
        self._M, self._K = M, K

    def solve(self, phi_trace: ScalarField) -> PotentialVec:
        _require_mean_free(phi_trace, "layer trace solve")
        M, K = self._M, self._K
        b = np.zeros(K * M)
        b[:M] = phi_trace.values
        x = _lu_solve_refined(self._lu, self._A, b)
        res = np.linalg.norm(self._A @ x - b)
        if res > RESIDUAL_RTOL * max(np.linalg.norm(b), 1e-30):
            raise SolverSingular(
                f"layer {self.layer} trace residual {res:.3e} exceeds tolerance"
            )
        return PotentialVec.from_matrix(self.ops.grid, x.reshape(K, M))

    def dtn(self, phi_trace: ScalarField) -> ScalarField:
        """Approximate DtN map: calL_0 of the trace solution (mean-free)."""
        return self.ops.apply_calL(self.solve(phi_trace), 0)


def solve_layer_trace(phi_trace: ScalarField, state: InterfaceState,
                      params: NondimParams, spec: ExpansionSpec, layer: int) -> PotentialVec:
    return LayerTraceSolver(state, params, spec, layer).solve(phi_trace)


def approx_dtn(phi_trace: ScalarField, state: InterfaceState,
               params: NondimParams, spec: ExpansionSpec, layer: int) -> ScalarField:
    return LayerTraceSolver(state, params, spec, layer).dtn(phi_trace)


def flat_kakinuma_symbol(xi: float, kappa: float, p) -> float:
    """Flat-state symbol of the layer's approximate DtN map at one
    wavenumber, from the small constrained mode system."""
    p = tuple(p)
    n = len(p)
    if xi == 0.0:
        return 0.0

    def L(i, j):
        s = p[i] + p[j]
        val = xi**2 / (s + 1)
        if p[i] * p[j] != 0:
            val += p[i] * p[j] / (s - 1) / kappa**2
        return val

    A = np.zeros((n, n))
    rhs = np.zeros(n)
    A[0] = 1.0
    rhs[0] = 1.0
    for i in range(1, n):
        for j in range(n):
            A[i, j] = L(i, j) - L(0, j)
    sol = np.linalg.solve(A, rhs)
    return float(sum(L(0, j) * sol[j] for j in range(n)))


class CoupledRHS:
    """Right-hand side of the coupled system.  f3 is the flux potential
    whose divergence feeds the combined row, so that row's data is
    mean-free by construction; f4 is the trace datum."""

    def __init__(self, grid, N: int, Nstar: int, f1prime=None, f2prime=None,
                 f3: ScalarField | None = None, f4: ScalarField | None = None):
        zero = ScalarField.zeros(grid)
        self.f1prime = list(f1prime) if f1prime is not None else [zero] * N
        self.f2prime = list(f2prime) if f2prime is not None else [zero] * Nstar
        self.f3 = f3 if f3 is not None else zero
        self.f4 = f4 if f4 is not None else zero
        if len(self.f1prime) != N or len(self.f2prime) != Nstar:
            raise ValueError("constrained-row data lengths do not match the expansion")

    def scaled(self, a: float) -> "CoupledRHS":
        out = CoupledRHS.__new__(CoupledRHS)
        out.f1prime = [a * f for f in self.f1prime]
        out.f2prime = [a * f for f in self.f2prime]
        out.f3 = a * self.f3
        out.f4 = a * self.f4
        return out


class CoupledSolution:
    """Both coefficient stacks plus the bordered-solve multiplier (the
    kernel-dual correction; near zero for compatible data) and the
    combined-row residual, i.e. how well the two layer expressions for the
    interface velocity agree on this solution."""

    def __init__(self, phi1: PotentialVec, phi2: PotentialVec, gauge: float,
                 compat_gap: float = 0.0):
        self.phi1 = phi1
        self.phi2 = phi2
        self.gauge = gauge
        self.compat_gap = compat_gap


class CoupledSolver:
    """Factorized gauged solver of the coupled system for a fixed state."""

    def __init__(self, state: InterfaceState, params: NondimParams, spec: ExpansionSpec,
                 ops1: LayerOps | None = None, ops2: LayerOps | None = None):
        state.require_noncavitation()
        self.state, self.params, self.spec = state, params, spec
        self.ops1 = ops1 or layer_ops(state, params, spec, 1)
        self.ops2 = ops2 or layer_ops(state, params, spec, 2)
        self.grid = state.grid
        M = self.grid.M
        K1, K2 = self.ops1.K, self.ops2.K
        self.K1, self.K2, self.M = K1, K2, M
        n = (K1 + K2) * M
        A = assemble_coupled_matrix(state, params, spec,
                                    ops1=self.ops1, ops2=self.ops2)
        # bordered gauge: column = left kernel direction (the combined row
        # block sums to zero), row = mean over the phi_{1,0} unknowns
        self._row_comb = slice((K1 - 1 + K2 - 1) * M, (K1 - 1 + K2 - 1) * M + M)
        Ab = np.zeros((n + 1, n + 1))
        Ab[:n, :n] = A
        Ab[self._row_comb, n] = 1.0
        Ab[n, 0:M] = 1.0 / M
        self._A = Ab
        self._n = n
        try:
            self._lu = sla.lu_factor(Ab)
        except Exception as exc:
            raise SolverSingular(f"coupled system: {exc}") from None

    def rhs_vector(self, rhs: CoupledRHS) -> np.ndarray:
        M, n = self.M, self._n
        b = np.zeros(n + 1)
        pos = 0
        for f in rhs.f1prime:
            b[pos:pos + M] = f.values
            pos += M
        for f in rhs.f2prime:
            b[pos:pos + M] = f.values
            pos += M
        b[pos:pos + M] = rhs.f3.deriv().values
        pos += M
        b[pos:pos + M] = rhs.f4.values
        return b

    def solution_from_vector(self, x: np.ndarray, bnorm: float,
                             resid: np.ndarray | None = None) -> CoupledSolution:
        M, K1, n = self.M, self.K1, self._n
        gauge = x[n]
        if abs(gauge) > GAUGE_RTOL * bnorm:
            raise GaugeInconsistency(
                f"gauge multiplier {gauge:.3e} too large: incompatible data"
            )
        gap = float(np.abs(resid[self._row_comb]).max()) if resid is not None else 0.0
        phi1 = PotentialVec.from_matrix(self.grid, x[:K1 * M].reshape(K1, M))
        phi2 = PotentialVec.from_matrix(self.grid, x[K1 * M:n].reshape(self.K2, M))
        return CoupledSolution(phi1, phi2, gauge, compat_gap=gap)

    def solve(self, rhs: CoupledRHS) -> CoupledSolution:
        b = self.rhs_vector(rhs)
        x = _lu_solve_refined(self._lu, self._A, b)
        scale = max(np.linalg.norm(b), 1e-30)
        resid = self._A @ x - b
        res = np.linalg.norm(resid)
        if res > RESIDUAL_RTOL * scale:
            raise SolverSingular(f"coupled residual {res:.3e} exceeds tolerance")
        return self.solution_from_vector(x, scale, resid=resid)


def coupled_action(ops1: LayerOps, ops2: LayerOps, params: NondimParams,
                   x: np.ndarray) -> np.ndarray:
    """Bordered coupled matrix action without dense assembly: plain-product
    spectral application mirroring assemble_coupled_matrix (including the
    Nyquist pinning and the gauge border)."""
    M = ops1.grid.M
    K1, K2 = ops1.K, ops2.K
    n = (K1 + K2) * M
    phi1 = x[:K1 * M].reshape(K1, M)
    phi2 = x[K1 * M:n].reshape(K2, M)
    lam = x[n]
    r1 = ops1.calL_values(phi1)
    r2 = ops2.calL_values(phi2)
    nyq = (-1.0) ** np.arange(M)
    out = np.empty(n + 1)
    pos = 0
    for i in range(1, K1):
        out[pos:pos + M] = r1[i] + nyq * (nyq @ phi1[i] / M)
        pos += M
    for i in range(1, K2):
        out[pos:pos + M] = r2[i] + nyq * (nyq @ phi2[i] / M)
        pos += M
    out[pos:pos + M] = (params.h1 * r1[0] + params.h2 * r2[0]
                        + nyq * (nyq @ phi1[0] / M) + lam)
    pos += M
    out[pos:pos + M] = (-params.rho1 * ops1.trace_values(phi1)
                        + params.rho2 * ops2.trace_values(phi2)
                        + nyq * (nyq @ phi2[0] / M))
    out[n] = phi1[0].mean()
    return out


class LaggedCoupledSolver:
    """Coupled solves along a continuously deforming state.

    The dense factorization is expensive next to one operator application,
    and neighbouring states differ by O(dt); the last factorization is
    therefore kept as a preconditioner for residual iteration against the
    current state's operator, and rebuilt only when the iteration stops
    converging.  Solution quality is the same as the direct path: the
    iteration exits on the same relative-residual tolerance.
    """

    def __init__(self, params: NondimParams, spec: ExpansionSpec,
                 rtol: float = 1e-12, max_iter: int = 12):
        self.params, self.spec = params, spec
        self.rtol = rtol
        self.max_iter = max_iter
        self._base: CoupledSolver | None = None
        self.rebuilds = 0

    def _rebuild(self, state, ops1, ops2) -> CoupledSolver:
        self._base = CoupledSolver(state, self.params, self.spec, ops1=ops1, ops2=ops2)
        self.rebuilds += 1
        return self._base

    def solve(self, state: InterfaceState, rhs: CoupledRHS,
              ops1: LayerOps | None = None, ops2: LayerOps | None = None) -> CoupledSolution:
        state.require_noncavitation()
        ops1 = ops1 or layer_ops(state, self.params, self.spec, 1)
        ops2 = ops2 or layer_ops(state, self.params, self.spec, 2)
        base = self._base
        if base is None or base.K1 != ops1.K or base.K2 != ops2.K or base.M != state.grid.M:
            base = self._rebuild(state, ops1, ops2)
        b = base.rhs_vector(rhs)
        bnorm = max(np.linalg.norm(b), 1e-30)
        x = sla.lu_solve(base._lu, b)
        prev_res = np.inf
        for _ in range(self.max_iter):
            r = coupled_action(ops1, ops2, self.params, x) - b
            res = np.linalg.norm(r)
            if res <= self.rtol * bnorm:
                return base.solution_from_vector(x, bnorm, resid=r)
            if res >= 0.5 * prev_res:   # stalled or diverging: state drifted
                break
            prev_res = res
            x -= sla.lu_solve(base._lu, r)
        base = self._rebuild(state, ops1, ops2)
        x = _lu_solve_refined(base._lu, base._A, b)
        r = coupled_action(ops1, ops2, self.params, x) - b
        if np.linalg.norm(r) > RESIDUAL_RTOL * bnorm:
            raise SolverSingular(f"coupled residual {np.linalg.norm(r):.3e} exceeds tolerance")
        return base.solution_from_vector(x, bnorm, resid=r)


def nyquist_stabilizer(M: int) -> np.ndarray:
    """Rank-one pinning of the Nyquist line.

    A real even grid cannot represent the derivative of its alternating
    mode, so spectral first-derivative sandwiches annihilate it along with
    constants; fields are Nyquist-free by convention and the discrete
    operator acts as the identity on that line to keep the kernel equal to
    the constant direction alone.  The pattern is mean-free, so the exact
    left kernel (the mean over the combined rows) survives the pinning.
    """
    nyq = (-1.0) ** np.arange(M)
    return np.outer(nyq, nyq) / M


def assemble_coupled_matrix(state: InterfaceState, params: NondimParams,
                            spec: ExpansionSpec, ops1: LayerOps | None = None,
                            ops2: LayerOps | None = None) -> np.ndarray:
    """Unaugmented coupled matrix (kernel dimension one), rows ordered as
    [calL1_i (i>=1); calL2_i (i>=1); h1 calL1_0 + h2 calL2_0; trace].

    Each row block is paired with one unknown block and carries the
    Nyquist pinning on that pairing (see nyquist_stabilizer)."""
    ops1 = ops1 or layer_ops(state, params, spec, 1)
    ops2 = ops2 or layer_ops(state, params, spec, 2)
    M = state.grid.M
    K1, K2 = ops1.K, ops2.K
    n = (K1 + K2) * M
    rows1 = ops1.dense_calL_rows()
    rows2 = ops2.dense_calL_rows()
    A = np.zeros((n, n))
    c1 = slice(0, K1 * M)
    c2 = slice(K1 * M, n)
    A[0:(K1 - 1) * M, c1] = rows1[M:]
    A[(K1 - 1) * M:(K1 - 1 + K2 - 1) * M, c2] = rows2[M:]
    comb = slice((K1 - 1 + K2 - 1) * M, (K1 - 1 + K2 - 1) * M + M)
    A[comb, c1] = params.h1 * rows1[:M]
    A[comb, c2] = params.h2 * rows2[:M]
    tr = slice((K1 - 1 + K2 - 1) * M + M, n)
    A[tr, c1] = -params.rho1 * ops1.dense_trace_row()
    A[tr, c2] = params.rho2 * ops2.dense_trace_row()
    S = nyquist_stabilizer(M)
    for i in range(1, K1):  # calL1_i rows pin phi_{1,i}
        A[(i - 1) * M:i * M, i * M:(i + 1) * M] += S
    for i in range(1, K2):  # calL2_i rows pin phi_{2,i}
        r0 = (K1 - 1 + i - 1) * M
        A[r0:r0 + M, (K1 + i) * M:(K1 + i + 1) * M] += S
    A[comb, 0:M] += S                        # combined row pins phi_{1,0}
    A[tr, K1 * M:(K1 + 1) * M] += S          # trace row pins phi_{2,0}
    return A


def kernel_direction(params: NondimParams, K1: int, K2: int, M: int) -> np.ndarray:
    """Unit vector of the coupled system's constant kernel:
    rho2 on the phi_{1,0} block, rho1 on the phi_{2,0} block."""
    v = np.zeros((K1 + K2) * M)
    v[0:M] = params.rho2
    v[K1 * M:K1 * M + M] = params.rho1
    return v / np.linalg.norm(v)


def solve_coupled(rhs: CoupledRHS, state: InterfaceState, params: NondimParams,
                  spec: ExpansionSpec) -> CoupledSolution:
    return CoupledSolver(state, params, spec).solve(rhs)


def prepare_initial_data(zeta0: ScalarField, phi0: ScalarField, b: ScalarField,
                         params: NondimParams, spec: ExpansionSpec):
    """Coefficient stacks matching canonical data (zeta0, phi0): the
    coupled solve with f4 = phi0 and zero elsewhere.  The outputs satisfy
    the compatibility rows exactly and the canonical trace relation
    rho2 l2.phi2 - rho1 l1.phi1 = phi0 to solver tolerance."""
    _require_mean_free(phi0, "prepare_initial_data")
    state = InterfaceState(zeta=zeta0, b=b, params=params)
    solver = CoupledSolver(state, params, spec)
    rhs = CoupledRHS(state.grid, spec.N, spec.Nstar, f4=phi0)
    sol = solver.solve(rhs)
    recon = solver.ops2.trace(sol.phi2) * params.rho2 - solver.ops1.trace(sol.phi1) * params.rho1
    err = (recon - phi0).max_abs()
    if err > 1e-8 * max(phi0.max_abs(), 1e-30):
        raise SolverSingular(f"canonical trace mismatch {err:.3e}")
    return sol.phi1, sol.phi2


def recover_time_derivatives(state: InterfaceState, phi1: PotentialVec, phi2: PotentialVec,
                             params: NondimParams, spec: ExpansionSpec):
    """Time derivatives of a state on the constraint manifold.

    d/dt zeta comes from row 0 of either layer (cross-checked); the stack
    derivatives solve the coupled system whose data are the commutators of
    d/dt with the constrained rows, evaluated through the H-derivative
    operators, plus the shear flux and the Bernoulli trace datum.
    """
    ops1 = layer_ops(state, params, spec, 1)
    ops2 = layer_ops(state, params, spec, 2)
    dtz1 = -params.h1 * ops1.apply_calL(phi1, 0)
    dtz2 = params.h2 * ops2.apply_calL(phi2, 0)
    scale = max(dtz1.max_abs(), dtz2.max_abs(), 1e-30)
    # compare in the collocation discretization (plain products), where the
    # stacks satisfy the combined row by construction
    gap_vals = (params.h1 * ops1.calL_values(phi1.as_matrix())[0]
                + params.h2 * ops2.calL_values(phi2.as_matrix())[0])
    mismatch = float(np.abs(gap_vals).max())
    if mismatch > max(COMPAT_RTOL * scale, 1e-12):
        raise CompatibilityViolation(
            f"layer expressions for dzeta/dt disagree by {mismatch:.3e} (scale {scale:.3e})"
        )
    dzeta = dtz1.project_mean_free()

    vel = compute_velocities(phi1, phi2, state, params, spec)
    f1p = [
        ops1.apply_dH_calL(phi1, i) * (1.0 / params.h1) * dzeta
        for i in range(1, ops1.K)
    ]
    f2p = [
        -1.0 * (ops2.apply_dH_calL(phi2, i) * (1.0 / params.h2) * dzeta)
        for i in range(1, ops2.K)
    ]
    f3 = (vel.u2 - vel.u1) * dzeta
    f4 = (
        0.5 * params.rho1 * (vel.u1 * vel.u1 + params.delta1 ** -2 * (vel.w1 * vel.w1))
        - 0.5 * params.rho2 * (vel.u2 * vel.u2 + params.delta2 ** -2 * (vel.w2 * vel.w2))
        - state.zeta
    )
    rhs = CoupledRHS(state.grid, spec.N, spec.Nstar,
                     f1prime=f1p, f2prime=f2p, f3=f3, f4=f4)
    sol = CoupledSolver(state, params, spec).solve(rhs)
    return dzeta, sol.phi1, sol.phi2
