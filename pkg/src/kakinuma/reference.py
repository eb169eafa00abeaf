"""Reference solutions of the unapproximated layer Laplace problems.

A single normalized solver covers both layers through the scaling
relations

    Lambda_1(zeta, delta, h1) = h1 * Lambda(-zeta/h1, 0,    h1*delta)
    Lambda_2(zeta, b, delta, h2) = h2 * Lambda( zeta/h2, b/h2, h2*delta),

where Lambda(zeta~, b~, delta~) is the Dirichlet-to-Neumann map of the
depth-one strip -1 + b~ < z < zeta~.  The strip is pulled back to the
flat reference strip (-1, 0) by the vertical stretch
theta(x, z) = zeta~(x)(z+1) + (1-b~(x))z and discretized by Chebyshev
collocation in z times Fourier collocation in x.  The interior operator
is the transformed divergence form; rows are scaled by delta~^2 so the
matrix entries stay O(1) in the shallow regime.

No time evolution of the full model lives here or anywhere else: only
stationary solves are meaningful for the two-layer problem.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ResolutionWarning, SolverSingular
from .grid import PeriodicGrid, ScalarField, _require_mean_free, l2_inner, sobolev_norm
from .operators import InterfaceState
from .params import NondimParams


def cheb_nodes_and_matrix(P: int):
    """Chebyshev extreme points on [-1, 1] (descending) and the
    differentiation matrix, diagonal fixed to exact zero row sums."""
    if P < 2:
        raise ValueError("need at least two Chebyshev points")
    n = P - 1
    x = np.cos(np.pi * np.arange(P) / n)
    c = np.ones(P)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(P)
    X = np.tile(x, (P, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(P))
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return x, D


def clencurt_weights(P: int) -> np.ndarray:
    """Clenshaw-Curtis quadrature weights on [-1, 1] for the Chebyshev
    extreme points (Trefethen's construction)."""
    n = P - 1
    if n == 0:
        return np.array([2.0])
    theta = np.pi * np.arange(P) / n
    w = np.zeros(P)
    v = np.ones(n - 1)
    for k in range(1, n // 2 + 1):
        factor = 2.0 if 2 * k < n else 1.0
        v -= factor * np.cos(2.0 * k * theta[1:-1]) / (4.0 * k * k - 1.0)
    w[0] = w[-1] = 1.0 / (n * n - 1.0 + (n % 2))
    w[1:-1] = 2.0 * v / n
    return w


def flat_dtn_symbol(xi: float, params: NondimParams, layer: int) -> float:
    """Exact flat-state DtN symbol delta^-1 |xi| tanh(h_l delta |xi|)."""
    h = params.h1 if layer == 1 else params.h2
    if xi == 0.0:
        return 0.0
    return abs(xi) * np.tanh(h * params.delta * abs(xi)) / params.delta


@dataclass(frozen=True)
class StripGrid:
    """Horizontal periodic grid times P Chebyshev points across a layer."""

    horizontal: PeriodicGrid
    vertical_order: int
    layer: int

    def __post_init__(self):
        if self.vertical_order < 8:
            raise ValueError("need at least 8 vertical collocation points")
        if self.layer not in (1, 2):
            raise ValueError("layer must be 1 or 2")


class NormalizedStripSolver:
    """DtN and energy of one depth-normalized layer at fixed geometry.

    Holds the LU factorization of the transformed collocation system;
    construction is single-threaded, solves are read-only.
    """

    def __init__(self, grid: PeriodicGrid, zeta_t: np.ndarray, b_t: np.ndarray,
                 delta_t: float, P: int):
        self.grid = grid
        self.P = P
        self.delta_t = float(delta_t)
        M = grid.M
        H = 1.0 + zeta_t - b_t
        if H.min() <= 0.0:
            raise SolverSingular("normalized strip has nonpositive thickness")
        tcheb, Dcheb = cheb_nodes_and_matrix(P)
        self.z = 0.5 * (tcheb - 1.0)          # (-1, 0], z[0] = 0 is the interface
        Dz1 = 2.0 * Dcheb
        Dx1 = grid.deriv_matrix(1)

        dzeta = grid.deriv_values(zeta_t)
        db = grid.deriv_values(b_t)
        Z = self.z[:, None]
        theta_z = np.broadcast_to(H[None, :], (P, M))
        theta_x = dzeta[None, :] * (Z + 1.0) - db[None, :] * Z

        d2 = self.delta_t ** 2
        q = (1.0 + d2 * theta_x**2) / theta_z
        self._coef = (theta_z, theta_x, q)

        Dx = np.kron(np.eye(P), Dx1)
        Dz = np.kron(Dz1, np.eye(M))
        self._Dx, self._Dz = Dx, Dz
        tz = theta_z.ravel()
        tx = theta_x.ravel()
        qq = q.ravel()
        A = (
            Dx @ (d2 * tz[:, None] * Dx)
            - Dx @ (d2 * tx[:, None] * Dz)
            - Dz @ (d2 * tx[:, None] * Dx)
            + Dz @ (qq[:, None] * Dz)
        )
        flux = -d2 * tx[:, None] * Dx + qq[:, None] * Dz
        self._flux = flux
        top = slice(0, M)                # z = 0 rows: Dirichlet
        bot = slice((P - 1) * M, P * M)  # z = -1 rows: zero conormal flux
        A[top] = 0.0
        A[0:M, 0:M] = np.eye(M)
        A[bot] = flux[bot]
        self._A = A
        try:
            self._lu = sla.lu_factor(A)
        except Exception as exc:
            raise SolverSingular(f"strip collocation system: {exc}") from None

    def solve_potential(self, trace: np.ndarray) -> np.ndarray:
        """Potential on the flat reference strip, shape (P, M)."""
        M = self.grid.M
        b = np.zeros(self.P * M)
        b[:M] = trace
        x = sla.lu_solve(self._lu, b)
        x += sla.lu_solve(self._lu, b - self._A @ x)
        return x.reshape(self.P, M)

    def dtn_values(self, trace: np.ndarray, potential: np.ndarray | None = None) -> np.ndarray:
        """Normalized DtN values at the interface."""
        if potential is None:
            potential = self.solve_potential(trace)
        M = self.grid.M
        flux_top = self._flux[0:M] @ potential.ravel()
        return flux_top / self.delta_t ** 2

    def dtn_matrix(self) -> np.ndarray:
        """Dense (M, M) DtN matrix from unit-impulse traces."""
        M = self.grid.M
        B = np.zeros((self.P * M, M))
        B[:M] = np.eye(M)
        X = sla.lu_solve(self._lu, B)
        X += sla.lu_solve(self._lu, B - self._A @ X)
        return (self._flux[0:M] @ X) / self.delta_t ** 2

    def energy(self, potential: np.ndarray) -> float:
        """Volume quadrature of |grad Phi|^2 + delta~^-2 (dz Phi)^2 over the
        physical layer, via the transformed-domain metric."""
        theta_z, theta_x, q = self._coef
        P, M = self.P, self.grid.M
        ux = (self._Dx @ potential.ravel()).reshape(P, M)
        uz = (self._Dz @ potential.ravel()).reshape(P, M)
        dens = theta_z * ux**2 - 2.0 * theta_x * ux * uz + q / self.delta_t ** 2 * uz**2
        wz = 0.5 * clencurt_weights(P)   # scaled onto the unit-depth strip
        return float((wz @ dens).sum() * self.grid.dx)


def _normalized_solver(state: InterfaceState, params: NondimParams, layer: int,
                       P: int) -> NormalizedStripSolver:
    state.require_noncavitation()
    if layer == 1:
        return NormalizedStripSolver(
            state.grid, -state.zeta.values / params.h1,
            np.zeros(state.grid.M), params.delta1, P)
    return NormalizedStripSolver(
        state.grid, state.zeta.values / params.h2,
        state.b.values / params.h2, params.delta2, P)


def full_dtn(phi_trace: ScalarField, state: InterfaceState, params: NondimParams,
             layer: int, P: int, check_resolution: bool = True) -> ScalarField:
    """Exact (non-approximated) layer DtN map by the strip solve.

    With check_resolution the solve is repeated at 2P and a
    ResolutionWarning is emitted when the two differ by more than 1e-8
    relative.
    """
    _require_mean_free(phi_trace, "full_dtn")
    h = params.h1 if layer == 1 else params.h2
    solver = _normalized_solver(state, params, layer, P)
    vals = h * solver.dtn_values(phi_trace.values)
    if check_resolution:
        fine = _normalized_solver(state, params, layer, 2 * P)
        vals2 = h * fine.dtn_values(phi_trace.values)
        diff = np.linalg.norm(vals2 - vals)
        if diff > 1e-8 * max(np.linalg.norm(vals2), 1e-30):
            warnings.warn(
                f"layer {layer} DtN changed by {diff:.3e} under P doubling",
                ResolutionWarning, stacklevel=2)
        vals = vals2
    out = vals - vals.mean()
    return ScalarField(state.grid, out)


@dataclass
class TransmissionSolution:
    """Discrete two-layer harmonic potentials with matched interface data."""

    grid: PeriodicGrid
    strip1: StripGrid
    strip2: StripGrid
    Phi1: np.ndarray
    Phi2: np.ndarray
    trace1: ScalarField
    trace2: ScalarField
    neumann1: ScalarField
    neumann2: ScalarField
    kinetic1: float
    kinetic2: float


def solve_transmission(phi: ScalarField, state: InterfaceState, params: NondimParams,
                       P: int) -> TransmissionSolution:
    """Two-layer potentials with common normal flux and weighted trace jump
    rho2 Phi2 - rho1 Phi1 = phi at the interface; gauge mean(trace1) = 0.

    Solved through the per-layer DtN matrices: the interface traces obey
    Lambda_1 psi_1 + Lambda_2 psi_2 = 0 and the jump relation, a 2M system
    with the constant kernel (rho2, rho1) removed by a bordered gauge.
    """
    _require_mean_free(phi, "solve_transmission")
    grid = state.grid
    M = grid.M
    s1 = _normalized_solver(state, params, 1, P)
    s2 = _normalized_solver(state, params, 2, P)
    G1 = params.h1 * s1.dtn_matrix()
    G2 = params.h2 * s2.dtn_matrix()
    n = 2 * M
    nyq = (-1.0) ** np.arange(M)
    A = np.zeros((n + 1, n + 1))
    A[0:M, 0:M] = G1 + np.outer(nyq, nyq) / M  # Nyquist line pinned (see elliptic)
    A[0:M, M:n] = G2
    A[M:n, 0:M] = -params.rho1 * np.eye(M)
    A[M:n, M:n] = params.rho2 * np.eye(M)
    A[0:M, n] = 1.0          # probe along the flux rows' near-kernel
    A[n, 0:M] = 1.0 / M      # gauge: mean of the upper trace
    b = np.zeros(n + 1)
    b[M:n] = phi.values
    lu = sla.lu_factor(A)
    x = sla.lu_solve(lu, b)
    x += sla.lu_solve(lu, b - A @ x)
    res = np.linalg.norm(A @ x - b)
    if res > 1e-9 * max(np.linalg.norm(b), 1e-30):
        raise SolverSingular(f"transmission interface residual {res:.3e}")
    psi1 = x[0:M]
    psi2 = x[M:n]
    Phi1 = s1.solve_potential(psi1)
    Phi2 = s2.solve_potential(psi2)
    return TransmissionSolution(
        grid=grid,
        strip1=StripGrid(grid, P, 1),
        strip2=StripGrid(grid, P, 2),
        Phi1=Phi1,
        Phi2=Phi2,
        trace1=ScalarField(grid, psi1),
        trace2=ScalarField(grid, psi2),
        neumann1=ScalarField(grid, params.h1 * s1.dtn_values(psi1, Phi1)),
        neumann2=ScalarField(grid, params.h2 * s2.dtn_values(psi2, Phi2)),
        kinetic1=params.h1 * s1.energy(Phi1),
        kinetic2=params.h2 * s2.energy(Phi2),
    )


def hamiltonian_full(zeta: ScalarField, phi: ScalarField, b: ScalarField,
                     params: NondimParams, P: int) -> float:
    """Energy of the full model at canonical data: half the weighted layer
    Dirichlet energies of the transmission solution plus half the squared
    elevation norm."""
    state = InterfaceState(zeta=zeta, b=b, params=params)
    if phi.max_abs() == 0.0:
        kinetic = 0.0
    else:
        sol = solve_transmission(phi, state, params, P)
        kinetic = params.rho1 * sol.kinetic1 + params.rho2 * sol.kinetic2
    return 0.5 * kinetic + 0.5 * sobolev_norm(zeta, 0) ** 2


def hamiltonian_full_converged(zeta: ScalarField, phi: ScalarField, b: ScalarField,
                               params: NondimParams, target: float,
                               P0: int = 8, Pmax: int = 96):
    """Hamiltonian with automatic vertical refinement: P doubles until the
    value moves by less than the absolute target, or the change plateaus
    (round-off floor) or Pmax is hit, both with a ResolutionWarning.
    Returns (value, achieved_change, P_used)."""
    P = P0
    prev = hamiltonian_full(zeta, phi, b, params, P)
    last_change = np.inf
    while True:
        P2 = 2 * P
        if P2 > Pmax:
            warnings.warn(
                f"vertical refinement capped at P={P}; last change above target",
                ResolutionWarning, stacklevel=2)
            return prev, last_change, P
        cur = hamiltonian_full(zeta, phi, b, params, P2)
        change = abs(cur - prev)
        if change <= target:
            return cur, change, P2
        if change >= last_change:
            # refinement no longer helps: the round-off floor of the dense
            # solve, not truncation, dominates
            warnings.warn(
                f"refinement plateaued at P={P} (change {change:.3e} > target {target:.3e})",
                ResolutionWarning, stacklevel=2)
            return prev, last_change, P
        prev, P, last_change = cur, P2, change


def transmission_energy_identity_error(phi: ScalarField, state: InterfaceState,
                                       params: NondimParams, P: int) -> float:
    """Relative gap between the volume kinetic energy and the boundary form
    sum_l rho_l (Lambda_l psi_l, psi_l); a Green-identity diagnostic."""
    sol = solve_transmission(phi, state, params, P)
    vol = params.rho1 * sol.kinetic1 + params.rho2 * sol.kinetic2
    bdy = params.rho1 * l2_inner(sol.neumann1, sol.trace1) + params.rho2 * l2_inner(
        sol.neumann2, sol.trace2)
    return abs(vol - bdy) / max(abs(vol), 1e-30)
