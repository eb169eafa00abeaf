"""Quantitative checks of the shallow-water approximation orders.

Everything here measures the gap between the model's operators and the
exact layer Laplace problems at a frozen time slice: residuals of the
one-direction and reverse consistency statements, the Hamiltonian gap,
and the linear dispersion curves, each swept over the shallowness
parameter and fitted in log-log.  The expected slope is 4N+2 under the
validated exponent choices.

At a flat interface both operator families are Fourier multipliers, so
the residual sweep evaluates exact symbols rather than strip solves; the
strip solver is validated against those symbols separately.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .elliptic import (
    CoupledRHS,
    CoupledSolver,
    LayerTraceSolver,
    flat_kakinuma_symbol,
)
from .errors import BelowNoiseFloor
from .evolution import hamiltonian_kakinuma
from .grid import PeriodicGrid, ScalarField, sobolev_norm
from .operators import InterfaceState, compute_velocities, layer_ops
from .params import ExpansionSpec, NondimParams, validate_params
from .reference import (
    flat_dtn_symbol,
    full_dtn,
    hamiltonian_full,
    hamiltonian_full_converged,
    solve_transmission,
)

DEFAULT_DELTAS = (0.2, 0.15, 0.1, 0.07, 0.05, 0.035, 0.02)
NOISE_FLOOR = 1e-13


@dataclass
class OrderFit:
    """Least-squares slope of log(error) against log(delta)."""

    deltas: np.ndarray
    errors: np.ndarray
    slope: float
    r2: float
    excluded: int = 0

    @property
    def conclusive(self) -> bool:
        return self.r2 >= 0.99


def order_fit(deltas, errors, floor: float = NOISE_FLOOR) -> OrderFit:
    """Fit err ~ C * delta^slope; samples under the floor are dropped with
    a BelowNoiseFloor warning so round-off cannot flatten the slope."""
    deltas = np.asarray(deltas, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(deltas) != len(errors) or len(deltas) < 4:
        raise ValueError("need at least four (delta, error) samples")
    if np.any(np.diff(deltas) >= 0.0):
        raise ValueError("deltas must be strictly decreasing")
    keep = errors > floor
    if not np.all(keep):
        warnings.warn(
            f"{int((~keep).sum())} sample(s) under the noise floor {floor:g} excluded",
            BelowNoiseFloor, stacklevel=2)
    d, e = deltas[keep], errors[keep]
    if len(d) < 2:
        raise ValueError("not enough samples above the noise floor to fit")
    x, y = np.log(d), np.log(e)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (resid**2).sum() / ss_tot if ss_tot > 0 else 0.0
    return OrderFit(deltas=d, errors=e, slope=float(slope), r2=float(r2),
                    excluded=int((~keep).sum()))


# -- dispersion ---------------------------------------------------------------


def dispersion_symbols(xi: float, params: NondimParams, spec: ExpansionSpec):
    """Squared frequencies of the linearized full and approximate models at
    one wavenumber: omega^2 = 1/(rho1/s1 + rho2/s2) with the exact resp.
    model DtN symbols s_l."""
    if xi == 0.0:
        raise ValueError("dispersion symbols need xi != 0")
    s1 = flat_dtn_symbol(xi, params, 1)
    s2 = flat_dtn_symbol(xi, params, 2)
    w2_full = 1.0 / (params.rho1 / s1 + params.rho2 / s2)
    a1 = params.h1 * flat_kakinuma_symbol(xi, params.delta1, spec.upper_p)
    a2 = params.h2 * flat_kakinuma_symbol(xi, params.delta2, spec.p)
    w2_model = 1.0 / (params.rho1 / a1 + params.rho2 / a2)
    return w2_full, w2_model


def dispersion_gap(xi: float, params: NondimParams, spec: ExpansionSpec,
                   dps: int = 40) -> float:
    """|omega2_model - omega2_full| in extended precision.

    The gap decays like delta^(4N+2) while both frequencies stay O(1), so
    beyond N = 1 the subtraction cancels past double precision; the mode
    systems are tiny, so evaluating them with mpmath costs nothing and
    measures the true asymptotic order."""
    import mpmath as mp

    with mp.workdps(dps):
        def model_symbol(p, kappa):
            n = len(p)
            kappa = mp.mpf(kappa)

            def L(i, j):
                s = p[i] + p[j]
                val = mp.mpf(xi) ** 2 / (s + 1)
                if p[i] * p[j] != 0:
                    val += mp.mpf(p[i] * p[j]) / (s - 1) / kappa**2
                return val

            A = mp.zeros(n, n)
            rhs = mp.zeros(n, 1)
            for j in range(n):
                A[0, j] = 1
            rhs[0] = 1
            for i in range(1, n):
                for j in range(n):
                    A[i, j] = L(i, j) - L(0, j)
            sol = mp.lu_solve(A, rhs)
            return sum(L(0, j) * sol[j] for j in range(n))

        def full_symbol(h):
            u = mp.mpf(h) * mp.mpf(params.delta) * abs(mp.mpf(xi))
            return abs(mp.mpf(xi)) * mp.tanh(u) / mp.mpf(params.delta)

        s1f = full_symbol(params.h1)
        s2f = full_symbol(params.h2)
        s1m = mp.mpf(params.h1) * model_symbol(spec.upper_p, params.delta1)
        s2m = mp.mpf(params.h2) * model_symbol(spec.p, params.delta2)
        w2f = 1 / (mp.mpf(params.rho1) / s1f + mp.mpf(params.rho2) / s2f)
        w2m = 1 / (mp.mpf(params.rho1) / s1m + mp.mpf(params.rho2) / s2m)
        return float(abs(w2m - w2f))


def dispersion_error_sweep(rho1: float, h1: float, N: int, case: str = "H1",
                           deltas=DEFAULT_DELTAS, xi: float = 1.0):
    spec = ExpansionSpec.from_case(case, N)
    errs = []
    for d in deltas:
        params = validate_params(rho1, h1, d)
        errs.append(dispersion_gap(xi, params, spec))
    return np.asarray(deltas), np.asarray(errs)


# -- residuals at a time slice -------------------------------------------------


def residuals_full_from_kakinuma(phi1_trace: ScalarField, phi2_trace: ScalarField,
                                 state: InterfaceState, params: NondimParams,
                                 spec: ExpansionSpec, P: int,
                                 check_resolution: bool = False):
    """Residual fields of the exact interface system evaluated on model
    traces: the two kinematic gaps and the weighted Bernoulli gap."""
    solver1 = LayerTraceSolver(state, params, spec, 1)
    solver2 = LayerTraceSolver(state, params, spec, 2)
    phi1 = solver1.solve(phi1_trace)
    phi2 = solver2.solve(phi2_trace)
    lam1 = solver1.ops.apply_calL(phi1, 0)
    lam2 = solver2.ops.apply_calL(phi2, 0)
    full1 = full_dtn(phi1_trace, state, params, 1, P, check_resolution=check_resolution)
    full2 = full_dtn(phi2_trace, state, params, 2, P, check_resolution=check_resolution)
    r1 = full1 - params.h1 * lam1
    r2 = params.h2 * lam2 - full2
    B1 = _bernoulli_full(phi1_trace, full1, state, params, 1)
    B2 = _bernoulli_full(phi2_trace, full2, state, params, 2)
    B1N = solver1.ops.bernoulli(phi1, lam=lam1)
    B2N = solver2.ops.bernoulli(phi2, lam=lam2)
    r0 = 0.5 * params.rho1 * (B1 - B1N) - 0.5 * params.rho2 * (B2 - B2N)
    return r1, r2, r0


def _bernoulli_full(trace: ScalarField, dtn: ScalarField, state: InterfaceState,
                    params: NondimParams, layer: int) -> ScalarField:
    """Exact-model Bernoulli contribution of one layer from its DtN data."""
    dz = state.zeta.deriv()
    grad = trace.deriv()
    sign = -1.0 if layer == 1 else 1.0
    combo = dtn + sign * (dz * grad)
    denom = ScalarField(state.grid, 1.0 + params.delta**2 * dz.values**2)
    frac = ScalarField(state.grid, (combo * combo).values / denom.values)
    return 0.5 * (grad * grad) - 0.5 * params.delta**2 * frac


def flat_residual_norms(params: NondimParams, spec: ExpansionSpec, grid: PeriodicGrid,
                        mode: int = 1, amplitude: float = 1.0):
    """Residual norms at the flat state for single-mode traces, by exact
    symbol arithmetic (no strip solve): the flat DtN maps are Fourier
    multipliers and the trace solve reduces to one small mode system.

    The two layer traces carry different amplitudes so the Bernoulli
    residual does not cancel by symmetry in the equal-depth case."""
    xi = 2.0 * np.pi * mode / grid.length
    phi1 = ScalarField.from_modes(grid, cos={mode: amplitude})
    phi2 = ScalarField.from_modes(grid, cos={mode: 0.6 * amplitude})
    norms = {}
    lam = {}
    for layer, trace in ((1, phi1), (2, phi2)):
        h = params.h1 if layer == 1 else params.h2
        kappa = params.delta1 if layer == 1 else params.delta2
        p = spec.exponents(layer)
        sym_full = flat_dtn_symbol(xi, params, layer)
        sym_model = h * flat_kakinuma_symbol(xi, kappa, p)
        gap = sym_full - sym_model
        norms[f"r{layer}"] = abs(gap) * sobolev_norm(trace, 0)
        lam[layer] = (sym_full, sym_model)
    # Bernoulli gap: quadratic in the traces, assembled on the grid
    state = InterfaceState.rest(grid, params)
    s1 = LayerTraceSolver(state, params, spec, 1)
    s2 = LayerTraceSolver(state, params, spec, 2)
    v1 = s1.solve(phi1)
    v2 = s2.solve(phi2)
    full1 = ScalarField(grid, lam[1][0] * phi1.values)
    full2 = ScalarField(grid, lam[2][0] * phi2.values)
    B1 = _bernoulli_full(phi1, full1, state, params, 1)
    B2 = _bernoulli_full(phi2, full2, state, params, 2)
    B1N = s1.ops.bernoulli(v1)
    B2N = s2.ops.bernoulli(v2)
    r0 = 0.5 * params.rho1 * (B1 - B1N) - 0.5 * params.rho2 * (B2 - B2N)
    norms["r0"] = sobolev_norm(r0, 0)
    return norms


def flat_residual_sweep(rho1: float, h1: float, N: int, case: str = "H1",
                        deltas=DEFAULT_DELTAS, M: int = 128, mode: int = 1,
                        length: float = 2.0 * np.pi):
    """Per-delta flat-state residual norms (kinematic both layers plus
    Bernoulli), the data behind the first acceptance sweep."""
    spec = ExpansionSpec.from_case(case, N)
    grid = PeriodicGrid(M, length)
    rows = []
    for d in deltas:
        params = validate_params(rho1, h1, d)
        norms = flat_residual_norms(params, spec, grid, mode=mode)
        rows.append({
            "delta": d,
            "h1delta": params.delta1,
            "h2delta": params.delta2,
            "err_r1": norms["r1"],
            "err_r2": norms["r2"],
            "err_r0": norms["r0"],
        })
    return rows


# -- reverse-direction residuals -----------------------------------------------


def residuals_kakinuma_from_full(zeta: ScalarField, phi: ScalarField, b: ScalarField,
                                 params: NondimParams, spec: ExpansionSpec, P: int):
    """Residual blocks of the model equations evaluated on data built from
    the exact interface system at a time slice.

    The stacks solve the constrained system with the canonical trace datum;
    the interface velocity is the exact one (from the transmission solve),
    and the Bernoulli block combines the per-layer gaps with the velocity
    corrections between the two admissible stack constructions.
    """
    state = InterfaceState(zeta=zeta, b=b, params=params)
    trans = solve_transmission(phi, state, params, P)
    psi1, psi2 = trans.trace1, trans.trace2
    dtz = -1.0 * trans.neumann1  # exact-model interface velocity

    csolver = CoupledSolver(state, params, spec)
    tilde = csolver.solve(CoupledRHS(state.grid, spec.N, spec.Nstar, f4=phi))
    L1t = csolver.ops1.apply_L(tilde.phi1)
    L2t = csolver.ops2.apply_L(tilde.phi2)
    l1 = csolver.ops1.lvec(0)
    l2 = csolver.ops2.lvec(0)
    r1 = [l1[i] * ((1.0 / params.h1) * dtz) + L1t[i] for i in range(csolver.ops1.K)]
    r2 = [l2[i] * ((1.0 / params.h2) * dtz) - L2t[i] for i in range(csolver.ops2.K)]

    # Bernoulli block: theorem-style gap on the per-layer stacks plus the
    # correction from switching to the coupled stacks
    t1 = LayerTraceSolver(state, params, spec, 1)
    t2 = LayerTraceSolver(state, params, spec, 2)
    v1 = t1.solve(psi1)
    v2 = t2.solve(psi2)
    B1 = _bernoulli_full(psi1, trans.neumann1, state, params, 1)
    B2 = _bernoulli_full(psi2, trans.neumann2, state, params, 2)
    B1N = t1.ops.bernoulli(v1)
    B2N = t2.ops.bernoulli(v2)
    r0 = -1.0 * (0.5 * params.rho1 * (B1 - B1N) - 0.5 * params.rho2 * (B2 - B2N))

    vel = compute_velocities(v1, v2, state, params, spec)
    velt = compute_velocities(tilde.phi1, tilde.phi2, state, params, spec)
    for sgn, rho, h, kappa, u, ut, w, wt in (
        (1.0, params.rho1, params.h1, params.delta1, vel.u1, velt.u1, vel.w1, velt.w1),
        (-1.0, params.rho2, params.h2, params.delta2, vel.u2, velt.u2, vel.w2, velt.w2),
    ):
        corr = (1.0 / h) * (dtz * (wt - w)) - 0.5 * (
            (ut + u) * (ut - u) + kappa ** -2 * ((wt + w) * (wt - w)))
        r0 = r0 + sgn * rho * corr

    norms = {
        "r1": np.sqrt(sum(sobolev_norm(f, 0) ** 2 for f in r1)),
        "r2": np.sqrt(sum(sobolev_norm(f, 0) ** 2 for f in r2)),
        "r0": sobolev_norm(r0, 0),
    }
    return (r1, r2, r0), norms


# -- Hamiltonian gap -------------------------------------------------------------


def hamiltonian_error(zeta: ScalarField, phi: ScalarField, b: ScalarField,
                      params: NondimParams, spec: ExpansionSpec,
                      P: int | None = None, target: float | None = None):
    """Model Hamiltonian minus exact Hamiltonian at canonical data.  With
    target set, the reference is refined until self-converged below it."""
    hk = hamiltonian_kakinuma(zeta, phi, b, params, spec)
    if target is not None:
        hiw, _, _ = hamiltonian_full_converged(zeta, phi, b, params, target)
    else:
        hiw = hamiltonian_full(zeta, phi, b, params, P if P is not None else 16)
    return hk - hiw


def hamiltonian_error_sweep(rho1: float, h1: float, N: int, case: str,
                            deltas=DEFAULT_DELTAS, M: int = 32,
                            length: float = 2.0 * np.pi,
                            zeta_rel: float = 0.1, b_rel: float = 0.1,
                            phi_amplitude: float = 1.0):
    """Per-delta |H_model - H_full| with fixed (zeta/h, b/h2) profiles so
    only the shallowness varies.  The reference resolution is raised until
    its self-convergence sits two decades under the expected gap, within a
    round-off floor."""
    spec = ExpansionSpec.from_case(case, N)
    grid = PeriodicGrid(M, length)
    rows = []
    order = 4 * N + 2
    for d in deltas:
        params = validate_params(rho1, h1, d)
        hmin = min(params.h1, params.h2)
        zeta = ScalarField.from_modes(grid, sin={1: zeta_rel * hmin})
        b = (ScalarField.from_modes(grid, sin={2: b_rel * params.h2})
             if case == "H2" else ScalarField.zeros(grid))
        phi = ScalarField.from_modes(grid, cos={1: phi_amplitude})
        expected = max(params.delta1, params.delta2) ** order
        target = max(0.01 * expected, 5e-14)
        err = hamiltonian_error(zeta, phi, b, params, spec, target=target)
        rows.append({
            "delta": d,
            "h1delta": params.delta1,
            "h2delta": params.delta2,
            "err_H": abs(err),
        })
    return rows
