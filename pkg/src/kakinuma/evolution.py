"""Time evolution in canonical variables and runtime diagnostics.

The state advanced in time is the canonical pair (zeta, phi) with
phi = rho2*phi2 - rho1*phi1 at the interface; the coefficient stacks are
reconstructed from it at every evaluation by the gauged coupled solve, so
the discrete flow sits on the constraint manifold by construction and the
interface equation can be read off either layer (the two are
cross-checked at every evaluation).

The scheme is classical RK4 with a fixed step under a CFL-style guard.
Conservation statements (Hamiltonian drift of order dt^4, exact mean
preservation) are properties of this scheme, not claims inherited from
the continuous model.
"""

from dataclasses import dataclass, field

import numpy as np

from .elliptic import (
    COMPAT_RTOL,
    CoupledRHS,
    CoupledSolver,
    LaggedCoupledSolver,
    recover_time_derivatives,
)
from .errors import CavitationError, CompatibilityViolation, StepRejected
from .grid import PotentialVec, ScalarField, l2_inner, sobolev_norm
from .operators import InterfaceState, Velocities, compute_velocities, layer_ops
from .params import (
    ExpansionSpec,
    NondimParams,
    StabilityConstants,
    stability_constants,
    theta_weights,
)


@dataclass(frozen=True)
class CanonicalState:
    """Canonical pair at one time; phi is kept mean-free by the gauge."""

    t: float
    zeta: ScalarField
    phi: ScalarField


@dataclass
class TrajectoryRecord:
    times: list = field(default_factory=list)
    hamiltonian: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    min_margin: list = field(default_factory=list)
    energy_Em: list = field(default_factory=list)
    max_abs_zeta: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    halted: bool = False
    halt_reason: str = ""


class _Reconstruction:
    """One canonical-state reconstruction: stacks, velocities, row-0 data.

    The agreement check between the two layer expressions for the interface
    velocity uses the combined-row residual of the solve itself, i.e. both
    expressions are evaluated in the discretization the solver enforces.
    """

    def __init__(self, s: CanonicalState, b: ScalarField, params: NondimParams,
                 spec: ExpansionSpec, lagged: LaggedCoupledSolver | None = None):
        state = InterfaceState(zeta=s.zeta, b=b, params=params)
        state.require_noncavitation()
        self.ops1 = layer_ops(state, params, spec, 1)
        self.ops2 = layer_ops(state, params, spec, 2)
        rhs = CoupledRHS(state.grid, spec.N, spec.Nstar, f4=s.phi)
        if lagged is not None:
            sol = lagged.solve(state, rhs, ops1=self.ops1, ops2=self.ops2)
        else:
            sol = CoupledSolver(state, params, spec,
                                ops1=self.ops1, ops2=self.ops2).solve(rhs)
        self.state = state
        self.phi1, self.phi2 = sol.phi1, sol.phi2
        self.lam1 = self.ops1.apply_calL(self.phi1, 0)
        self.lam2 = self.ops2.apply_calL(self.phi2, 0)
        self.dtz1 = -params.h1 * self.lam1
        self.dtz2 = params.h2 * self.lam2
        scale = max(self.dtz1.max_abs(), self.dtz2.max_abs(), 1e-30)
        self.compat_gap = sol.compat_gap
        if self.compat_gap > max(COMPAT_RTOL * scale, 1e-12):
            raise CompatibilityViolation(
                f"dzeta/dt expressions differ by {self.compat_gap:.3e}"
            )


def rhs_canonical(s: CanonicalState, b: ScalarField, params: NondimParams,
                  spec: ExpansionSpec, recon: _Reconstruction | None = None,
                  lagged: LaggedCoupledSolver | None = None):
    """Canonical velocity field: dzeta/dt from row 0 of the reconstruction
    and dphi/dt = -zeta + rho1 B1 - rho2 B2, both projected mean-free."""
    r = recon if recon is not None else _Reconstruction(s, b, params, spec, lagged=lagged)
    dzeta = r.dtz1.project_mean_free()
    B1 = r.ops1.bernoulli(r.phi1, lam=r.lam1)
    B2 = r.ops2.bernoulli(r.phi2, lam=r.lam2)
    dphi = (-1.0 * s.zeta + params.rho1 * B1 - params.rho2 * B2).project_mean_free()
    return dzeta, dphi


def rk4_step(s: CanonicalState, dt: float, b: ScalarField, params: NondimParams,
             spec: ExpansionSpec, lagged: LaggedCoupledSolver | None = None) -> CanonicalState:
    """Classical four-stage step; mean(zeta) is preserved exactly because
    every stage velocity is mean-free."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")

    def f(state):
        try:
            return rhs_canonical(state, b, params, spec, lagged=lagged)
        except CavitationError as exc:
            raise StepRejected(f"stage hit cavitation: {exc}") from exc

    k1z, k1p = f(s)
    k2z, k2p = f(CanonicalState(s.t + 0.5 * dt, s.zeta + 0.5 * dt * k1z, s.phi + 0.5 * dt * k1p))
    k3z, k3p = f(CanonicalState(s.t + 0.5 * dt, s.zeta + 0.5 * dt * k2z, s.phi + 0.5 * dt * k2p))
    k4z, k4p = f(CanonicalState(s.t + dt, s.zeta + dt * k3z, s.phi + dt * k3p))
    sixth = dt / 6.0
    return CanonicalState(
        t=s.t + dt,
        zeta=s.zeta + sixth * (k1z + 2.0 * k2z + 2.0 * k3z + k4z),
        phi=s.phi + sixth * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
    )


def hamiltonian_kakinuma(zeta: ScalarField, phi: ScalarField, b: ScalarField,
                         params: NondimParams, spec: ExpansionSpec,
                         recon: _Reconstruction | None = None) -> float:
    """Model energy at canonical data:
    (1/2) sum_l rho_l h_l <L_l phi_l, phi_l> + (1/2)||zeta||^2."""
    r = recon if recon is not None else _Reconstruction(
        CanonicalState(0.0, zeta, phi), b, params, spec)
    total = 0.0
    for rho, h, ops, stack in (
        (params.rho1, params.h1, r.ops1, r.phi1),
        (params.rho2, params.h2, r.ops2, r.phi2),
    ):
        rows = ops.apply_L(stack)
        total += rho * h * sum(l2_inner(rows[i], stack[i]) for i in range(ops.K))
    return 0.5 * total + 0.5 * sobolev_norm(zeta, 0) ** 2


def stability_function_a(state: InterfaceState, phi1: PotentialVec, phi2: PotentialVec,
                         time_derivs, params: NondimParams, spec: ExpansionSpec) -> ScalarField:
    """Pointwise coefficient of the elevation block of the linearized
    energy; equals 1 at rest and whenever both expansions stop at one
    component.  time_derivs is the (dzeta, dphi1, dphi2) triple from
    recover_time_derivatives."""
    _, dphi1, dphi2 = time_derivs
    ops1 = layer_ops(state, params, spec, 1)
    ops2 = layer_ops(state, params, spec, 2)
    vel = compute_velocities(phi1, phi2, state, params, spec)

    def material(ops, stack, dstack, u):
        out = PotentialVec([d + u * c.deriv() for d, c in zip(dstack, stack)])
        return out.dot(ops.lvec(1))

    a = ScalarField.constant(state.grid, 1.0)
    term1 = material(ops1, phi1, dphi1, vel.u1) - params.delta1 ** -2 * (
        vel.w1 * phi1.dot(ops1.lvec(2)))
    a = a + (params.rho1 / params.h1) * term1
    curv2 = phi2.dot(ops2.lvec(2))
    shear2 = params.delta2 ** -2 * vel.w2
    if state.b.max_abs() > 0.0:
        shear2 = shear2 - (1.0 / params.h2) * (state.b.deriv() * vel.u2)
    term2 = material(ops2, phi2, dphi2, vel.u2) + shear2 * curv2
    a = a + (params.rho2 / params.h2) * term2
    return a


def stability_margin(state: InterfaceState, velocities: Velocities, a: ScalarField,
                     params: NondimParams, constants: StabilityConstants) -> ScalarField:
    """a minus the shear term; the run-level indicator is its minimum."""
    shear = velocities.u1 - velocities.u2
    denom = (
        params.rho1 * params.h2 * constants.alpha2 * state.H2
        + params.rho2 * params.h1 * constants.alpha1 * state.H1
    )
    ratio = ScalarField(
        state.grid,
        params.rho1 * params.rho2 * (shear * shear).values / denom.values,
    )
    return a - ratio


def energy_Em(state: InterfaceState, phi1: PotentialVec, phi2: PotentialVec,
              m: int, params: NondimParams) -> float:
    """Sobolev-m energy of the stacks and the elevation."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    total = sobolev_norm(state.zeta, m) ** 2
    for rho, h, kappa, stack in (
        (params.rho1, params.h1, params.delta1, phi1),
        (params.rho2, params.h2, params.delta2, phi2),
    ):
        grad = sum(sobolev_norm(c.deriv(), m) ** 2 for c in stack)
        primed = sum(sobolev_norm(c, m) ** 2 for c in stack.components[1:])
        total += rho * h * (grad + kappa ** -2 * primed)
    return total


def quadratic_form_A0mod(state: InterfaceState, phi1: PotentialVec, phi2: PotentialVec,
                         time_derivs, perturbation, params: NondimParams,
                         spec: ExpansionSpec,
                         constants: StabilityConstants | None = None) -> float:
    """Energy quadratic form of the linearized system at a base state,
    evaluated on a perturbation (zdot, phi1dot, phi2dot).  Nonnegative
    whenever the stability margin is; a margin violation admits negative
    directions."""
    zdot, p1dot, p2dot = perturbation
    constants = constants or stability_constants(spec)
    a = stability_function_a(state, phi1, phi2, time_derivs, params, spec)
    vel = compute_velocities(phi1, phi2, state, params, spec)
    v = vel.u2 - vel.u1
    theta1, theta2 = theta_weights(
        params, state.H1.values, state.H2.values, constants.alpha1, constants.alpha2)
    w = state.grid.dx

    total = float((a.values * zdot.values**2).sum() * w)
    for rho, h, kappa, layer, stack, theta in (
        (params.rho1, params.h1, params.delta1, 1, p1dot, theta1),
        (params.rho2, params.h2, params.delta2, 2, p2dot, theta2),
    ):
        ops = layer_ops(state, params, spec, layer)
        A = ops.pointwise_A()
        C = ops.pointwise_C()
        dvals = np.stack([c.deriv().values for c in stack])
        vals = np.stack([c.values for c in stack])
        quad_A = np.einsum("ijm,im,jm->", A, dvals, dvals) * w
        quad_C = np.einsum("ijm,im,jm->", C, vals, vals) * w
        lgrad = np.zeros(state.grid.M)
        for q, dv in zip(ops.p, dvals):
            lgrad += ops.Hpow(q).values * dv
        cross = 2.0 * rho * float(
            (theta * v.values * lgrad * zdot.values).sum() * w)
        total += rho * h * (quad_A + kappa ** -2 * quad_C) + cross
    return total


def simulate(initial: CanonicalState, b: ScalarField, params: NondimParams,
             spec: ExpansionSpec, T: float, dt: float, stride: int = 10,
             energy_m: int = 1, halt_on_instability: bool = True,
             cstab: float = 0.5) -> TrajectoryRecord:
    """Advance to time T recording diagnostics every `stride` steps.

    The step must respect dt <= cstab * dx.  With halt_on_instability the
    run stops (rather than clamps) when cavitation occurs or the stability
    margin drops below zero; the record is returned with the halt reason.
    """
    if dt > cstab * initial.zeta.grid.dx:
        raise ValueError(
            f"dt={dt} violates the step guard {cstab} * dx = {cstab * initial.zeta.grid.dx:.3e}"
        )
    constants = stability_constants(spec)
    rec = TrajectoryRecord()
    steps = int(round(T / dt))
    s = initial
    lagged = LaggedCoupledSolver(params, spec)

    def record(s: CanonicalState) -> bool:
        recon = _Reconstruction(s, b, params, spec, lagged=lagged)
        derivs = recover_time_derivatives(recon.state, recon.phi1, recon.phi2, params, spec)
        a = stability_function_a(recon.state, recon.phi1, recon.phi2, derivs, params, spec)
        vel = compute_velocities(recon.phi1, recon.phi2, recon.state, params, spec)
        margin = stability_margin(recon.state, vel, a, params, constants)
        rec.times.append(s.t)
        rec.hamiltonian.append(hamiltonian_kakinuma(s.zeta, s.phi, b, params, spec, recon=recon))
        rec.mass.append(s.zeta.grid.quad(s.zeta.values))
        rec.min_margin.append(float(margin.values.min()))
        rec.energy_Em.append(energy_Em(recon.state, recon.phi1, recon.phi2, energy_m, params))
        rec.max_abs_zeta.append(s.zeta.max_abs())
        rec.snapshots.append(s)
        return rec.min_margin[-1] >= 0.0

    stable = record(s)
    if not stable and halt_on_instability:
        rec.halted = True
        rec.halt_reason = "initial state violates the stability condition"
        return rec
    for n in range(1, steps + 1):
        try:
            s = rk4_step(s, dt, b, params, spec, lagged=lagged)
        except (StepRejected, CavitationError, CompatibilityViolation) as exc:
            rec.halted = True
            rec.halt_reason = str(exc)
            return rec
        if n % stride == 0 or n == steps:
            stable = record(s)
            if not stable and halt_on_instability:
                rec.halted = True
                rec.halt_reason = f"stability margin negative at t={s.t:.6g}"
                return rec
    return rec
