"""Operator algebra: l-vectors, block operators, velocities, Bernoulli."""

import numpy as np
import pytest

from kakinuma.errors import CavitationError
from kakinuma.grid import PotentialVec, ScalarField, l2_inner
from kakinuma.operators import (
    InterfaceState,
    apply_L1,
    apply_L2,
    apply_L2_alternate,
    apply_calL,
    bernoulli_BN,
    compute_velocities,
    l_vector,
    layer_ops,
)
from kakinuma.params import ExpansionSpec, validate_params
from conftest import smooth_field


def _rest(grid, params):
    return InterfaceState.rest(grid, params)


def _random_stack(grid, K, rng, amplitude=1.0):
    return PotentialVec([smooth_field(grid, rng, amplitude=amplitude) for _ in range(K)])


def test_l_vector_at_unit_thickness(grid32):
    spec = ExpansionSpec.flat_bottom(2)
    H = ScalarField.constant(grid32, 1.0)
    l0 = l_vector(H, spec, 1, 0)
    assert all(np.allclose(c.values, 1.0) for c in l0)
    l1 = l_vector(H, spec, 1, 1)
    # d/dH H^(2i) at H=1 is 2i
    assert [c.values[0] for c in l1] == pytest.approx([0.0, 2.0, 4.0])
    assert l1[0].max_abs() == 0.0


def test_l_vector_lower_layer_powers(grid32):
    spec = ExpansionSpec.general_bottom(1)  # p = (0, 1, 2)
    H = ScalarField.constant(grid32, 2.0)
    l0 = l_vector(H, spec, 2, 0)
    assert [c.values[0] for c in l0] == pytest.approx([1.0, 2.0, 4.0])
    l2 = l_vector(H, spec, 2, 2)
    # p(p-1) H^(p-2): (0, 0, 2)
    assert [c.values[0] for c in l2] == pytest.approx([0.0, 0.0, 2.0])


def test_apply_L1_flat_single_mode(grid64, params_sym):
    spec = ExpansionSpec.flat_bottom(0)
    phi = PotentialVec([ScalarField.from_modes(grid64, cos={2: 1.0})])
    out = apply_L1(phi, _rest(grid64, params_sym), params_sym, spec)
    assert np.abs(out[0].values - 4 * np.cos(2 * grid64.nodes)).max() <= 1e-12


def test_apply_L1_zero_order_row(grid64, params_sym):
    # N=1, phi = (0, cos x): row 1 = (1/5 + (4/3) kappa^-2) cos x
    spec = ExpansionSpec.flat_bottom(1)
    phi = PotentialVec([ScalarField.zeros(grid64),
                        ScalarField.from_modes(grid64, cos={1: 1.0})])
    out = apply_L1(phi, _rest(grid64, params_sym), params_sym, spec)
    coef = 1 / 5 + (4 / 3) / params_sym.delta1**2
    assert np.abs(out[1].values - coef * np.cos(grid64.nodes)).max() <= 1e-10


def test_constant_head_component_in_kernel(grid32, params_asym):
    # (c, 0, ..., 0) is killed: pure divergence flux, no zero-order term in
    # column 0
    rng = np.random.default_rng(0)
    zeta = 0.2 * smooth_field(grid32, rng, amplitude=0.2)
    state = InterfaceState(zeta=zeta, b=ScalarField.zeros(grid32), params=params_asym)
    spec = ExpansionSpec.flat_bottom(1)
    phi = PotentialVec([ScalarField.constant(grid32, 3.7), ScalarField.zeros(grid32)])
    out = apply_L1(phi, state, params_asym, spec)
    assert max(r.max_abs() for r in out) == 0.0
    # same for the lower layer with arbitrary bottom (p0 = 0 kills column 0)
    b = ScalarField.from_modes(grid32, sin={2: 0.1})
    state2 = InterfaceState(zeta=zeta, b=b, params=params_asym)
    spec2 = ExpansionSpec.general_bottom(1)
    phi2 = PotentialVec([ScalarField.constant(grid32, -1.3)] +
                        [ScalarField.zeros(grid32)] * 2)
    out2 = apply_L2(phi2, state2, params_asym, spec2)
    assert max(r.max_abs() for r in out2) <= 1e-13


def test_apply_L2_reduces_to_L1_form_at_flat_bottom(grid32, params_sym):
    # with b = 0 and matching exponents the two layers share the formula
    rng = np.random.default_rng(1)
    zeta = smooth_field(grid32, rng, amplitude=0.05)
    state = InterfaceState(zeta=zeta, b=ScalarField.zeros(grid32), params=params_sym)
    spec = ExpansionSpec.flat_bottom(1)
    stack = _random_stack(grid32, 2, rng, amplitude=0.5)
    # params_sym has h1 = h2 and the state has H2 = 1 + zeta = values of
    # the layer-1 operator evaluated at thickness 1 + zeta
    out2 = apply_L2(stack, state, params_sym, spec)
    mirror = InterfaceState(zeta=-1.0 * zeta, b=ScalarField.zeros(grid32),
                            params=params_sym)
    out1 = apply_L1(stack, mirror, params_sym, spec)
    for a, c in zip(out1, out2):
        assert (a - c).max_abs() <= 1e-11


def test_apply_L2_term_by_term_oracle(grid32, params_sym):
    """Independent pointwise assembly of the lower-layer block formula."""
    rng = np.random.default_rng(2)
    b = ScalarField.from_modes(grid32, sin={1: 0.1 * params_sym.h2})
    state = InterfaceState(zeta=ScalarField.zeros(grid32), b=b, params=params_sym)
    spec = ExpansionSpec.general_bottom(1)
    stack = _random_stack(grid32, 3, rng, amplitude=0.4)
    out = apply_L2(stack, state, params_sym, spec)

    g = grid32
    H = state.H2.values
    beta = g.deriv_values(b.values) / params_sym.h2
    kap2 = params_sym.delta2 ** -2
    p = spec.p
    for i in range(3):
        acc = np.zeros(g.M)
        for j in range(3):
            f = stack[j].values
            df = g.deriv_values(f)
            s = p[i] + p[j]
            flux = H ** (s + 1) / (s + 1) * df
            if p[j] > 0:
                flux -= p[j] / s * H**s * beta * f
            acc -= g.deriv_values(flux)
            if p[i] > 0:
                acc -= p[i] / s * H**s * beta * df
            if p[i] * p[j] > 0:
                acc += p[i] * p[j] / (s - 1) * H ** (s - 1) * (kap2 + beta**2) * f
        # plain products alias slightly against the dealiased path
        assert np.abs(out[i].values - acc).max() <= 1e-8 * max(np.abs(acc).max(), 1.0)


def test_alternate_assembly_matches_direct(grid32, params_asym):
    rng = np.random.default_rng(3)
    zeta = smooth_field(grid32, rng, amplitude=0.04)
    b = ScalarField.from_modes(grid32, sin={2: 0.1 * params_asym.h2})
    state = InterfaceState(zeta=zeta, b=b, params=params_asym)
    spec = ExpansionSpec.general_bottom(1)
    stack = _random_stack(grid32, 3, rng, amplitude=0.5)
    d = apply_L2(stack, state, params_asym, spec)
    alt = apply_L2_alternate(stack, state, params_asym, spec)
    scale = max(r.max_abs() for r in d)
    for a, c in zip(d, alt):
        assert (a - c).max_abs() <= 1e-10 * max(scale, 1.0)


def test_adjoint_symmetry(grid32, params_asym):
    """<L_ij f, g> = <f, L_ji g> for both layers on random smooth data."""
    rng = np.random.default_rng(4)
    zeta = smooth_field(grid32, rng, amplitude=0.05)
    b = ScalarField.from_modes(grid32, sin={1: 0.08 * params_asym.h2})
    state = InterfaceState(zeta=zeta, b=b, params=params_asym)
    spec = ExpansionSpec.general_bottom(1)
    for layer in (1, 2):
        ops = layer_ops(state, params_asym, spec, layer)
        f = smooth_field(grid32, rng)
        g = smooth_field(grid32, rng)
        for i in range(ops.K):
            for j in range(ops.K):
                lhs = l2_inner(ops.apply_block(i, j, f), g)
                rhs = l2_inner(f, ops.apply_block(j, i, g))
                assert lhs == pytest.approx(rhs, abs=1e-10 * max(abs(lhs), 1.0))


def test_row0_divergence_mean_free(grid32, params_asym):
    rng = np.random.default_rng(5)
    zeta = smooth_field(grid32, rng, amplitude=0.05)
    b = ScalarField.from_modes(grid32, cos={1: 0.1})
    state = InterfaceState(zeta=zeta, b=b, params=params_asym)
    spec = ExpansionSpec.general_bottom(1)
    for layer in (1, 2):
        ops = layer_ops(state, params_asym, spec, layer)
        stack = _random_stack(grid32, ops.K, rng)
        row0 = ops.apply_calL(stack, 0)
        assert abs(row0.mean()) <= 1e-14 * max(row0.max_abs(), 1.0)


def test_quadratic_form_coercive_flat(grid32, params_sym):
    rng = np.random.default_rng(6)
    state = _rest(grid32, params_sym)
    spec = ExpansionSpec.flat_bottom(1)
    for layer in (1, 2):
        ops = layer_ops(state, params_sym, spec, layer)
        for _ in range(10):
            stack = _random_stack(grid32, ops.K, rng)
            rows = ops.apply_L(stack)
            quad = sum(l2_inner(rows[i], stack[i]) for i in range(ops.K))
            grad = sum(l2_inner(c.deriv(), c.deriv()) for c in stack)
            primed = sum(l2_inner(c, c) for c in stack.components[1:])
            lower = grad + ops.kappa ** -2 * primed
            assert quad >= 0.0
            assert quad >= 0.05 * lower  # desk-scale coercivity constant


def test_calL_identity_under_compatibility(grid32, params_sym):
    """If calL_i phi = 0 for i >= 1 then L phi = l * calL_0 phi rowwise."""
    from kakinuma.elliptic import solve_layer_trace

    rng = np.random.default_rng(7)
    zeta = smooth_field(grid32, rng, amplitude=0.05)
    state = InterfaceState(zeta=zeta, b=ScalarField.zeros(grid32), params=params_sym)
    spec = ExpansionSpec.flat_bottom(1)
    trace = smooth_field(grid32, rng).project_mean_free()
    stack = solve_layer_trace(trace, state, params_sym, spec, 1)
    ops = layer_ops(state, params_sym, spec, 1)
    rows = ops.apply_L(stack)
    lam0 = ops.apply_calL(stack, 0)
    lvec = ops.lvec(0)
    scale = max(r.max_abs() for r in rows)
    for i in range(ops.K):
        assert (rows[i] - lvec[i] * lam0).max_abs() <= 1e-10 * max(scale, 1.0)


def test_calL_i0_equals_row0(grid32, params_sym):
    rng = np.random.default_rng(8)
    state = _rest(grid32, params_sym)
    spec = ExpansionSpec.flat_bottom(1)
    stack = _random_stack(grid32, 2, rng)
    row0 = apply_calL(stack, state, params_sym, spec, 1, 0)
    rows = apply_L1(stack, state, params_sym, spec)
    assert (row0 - rows[0]).max_abs() == 0.0


def test_velocities_rest_and_N0(grid32, params_sym):
    spec = ExpansionSpec.flat_bottom(0)
    state = _rest(grid32, params_sym)
    z = PotentialVec.zeros(grid32, 1)
    v = compute_velocities(z, z, state, params_sym, spec)
    assert v.u1.max_abs() == v.u2.max_abs() == v.w1.max_abs() == v.w2.max_abs() == 0.0
    phi = PotentialVec([ScalarField.from_modes(grid32, sin={1: 1.0})])
    v = compute_velocities(phi, z, state, params_sym, spec)
    assert (v.u1 - phi[0].deriv()).max_abs() <= 1e-14
    assert v.w1.max_abs() == 0.0


def test_velocity_chain_rule_identity(grid32, params_asym):
    """grad(l . phi) = u + w * grad(zeta)/h_l for both layers."""
    from kakinuma.elliptic import solve_layer_trace

    rng = np.random.default_rng(9)
    zeta = smooth_field(grid32, rng, amplitude=0.06)
    b = ScalarField.from_modes(grid32, sin={1: 0.05 * params_asym.h2})
    state = InterfaceState(zeta=zeta, b=b, params=params_asym)
    spec = ExpansionSpec.general_bottom(1)
    tr1 = smooth_field(grid32, rng).project_mean_free()
    tr2 = smooth_field(grid32, rng).project_mean_free()
    phi1 = solve_layer_trace(tr1, state, params_asym, spec, 1)
    phi2 = solve_layer_trace(tr2, state, params_asym, spec, 2)
    vel = compute_velocities(phi1, phi2, state, params_asym, spec)
    dzeta = zeta.deriv()
    ops1 = layer_ops(state, params_asym, spec, 1)
    ops2 = layer_ops(state, params_asym, spec, 2)
    lhs1 = ops1.trace(phi1).deriv()
    rhs1 = vel.u1 + (1.0 / params_asym.h1) * (vel.w1 * dzeta)
    assert (lhs1 - rhs1).max_abs() <= 1e-10 * max(lhs1.max_abs(), 1.0)
    lhs2 = ops2.trace(phi2).deriv()
    rhs2 = vel.u2 + (1.0 / params_asym.h2) * (vel.w2 * dzeta)
    assert (lhs2 - rhs2).max_abs() <= 1e-10 * max(lhs2.max_abs(), 1.0)


def test_bernoulli_zero_and_reduction(grid32, params_sym):
    spec = ExpansionSpec.flat_bottom(0)
    state = _rest(grid32, params_sym)
    z = PotentialVec.zeros(grid32, 1)
    assert bernoulli_BN(z, state, params_sym, spec, 1).max_abs() == 0.0
    # N=0 flat: B = |grad phi|^2 / 2 (w vanishes)
    phi = PotentialVec([ScalarField.from_modes(grid32, cos={1: 1.0})])
    B = bernoulli_BN(phi, state, params_sym, spec, 1)
    expect = 0.5 * np.sin(grid32.nodes) ** 2
    assert np.abs(B.values - expect).max() <= 1e-12


def test_bernoulli_pointwise_oracle(grid32, params_sym):
    """Single-mode state against a literal assembly of the defining
    formula."""
    from kakinuma.elliptic import LayerTraceSolver

    spec = ExpansionSpec.flat_bottom(1)
    state = _rest(grid32, params_sym)
    solver = LayerTraceSolver(state, params_sym, spec, 1)
    trace = ScalarField.from_modes(grid32, cos={1: 0.7})
    stack = solver.solve(trace)
    B = bernoulli_BN(stack, state, params_sym, spec, 1)
    ops = solver.ops
    u = sum((ops.Hpow(q) * c.deriv() for q, c in zip(ops.p, stack)),
            ScalarField.zeros(grid32))
    w = stack.dot(ops.lvec(1))
    lam = ops.apply_calL(stack, 0)
    expect = 0.5 * (u * u + params_sym.delta1 ** -2 * (w * w)) - w * lam
    assert (B - expect).max_abs() <= 1e-12


def test_cavitation_detected(grid32, params_sym):
    zeta = ScalarField.from_modes(grid32, cos={1: 1.2})
    state = InterfaceState(zeta=zeta, b=ScalarField.zeros(grid32), params=params_sym)
    spec = ExpansionSpec.flat_bottom(0)
    with pytest.raises(CavitationError):
        apply_L1(PotentialVec.zeros(grid32, 1), state, params_sym, spec)


def test_zero_over_zero_convention_table(grid32, params_sym):
    """Coefficients with p_i = p_j = 0 vanish identically, including the
    p0 p1/(p0+p1-1) slot when p1 = 1."""
    spec = ExpansionSpec.general_bottom(1)  # p = (0, 1, 2): p0+p1-1 = 0
    b = ScalarField.from_modes(grid32, sin={1: 0.1})
    state = InterfaceState(zeta=ScalarField.zeros(grid32), b=b, params=params_sym)
    ops = layer_ops(state, params_sym, spec, 2)
    a_c, b_c, g_c, c_c, _ = ops._block_terms(0, 1)
    assert c_c == 0.0 and g_c == 0.0 and b_c == 1.0
    a_c, b_c, g_c, c_c, _ = ops._block_terms(0, 0)
    assert b_c == g_c == c_c == 0.0
