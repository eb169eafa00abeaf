"""Order fitting, residual formulas, dispersion, Hamiltonian gap."""

import warnings

import numpy as np
import pytest

from kakinuma.consistency import (
    OrderFit,
    dispersion_error_sweep,
    dispersion_gap,
    dispersion_symbols,
    flat_residual_norms,
    flat_residual_sweep,
    hamiltonian_error,
    order_fit,
    residuals_full_from_kakinuma,
    residuals_kakinuma_from_full,
)
from kakinuma.errors import BelowNoiseFloor
from kakinuma.grid import PeriodicGrid, ScalarField, sobolev_norm
from kakinuma.operators import InterfaceState
from kakinuma.params import ExpansionSpec, validate_params
from kakinuma.reference import flat_dtn_symbol
from kakinuma.elliptic import flat_kakinuma_symbol


def test_order_fit_synthetic_quadratic():
    deltas = np.array([0.2, 0.1, 0.05, 0.025])
    fit = order_fit(deltas, 3.0 * deltas**2)
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.conclusive


def test_order_fit_synthetic_sixth():
    deltas = np.array([0.2, 0.1, 0.05, 0.025])
    fit = order_fit(deltas, 0.7 * deltas**6)
    assert fit.slope == pytest.approx(6.0, abs=1e-12)


def test_order_fit_mixed_orders_flagged():
    """A two-term error over a wide window fits between the orders with a
    visible lack of fit."""
    deltas = np.logspace(0, -3, 10)
    errors = 1.0 * deltas**2 + 1e4 * deltas**6
    fit = order_fit(deltas, errors)
    assert 2.0 < fit.slope < 6.0
    assert fit.r2 < 0.999


def test_order_fit_floor_exclusion():
    deltas = np.array([0.2, 0.1, 0.05, 0.025, 0.0125])
    errors = 1.0 * deltas**8
    errors[-1] = 1e-15  # drowned sample
    with pytest.warns(BelowNoiseFloor):
        fit = order_fit(deltas, errors, floor=1e-13)
    assert fit.excluded == 1
    assert fit.slope == pytest.approx(8.0, abs=1e-6)


def test_order_fit_validation():
    with pytest.raises(ValueError):
        order_fit([0.2, 0.1, 0.05], [1, 1, 1])  # too few
    with pytest.raises(ValueError):
        order_fit([0.1, 0.2, 0.05, 0.01], [1, 1, 1, 1])  # not decreasing


def test_dispersion_symbols_values(params_sym):
    spec = ExpansionSpec.flat_bottom(0)
    w2f, w2m = dispersion_symbols(1.0, params_sym, spec)
    # N=0 model symbol is h xi^2, and the parameter relation gives xi^2
    assert w2m == pytest.approx(1.0, rel=1e-12)
    s1 = flat_dtn_symbol(1.0, params_sym, 1)
    s2 = flat_dtn_symbol(1.0, params_sym, 2)
    assert w2f == pytest.approx(1.0 / (params_sym.rho1 / s1 + params_sym.rho2 / s2))
    with pytest.raises(ValueError):
        dispersion_symbols(0.0, params_sym, spec)


def test_dispersion_long_wave_normalization():
    """omega^2/xi^2 -> 1 as xi -> 0, using the defining parameter relation."""
    params = validate_params(0.35, 0.8, 0.8)
    spec = ExpansionSpec.flat_bottom(0)
    w2f, _ = dispersion_symbols(1e-3, params, spec)
    assert abs(w2f / 1e-6 - 1.0) <= 1e-6


def test_dispersion_gap_matches_double_precision(params_sym):
    spec = ExpansionSpec.flat_bottom(0)
    w2f, w2m = dispersion_symbols(1.0, params_sym, spec)
    assert dispersion_gap(1.0, params_sym, spec) == pytest.approx(
        abs(w2m - w2f), rel=1e-10)


def test_dispersion_sweep_orders():
    for N, expect, tol in ((0, 2.0, 0.3), (1, 6.0, 0.3), (2, 10.0, 0.3)):
        deltas, errs = dispersion_error_sweep(0.5, 1.0, N, "H1")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = order_fit(deltas, errs, floor=1e-30)
        assert abs(fit.slope - expect) <= tol
        assert fit.r2 >= 0.99


def test_flat_residual_sweep_orders():
    for N, expect, tol in ((0, 2.0, 0.2), (1, 6.0, 0.4)):
        rows = flat_residual_sweep(0.5, 1.0, N, "H1", M=64)
        deltas = [r["delta"] for r in rows]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = order_fit(deltas, [r["err_r1"] for r in rows])
        assert abs(fit.slope - expect) <= tol
        assert fit.r2 >= 0.99


def test_flat_residual_value_n0():
    """N=0 single mode: ||r1|| = |sigma - h xi^2| * ||cos|| and the
    relative gap approaches (h1 delta)^2/3."""
    params = validate_params(0.5, 1.0, 0.05)
    grid = PeriodicGrid(64)
    norms = flat_residual_norms(params, ExpansionSpec.flat_bottom(0), grid)
    sym = flat_dtn_symbol(1.0, params, 1)
    expect = abs(sym - params.h1) * np.sqrt(np.pi)
    assert norms["r1"] == pytest.approx(expect, rel=1e-12)
    rel = abs(sym - params.h1) / params.h1
    assert rel == pytest.approx(params.delta1**2 / 3, rel=0.01)


def test_residuals_full_from_kakinuma_zero(grid32, params_sym):
    spec = ExpansionSpec.flat_bottom(1)
    state = InterfaceState.rest(grid32, params_sym)
    zero = ScalarField.zeros(grid32)
    r1, r2, r0 = residuals_full_from_kakinuma(zero, zero, state, params_sym, spec, P=12)
    assert r1.max_abs() <= 1e-13 and r2.max_abs() <= 1e-13 and r0.max_abs() <= 1e-13


def test_residuals_full_from_kakinuma_flat_symbol_oracle(grid32, params_sym):
    """At the flat state the kinematic residual is the symbol gap times the
    mode, strip solver against exact symbols."""
    spec = ExpansionSpec.flat_bottom(0)
    state = InterfaceState.rest(grid32, params_sym)
    tr = ScalarField.from_modes(grid32, cos={1: 1.0})
    r1, r2, _ = residuals_full_from_kakinuma(tr, tr, state, params_sym, spec, P=16)
    gap1 = flat_dtn_symbol(1.0, params_sym, 1) - params_sym.h1 * flat_kakinuma_symbol(
        1.0, params_sym.delta1, spec.upper_p)
    assert np.abs(r1.values - gap1 * np.cos(grid32.nodes)).max() <= 1e-9
    gap2 = params_sym.h2 * flat_kakinuma_symbol(
        1.0, params_sym.delta2, spec.p) - flat_dtn_symbol(1.0, params_sym, 2)
    assert np.abs(r2.values - gap2 * np.cos(grid32.nodes)).max() <= 1e-9


def test_residuals_kakinuma_from_full_zero(grid32, params_sym):
    spec = ExpansionSpec.flat_bottom(1)
    zero = ScalarField.zeros(grid32)
    (_, _, r0), norms = residuals_kakinuma_from_full(
        zero, zero, zero, params_sym, spec, P=12)
    assert norms["r1"] <= 1e-12 and norms["r2"] <= 1e-12 and norms["r0"] <= 1e-12


def test_residuals_kakinuma_from_full_flat_symbol(grid32, params_sym):
    """Flat state: the first residual stack is l * (symbol gap applied to
    the transmission trace), verified per mode."""
    spec = ExpansionSpec.flat_bottom(0)
    phi = ScalarField.from_modes(grid32, cos={1: 1.0})
    (r1, _, _), _ = residuals_kakinuma_from_full(
        ScalarField.zeros(grid32), phi, ScalarField.zeros(grid32),
        params_sym, spec, P=16)
    # equal layers: psi1 = -phi/(2 rho) = -cos, and
    # r1 = psi1 * (sigma1 - h1 sym1)/h1 per the explicit error formula
    gap1 = flat_dtn_symbol(1.0, params_sym, 1) - params_sym.h1 * flat_kakinuma_symbol(
        1.0, params_sym.delta1, spec.upper_p)
    expect = gap1 / params_sym.h1 * np.cos(grid32.nodes)
    assert np.abs(r1[0].values - expect).max() <= 1e-8


def test_residuals_reverse_direction_order(grid32):
    """Weighted block norms decay with the expected order band."""
    spec = ExpansionSpec.flat_bottom(1)
    deltas = [0.2, 0.15, 0.1, 0.07, 0.05]
    norms1 = []
    for d in deltas:
        params = validate_params(0.5, 1.0, d)
        zeta = ScalarField.from_modes(grid32, sin={1: 0.1})
        phi = ScalarField.from_modes(grid32, cos={1: 1.0})
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, norms = residuals_kakinuma_from_full(
                zeta, phi, ScalarField.zeros(grid32), params, spec, P=16)
        norms1.append(norms["r1"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = order_fit(deltas, norms1)
    assert 5.0 <= fit.slope <= 7.0


def test_hamiltonian_error_zero_and_gauge_invariance(grid32, params_sym):
    spec = ExpansionSpec.flat_bottom(1)
    zero = ScalarField.zeros(grid32)
    assert hamiltonian_error(zero, zero, zero, params_sym, spec, P=12) == 0.0


def test_hamiltonian_error_flat_symbol_oracle(grid32, params_sym):
    """Flat state: the gap equals the symbol-level quadrature difference."""
    spec = ExpansionSpec.flat_bottom(0)
    phi = ScalarField.from_modes(grid32, cos={1: 1.0})
    zero = ScalarField.zeros(grid32)
    err = hamiltonian_error(zero, phi, zero, params_sym, spec, P=24)
    w2f, w2m = dispersion_symbols(1.0, params_sym, spec)
    # H = (1/2) omega2-symbol * ||phi||^2 modewise for either model
    expect = 0.5 * (w2m - w2f) * sobolev_norm(phi, 0) ** 2
    assert err == pytest.approx(expect, rel=1e-6)


def test_hamiltonian_error_orders_small():
    """Reduced sweep (three deltas) keeps the expected slope; the full
    seven-delta version is exercised by the acceptance suite."""
    from kakinuma.consistency import hamiltonian_error_sweep

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = hamiltonian_error_sweep(0.5, 1.0, 0, "H1", deltas=(0.2, 0.1, 0.05),
                                       M=32)
    d = [r["delta"] for r in rows]
    e = [r["err_H"] for r in rows]
    slope = np.polyfit(np.log(d), np.log(e), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.3)


def test_orderfit_dataclass_roundtrip():
    fit = OrderFit(deltas=np.array([0.2, 0.1]), errors=np.array([1e-2, 2.5e-3]),
                   slope=2.0, r2=1.0)
    assert fit.conclusive
