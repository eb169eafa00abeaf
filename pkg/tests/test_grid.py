"""Spectral grid calculus: derivatives, inverse Laplacian, norms, products."""

import io

import numpy as np
import pytest

from kakinuma.errors import NonZeroMean
from kakinuma.grid import (
    PeriodicGrid,
    PotentialVec,
    ScalarField,
    field_from_csv,
    field_to_csv,
    half_inverse_laplacian_norm,
    inverse_laplacian,
    sobolev_norm,
)
from conftest import smooth_field


def test_grid_validation():
    with pytest.raises(ValueError):
        PeriodicGrid(12)
    with pytest.raises(ValueError):
        PeriodicGrid(48)


def test_deriv_resolved_modes(grid64):
    f = ScalarField.from_modes(grid64, sin={1: 1.0})
    assert np.abs(f.deriv().values - np.cos(grid64.nodes)).max() <= 1e-12
    g = ScalarField.from_modes(grid64, cos={2: 1.0})
    assert np.abs(g.deriv(2).values + 4 * np.cos(2 * grid64.nodes)).max() <= 1e-12
    c = ScalarField.constant(grid64, 4.2)
    assert c.deriv().max_abs() == 0.0


def test_inverse_laplacian(grid64):
    f = ScalarField.from_modes(grid64, cos={3: 1.0})
    u = inverse_laplacian(f)
    assert np.abs(u.values + np.cos(3 * grid64.nodes) / 9).max() <= 1e-14
    assert inverse_laplacian(ScalarField.zeros(grid64)).max_abs() == 0.0
    with pytest.raises(NonZeroMean):
        inverse_laplacian(ScalarField.constant(grid64, 0.1))


def test_inverse_laplacian_roundtrip(grid64):
    rng = np.random.default_rng(0)
    f = smooth_field(grid64, rng).project_mean_free()
    u = inverse_laplacian(f)
    back = u.deriv(2)
    assert (back - f).max_abs() <= 1e-10 * max(f.max_abs(), 1.0)


def test_sobolev_norms(grid64):
    c = ScalarField.from_modes(grid64, cos={1: 1.0})
    assert sobolev_norm(c, 0) == pytest.approx(np.sqrt(np.pi), rel=1e-13)
    assert sobolev_norm(c, 1) == pytest.approx(np.sqrt(2 * np.pi), rel=1e-13)
    one = ScalarField.constant(grid64, 1.0)
    assert sobolev_norm(one, 0) == pytest.approx(np.sqrt(2 * np.pi), rel=1e-13)


def test_sobolev_matches_quadrature(grid64):
    rng = np.random.default_rng(1)
    f = smooth_field(grid64, rng)
    quad = np.sqrt(grid64.quad(f.values**2))
    assert sobolev_norm(f, 0) == pytest.approx(quad, rel=1e-12)


def test_half_inverse_laplacian_norm(grid64):
    f = ScalarField.from_modes(grid64, cos={2: 1.0})
    assert half_inverse_laplacian_norm(f, 0) == pytest.approx(np.sqrt(np.pi) / 2, rel=1e-13)
    assert half_inverse_laplacian_norm(ScalarField.zeros(grid64), 0) == 0.0
    two = ScalarField.from_modes(grid64, sin={1: 1.0, 2: 1.0})
    assert half_inverse_laplacian_norm(two, 0) == pytest.approx(
        np.sqrt(np.pi * (1 + 0.25)), rel=1e-13)
    with pytest.raises(NonZeroMean):
        half_inverse_laplacian_norm(ScalarField.constant(grid64, 1.0), 0)


def test_linearity_of_operations(grid64):
    rng = np.random.default_rng(2)
    f = smooth_field(grid64, rng)
    g = smooth_field(grid64, rng)
    lhs = (2.0 * f + 3.0 * g).deriv()
    rhs = 2.0 * f.deriv() + 3.0 * g.deriv()
    assert (lhs - rhs).max_abs() <= 1e-12


def test_dealiased_product_exact_for_resolved(grid64):
    # sin^2 = (1 - cos 2x)/2 is fully resolved: product must be exact
    f = ScalarField.from_modes(grid64, sin={1: 1.0})
    prod = f * f
    expect = 0.5 * (1.0 - np.cos(2 * grid64.nodes))
    assert np.abs(prod.values - expect).max() <= 1e-14


def test_pow_repeated_multiplication(grid64):
    f = ScalarField.from_modes(grid64, cos={1: 0.3}) + 1.0
    assert ((f**3) - f * f * f).max_abs() <= 1e-15
    assert (f**0).values == pytest.approx(np.ones(grid64.M))


def test_resample_roundtrip(grid64):
    rng = np.random.default_rng(3)
    f = smooth_field(grid64, rng)
    up = grid64.resample(f.values, 128)
    down = PeriodicGrid(128, grid64.length).resample(up, 64)
    assert np.abs(down - f.values).max() <= 1e-13


def test_field_csv_roundtrip(grid32, tmp_path):
    rng = np.random.default_rng(4)
    f = smooth_field(grid32, rng)
    path = tmp_path / "f.csv"
    field_to_csv(f, str(path))
    g = field_from_csv(str(path))
    assert g.grid == grid32
    assert np.array_equal(g.values, f.values)  # 17 digits round-trips binary64


def test_field_csv_buffer(grid32):
    f = ScalarField.from_modes(grid32, sin={1: 1.0})
    buf = io.StringIO()
    field_to_csv(f, buf)
    buf.seek(0)
    g = field_from_csv(buf)
    assert np.array_equal(g.values, f.values)


def test_potential_vec(grid32):
    pv = PotentialVec.zeros(grid32, 3)
    assert pv.count == 3
    assert pv.tail().count == 2
    f = ScalarField.constant(grid32, 2.0)
    pv2 = PotentialVec([f, f, f])
    dotted = pv2.dot([ScalarField.constant(grid32, 1.0)] * 3)
    assert dotted.values == pytest.approx(np.full(grid32.M, 6.0))


def test_nonfinite_rejected(grid32):
    vals = np.zeros(grid32.M)
    vals[3] = np.nan
    with pytest.raises(ValueError):
        ScalarField(grid32, vals)
