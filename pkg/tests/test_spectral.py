from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpns2d.errors import DimensionError, ValidationError
from lpns2d.spectral import (
    Grid,
    derivative,
    divergence,
    divergence_residual,
    gradient,
    hermitian_defect,
    l2_norm_spectral,
    laplacian,
    leray_project,
    lp_norm,
    perp_gradient,
    product,
    read_snapshot,
    strain,
    matrix_divergence,
    to_physical,
    to_spectral,
    write_snapshot,
)


class TestGrid:
    def test_rejects_small_or_non_power_of_two(self):
        for n in (4, 12, 100):
            with pytest.raises(ValidationError):
                Grid(n)

    def test_spacing(self):
        g = Grid(64, 2 * np.pi)
        assert g.spacing == pytest.approx(2 * np.pi / 64)

    def test_dealias_mask_drops_nyquist(self):
        g = Grid(32)
        k1, _ = g.index
        assert not g.dealias_mask[k1 == -16].any()


class TestTransforms:
    def test_constant_maps_to_zero_mode(self, grid64):
        f = to_spectral(np.full(grid64.shape, 3.0), grid64)
        assert f.coeffs[0, 0, 0] == pytest.approx(3.0 * 64**2)
        rest = np.abs(f.coeffs).ravel()[1:]
        assert rest.max() < 1e-9

    def test_pure_mode(self, grid64):
        x1, _ = grid64.coordinates()
        f = to_spectral(np.exp(2j * np.pi * x1 / grid64.box_length), grid64)
        mag = np.abs(f.coeffs[0])
        assert mag[1, 0] == pytest.approx(64**2)
        mag[1, 0] = 0
        assert mag.max() < 1e-8

    def test_round_trip(self, grid64, rng):
        for _ in range(20):
            s = rng.standard_normal(grid64.shape)
            back = to_physical(to_spectral(s, grid64))
            assert np.max(np.abs(back - s)) < 1e-12 * np.max(np.abs(s)) * 10

    def test_size_mismatch(self, grid64):
        with pytest.raises(DimensionError):
            to_spectral(np.zeros((32, 32)), grid64)

    def test_parseval(self, grid64, rng):
        for _ in range(100):
            f = to_spectral(rng.standard_normal((2, *grid64.shape)), grid64)
            a, b = lp_norm(f, 2), l2_norm_spectral(f)
            assert abs(a - b) <= 1e-12 * a

    def test_real_fields_are_hermitian(self, grid64, rng):
        f = to_spectral(rng.standard_normal(grid64.shape), grid64)
        assert hermitian_defect(f) < 1e-14


class TestDerivatives:
    def test_sine_derivative(self, grid64):
        L = grid64.box_length
        x1, _ = grid64.coordinates()
        f = to_spectral(np.sin(2 * np.pi * x1 / L), grid64)
        d = to_physical(derivative(f, 1))
        assert np.max(np.abs(d - (2 * np.pi / L) * np.cos(2 * np.pi * x1 / L))) < 1e-10

    def test_laplacian_of_constant(self, grid64):
        f = to_spectral(np.full(grid64.shape, 2.0), grid64)
        assert np.max(np.abs(laplacian(f).coeffs)) == 0

    def test_mixed_symbol(self, grid64):
        L = grid64.box_length
        x1, x2 = grid64.coordinates()
        f = to_spectral(np.exp(2j * np.pi * (x1 + x2) / L), grid64)
        d = derivative(derivative(f, 1), 2)
        assert np.allclose(d.coeffs, -((2 * np.pi / L) ** 2) * f.coeffs, atol=1e-9)

    def test_bad_axis(self, grid64):
        f = to_spectral(np.zeros(grid64.shape), grid64)
        with pytest.raises(ValidationError):
            derivative(f, 3)

    def test_strain_divergence_is_laplacian_for_solenoidal(self, grid64, rng):
        # the identity needs both derivative factors, so keep clear of the Nyquist line
        psi = to_spectral(rng.standard_normal(grid64.shape), grid64)
        psi = psi.with_coeffs(psi.coeffs * grid64.dealias_mask)
        u = perp_gradient(psi)
        lhs = matrix_divergence(strain(u))
        assert l2_norm_spectral(lhs - laplacian(u)) <= 1e-10 * l2_norm_spectral(laplacian(u))


class TestLp:
    def test_constant_l2(self):
        g = Grid(32, 2 * np.pi)
        f = to_spectral(np.ones(g.shape), g)
        assert lp_norm(f, 2) == pytest.approx(2 * np.pi, rel=1e-14)

    def test_sine_sup_and_l2(self, grid64):
        L = grid64.box_length
        x1, _ = grid64.coordinates()
        f = to_spectral(np.sin(2 * np.pi * x1 / L), grid64)
        assert abs(lp_norm(f, math.inf) - 1) < 1e-3
        assert abs(lp_norm(f, 2) - L / math.sqrt(2)) < 1e-6

    def test_rejects_p_below_one(self, grid64):
        with pytest.raises(ValidationError):
            lp_norm(to_spectral(np.ones(grid64.shape), grid64), 0.5)


class TestLeray:
    def test_gradients_vanish(self, grid64, rng):
        phi = to_spectral(rng.standard_normal(grid64.shape), grid64)
        pu = leray_project(gradient(phi))
        assert np.max(np.abs(pu.coeffs)) < 1e-10 * np.max(np.abs(gradient(phi).coeffs))

    def test_solenoidal_unchanged(self, grid64, rng):
        u = perp_gradient(to_spectral(rng.standard_normal(grid64.shape), grid64))
        assert l2_norm_spectral(leray_project(u) - u) <= 1e-12 * l2_norm_spectral(u)

    def test_random_divergence_free(self, grid64, rng):
        u = to_spectral(rng.standard_normal((2, *grid64.shape)), grid64)
        assert divergence_residual(leray_project(u)) <= 1e-10

    def test_idempotent(self, grid64, rng):
        for _ in range(20):
            u = to_spectral(rng.standard_normal((2, *grid64.shape)), grid64)
            pu = leray_project(u)
            assert l2_norm_spectral(leray_project(pu) - pu) <= 1e-12 * l2_norm_spectral(u)

    def test_commutes_with_derivative(self, grid64, rng):
        u = perp_gradient(to_spectral(rng.standard_normal(grid64.shape), grid64))
        a = derivative(leray_project(u), 1)
        b = leray_project(derivative(u, 1))
        assert l2_norm_spectral(a - b) <= 1e-10 * l2_norm_spectral(a)

    def test_needs_vector(self, grid64):
        with pytest.raises(DimensionError):
            leray_project(to_spectral(np.zeros(grid64.shape), grid64))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_product_commutes_and_stays_dealiased(seed):
    rng = np.random.default_rng(seed)
    g = Grid(32)
    f = to_spectral(rng.standard_normal(g.shape), g)
    h = to_spectral(rng.standard_normal(g.shape), g)
    fh = product(f, h)
    assert np.allclose(fh.coeffs, product(h, f).coeffs)
    assert np.all(fh.coeffs[0][~g.dealias_mask] == 0)


def test_divergence_of_perp_gradient_is_zero(grid64, rng):
    u = perp_gradient(to_spectral(rng.standard_normal(grid64.shape), grid64))
    assert np.max(np.abs(divergence(u).coeffs)) < 1e-9


def test_snapshot_round_trip(tmp_path, grid64, rng):
    f = to_spectral(rng.standard_normal((2, *grid64.shape)), grid64)
    path = tmp_path / "u.field"
    write_snapshot(path, f)
    head = path.read_text().splitlines()[0]
    assert head == f"lpns2d-field v1, n=64, L={grid64.box_length!r}, comps=2"
    back = read_snapshot(path)
    assert np.allclose(to_physical(back), to_physical(f), rtol=0, atol=1e-13)
