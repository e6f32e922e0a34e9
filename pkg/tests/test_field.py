"""Tests for grids, transforms, linear operators, nonlinear terms and norms."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_field
from nslift.field import (
    BOX_VOLUME,
    Grid,
    ModeCutoff,
    ScalarSpectralField,
    SpectralField,
    convect,
    dealias,
    divergence,
    flux_convect,
    gn_ratio,
    gn_ratio_gradient,
    gradient,
    inner_l2,
    laplacian,
    norm_h1,
    norm_h1_semi,
    norm_h2,
    norm_l2,
    norm_lq,
    physical_view,
    project_leray,
    scalar_to_spectral,
    stokes_apply,
    to_physical,
    to_spectral,
    trilinear_b,
)
from nslift.presets import field_from_modes, shear_field, taylor_green_field

seeds = st.integers(min_value=0, max_value=2**32 - 1)


class TestGrid:
    def test_dealias_cube(self):
        assert Grid(32).kmax_dealias == 10
        assert Grid(8).kmax_dealias == 2

    def test_rejects_odd_or_tiny(self):
        with pytest.raises(ValueError):
            Grid(9)
        with pytest.raises(ValueError):
            Grid(2)

    def test_rejects_bad_fraction(self):
        with pytest.raises(ValueError):
            Grid(8, 0)

    def test_nyquist_positive(self, grid8):
        k = grid8.wavenumbers
        assert k.max() == 4 and k.min() == -3
        assert np.abs(grid8.odd_wavenumbers).max() == 3

    def test_parseval_weights_count_full_spectrum(self, grid8):
        assert grid8.parseval_weights.sum() == 8**3


class TestTransforms:
    def test_matches_direct_dft(self, grid8, rng):
        x = rng.standard_normal((3,) + grid8.physical_shape)
        coeffs = to_spectral(x, grid8).coeffs
        pts = grid8.coordinates.reshape(3, -1)
        for k in [(0, 0, 0), (1, 0, 0), (-2, 3, 1), (3, -1, 4)]:
            phase = np.exp(-1j * (np.array(k) @ pts))
            expected = x.reshape(3, -1) @ phase / 8**3
            np.testing.assert_allclose(coeffs[:, k[0] % 8, k[1] % 8, k[2]], expected, atol=1e-13)

    def test_round_trip(self, grid16, rng):
        x = rng.standard_normal((3,) + grid16.physical_shape)
        np.testing.assert_allclose(to_physical(to_spectral(x, grid16)), x, atol=1e-13)

    def test_shape_checked(self, grid8):
        with pytest.raises(ValueError):
            to_spectral(np.zeros((3, 4, 4, 4)), grid8)

    def test_preset_samples(self, grid16):
        x1, x2, _ = grid16.coordinates
        u = to_physical(taylor_green_field(grid16))
        np.testing.assert_allclose(u[0], np.sin(x1) * np.cos(x2), atol=1e-14)
        np.testing.assert_allclose(u[1], -np.cos(x1) * np.sin(x2), atol=1e-14)
        np.testing.assert_allclose(u[2], 0.0, atol=1e-14)

    def test_fields_are_immutable(self, grid8):
        f = shear_field(grid8)
        with pytest.raises(ValueError):
            f.coeffs[0, 0, 0, 0] = 1.0


class TestLinearOperators:
    def test_leray_single_mode_by_hand(self, grid8):
        f = field_from_modes(grid8, {(1, 1, 0): [1.0, 0.0, 0.0]})
        p = project_leray(f)
        np.testing.assert_allclose(p.coeffs[:, 1, 1, 0], [0.5, -0.5, 0.0], atol=1e-15)

    def test_leray_kills_gradients(self, grid16):
        x1, x2, x3 = grid16.coordinates
        phi = scalar_to_spectral(np.sin(x1) * np.cos(2 * x2) + np.cos(x3), grid16)
        assert norm_l2(project_leray(gradient(phi))) < 1e-13

    def test_leray_keeps_mean(self, grid8):
        f = field_from_modes(grid8, {(0, 0, 0): [1.0, 2.0, 3.0]})
        np.testing.assert_array_equal(project_leray(f).coeffs, f.coeffs)

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds)
    def test_leray_idempotent_and_orthogonal(self, seed):
        grid = Grid(8)
        f = random_field(grid, np.random.default_rng(seed), solenoidal=False)
        p = project_leray(f)
        assert norm_l2(project_leray(p) - p) <= 1e-14 * norm_l2(f)
        assert abs(inner_l2(p, f - p)) <= 1e-13 * norm_l2(f) ** 2
        assert p.divergence_defect() < 1e-14

    def test_laplacian_of_shear(self, grid8):
        u = shear_field(grid8)
        assert laplacian(u).allclose(-u, atol=1e-16)

    def test_gradient_and_divergence(self, grid16):
        x1, x2, _ = grid16.coordinates
        s = scalar_to_spectral(np.sin(x1) * np.sin(2 * x2), grid16)
        g = to_physical(gradient(s))
        np.testing.assert_allclose(g[0], np.cos(x1) * np.sin(2 * x2), atol=1e-13)
        np.testing.assert_allclose(g[1], 2 * np.sin(x1) * np.cos(2 * x2), atol=1e-13)
        lap = to_physical(divergence(gradient(s)))
        np.testing.assert_allclose(lap, -5 * np.sin(x1) * np.sin(2 * x2), atol=1e-12)

    def test_stokes_is_k_squared(self, grid8):
        u = taylor_green_field(grid8)
        assert stokes_apply(u).allclose(u * 2.0, atol=1e-16)

    def test_stokes_rejects_compressible(self, grid8):
        f = field_from_modes(grid8, {(1, 0, 0): [1.0, 0.0, 0.0]})
        with pytest.raises(ValueError):
            stokes_apply(f)

    def test_h2_bounded_by_stokes(self, grid8, rng):
        k2 = grid8.k2[grid8.k2 > 0]
        # mode-wise constant over every nonzero wavevector, worst at |k| = 1
        assert np.max(np.sqrt(1 + k2 + k2**2) / k2) == pytest.approx(math.sqrt(3), rel=1e-15)
        u = random_field(grid8, rng)
        assert norm_h2(u) <= math.sqrt(3) * norm_l2(stokes_apply(u))


class TestNonlinear:
    def test_taylor_green_advection(self, grid16):
        u = taylor_green_field(grid16)
        x1, x2, _ = grid16.coordinates
        a = to_physical(convect(u, u))
        np.testing.assert_allclose(a[0], 0.5 * np.sin(2 * x1), atol=1e-14)
        np.testing.assert_allclose(a[1], 0.5 * np.sin(2 * x2), atol=1e-14)
        np.testing.assert_allclose(a[2], 0.0, atol=1e-14)

    def test_shear_self_advection_vanishes_exactly(self, grid8):
        u = shear_field(grid8)
        assert convect(u, u).is_zero()

    def test_trilinear_against_quadrature(self, grid16, rng):
        u, v, w = (random_field(grid16, rng, kmax=2) for _ in range(3))
        # the integrand has |k_i| <= 6 < 8, so the grid quadrature is exact
        uu, ww = to_physical(u), to_physical(w)
        grad_v = physical_view(v).grad
        integrand = np.einsum("jxyz,ijxyz,ixyz->xyz", uu, grad_v, ww)
        expected = BOX_VOLUME * integrand.mean()
        assert trilinear_b(u, v, w) == pytest.approx(expected, rel=1e-12, abs=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(seed=seeds)
    def test_trilinear_skew(self, seed):
        grid = Grid(8)
        r = np.random.default_rng(seed)
        u, v, w = (random_field(grid, r, kmax=1) for _ in range(3))
        scale = norm_l2(u) * norm_h1_semi(v) * norm_l2(w)
        assert abs(trilinear_b(u, v, w) + trilinear_b(u, w, v)) <= 1e-13 * scale
        assert abs(trilinear_b(u, v, v)) <= 1e-13 * norm_l2(u) * norm_h1_semi(v) * norm_l2(v)

    def test_flux_form_matches_convective_form(self, grid16, rng):
        u, w = random_field(grid16, rng), random_field(grid16, rng)
        expected = convect(u, u) + convect(w, u) + convect(u, w)
        got = flux_convect(physical_view(u), physical_view(w))
        assert norm_l2(got - expected) <= 1e-13 * norm_l2(expected)

    def test_flux_form_zero_input(self, grid8, rng):
        w = random_field(grid8, rng)
        assert flux_convect(physical_view(SpectralField.zeros(grid8)), physical_view(w)).is_zero()

    def test_flux_keep_mask(self, grid16, rng):
        u = random_field(grid16, rng)
        keep = ModeCutoff(3).mask(grid16)
        got = flux_convect(physical_view(u), keep=keep)
        full = flux_convect(physical_view(u))
        np.testing.assert_array_equal(got.coeffs[:, ~keep], 0.0)
        np.testing.assert_allclose(got.coeffs[:, keep], full.coeffs[:, keep], atol=1e-15)

    def test_products_are_dealiased(self, grid16, rng):
        u = random_field(grid16, rng)
        a = convect(u, u)
        np.testing.assert_array_equal(a.coeffs[:, ~grid16.dealias_mask], 0.0)


class TestNorms:
    def test_shear_closed_forms(self, grid16):
        u = shear_field(grid16)
        assert norm_l2(u) == pytest.approx(math.sqrt(4 * math.pi**3), rel=1e-14)
        assert norm_h1_semi(u) == pytest.approx(math.sqrt(4 * math.pi**3), rel=1e-14)
        assert norm_h1(u) == pytest.approx(math.sqrt(8 * math.pi**3), rel=1e-14)
        # ∫ sin⁴ = 3/8 of the box volume
        assert norm_lq(u, 4) == pytest.approx((0.375 * BOX_VOLUME) ** 0.25, rel=1e-13)

    def test_lq_range_checked(self, grid8):
        with pytest.raises(ValueError):
            norm_lq(shear_field(grid8), 7)

    def test_gn_ratio_is_one_at_q2(self, grid8, rng):
        assert gn_ratio(random_field(grid8, rng), 2) == pytest.approx(1.0, rel=1e-13)

    def test_gn_ratio_single_mode_q6(self, grid16):
        u = shear_field(grid16)
        # exponent on ‖u‖₂ is zero at q=6; ∫ sin⁶ = 5/16 of the box volume
        expected = (5 / 16 * BOX_VOLUME) ** (1 / 6) / math.sqrt(8 * math.pi**3)
        assert gn_ratio(u, 6) == pytest.approx(expected, rel=1e-13)

    def test_gn_ratio_zero_field(self, grid8):
        assert math.isnan(gn_ratio(SpectralField.zeros(grid8), 3))
        assert math.isnan(gn_ratio_gradient(SpectralField.zeros(grid8), 3))

    def test_parseval(self, grid16, rng):
        u = random_field(grid16, rng)
        direct = math.sqrt(BOX_VOLUME * np.mean(np.sum(to_physical(u) ** 2, axis=0)))
        assert norm_l2(u) == pytest.approx(direct, rel=1e-13)


class TestModeCutoff:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            ModeCutoff(0)

    def test_mode_count_unit_ball(self, grid8):
        # mean mode (3) plus six unit wavevectors with two polarizations each
        assert ModeCutoff(1).mode_count(grid8) == 15

    def test_project_is_leray_then_cutoff(self, grid16, rng):
        f = random_field(grid16, rng, solenoidal=False)
        c = ModeCutoff(4)
        assert c.project(f).allclose(c.apply(project_leray(f)), atol=1e-16)

    @settings(max_examples=15, deadline=None)
    @given(seed=seeds, k=st.integers(min_value=1, max_value=3))
    def test_project_idempotent(self, seed, k):
        grid = Grid(8)
        f = random_field(grid, np.random.default_rng(seed), solenoidal=False)
        c = ModeCutoff(k)
        p = c.project(f)
        assert norm_l2(c.project(p) - p) <= 1e-15 * max(norm_l2(f), 1.0)
        np.testing.assert_array_equal(p.coeffs[:, ~c.mask(grid)], 0.0)

    def test_dealias_flag(self, grid8, rng):
        f = random_field(grid8, rng, kmax=3)
        assert dealias(f).dealiased
        np.testing.assert_array_equal(dealias(f).coeffs[:, ~grid8.dealias_mask], 0.0)


def test_scalar_field_shape_checked(grid8):
    with pytest.raises(ValueError):
        ScalarSpectralField(grid8, np.zeros((4, 4, 3)))
