"""Tests for compatibility jets, the lift and the shifted jets."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nslift.compat import (
    FieldJet,
    ForcingModel,
    JetVerificationError,
    LiftPolynomial,
    build_lift,
    compat_jet_u,
    compat_jet_v,
    compat_jet_v_galerkin,
    lift_dt_eval,
    lift_eval,
    projected_theta_jet,
    theta_eval,
    theta_jet,
)
from nslift.field import Grid, ModeCutoff, SpectralField, norm_l2, project_leray
from nslift.io import load_field
from nslift.oracle import finite_difference_jet
from nslift.presets import field_from_modes, make_preset, shear_field, taylor_green_field


def lift_for(name, grid, i_star, seed=0):
    u0, f = make_preset(name, grid, seed)
    return u0, f, build_lift(compat_jet_u(u0, f, i_star + 1), i_star)


class TestCompatJetU:
    def test_shear_jets_alternate(self, grid16):
        u0 = shear_field(grid16)
        jet = compat_jet_u(u0, ForcingModel.zero(grid16), 6)
        for k, e in enumerate(jet):
            assert e.allclose(u0 * (-1.0) ** k, atol=1e-15)

    def test_taylor_green_jets_are_exact(self, grid16):
        u0 = taylor_green_field(grid16)
        jet = compat_jet_u(u0, ForcingModel.zero(grid16), 9)
        for k, e in enumerate(jet):
            assert norm_l2(e - u0 * (-2.0) ** k) <= 1e-14 * 2.0**k * norm_l2(u0)

    def test_zero_data_gives_zero_jets(self, grid8):
        jet = compat_jet_u(SpectralField.zeros(grid8), ForcingModel.zero(grid8), 5)
        assert all(e.is_zero() for e in jet)

    def test_forcing_enters_first_derivative(self, grid16):
        u0, f = make_preset("forced-shear", grid16)
        jet = compat_jet_u(u0, f, 2)
        assert jet[1].allclose(-u0 + f.derivative_at_zero(0), atol=1e-15)

    def test_rejects_compressible_data(self, grid8):
        f = field_from_modes(grid8, {(1, 0, 0): [1.0, 0.0, 0.0]})
        with pytest.raises(ValueError, match="divergence"):
            compat_jet_u(f, ForcingModel.zero(grid8), 2)

    def test_zero_mean_option(self, grid8):
        u0 = shear_field(grid8) + field_from_modes(grid8, {(0, 0, 0): [1.0, 0.0, 0.0]}, True)
        jet = compat_jet_u(u0, ForcingModel.zero(grid8), 2, zero_mean=True)
        assert all(np.all(e.coeffs[:, 0, 0, 0] == 0) for e in jet)

    def test_entries_are_divergence_free(self, grid16):
        u0, f = make_preset("random-smooth", grid16, 2)
        for e in compat_jet_u(u0, f, 4):
            assert e.divergence_defect() < 1e-14


class TestLift:
    def test_degree_and_validation(self, grid8):
        jet = compat_jet_u(shear_field(grid8), ForcingModel.zero(grid8), 4)
        assert build_lift(jet, 3).degree == 4
        assert build_lift(jet, 3).i_star == 3
        with pytest.raises(ValueError):
            build_lift(jet, 4)
        with pytest.raises(ValueError):
            build_lift(jet, -1)

    def test_shear_lift_polynomial(self, grid8):
        u0, _, beta = lift_for("shear", grid8, 2)
        t = 0.3
        p = 1 - t + t**2 / 2 - t**3 / 6
        assert lift_eval(beta, t).allclose(u0 * p, atol=1e-16)
        assert lift_dt_eval(beta, t, 1).allclose(u0 * (-1 + t - t**2 / 2), atol=1e-16)
        assert lift_dt_eval(beta, t, 4).is_zero()

    def test_evaluate_at_zero_is_the_jet(self, grid16):
        _, _, beta = lift_for("random-smooth", grid16, 3, seed=1)
        for i in range(beta.degree + 1):
            np.testing.assert_array_equal(beta.evaluate(0.0, i).coeffs, beta.jet[i].coeffs)

    def test_shifted_polynomial(self, grid8):
        _, _, beta = lift_for("taylor-green", grid8, 3)
        moved = beta.shifted(0.2)
        for s in (0.0, 0.1, 0.35):
            assert moved.evaluate(s).allclose(beta.evaluate(0.2 + s), atol=1e-15)

    def test_negative_order_rejected(self, grid8):
        _, _, beta = lift_for("shear", grid8, 1)
        with pytest.raises(ValueError):
            beta.evaluate(0.1, -1)

    def test_zero_forcing_needs_grid(self):
        with pytest.raises(ValueError):
            ForcingModel(FieldJet(()))

    def test_zero_forcing_evaluates_to_zero(self, grid8):
        assert ForcingModel.zero(grid8).evaluate(0.5).is_zero()
        assert LiftPolynomial.zero(grid8, 2).evaluate(0.5).is_zero()


class TestTheta:
    def test_shear_with_linear_lift(self, grid8):
        # β = (1 − t)u₀ and u₀·∇u₀ = 0, so θ = t·u₀
        u0, f, beta = lift_for("shear", grid8, 0)
        for t in (0.0, 0.25, 1.0):
            assert theta_eval(beta, f, t).allclose(u0 * t, atol=1e-15)

    @pytest.mark.parametrize("i_star", [1, 3, 7])
    def test_taylor_green_projected_theta(self, grid16, i_star):
        u0, f, beta = lift_for("taylor-green", grid16, i_star)
        m = i_star + 1
        t = 0.3
        expected = u0 * (-2.0 * (-2.0 * t) ** m / math.factorial(m))
        got = project_leray(theta_eval(beta, f, t))
        assert norm_l2(got - expected) <= 1e-13 * norm_l2(u0)

    def test_jet_matches_finite_differences(self, grid16):
        _, f, beta = lift_for("forced-shear", grid16, 2)
        h = 1.0 / 128
        times = np.arange(49) * h
        samples = [theta_eval(beta, f, t) for t in times]
        fd = finite_difference_jet((times, samples), 3, levels=5)
        jet = theta_jet(beta, f, 3)
        scale = max(jet.norms())
        assert scale > 1.0
        for i in range(4):
            assert norm_l2(fd.derivatives[i] - jet[i]) <= 1e-8 * scale

    @pytest.mark.parametrize("name", ["taylor-green", "random-smooth", "forced-shear"])
    def test_projected_theta_vanishes_exactly(self, grid16, name):
        _, f, beta = lift_for(name, grid16, 4, seed=1)
        jet = projected_theta_jet(beta, f, 6)
        assert all(jet[i].is_zero() for i in range(5))
        assert norm_l2(jet[5] - project_leray(theta_jet(beta, f, 5)[5])) <= 1e-12 * max(norm_l2(jet[5]), 1)


class TestShiftedJet:
    @pytest.mark.parametrize("i_star", [3, 7, 9])
    @pytest.mark.parametrize("name", ["taylor-green", "random-smooth", "forced-shear"])
    def test_vanishing_through_i_star_plus_one(self, grid16, name, i_star):
        u0, f, beta = lift_for(name, grid16, i_star, seed=3)
        jet = compat_jet_v(beta, theta_jet(beta, f, i_star + 1), i_star + 2, f=f)
        # the jets grow factorially, so each entry is measured against its own order
        for i in range(i_star + 2):
            assert norm_l2(jet[i]) <= 1e-10 * max(norm_l2(u0), norm_l2(beta.jet[i]))

    def test_first_surviving_entry_random(self, grid16):
        u0, f, beta = lift_for("random-smooth", grid16, 3, seed=3)
        jet = compat_jet_v(beta, theta_jet(beta, f, 4), 5, f=f)
        assert norm_l2(jet[5]) > 1e-6 * norm_l2(u0)

    def test_galerkin_equals_full_at_large_cutoff(self, grid16):
        _, f, beta = lift_for("random-smooth", grid16, 3, seed=1)
        theta = theta_jet(beta, f, 5)
        full = compat_jet_v(beta, theta, 6, f=f)
        # every dealiased mode of N=16 has |k|² ≤ 3·5²
        gal = compat_jet_v_galerkin(beta, theta, 6, ModeCutoff(9), f=f)
        for a, b in zip(full, gal):
            assert norm_l2(a - b) <= 1e-13 * max(norm_l2(a), 1e-300) + 1e-300

    def test_needs_enough_theta(self, grid8):
        _, f, beta = lift_for("shear", grid8, 1)
        with pytest.raises(ValueError):
            compat_jet_v(beta, theta_jet(beta, f, 1), 4)

    def test_verification_failure_raises(self, grid8):
        u0, f, beta = lift_for("taylor-green", grid8, 2)
        theta = theta_jet(beta, f, 3)
        bad = FieldJet((theta[0] + u0,) + theta.entries[1:])
        with pytest.raises(JetVerificationError) as err:
            compat_jet_v(beta, bad, 4, f=f)
        assert err.value.index == 1

    @settings(max_examples=8, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=10_000), i_star=st.integers(min_value=0, max_value=4))
    def test_vanishing_property(self, seed, i_star):
        grid = Grid(8)
        u0, f, beta = lift_for("random-smooth", grid, i_star, seed=seed)
        jet = compat_jet_v_galerkin(beta, theta_jet(beta, f, i_star + 1), i_star + 2, ModeCutoff(3),
                                    f=f, verify=False)
        assert max(norm_l2(jet[i]) for i in range(i_star + 2)) <= 1e-10 * norm_l2(u0)


class TestExport:
    def test_export_round_trip(self, grid8, tmp_path):
        jet = compat_jet_u(taylor_green_field(grid8), ForcingModel.zero(grid8), 2)
        manifest_path = jet.export(tmp_path, "u")
        manifest = json.loads(manifest_path.read_text())
        assert manifest["orders"] == [0, 1, 2]
        assert manifest["files"] == ["u_00.spf", "u_01.spf", "u_02.spf"]
        for name, e in zip(manifest["files"], jet):
            np.testing.assert_array_equal(load_field(tmp_path / name).coeffs, e.coeffs)

    def test_mixed_grids_rejected(self):
        with pytest.raises(ValueError):
            FieldJet((SpectralField.zeros(Grid(8)), SpectralField.zeros(Grid(16))))
