"""Tests for the Fokker-Planck solver and density helpers."""

from __future__ import annotations

import math

import numpy as np
import pytest

from fluctlab._exceptions import DomainError, InstabilityError, PositivityError
from fluctlab._types import PositivityPolicy
from fluctlab.kernels import DriftModel
from fluctlab.meanfield import (
    FPState,
    cosine_density,
    density_entropy,
    density_from_modes,
    diffusion_factor,
    fp_residual,
    fp_step,
    solve_fp,
    sqrt_density,
    time_grid,
    uniform_density,
)
from fluctlab.spectral import SpectralField, dealiased_product


class TestDensities:
    def test_cosine_density(self):
        mu = cosine_density(2, 3, 0.4, axis=1, mode=2)
        assert mu.mean == 1.0
        assert mu.coeff((0, 2)) == 0.2
        assert mu.coeff((0, -2)) == 0.2

    def test_from_modes_forces_normalization(self):
        mu = density_from_modes(1, 3, {(0,): 5.0, (2,): 0.1 + 0.1j})
        assert mu.mean == 1.0
        assert mu.coeff((-2,)) == 0.1 - 0.1j

    def test_entropy(self):
        assert density_entropy(uniform_density(2, 2)) == pytest.approx(0.0, abs=1e-15)
        assert density_entropy(cosine_density(1, 2, 0.5)) > 0.0
        assert density_entropy(cosine_density(1, 2, 1.5)) == math.inf

    def test_sqrt_of_uniform(self):
        root = sqrt_density(uniform_density(1, 4), 8)
        assert root.kmax == 8
        assert root.mean == pytest.approx(1.0)
        assert np.count_nonzero(root.coeffs) == 1

    def test_sqrt_squares_back(self):
        mu = cosine_density(1, 4, 0.3)
        root = sqrt_density(mu, 16)
        np.testing.assert_allclose(dealiased_product(root, root, 4).coeffs, mu.coeffs, atol=1e-10)


class TestOperators:
    def test_diffusion_factor(self):
        fac = diffusion_factor(1, 2, 0.5, 0.1)
        assert fac[2] == 1.0
        assert fac[3] == pytest.approx(math.exp(-2 * math.pi**2 * 0.25 * 0.1))

    def test_residual_of_uniform(self):
        assert fp_residual(uniform_density(2, 3), DriftModel.biot_savart(), 1.0) == 0.0

    def test_residual_of_cosine(self):
        # only the diffusion term survives: c_{+-1} = -(1/2)(4 pi^2)(0.2), weighted by <1>^-4 = 1/4
        value = fp_residual(cosine_density(1, 3, 0.4), DriftModel.smooth(1, "zero"), 1.0)
        assert value == pytest.approx(0.4 * math.pi**2 / math.sqrt(2), rel=1e-12)

    def test_step_rejects_bad_dt(self):
        state = FPState(uniform_density(1, 2), 0.0, 1.0, DriftModel.smooth(1, "zero"))
        with pytest.raises(DomainError):
            fp_step(state, -0.1)

    def test_step_detects_non_finite(self):
        coeffs = np.zeros(5, dtype=np.complex128)
        coeffs[2] = 1.0
        coeffs[3] = np.nan
        state = FPState(SpectralField(1, 2, coeffs), 0.3, 1.0, DriftModel.smooth(1, "sine1d"))
        with pytest.raises(InstabilityError) as info:
            fp_step(state, 0.01)
        assert info.value.operation == "fp_step"
        assert info.value.state["t"] == 0.3


class TestSolveFp:
    def test_heat_decay(self):
        curve = solve_fp(cosine_density(1, 8, 0.5), DriftModel.smooth(1, "zero"), 1.0, [0.0, 0.05], dt=0.01)
        expected = 0.25 * math.exp(-2 * math.pi**2 * 0.05)
        assert curve.mus[-1].coeff((1,)).real == pytest.approx(expected, rel=1e-12)

    def test_mass_conserved(self):
        curve = solve_fp(
            cosine_density(1, 8, 0.5), DriftModel.smooth(1, "sine1d", alpha=2.0), 0.5, time_grid(0.05, 0.01)
        )
        assert all(mu.mean == pytest.approx(1.0, abs=1e-14) for mu in curve.mus)

    def test_even_data_stays_even(self):
        curve = solve_fp(
            cosine_density(1, 8, 0.5), DriftModel.smooth(1, "sine1d", alpha=2.0), 0.5, time_grid(0.05, 0.01)
        )
        final = curve.mus[-1]
        assert final.is_hermitian()
        np.testing.assert_allclose(final.coeffs, final.flip().coeffs, atol=1e-14)

    def test_uniform_is_stationary(self):
        curve = solve_fp(uniform_density(2, 4), DriftModel.biot_savart(), 1.0, time_grid(0.01, 0.005))
        np.testing.assert_array_equal(curve.mus[-1].coeffs, uniform_density(2, 4).coeffs)

    def test_vortex_dissipates_l2(self):
        mu0 = density_from_modes(2, 8, {(1, 0): 0.15, (1, 1): 0.05})
        curve = solve_fp(mu0, DriftModel.biot_savart(), 1.0, time_grid(0.5, 0.005))
        norms = [float(np.sum(np.abs(mu.coeffs) ** 2)) for mu in curve.mus]
        assert all(mu.mean == 1.0 for mu in curve.mus)
        assert all(b <= a + 1e-8 for a, b in zip(norms, norms[1:]))
        assert norms[-1] < norms[0]

    def test_sine_steady_state_residual(self):
        model = DriftModel.smooth(1, "sine1d", alpha=1.0)
        mu0 = cosine_density(1, 8, 0.5)
        curve = solve_fp(mu0, model, 1.0, [0.0, 2.0], dt=0.01)
        assert fp_residual(mu0, model, 1.0) > 0.1
        assert fp_residual(curve.mus[-1], model, 1.0) < 1e-8

    def test_states_follow_grid(self):
        curve = solve_fp(cosine_density(1, 4, 0.3), DriftModel.smooth(1, "sine1d"), 1.0, time_grid(0.01, 0.005))
        states = curve.states
        assert [s.t for s in states] == list(curve.times)
        assert states[-1].mu is curve.mus[-1]
        assert states[0].sigma == 1.0

    def test_substeps_respect_dt(self):
        coarse = solve_fp(cosine_density(1, 6, 0.3), DriftModel.smooth(1, "sine1d"), 1.0, [0.0, 0.02], dt=0.001)
        fine = solve_fp(cosine_density(1, 6, 0.3), DriftModel.smooth(1, "sine1d"), 1.0, time_grid(0.02, 0.001))
        np.testing.assert_allclose(coarse.mus[-1].coeffs, fine.mus[-1].coeffs, atol=1e-14)

    def test_curve_metadata(self):
        curve = solve_fp(cosine_density(1, 4, 0.3), DriftModel.smooth(1, "sine1d"), 1.0, time_grid(0.01, 0.005))
        assert curve.times == pytest.approx((0.0, 0.005, 0.01))
        assert len(curve.minima) == len(curve.regularity) == 3
        assert curve.sqrt_mus[0].kmax == 8
        assert curve.continuity_modulus > 0.0
        assert curve.mu_at(0.005) is curve.mus[1]
        data = curve.index_dict()
        assert data["kmax"] == 4
        assert data["model"]["preset"] == "sine1d"

    def test_uncovered_time(self):
        curve = solve_fp(uniform_density(1, 2), DriftModel.smooth(1, "zero"), 1.0, [0.0, 0.1])
        with pytest.raises(DomainError, match="does not cover"):
            curve.mu_at(0.05)

    def test_grid_must_start_at_zero(self):
        with pytest.raises(DomainError, match="start at 0"):
            solve_fp(uniform_density(1, 2), DriftModel.smooth(1, "zero"), 1.0, [0.1, 0.2])

    def test_grid_must_increase(self):
        with pytest.raises(DomainError, match="increasing"):
            solve_fp(uniform_density(1, 2), DriftModel.smooth(1, "zero"), 1.0, [0.0, 0.2, 0.1])

    def test_negative_density_errors(self):
        with pytest.raises(PositivityError) as info:
            solve_fp(cosine_density(1, 4, 1.5), DriftModel.smooth(1, "zero"), 1.0, [0.0, 0.01])
        assert info.value.time == 0.0
        assert info.value.value == pytest.approx(-0.5, abs=1e-6)

    def test_negative_density_warns(self, caplog):
        curve = solve_fp(
            cosine_density(1, 4, 1.5), DriftModel.smooth(1, "zero"), 1.0, [0.0, 0.01],
            positivity=PositivityPolicy.WARN,
        )
        assert curve.minima[0] < 0.0
        assert "below" in caplog.text


class TestTimeGrid:
    def test_grid(self):
        assert time_grid(0.02, 0.005) == pytest.approx([0.0, 0.005, 0.01, 0.015, 0.02])
        assert len(time_grid(0.25, 0.001)) == 251
