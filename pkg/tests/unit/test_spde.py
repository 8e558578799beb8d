"""Tests for the linearized fluctuation SPDE and its Galerkin integrator."""

from __future__ import annotations

import math

import numpy as np
import pytest

from fluctlab._exceptions import DomainError, ShapeError
from fluctlab._rng import stream
from fluctlab._types import Rho0Mode, SobolevIndices
from fluctlab.kernels import DriftModel
from fluctlab.meanfield import cosine_density, solve_fp, sqrt_density, time_grid, uniform_density
from fluctlab.spde import (
    GalerkinState,
    NoiseModel,
    apply_A,
    apply_A_n,
    apply_Aprime,
    coercivity_samples,
    draw_brownian_increments,
    fit_coercivity,
    linear_flow,
    noise_increment,
    sample_rho0,
    simulate_spde,
    step_spde,
)
from fluctlab.spectral import SpectralField, pairing

INDICES = SobolevIndices.for_dimension(1)


def mode_one(kmax: int, amplitude: float = 1.0) -> SpectralField:
    return SpectralField.from_modes(1, kmax, {(1,): amplitude / 2, (-1,): amplitude / 2})


@pytest.fixture
def heat_curve():
    return solve_fp(uniform_density(1, 6), DriftModel.smooth(1, "zero"), 0.8, time_grid(0.02, 0.005))


@pytest.fixture
def drift_curve():
    return solve_fp(cosine_density(1, 6, 0.3), DriftModel.smooth(1, "sine1d"), 1.0, time_grid(0.02, 0.005))


# =============================================================================
# Operators
# =============================================================================


class TestOperators:
    def test_duality_smooth(self, rng):
        model = DriftModel.smooth(1, "sine1d", alpha=1.5)
        mu = cosine_density(1, 10, 0.3)
        for _ in range(5):
            f = SpectralField.random(1, 10, rng, decay=1.0)
            phi = SpectralField.random(1, 10, rng, decay=1.0)
            lhs = pairing(apply_A(0.0, f, mu, model, 0.7), phi)
            rhs = pairing(f, apply_Aprime(0.0, phi, mu, model, 0.7))
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    def test_duality_vortex(self, rng):
        model = DriftModel.biot_savart()
        mu = cosine_density(2, 5, 0.2, axis=1) + SpectralField.from_modes(2, 5, {(1, 1): 0.05, (-1, -1): 0.05})
        f = SpectralField.random(2, 5, rng, decay=1.0)
        phi = SpectralField.random(2, 5, rng, decay=1.0)
        lhs = pairing(apply_A(0.0, f, mu, model, 1.0), phi)
        rhs = pairing(f, apply_Aprime(0.0, phi, mu, model, 1.0))
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    def test_diffusion_only(self):
        f = mode_one(4)
        out = apply_A(0.0, f, uniform_density(1, 4), DriftModel.smooth(1, "zero"), 2.0)
        assert out.coeff((1,)) == pytest.approx(-2 * math.pi**2 * 4.0 * 0.5)

    def test_needs_mean_free_input(self):
        f = SpectralField.constant(1, 3, 0.1)
        with pytest.raises(DomainError, match="c_0"):
            apply_A(0.0, f, uniform_density(1, 3), DriftModel.smooth(1, "zero"), 1.0)

    def test_lattices_must_match(self):
        with pytest.raises(ShapeError):
            apply_A(0.0, mode_one(3), uniform_density(1, 4), DriftModel.smooth(1, "zero"), 1.0)

    def test_mollified_levels(self, rng):
        model = DriftModel.smooth(1, "sine1d")
        mu = cosine_density(1, 6, 0.3)
        f = SpectralField.random(1, 6, rng)
        plain = apply_A(0.0, f, mu, model, 1.0)
        np.testing.assert_array_equal(apply_A_n(0.0, f, 0, mu, model, 1.0).coeffs, plain.coeffs)
        np.testing.assert_allclose(apply_A_n(0.0, f, 7, mu, model, 1.0).coeffs, plain.coeffs, atol=1e-12)
        assert apply_A_n(0.0, f, 2, mu, model, 1.0).coeff((3,)) == 0


# =============================================================================
# Noise
# =============================================================================


class TestNoise:
    def test_brownian_shape_and_symmetry(self, rng):
        beta = draw_brownian_increments(rng, 2, 3, 0.01)
        assert beta.shape == (2, 7, 7)
        np.testing.assert_allclose(beta[1], np.conj(np.flip(beta[1])))

    def test_explicit_increment(self, heat_curve):
        noise = NoiseModel.from_curve(heat_curve, 2)
        beta = np.zeros((1, 5), dtype=np.complex128)
        beta[0, 3] = beta[0, 1] = 1.0
        inc = noise_increment(0.0, 0.005, noise, None, 6, beta=beta)
        assert inc.coeff((1,)) == pytest.approx(2j * math.pi * 0.8)
        assert inc.coeff((-1,)) == pytest.approx(-2j * math.pi * 0.8)
        assert inc.mean == 0

    def test_increment_covariance(self, heat_curve):
        noise = NoiseModel.from_curve(heat_curve, 4)
        rng = stream(9, "spde", 0)
        dt = 0.005
        draws = [abs(noise_increment(0.0, dt, noise, rng, 6).coeff((2,))) ** 2 for _ in range(2000)]
        expected = 0.8**2 * 4 * math.pi**2 * 4 * dt
        assert np.mean(draws) / expected == pytest.approx(1.0, abs=0.1)

    def test_noise_cutoff_limits_modes(self, heat_curve):
        noise = NoiseModel.from_curve(heat_curve, 2)
        inc = noise_increment(0.0, 0.005, noise, stream(1, "spde", 0), 6)
        assert inc.coeff((5,)) == 0

    def test_needs_randomness(self, heat_curve):
        with pytest.raises(DomainError, match="random stream"):
            noise_increment(0.0, 0.005, NoiseModel.from_curve(heat_curve, 2), None, 6)

    def test_uncovered_time(self, heat_curve):
        with pytest.raises(DomainError, match="does not cover"):
            NoiseModel.from_curve(heat_curve, 2).at(0.0031)

    def test_negative_cutoff(self, heat_curve):
        with pytest.raises(DomainError):
            NoiseModel.from_curve(heat_curve, -1)


class TestInitialFluctuation:
    def test_zero(self, rng):
        mu0 = uniform_density(1, 4)
        assert not np.any(sample_rho0(Rho0Mode.ZERO, mu0, sqrt_density(mu0, 8), rng).coeffs)

    def test_diagonal_variance(self):
        mu0 = cosine_density(1, 4, 0.4)
        rng = stream(2, "rho0", 0)
        draws = [sample_rho0("diagonal", mu0, sqrt_density(mu0, 8), rng) for _ in range(3000)]
        assert all(r.mean == 0 and r.is_hermitian() for r in draws[:10])
        assert np.mean([abs(r.coeff((1,))) ** 2 for r in draws]) == pytest.approx(0.96, abs=0.08)

    def test_clt_variance(self):
        mu0 = cosine_density(1, 4, 0.4)
        sq = sqrt_density(mu0, 8)
        rng = stream(3, "rho0", 0)
        draws = [sample_rho0(Rho0Mode.CLT, mu0, sq, rng) for _ in range(3000)]
        # Var <rho, e_k> = 1 - |c_k(mu0)|^2
        assert np.mean([abs(r.coeff((1,))) ** 2 for r in draws]) == pytest.approx(0.96, abs=0.08)
        assert np.mean([abs(r.coeff((3,))) ** 2 for r in draws]) == pytest.approx(1.0, abs=0.08)
        assert draws[0].mean == 0


# =============================================================================
# Integration
# =============================================================================


class TestIntegration:
    def test_state_must_be_mean_free(self):
        with pytest.raises(DomainError):
            GalerkinState(SpectralField.constant(1, 2, 1.0), 0.0, 0, 0, INDICES)

    def test_heat_step_exact(self, heat_curve):
        state = GalerkinState(mode_one(6), 0.0, 0, 0, INDICES)
        out = step_spde(state, 0.005, heat_curve, DriftModel.smooth(1, "zero"), None, None)
        expected = 0.5 * math.exp(-2 * math.pi**2 * 0.64 * 0.005)
        assert out.rho.coeff((1,)).real == pytest.approx(expected, rel=1e-13)
        assert out.t == pytest.approx(0.005)

    def test_curve_lattice_must_match(self, heat_curve):
        state = GalerkinState(mode_one(4), 0.0, 0, 0, INDICES)
        with pytest.raises(ShapeError):
            step_spde(state, 0.005, heat_curve, DriftModel.smooth(1, "zero"), None, None)

    def test_simulate_records_norms(self, drift_curve):
        noise = NoiseModel.from_curve(drift_curve, 6)
        run = simulate_spde(
            mode_one(6), drift_curve, DriftModel.smooth(1, "sine1d"), noise, stream(4, "spde", 0),
            n_mollify=0, indices=INDICES,
        )
        assert len(run.norms) == len(drift_curve.times)
        assert run.sup_norm2 >= run.norms[0]
        assert run.state.t == pytest.approx(0.02)
        assert run.state.rho.mean == 0

    def test_simulate_reproducible(self, drift_curve):
        noise = NoiseModel.from_curve(drift_curve, 6)
        runs = [
            simulate_spde(
                mode_one(6), drift_curve, DriftModel.smooth(1, "sine1d"), noise, stream(4, "spde", 1),
                n_mollify=3, indices=INDICES,
            )
            for _ in range(2)
        ]
        np.testing.assert_array_equal(runs[0].state.rho.coeffs, runs[1].state.rho.coeffs)

    def test_early_stop(self, drift_curve):
        run = simulate_spde(
            mode_one(6), drift_curve, DriftModel.smooth(1, "sine1d"), None, None,
            n_mollify=0, indices=INDICES, t_final=0.01,
        )
        assert run.state.t == pytest.approx(0.01)
        assert len(run.norms) == 3

    def test_linear_flow_is_noiseless_simulation(self, drift_curve):
        model = DriftModel.smooth(1, "sine1d")
        run = simulate_spde(mode_one(6), drift_curve, model, None, None, n_mollify=0, indices=INDICES)
        flow = linear_flow(mode_one(6), 0.0, 0.02, 0, drift_curve, model)
        np.testing.assert_allclose(flow.coeffs, run.state.rho.coeffs, atol=1e-14)

    def test_linear_flow_identity(self, drift_curve):
        h = mode_one(6)
        out = linear_flow(h, 0.01, 0.01, 0, drift_curve, DriftModel.smooth(1, "sine1d"))
        np.testing.assert_array_equal(out.coeffs, h.coeffs)

    def test_linear_flow_composes(self, drift_curve, rng):
        model = DriftModel.smooth(1, "sine1d")
        h = SpectralField.random(1, 6, rng, decay=1.0)
        two_legs = linear_flow(linear_flow(h, 0.0, 0.01, 2, drift_curve, model), 0.01, 0.02, 2, drift_curve, model)
        one_leg = linear_flow(h, 0.0, 0.02, 2, drift_curve, model)
        np.testing.assert_allclose(two_legs.coeffs, one_leg.coeffs, atol=1e-12)

    def test_linear_flow_is_linear(self, drift_curve, rng):
        model = DriftModel.smooth(1, "sine1d")
        a = SpectralField.random(1, 6, rng, decay=1.0)
        b = SpectralField.random(1, 6, rng, decay=1.0)
        combined = linear_flow(a * 2.0 - b * 0.5, 0.0, 0.02, 0, drift_curve, model)
        separate = linear_flow(a, 0.0, 0.02, 0, drift_curve, model) * 2.0 - linear_flow(b, 0.0, 0.02, 0, drift_curve, model) * 0.5
        np.testing.assert_allclose(combined.coeffs, separate.coeffs, atol=1e-12)

    def test_affine_in_initial_data(self, drift_curve, rng):
        # common noise: rho(f + h) - rho(f) is the noiseless flow of h
        model = DriftModel.smooth(1, "sine1d")
        noise = NoiseModel.from_curve(drift_curve, 6)
        f = SpectralField.random(1, 6, rng, decay=1.0)
        h = SpectralField.random(1, 6, rng, decay=1.0)
        runs = [
            simulate_spde(start, drift_curve, model, noise, stream(6, "spde", 0), n_mollify=3, indices=INDICES)
            for start in (f + h, f)
        ]
        diff = runs[0].state.rho - runs[1].state.rho
        flow = linear_flow(h, 0.0, 0.02, 3, drift_curve, model)
        np.testing.assert_allclose(diff.coeffs, flow.coeffs, atol=1e-9)

    def test_linear_flow_order(self, drift_curve):
        with pytest.raises(DomainError, match="s <= t"):
            linear_flow(mode_one(6), 0.02, 0.01, 0, drift_curve, DriftModel.smooth(1, "sine1d"))


def ou_variance(k: int, dt: float, n_steps: int) -> float:
    """E|c_k|^2 of the scheme after n_steps from 0 (sigma = 1, no drift, uniform mu)."""
    x = 2 * math.pi**2 * k * k * dt
    return 2 * x / math.expm1(2 * x) * (1 - math.exp(-2 * x * n_steps))


class TestStationaryVariance:
    def ou_samples(self, dt: float, t_final: float, replicas: int) -> np.ndarray:
        curve = solve_fp(uniform_density(1, 4), DriftModel.smooth(1, "zero"), 1.0, time_grid(t_final, dt))
        noise = NoiseModel.from_curve(curve, 4)
        finals = [
            simulate_spde(
                SpectralField.zeros(1, 4), curve, DriftModel.smooth(1, "zero"), noise, stream(21, "spde", r),
                n_mollify=0, indices=INDICES,
            ).state.rho
            for r in range(replicas)
        ]
        return np.array([[abs(rho.coeff((k,))) ** 2 for k in range(1, 5)] for rho in finals])

    def test_variance_balance(self):
        n_steps = 50
        samples = self.ou_samples(0.005, 0.25, 200)
        ratios = samples / np.array([ou_variance(k, 0.005, n_steps) for k in range(1, 5)])
        se = ratios.std(ddof=1) / math.sqrt(ratios.size)
        assert abs(ratios.mean() - 1.0) < 5 * se

    @pytest.mark.slow
    def test_mode_one_variance_tends_to_one(self):
        # sigma^2 (2 pi)^2 / (2 (sigma^2/2) (2 pi)^2) = 1
        mode_one = self.ou_samples(0.001, 0.25, 1000)[:, 0]
        se = mode_one.std(ddof=1) / math.sqrt(len(mode_one))
        assert abs(mode_one.mean() - 1.0) < 5 * se


# =============================================================================
# Coercivity
# =============================================================================


class TestCoercivity:
    def test_fit_holds_on_samples(self, rng):
        mu = cosine_density(1, 6, 0.3)
        samples = coercivity_samples(2, mu, DriftModel.smooth(1, "sine1d"), 1.0, INDICES, rng, count=20)
        fit = fit_coercivity(samples, sigma=1.0)
        assert fit.delta == pytest.approx(math.pi**2)
        assert fit.min_margin == pytest.approx(0.0, abs=1e-9)
        assert all(m >= -1e-9 for m in fit.margins)
        assert set(fit.to_dict()) == {"C", "delta", "min_margin"}

    def test_unit_samples(self, rng):
        samples = coercivity_samples(
            0, uniform_density(1, 4), DriftModel.smooth(1, "zero"), 1.0, INDICES, rng, count=5
        )
        assert all(p == pytest.approx(1.0) for _, p, _ in samples)

    def test_needs_delta_or_sigma(self):
        with pytest.raises(DomainError):
            fit_coercivity([(0.0, 1.0, 1.0)])

    def test_needs_samples(self):
        with pytest.raises(DomainError):
            fit_coercivity([], delta=1.0)
