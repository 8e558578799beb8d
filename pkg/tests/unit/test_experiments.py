"""Tests for the Monte-Carlo experiment drivers."""

from __future__ import annotations

import math

import numpy as np
import pytest

from fluctlab._exceptions import DomainError, InsufficientDataError
from fluctlab._rng import stream
from fluctlab.config import default_config
from fluctlab.experiments import (
    WeakErrorRow,
    clt_baseline,
    coercivity_study,
    default_ladder,
    fit_loglog,
    fit_rate,
    fluctuation_rate_factor,
    generator_check,
    level_config,
    mean_se,
    modulated_energy,
    modulated_energy_study,
    moment_bound_study,
    prepare,
    quadrature_variance,
    reference_energy_exponent,
    refinement_study,
    run_replicas,
    spde_samples,
    variance_se,
    weak_error_curve,
)
from fluctlab.kernels import DriftModel, pair_potential_sum
from fluctlab.meanfield import cosine_density, uniform_density
from fluctlab.spectral import SpectralField
from tests.conftest import small_sections


# =============================================================================
# Plumbing
# =============================================================================


class TestPlumbing:
    def test_replica_order_independent_of_threads(self):
        def draw(replica: int) -> float:
            return float(stream(5, "particles", 8, replica).random())

        assert run_replicas(draw, 12, threads=4) == run_replicas(draw, 12, threads=1)

    def test_mean_se(self):
        mean, se = mean_se([1.0, 2.0, 3.0, 4.0])
        assert mean == 2.5
        assert se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
        assert math.isnan(mean_se([1.0])[1])

    def test_variance_se(self, rng):
        samples = rng.standard_normal(4000)
        var, se = variance_se(samples)
        assert var == pytest.approx(np.var(samples, ddof=1))
        # Gaussian: Var(s^2) ~ 2 sigma^4 / n
        assert se == pytest.approx(math.sqrt(2 / 4000), rel=0.15)

    def test_prepare_curve_covers_run(self, small_cfg):
        setup = prepare(small_cfg, extra_steps=2)
        assert setup.n_steps == 4
        assert len(setup.curve.times) == 7
        assert setup.noise.L_noise == small_cfg.spectral.kmax
        assert len(setup.functional.phis) == 1


# =============================================================================
# Weak error and rate fits
# =============================================================================


def synthetic_rows(slope: float, ns=(4, 8, 16, 32)) -> list[WeakErrorRow]:
    return [WeakErrorRow(n, n**slope, 1e-6 * n**slope, 0.0, 0.0, 100) for n in ns]


class TestWeakErrorRow:
    def test_gap(self):
        row = WeakErrorRow.from_samples(8, [1.0, 1.2, 0.8], [0.1, 0.3])
        assert row.gap == pytest.approx(0.8)
        assert row.gap_se == pytest.approx(math.hypot(row.se_p, row.se_s))
        assert row.replicas == 3
        assert row.samples_s == (0.1, 0.3)

    def test_flagged(self):
        assert WeakErrorRow(4, 0.1, 0.1, 0.0, 0.0, 10).flagged
        assert not WeakErrorRow(4, 0.5, 0.1, 0.0, 0.0, 10).flagged

    def test_to_dict(self):
        data = WeakErrorRow(4, 0.5, 0.1, 0.2, 0.0, 10).to_dict()
        assert list(data) == ["N", "est_p", "se_p", "est_s", "se_s", "gap", "gap_se", "replicas"]
        assert data["gap"] == pytest.approx(0.3)


class TestRateFit:
    def test_loglog_exact(self):
        fit = fit_loglog([10, 100, 1000], [1e-1, 1e-2, 1e-3])
        assert fit.slope == pytest.approx(-1.0)
        assert fit.r2 == pytest.approx(1.0)
        assert fit.slope_ci == (fit.slope, fit.slope)

    def test_parametric_fallback(self):
        fit = fit_rate(synthetic_rows(-0.5), n_boot=200)
        assert fit.method == "parametric"
        assert fit.slope == pytest.approx(-0.5, abs=1e-6)
        assert fit.slope_ci[0] <= -0.5 <= fit.slope_ci[1]
        assert fit.excludes_zero()
        assert fit.rows_used == 4

    def test_sample_bootstrap(self, rng):
        spde = tuple(rng.normal(0.0, 0.01, 200))
        rows = []
        for n in (4, 8, 16):
            particle = tuple(np.mean(spde) + 1.0 / n + rng.normal(0.0, 0.001, 200))
            rows.append(WeakErrorRow.from_samples(n, particle, spde))
        fit = fit_rate(rows, n_boot=200, rng=stream(1, "bootstrap"))
        assert fit.method == "bootstrap"
        assert fit.slope == pytest.approx(-1.0, abs=0.05)
        assert fit.excludes_zero()

    def test_flagged_rows_excluded(self):
        rows = synthetic_rows(-1.0, ns=(4, 8, 16)) + [WeakErrorRow(32, 0.0, 1.0, 0.0, 1.0, 10)]
        assert fit_rate(rows, n_boot=50).rows_used == 3

    def test_insufficient_rows(self):
        rows = synthetic_rows(-1.0, ns=(4, 8)) + [WeakErrorRow(16, 0.0, 1.0, 0.0, 1.0, 10)]
        with pytest.raises(InsufficientDataError) as info:
            fit_rate(rows)
        assert info.value.usable == 2
        assert "at least 3" in str(info.value)

    def test_to_dict(self):
        data = fit_rate(synthetic_rows(-0.5), n_boot=20).to_dict()
        assert set(data) == {"slope", "intercept", "r2", "slope_ci", "rows_used", "method"}


class TestWeakErrorCurve:
    def test_rows_per_n(self, small_cfg):
        rows = weak_error_curve(small_cfg)
        assert [r.N for r in rows] == [16, 32, 64]
        assert all(r.replicas == 6 for r in rows)
        # the SPDE pool is shared by every N
        assert len({r.est_s for r in rows}) == 1
        assert all(math.isfinite(r.se_p) for r in rows)

    def test_independent_of_thread_count(self, small_cfg):
        one = weak_error_curve(small_cfg)
        many = weak_error_curve(small_cfg.with_section("run", threads=3))
        assert [r.to_dict() for r in one] == [r.to_dict() for r in many]

    def test_seed_changes_estimates(self, small_cfg):
        a = spde_samples(prepare(small_cfg))
        b = spde_samples(prepare(small_cfg.with_section("run", master_seed=12)))
        assert a != b


# =============================================================================
# Modulated energy
# =============================================================================


class TestModulatedEnergy:
    def test_uniform_density_reduces_to_pair_sum(self, rng):
        model = DriftModel.coulomb(2)
        pts = rng.random((10, 2))
        value = modulated_energy(pts, uniform_density(2, 4), model, 0.5)
        assert value == pytest.approx(pair_potential_sum(model, pts) / 100 / 0.25, rel=1e-12)

    def test_non_uniform_density(self, rng):
        model = DriftModel.coulomb(2)
        pts = rng.random((10, 2))
        value = modulated_energy(pts, cosine_density(2, 4, 0.5), model, 1.0)
        assert math.isfinite(value)

    def test_needs_coulomb(self):
        with pytest.raises(DomainError, match="coulomb"):
            modulated_energy(np.zeros((2, 2)), uniform_density(2, 2), DriftModel.biot_savart(), 1.0)

    def test_needs_noise(self):
        with pytest.raises(DomainError, match="sigma > 0"):
            modulated_energy(np.zeros((2, 2)), uniform_density(2, 2), DriftModel.coulomb(2), 0.0)

    def test_reference_exponents(self):
        assert reference_energy_exponent(2) == -1.0
        assert reference_energy_exponent(3) == pytest.approx(-2 / 3)
        assert fluctuation_rate_factor(2, 100) == pytest.approx(math.log(100) / 10)
        assert fluctuation_rate_factor(3, 64) == pytest.approx(0.5)

    def test_study(self):
        cfg = default_config(**small_sections(model={"d": 2}, drift={"variant": "coulomb"}, spectral={"kmax": 4}))
        report = modulated_energy_study(cfg)
        assert [r.N for r in report.rows] == [8, 16, 32]
        assert all(r.mean_abs >= abs(r.mean) - 1e-12 for r in report.rows)
        assert report.reference_exponent == -1.0
        assert report.fit.rows_used == 3
        assert set(report.to_dict()) == {"rows", "fit", "reference_exponent"}


# =============================================================================
# CLT baseline
# =============================================================================


class TestCltBaseline:
    def test_quadrature_variance(self):
        phi = SpectralField.from_modes(1, 3, {(1,): 0.5, (-1,): 0.5})
        assert quadrature_variance(uniform_density(1, 3), phi) == pytest.approx(0.5)
        # E cos = a/2, E cos^2 = 1/2 under 1 + a cos
        assert quadrature_variance(cosine_density(1, 3, 0.4), phi) == pytest.approx(0.5 - 0.04)

    def test_needs_zero_drift(self):
        cfg = default_config(**small_sections(drift={"preset": "sine1d"}))
        with pytest.raises(DomainError, match="preset 'zero'"):
            clt_baseline(cfg)

    def test_rows(self, small_cfg):
        report = clt_baseline(small_cfg)
        assert report.value == pytest.approx(0.5)
        assert [(r.side, r.N) for r in report.rows] == [("particle", 16), ("spde", None)]
        assert report.max_abs_z >= 0.0

    @pytest.mark.slow
    def test_variances_match_iid_value(self):
        cfg = default_config(
            **small_sections(
                model={"t_final": 0.05, "dt": 0.001},
                spectral={"kmax": 8},
                experiment={"clt_N": [128], "clt_replicas": 400},
            )
        )
        assert clt_baseline(cfg).max_abs_z < 4.0


# =============================================================================
# Refinement and supplementary studies
# =============================================================================


class TestStudies:
    def test_default_ladder(self, small_cfg):
        assert default_ladder(small_cfg) == ({"kmax": 6}, {"kmax": 12}, {"kmax": 24})

    def test_level_config(self, small_cfg):
        lcfg = level_config(small_cfg, {"kmax": 8, "dt": 0.0025})
        assert lcfg.spectral.kmax == 8
        assert lcfg.spectral.noise_cutoff == 8
        assert lcfg.model.dt == 0.0025

    def test_refinement(self):
        cfg = default_config(**small_sections(experiment={"ladder": [{"kmax": 4}, {"kmax": 6}, {"kmax": 8}]}))
        levels = refinement_study(cfg)
        assert [lvl.kmax for lvl in levels] == [4, 6, 8]
        assert levels[0].diff is None
        assert levels[1].diff == pytest.approx(levels[1].estimate - levels[0].estimate)
        assert not levels[1].stalled

    def test_generator_check(self, small_cfg):
        particle, spde = generator_check(small_cfg)
        assert (particle.side, spde.side) == ("particle", "spde")
        assert particle.delta == pytest.approx(0.01)
        assert particle.replicas == spde.replicas == 4
        assert math.isfinite(particle.z) and math.isfinite(spde.z)

    def test_generator_matches_time_difference(self):
        cfg = default_config(
            **small_sections(model={"dt": 0.001}, experiment={"generator_replicas": 400, "fd_steps": 1})
        )
        for check in generator_check(cfg):
            assert check.replicas == 400
            assert abs(check.z) < 5.0, check.to_dict()

    def test_coercivity(self, small_cfg):
        levels = coercivity_study(small_cfg)
        assert [lvl.n for lvl in levels] == [2, 4]
        assert all(lvl.delta == pytest.approx(math.pi**2) for lvl in levels)
        assert all(lvl.min_margin >= -1e-9 for lvl in levels)

    def test_moment_bounds(self, small_cfg):
        levels = moment_bound_study(small_cfg)
        assert [lvl.n for lvl in levels] == [2, 4]
        for lvl in levels:
            assert lvl.sup_norm2 >= lvl.initial_norm2
            assert lvl.ratio == pytest.approx(lvl.sup_norm2 / (1 + lvl.initial_norm2))


# =============================================================================
# Desk-scale rate runs
# =============================================================================


class TestRates:
    @pytest.mark.slow
    def test_weak_error_rate(self):
        cfg = default_config(
            run={"master_seed": 2024, "threads": 8},
            model={"d": 1, "sigma": 1.0, "t_final": 0.25, "dt": 0.001},
            spectral={"kmax": 16},
            drift={"variant": "smooth", "preset": "sine1d", "alpha": 1.0},
            initial={"density": "cosine", "amplitude": 0.5},
            functional={
                "outer": "tanh_product",
                "phis": [{"k": [1], "kind": "cos"}, {"k": [1], "kind": "sin"}],
                "scales": [1.0, 1.0],
                "shifts": [0.5, -0.3],
            },
            experiment={
                "N": [64, 128, 256, 512, 1024, 2048],
                "particle_replicas": 10_000,
                "spde_replicas": 10_000,
                "bootstrap": 1000,
            },
        )
        rows = weak_error_curve(cfg)
        fit = fit_rate(rows, n_boot=1000, rng=stream(2024, "bootstrap"))
        assert -0.75 <= fit.slope <= -0.35
        assert fit.excludes_zero()

    @pytest.mark.slow
    def test_coulomb_energy_rate(self):
        cfg = default_config(
            run={"master_seed": 7, "threads": 8},
            model={"d": 2, "sigma": 1.0},
            spectral={"kmax": 4},
            drift={"variant": "coulomb"},
            experiment={"energy_N": [64, 128, 256, 512, 1024, 2048, 4096], "energy_replicas": 2000},
        )
        report = modulated_energy_study(cfg)
        lo, hi = report.fit.slope_ci
        assert report.fit.slope <= -0.8
        assert hi - lo < 0.2
