"""Monte-Carlo experiments over particle and SPDE replicas.

Replicas run on a thread pool; every replica draws from its own counter-based
stream keyed by (master seed, domain, ...), and results are collected in
replica order, so reports do not depend on the thread count.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Sequence, TypeVar

import numpy as np
from scipy import stats

from fluctlab._exceptions import DomainError, InsufficientDataError
from fluctlab._rng import stream
from fluctlab._types import DriftVariant, InitMode, SobolevIndices
from fluctlab.config import (
    ExperimentConfig,
    build_drift_model,
    build_functional,
    build_initial_density,
    build_test_function,
    default_phis,
)
from fluctlab.functionals import (
    CylindricalFunctional,
    GeneratorTerms,
    evaluate,
    generator_particle,
    generator_spde,
)
from fluctlab.kernels import DriftModel, pair_potential_sum, potential_multiplier
from fluctlab.meanfield import MeanFieldCurve, solve_fp, time_grid
from fluctlab.particles import (
    ParticleEnsemble,
    fluctuation_field,
    sample_initial,
    sample_lattice,
    step_em,
)
from fluctlab.spde import (
    GalerkinState,
    NoiseModel,
    coercivity_samples,
    fit_coercivity,
    sample_rho0,
    simulate_spde,
    step_spde,
)
from fluctlab.spectral import SpectralField, coeffs_to_grid, evaluate_coeffs, pairing, sobolev_norm

logger = logging.getLogger(__name__)

T = TypeVar("T")

MIN_FIT_ROWS = 3
FLAG_FACTOR = 2.0


# =============================================================================
# Replica plumbing
# =============================================================================


def run_replicas(fn: Callable[[int], T], count: int, threads: int = 1) -> list[T]:
    """fn(0..count-1), in replica order, on up to ``threads`` workers."""
    if threads <= 1 or count <= 1:
        return [fn(r) for r in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def mean_se(samples: Sequence[float]) -> tuple[float, float]:
    """Sample mean and std/sqrt(n)."""
    arr = np.asarray(samples, dtype=np.float64)
    if len(arr) < 2:
        return float(arr.mean()) if len(arr) else math.nan, math.nan
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(len(arr)))


def variance_se(samples: Sequence[float]) -> tuple[float, float]:
    """Sample variance and its standard error sqrt((m4 - V^2) / n)."""
    arr = np.asarray(samples, dtype=np.float64)
    centered = arr - arr.mean()
    var = float(np.mean(centered**2)) * len(arr) / (len(arr) - 1)
    m4 = float(np.mean(centered**4))
    return var, math.sqrt(max(m4 - var**2, 0.0) / len(arr))


@dataclass(frozen=True, eq=False)
class Setup:
    """Everything replicas share read-only."""

    cfg: ExperimentConfig
    model: DriftModel
    mu0: SpectralField
    curve: MeanFieldCurve
    noise: NoiseModel
    functional: CylindricalFunctional

    @property
    def indices(self) -> SobolevIndices:
        return self.cfg.indices

    @property
    def seed(self) -> int:
        return self.cfg.run.master_seed

    @property
    def threads(self) -> int:
        return self.cfg.run.threads

    @property
    def dt(self) -> float:
        return self.cfg.model.dt

    @property
    def sigma(self) -> float:
        return self.cfg.model.sigma

    @property
    def n_steps(self) -> int:
        return int(round(self.cfg.model.t_final / self.dt))


def prepare(cfg: ExperimentConfig, *, extra_steps: int = 0) -> Setup:
    """Solve the mean-field curve on the run grid (plus ``extra_steps``)."""
    model = build_drift_model(cfg)
    mu0 = build_initial_density(cfg)
    n_steps = int(round(cfg.model.t_final / cfg.model.dt)) + extra_steps
    grid = time_grid(n_steps * cfg.model.dt, cfg.model.dt)
    curve = solve_fp(
        mu0, model, cfg.model.sigma, grid,
        positivity=cfg.spectral.positivity,
        tol_pos=cfg.spectral.tol_pos,
        sqrt_kmax=cfg.spectral.sqrt_kmax,
        regularity_index=cfg.lam_prime,
    )
    noise = NoiseModel.from_curve(curve, cfg.spectral.noise_cutoff)
    return Setup(cfg, model, mu0, curve, noise, build_functional(cfg))


def initial_ensemble(setup: Setup, n: int, replica: int) -> ParticleEnsemble:
    rng = stream(setup.seed, "particles", n, replica)
    if setup.cfg.initial.init is InitMode.LATTICE:
        return sample_lattice(setup.cfg.d, n, replica_id=replica, rng=rng)
    ens = sample_initial(
        setup.mu0, n, stream(setup.seed, "initial", n, replica),
        replica_id=replica, singular=setup.model.is_singular,
    )
    return replace(ens, rng=rng)


def run_particles(setup: Setup, ens: ParticleEnsemble, n_steps: int) -> ParticleEnsemble:
    for _ in range(n_steps):
        ens = step_em(ens, setup.model, setup.dt, setup.sigma)
    return ens


def initial_fluctuation(setup: Setup, replica: int) -> SpectralField:
    return sample_rho0(
        setup.cfg.initial.rho0, setup.mu0, setup.curve.sqrt_mus[0],
        stream(setup.seed, "rho0", replica),
    )


def spde_final(setup: Setup, replica: int) -> SpectralField:
    run = simulate_spde(
        initial_fluctuation(setup, replica), setup.curve, setup.model, setup.noise,
        stream(setup.seed, "spde", replica),
        n_mollify=setup.cfg.spectral.n_mollify, indices=setup.indices,
    )
    return run.state.rho


# =============================================================================
# Weak error
# =============================================================================


@dataclass(frozen=True)
class WeakErrorRow:
    """One N of the weak-error curve; the gap is particle minus SPDE."""

    N: int
    est_p: float
    se_p: float
    est_s: float
    se_s: float
    replicas: int
    samples_p: tuple[float, ...] = field(default=(), repr=False, compare=False)
    samples_s: tuple[float, ...] = field(default=(), repr=False, compare=False)

    @classmethod
    def from_samples(cls, n: int, particle: Sequence[float], spde: Sequence[float]) -> "WeakErrorRow":
        est_p, se_p = mean_se(particle)
        est_s, se_s = mean_se(spde)
        return cls(n, est_p, se_p, est_s, se_s, len(particle), tuple(particle), tuple(spde))

    @property
    def gap(self) -> float:
        return self.est_p - self.est_s

    @property
    def gap_se(self) -> float:
        return math.hypot(self.se_p, self.se_s)

    @property
    def flagged(self) -> bool:
        """Gap does not clear FLAG_FACTOR standard errors."""
        return not abs(self.gap) > FLAG_FACTOR * self.gap_se

    def to_dict(self) -> dict[str, Any]:
        return {
            "N": self.N,
            "est_p": self.est_p,
            "se_p": self.se_p,
            "est_s": self.est_s,
            "se_s": self.se_s,
            "gap": self.gap,
            "gap_se": self.gap_se,
            "replicas": self.replicas,
        }


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    slope_ci: tuple[float, float]
    rows_used: int
    method: str = "bootstrap"

    def excludes_zero(self) -> bool:
        lo, hi = self.slope_ci
        return not lo <= 0.0 <= hi

    def to_dict(self) -> dict[str, Any]:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r2": self.r2,
            "slope_ci": list(self.slope_ci),
            "rows_used": self.rows_used,
            "method": self.method,
        }


def spde_samples(setup: Setup) -> list[float]:
    """Phi(rho_T) over the SPDE replica pool."""
    Phi = setup.functional

    def one(replica: int) -> float:
        return evaluate(Phi, spde_final(setup, replica))

    samples = run_replicas(one, setup.cfg.experiment.spde_replicas, setup.threads)
    logger.info("spde pool: %d replicas", len(samples))
    return samples


def particle_samples(setup: Setup, n: int, replicas: int) -> list[float]:
    """Phi(rho^N_T) over independent particle replicas."""
    Phi = setup.functional
    mu_t = setup.curve.mus[setup.n_steps]

    def one(replica: int) -> float:
        ens = run_particles(setup, initial_ensemble(setup, n, replica), setup.n_steps)
        return evaluate(Phi, fluctuation_field(ens, mu_t))

    return run_replicas(one, replicas, setup.threads)


def weak_error_curve(cfg: ExperimentConfig, *, setup: Optional[Setup] = None) -> list[WeakErrorRow]:
    """Particle versus SPDE estimates of E Phi at t_final for every N.

    The SPDE side does not depend on N and is computed once; particle and
    SPDE randomness are independent.
    """
    setup = setup or prepare(cfg)
    spde = spde_samples(setup)
    rows = []
    for n in cfg.experiment.N:
        row = WeakErrorRow.from_samples(n, particle_samples(setup, n, cfg.experiment.particle_replicas), spde)
        if row.flagged:
            logger.warning("N=%d: |gap| %.3e within %g SE (%.3e); row excluded from fit", n, abs(row.gap), FLAG_FACTOR, row.gap_se)
        logger.info("N=%d: particle %.6g +- %.2g, spde %.6g +- %.2g", n, row.est_p, row.se_p, row.est_s, row.se_s)
        rows.append(row)
    return rows


def _slopes(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares slopes of every row of y against x."""
    xc = x - x.mean()
    return (y - y.mean(axis=-1, keepdims=True)) @ xc / float(xc @ xc)


def _bootstrap_means(samples: np.ndarray, n_boot: int, rng: np.random.Generator, chunk: int = 100) -> np.ndarray:
    out = np.empty(n_boot)
    for start in range(0, n_boot, chunk):
        size = min(chunk, n_boot - start)
        idx = rng.integers(0, len(samples), size=(size, len(samples)))
        out[start:start + size] = samples[idx].mean(axis=1)
    return out


def fit_loglog(
    ns: Sequence[float],
    values: Sequence[float],
    *,
    boot_values: Optional[np.ndarray] = None,
) -> RateFit:
    """OLS of log|value| on log N; ``boot_values`` (n_boot, rows) gives the CI."""
    x = np.log(np.asarray(ns, dtype=np.float64))
    y = np.log(np.abs(np.asarray(values, dtype=np.float64)))
    fit = stats.linregress(x, y)
    ci = (float(fit.slope), float(fit.slope))
    if boot_values is not None:
        with np.errstate(divide="ignore"):
            yb = np.log(np.abs(boot_values))
        slopes = _slopes(x, yb[np.all(np.isfinite(yb), axis=1)])
        if len(slopes):
            ci = (float(np.percentile(slopes, 2.5)), float(np.percentile(slopes, 97.5)))
    return RateFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2), ci, len(x))


def fit_rate(
    rows: Sequence[WeakErrorRow],
    *,
    n_boot: int = 1000,
    rng: Optional[np.random.Generator] = None,
) -> RateFit:
    """Fit log|gap| against log N on unflagged rows, with a bootstrap CI.

    Replica samples are resampled when the rows carry them (the shared SPDE
    pool once per iteration); otherwise the gaps are perturbed by their SEs.
    """
    usable = [r for r in rows if not r.flagged]
    if len(usable) < MIN_FIT_ROWS:
        raise InsufficientDataError(len(usable), MIN_FIT_ROWS)
    rng = rng or stream(0, "bootstrap")
    ns = [r.N for r in usable]
    gaps = [r.gap for r in usable]

    if all(r.samples_p and r.samples_s for r in usable):
        pools = {r.samples_s: np.asarray(r.samples_s) for r in usable}
        spde_boot = {key: _bootstrap_means(pool, n_boot, rng) for key, pool in pools.items()}
        boot = np.stack(
            [_bootstrap_means(np.asarray(r.samples_p), n_boot, rng) - spde_boot[r.samples_s] for r in usable],
            axis=1,
        )
        result = fit_loglog(ns, gaps, boot_values=boot)
    else:
        boot = np.asarray(gaps) + rng.standard_normal((n_boot, len(usable))) * np.asarray([r.gap_se for r in usable])
        result = replace(fit_loglog(ns, gaps, boot_values=boot), method="parametric")
    logger.info(
        "rate fit over %d rows: slope %.4f, CI [%.4f, %.4f]",
        result.rows_used, result.slope, result.slope_ci[0], result.slope_ci[1],
    )
    return result


# =============================================================================
# Modulated energy
# =============================================================================


def modulated_energy(points: Any, mu: SpectralField, model: DriftModel, sigma: float) -> float:
    """Coulomb energy of mu^N - mu with the diagonal removed, divided by sigma^2."""
    if model.variant is not DriftVariant.COULOMB:
        raise DomainError("modulated energy is defined for the coulomb kernel")
    if sigma <= 0:
        raise DomainError(f"modulated energy needs sigma > 0, got {sigma}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, model.d)
    n = len(pts)
    g_hat = potential_multiplier(model, mu.kmax)
    g_mu = g_hat * mu.coeffs
    pair = pair_potential_sum(model, pts)
    cross = float(np.sum(evaluate_coeffs(g_mu, mu.kmax, pts).real))
    self_energy = float(np.sum(g_hat * np.abs(mu.coeffs) ** 2))
    return (pair / n**2 - 2.0 * cross / n + self_energy) / sigma**2


@dataclass(frozen=True)
class EnergyRow:
    N: int
    mean: float
    se: float
    mean_abs: float
    se_abs: float
    replicas: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "N": self.N, "mean": self.mean, "se": self.se,
            "mean_abs": self.mean_abs, "se_abs": self.se_abs, "replicas": self.replicas,
        }


@dataclass(frozen=True)
class EnergyReport:
    rows: tuple[EnergyRow, ...]
    fit: RateFit
    reference_exponent: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "fit": self.fit.to_dict(),
            "reference_exponent": self.reference_exponent,
        }


def reference_energy_exponent(d: int) -> float:
    return -1.0 if d == 2 else -2.0 / 3.0


def fluctuation_rate_factor(d: int, n: int) -> float:
    """log N / sqrt(N) for d = 2, N^{-1/6} for d = 3."""
    return math.log(n) / math.sqrt(n) if d == 2 else n ** (-1.0 / 6.0)


def modulated_energy_study(cfg: ExperimentConfig) -> EnergyReport:
    """E F_N and E|F_N| of i.i.d. samples of mu_0; exponent fitted on E|F_N|."""
    model = build_drift_model(cfg)
    mu0 = build_initial_density(cfg)
    ex = cfg.experiment
    rows = []
    boots = []
    rng = stream(cfg.run.master_seed, "bootstrap", 1)
    for n in ex.energy_N:

        def one(replica: int, n: int = n) -> float:
            ens = sample_initial(mu0, n, stream(cfg.run.master_seed, "initial", n, replica), singular=True)
            return modulated_energy(ens.positions, mu0, model, cfg.model.sigma)

        samples = np.asarray(run_replicas(one, ex.energy_replicas, cfg.run.threads))
        mean, se = mean_se(samples)
        mean_abs, se_abs = mean_se(np.abs(samples))
        rows.append(EnergyRow(n, mean, se, mean_abs, se_abs, len(samples)))
        boots.append(_bootstrap_means(np.abs(samples), ex.bootstrap, rng))
        logger.info("N=%d: E F_N %.4g +- %.2g, E|F_N| %.4g", n, mean, se, mean_abs)
    if len(rows) < MIN_FIT_ROWS:
        raise InsufficientDataError(len(rows), MIN_FIT_ROWS)
    fit = fit_loglog([r.N for r in rows], [r.mean_abs for r in rows], boot_values=np.stack(boots, axis=1))
    return EnergyReport(tuple(rows), fit, reference_energy_exponent(cfg.d))


# =============================================================================
# CLT baseline
# =============================================================================


@dataclass(frozen=True)
class CltRow:
    side: str
    N: Optional[int]
    variance: float
    se: float
    z: float

    def to_dict(self) -> dict[str, Any]:
        return {"side": self.side, "N": self.N, "variance": self.variance, "se": self.se, "z": self.z}


@dataclass(frozen=True)
class CltReport:
    value: float
    rows: tuple[CltRow, ...]

    @property
    def max_abs_z(self) -> float:
        return max(abs(r.z) for r in self.rows)

    def to_dict(self) -> dict[str, Any]:
        return {"value": self.value, "rows": [r.to_dict() for r in self.rows], "max_abs_z": self.max_abs_z}


def quadrature_variance(mu: SpectralField, phi: SpectralField, oversample: int = 4) -> float:
    """Var of phi(X) for X ~ mu on a fine grid."""
    m = oversample * (2 * max(mu.kmax, phi.kmax) + 1)
    w = coeffs_to_grid(mu.coeffs, m).real
    p = coeffs_to_grid(phi.coeffs, m).real
    first = float(np.mean(w * p))
    return float(np.mean(w * p * p)) - first**2


def _clt_row(side: str, n: Optional[int], samples: Sequence[float], value: float) -> CltRow:
    var, se = variance_se(samples)
    z = (var - value) / se if se > 0 else 0.0
    return CltRow(side, n, var, se, z)


def clt_baseline(cfg: ExperimentConfig) -> CltReport:
    """Var <rho, phi> on both sides against the i.i.d. value Var_{mu_T}(phi)."""
    if cfg.drift.variant is not DriftVariant.SMOOTH or cfg.drift.preset != "zero":
        raise DomainError("clt baseline needs drift preset 'zero'")
    setup = prepare(cfg)
    entries = cfg.functional.phis or default_phis(cfg.d)
    phi = build_test_function(entries[0], cfg.d, cfg.spectral.kmax)
    mu_t = setup.curve.mus[setup.n_steps]
    value = quadrature_variance(mu_t, phi)
    ex = cfg.experiment
    rows = []
    for n in ex.clt_N:

        def one(replica: int, n: int = n) -> float:
            ens = run_particles(setup, initial_ensemble(setup, n, replica), setup.n_steps)
            return pairing(fluctuation_field(ens, mu_t), phi).real

        rows.append(_clt_row("particle", n, run_replicas(one, ex.clt_replicas, setup.threads), value))

    def spde_one(replica: int) -> float:
        return pairing(spde_final(setup, replica), phi).real

    rows.append(_clt_row("spde", None, run_replicas(spde_one, ex.clt_replicas, setup.threads), value))
    report = CltReport(value, tuple(rows))
    logger.info("clt baseline: value %.6g, max |z| %.3f", value, report.max_abs_z)
    return report


# =============================================================================
# Refinement
# =============================================================================


@dataclass(frozen=True)
class RefinementLevel:
    kmax: int
    L_noise: int
    n_mollify: int
    dt: float
    estimate: float
    se: float
    diff: Optional[float] = None
    diff_se: Optional[float] = None
    stalled: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "kmax": self.kmax, "L_noise": self.L_noise, "n_mollify": self.n_mollify, "dt": self.dt,
            "estimate": self.estimate, "se": self.se,
            "diff": self.diff, "diff_se": self.diff_se, "stalled": self.stalled,
        }


def default_ladder(cfg: ExperimentConfig) -> tuple[dict[str, Any], ...]:
    k = cfg.spectral.kmax
    return ({"kmax": k}, {"kmax": 2 * k}, {"kmax": 4 * k})


def level_config(cfg: ExperimentConfig, level: dict[str, Any]) -> ExperimentConfig:
    kmax = int(level.get("kmax", cfg.spectral.kmax))
    out = cfg.with_section(
        "spectral",
        kmax=kmax,
        L_noise=int(level.get("L_noise", kmax)),
        n_mollify=int(level.get("n_mollify", cfg.spectral.n_mollify)),
        sqrt_kmax=None,
    )
    return out.with_section("model", dt=float(level.get("dt", cfg.model.dt)))


def refinement_study(cfg: ExperimentConfig) -> list[RefinementLevel]:
    """E Phi(rho_T) along a (kmax, L, n, dt) ladder with successive differences."""
    ladder = cfg.experiment.ladder or default_ladder(cfg)
    levels: list[RefinementLevel] = []
    for level in ladder:
        lcfg = level_config(cfg, dict(level))
        setup = prepare(lcfg)
        est, se = mean_se(spde_samples(setup))
        spec = lcfg.spectral
        current = RefinementLevel(spec.kmax, spec.noise_cutoff, spec.n_mollify, lcfg.model.dt, est, se)
        if levels:
            prev = levels[-1]
            diff = est - prev.estimate
            stalled = prev.diff is not None and abs(diff) > abs(prev.diff)
            if stalled:
                logger.warning("refinement stalls at kmax=%d: |diff| %.3e grew", spec.kmax, abs(diff))
            current = replace(current, diff=diff, diff_se=math.hypot(se, prev.se), stalled=stalled)
        levels.append(current)
    return levels


# =============================================================================
# Generator check
# =============================================================================


@dataclass(frozen=True)
class GeneratorCheck:
    """Time finite difference of E Phi versus the mean generator on one side."""

    side: str
    fd: float
    fd_se: float
    generator: float
    generator_se: float
    delta: float
    replicas: int

    @property
    def z(self) -> float:
        se = math.hypot(self.fd_se, self.generator_se)
        return (self.fd - self.generator) / se if se > 0 else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "side": self.side, "fd": self.fd, "fd_se": self.fd_se,
            "generator": self.generator, "generator_se": self.generator_se,
            "delta": self.delta, "replicas": self.replicas, "z": self.z,
        }


def _check(side: str, pairs: Sequence[tuple[float, float]], delta: float) -> GeneratorCheck:
    increments = [d for d, _ in pairs]
    fd, fd_se = mean_se(np.asarray(increments) / delta)
    gen, gen_se = mean_se([g for _, g in pairs])
    return GeneratorCheck(side, fd, fd_se, gen, gen_se, delta, len(pairs))


def generator_check(cfg: ExperimentConfig) -> tuple[GeneratorCheck, GeneratorCheck]:
    """(particle, spde) checks at t_final with delta = fd_steps * dt."""
    ex = cfg.experiment
    setup = prepare(cfg, extra_steps=ex.fd_steps)
    Phi, curve, model = setup.functional, setup.curve, setup.model
    t0 = setup.n_steps
    t1 = t0 + ex.fd_steps
    delta = ex.fd_steps * setup.dt
    n = ex.n_particles

    def particle_one(replica: int) -> tuple[float, float]:
        ens = run_particles(setup, initial_ensemble(setup, n, replica), t0)
        before = evaluate(Phi, fluctuation_field(ens, curve.mus[t0]))
        terms: GeneratorTerms = generator_particle(Phi, ens, curve.mus[t0], curve.times[t0], model, setup.sigma)
        ens = run_particles(setup, ens, ex.fd_steps)
        after = evaluate(Phi, fluctuation_field(ens, curve.mus[t1]))
        return after - before, terms.total

    def spde_one(replica: int) -> tuple[float, float]:
        rng = stream(setup.seed, "spde", replica)
        nm = cfg.spectral.n_mollify
        state = GalerkinState(initial_fluctuation(setup, replica), 0.0, nm, setup.noise.L_noise, setup.indices)
        for i in range(t1):
            if i == t0:
                before = evaluate(Phi, state.rho)
                terms = generator_spde(Phi, state.rho, curve.times[t0], nm, curve.mus[t0], setup.noise, model)
            state = step_spde(state, curve.times[i + 1] - curve.times[i], curve, model, setup.noise, rng)
            state = replace(state, t=curve.times[i + 1])
        return evaluate(Phi, state.rho) - before, terms.total

    particle = _check("particle", run_replicas(particle_one, ex.generator_replicas, setup.threads), delta)
    spde = _check("spde", run_replicas(spde_one, ex.generator_replicas, setup.threads), delta)
    for check in (particle, spde):
        logger.info("%s generator: fd %.5g +- %.2g vs %.5g +- %.2g", check.side, check.fd, check.fd_se, check.generator, check.generator_se)
    return particle, spde


# =============================================================================
# Coercivity and moment bounds
# =============================================================================


@dataclass(frozen=True)
class CoercivityLevel:
    n: int
    C: float
    delta: float
    min_margin: float

    def to_dict(self) -> dict[str, Any]:
        return {"n": self.n, "C": self.C, "delta": self.delta, "min_margin": self.min_margin}


def coercivity_study(cfg: ExperimentConfig) -> list[CoercivityLevel]:
    """Fit (C, delta) for every mollification level on random unit fields."""
    model = build_drift_model(cfg)
    mu0 = build_initial_density(cfg)
    levels = []
    for n in cfg.experiment.mollify_levels:
        rng = stream(cfg.run.master_seed, "coercivity", n)
        samples = coercivity_samples(
            n, mu0, model, cfg.model.sigma, cfg.indices, rng, cfg.experiment.coercivity_samples
        )
        fit = fit_coercivity(samples, sigma=cfg.model.sigma)
        levels.append(CoercivityLevel(n, fit.C, fit.delta, fit.min_margin))
    return levels


@dataclass(frozen=True)
class MomentLevel:
    n: int
    sup_norm2: float
    se: float
    initial_norm2: float
    ratio: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n, "sup_norm2": self.sup_norm2, "se": self.se,
            "initial_norm2": self.initial_norm2, "ratio": self.ratio,
        }


def moment_bound_study(cfg: ExperimentConfig) -> list[MomentLevel]:
    """E sup_t |rho^n_t|_s^2 against 1 + E|rho_0|_s^2 for every mollification level."""
    setup = prepare(cfg)
    s = setup.indices.s_fluct
    levels = []
    for n in cfg.experiment.mollify_levels:

        def one(replica: int, n: int = n) -> tuple[float, float]:
            rho0 = initial_fluctuation(setup, replica)
            run = simulate_spde(
                rho0, setup.curve, setup.model, setup.noise, stream(setup.seed, "spde", replica),
                n_mollify=n, indices=setup.indices,
            )
            return run.sup_norm2, sobolev_norm(rho0, s) ** 2

        results = run_replicas(one, cfg.experiment.moment_replicas, setup.threads)
        sup, se = mean_se([r[0] for r in results])
        init = float(np.mean([r[1] for r in results]))
        levels.append(MomentLevel(n, sup, se, init, sup / (1.0 + init)))
    return levels
