"""Pure config validation functions (no I/O besides the bundled schema).

Structural checks run the Draft-7 schema over the raw mapping; semantic
checks run over the resolved ExperimentConfig and collect every problem
instead of stopping at the first.
"""

import json
import math
from importlib import resources as importlib_resources
from typing import Any, Mapping, Optional

import jsonschema

from fluctlab._exceptions import FluctlabError
from fluctlab._types import DriftVariant, InitMode, Normalization, OuterMap, Rho0Mode
from fluctlab.config import ExperimentConfig, build_initial_density, default_phis
from fluctlab.kernels import SMOOTH_PRESETS
from fluctlab.meanfield import TOL_POS, density_entropy
from fluctlab.spectral import grid_minimum

# Particle replica counts below this only trigger a warning.
MIN_RECOMMENDED_REPLICAS = 100


# =============================================================================
# Schema
# =============================================================================

_SCHEMA_CACHE: Optional[dict[str, Any]] = None


def load_config_schema() -> dict[str, Any]:
    """Load the config.v1.json schema from bundled resources."""
    global _SCHEMA_CACHE
    if _SCHEMA_CACHE is not None:
        return _SCHEMA_CACHE

    schema_path = importlib_resources.files("fluctlab") / "schemas" / "config.v1.json"
    _SCHEMA_CACHE = json.loads(schema_path.read_text(encoding="utf-8"))
    return _SCHEMA_CACHE


def validate_schema(raw: Mapping[str, Any]) -> list[str]:
    """Structural errors of a raw config mapping, each with its dotted path."""
    validator = jsonschema.Draft7Validator(load_config_schema())
    errors = []
    for error in sorted(validator.iter_errors(dict(raw)), key=lambda e: list(map(str, e.absolute_path))):
        path = ".".join(str(p) for p in error.absolute_path)
        prefix = f"[{path}] " if path else ""
        errors.append(f"Schema: {prefix}{error.message}")
    return errors


# =============================================================================
# Semantic checks
# =============================================================================


def _check_indices(cfg: ExperimentConfig, errors: list[str]) -> None:
    d, lam, lam_prime = cfg.d, cfg.lam, cfg.lam_prime
    if not lam > 1.5 * d:
        errors.append(f"spectral.lambda = {lam} violates lambda > 1.5*d (d = {d})")
    if not lam_prime > lam + 1:
        errors.append(f"spectral.lambda_prime = {lam_prime} violates lambda_prime > lambda + 1")


def _check_model(cfg: ExperimentConfig, errors: list[str]) -> None:
    model, spectral = cfg.model, cfg.spectral
    if model.dt <= 0:
        errors.append(f"model.dt must be > 0, got {model.dt}")
    elif model.t_final < model.dt:
        errors.append(f"model.t_final ({model.t_final}) must be >= model.dt ({model.dt})")
    if model.sigma < 0:
        errors.append(f"model.sigma must be >= 0, got {model.sigma}")
    if spectral.kmax < 2:
        errors.append(f"spectral.kmax must be >= 2, got {spectral.kmax}")
    if spectral.L_noise is not None and spectral.L_noise < 1:
        errors.append(f"spectral.L_noise must be >= 1, got {spectral.L_noise}")
    if spectral.n_mollify < 0:
        errors.append(f"spectral.n_mollify must be >= 0, got {spectral.n_mollify}")
    if spectral.sqrt_kmax is not None and spectral.sqrt_kmax < spectral.kmax:
        errors.append(f"spectral.sqrt_kmax ({spectral.sqrt_kmax}) must be >= spectral.kmax")


def _check_drift(cfg: ExperimentConfig, errors: list[str], warnings: list[str]) -> None:
    dr, d = cfg.drift, cfg.d
    if dr.variant is DriftVariant.BIOT_SAVART and d != 2:
        errors.append(f"drift.variant biot_savart is defined for d = 2 only, got d = {d}")
    if dr.variant is DriftVariant.COULOMB and d not in (2, 3):
        errors.append(f"drift.variant coulomb needs d in (2, 3), got d = {d}")
    if dr.variant is DriftVariant.SMOOTH:
        if dr.preset not in SMOOTH_PRESETS:
            errors.append(f"drift.preset {dr.preset!r} not in {SMOOTH_PRESETS}")
        if dr.preset == "gauss_reg" and not (dr.sigma_conv and dr.sigma_conv > 0):
            errors.append("drift.preset gauss_reg needs drift.sigma_conv > 0")
        if dr.preset == "table":
            if not dr.table:
                errors.append("drift.preset table needs a non-empty drift.table")
            for entry in dr.table:
                if len(entry["k"]) != d or len(entry["value"]) != d:
                    errors.append(f"drift.table entry k={entry['k']} does not match d = {d}")
                elif not any(entry["k"]) and any(re or im for re, im in entry["value"]):
                    errors.append("drift.table multiplier at k = 0 must vanish")
    else:
        if cfg.model.sigma <= 0:
            errors.append(f"drift.variant {dr.variant.value} needs model.sigma > 0")
        if Normalization(dr.normalization) is Normalization.UNSCALED:
            warnings.append(
                "drift.normalization unscaled has no mean-field limit; weak-error comparisons are not meaningful"
            )


def _check_lists(cfg: ExperimentConfig, errors: list[str], warnings: list[str]) -> None:
    ex = cfg.experiment
    for name in ("N", "energy_N", "clt_N"):
        values = getattr(ex, name)
        if not values:
            errors.append(f"experiment.{name} must not be empty")
        if any(n < 1 for n in values):
            errors.append(f"experiment.{name} entries must all be >= 1")
    if ex.n_particles < 1:
        errors.append(f"experiment.n_particles must be >= 1, got {ex.n_particles}")
    for name in (
        "particle_replicas", "spde_replicas", "generator_replicas",
        "moment_replicas", "energy_replicas", "clt_replicas",
    ):
        if getattr(ex, name) < 2:
            errors.append(f"experiment.{name} must be >= 2")
    if ex.bootstrap < 10:
        errors.append(f"experiment.bootstrap must be >= 10, got {ex.bootstrap}")
    if ex.fd_steps < 1:
        errors.append(f"experiment.fd_steps must be >= 1, got {ex.fd_steps}")
    if any(n < 0 for n in ex.mollify_levels):
        errors.append("experiment.mollify_levels entries must be >= 0")
    if ex.particle_replicas < MIN_RECOMMENDED_REPLICAS:
        warnings.append(
            f"experiment.particle_replicas = {ex.particle_replicas} is below {MIN_RECOMMENDED_REPLICAS}; "
            "standard errors will be wide"
        )
    for i, level in enumerate(ex.ladder):
        if level.get("kmax", cfg.spectral.kmax) < 2:
            errors.append(f"experiment.ladder[{i}].kmax must be >= 2")
        if level.get("dt", cfg.model.dt) <= 0:
            errors.append(f"experiment.ladder[{i}].dt must be > 0")
    if cfg.initial.init is InitMode.LATTICE:
        d = cfg.d
        for n in (*ex.N, ex.n_particles):
            m = round(n ** (1.0 / d))
            if m**d != n:
                errors.append(f"initial.init lattice needs N to be a perfect {d}-th power, got {n}")


def _check_modes_within(entries: Any, d: int, kmax: int, where: str, errors: list[str]) -> None:
    for entry in entries:
        k = entry["k"]
        if len(k) != d:
            errors.append(f"{where}: wavenumber {list(k)} does not match d = {d}")
        elif max(abs(v) for v in k) > kmax:
            errors.append(f"{where}: wavenumber {list(k)} outside kmax = {kmax}")


def _check_functional(cfg: ExperimentConfig, errors: list[str]) -> None:
    fn, d, kmax = cfg.functional, cfg.d, cfg.spectral.kmax
    entries = fn.phis or default_phis(d)
    for i, entry in enumerate(entries):
        where = f"functional.phis[{i}]"
        if "modes" in entry:
            _check_modes_within(entry["modes"], d, kmax, where, errors)
        else:
            _check_modes_within([entry], d, kmax, where, errors)
    m = len(entries)
    arity = {
        OuterMap.LINEAR: ("coeffs", fn.coeffs),
        OuterMap.TANH_PRODUCT: ("scales", fn.scales),
        OuterMap.GAUSS_BUMP: ("center", fn.center),
    }.get(fn.outer)
    if arity and arity[1] and len(arity[1]) != m:
        errors.append(f"functional.{arity[0]} has {len(arity[1])} entries, functional has m = {m}")
    if fn.outer is OuterMap.TANH_PRODUCT and fn.shifts and len(fn.shifts) != m:
        errors.append(f"functional.shifts has {len(fn.shifts)} entries, functional has m = {m}")
    if fn.outer is OuterMap.QUADRATIC and fn.radius <= 0:
        errors.append("functional.radius must be > 0")
    if fn.outer is OuterMap.GAUSS_BUMP and fn.width <= 0:
        errors.append("functional.width must be > 0")


def _check_initial(cfg: ExperimentConfig, errors: list[str], warnings: list[str]) -> None:
    ini, d, kmax = cfg.initial, cfg.d, cfg.spectral.kmax
    if ini.density == "cosine":
        if not 0 <= ini.axis < d:
            errors.append(f"initial.axis must lie in 0..{d - 1}, got {ini.axis}")
            return
        if not 1 <= ini.mode <= kmax:
            errors.append(f"initial.mode must lie in 1..kmax, got {ini.mode}")
            return
    if ini.density == "modes":
        before = len(errors)
        _check_modes_within(ini.modes, d, kmax, "initial.modes", errors)
        if len(errors) > before:
            return
    try:
        mu0 = build_initial_density(cfg)
    except FluctlabError as exc:
        errors.append(f"initial: {exc}")
        return
    gmin = grid_minimum(mu0, oversample=4)
    if gmin < -TOL_POS:
        errors.append(f"initial density is negative on the sampling grid (min {gmin:.3e})")
    variant = cfg.drift.variant
    if variant is DriftVariant.BIOT_SAVART and gmin <= 0:
        errors.append("biot_savart needs an initial density bounded away from 0")
    if variant is DriftVariant.COULOMB and not math.isfinite(density_entropy(mu0)):
        errors.append("coulomb needs an initial density with finite entropy")
    if variant is DriftVariant.COULOMB and min(cfg.experiment.N) < 2:
        errors.append("coulomb particle runs need N >= 2")
    if ini.rho0 is Rho0Mode.DIAGONAL and ini.density != "uniform":
        warnings.append("initial.rho0 diagonal matches the CLT covariance only for a uniform density")


def validate_config(cfg: ExperimentConfig) -> tuple[list[str], list[str]]:
    """Validate a resolved config. Returns (errors, warnings)."""
    errors: list[str] = []
    warnings: list[str] = []

    _check_indices(cfg, errors)
    _check_model(cfg, errors)
    _check_drift(cfg, errors, warnings)
    _check_lists(cfg, errors, warnings)
    if cfg.spectral.kmax >= 1:
        _check_functional(cfg, errors)
        _check_initial(cfg, errors, warnings)

    return errors, warnings
