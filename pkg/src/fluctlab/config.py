"""Experiment configuration.

A config file is YAML with one mapping per section::

    run:        {master_seed: 7, output_dir: runs/main, threads: 4}
    model:      {d: 1, sigma: 1.0, t_final: 0.25, dt: 0.001}
    spectral:   {kmax: 16, L_noise: 16, n_mollify: 0, lambda: 2.0}
    drift:      {variant: smooth, preset: sine1d, alpha: 1.0}
    initial:    {density: uniform, init: iid, rho0: clt}
    functional: {outer: tanh_product, scales: [2, 2], shifts: [0.3, 0.3],
                 phis: [{k: [1], kind: cos}, {k: [2], kind: sin}]}
    experiment: {N: [64, 128, 256], particle_replicas: 1000, spde_replicas: 1000}

Every key has a default, so an empty file is a valid d=1 heat-flow config.
``--set section.key=value`` overrides are applied to the raw mapping before
validation; values are parsed as YAML scalars.
"""

import difflib
import logging
import os
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import yaml

from fluctlab._exceptions import ConfigValidationError
from fluctlab._types import (
    DriftVariant,
    InitMode,
    OuterMap,
    PositivityPolicy,
    Rho0Mode,
    SobolevIndices,
    default_lambda,
)
from fluctlab.functionals import (
    CylindricalFunctional,
    GaussBump,
    Linear,
    Outer,
    Quadratic,
    TanhProduct,
)
from fluctlab.kernels import DriftModel
from fluctlab.meanfield import cosine_density, density_from_modes, uniform_density
from fluctlab.spectral import SpectralField

logger = logging.getLogger(__name__)

THREADS_ENV = "FLUCTLAB_THREADS"


# =============================================================================
# Sections
# =============================================================================


def _key(name: str) -> Any:
    """Field metadata naming the YAML key when it differs from the attribute."""
    return {"key": name}


@dataclass(frozen=True)
class RunSection:
    master_seed: int = 0
    output_dir: str = "runs"
    threads: int = 1


@dataclass(frozen=True)
class ModelSection:
    d: int = 1
    sigma: float = 1.0
    t_final: float = 0.25
    dt: float = 0.001


@dataclass(frozen=True)
class SpectralSection:
    kmax: int = 16
    L_noise: Optional[int] = None
    n_mollify: int = 0
    lam: Optional[float] = field(default=None, metadata=_key("lambda"))
    lam_prime: Optional[float] = field(default=None, metadata=_key("lambda_prime"))
    sqrt_kmax: Optional[int] = None
    positivity: PositivityPolicy = PositivityPolicy.ERROR
    tol_pos: float = 1e-8

    @property
    def noise_cutoff(self) -> int:
        return self.kmax if self.L_noise is None else self.L_noise


@dataclass(frozen=True)
class DriftSection:
    variant: DriftVariant = DriftVariant.SMOOTH
    preset: str = "zero"
    alpha: float = 1.0
    sigma_conv: Optional[float] = None
    table: tuple[Mapping[str, Any], ...] = ()
    periodization: str = "ewald"
    image_radius: Optional[int] = None
    ewald_tol: float = 1e-12
    normalization: str = "mean_field"
    capped: bool = False
    eps_cap: float = 1e-3


@dataclass(frozen=True)
class InitialSection:
    density: str = "uniform"
    amplitude: float = 0.0
    axis: int = 0
    mode: int = 1
    modes: tuple[Mapping[str, Any], ...] = ()
    init: InitMode = InitMode.IID
    rho0: Rho0Mode = Rho0Mode.CLT


@dataclass(frozen=True)
class FunctionalSection:
    outer: OuterMap = OuterMap.LINEAR
    coeffs: tuple[float, ...] = ()
    radius: float = 1.0
    scales: tuple[float, ...] = ()
    shifts: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    width: float = 1.0
    phis: tuple[Mapping[str, Any], ...] = ()
    s: Optional[float] = None


@dataclass(frozen=True)
class ExperimentSection:
    N: tuple[int, ...] = (64, 128, 256, 512)
    particle_replicas: int = 200
    spde_replicas: int = 200
    bootstrap: int = 1000
    n_particles: int = 256
    record_every: int = 0
    fd_steps: int = 5
    generator_replicas: int = 200
    ladder: tuple[Mapping[str, Any], ...] = ()
    mollify_levels: tuple[int, ...] = (4, 8, 16)
    coercivity_samples: int = 100
    moment_replicas: int = 50
    energy_N: tuple[int, ...] = (64, 128, 256, 512)
    energy_replicas: int = 200
    clt_N: tuple[int, ...] = (128, 1024)
    clt_replicas: int = 500


_SECTIONS: dict[str, type] = {
    "run": RunSection,
    "model": ModelSection,
    "spectral": SpectralSection,
    "drift": DriftSection,
    "initial": InitialSection,
    "functional": FunctionalSection,
    "experiment": ExperimentSection,
}


def section_keys(section: str) -> dict[str, str]:
    """YAML key -> attribute name for one section."""
    return {f.metadata.get("key", f.name): f.name for f in fields(_SECTIONS[section])}


def _freeze(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    return value


def _build_section(section: str, raw: Mapping[str, Any]) -> Any:
    keys = section_keys(section)
    types = {f.name: f.type for f in fields(_SECTIONS[section])}
    kwargs = {}
    for key, value in raw.items():
        name = keys[key]
        kind = types[name]
        if isinstance(kind, type) and issubclass(kind, Enum):
            value = kind(value)
        kwargs[name] = _freeze(value)
    return _SECTIONS[section](**kwargs)


def _section_dict(obj: Any) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in fields(obj):
        value = getattr(obj, f.name)
        if hasattr(value, "value"):
            value = value.value
        elif isinstance(value, tuple):
            value = [dict(v) if isinstance(v, Mapping) else v for v in value]
        out[f.metadata.get("key", f.name)] = value
    return out


# =============================================================================
# ExperimentConfig
# =============================================================================


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved, validated configuration tree."""

    run: RunSection = field(default_factory=RunSection)
    model: ModelSection = field(default_factory=ModelSection)
    spectral: SpectralSection = field(default_factory=SpectralSection)
    drift: DriftSection = field(default_factory=DriftSection)
    initial: InitialSection = field(default_factory=InitialSection)
    functional: FunctionalSection = field(default_factory=FunctionalSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    @property
    def d(self) -> int:
        return self.model.d

    @property
    def lam(self) -> float:
        return default_lambda(self.d) if self.spectral.lam is None else self.spectral.lam

    @property
    def lam_prime(self) -> float:
        return self.lam + 1.5 if self.spectral.lam_prime is None else self.spectral.lam_prime

    @property
    def indices(self) -> SobolevIndices:
        return SobolevIndices.for_dimension(self.d, self.lam, self.lam_prime)

    @property
    def s_functional(self) -> float:
        return self.indices.s_fluct if self.functional.s is None else self.functional.s

    def with_section(self, name: str, **changes: Any) -> "ExperimentConfig":
        return replace(self, **{name: replace(getattr(self, name), **changes)})

    def to_dict(self) -> dict[str, Any]:
        """Resolved config with derived defaults filled in."""
        data = {name: _section_dict(getattr(self, name)) for name in _SECTIONS}
        data["spectral"]["lambda"] = self.lam
        data["spectral"]["lambda_prime"] = self.lam_prime
        data["spectral"]["L_noise"] = self.spectral.noise_cutoff
        data["spectral"]["sqrt_kmax"] = self.spectral.sqrt_kmax or 2 * self.spectral.kmax
        data["functional"]["s"] = self.s_functional
        return data


# =============================================================================
# Loading
# =============================================================================


def unknown_keys(raw: Mapping[str, Any]) -> list[str]:
    """Errors for unknown sections and keys, each with the nearest valid name."""
    errors: list[str] = []
    for name, body in raw.items():
        if name not in _SECTIONS:
            errors.append(_unknown(name, list(_SECTIONS), "section"))
            continue
        if not isinstance(body, Mapping):
            continue
        valid = list(section_keys(name))
        for key in body:
            if key not in valid:
                errors.append(_unknown(f"{name}.{key}", [f"{name}.{v}" for v in valid], "key"))
    return errors


def _unknown(name: str, valid: Sequence[str], what: str) -> str:
    close = difflib.get_close_matches(name, valid, n=1)
    hint = f" (did you mean {close[0]!r}?)" if close else ""
    return f"Unknown {what} {name!r}{hint}"


def apply_overrides(raw: Mapping[str, Any], overrides: Sequence[str]) -> dict[str, Any]:
    """Apply ``section.key=value`` assignments to a copy of the raw mapping."""
    data: dict[str, Any] = {k: dict(v) if isinstance(v, Mapping) else v for k, v in raw.items()}
    for item in overrides:
        path, sep, text = item.partition("=")
        parts = path.strip().split(".")
        if not sep or len(parts) != 2 or not all(parts):
            raise ConfigValidationError(
                f"override {item!r} must look like section.key=value", field="--set"
            )
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigValidationError(f"cannot parse override value {text!r}: {exc}", field=path)
        section = data.setdefault(parts[0], {})
        if not isinstance(section, dict):
            raise ConfigValidationError(f"section {parts[0]!r} is not a mapping", field=parts[0])
        section[parts[1]] = value
    return data


def config_from_mapping(raw: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a raw mapping and build the resolved config.

    Raises ConfigValidationError carrying every violated constraint.
    """
    from fluctlab._validation import validate_config, validate_schema

    errors = unknown_keys(raw)
    if not errors:
        errors.extend(validate_schema(raw))
    if errors:
        raise ConfigValidationError(f"{len(errors)} configuration error(s)", errors=errors)

    sections = {name: _build_section(name, raw.get(name) or {}) for name in _SECTIONS}
    cfg = ExperimentConfig(**sections)
    errors, warnings = validate_config(cfg)
    for warning in warnings:
        logger.warning("config: %s", warning)
    if errors:
        raise ConfigValidationError(f"{len(errors)} configuration error(s)", errors=errors)
    return cfg


def load_raw(path: Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigValidationError(f"cannot read config: {exc}", field=str(path))
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigValidationError(f"malformed YAML: {exc}", field=str(path))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigValidationError("config must be a mapping of sections", field=str(path))
    return data


def resolve_threads(cli_value: Optional[int], env: Optional[Mapping[str, str]] = None) -> Optional[int]:
    """--threads, falling back to FLUCTLAB_THREADS."""
    if cli_value is not None:
        return cli_value
    env = os.environ if env is None else env
    text = env.get(THREADS_ENV)
    if not text:
        return None
    try:
        return int(text)
    except ValueError:
        raise ConfigValidationError(f"{THREADS_ENV}={text!r} is not an integer", field=THREADS_ENV)


def parse_config(
    path: Optional[Path],
    overrides: Sequence[str] = (),
    *,
    seed: Optional[int] = None,
    out: Optional[str] = None,
    threads: Optional[int] = None,
) -> ExperimentConfig:
    """Load, override and validate; ``path=None`` starts from the defaults."""
    raw = load_raw(path) if path is not None else {}
    raw = apply_overrides(raw, overrides)
    run = raw.setdefault("run", {})
    if not isinstance(run, dict):
        raise ConfigValidationError("section 'run' must be a mapping", field="run")
    if seed is not None:
        run["master_seed"] = seed
    if out is not None:
        run["output_dir"] = out
    if threads is not None:
        run["threads"] = threads
    cfg = config_from_mapping(raw)
    logger.info("config resolved: d=%d kmax=%d seed=%d", cfg.d, cfg.spectral.kmax, cfg.run.master_seed)
    return cfg


def default_config(**sections: Mapping[str, Any]) -> ExperimentConfig:
    """Validated config from keyword sections, e.g. ``default_config(model={"d": 2})``."""
    return config_from_mapping({k: dict(v) for k, v in sections.items()})


# =============================================================================
# Builders
# =============================================================================


def mode_table(entries: Sequence[Mapping[str, Any]]) -> dict[tuple[int, ...], complex]:
    """{k: re + i im} from ``[{k: [...], re: x, im: y}, ...]``."""
    return {
        tuple(int(v) for v in e["k"]): complex(float(e.get("re", 0.0)), float(e.get("im", 0.0)))
        for e in entries
    }


def build_drift_model(cfg: ExperimentConfig) -> DriftModel:
    dr = cfg.drift
    options = {
        "periodization": dr.periodization,
        "image_radius": dr.image_radius,
        "ewald_tol": dr.ewald_tol,
        "normalization": dr.normalization,
        "capped": dr.capped,
        "eps_cap": dr.eps_cap,
    }
    if dr.variant is DriftVariant.SMOOTH:
        table = None
        if dr.preset == "table":
            table = {
                tuple(int(v) for v in e["k"]): tuple(complex(re, im) for re, im in e["value"])
                for e in dr.table
            }
        return DriftModel.smooth(
            cfg.d, dr.preset, alpha=dr.alpha, sigma_conv=dr.sigma_conv, table=table, **options
        )
    if dr.variant is DriftVariant.BIOT_SAVART:
        return DriftModel.biot_savart(**options)
    return DriftModel.coulomb(cfg.d, **options)


def build_initial_density(cfg: ExperimentConfig, kmax: Optional[int] = None) -> SpectralField:
    ini = cfg.initial
    kmax = cfg.spectral.kmax if kmax is None else kmax
    if ini.density == "cosine":
        return cosine_density(cfg.d, kmax, ini.amplitude, axis=ini.axis, mode=ini.mode)
    if ini.density == "modes":
        return density_from_modes(cfg.d, kmax, mode_table(ini.modes))
    return uniform_density(cfg.d, kmax)


def default_phis(d: int) -> tuple[dict[str, Any], ...]:
    return ({"k": [1] + [0] * (d - 1), "kind": "cos"},)


def build_test_function(entry: Mapping[str, Any], d: int, kmax: int) -> SpectralField:
    """cos/sin mode ``scale * trig(2 pi k.x)`` or an inline mode table."""
    if "modes" in entry:
        return SpectralField.from_modes(d, kmax, mode_table(entry["modes"]), hermitian=True)
    k = tuple(int(v) for v in entry["k"])
    minus = tuple(-v for v in k)
    scale = float(entry.get("scale", 1.0))
    if not any(k):
        value = scale if entry.get("kind", "cos") == "cos" else 0.0
        return SpectralField.from_modes(d, kmax, {k: value})
    if entry.get("kind", "cos") == "sin":
        return SpectralField.from_modes(d, kmax, {k: -0.5j * scale, minus: 0.5j * scale})
    return SpectralField.from_modes(d, kmax, {k: 0.5 * scale, minus: 0.5 * scale})


def build_outer(cfg: ExperimentConfig, m: int) -> Outer:
    fn = cfg.functional
    if fn.outer is OuterMap.QUADRATIC:
        return Quadratic(fn.radius)
    if fn.outer is OuterMap.TANH_PRODUCT:
        return TanhProduct(fn.scales or (1.0,) * m, fn.shifts or (0.0,) * m)
    if fn.outer is OuterMap.GAUSS_BUMP:
        return GaussBump(fn.center or (0.0,) * m, fn.width)
    return Linear(fn.coeffs or (1.0,) * m)


def build_functional(cfg: ExperimentConfig, kmax: Optional[int] = None) -> CylindricalFunctional:
    kmax = cfg.spectral.kmax if kmax is None else kmax
    entries = cfg.functional.phis or default_phis(cfg.d)
    phis = tuple(build_test_function(e, cfg.d, kmax) for e in entries)
    return CylindricalFunctional(phis, build_outer(cfg, len(phis)), cfg.s_functional)
