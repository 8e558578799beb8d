"""selftest: fast deterministic checks of every module, PASS/FAIL per check."""

import argparse
import math
from typing import Callable

import numpy as np

from fluctlab._exceptions import ConfigValidationError, ExitCode, FluctlabError
from fluctlab._rng import stream
from fluctlab.commands import Console
from fluctlab.config import ExperimentConfig, build_functional, default_config
from fluctlab.experiments import fit_loglog, prepare
from fluctlab.functionals import generator_spde
from fluctlab.kernels import DriftModel, drift_at_particles, image_sum_kernel, periodic_kernel
from fluctlab.meanfield import cosine_density, solve_fp
from fluctlab.particles import ParticleEnsemble, step_em
from fluctlab.spde import apply_A, apply_Aprime
from fluctlab.spectral import SpectralField, mollifier_symbol, mollify, pairing, sobolev_inner, sobolev_norm

NAME = "selftest"
HELP = "Run fast deterministic checks of every module."


class CheckFailed(Exception):
    pass


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise CheckFailed(message)


def check_heat_decay() -> str:
    sigma, t_final = 1.0, 0.05
    mu0 = cosine_density(1, 8, 0.5)
    curve = solve_fp(mu0, DriftModel.smooth(1, "zero"), sigma, [0.0, t_final], dt=0.01)
    expected = 0.25 * math.exp(-2.0 * math.pi**2 * sigma**2 * t_final)
    err = abs(curve.mus[-1].coeff((1,)).real - expected) / expected
    _require(err < 1e-12, f"relative error {err:.2e}")
    return f"relative error {err:.1e}"


def check_mollifier() -> str:
    rng = stream(0, "selftest", 1)
    f = SpectralField.random(2, 8, rng)
    g = SpectralField.random(2, 8, rng)
    n = 4
    _require(np.allclose(mollify(f, n).coeffs, mollifier_symbol(2, 8, n) * f.coeffs, atol=1e-12), "eigen-action")
    lhs = sobolev_inner(mollify(f, n), g, -1.5)
    rhs = sobolev_inner(f, mollify(g, n), -1.5)
    _require(abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs)), "self-adjointness")
    _require(sobolev_norm(mollify(f, n), -1.5) <= sobolev_norm(f, -1.5) + 1e-12, "contraction")
    _require(np.array_equal(mollify(f, 12).coeffs, f.coeffs), "identity beyond bandwidth")
    return "eigen-action, self-adjoint, contraction, identity"


def check_duality() -> str:
    rng = stream(0, "selftest", 2)
    model = DriftModel.smooth(1, "sine1d", alpha=1.0)
    mu = cosine_density(1, 12, 0.3)
    worst = 0.0
    for _ in range(10):
        f = SpectralField.random(1, 12, rng, decay=1.0)
        phi = SpectralField.random(1, 12, rng, decay=1.0)
        lhs = pairing(apply_A(0.0, f, mu, model, 0.8), phi)
        rhs = pairing(f, apply_Aprime(0.0, phi, mu, model, 0.8))
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    _require(worst < 1e-10, f"mismatch {worst:.2e}")
    return f"max mismatch {worst:.1e}"


def check_trace_paths() -> str:
    cfg = default_config(model={"t_final": 0.01, "dt": 0.005}, functional={"outer": "quadratic"})
    setup = prepare(cfg)
    Phi = build_functional(cfg)
    f = SpectralField.random(1, cfg.spectral.kmax, stream(0, "selftest", 3), decay=2.0)
    terms = generator_spde(Phi, f, 0.0, 0, setup.curve.mus[0], setup.noise, setup.model)
    _require(terms.diagonal_check is not None, "trace cross-check did not run")
    return f"trace {2 * terms.diagonal:.6g}"


def check_vortex_kernel() -> str:
    spectral = DriftModel.biot_savart()
    images = DriftModel.biot_savart(periodization="images")
    x = np.array([[0.1, 0.23], [0.37, -0.2]])
    gap = float(np.max(np.abs(periodic_kernel(spectral, x) - image_sum_kernel(images, x))))
    _require(gap < 1e-4, f"ewald vs image sum {gap:.2e}")
    return f"ewald vs image sum {gap:.1e}"


def check_particles() -> str:
    lone = drift_at_particles(DriftModel.smooth(1, "sine1d"), np.array([[0.3]]))
    _require(np.array_equal(lone, np.zeros((1, 1))), "N = 1 has non-zero drift")
    ens = ParticleEnsemble(stream(0, "selftest", 4).random((5, 2)))
    out = step_em(ens, DriftModel.smooth(2, "zero"), 0.01, 0.0)
    _require(np.array_equal(out.positions, ens.positions), "sigma = 0 without drift moved particles")
    return "N = 1 drift zero, sigma = 0 zero drift is static"


def check_rate_fit() -> str:
    ns = [64, 128, 256, 512]
    half = fit_loglog(ns, [0.7 / math.sqrt(n) for n in ns])
    full = fit_loglog(ns, [0.7 / n for n in ns])
    _require(abs(half.slope + 0.5) < 1e-12, f"c/sqrt(N) slope {half.slope!r}")
    _require(abs(full.slope + 1.0) < 1e-12, f"c/N slope {full.slope!r}")
    return "synthetic slopes -0.5 and -1"


def check_streams() -> str:
    a = stream(7, "spde", 3).standard_normal(4)
    b = stream(7, "spde", 3).standard_normal(4)
    c = stream(7, "spde", 4).standard_normal(4)
    _require(np.array_equal(a, b), "same key gave different draws")
    _require(not np.array_equal(a, c), "different replicas share draws")
    return "replica streams reproducible and distinct"


def check_config() -> str:
    default_config()
    try:
        default_config(spectral={"lambda": 1.4})
    except ConfigValidationError as exc:
        _require(any("lambda > 1.5*d" in e for e in exc.errors), "lambda bound not cited")
        return "defaults valid, lambda bound enforced"
    raise CheckFailed("lambda = 1.4 accepted for d = 1")


CHECKS: tuple[tuple[str, Callable[[], str]], ...] = (
    ("meanfield.heat_decay", check_heat_decay),
    ("spectral.mollifier", check_mollifier),
    ("spde.duality", check_duality),
    ("functionals.trace_paths", check_trace_paths),
    ("kernels.vortex", check_vortex_kernel),
    ("particles.trivial", check_particles),
    ("experiments.rate_fit", check_rate_fit),
    ("rng.streams", check_streams),
    ("cli.config", check_config),
)


def run(cfg: ExperimentConfig, console: Console, args: argparse.Namespace) -> int:
    failures = 0
    for name, check in CHECKS:
        try:
            detail = check()
        except (CheckFailed, FluctlabError) as exc:
            failures += 1
            console.print_stderr(f"FAIL  {name}")
            console.print_stderr(f"  ERROR: {exc}")
            continue
        console.print_stdout(f"PASS  {name}  ({detail})")

    if failures:
        console.print_stderr(f"\n{failures} of {len(CHECKS)} check(s) failed.")
        return ExitCode.NUMERICAL
    console.print_stdout(f"\nAll {len(CHECKS)} check(s) passed.")
    return ExitCode.OK
