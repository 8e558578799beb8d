"""refine: discretization ladder and the supporting SPDE studies."""

import argparse

from fluctlab._artifacts import ArtifactLayout
from fluctlab._exceptions import ExitCode
from fluctlab._results import records_csv
from fluctlab.commands import Console, emit
from fluctlab.config import ExperimentConfig
from fluctlab.experiments import (
    coercivity_study,
    generator_check,
    moment_bound_study,
    refinement_study,
)

NAME = "refine"
HELP = "Refinement ladder (default) or the coercivity / moment-bound / generator studies."

STUDIES = ("ladder", "coercivity", "moments", "generator")


def run(cfg: ExperimentConfig, console: Console, args: argparse.Namespace) -> int:
    study = getattr(args, "study", "ladder")
    layout = ArtifactLayout()

    if study == "coercivity":
        levels = coercivity_study(cfg)
        for level in levels:
            console.print_stdout(f"n={level.n:<4d} C={level.C:.5g} delta={level.delta:.5g} min margin {level.min_margin:.3g}")
        layout.add_file("coercivity.csv", records_csv(levels))
    elif study == "moments":
        levels = moment_bound_study(cfg)
        for level in levels:
            console.print_stdout(f"n={level.n:<4d} E sup|rho|^2={level.sup_norm2:.5g} +- {level.se:.2g} ratio {level.ratio:.4g}")
        layout.add_file("moments.csv", records_csv(levels))
    elif study == "generator":
        checks = generator_check(cfg)
        for check in checks:
            console.print_stdout(
                f"{check.side:<9s} fd={check.fd:+.5g} +- {check.fd_se:.2g}  "
                f"generator={check.generator:+.5g} +- {check.generator_se:.2g}  z={check.z:+.2f}"
            )
        layout.add_file("generator.csv", records_csv(checks))
    else:
        levels = refinement_study(cfg)
        for level in levels:
            diff = "" if level.diff is None else f" diff={level.diff:+.3e} +- {level.diff_se:.2e}"
            mark = "  STALLED" if level.stalled else ""
            console.print_stdout(f"kmax={level.kmax:<4d} L={level.L_noise:<4d} n={level.n_mollify:<3d} dt={level.dt:g} E Phi={level.estimate:.6g}{diff}{mark}")
        layout.add_file("refinement.csv", records_csv(levels))

    emit(layout, cfg, NAME, console, extra={"study": study})
    return ExitCode.OK
