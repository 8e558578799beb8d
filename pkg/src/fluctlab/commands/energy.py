"""modulated-energy: decay of the Coulomb modulated energy of i.i.d. samples."""

import argparse

from fluctlab._artifacts import ArtifactLayout
from fluctlab._exceptions import ExitCode
from fluctlab._results import records_csv, records_dat
from fluctlab.commands import Console, emit
from fluctlab.config import ExperimentConfig
from fluctlab.experiments import fluctuation_rate_factor, modulated_energy_study

NAME = "modulated-energy"
HELP = "E F_N and E|F_N| over N with the fitted decay exponent (coulomb drift)."


def run(cfg: ExperimentConfig, console: Console, args: argparse.Namespace) -> int:
    report = modulated_energy_study(cfg)
    for row in report.rows:
        console.print_stdout(
            f"N={row.N:<6d} E F_N={row.mean:+.4e} +- {row.se:.1e}  E|F_N|={row.mean_abs:.4e}  "
            f"gamma={fluctuation_rate_factor(cfg.d, row.N):.4g}"
        )
    fit = report.fit
    console.print_stdout(
        f"\nexponent {fit.slope:.4f} (95% CI {fit.slope_ci[0]:.4f} .. {fit.slope_ci[1]:.4f}), "
        f"reference {report.reference_exponent:.4f}"
    )

    layout = ArtifactLayout()
    layout.add_file("energy.csv", records_csv(report.rows))
    layout.add_file("energy.dat", records_dat(report.rows))
    layout.add_json("fit.json", report.to_dict())
    emit(layout, cfg, NAME, console)
    return ExitCode.OK
