"""clt-baseline: variance of <rho, phi> against the i.i.d. value for drift-free runs."""

import argparse

from fluctlab._artifacts import ArtifactLayout
from fluctlab._exceptions import ExitCode
from fluctlab._results import records_csv
from fluctlab.commands import Console, emit
from fluctlab.config import ExperimentConfig
from fluctlab.experiments import clt_baseline

NAME = "clt-baseline"
HELP = "Particle and SPDE variances of <rho, phi> versus quadrature (drift preset zero)."

Z_LIMIT = 3.0


def run(cfg: ExperimentConfig, console: Console, args: argparse.Namespace) -> int:
    report = clt_baseline(cfg)
    console.print_stdout(f"quadrature variance {report.value:.6g}")
    for row in report.rows:
        status = "PASS" if abs(row.z) < Z_LIMIT else "FAIL"
        label = row.side if row.N is None else f"{row.side} N={row.N}"
        console.print_stdout(f"{status}  {label:<18s} var={row.variance:.6g} +- {row.se:.2g}  z={row.z:+.2f}")

    layout = ArtifactLayout()
    layout.add_file("clt.csv", records_csv(report.rows))
    layout.add_json("clt.json", report.to_dict())
    emit(layout, cfg, NAME, console)
    return ExitCode.OK
