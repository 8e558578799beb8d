"""simulate-particles: run one particle replica and dump its fluctuation field."""

import argparse

from fluctlab._artifacts import ArtifactLayout
from fluctlab._exceptions import ExitCode
from fluctlab._results import trajectory_csv
from fluctlab.commands import Console, emit
from fluctlab.config import ExperimentConfig
from fluctlab.experiments import initial_ensemble, prepare
from fluctlab.particles import ensemble_summary, fluctuation_field, simulate

NAME = "simulate-particles"
HELP = "Simulate one particle replica; optional trajectory CSV."


def run(cfg: ExperimentConfig, console: Console, args: argparse.Namespace) -> int:
    setup = prepare(cfg)
    n = cfg.experiment.n_particles
    replica = getattr(args, "replica", 0)
    ens = initial_ensemble(setup, n, replica)
    ens, snapshots = simulate(
        ens, setup.model, setup.sigma, setup.dt, setup.n_steps,
        record_every=cfg.experiment.record_every,
    )
    rho = fluctuation_field(ens, setup.curve.mus[setup.n_steps])

    layout = ArtifactLayout()
    layout.add_json("summary.json", ensemble_summary(ens))
    layout.add_field("rho_final.json", rho)
    if snapshots:
        layout.add_file("trajectory.csv", trajectory_csv(snapshots, replica))
    console.print_stdout(f"Simulated N={n} particles (replica {replica}) to t={ens.t:g}")
    emit(layout, cfg, NAME, console, extra={"replica": replica, "N": n})
    return ExitCode.OK
