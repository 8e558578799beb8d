"""Shared fixtures: seeded generators, small lattices and cheap configs."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from fluctlab._rng import stream
from fluctlab.config import ExperimentConfig, default_config

SMALL_SECTIONS = {
    "run": {"master_seed": 11},
    "model": {"d": 1, "sigma": 1.0, "t_final": 0.02, "dt": 0.005},
    "spectral": {"kmax": 6},
    "experiment": {
        "N": [16, 32, 64],
        "particle_replicas": 6,
        "spde_replicas": 6,
        "bootstrap": 20,
        "n_particles": 16,
        "generator_replicas": 4,
        "fd_steps": 2,
        "mollify_levels": [2, 4],
        "coercivity_samples": 8,
        "moment_replicas": 3,
        "clt_N": [16],
        "clt_replicas": 8,
        "energy_N": [8, 16, 32],
        "energy_replicas": 4,
    },
}


def small_sections(**changes: dict) -> dict:
    """SMALL_SECTIONS with per-section updates merged in."""
    out = {name: dict(body) for name, body in SMALL_SECTIONS.items()}
    for name, body in changes.items():
        out.setdefault(name, {}).update(body)
    return out


@pytest.fixture
def rng() -> np.random.Generator:
    return stream(1234, "tests")


@pytest.fixture
def small_cfg() -> ExperimentConfig:
    return default_config(**small_sections())


@pytest.fixture
def write_config(tmp_path: Path):
    """Write YAML text to a config file and return its path."""

    def _write(text: str, name: str = "config.yaml") -> Path:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
