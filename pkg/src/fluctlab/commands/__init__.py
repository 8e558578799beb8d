"""Subcommand handlers; one module per subcommand.

Every handler exposes ``run(cfg, console, args) -> int`` and writes its
artifacts through ``emit`` so each artifact directory gets one manifest.
"""

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, TextIO

from fluctlab._artifacts import ArtifactLayout, write_layout
from fluctlab._manifest import RunManifest
from fluctlab.config import ExperimentConfig


@dataclass
class Console:
    stdout: TextIO = field(default_factory=lambda: sys.stdout)
    stderr: TextIO = field(default_factory=lambda: sys.stderr)

    def print_stdout(self, text: str) -> None:
        print(text, file=self.stdout)

    def print_stderr(self, text: str) -> None:
        print(text, file=self.stderr)


def artifact_dir(cfg: ExperimentConfig, subcommand: str) -> Path:
    return Path(cfg.run.output_dir) / subcommand


def emit(
    layout: ArtifactLayout,
    cfg: ExperimentConfig,
    subcommand: str,
    console: Console,
    *,
    extra: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Finalize the layout with its manifest and write it."""
    manifest = layout.finalize(RunManifest.for_run(subcommand, cfg, extra=extra))
    root = artifact_dir(cfg, subcommand)
    write_layout(layout, root)
    console.print_stdout(f"Wrote {len(manifest.outputs)} output(s) + manifest to {root} ({manifest.content_hash[:19]})")
    return root
