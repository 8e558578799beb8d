"""Artifact directory assembly.

A layout is collected in memory and written in one pass::

    <output_dir>/
        manifest.json          (always, exactly one)
        weak_error.csv
        weak_error.dat
        fit.json
        curve/
            index.json
            t00000.json
            ...
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

from fluctlab._exceptions import DomainError
from fluctlab._fielddump import field_to_bytes, field_to_json
from fluctlab._manifest import MANIFEST_NAME, RunManifest
from fluctlab.meanfield import MeanFieldCurve
from fluctlab.spectral import SpectralField

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArtifactFile:
    relative_path: str
    content: Union[str, bytes]


@dataclass
class ArtifactLayout:
    """Files of one run; ``finalize`` appends the manifest listing them."""

    files: list[ArtifactFile] = field(default_factory=list)
    directories: list[str] = field(default_factory=list)
    finalized: bool = False

    def add_file(self, relative_path: str, content: Union[str, bytes]) -> None:
        if self.finalized:
            raise DomainError(f"layout is finalized; cannot add {relative_path}")
        if relative_path == MANIFEST_NAME:
            raise DomainError(f"{MANIFEST_NAME} is written by finalize()")
        if any(f.relative_path == relative_path for f in self.files):
            raise DomainError(f"duplicate artifact path {relative_path}")
        self.files.append(ArtifactFile(relative_path, content))

    def add_json(self, relative_path: str, data: Any) -> None:
        self.add_file(relative_path, json.dumps(data, indent=2, sort_keys=True) + "\n")

    def add_directory(self, relative_path: str) -> None:
        self.directories.append(relative_path)

    def add_field(self, relative_path: str, f: SpectralField, *, binary: bool = False) -> None:
        self.add_file(relative_path, field_to_bytes(f) if binary else field_to_json(f))

    def add_curve(self, curve: MeanFieldCurve, prefix: str = "curve") -> None:
        """One field dump per output time plus ``index.json``."""
        self.add_directory(prefix)
        for i, mu in enumerate(curve.mus):
            self.add_field(f"{prefix}/t{i:05d}.json", mu)
        self.add_json(f"{prefix}/index.json", curve.index_dict())

    def finalize(self, manifest: RunManifest) -> RunManifest:
        if self.finalized:
            raise DomainError("layout already carries a manifest")
        manifest = RunManifest(
            subcommand=manifest.subcommand,
            config=manifest.config,
            master_seed=manifest.master_seed,
            threads=manifest.threads,
            outputs=tuple(f.relative_path for f in self.files),
            extra=manifest.extra,
            version=manifest.version,
        )
        self.files.append(ArtifactFile(MANIFEST_NAME, manifest.to_json()))
        self.finalized = True
        return manifest

    def file_map(self) -> dict[str, Union[str, bytes]]:
        return {f.relative_path: f.content for f in self.files}


def write_layout(layout: ArtifactLayout, root: Path) -> list[Path]:
    """Write a finalized layout below ``root``; returns the written paths."""
    if not layout.finalized:
        raise DomainError("layout must be finalized before writing")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for directory in layout.directories:
        (root / directory).mkdir(parents=True, exist_ok=True)
    written = []
    for f in layout.files:
        path = root / f.relative_path
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(f.content, bytes):
            path.write_bytes(f.content)
        else:
            path.write_text(f.content, encoding="utf-8", newline="\n")
        written.append(path)
    logger.info("wrote %d artifact(s) to %s", len(written), root)
    return written
