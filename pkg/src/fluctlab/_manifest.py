"""Run manifest generation (pure, no file I/O).

Every artifact directory holds exactly one ``manifest.json``::

    {
      "subcommand": "weak-error",
      "version": "0.1.0",
      "content_hash": "sha256:…",
      "master_seed": 7,
      "threads": 4,
      "config": {...resolved config...},
      "outputs": ["weak_error.csv", "weak_error.dat", "fit.json"],
      "extra": {"spde_pool": {"replicas": 1000, "shared_across_rows": true}}
    }
"""

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from fluctlab.__about__ import __version__
from fluctlab.config import ExperimentConfig

MANIFEST_NAME = "manifest.json"


def canonical_json(data: Any) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def content_hash(subcommand: str, config: Mapping[str, Any]) -> str:
    """sha256 over the canonical JSON of (subcommand, resolved config)."""
    digest = hashlib.sha256(canonical_json({"subcommand": subcommand, "config": config}).encode("utf-8"))
    return f"sha256:{digest.hexdigest()}"


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    config: Mapping[str, Any]
    master_seed: int
    threads: int
    outputs: tuple[str, ...] = ()
    extra: Mapping[str, Any] = field(default_factory=dict)
    version: str = __version__

    @classmethod
    def for_run(
        cls,
        subcommand: str,
        cfg: ExperimentConfig,
        *,
        extra: Optional[Mapping[str, Any]] = None,
    ) -> "RunManifest":
        return cls(
            subcommand=subcommand,
            config=cfg.to_dict(),
            master_seed=cfg.run.master_seed,
            threads=cfg.run.threads,
            extra=dict(extra or {}),
        )

    @property
    def content_hash(self) -> str:
        return content_hash(self.subcommand, self.config)

    def to_dict(self) -> dict[str, Any]:
        return {
            "subcommand": self.subcommand,
            "version": self.version,
            "content_hash": self.content_hash,
            "master_seed": self.master_seed,
            "threads": self.threads,
            "config": dict(self.config),
            "outputs": list(self.outputs),
            "extra": dict(self.extra),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def parse_manifest(content: str) -> dict[str, Any]:
    """Load a manifest and verify its hash against the embedded config.

    Raises:
        ValueError: If a required key is missing or the hash does not match.
    """
    data = json.loads(content)
    for key in ("subcommand", "config", "content_hash", "master_seed"):
        if key not in data:
            raise ValueError(f"manifest lacks {key!r}")
    expected = content_hash(data["subcommand"], data["config"])
    if data["content_hash"] != expected:
        raise ValueError(f"manifest hash {data['content_hash']} does not match its config ({expected})")
    return data
