"""Run manifests: resolved configuration written before any result file.

A manifest plus its master seed reproduces the run's outputs byte for byte
on the same build; artifact checksums are filled in once the artifacts
exist.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

MANIFEST_NAME = "manifest.json"


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    master_seed: int | None
    workers: int
    out_dir: str
    artifacts: dict = field(default_factory=dict)

    def _payload(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "config": self.config,
            "master_seed": self.master_seed,
            "workers": self.workers,
            "out_dir": self.out_dir,
            "artifacts": self.artifacts,
        }

    def write(self, directory) -> Path:
        path = Path(directory) / MANIFEST_NAME
        with open(path, "w") as fh:
            json.dump(self._payload(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    def finalize(self, directory, artifact_names) -> Path:
        """Record artifact checksums and rewrite the manifest."""
        directory = Path(directory)
        self.artifacts = {
            name: _sha256(directory / name)
            for name in sorted(artifact_names)
            if (directory / name).exists()
        }
        return self.write(directory)
