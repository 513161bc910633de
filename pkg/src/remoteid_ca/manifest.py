"""Run manifests: every emitted data file is owned by exactly one manifest."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__

__all__ = ["RunManifest", "write_manifest"]

MANIFEST_VERSION = 1


@dataclass
class RunManifest:
    command: str
    config_digest: str
    seeds: list[int]
    outputs: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    artifact_version: str = __version__
    manifest_version: int = MANIFEST_VERSION
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "manifest_version": self.manifest_version,
            "artifact_version": self.artifact_version,
            "command": self.command,
            "config_digest": self.config_digest,
            "seeds": list(self.seeds),
            "outputs": sorted(self.outputs),
            "wall_clock_s": round(self.wall_clock_s, 3),
            **({"extra": self.extra} if self.extra else {}),
        }


def write_manifest(manifest: RunManifest, out_dir: Path, started: float) -> Path:
    manifest.wall_clock_s = time.time() - started
    path = out_dir / f"{manifest.command}_manifest.json"
    path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    return path
