"""Run manifests: enough provenance to reproduce a pipeline stage.

A manifest records the resolved configuration, SHA-256 digests of every
input and output file, the tool version, and the stage's counters.  No
timestamps or absolute paths appear, so a rerun of the same stage on
the same inputs writes a byte-identical manifest — the reproducibility
check is a plain file comparison.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__

__all__ = ["sha256_file", "build_manifest", "write_manifest"]


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def build_manifest(
    command: str,
    config: dict,
    inputs: list[str | Path],
    outputs: list[str | Path],
    stats: dict,
) -> dict:
    """Assemble a manifest dict; files are keyed by basename."""
    return {
        "tool": "retroplan",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {Path(p).name: sha256_file(p) for p in inputs},
        "outputs": {Path(p).name: sha256_file(p) for p in outputs},
        "stats": stats,
    }


def write_manifest(path: str | Path, manifest: dict) -> None:
    Path(path).write_bytes(
        (json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")
    )
