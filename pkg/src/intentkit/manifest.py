"""Reproducibility manifests: every CLI run records its resolved config,
seeds, input digests, tool version, and wall-clock duration next to its
output (`<output stem>.manifest.json`, or `manifest.json` in directory
outputs). Rerunning with an identical manifest reproduces identical outputs,
duration aside."""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path
from typing import Any

from . import __version__


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_path_for(out_path: str | Path) -> Path:
    out = Path(out_path)
    if out.suffix:
        return out.with_name(out.stem + ".manifest.json")
    return out / "manifest.json"


def write_manifest(
    out_path: str | Path,
    subcommand: str,
    config: dict[str, Any],
    seeds: dict[str, int] | None = None,
    inputs: list[str | Path] | None = None,
    started: float | None = None,
    stats: dict[str, Any] | None = None,
) -> Path:
    manifest = {
        "tool": "intentkit",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "seeds": seeds or {},
        "input_digests": {str(p): file_digest(p) for p in (inputs or [])},
        "duration_s": round(time.perf_counter() - started, 6) if started is not None else None,
    }
    if stats:
        manifest["stats"] = stats
    path = manifest_path_for(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
