"""Run manifests: every command echoes its resolved parameters plus a
content hash of its inputs into ``run.json`` so sweeps stay auditable."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def content_hash(path: str | Path) -> str:
    """sha256 over a file, or over a directory's files in sorted order."""
    h = hashlib.sha256()
    path = Path(path)
    files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for p in files:
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def write_run_manifest(
    out_dir: str | Path,
    command: str,
    params: dict,
    inputs: list[str | Path] = (),
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "params": params,
        "inputs": {str(p): content_hash(p) for p in inputs},
    }
    target = out / "run.json"
    with open(target, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return target
