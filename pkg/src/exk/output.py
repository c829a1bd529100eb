"""Deterministic file emission: fixed-format CSVs, plot data and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

__all__ = ["fmt", "write_table", "write_plot_data", "write_manifest"]


def fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def write_table(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(float(v)) if hasattr(v, "dtype") else fmt(v) for v in row])
    return path


def write_plot_data(path, series) -> Path:
    """Two columns ``t,value`` for one series of ``(t, value)`` pairs."""
    return write_table(path, ["t", "value"], ((float(t), float(v)) for t, v in series))


def write_manifest(out_dir, files, document: dict, config_hash: str, seed: int, extra: dict | None = None) -> Path:
    out_dir = Path(out_dir)
    entries = []
    for f in sorted(Path(f) for f in files):
        entries.append({"path": f.relative_to(out_dir).as_posix(), "sha256": hashlib.sha256(f.read_bytes()).hexdigest()})
    manifest = {
        "command": document.get("command"),
        "config": document,
        "config_hash": config_hash,
        "seed": seed,
        "files": entries,
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
