from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import platform
from importlib import metadata
from typing import Dict, Iterable, List, Optional, Sequence

import jsonschema
import matplotlib
import numpy as np
import scipy

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # pylint: disable=wrong-import-position

MAX_POLYLINES = 64
MANIFEST_NAME = "manifest.json"
SVG_HASH_SALT = "stickyflow"

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["command", "config", "versions", "wall_time", "metrics", "files"],
    "properties": {
        "command": {"type": "string"},
        "config": {"type": "object"},
        "versions": {
            "type": "object",
            "required": ["stickyflow", "python", "numpy", "scipy", "matplotlib"],
            "additionalProperties": {"type": "string"},
        },
        "wall_time": {"type": "number", "minimum": 0},
        "metrics": {"type": "object"},
        "files": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "size", "sha256"],
                "properties": {
                    "name": {"type": "string"},
                    "size": {"type": "integer", "minimum": 0},
                    "sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                },
            },
        },
    },
}


def format_cell(value) -> str:
    """Shortest round-trip text for floats, plain text for everything else."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer, np.bool_)):
        return str(value.item())
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    with open(path, "w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(value) for value in row])
    logging.debug("Wrote %s", path)
    return path


def write_json(path: str, payload: Dict) -> str:
    with open(path, "w", encoding="utf-8") as file:
        json.dump(payload, file, indent=2, sort_keys=True)
        file.write("\n")
    logging.debug("Wrote %s", path)
    return path


def polyline_columns(n_columns: int, limit: int = MAX_POLYLINES) -> np.ndarray:
    return np.unique(np.linspace(0, n_columns - 1, min(n_columns, limit)).round().astype(int))


def write_spacetime_svg(path: str, times: Sequence[float], positions: np.ndarray, title: str = "") -> str:
    """Space-time trajectories of at most MAX_POLYLINES evenly chosen columns of positions."""
    positions = np.asarray(positions, dtype=float)
    times = np.asarray(times, dtype=float)
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 6))
        for column in polyline_columns(positions.shape[1]):
            ax.plot(positions[:, column], times, color="black", linewidth=0.6)
        ax.set_xlabel("x")
        ax.set_ylabel("t")
        if title:
            ax.set_title(title)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    logging.debug("Wrote %s", path)
    return path


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as file:
        for chunk in iter(lambda: file.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def package_version() -> str:
    try:
        return metadata.version("stickyflow")
    except metadata.PackageNotFoundError:
        return "unknown"


def versions() -> Dict[str, str]:
    return {
        "stickyflow": package_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
    }


def write_manifest(
    out_dir: str,
    command: str,
    config: Dict,
    files: List[str],
    wall_time: float,
    metrics: Optional[Dict] = None,
) -> str:
    entries = [
        {"name": os.path.relpath(path, out_dir), "size": os.path.getsize(path), "sha256": sha256_file(path)}
        for path in sorted(files)
    ]
    manifest = {
        "command": command,
        "config": config,
        "versions": versions(),
        "wall_time": wall_time,
        "metrics": metrics or {},
        "files": entries,
    }
    jsonschema.validate(manifest, MANIFEST_SCHEMA)
    return write_json(os.path.join(out_dir, MANIFEST_NAME), manifest)
