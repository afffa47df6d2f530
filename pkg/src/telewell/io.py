"""Output files: CSV tables and JSON documents that carry their own configuration."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


def package_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "unknown"


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no inf/nan; keep them readable and round-trippable
        return v if math.isfinite(v) else repr(v)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dumps(payload: dict) -> str:
    return json.dumps(_jsonable(payload), indent=2, sort_keys=False)


def header_lines(command: str, config: dict) -> list:
    return [
        f"# telewell {package_version()} command={command}",
        "# config=" + json.dumps(_jsonable(config), sort_keys=True),
    ]


def write_csv(path, command: str, config: dict, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """CSV with ``#`` comment lines holding the resolved configuration and seed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for line in header_lines(command, config):
            fh.write(line + "\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_csv(path) -> tuple:
    """``(config, columns, rows)`` of a file written by :func:`write_csv`."""
    config = {}
    lines = Path(path).read_text().splitlines()
    body = []
    for line in lines:
        if line.startswith("# config="):
            config = json.loads(line[len("# config="):])
        elif not line.startswith("#"):
            body.append(line)
    reader = csv.reader(body)
    columns = next(reader)
    return config, columns, [row for row in reader]


def write_json(path, command: str, config: dict, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"telewell": package_version(), "command": command, "config": config, **payload}
    path.write_text(dumps(doc) + "\n")
    return path


def plot_trajectory(path, segments: np.ndarray, final: tuple, bands: dict, positions: Optional[tuple] = None) -> Path:
    """SVG of a sampled path with attractor bands shaded.

    ``positions`` optionally supplies a dense ``(t, x)`` rendering of the path.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 3.5))
    for name, (a, b) in bands.items():
        ax.axhspan(a, b, alpha=0.15, label=name)
    if positions is not None:
        t, x = positions
        ax.plot(t, x, lw=0.8, color="k")
    else:
        ts = np.append(segments[:, 0], final[0])
        xs = np.append(segments[:, 1], final[1])
        ax.plot(ts, xs, lw=0.8, color="k")
    ax.set_xlabel("t")
    ax.set_ylabel("X(t)")
    if bands:
        ax.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
