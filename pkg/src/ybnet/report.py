"""Deterministic report artifacts: JSON, CSV and SVG, written atomically."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1


def versions() -> dict[str, str]:
    """Versions of the package and the numerical stack."""
    import matplotlib
    import scipy

    from . import __version__

    return {
        "ybnet": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
    }


def atomic_write(path: str | Path, payload: bytes) -> Path:
    """Write ``payload`` to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def write_json(path: str | Path, subcommand: str, seed: int, config_hash: str, results: dict) -> Path:
    """JSON report with provenance fields and sorted keys."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "subcommand": subcommand,
        "seed": seed,
        "config_hash": config_hash,
        "versions": versions(),
        "results": _plain(results),
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    return atomic_write(path, text.encode())


def _cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """CSV with full-precision floats and ``\\n`` line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return atomic_write(path, buf.getvalue().encode())


def write_svg(path: str | Path, fig) -> Path:
    """Save a matplotlib figure as SVG without timestamps or random ids."""
    import matplotlib.pyplot as plt

    buf = io.BytesIO()
    with plt.rc_context({"svg.hashsalt": "ybnet", "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return atomic_write(path, buf.getvalue())


def figure():
    """New figure on the non-interactive backend."""
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt.subplots(figsize=(6, 4))


def line_plot(path, x, ys: dict[str, Sequence[float]], xlabel: str, ylabel: str, logy: bool = False) -> Path:
    fig, ax = figure()
    for label, y in ys.items():
        ax.plot(x, y, marker="o", ms=3, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    if len(ys) > 1:
        ax.legend()
    fig.tight_layout()
    return write_svg(path, fig)


def heatmap(path, x, y, z, xlabel: str, ylabel: str, zlabel: str, log: bool = False) -> Path:
    from matplotlib.colors import LogNorm

    fig, ax = figure()
    z = np.asarray(z, dtype=float)
    norm = LogNorm(vmin=max(np.nanmin(z[z > 0]), 1e-12), vmax=np.nanmax(z)) if log and np.any(z > 0) else None
    mesh = ax.pcolormesh(x, y, z, shading="nearest", norm=norm)
    fig.colorbar(mesh, ax=ax, label=zlabel)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    return write_svg(path, fig)


def bar_plot(path, labels: Sequence[str], values: Sequence[float], ylabel: str) -> Path:
    fig, ax = figure()
    ax.bar(range(len(values)), values)
    ax.set_xticks(range(len(values)), labels, rotation=30, ha="right")
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    return write_svg(path, fig)
