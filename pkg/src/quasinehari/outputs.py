"""Artifact writing: JSON reports, CSV tables, field dumps, gnuplot scripts and the manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
import scipy

from .domain import Field

SCHEMA_VERSION = "1"


def jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays recursively; non-finite floats become strings."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def package_version() -> str:
    try:
        from importlib.metadata import version
        return version("artifact")
    except Exception:  # not installed as a distribution
        return "unknown"


class ArtifactWriter:
    """Collects files written under one output directory and their wall times."""

    def __init__(self, out_dir: str | Path):
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        probe = self.root / ".write-test"
        probe.write_text("")
        probe.unlink()
        self.files: list[str] = []
        self.timings: dict[str, float] = {}

    def _path(self, name: str) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        if name not in self.files:
            self.files.append(name)
        return path

    @contextmanager
    def timer(self, label: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[label] = self.timings.get(label, 0.0) + time.perf_counter() - t0

    def json(self, name: str, obj: Any) -> Path:
        path = self._path(name)
        path.write_text(dumps(obj))
        return path

    def csv(self, name: str, rows: Iterable[Mapping[str, Any]]) -> Path:
        rows = [jsonable(r) for r in rows]
        path = self._path(name)
        cols: list[str] = []
        for r in rows:
            cols += [c for c in r if c not in cols]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for r in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
        return path

    def field(self, name: str, fld: Field, meta: Mapping[str, Any] | None = None) -> Path:
        path = self._path(name)
        fld.dump(path, jsonable(meta) if meta else None)
        return path

    def text(self, name: str, content: str) -> Path:
        path = self._path(name)
        path.write_text(content)
        return path

    def manifest(self, config, command: str, exit_code: int, seed: int, threads: int) -> Path:
        outputs = {name: sha256_file(self.root / name) for name in sorted(self.files)}
        numerical = hashlib.sha256("".join(f"{k}:{v}\n" for k, v in outputs.items()).encode()).hexdigest()
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": command,
            "exit_code": exit_code,
            "config_hash": config.hash(),
            "config": config.tree,
            "seed": seed,
            "threads": threads,
            "versions": {
                "package": package_version(),
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "wall_times": self.timings,
            "outputs": outputs,
            "numerical_hash": numerical,
        }
        path = self.root / "manifest.json"
        path.write_text(dumps(doc))
        return path


def gnuplot_script(title: str, csv_name: str, panels: list[tuple[str, str, str]]) -> str:
    """Multiplot script; each panel is ``(x column, y column, label)`` read by header name."""
    lines = [
        "# gnuplot script; run with: gnuplot -p <this file>",
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set multiplot layout {len(panels)},1 title '{title}'",
    ]
    for x, y, label in panels:
        lines += [
            f"set xlabel '{x}'",
            f"set ylabel '{label}'",
            f"plot '{csv_name}' using '{x}':'{y}' with linespoints title '{label}'",
        ]
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"
