"""Export helpers: deterministic CSV bodies and columnar binary dumps.

Floats are written with shortest round-trip repr, so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .engine import PathEnsemble
from .measures import EmpiricalMeasure

__all__ = [
    "fmt",
    "write_csv",
    "export_ensemble_csv",
    "export_ensemble_npz",
    "export_measure_csv",
    "sha256_file",
]


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def export_ensemble_csv(ensemble: PathEnsemble, path) -> Path:
    """One row per (path, time index): path,time,c0..c{k-1}."""
    header = ["path", "time"] + [f"c{i}" for i in range(ensemble.dim)]
    times = ensemble.grid.times()

    def rows():
        for p in range(ensemble.n_paths):
            for k, t in enumerate(times):
                yield [p, t] + list(ensemble.states[p, k])

    return write_csv(path, header, rows())


def export_ensemble_npz(ensemble: PathEnsemble, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        path,
        times=ensemble.grid.times(),
        states=ensemble.states,
        seed=np.int64(ensemble.seed),
        scheme=np.str_(ensemble.scheme),
    )
    return path


def export_measure_csv(measure: EmpiricalMeasure, path) -> Path:
    """Sample dump with a JSON metadata header line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "t": measure.t,
        "x": None if measure.x is None else [float(v) for v in measure.x],
        "burn_in": measure.burn_in,
        "seed": measure.seed,
        "n_samples": measure.n_samples,
    }
    lines = ["# " + json.dumps(meta, sort_keys=True)]
    lines.append(",".join(f"y{i}" for i in range(measure.m)))
    for row in measure.samples:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
