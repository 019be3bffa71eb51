"""CSV persistence for episodes and suites.

Floats are written with ``repr`` (shortest round-trip form) and no wall-clock
values are stored, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .cloth_sim import LABEL_NAMES
from .harness import RESULT_COLUMNS, STEP_COLUMNS, SUMMARY_COLUMNS

SNAPSHOT_COLUMNS = ["t", "index", "label", "x", "y", "z"]


def cell(x):
    """Render one CSV field: blanks for missing values, round-trip floats."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return ""
        return repr(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([cell(x) for x in row])
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def episode_stem(cfg, horizon=None, cloth="default"):
    h = cfg.planner.horizon if horizon is None else horizon
    return f"{cfg.policy}_H{h}_{cloth}_seed{cfg.seed}"


def write_episode(result, out_dir, stem=None):
    """Step log, plus point-cloud snapshots when the episode recorded them."""
    out_dir = Path(out_dir)
    stem = stem or episode_stem(result.config)
    paths = [write_rows(out_dir / f"{stem}_steps.csv", STEP_COLUMNS, result.rows)]
    if result.snapshots:
        labels = [LABEL_NAMES[int(v)] for v in result.labels]
        rows = ([t, i, labels[i], *p] for t, snap in enumerate(result.snapshots)
                for i, p in enumerate(snap.tolist()))
        paths.append(write_rows(out_dir / f"{stem}_cloud.csv", SNAPSHOT_COLUMNS, rows))
    return paths


def write_results(rows, out_dir):
    return write_rows(Path(out_dir) / "results.csv", RESULT_COLUMNS, rows)


def write_summary(rows, out_dir):
    return write_rows(Path(out_dir) / "summary.csv", SUMMARY_COLUMNS, rows)
