"""
CSV artifacts and the run manifest.

Every float goes out with 17 significant digits so a rerun with the same
config reproduces the files byte for byte.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.solver import Diagnostics, FieldTriple, Grid, Snapshot, Trajectory

MANIFEST_NAME = "manifest.json"
DIAGNOSTICS_NAME = "diagnostics.csv"
SNAPSHOT_DIR = "snapshots"
SNAPSHOT_INDEX = "index.csv"
FIELD_NAMES = ("u", "v", "w")


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    """Write header plus rows; returns the number of data rows."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
            count += 1
    return count


def read_csv(path: str) -> Tuple[List[str], List[List[str]]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, [])
        return header, [row for row in reader if row]


def _parse_float(text: str) -> float:
    return float(text) if text != "" else math.nan


# ---------------------------------------------------------------------------
# Fields and trajectories
# ---------------------------------------------------------------------------

def write_fields(directory: str, grid: Grid, fields: FieldTriple) -> None:
    """One CSV per field, "x,value" (1D) or "x,y,value" (2D), row-major."""
    coords = [c.ravel() for c in grid.centers()]
    header = ("x", "value") if grid.dimension == 1 else ("x", "y", "value")
    for name, values in fields.items():
        write_csv(os.path.join(directory, f"{name}.csv"), header, zip(*coords, values.ravel()))


def read_fields(directory: str, grid: Grid) -> FieldTriple:
    arrays = []
    for name in FIELD_NAMES:
        header, rows = read_csv(os.path.join(directory, f"{name}.csv"))
        if len(header) != grid.dimension + 1:
            raise ValueError(f"{name}.csv has columns {header}, expected {grid.dimension + 1}")
        if len(rows) != int(np.prod(grid.shape)):
            raise ValueError(f"{name}.csv has {len(rows)} rows, grid has {int(np.prod(grid.shape))} cells")
        arrays.append(np.array([float(r[-1]) for r in rows]).reshape(grid.shape))
    return FieldTriple(*arrays)


def write_diagnostics(path: str, diagnostics: Sequence[Diagnostics]) -> int:
    return write_csv(path, Diagnostics.CSV_HEADER, (d.row() for d in diagnostics))


def read_diagnostics(path: str) -> List[Diagnostics]:
    """Diagnostics back from CSV; maxima are not stored and come back as NaN."""
    header, rows = read_csv(path)
    if tuple(header) != Diagnostics.CSV_HEADER:
        raise ValueError(f"{path} is not a diagnostics file (header {header})")
    out = []
    for row in rows:
        values = dict(zip(header, (_parse_float(x) for x in row)))
        out.append(Diagnostics(max_u=math.nan, max_v=math.nan, max_w=math.nan, **values))
    return out


def write_trajectory(out_dir: str, trajectory: Trajectory) -> None:
    write_diagnostics(os.path.join(out_dir, DIAGNOSTICS_NAME), trajectory.diagnostics())
    snap_root = os.path.join(out_dir, SNAPSHOT_DIR)
    write_csv(os.path.join(snap_root, SNAPSHOT_INDEX), ("step", "time"),
              ((s.step, s.time) for s in trajectory.snapshots))
    for snap in trajectory.snapshots:
        write_fields(os.path.join(snap_root, f"step_{snap.step:08d}"), trajectory.grid, snap.fields)


def read_trajectory(out_dir: str, grid: Grid) -> Trajectory:
    """Trajectory from a previous `simulate` output directory."""
    snap_root = os.path.join(out_dir, SNAPSHOT_DIR)
    diagnostics = read_diagnostics(os.path.join(out_dir, DIAGNOSTICS_NAME))
    _, rows = read_csv(os.path.join(snap_root, SNAPSHOT_INDEX))
    if len(rows) != len(diagnostics):
        raise ValueError(f"{len(rows)} snapshots but {len(diagnostics)} diagnostic rows in {out_dir}")
    trajectory = Trajectory(grid)
    for (step, t), diag in zip(rows, diagnostics):
        step = int(step)
        fields = read_fields(os.path.join(snap_root, f"step_{step:08d}"), grid)
        trajectory.snapshots.append(Snapshot(step, float(t), fields, diag))
    trajectory.steps = trajectory.snapshots[-1].step if trajectory.snapshots else 0
    return trajectory


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    config_path: Optional[str]
    command: str
    out_dir: str
    version: str
    config_hash: Optional[str]
    started_at: float
    wall_time: Optional[float] = None

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def from_dict(data) -> "RunManifest":
        return RunManifest(**data)

    @property
    def path(self) -> str:
        return os.path.join(self.out_dir, MANIFEST_NAME)

    def finish(self) -> None:
        self.wall_time = time.time() - self.started_at
        self.save()

    def save(self) -> None:
        try:
            os.makedirs(self.out_dir, exist_ok=True)
            with open(self.path, "w", encoding="utf-8") as f:
                json.dump(self.to_dict(), f, ensure_ascii=False, indent=2)
        except OSError as e:
            print(f"⚠️ Failed to save run manifest: {e}")

    @staticmethod
    def load(out_dir: str) -> Optional["RunManifest"]:
        path = os.path.join(out_dir, MANIFEST_NAME)
        if not os.path.exists(path):
            return None
        try:
            with open(path, "r", encoding="utf-8") as f:
                return RunManifest.from_dict(json.load(f))
        except (OSError, ValueError, TypeError) as e:
            print(f"⚠️ Failed to load run manifest: {e}")
            return None
