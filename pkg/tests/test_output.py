import json
import math
import os

import numpy as np
import pytest

from conftest import symmetric_model
from core.model import SensitivitySpec
from core.output import (MANIFEST_NAME, RunManifest, format_value, read_csv, read_diagnostics, read_fields,
                         read_trajectory, write_csv, write_fields, write_trajectory)
from core.solver import FieldTriple, Grid, InitialData, Scheme, SolverConfig, run


@pytest.mark.parametrize("value, text", [
    (0.1, "0.10000000000000001"),
    (np.float64(2.5), "2.5"),
    (True, "1"),
    (np.bool_(False), "0"),
    (7, "7"),
    (None, ""),
    ("case-2", "case-2"),
])
def test_format_value(value, text):
    assert format_value(value) == text


def test_csv_round_trip(tmp_path):
    path = str(tmp_path / "nested" / "table.csv")
    assert write_csv(path, ("a", "b"), [(1, 0.5), (2, math.inf)]) == 2
    header, rows = read_csv(path)
    assert header == ["a", "b"]
    assert rows == [["1", "0.5"], ["2", "inf"]]


def test_fields_in_2d(tmp_path):
    grid = Grid.rectangle(1.0, 2.0, 8, 10)
    x, y = grid.centers()
    fields = FieldTriple(np.sin(x) * y, np.exp(-x - y), 1.0 / (1.0 + x * y))
    write_fields(str(tmp_path), grid, fields)
    header, rows = read_csv(str(tmp_path / "u.csv"))
    assert header == ["x", "y", "value"]
    assert len(rows) == 80
    loaded = read_fields(str(tmp_path), grid)
    for (_, a), (_, b) in zip(fields.items(), loaded.items()):
        np.testing.assert_array_equal(a, b)


def test_trajectory_round_trip(tmp_path):
    p = symmetric_model(M1=0.1, M2=0.1)
    grid = Grid.interval(1.0, 16)
    traj = run(p, SensitivitySpec.constant(0.1, 0.1), grid,
               SolverConfig(dt=0.01, t_end=0.3, scheme=Scheme.IMEX, snapshot_every=10), InitialData(seed=1))
    write_trajectory(str(tmp_path), traj)
    assert os.path.isfile(tmp_path / "snapshots" / "step_00000030" / "w.csv")

    loaded = read_trajectory(str(tmp_path), grid)
    assert [s.step for s in loaded.snapshots] == [0, 10, 20, 30]
    assert loaded.steps == 30
    np.testing.assert_array_equal(loaded.final.fields.u, traj.final.fields.u)
    original, back = traj.diagnostics()[-1], loaded.diagnostics()[-1]
    assert back.du_inf == original.du_inf
    assert back.gradw2 == original.gradw2
    assert math.isnan(back.max_u)


def test_read_diagnostics_rejects_other_files(tmp_path):
    path = str(tmp_path / "other.csv")
    write_csv(path, ("time", "E"), [(0.0, 1.0)])
    with pytest.raises(ValueError, match="not a diagnostics file"):
        read_diagnostics(path)


class TestManifest:
    def test_save_finish_load(self, tmp_path):
        manifest = RunManifest(config_path="run.env", command="check", out_dir=str(tmp_path / "out"),
                               version="0.1.0", config_hash="ab" * 32, started_at=100.0)
        manifest.save()
        with open(manifest.path, encoding="utf-8") as f:
            assert json.load(f)["wall_time"] is None
        manifest.finish()
        loaded = RunManifest.load(str(tmp_path / "out"))
        assert loaded.command == "check"
        assert loaded.wall_time > 0

    def test_missing_or_corrupt(self, tmp_path, capsys):
        assert RunManifest.load(str(tmp_path)) is None
        (tmp_path / MANIFEST_NAME).write_text("{not json", encoding="utf-8")
        assert RunManifest.load(str(tmp_path)) is None
        assert "Failed to load run manifest" in capsys.readouterr().out
