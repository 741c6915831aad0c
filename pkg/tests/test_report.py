from __future__ import annotations

import json

import pandas as pd
import pytest

from mpmab.errors import InvalidInputError
from mpmab.harness.experiment import SUMMARY_COLUMNS, ExperimentConfig, SweepResult
from mpmab.harness.report import emit_csv, emit_plot, emit_sweep, read_csv

DELTAS = (1.0, 0.01)


def _summary() -> pd.DataFrame:
    return pd.DataFrame(
        {
            "delta": [1.0, 0.1, 0.01],
            "mean_regret": [12.5, 140.25, 381.0],
            "stderr": [0.5, 3.1, 0.0],
            "reference": [100.0, 100.0, 100.0],
            "collisions": [0, 0, 2],
            "trials": [4, 4, 4],
            "seed_base": [1000, 1000, 1000],
        },
        columns=SUMMARY_COLUMNS,
    ).astype({"collisions": "int64", "trials": "int64", "seed_base": "int64"})


def test_csv_round_trip(tmp_path):
    frame = _summary()
    path = emit_csv(frame, tmp_path / "nested" / "sweep.csv")
    assert path.exists()
    assert path.read_text().splitlines()[0] == ",".join(SUMMARY_COLUMNS)
    pd.testing.assert_frame_equal(read_csv(path), frame)


def test_csv_keeps_only_summary_columns(tmp_path):
    frame = _summary().assign(extra="x")
    path = emit_csv(frame, tmp_path / "sweep.csv")
    assert list(read_csv(path).columns) == SUMMARY_COLUMNS


def test_csv_rejects_empty_or_partial_frames(tmp_path):
    with pytest.raises(InvalidInputError):
        emit_csv(pd.DataFrame(columns=SUMMARY_COLUMNS), tmp_path / "empty.csv")
    with pytest.raises(InvalidInputError):
        emit_csv(_summary().drop(columns=["stderr"]), tmp_path / "partial.csv")


def test_read_csv_rejects_foreign_files(tmp_path):
    path = tmp_path / "other.csv"
    _summary()[SUMMARY_COLUMNS[::-1]].to_csv(path, index=False)
    with pytest.raises(InvalidInputError):
        read_csv(path)


def test_plot_is_byte_stable(tmp_path):
    first = emit_plot(_summary(), tmp_path / "a.svg", DELTAS)
    second = emit_plot(_summary(), tmp_path / "b.svg", DELTAS)
    assert first.read_bytes() == second.read_bytes()
    assert first.read_text().lstrip().startswith("<?xml")


def test_emit_sweep_writes_every_artifact(tmp_path):
    result = SweepResult(
        summary=_summary(),
        trials=pd.DataFrame({"delta": [1.0, 1.0], "seed_index": [0, 1], "final_regret": [12.0, 13.0]}),
        deltas=DELTAS,
    )
    config = ExperimentConfig(k=3, m=2, horizon=10_000, trials=2)
    paths = emit_sweep(result, config, tmp_path, stem="run")
    assert set(paths) == {"csv", "svg", "parquet", "meta"}
    assert all(p.exists() for p in paths.values())
    assert paths["csv"].name == "run.csv"

    meta = json.loads(paths["meta"].read_text())
    assert meta["config"]["horizon"] == 10_000
    assert meta["deltas"] == [1.0, 0.01]
    assert meta["rows"] == 3
    assert meta["trial_rows"] == 2
    assert pd.read_parquet(paths["parquet"])["final_regret"].tolist() == [12.0, 13.0]
