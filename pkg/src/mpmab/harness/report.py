from __future__ import annotations

import json
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from loguru import logger

from mpmab.errors import InvalidInputError
from mpmab.harness.experiment import SUMMARY_COLUMNS, ExperimentConfig, SweepResult, pareto_reference


def _require_rows(results: pd.DataFrame) -> None:
    if results is None or results.empty:
        raise InvalidInputError("no results to write")


def _prepare(path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidInputError(f"cannot create {path.parent}: {exc}") from exc
    return path


def emit_csv(results: pd.DataFrame, path: Path) -> Path:
    """Write the sweep summary with exactly the columns of SUMMARY_COLUMNS."""
    _require_rows(results)
    missing = [c for c in SUMMARY_COLUMNS if c not in results.columns]
    if missing:
        raise InvalidInputError(f"results lack columns {missing}")
    path = _prepare(path)
    try:
        results[SUMMARY_COLUMNS].to_csv(path, index=False, float_format="%.17g")
    except OSError as exc:
        raise InvalidInputError(f"cannot write {path}: {exc}") from exc
    logger.success("wrote {} rows to {}", len(results), path)
    return path


_CSV_DTYPES = {
    "delta": "float64",
    "mean_regret": "float64",
    "stderr": "float64",
    "reference": "float64",
    "collisions": "int64",
    "trials": "int64",
    "seed_base": "int64",
}


def read_csv(path: Path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype=_CSV_DTYPES)
    if list(df.columns) != SUMMARY_COLUMNS:
        raise InvalidInputError(f"{path} does not hold a sweep summary (columns {list(df.columns)})")
    return df


def emit_plot(results: pd.DataFrame, path: Path, deltas: Sequence[float]) -> Path:
    """
    Phase A: Log-log SVG of measured R_{T,Delta} over the reference curve
    - measured points carry 1-stderr error bars;
    - the reference 1/(Delta_j Delta_{j+1}) is drawn as a step curve over [Delta_J, 1],
      rescaled to meet the measurements at their geometric mean (constants are unknown).

    Phase B: Byte-stable output
    - no creation date, fixed hash salt for element ids.
    """
    _require_rows(results)
    path = _prepare(path)

    grid = np.geomspace(deltas[-1], deltas[0], 200)
    reference = np.array([pareto_reference(deltas, float(g)) for g in grid])
    measured = results["mean_regret"].to_numpy(dtype=float)
    ref_at_points = results["reference"].to_numpy(dtype=float)
    positive = (measured > 0) & (ref_at_points > 0)
    scale = float(np.exp(np.mean(np.log(measured[positive] / ref_at_points[positive])))) if positive.any() else 1.0

    with plt.rc_context({"svg.hashsalt": "mpmab", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.4))
        ax.plot(grid, reference * scale, color="tab:gray", lw=1.5, label="reference (scaled)")
        ax.errorbar(
            results["delta"], measured, yerr=results["stderr"], fmt="o", color="tab:blue", capsize=3, label="measured"
        )
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("gap Δ")
        ax.set_ylabel("max mean pseudo-regret")
        ax.legend(loc="best")
        fig.tight_layout()
        try:
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise InvalidInputError(f"cannot write {path}: {exc}") from exc
        finally:
            plt.close(fig)
    logger.success("wrote plot {}", path)
    return path


def emit_sweep(sweep_result: SweepResult, config: ExperimentConfig, out_dir: Path, stem: str = "sweep") -> dict[str, Path]:
    """
    Write <stem>.csv, <stem>.svg, <stem>_trials.parquet and <stem>_meta.json under out_dir.
    """
    out_dir = Path(out_dir)
    paths = {
        "csv": emit_csv(sweep_result.summary, out_dir / f"{stem}.csv"),
        "svg": emit_plot(sweep_result.summary, out_dir / f"{stem}.svg", sweep_result.deltas),
    }

    trials_path = out_dir / f"{stem}_trials.parquet"
    sweep_result.trials.to_parquet(trials_path, index=False)
    paths["parquet"] = trials_path

    meta = {
        "config": json.loads(config.model_dump_json()),
        "deltas": list(sweep_result.deltas),
        "rows": int(len(sweep_result.summary)),
        "trial_rows": int(len(sweep_result.trials)),
        "columns": SUMMARY_COLUMNS,
    }
    meta_path = out_dir / f"{stem}_meta.json"
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True))
    paths["meta"] = meta_path
    return paths
