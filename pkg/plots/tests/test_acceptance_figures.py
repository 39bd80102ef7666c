"""Figure-rendering acceptance: build the benchmark figures from the metric
CSVs that the primary acceptance suite writes to results/acceptance/, and
check the plotted arrays equal the CSV values after mean/std aggregation.

Run the primary suite first (``pytest`` in the repository root); these tests
skip with a pointer when the CSVs are not there yet.
"""

import csv
import os
import pathlib

import numpy as np
import pytest

from fedsaddle_plots import FigureSpec, prepare_series, render

ACCEPTANCE_DIR = pathlib.Path(
    os.environ.get(
        "FEDSADDLE_ACCEPTANCE_DIR",
        pathlib.Path(__file__).resolve().parents[2] / "results" / "acceptance",
    )
)

L1_METHODS = ("fedualex", "fedmip", "feddualavg", "fedmid")


def _need(path: pathlib.Path) -> pathlib.Path:
    if not path.exists():
        pytest.skip(f"{path} not found - run the primary acceptance suite first")
    return path


def _column(path, name):
    with open(path, newline="") as fh:
        fh.readline()  # schema stamp
        reader = csv.DictReader(fh)
        return np.array([float(row[name]) for row in reader])


def test_gap_sparsity_figure_from_l1_csvs(tmp_path):
    inputs = {
        m: [str(_need(ACCEPTANCE_DIR / f"l1_k10_{m}_agg.csv"))] for m in L1_METHODS
    }
    out = tmp_path / "l1_gap_sparsity.png"
    spec = FigureSpec(inputs=inputs, panels=["gap", "sparsity"], output=str(out))
    series = prepare_series(spec)
    render(spec)
    assert out.stat().st_size > 0
    for m in L1_METHODS:
        path = inputs[m][0]
        _, mean, std = series[m]["gap"]
        assert np.array_equal(mean, _column(path, "duality_gap_mean"))
        assert np.array_equal(std, _column(path, "duality_gap_std"))
        _, smean, _ = series[m]["sparsity"]
        assert np.array_equal(smean, _column(path, "sparsity_x_mean"))
    print("ACCEPTANCE 10a (gap+sparsity figure from criterion-1 CSVs): PASS")


def test_gap_rank_figure_from_nuclear_csv(tmp_path):
    path = _need(ACCEPTANCE_DIR / "nuclear_k10_fedualex_seed0.csv")
    out = tmp_path / "nuclear_gap_rank.png"
    spec = FigureSpec(inputs={"fedualex": [str(path)]}, panels=["gap", "rank"], output=str(out))
    series = prepare_series(spec)
    render(spec)
    assert out.stat().st_size > 0
    _, rank, std = series["fedualex"]["rank"]
    assert std is None  # single raw series: no band
    assert np.array_equal(rank, _column(path, "rank_x"))
    print("ACCEPTANCE 10b (gap+rank figure from criterion-3 CSV): PASS")


def test_per_seed_aggregation_matches_recomputation(tmp_path):
    paths = sorted(ACCEPTANCE_DIR.glob("l1_k10_fedualex_seed*.csv"))
    if len(paths) < 2:
        pytest.skip("per-seed criterion-1 CSVs not found - run the primary suite first")
    spec = FigureSpec(
        inputs={"fedualex": [str(p) for p in paths]},
        panels=["gap"],
        output=str(tmp_path / "band.png"),
    )
    series = prepare_series(spec)
    render(spec)
    _, mean, std = series["fedualex"]["gap"]
    raw = np.stack([_column(p, "duality_gap") for p in paths])
    assert np.allclose(mean, raw.mean(axis=0), rtol=0, atol=0)
    assert np.allclose(std, raw.std(axis=0), rtol=0, atol=0)
    # the band should agree with the agg CSV the simulator wrote
    agg = ACCEPTANCE_DIR / "l1_k10_fedualex_agg.csv"
    if agg.exists():
        assert np.allclose(mean, _column(agg, "duality_gap_mean"), rtol=1e-15, atol=1e-300)
    print("ACCEPTANCE 10c (band equals recomputed seed std): PASS")
