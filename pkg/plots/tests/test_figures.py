import numpy as np
import pytest

from fedsaddle_plots import CsvSchemaError, FigureSpec, prepare_series, render
from fedsaddle_plots.figures import main

RUN_HEADER = (
    "method,round,cumulative_local_steps,duality_gap,sparsity_x,sparsity_y,"
    "rank_x,rank_y,wall_ms,seed"
)
AGG_HEADER = (
    "method,round,cumulative_local_steps,duality_gap_mean,duality_gap_std,"
    "sparsity_x_mean,sparsity_x_std,sparsity_y_mean,sparsity_y_std,"
    "rank_x_mean,rank_x_std,rank_y_mean,rank_y_std,n_seeds,seed0"
)


def write_run_csv(path, method, gaps, sparsity=None, ranks=None, seed=0):
    rounds = range(len(gaps))
    sparsity = sparsity or [0.5] * len(gaps)
    ranks = ranks or [3] * len(gaps)
    lines = ["# schema: fedsaddle.runrecord.v1", RUN_HEADER]
    for r, g, s, k in zip(rounds, gaps, sparsity, ranks):
        lines.append(f"{method},{r},{r * 10},{g!r},{s!r},{s!r},{k},{k},1.0,{seed}")
    path.write_text("\n".join(lines) + "\n")
    return path


def write_agg_csv(path, method, means, stds):
    lines = ["# schema: fedsaddle.runrecord.agg.v1", AGG_HEADER]
    for r, (m, s) in enumerate(zip(means, stds)):
        lines.append(
            f"{method},{r},{r * 10},{m!r},{s!r},0.5,0.05,0.4,0.04,3.0,0.5,2.0,0.2,10,0"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


class TestPrepareSeries:
    def test_single_run_no_band(self, tmp_path):
        p = write_run_csv(tmp_path / "a.csv", "fedualex", [3.0, 1.0, 0.5])
        spec = FigureSpec(inputs={"fedualex": [p]}, panels=["gap"])
        series = prepare_series(spec)
        rounds, mean, std = series["fedualex"]["gap"]
        assert np.array_equal(rounds, [0, 1, 2])
        assert np.array_equal(mean, [3.0, 1.0, 0.5])
        assert std is None

    def test_agg_band_equals_csv_std(self, tmp_path):
        means, stds = [2.0, 1.0], [0.3, 0.1]
        p = write_agg_csv(tmp_path / "agg.csv", "fedmip", means, stds)
        series = prepare_series(FigureSpec(inputs={"fedmip": [p]}, panels=["gap"]))
        _, mean, std = series["fedmip"]["gap"]
        assert np.array_equal(mean, means) and np.array_equal(std, stds)

    def test_multiple_seed_files_aggregated(self, tmp_path):
        gaps = [[4.0, 2.0], [2.0, 1.0], [3.0, 1.5]]
        paths = [
            write_run_csv(tmp_path / f"s{i}.csv", "feddualavg", g, seed=i)
            for i, g in enumerate(gaps)
        ]
        series = prepare_series(FigureSpec(inputs={"feddualavg": paths}, panels=["gap"]))
        _, mean, std = series["feddualavg"]["gap"]
        arr = np.array(gaps)
        assert np.allclose(mean, arr.mean(axis=0))
        assert np.allclose(std, arr.std(axis=0))

    def test_four_method_comparison(self, tmp_path):
        inputs = {
            m: [write_run_csv(tmp_path / f"{m}.csv", m, [1.0, 0.5])]
            for m in ("fedualex", "fedmip", "feddualavg", "fedmid")
        }
        series = prepare_series(FigureSpec(inputs=inputs, panels=["gap", "sparsity"]))
        assert set(series) == set(inputs)
        for panels in series.values():
            assert set(panels) == {"gap", "sparsity"}

    def test_deterministic_for_identical_inputs(self, tmp_path):
        p = write_run_csv(tmp_path / "a.csv", "fedualex", [3.0, 1.0])
        spec = FigureSpec(inputs={"fedualex": [p]}, panels=["gap", "rank"])
        a = prepare_series(spec)
        b = prepare_series(spec)
        for panel in ("gap", "rank"):
            assert np.array_equal(a["fedualex"][panel][1], b["fedualex"][panel][1])

    def test_rank_panel_reads_rank_column(self, tmp_path):
        p = write_run_csv(tmp_path / "a.csv", "fedualex", [1.0, 1.0], ranks=[20, 10])
        series = prepare_series(FigureSpec(inputs={"fedualex": [p]}, panels=["rank"]))
        assert np.array_equal(series["fedualex"]["rank"][1], [20, 10])


class TestSchemaErrors:
    def test_missing_stamp(self, tmp_path):
        p = tmp_path / "raw.csv"
        p.write_text(RUN_HEADER + "\n")
        with pytest.raises(CsvSchemaError, match="schema"):
            prepare_series(FigureSpec(inputs={"m": [p]}))

    def test_missing_column_named(self, tmp_path):
        p = tmp_path / "short.csv"
        p.write_text("# schema: fedsaddle.runrecord.v1\nmethod,round\nx,0\n")
        with pytest.raises(CsvSchemaError, match="duality_gap"):
            prepare_series(FigureSpec(inputs={"x": [p]}, panels=["gap"]))

    def test_unknown_panel(self, tmp_path):
        p = write_run_csv(tmp_path / "a.csv", "m", [1.0])
        with pytest.raises(CsvSchemaError, match="panel"):
            prepare_series(FigureSpec(inputs={"m": [p]}, panels=["loss"]))

    def test_empty_inputs(self):
        with pytest.raises(CsvSchemaError, match="input"):
            prepare_series(FigureSpec(inputs={}))

    def test_misaligned_rounds(self, tmp_path):
        a = write_run_csv(tmp_path / "a.csv", "m", [1.0, 0.5])
        b = write_run_csv(tmp_path / "b.csv", "m", [1.0, 0.5, 0.2])
        with pytest.raises(CsvSchemaError, match="round"):
            prepare_series(FigureSpec(inputs={"m": [a, b]}, panels=["gap"]))


class TestRender:
    def test_single_curve_image(self, tmp_path):
        p = write_run_csv(tmp_path / "a.csv", "fedualex", [3.0, 1.0, 0.5])
        out = tmp_path / "fig.png"
        spec = FigureSpec(inputs={"fedualex": [p]}, panels=["gap"], output=str(out))
        assert render(spec) == str(out)
        assert out.stat().st_size > 0

    def test_gap_and_sparsity_panels(self, tmp_path):
        inputs = {
            m: [write_run_csv(tmp_path / f"{m}.csv", m, [1.0, 0.5])]
            for m in ("fedualex", "fedmip", "feddualavg", "fedmid")
        }
        out = tmp_path / "fig5.png"
        render(FigureSpec(inputs=inputs, panels=["gap", "sparsity"], output=str(out)))
        assert out.exists()

    def test_zero_gap_plottable_on_log_axis(self, tmp_path):
        p = write_run_csv(tmp_path / "z.csv", "m", [1.0, 0.0, 0.0])
        out = tmp_path / "zero.png"
        render(FigureSpec(inputs={"m": [p]}, panels=["gap"], log_y=True, output=str(out)))
        assert out.exists()

    def test_band_rendering_from_agg(self, tmp_path):
        p = write_agg_csv(tmp_path / "agg.csv", "fedmip", [2.0, 1.0], [0.3, 0.1])
        out = tmp_path / "band.png"
        render(FigureSpec(inputs={"fedmip": [p]}, panels=["gap", "rank"], output=str(out)))
        assert out.exists()


class TestCli:
    def test_main_renders(self, tmp_path, capsys):
        a = write_run_csv(tmp_path / "a.csv", "fedualex", [3.0, 1.0])
        b = write_run_csv(tmp_path / "b.csv", "fedmip", [2.5, 1.5])
        out = tmp_path / "cli.png"
        code = main([
            "--input", f"fedualex={a}", "--input", f"fedmip={b}",
            "--panel", "gap", "--panel", "sparsity", "--output", str(out),
        ])
        assert code == 0 and out.exists()

    def test_bad_input_exit_code(self, tmp_path, capsys):
        missing = tmp_path / "missing.csv"
        assert main(["--input", f"x={missing}", "--output", str(tmp_path / "o.png")]) == 2

    def test_multi_seed_argument_form(self, tmp_path):
        a = write_run_csv(tmp_path / "s0.csv", "fedualex", [3.0, 1.0], seed=0)
        b = write_run_csv(tmp_path / "s1.csv", "fedualex", [2.0, 0.8], seed=1)
        out = tmp_path / "band.png"
        assert main(["--input", f"fedualex={a},{b}", "--output", str(out)]) == 0
        assert out.exists()
