"""Render convergence-figure panels from fedsaddle metric CSVs.

Reads only the documented CSV schemas (``fedsaddle.runrecord.v1`` rows, one
per evaluation, or ``fedsaddle.runrecord.agg.v1`` rows carrying seed means
and standard deviations) and draws one curve per method against rounds:
duality gap (log scale), solution sparsity, or solution rank.  Aggregated
input, either an agg-schema file or several per-seed files for one method,
gets a +/- one standard deviation band.

All numeric work here is mean/std aggregation of what the CSVs already
contain; the optimization math lives upstream.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field

import numpy as np

RUN_SCHEMA = "fedsaddle.runrecord.v1"
AGG_SCHEMA = "fedsaddle.runrecord.agg.v1"

PANELS = ("gap", "sparsity", "rank")
# panel -> (run-schema column, agg-schema mean column, agg-schema std column)
_PANEL_COLUMNS = {
    "gap": ("duality_gap", "duality_gap_mean", "duality_gap_std"),
    "sparsity": ("sparsity_x", "sparsity_x_mean", "sparsity_x_std"),
    "rank": ("rank_x", "rank_x_mean", "rank_x_std"),
}
LOG_FLOOR = 1e-12  # keeps exact-zero gaps plottable on a log axis


class CsvSchemaError(ValueError):
    """Input CSV does not match the documented schema."""


@dataclass
class FigureSpec:
    """What to draw: CSV paths per method, panel kinds, log flag, output."""

    inputs: dict  # method name -> list of CSV paths
    panels: list = field(default_factory=lambda: ["gap"])
    log_y: bool = True  # applies to the gap panel
    output: str = "figure.png"

    def validate(self) -> "FigureSpec":
        if not self.inputs or not any(self.inputs.values()):
            raise CsvSchemaError("at least one input series is required")
        for panel in self.panels:
            if panel not in PANELS:
                raise CsvSchemaError(f"unknown panel kind {panel!r} (choose from {PANELS})")
        return self


def _read_table(path) -> tuple[str, dict]:
    """Parse one CSV into {column: float array}; returns (schema, columns)."""
    with open(path, newline="") as fh:
        stamp = fh.readline().strip()
        if not stamp.startswith("# schema: "):
            raise CsvSchemaError(f"{path}: missing schema stamp")
        schema = stamp.removeprefix("# schema: ")
        if schema not in (RUN_SCHEMA, AGG_SCHEMA):
            raise CsvSchemaError(f"{path}: unknown schema {schema!r}")
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise CsvSchemaError(f"{path}: missing header row")
        rows = [row for row in reader if row]
    table = {}
    for j, name in enumerate(header):
        if name == "method":
            table[name] = [row[j] for row in rows]
        else:
            try:
                table[name] = np.array([float(row[j]) for row in rows])
            except ValueError:
                raise CsvSchemaError(f"{path}: non-numeric value in column {name!r}")
    return schema, table


def _require(table, column, path):
    if column not in table:
        raise CsvSchemaError(f"{path}: missing column {column!r}")
    return table[column]


def _series_from_files(paths, panel):
    """Rounds, mean, std (std is None for a single raw series)."""
    run_col, mean_col, std_col = _PANEL_COLUMNS[panel]
    parsed = [( p, *_read_table(p)) for p in paths]
    if len(parsed) == 1 and parsed[0][1] == AGG_SCHEMA:
        path, _, table = parsed[0]
        rounds = _require(table, "round", path)
        return rounds, _require(table, mean_col, path), _require(table, std_col, path)
    values = []
    rounds = None
    for path, schema, table in parsed:
        if schema != RUN_SCHEMA:
            raise CsvSchemaError(
                f"{path}: aggregated input must be a single file per method"
            )
        r = _require(table, "round", path)
        if rounds is None:
            rounds = r
        elif len(r) != len(rounds) or not np.array_equal(r, rounds):
            raise CsvSchemaError(f"{path}: round axis differs from the first series")
        values.append(_require(table, run_col, path))
    stacked = np.stack(values)
    if len(values) == 1:
        return rounds, stacked[0], None
    return rounds, stacked.mean(axis=0), stacked.std(axis=0)


def prepare_series(spec: FigureSpec) -> dict:
    """The exact data arrays that render() will draw, keyed by method and
    panel: {method: {panel: (rounds, mean, std_or_None)}}."""
    spec.validate()
    out = {}
    for method, paths in spec.inputs.items():
        out[method] = {}
        for panel in spec.panels:
            out[method][panel] = _series_from_files(paths, panel)
    return out


def render(spec: FigureSpec) -> str:
    """Draw the requested panels into spec.output and return the path."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = prepare_series(spec)
    n = len(spec.panels)
    fig, axes = plt.subplots(1, n, figsize=(5.2 * n, 4.0), squeeze=False)
    for ax, panel in zip(axes[0], spec.panels):
        for method, data in series.items():
            rounds, mean, std = data[panel]
            y = np.maximum(mean, LOG_FLOOR) if (panel == "gap" and spec.log_y) else mean
            (line,) = ax.plot(rounds, y, label=method, linewidth=1.6)
            if std is not None:
                lo, hi = mean - std, mean + std
                if panel == "gap" and spec.log_y:
                    lo, hi = np.maximum(lo, LOG_FLOOR), np.maximum(hi, LOG_FLOOR)
                ax.fill_between(rounds, lo, hi, alpha=0.2, color=line.get_color())
        if panel == "gap" and spec.log_y:
            ax.set_yscale("log")
        ax.set_xlabel("round")
        ax.set_ylabel({"gap": "duality gap", "sparsity": "solution sparsity",
                       "rank": "solution rank"}[panel])
        ax.legend()
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.output, dpi=130)
    plt.close(fig)
    return spec.output


def _parse_inputs(tokens) -> dict:
    inputs: dict = {}
    for token in tokens:
        if "=" not in token:
            raise CsvSchemaError(f"--input expects METHOD=path[,path...], got {token!r}")
        method, paths = token.split("=", 1)
        inputs.setdefault(method, []).extend(p for p in paths.split(",") if p)
    return inputs


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="fedsaddle-plot",
        description="Render gap/sparsity/rank panels from fedsaddle metric CSVs",
    )
    ap.add_argument(
        "--input", action="append", required=True, metavar="METHOD=CSV[,CSV...]",
        help="series for one method: a run CSV, several per-seed run CSVs, "
        "or one seed-aggregated CSV",
    )
    ap.add_argument("--panel", action="append", choices=PANELS,
                    help="panel kind (repeatable; default: gap)")
    ap.add_argument("--linear-gap", action="store_true", help="disable the log gap axis")
    ap.add_argument("--output", default="figure.png")
    args = ap.parse_args(argv)
    spec = FigureSpec(
        inputs=_parse_inputs(args.input),
        panels=args.panel or ["gap"],
        log_y=not args.linear_gap,
        output=args.output,
    )
    try:
        path = render(spec)
    except (CsvSchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
