"""Command-line entry point: presets, config files, CSV persistence, reports.

Config files are flat ``key = value`` text with two sections, ``[problem]``
and ``[run]`` (INI syntax); command-line flags override file values, which
override preset values.  Metric series are persisted as CSV with a schema
stamp comment on the first line; floats carry 17 significant digits so a
read-back is bit-identical.

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error,
5 no viable grid configuration, 1 unexpected failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import sys
from dataclasses import fields

from .fedsim import (
    AggRecord,
    ConfigError,
    EXTRA_STEP_METHODS,
    ETA_S_GRID,
    NoViableConfigError,
    PRESETS,
    RunRecord,
    SimConfig,
    TUNED_STEPS,
    default_eta_c_grid,
    grid_search,
    repeat_seeds,
    run_experiment,
)
from .optimizers import DivergenceError

RUN_SCHEMA = "fedsaddle.runrecord.v1"
AGG_SCHEMA = "fedsaddle.runrecord.agg.v1"

_RUN_COLUMNS = [f.name for f in fields(RunRecord)]
_AGG_COLUMNS = [f.name for f in fields(AggRecord)]
_FLOAT_FIELDS = {
    "duality_gap", "sparsity_x", "sparsity_y", "wall_ms",
    "duality_gap_mean", "duality_gap_std", "sparsity_x_mean", "sparsity_x_std",
    "sparsity_y_mean", "sparsity_y_std", "rank_x_mean", "rank_x_std",
    "rank_y_mean", "rank_y_std", "eta_s", "eta_c",
}
_INT_FIELDS = {"round", "cumulative_local_steps", "rank_x", "rank_y", "seed", "n_seeds", "seed0"}


class CsvFormatError(ValueError):
    """CSV does not conform to the documented schema."""


def _format_value(name, value):
    if name in _FLOAT_FIELDS:
        return format(float(value), ".17g")
    return str(value)


def write_csv(records, path) -> None:
    """Write run or seed-aggregate records with the matching schema stamp."""
    if records and isinstance(records[0], AggRecord):
        schema, columns = AGG_SCHEMA, _AGG_COLUMNS
    else:
        schema, columns = RUN_SCHEMA, _RUN_COLUMNS
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for rec in records:
            writer.writerow([_format_value(c, getattr(rec, c)) for c in columns])


def _parse_row(cls, columns, row):
    vals = {}
    for name, raw in zip(columns, row):
        if name in _INT_FIELDS:
            vals[name] = int(raw)
        elif name in _FLOAT_FIELDS:
            vals[name] = float(raw)
        else:
            vals[name] = raw
    return cls(**vals)


def read_csv(path):
    """Read a metric CSV back into records; the schema stamp selects the
    record type.  Raises CsvFormatError naming the offending column when the
    header does not match the documented schema."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# schema: "):
            raise CsvFormatError(f"{path}: missing schema stamp")
        schema = first.removeprefix("# schema: ")
        if schema == RUN_SCHEMA:
            cls, columns = RunRecord, _RUN_COLUMNS
        elif schema == AGG_SCHEMA:
            cls, columns = AggRecord, _AGG_COLUMNS
        else:
            raise CsvFormatError(f"{path}: unknown schema {schema!r}")
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != columns:
            for got, want in zip(header or [], columns):
                if got != want:
                    raise CsvFormatError(f"{path}: expected column {want!r}, found {got!r}")
            raise CsvFormatError(f"{path}: header has {len(header or [])} columns, expected {len(columns)}")
        return [_parse_row(cls, columns, row) for row in reader if row]


def summarize(records) -> str:
    """Human-readable report: final metrics, best round, total oracle calls."""
    if not records:
        raise ConfigError("summarize: no records")
    final = records[-1]
    if isinstance(final, AggRecord):
        gaps = [r.duality_gap_mean for r in records]
        best = min(range(len(records)), key=lambda i: gaps[i])
        lines = [
            f"method: {final.method} (mean over {final.n_seeds} seeds)",
            f"final round {final.round}: gap {final.duality_gap_mean:.6g} "
            f"+/- {final.duality_gap_std:.3g}",
            f"final sparsity x/y: {final.sparsity_x_mean:.4f}/{final.sparsity_y_mean:.4f}",
            f"final rank x/y: {final.rank_x_mean:.2f}/{final.rank_y_mean:.2f}",
            f"best round: {records[best].round} (gap {gaps[best]:.6g})",
        ]
        per_client = 2 if final.method in EXTRA_STEP_METHODS else 1
        lines.append(
            f"total gradient-oracle calls per seed: {per_client * final.cumulative_local_steps}"
        )
    else:
        gaps = [r.duality_gap for r in records]
        best = min(range(len(records)), key=lambda i: gaps[i])
        per_client = 2 if final.method in EXTRA_STEP_METHODS else 1
        lines = [
            f"method: {final.method} (seed {final.seed})",
            f"final round {final.round}: gap {final.duality_gap:.6g}",
            f"final sparsity x/y: {final.sparsity_x:.4f}/{final.sparsity_y:.4f}",
            f"final rank x/y: {final.rank_x}/{final.rank_y}",
            f"best round: {records[best].round} (gap {gaps[best]:.6g})",
            f"total gradient-oracle calls: {per_client * final.cumulative_local_steps}",
        ]
    return "\n".join(lines)


# --------------------------- configuration -------------------------------- #

# config-file key -> (section, SimConfig field, parser)
_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _parse_bool(raw: str) -> bool:
    try:
        return _BOOL[raw.strip().lower()]
    except KeyError:
        raise ValueError(f"not a boolean: {raw!r}")


_CONFIG_KEYS = {
    ("problem", "kind"): ("problem_kind", str),
    ("problem", "m"): ("m", int),
    ("problem", "n"): ("n", int),
    ("problem", "p"): ("p", int),
    ("problem", "lambda"): ("lam", float),
    ("problem", "d"): ("D", float),
    ("problem", "problem_seed"): ("problem_seed", int),
    ("run", "method"): ("method", str),
    ("run", "rounds"): ("R", int),
    ("run", "local_steps"): ("K", int),
    ("run", "clients"): ("M", int),
    ("run", "sigma"): ("sigma", float),
    ("run", "eta_server"): ("eta_s", float),
    ("run", "eta_client"): ("eta_c", float),
    ("run", "participation_fraction"): ("participation_fraction", float),
    ("run", "seed"): ("seed", int),
    ("run", "eval_every"): ("eval_every", int),
    ("run", "deployable_output"): ("deployable_output", _parse_bool),
    ("run", "last_iterate_eval"): ("last_iterate_eval", _parse_bool),
    ("run", "output"): ("output_path", str),
}


def _read_config_file(path) -> dict:
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"config file {path}: {exc}")
    values = {}
    for section in parser.sections():
        if section not in ("problem", "run"):
            raise ConfigError(f"config file {path}: unknown section [{section}]")
        for key, raw in parser.items(section):
            try:
                field, parse = _CONFIG_KEYS[(section, key)]
            except KeyError:
                raise ConfigError(f"config file {path}: unknown key {section}.{key}")
            try:
                values[field] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"config file {path}: {section}.{key}: {exc}")
    return values


def parse_config(path=None, preset=None, overrides=None) -> SimConfig:
    """Assemble a SimConfig: preset values, then config-file values, then
    explicit overrides (command-line flags); the result is validated."""
    values: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r} (have {sorted(PRESETS)})")
        values.update(PRESETS[preset])
    if path is not None:
        values.update(_read_config_file(path))
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    if "method" not in values:
        raise ConfigError("method: required (flag --method, config, or preset)")
    method = values["method"]
    if preset is not None and "eta_c" not in values and (preset, method) in TUNED_STEPS:
        values["eta_s"], values["eta_c"] = TUNED_STEPS[(preset, method)]
    known = {f.name for f in fields(SimConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    return SimConfig(**values).validate()


# ------------------------------ subcommands ------------------------------- #


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="path to a key=value config file")
    p.add_argument("--preset", help=f"named experiment preset ({', '.join(sorted(PRESETS))})")
    p.add_argument("--method", help="optimization method")
    p.add_argument("--problem", dest="problem_kind", help="problem kind")
    p.add_argument("--rounds", type=int, dest="R")
    p.add_argument("--local-steps", type=int, dest="K")
    p.add_argument("--clients", type=int, dest="M")
    p.add_argument("--sigma", type=float)
    p.add_argument("--eta-server", type=float, dest="eta_s")
    p.add_argument("--eta-client", type=float, dest="eta_c")
    p.add_argument("--lambda", type=float, dest="lam")
    p.add_argument("--radius", type=float, dest="D", help="box / spectral ball radius D")
    p.add_argument("--participation", type=float, dest="participation_fraction")
    p.add_argument("--seed", type=int)
    p.add_argument("--problem-seed", type=int, dest="problem_seed")
    p.add_argument("--eval-every", type=int, dest="eval_every")
    p.add_argument("--output", dest="output_path")
    p.add_argument(
        "--deployable-output",
        action="store_const",
        const=True,
        default=None,
        dest="deployable_output",
        help="evaluate the ergodic average of round-boundary server projections "
        "instead of the shadow half-step average",
    )
    p.add_argument(
        "--last-iterate",
        action="store_const",
        const=True,
        default=None,
        dest="last_iterate_eval",
        help="evaluate the current server projection instead of the ergodic average",
    )


_OVERRIDE_KEYS = (
    "method", "problem_kind", "R", "K", "M", "sigma", "eta_s", "eta_c", "lam", "D",
    "participation_fraction", "seed", "problem_seed", "eval_every", "output_path",
    "deployable_output", "last_iterate_eval",
)


def _config_from_args(args) -> SimConfig:
    overrides = {k: getattr(args, k) for k in _OVERRIDE_KEYS if hasattr(args, k)}
    return parse_config(path=args.config, preset=args.preset, overrides=overrides)


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    records = run_experiment(cfg)
    if cfg.output_path:
        write_csv(records, cfg.output_path)
        print(f"wrote {len(records)} records to {cfg.output_path}")
    print(summarize(records))
    return 0


def _parse_grid(raw, fallback):
    if raw is None:
        return fallback
    try:
        return tuple(float(tok) for tok in raw.split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"grid: not a comma-separated float list: {raw!r}")


def _cmd_grid(args) -> int:
    cfg = _config_from_args(args)
    eta_s_grid = _parse_grid(args.eta_server_grid, ETA_S_GRID)
    eta_c_grid = _parse_grid(args.eta_client_grid, default_eta_c_grid(cfg.problem_kind))
    res = grid_search(cfg, eta_s_grid, eta_c_grid)
    print(f"{'eta_s':>10} {'eta_c':>10} {'final gap':>14}")
    for cell in res.cells:
        gap = "diverged" if cell.final_gap is None else f"{cell.final_gap:.6g}"
        print(f"{cell.eta_s:>10g} {cell.eta_c:>10g} {gap:>14}")
    print(
        f"winner: eta_s={res.best_cfg.eta_s:g} eta_c={res.best_cfg.eta_c:g} "
        f"final gap {res.best_records[-1].duality_gap:.6g}"
    )
    if cfg.output_path:
        write_csv(res.best_records, cfg.output_path)
        print(f"wrote winning series to {cfg.output_path}")
    return 0


def _cmd_seeds(args) -> int:
    cfg = _config_from_args(args)
    agg = repeat_seeds(cfg, args.num_seeds)
    if agg.n_diverged:
        print(f"warning: {agg.n_diverged}/{agg.n_seeds} seeds diverged and were excluded")
    if cfg.output_path:
        write_csv(agg.rows, cfg.output_path)
        print(f"wrote {len(agg.rows)} aggregated rows to {cfg.output_path}")
    print(summarize(agg.rows))
    return 0


def _cmd_summarize(args) -> int:
    print(summarize(read_csv(args.input)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsaddle",
        description="Federated composite saddle-point optimization simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configured experiment")
    _add_common_flags(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_grid = sub.add_parser("grid", help="grid-search server/client step sizes")
    _add_common_flags(p_grid)
    p_grid.add_argument("--eta-server-grid", help="comma list (default: protocol grid)")
    p_grid.add_argument("--eta-client-grid", help="comma list (default: protocol grid)")
    p_grid.set_defaults(fn=_cmd_grid)

    p_seeds = sub.add_parser("seeds", help="repeat a run over seeds and aggregate")
    _add_common_flags(p_seeds)
    p_seeds.add_argument("--num-seeds", type=int, default=10)
    p_seeds.set_defaults(fn=_cmd_seeds)

    p_sum = sub.add_parser("summarize", help="report on a stored metric CSV")
    p_sum.add_argument("--input", required=True)
    p_sum.set_defaults(fn=_cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, CsvFormatError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    except NoViableConfigError as exc:
        print(f"grid search failed: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
