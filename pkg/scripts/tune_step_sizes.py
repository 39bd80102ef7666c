#!/usr/bin/env python3
"""Grid-search server/client step sizes for the benchmark presets.

Runs the tuning protocol (single seed, minimal final duality gap, ties to
larger steps) for each requested method and prints the winners as entries
for fedsaddle.fedsim.TUNED_STEPS.  Results, including the full grid tables,
go to a JSON file.

Example:
    FEDSADDLE_WORKERS=2 python scripts/tune_step_sizes.py \
        --preset l1-k10 --methods fedualex,fedmip,fedmid,feddualavg \
        --out results/tuning_l1_k10.json
"""

import argparse
import json
import pathlib
import sys
import time

from fedsaddle.cli import parse_config
from fedsaddle.fedsim import ETA_S_GRID, default_eta_c_grid, grid_search


def parse_grid(raw, fallback):
    if raw is None:
        return fallback
    return tuple(float(tok) for tok in raw.split(",") if tok.strip())


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", required=True)
    ap.add_argument("--methods", required=True, help="comma-separated method names")
    ap.add_argument("--eta-server-grid", default=None)
    ap.add_argument("--eta-client-grid", default=None)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None, help="JSON output path")
    args = ap.parse_args()

    results = {}
    for method in args.methods.split(","):
        method = method.strip()
        cfg = parse_config(preset=args.preset, overrides={"method": method, "seed": args.seed})
        eta_s_grid = parse_grid(args.eta_server_grid, ETA_S_GRID)
        eta_c_grid = parse_grid(args.eta_client_grid, default_eta_c_grid(cfg.problem_kind))
        t0 = time.time()
        res = grid_search(cfg, eta_s_grid, eta_c_grid)
        dt = time.time() - t0
        table = [
            {"eta_s": c.eta_s, "eta_c": c.eta_c, "final_gap": c.final_gap}
            for c in res.cells
        ]
        results[method] = {
            "preset": args.preset,
            "eta_s": res.best_cfg.eta_s,
            "eta_c": res.best_cfg.eta_c,
            "final_gap": res.best_records[-1].duality_gap,
            "final_sparsity_x": res.best_records[-1].sparsity_x,
            "final_rank_x": res.best_records[-1].rank_x,
            "grid_seconds": dt,
            "cells": table,
        }
        win = results[method]
        print(
            f'    ("{args.preset}", "{method}"): ({win["eta_s"]}, {win["eta_c"]}),'
            f'  # final gap {win["final_gap"]:.4g} ({dt/60:.1f} min)',
            flush=True,
        )
    if args.out:
        out = pathlib.Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(results, indent=2))
        print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
