#!/usr/bin/env python3
"""Empirical convergence-rate checks for the sequential dual-extrapolation
methods on a 2-D bilinear toy (x, y scalar, payoff x*y, unit box).

Deterministic: the ergodic duality gap is compared against the beta*B/T
bound at step size 1/beta.  Stochastic: the gap ratio across a 4x horizon
increase is compared with the 1/sqrt(T) prediction (ratio 0.5), averaged
over seeds.
"""

import argparse
import sys

import numpy as np

from fedsaddle.fedsim import SimConfig, repeat_seeds, run_experiment
from fedsaddle.problems import BilinearL1Problem

BETA = 1.0
D = 1.0
BREGMAN_DIAMETER = 4.0  # max 0.5*||z - z'||^2 over the product box


def toy_problem():
    return BilinearL1Problem(A=np.array([[1.0]]), b=np.array([0.0]), lam=0.0, D=D)


def toy_cfg(method, T, eta, sigma, seed=0):
    return SimConfig(
        method=method, problem_kind="bilinear_l1", m=1, n=1, lam=0.0, D=D,
        M=1, R=T, K=1, eta_c=eta, sigma=sigma, seed=seed, eval_every=max(1, T),
    )


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20, help="seeds for the stochastic check")
    args = ap.parse_args()

    prob = toy_problem()
    print("deterministic composite dual extrapolation, eta = 1/(2*beta):")
    gaps = {}
    for T in (10, 100, 1000):
        recs = run_experiment(toy_cfg("seq_composite_de", T, 0.5 / BETA, 0.0), problem=prob)
        gaps[T] = recs[-1].duality_gap
        bound = BETA * BREGMAN_DIAMETER / T
        print(f"  T={T:5d}: gap {gaps[T]:.6f}  bound beta*B/T = {bound:.6f}  "
              f"{'OK' if gaps[T] <= bound else 'VIOLATED'}")
    if gaps[100] > 0:
        print(f"  gap(1000)/gap(100) = {gaps[1000] / gaps[100]:.3f} (O(1/T) predicts 0.1)")

    print(f"stochastic dual extrapolation, sigma = 0.1, {args.seeds} seeds:")
    mean_gap = {}
    for T in (1600, 6400):
        eta = min(1.0 / (3 * BETA**2), np.sqrt(BREGMAN_DIAMETER) / (np.sqrt(3.0) * 0.1 * np.sqrt(T)))
        agg = repeat_seeds(toy_cfg("seq_stochastic_de", T, eta, 0.1), args.seeds, problem=prob)
        mean_gap[T] = agg.rows[-1].duality_gap_mean
        print(f"  T={T:5d}: mean gap {mean_gap[T]:.6f} (eta = {eta:.4f})")
    print(f"  ratio = {mean_gap[6400] / mean_gap[1600]:.3f} (O(1/sqrt(T)) predicts 0.5)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
