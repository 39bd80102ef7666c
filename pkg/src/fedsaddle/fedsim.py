"""Synchronous federation simulator: rounds, sampling, metrics, grid search.

The engine advances every participating client of a round at once on stacked
arrays (one leading client axis), which is numerically identical to looping
clients one at a time because every per-client operation is elementwise and
reductions over clients are performed in ascending index order after the
round barrier.  Runs are a pure function of the configuration: problem data
derives from ``problem_seed``, while initialization, gradient noise, and
client sampling derive from ``seed``.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bregman import GeneralizedDgf, Pair, prox_map
from .optimizers import DivergenceError
from .problems import (
    InfeasiblePointError,
    NoiseModel,
    duality_gap,
    generate_l1_problem,
    generate_nuclear_problem,
    generate_quadratic_problem,
    gradient_operator,
    init_point,
    numerical_rank,
    sparsity,
    stochastic_gradient_block,
)

METHODS = (
    "fedualex",
    "fedmip",
    "fedmid",
    "feddualavg",
    "seq_stochastic_de",
    "seq_composite_de",
)
SEQUENTIAL_METHODS = frozenset({"seq_stochastic_de", "seq_composite_de"})
EXTRA_STEP_METHODS = frozenset({"fedualex", "fedmip", "seq_stochastic_de", "seq_composite_de"})
PROBLEM_KINDS = ("bilinear_l1", "bilinear_nuclear", "quadratic_l1")

GAP_DIVERGENCE_LIMIT = 1e6
_SAMPLE_TAG = 3
WORKERS_ENV = "FEDSADDLE_WORKERS"

# Paper-protocol search grids (server x client step size).
ETA_S_GRID = (1.0, 0.3, 0.1, 0.03, 0.01)
ETA_C_GRID_L1 = (1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001)
ETA_C_GRID_NUCLEAR = (10.0, 3.0, 1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001)


class ConfigError(ValueError):
    """Invalid or out-of-range configuration value; names the key."""


class NoViableConfigError(RuntimeError):
    """Every grid-search cell diverged."""


@dataclass
class SimConfig:
    method: str
    problem_kind: str = "bilinear_l1"
    m: int = 600
    n: int = 300
    p: int = 20  # nuclear problem only
    lam: float = 0.1
    D: float = 0.05
    problem_seed: int = 0
    M: int = 100
    R: int = 500
    K: int = 10
    eta_s: float = 1.0
    eta_c: float = 0.1
    sigma: float = 0.1
    participation_fraction: float = 1.0
    seed: int = 0
    eval_every: int = 0  # 0 means auto: 10 when R >= 5000, else 1
    deployable_output: bool = False
    last_iterate_eval: bool = False
    output_path: str | None = None

    def validate(self) -> "SimConfig":
        def bad(key, why):
            raise ConfigError(f"{key}: {why}")

        if self.method not in METHODS:
            bad("method", f"unknown method {self.method!r} (choose from {METHODS})")
        if self.problem_kind not in PROBLEM_KINDS:
            bad("problem_kind", f"unknown problem {self.problem_kind!r}")
        if self.m < 1 or self.n < 1:
            bad("m/n", "dimensions must be at least 1")
        if self.problem_kind == "bilinear_nuclear" and (self.p < 2 or self.p % 2):
            bad("p", "must be an even integer >= 2")
        if self.lam < 0:
            bad("lambda", "must be nonnegative")
        if not self.D > 0:
            bad("D", "must be positive")
        if self.M < 1:
            bad("clients", "must be at least 1")
        if self.R < 0:
            bad("rounds", "must be nonnegative (0 evaluates the initialization only)")
        if self.K < 1:
            bad("local_steps", "must be at least 1")
        if not self.eta_c > 0:
            bad("eta_client", "must be positive")
        if not self.eta_s > 0:
            bad("eta_server", "must be positive")
        if self.sigma < 0:
            bad("sigma", "must be nonnegative")
        if not 0 < self.participation_fraction <= 1:
            bad("participation_fraction", "must lie in (0, 1]")
        if self.participation_fraction * self.M < 1:
            bad("participation_fraction", "fraction * clients must be at least 1")
        if self.seed < 0 or self.problem_seed < 0:
            bad("seed", "seeds must be nonnegative")
        if self.eval_every < 0:
            bad("eval_every", "must be nonnegative (0 = auto)")
        if self.method in SEQUENTIAL_METHODS:
            if self.M != 1:
                bad("clients", "sequential methods require clients = 1")
            if self.eta_s != 1.0:
                bad("eta_server", "sequential methods require eta_server = 1")
            if self.participation_fraction != 1.0:
                bad("participation_fraction", "sequential methods require full participation")
            if self.deployable_output:
                bad("deployable_output", "sequential methods have no round-boundary projections")
        if self.method == "seq_composite_de" and self.sigma != 0.0:
            bad("sigma", "seq_composite_de is deterministic; set sigma = 0")
        return self

    def effective_eval_every(self) -> int:
        if self.eval_every > 0:
            return self.eval_every
        return 10 if self.R >= 5000 else 1


@dataclass
class RunRecord:
    method: str
    round: int
    cumulative_local_steps: int
    duality_gap: float
    sparsity_x: float
    sparsity_y: float
    rank_x: int
    rank_y: int
    wall_ms: float
    seed: int


def build_problem(cfg: SimConfig):
    if cfg.problem_kind == "bilinear_l1":
        return generate_l1_problem(cfg.m, cfg.n, cfg.problem_seed, lam=cfg.lam, D=cfg.D)
    if cfg.problem_kind == "bilinear_nuclear":
        return generate_nuclear_problem(cfg.m, cfg.n, cfg.p, cfg.problem_seed, lam=cfg.lam, D=cfg.D)
    return generate_quadratic_problem(cfg.m, cfg.problem_seed, lam=cfg.lam, D=cfg.D)


def sample_clients(M: int, fraction: float, rng_key) -> np.ndarray:
    """Uniform sample without replacement of ceil(fraction * M) client
    indices, returned sorted ascending; rng_key is (seed, round)."""
    seed, r = rng_key
    count = int(np.ceil(fraction * M))
    rng = np.random.default_rng(np.random.SeedSequence([seed, _SAMPLE_TAG, r]))
    return np.sort(rng.choice(M, size=count, replace=False))


def _tile(p: Pair, count: int) -> Pair:
    return p.map(lambda b: np.broadcast_to(b, (count,) + b.shape).copy())


def _row0(p: Pair) -> Pair:
    return p.map(lambda b: b[0].copy())


def _mean_rows(p: Pair) -> Pair:
    """Across-client mean by ascending-index summation over the stack axis."""

    def mean1(arr):
        acc = arr[0].copy()
        for i in range(1, arr.shape[0]):
            acc += arr[i]
        return acc / arr.shape[0]

    return p.map(mean1)


class _Ergodic:
    """Running uniform average of evaluation points."""

    def __init__(self):
        self.sum: Pair | None = None
        self.count = 0

    def add(self, p: Pair) -> None:
        self.sum = p.copy() if self.sum is None else self.sum + p
        self.count += 1

    def average(self, fallback: Pair) -> Pair:
        if self.count == 0:
            return fallback
        return self.sum.map(lambda b: b / self.count)


@dataclass
class RunStats:
    oracle_calls: int = 0
    participant_steps: int = 0  # sum over rounds of |C_r| * K


def _measure(problem, gap_point: Pair, struct_point: Pair, method, rnd, steps, seed, wall0) -> RunRecord:
    """One metrics row.  The duality gap is taken at the method's output
    point (ergodic average by default, per the convergence theorems); the
    structure metrics, sparsity and rank, describe the solution a deployment
    would use, the freshly projected server state, where the regularization
    actually bites (a uniform average of thresholded iterates is generically
    dense and full-rank)."""
    if not gap_point.is_finite() or not struct_point.is_finite():
        raise DivergenceError(f"non-finite evaluation point at round {rnd}", rnd)
    try:
        gap = duality_gap(problem, gap_point)
    except InfeasiblePointError:
        raise DivergenceError(f"infeasible evaluation point at round {rnd}", rnd)
    if not np.isfinite(gap) or gap > GAP_DIVERGENCE_LIMIT:
        raise DivergenceError(f"duality gap {gap} at round {rnd} exceeds limit", rnd)
    return RunRecord(
        method=method,
        round=rnd,
        cumulative_local_steps=steps,
        duality_gap=gap,
        sparsity_x=sparsity(struct_point.x),
        sparsity_y=0.0 if struct_point.y is None else sparsity(struct_point.y),
        rank_x=numerical_rank(struct_point.x),
        rank_y=0 if struct_point.y is None else numerical_rank(struct_point.y),
        wall_ms=(time.perf_counter() - wall0) * 1000.0,
        seed=seed,
    )


def run_experiment(cfg: SimConfig, problem=None, trace=None, stats: RunStats | None = None):
    """Execute a configured run and return its metric records.

    ``trace``, when a list, collects per-local-step diagnostics (round, step,
    half-point, client-0 dual/primal state).  ``stats`` collects gradient
    oracle counts.  Deterministic per (cfg, problem data): records are
    byte-identical across repeats except for the wall-clock column.
    """
    cfg.validate()
    if problem is None:
        problem = build_problem(cfg)
    if stats is None:
        stats = RunStats()
    z0 = init_point(problem, cfg.seed)
    noise = NoiseModel(sigma=cfg.sigma, seed=cfg.seed)
    if cfg.method in SEQUENTIAL_METHODS:
        return _run_sequential(cfg, problem, z0, noise, trace, stats)
    return _run_federated(cfg, problem, z0, noise, trace, stats)


def _run_federated(cfg: SimConfig, problem, z0: Pair, noise, trace, stats):
    reg = problem.regularizer()
    method = cfg.method
    eta_c, eta_s, K = cfg.eta_c, cfg.eta_s, cfg.K
    wall0 = time.perf_counter()
    eval_every = cfg.effective_eval_every()

    # the dual anchor is the mirror image of the initial point, so the first
    # primal projection of every method reproduces the sampled initialization
    bar = z0
    dual_server = z0.zeros_like()  # fedualex server dual
    mu_server = z0.copy()  # feddualavg server dual state
    z_server = z0.copy()  # primal-aggregating methods

    ergodic = _Ergodic()
    deployable = _Ergodic()
    records = [_measure(problem, z0, z0, method, 0, 0, cfg.seed, wall0)]
    steps_done = 0

    for r in range(cfg.R):
        participants = sample_clients(cfg.M, cfg.participation_fraction, (cfg.seed, r))
        P = len(participants)

        if method == "fedualex":
            sig = _tile(dual_server, P)
            for k in range(K):
                dgf_now = GeneralizedDgf(reg, eta_c * (eta_s * r * K + k))
                dgf_next = GeneralizedDgf(reg, eta_c * (eta_s * r * K + k + 1))
                omega = bar - sig
                z_k = prox_map(dgf_now, omega)
                g1 = stochastic_gradient_block(problem, z_k, noise, participants, r, k, 0)
                a_half = omega - eta_c * g1
                z_half = prox_map(dgf_next, a_half)
                ergodic.add(prox_map(dgf_next, _mean_rows(a_half)))
                g2 = stochastic_gradient_block(problem, z_half, noise, participants, r, k, 1)
                sig = sig + eta_c * g2
                stats.oracle_calls += 2 * P
                if trace is not None:
                    trace.append(
                        {"r": r, "k": k, "z_half": _row0(z_half), "state": _row0(sig)}
                    )
            dual_server = _mean_rows(sig) if eta_s == 1.0 else (
                (1.0 - eta_s) * dual_server + eta_s * _mean_rows(sig)
            )
            server_state = dual_server
        elif method == "feddualavg":
            mu = _tile(mu_server, P)
            for k in range(K):
                dgf_now = GeneralizedDgf(reg, eta_c * (eta_s * r * K + k))
                z_k = prox_map(dgf_now, mu)
                ergodic.add(prox_map(dgf_now, _mean_rows(mu)))
                g = stochastic_gradient_block(problem, z_k, noise, participants, r, k, 0)
                mu = mu - eta_c * g
                stats.oracle_calls += P
                if trace is not None:
                    trace.append({"r": r, "k": k, "z_half": _row0(z_k), "state": _row0(mu)})
            mu_server = _mean_rows(mu) if eta_s == 1.0 else (
                (1.0 - eta_s) * mu_server + eta_s * _mean_rows(mu)
            )
            server_state = mu_server
        else:  # primal-aggregating: fedmip / fedmid
            dgf_local = GeneralizedDgf(reg, eta_c)
            z_c = _tile(z_server, P)
            for k in range(K):
                if method == "fedmip":
                    g1 = stochastic_gradient_block(problem, z_c, noise, participants, r, k, 0)
                    z_half = prox_map(dgf_local, z_c - eta_c * g1)
                    ergodic.add(_mean_rows(z_half))
                    g2 = stochastic_gradient_block(problem, z_half, noise, participants, r, k, 1)
                    z_c = prox_map(dgf_local, z_c - eta_c * g2)
                    stats.oracle_calls += 2 * P
                else:
                    ergodic.add(_mean_rows(z_c))
                    g = stochastic_gradient_block(problem, z_c, noise, participants, r, k, 0)
                    z_c = prox_map(dgf_local, z_c - eta_c * g)
                    stats.oracle_calls += P
                if trace is not None:
                    trace.append({"r": r, "k": k, "z_half": None, "state": _row0(z_c)})
            dgf_server = GeneralizedDgf(reg, eta_s * eta_c * K)
            mixed = _mean_rows(z_c) if eta_s == 1.0 else (
                (1.0 - eta_s) * z_server + eta_s * _mean_rows(z_c)
            )
            z_server = prox_map(dgf_server, mixed)
            server_state = z_server

        if not server_state.is_finite():
            raise DivergenceError(f"non-finite server state after round {r}", r)
        steps_done += P * K
        stats.participant_steps += P * K
        if cfg.deployable_output:
            deployable.add(
                _server_projection(method, cfg, reg, bar, dual_server, mu_server, z_server, r + 1)
            )

        if (r + 1) % eval_every == 0 or r + 1 == cfg.R:
            struct_point = _server_projection(
                method, cfg, reg, bar, dual_server, mu_server, z_server, r + 1
            )
            if cfg.last_iterate_eval:
                gap_point = struct_point
            elif cfg.deployable_output:
                gap_point = deployable.average(z0)
            else:
                gap_point = ergodic.average(z0)
            records.append(
                _measure(problem, gap_point, struct_point, method, r + 1,
                         steps_done, cfg.seed, wall0)
            )
    return records


def _server_projection(method, cfg, reg, bar, dual_server, mu_server, z_server, next_round):
    """The deployable solution after a round: project the aggregated server
    state (primal methods already hold a primal point)."""
    t_round = cfg.eta_c * (cfg.eta_s * next_round * cfg.K)
    if method == "fedualex":
        return prox_map(GeneralizedDgf(reg, t_round), bar - dual_server)
    if method == "feddualavg":
        return prox_map(GeneralizedDgf(reg, t_round), mu_server)
    return z_server.copy()


def _run_sequential(cfg: SimConfig, problem, z0: Pair, noise, trace, stats):
    reg = problem.regularizer()
    eta, K = cfg.eta_c, cfg.K
    stochastic = cfg.method == "seq_stochastic_de"
    wall0 = time.perf_counter()
    eval_stride = cfg.effective_eval_every() * K

    bar = z0
    sig = _tile(z0.zeros_like(), 1)  # batch axis of one, shared kernels
    client0 = np.array([0])
    ergodic = _Ergodic()
    records = [_measure(problem, z0, z0, cfg.method, 0, 0, cfg.seed, wall0)]

    T = cfg.R * K
    for t in range(T):
        r, k = divmod(t, K)
        dgf_now = GeneralizedDgf(reg, eta * t)
        dgf_next = GeneralizedDgf(reg, eta * (t + 1))
        omega = bar - sig
        z_t = prox_map(dgf_now, omega)
        if stochastic:
            g1 = stochastic_gradient_block(problem, z_t, noise, client0, r, k, 0)
        else:
            g1 = gradient_operator(problem, z_t)
        z_half = prox_map(dgf_next, omega - eta * g1)
        ergodic.add(_row0(z_half))
        if stochastic:
            g2 = stochastic_gradient_block(problem, z_half, noise, client0, r, k, 1)
        else:
            g2 = gradient_operator(problem, z_half)
        sig = sig + eta * g2
        stats.oracle_calls += 2
        stats.participant_steps += 1
        if trace is not None:
            trace.append({"r": r, "k": k, "z_half": _row0(z_half), "state": _row0(sig)})
        if not sig.is_finite():
            raise DivergenceError(f"non-finite dual iterate at step {t}", r)

        if (t + 1) % eval_stride == 0 or t + 1 == T:
            struct_point = prox_map(GeneralizedDgf(reg, eta * (t + 1)), _row0(bar - sig))
            gap_point = struct_point if cfg.last_iterate_eval else ergodic.average(z0)
            records.append(
                _measure(problem, gap_point, struct_point, cfg.method,
                         (t + 1) // K, t + 1, cfg.seed, wall0)
            )
    return records


# ------------------------------ grid search ------------------------------- #


@dataclass
class GridCell:
    eta_s: float
    eta_c: float
    final_gap: float | None  # None when the run diverged
    records: list = field(default_factory=list)


@dataclass
class GridSearchResult:
    best_cfg: SimConfig
    best_records: list
    cells: list


def default_eta_c_grid(problem_kind: str):
    return ETA_C_GRID_NUCLEAR if problem_kind == "bilinear_nuclear" else ETA_C_GRID_L1


def _workers() -> int:
    return max(1, int(os.environ.get(WORKERS_ENV, "1") or "1"))


def _grid_cell_run(args):
    cfg, problem = args
    try:
        records = run_experiment(cfg, problem=problem)
        return GridCell(cfg.eta_s, cfg.eta_c, records[-1].duality_gap, records)
    except DivergenceError:
        return GridCell(cfg.eta_s, cfg.eta_c, None, [])


def grid_search(base_cfg: SimConfig, eta_s_grid, eta_c_grid, problem=None) -> GridSearchResult:
    """Run every (eta_s, eta_c) combination and pick the minimal final
    duality gap; ties break toward larger eta_c, then larger eta_s.
    Diverged cells are kept in the table but excluded from selection."""
    if not eta_s_grid or not eta_c_grid:
        raise ConfigError("grid: step-size grids must be nonempty")
    cfgs = [
        replace(base_cfg, eta_s=float(es), eta_c=float(ec))
        for es in eta_s_grid
        for ec in eta_c_grid
    ]
    jobs = [(cfg, problem) for cfg in cfgs]
    if _workers() > 1:
        with ProcessPoolExecutor(max_workers=_workers()) as pool:
            cells = list(pool.map(_grid_cell_run, jobs))
    else:
        cells = [_grid_cell_run(job) for job in jobs]
    best = select_best_cell(cells)
    best_cfg = replace(base_cfg, eta_s=best.eta_s, eta_c=best.eta_c)
    return GridSearchResult(best_cfg=best_cfg, best_records=best.records, cells=cells)


def select_best_cell(cells) -> GridCell:
    """Minimal final gap among converged cells; ties break toward larger
    eta_c, then larger eta_s."""
    viable = [c for c in cells if c.final_gap is not None]
    if not viable:
        raise NoViableConfigError("grid search: every configuration diverged")
    return min(viable, key=lambda c: (c.final_gap, -c.eta_c, -c.eta_s))


# ------------------------------ seed repeats ------------------------------ #


@dataclass
class AggRecord:
    method: str
    round: int
    cumulative_local_steps: int
    duality_gap_mean: float
    duality_gap_std: float
    sparsity_x_mean: float
    sparsity_x_std: float
    sparsity_y_mean: float
    sparsity_y_std: float
    rank_x_mean: float
    rank_x_std: float
    rank_y_mean: float
    rank_y_std: float
    n_seeds: int
    seed0: int


@dataclass
class SeedAggregate:
    rows: list
    n_seeds: int
    n_diverged: int
    per_seed_records: list  # list of record lists, converged seeds only


def _seed_run(args):
    cfg, problem = args
    try:
        return run_experiment(cfg, problem=problem)
    except DivergenceError:
        return None


def repeat_seeds(cfg: SimConfig, n_seeds: int, problem=None) -> SeedAggregate:
    """Run seeds cfg.seed .. cfg.seed + n_seeds - 1 and aggregate pointwise
    mean and (population) std of the metric columns; diverged seeds are
    excluded and counted."""
    if n_seeds < 1:
        raise ConfigError("n_seeds: must be at least 1")
    jobs = [(replace(cfg, seed=cfg.seed + i), problem) for i in range(n_seeds)]
    if _workers() > 1:
        with ProcessPoolExecutor(max_workers=_workers()) as pool:
            results = list(pool.map(_seed_run, jobs))
    else:
        results = [_seed_run(job) for job in jobs]
    kept = [r for r in results if r is not None]
    n_diverged = n_seeds - len(kept)
    if not kept:
        raise NoViableConfigError("repeat_seeds: every seed diverged")
    length = min(len(r) for r in kept)
    rows = []
    for i in range(length):
        recs = [r[i] for r in kept]

        def ms(vals):
            arr = np.array(vals, dtype=np.float64)
            return float(arr.mean()), float(arr.std())

        gap = ms([x.duality_gap for x in recs])
        sx = ms([x.sparsity_x for x in recs])
        sy = ms([x.sparsity_y for x in recs])
        rx = ms([x.rank_x for x in recs])
        ry = ms([x.rank_y for x in recs])
        rows.append(
            AggRecord(
                method=cfg.method,
                round=recs[0].round,
                cumulative_local_steps=recs[0].cumulative_local_steps,
                duality_gap_mean=gap[0],
                duality_gap_std=gap[1],
                sparsity_x_mean=sx[0],
                sparsity_x_std=sx[1],
                sparsity_y_mean=sy[0],
                sparsity_y_std=sy[1],
                rank_x_mean=rx[0],
                rank_x_std=rx[1],
                rank_y_mean=ry[0],
                rank_y_std=ry[1],
                n_seeds=len(kept),
                seed0=cfg.seed,
            )
        )
    return SeedAggregate(rows=rows, n_seeds=n_seeds, n_diverged=n_diverged, per_seed_records=kept)


# ------------------------------- presets ---------------------------------- #

PRESETS: dict[str, dict] = {
    "l1-k1": dict(problem_kind="bilinear_l1", m=600, n=300, lam=0.1, D=0.05,
                  M=100, sigma=0.1, K=1, R=5000),
    "l1-k10": dict(problem_kind="bilinear_l1", m=600, n=300, lam=0.1, D=0.05,
                   M=100, sigma=0.1, K=10, R=500),
    "nuclear-k1": dict(problem_kind="bilinear_nuclear", m=600, n=300, p=20, lam=0.1,
                       D=0.05, M=100, sigma=0.1, K=1, R=100),
    "nuclear-k10": dict(problem_kind="bilinear_nuclear", m=600, n=300, p=20, lam=0.1,
                        D=0.05, M=100, sigma=0.1, K=10, R=20),
}

# Grid-tuned (eta_s, eta_c) per (preset, method), selected by grid_search
# over the protocol grids above (minimal final duality gap, single seed).
# Regenerate with scripts/tune_step_sizes.py.
TUNED_STEPS: dict[tuple[str, str], tuple[float, float]] = {}
