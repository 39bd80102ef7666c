"""Benchmark saddle-point problems, gradients with seeded noise, and gaps.

Two bilinear benchmarks (l1-regularized with box constraints, and
nuclear-norm-regularized with spectral-ball constraints) plus a quadratic
composite problem whose exact minimizer is known, used as the convex-mode
sanity target.  Gradient noise is drawn from counter-style streams keyed by
(client, round, local step, half step), so every draw is a pure function of
its key and replay is exact.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .bregman import Pair, Regularizer, soft_threshold_clip, svt_clip
from .linalg import l1_norm, linf_norm, thin_svd

NONZERO_TOL = 1e-5  # entries / singular values below this count as zero
_FEAS_SLACK = 1e-6  # tolerance when checking box / spectral feasibility

_INIT_TAG = 1
_NOISE_TAG = 2


class InfeasiblePointError(ValueError):
    """Gap evaluation requested at a point outside the feasible set."""


@dataclass
class BilinearL1Problem:
    """min_x max_y <Ax - b, y> + lam*||x||_1 - lam*||y||_1 over linf balls."""

    A: np.ndarray
    b: np.ndarray
    lam: float
    D: float

    kind = "bilinear_l1"

    @property
    def x_shape(self):
        return (self.A.shape[1],)

    @property
    def y_shape(self):
        return (self.A.shape[0],)

    def regularizer(self) -> Regularizer:
        return Regularizer("l1_box", lam=self.lam, D=self.D)


@dataclass
class BilinearNuclearProblem:
    """min_X max_Y Tr((AX - B)^T Y) + lam*||X||_* - lam*||Y||_* over
    spectral-norm balls."""

    A: np.ndarray
    B: np.ndarray
    lam: float
    D: float

    kind = "bilinear_nuclear"

    @property
    def x_shape(self):
        return (self.A.shape[1], self.B.shape[1])

    @property
    def y_shape(self):
        return (self.A.shape[0], self.B.shape[1])

    def regularizer(self) -> Regularizer:
        return Regularizer("nuclear_spectral_box", lam=self.lam, D=self.D)


@dataclass
class QuadraticL1Problem:
    """min_x 0.5*||x - c||^2 + lam*||x||_1 over an linf ball (no y block);
    the minimizer is soft_threshold_clip(c, lam, D) coordinate-wise."""

    c: np.ndarray
    lam: float
    D: float

    kind = "quadratic_l1"

    @property
    def x_shape(self):
        return self.c.shape

    @property
    def y_shape(self):
        return None

    def regularizer(self) -> Regularizer:
        return Regularizer("l1_box", lam=self.lam, D=self.D)

    def minimizer(self) -> np.ndarray:
        return soft_threshold_clip(self.c, self.lam, self.D)


Problem = BilinearL1Problem | BilinearNuclearProblem | QuadraticL1Problem


def generate_l1_problem(m: int, n: int, seed: int, lam: float = 0.1, D: float = 0.05) -> BilinearL1Problem:
    """A (n x m) and b (n) with i.i.d. uniform [-1, 1] entries."""
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    A = rng.uniform(-1.0, 1.0, (n, m))
    b = rng.uniform(-1.0, 1.0, n)
    return BilinearL1Problem(A=A, b=b, lam=lam, D=D)


def generate_nuclear_problem(
    m: int, n: int, p: int, seed: int, lam: float = 0.1, D: float = 0.05
) -> BilinearNuclearProblem:
    """A uniform; B (n x p) built from p/2 independent uniform columns plus
    p/2 random linear combinations of them, so B has numerical rank p/2."""
    if p % 2 != 0:
        raise ValueError("p must be even")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    A = rng.uniform(-1.0, 1.0, (n, m))
    half = rng.uniform(-1.0, 1.0, (n, p // 2))
    coeffs = rng.uniform(-1.0, 1.0, (p // 2, p // 2))
    B = np.concatenate([half, half @ coeffs], axis=1)
    return BilinearNuclearProblem(A=A, B=B, lam=lam, D=D)


def generate_quadratic_problem(m: int, seed: int, lam: float = 0.1, D: float = 0.05) -> QuadraticL1Problem:
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    return QuadraticL1Problem(c=rng.uniform(-1.0, 1.0, m), lam=lam, D=D)


def init_point(problem: Problem, seed: int) -> Pair:
    """Seeded initial point: uniform [-D, D] entries for the vector problems;
    uniform [-1, 1] entries spectrally clipped to D for the matrix problem,
    so every run starts feasible."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, _INIT_TAG]))
    if problem.kind == "bilinear_nuclear":
        X = rng.uniform(-1.0, 1.0, problem.x_shape)
        Y = rng.uniform(-1.0, 1.0, problem.y_shape)
        return Pair(svt_clip(X, 0.0, problem.D), svt_clip(Y, 0.0, problem.D))
    D = problem.D
    x = rng.uniform(-D, D, problem.x_shape)
    if problem.y_shape is None:
        return Pair(x, None)
    return Pair(x, rng.uniform(-D, D, problem.y_shape))


def gradient_operator(problem: Problem, z: Pair) -> Pair:
    """g(z) = (grad_x f, -grad_y f).  Blocks may carry a leading stack axis;
    the expressions broadcast over it."""
    if problem.kind == "bilinear_l1":
        if z.x.shape[-1:] != problem.x_shape or z.y.shape[-1:] != problem.y_shape:
            raise ValueError("gradient_operator: shape mismatch")
        return Pair(z.y @ problem.A, problem.b - z.x @ problem.A.T)
    if problem.kind == "bilinear_nuclear":
        if z.x.shape[-2:] != problem.x_shape or z.y.shape[-2:] != problem.y_shape:
            raise ValueError("gradient_operator: shape mismatch")
        return Pair(problem.A.T @ z.y, problem.B - problem.A @ z.x)
    if z.x.shape[-1:] != problem.x_shape:
        raise ValueError("gradient_operator: shape mismatch")
    return Pair(z.x - problem.c, None)


@dataclass
class NoiseModel:
    """Per-coordinate Gaussian gradient noise from deterministic streams.

    The stream for key (client, round, local step, half step) is defined as
    elements [client*d, (client+1)*d) of the standard-normal stream seeded by
    (seed, round, local step, half step), where d is the gradient dimension.
    Identical keys always reproduce identical noise, and a whole round of
    clients can be drawn in one call.
    """

    sigma: float
    seed: int

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def _rng(self, r: int, k: int, half: int):
        return np.random.default_rng(np.random.SeedSequence([self.seed, _NOISE_TAG, r, k, half]))

    def _split(self, flat: np.ndarray, problem: Problem) -> Pair:
        nx = int(np.prod(problem.x_shape))
        x = flat[..., :nx].reshape(flat.shape[:-1] + problem.x_shape)
        if problem.y_shape is None:
            return Pair(x, None)
        y = flat[..., nx:].reshape(flat.shape[:-1] + problem.y_shape)
        return Pair(x, y)

    def _dim(self, problem: Problem) -> int:
        nx = int(np.prod(problem.x_shape))
        ny = 0 if problem.y_shape is None else int(np.prod(problem.y_shape))
        return nx + ny

    def sample(self, problem: Problem, client: int, r: int, k: int, half: int) -> Pair:
        d = self._dim(problem)
        flat = self._rng(r, k, half).standard_normal((client + 1, d))[-1]
        return self._split(self.sigma * flat, problem)

    def sample_block(self, problem: Problem, clients: np.ndarray, r: int, k: int, half: int) -> Pair:
        d = self._dim(problem)
        flat = self._rng(r, k, half).standard_normal((int(np.max(clients)) + 1, d))
        return self._split(self.sigma * flat[np.asarray(clients)], problem)


def stochastic_gradient(problem: Problem, z: Pair, noise: NoiseModel, key) -> Pair:
    """Gradient plus i.i.d. Gaussian(0, sigma^2) noise at the given
    (client, round, local-step, half-step) key; exact gradient when sigma=0."""
    g = gradient_operator(problem, z)
    if noise.sigma == 0.0:
        return g
    client, r, k, half = key
    return g + noise.sample(problem, client, r, k, half)


def stochastic_gradient_block(
    problem: Problem, z: Pair, noise: NoiseModel, clients: np.ndarray, r: int, k: int, half: int
) -> Pair:
    """Stacked-client version of :func:`stochastic_gradient`: row i of the
    result is the noisy gradient of client ``clients[i]``."""
    g = gradient_operator(problem, z)
    if noise.sigma == 0.0:
        return g
    return g + noise.sample_block(problem, clients, r, k, half)


def _require_box_feasible(v: np.ndarray, D: float, name: str) -> None:
    if linf_norm(v) > D * (1.0 + _FEAS_SLACK) + 1e-12:
        raise InfeasiblePointError(f"{name} outside the radius-{D} box (linf={linf_norm(v)})")


def _require_spectral_feasible(W: np.ndarray, D: float, name: str) -> None:
    top = thin_svd(W).s[0]
    if top > D * (1.0 + _FEAS_SLACK) + 1e-12:
        raise InfeasiblePointError(f"{name} outside the radius-{D} spectral ball (top sv={top})")


def duality_gap_l1(problem: BilinearL1Problem, z: Pair) -> float:
    """Closed-form duality gap of the l1/box bilinear problem at a feasible
    point."""
    D, lam = problem.D, problem.lam
    _require_box_feasible(z.x, D, "x")
    _require_box_feasible(z.y, D, "y")
    rx = np.abs(problem.A @ z.x - problem.b) - lam
    ry = np.abs(problem.A.T @ z.y) - lam
    return float(
        D * np.maximum(rx, 0.0).sum()
        + lam * l1_norm(z.x)
        + D * np.maximum(ry, 0.0).sum()
        + problem.b @ z.y
        + lam * l1_norm(z.y)
    )


def duality_gap_nuclear(problem: BilinearNuclearProblem, z: Pair) -> float:
    """Closed-form duality gap of the nuclear/spectral bilinear problem at a
    feasible point; singular values are nonnegative so the absolute values in
    the formula are redundant."""
    D, lam = problem.D, problem.lam
    _require_spectral_feasible(z.x, D, "X")
    _require_spectral_feasible(z.y, D, "Y")
    s_res = thin_svd(problem.A @ z.x - problem.B).s
    s_adj = thin_svd(problem.A.T @ z.y).s
    nuc_x = thin_svd(z.x).s.sum()
    nuc_y = thin_svd(z.y).s.sum()
    return float(
        D * np.maximum(s_res - lam, 0.0).sum()
        + lam * nuc_x
        + D * np.maximum(s_adj - lam, 0.0).sum()
        + np.trace(problem.B.T @ z.y)
        + lam * nuc_y
    )


def quadratic_suboptimality(problem: QuadraticL1Problem, z: Pair) -> float:
    """phi(x) - phi(x*) for the quadratic composite problem (its 'gap')."""
    _require_box_feasible(z.x, problem.D, "x")

    def phi(x):
        return 0.5 * np.sum((x - problem.c) ** 2) + problem.lam * l1_norm(x)

    return float(phi(z.x) - phi(problem.minimizer()))


def duality_gap(problem: Problem, z: Pair) -> float:
    if problem.kind == "bilinear_l1":
        return duality_gap_l1(problem, z)
    if problem.kind == "bilinear_nuclear":
        return duality_gap_nuclear(problem, z)
    return quadratic_suboptimality(problem, z)


def _grid(D: float, dim: int, points: int) -> np.ndarray:
    axes = [np.linspace(-D, D, points)] * dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def brute_force_gap(problem: Problem, z: Pair, grid_points: int) -> float:
    """Grid oracle for the duality gap: max over a feasible y-grid minus min
    over a feasible x-grid.  Only for tiny instances (total dimension <= 6)."""
    dim_x = int(np.prod(problem.x_shape))
    dim_y = 0 if problem.y_shape is None else int(np.prod(problem.y_shape))
    if dim_x + dim_y > 6:
        raise ValueError("brute_force_gap: total dimension exceeds 6")
    D, lam = problem.D, problem.lam
    if problem.kind == "quadratic_l1":
        xs = _grid(D, dim_x, grid_points)
        vals = 0.5 * np.sum((xs - problem.c) ** 2, axis=1) + lam * np.abs(xs).sum(axis=1)
        here = 0.5 * np.sum((z.x - problem.c) ** 2) + lam * np.abs(z.x).sum()
        return float(here - vals.min())
    if problem.kind != "bilinear_l1":
        raise ValueError("brute_force_gap supports vector-valued problems only")
    ys = _grid(D, dim_y, grid_points)
    xs = _grid(D, dim_x, grid_points)
    res = problem.A @ z.x - problem.b
    phi_max = (ys @ res + lam * np.abs(z.x).sum() - lam * np.abs(ys).sum(axis=1)).max()
    adj = problem.A.T @ z.y
    phi_min = (xs @ adj + lam * np.abs(xs).sum(axis=1) - problem.b @ z.y - lam * np.abs(z.y).sum()).min()
    return float(phi_max - phi_min)


def sparsity(v) -> float:
    """Ratio of entries with magnitude >= 1e-5 to the total entry count."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        return 0.0
    return float((np.abs(v) >= NONZERO_TOL).sum() / v.size)


def numerical_rank(W) -> int:
    """Number of singular values >= 1e-5; vectors count as single columns."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    return int((thin_svd(W).s >= NONZERO_TOL).sum())


# --------------------------- problem dumps -------------------------------- #

_DUMP_MAGIC = "fedsaddle-problem v1"


def save_problem(problem: Problem, path) -> None:
    """Dump a problem as a text header plus raw little-endian float64
    payloads in row-major order (format documented in the README)."""
    arrays = _problem_arrays(problem)
    with open(path, "wb") as fh:
        header = io.StringIO()
        header.write(f"{_DUMP_MAGIC}\n")
        header.write(f"kind={problem.kind}\n")
        header.write(f"lambda={problem.lam!r}\n")
        header.write(f"D={problem.D!r}\n")
        for name, arr in arrays:
            dims = "x".join(str(d) for d in arr.shape)
            header.write(f"array={name}:{dims}\n")
        header.write("end-header\n")
        fh.write(header.getvalue().encode("ascii"))
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_problem(path) -> Problem:
    with open(path, "rb") as fh:
        meta: dict[str, str] = {}
        shapes: list[tuple[str, tuple[int, ...]]] = []
        magic = fh.readline().decode("ascii").strip()
        if magic != _DUMP_MAGIC:
            raise ValueError(f"not a problem dump (bad magic {magic!r})")
        while True:
            line = fh.readline().decode("ascii").strip()
            if line == "end-header":
                break
            if not line:
                raise ValueError("truncated problem dump header")
            key, val = line.split("=", 1)
            if key == "array":
                name, dims = val.split(":")
                shapes.append((name, tuple(int(d) for d in dims.split("x"))))
            else:
                meta[key] = val
        arrays = {}
        for name, shape in shapes:
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError("truncated problem dump payload")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    lam, D = float(meta["lambda"]), float(meta["D"])
    kind = meta["kind"]
    if kind == "bilinear_l1":
        return BilinearL1Problem(A=arrays["A"], b=arrays["b"], lam=lam, D=D)
    if kind == "bilinear_nuclear":
        return BilinearNuclearProblem(A=arrays["A"], B=arrays["B"], lam=lam, D=D)
    if kind == "quadratic_l1":
        return QuadraticL1Problem(c=arrays["c"], lam=lam, D=D)
    raise ValueError(f"unknown problem kind {kind!r}")


def _problem_arrays(problem: Problem):
    if problem.kind == "bilinear_l1":
        return [("A", problem.A), ("b", problem.b)]
    if problem.kind == "bilinear_nuclear":
        return [("A", problem.A), ("B", problem.B)]
    return [("c", problem.c)]
