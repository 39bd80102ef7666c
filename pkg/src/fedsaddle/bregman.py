"""Distance geometry and generalized proximal operators.

The distance-generating function is the Euclidean/Frobenius half-squared norm
per block, so every mirror projection here has a closed form: identity for an
unregularized block, shrink-then-clip for an l1 penalty with an l-infinity
box, and singular-value shrink-then-clip for a nuclear penalty with a
spectral ball.

Regularization weight is carried as a single accumulated scalar ``t_eff``
(step size times iteration count), which lets sequential schedules (weight
``t * eta``) and federated schedules (weight ``eta_c * (eta_s * r * K + k)``)
share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import thin_svd_stack

REG_KINDS = ("none", "l1_box", "nuclear_spectral_box")


@dataclass
class Pair:
    """A two-block point z = (x, y); dual points share the same shape.

    ``y`` may be None for composite convex (minimization-only) problems.
    Blocks are float64 ndarrays; vector blocks may carry a leading stack axis
    when a simulation advances many clients at once.
    """

    x: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.float64)

    def _zip(self, other: "Pair", op) -> "Pair":
        if (self.y is None) != (other.y is None):
            raise ValueError("mismatched blocks: one point has no y block")
        y = None if self.y is None else op(self.y, other.y)
        return Pair(op(self.x, other.x), y)

    def __add__(self, other: "Pair") -> "Pair":
        return self._zip(other, np.add)

    def __sub__(self, other: "Pair") -> "Pair":
        return self._zip(other, np.subtract)

    def __mul__(self, a: float) -> "Pair":
        return Pair(self.x * a, None if self.y is None else self.y * a)

    __rmul__ = __mul__

    def copy(self) -> "Pair":
        return Pair(self.x.copy(), None if self.y is None else self.y.copy())

    def map(self, fn) -> "Pair":
        return Pair(fn(self.x), None if self.y is None else fn(self.y))

    def blocks(self):
        return (self.x,) if self.y is None else (self.x, self.y)

    def sq_norm(self) -> float:
        return float(sum(np.sum(b * b) for b in self.blocks()))

    def dot(self, other: "Pair") -> float:
        return float(
            sum(np.sum(a * b) for a, b in zip(self.blocks(), other.blocks()))
        )

    def is_finite(self) -> bool:
        return all(np.isfinite(b).all() for b in self.blocks())

    def zeros_like(self) -> "Pair":
        return self.map(np.zeros_like)

    def same_shape(self, other: "Pair") -> bool:
        if (self.y is None) != (other.y is None):
            return False
        return all(a.shape == b.shape for a, b in zip(self.blocks(), other.blocks()))


@dataclass
class Regularizer:
    """Composite term psi: ``lam * (l1 or nuclear norm)`` plus the indicator
    of the box / spectral ball of radius D.  ``kind='none'`` means psi = 0
    and an unconstrained domain."""

    kind: str
    lam: float = 0.0
    D: float = np.inf

    def __post_init__(self):
        if self.kind not in REG_KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if not self.D > 0:
            raise ValueError("D must be positive")


@dataclass
class GeneralizedDgf:
    """Euclidean base geometry plus ``t_eff * psi``; ``t_eff`` is the
    accumulated regularization weight in step-size times count units."""

    reg: Regularizer
    t_eff: float = 0.0

    def __post_init__(self):
        if self.t_eff < 0:
            raise ValueError("t_eff must be nonnegative")


@dataclass
class StepSizeSchedule:
    """Constants of the federated step-size rule: smoothness beta, Bregman
    diameter B, gradient bound G, noise level sigma, and counts M, K, R."""

    beta: float
    B: float
    G: float
    sigma: float
    M: int
    K: int
    R: int

    def __post_init__(self):
        for name in ("beta", "B", "G"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        for name in ("M", "K", "R"):
            if not getattr(self, name) >= 1:
                raise ValueError(f"{name} must be at least 1")


def bregman_div(z: Pair, z_anchor: Pair) -> float:
    """Euclidean Bregman divergence: half the squared distance over blocks."""
    if not z.same_shape(z_anchor):
        raise ValueError("bregman_div: shape mismatch")
    return 0.5 * (z - z_anchor).sq_norm()


def effective_threshold(lam: float, eta_c: float, eta_s: float, r: int, K: int, k: int) -> float:
    """Per-step soft-threshold weight ``lam * eta_c * (eta_s * r * K + k)``."""
    return lam * eta_c * (eta_s * r * K + k)


def soft_threshold_clip(omega, lambda_eff: float, D: float):
    """Shrink toward zero by lambda_eff, then clip magnitudes at D.

    Elementwise; odd and 1-Lipschitz in omega.  Exact ties |omega| =
    lambda_eff land on the zero branch.
    """
    omega = np.asarray(omega, dtype=np.float64)
    return np.sign(omega) * np.clip(np.abs(omega) - lambda_eff, 0.0, D)


def svt_clip(Omega, lambda_eff: float, D: float) -> np.ndarray:
    """Soft-threshold-and-clip the singular values of a matrix (or of each
    matrix in a stack with a leading axis).  Output spectral norm <= D."""
    Omega = np.asarray(Omega, dtype=np.float64)
    single = Omega.ndim == 2
    W = Omega[None] if single else Omega
    if W.ndim != 3:
        raise ValueError(f"svt_clip expects a matrix or matrix stack, got shape {Omega.shape}")
    U, s, V = thin_svd_stack(W)
    s = np.clip(s - lambda_eff, 0.0, D)
    out = (U * s[:, None, :]) @ V.transpose(0, 2, 1)
    return out[0] if single else out


def prox_map(dgf: GeneralizedDgf, omega: Pair) -> Pair:
    """Mirror projection of a dual point: the gradient of the conjugate of
    the generalized distance-generating function, in closed form."""
    reg = dgf.reg
    if reg.kind == "none":
        return omega.copy()
    if reg.kind == "l1_box":
        return omega.map(lambda b: soft_threshold_clip(b, dgf.t_eff * reg.lam, reg.D))
    return omega.map(lambda b: svt_clip(b, dgf.t_eff * reg.lam, reg.D))


def generalized_prox(ell_t: GeneralizedDgf, anchor: Pair, g: Pair) -> Pair:
    """argmin_z { <g, z> + generalized Bregman of ell_t at anchor }, i.e. the
    mirror projection of ``anchor - g``."""
    if not anchor.same_shape(g):
        raise ValueError("generalized_prox: shape mismatch")
    return prox_map(ell_t, anchor - g)


def theorem1_stepsize(s: StepSizeSchedule) -> float:
    """Client step size: the minimum of the four closed-form terms of the
    federated rate bound; the noise term drops out when sigma = 0."""
    terms = [
        1.0 / (5.0 * s.beta**2),
        s.B**0.25 / (20.0**0.25 * s.beta**0.5 * s.G**0.5 * s.K**0.75 * s.R**0.25),
        1.0 / (2.0**0.75 * s.beta**0.5 * s.G**0.5 * s.K * s.R**0.5),
    ]
    if s.sigma > 0:
        terms.append(s.B**0.5 * s.M**0.5 / (5.0**0.5 * s.sigma * s.R**0.5 * s.K**0.5))
    return min(terms)
