"""Step-level updates for the federated and sequential saddle-point methods.

Four federated methods share the same round structure and differ in what a
client tracks and what the server aggregates:

* federated dual extrapolation: extra-step, client state in the dual space,
  server averages dual increments;
* federated mirror prox: extra-step, primal state, server averages primal
  increments through a composite projection;
* federated composite mirror descent: single-call primal twin;
* federated dual averaging: single-call dual twin.

The sequential extra-step methods (stochastic and deterministic dual
extrapolation) are the single-client collapse of the first one, with the
regularization weight growing as step-size times iteration count.

These functions operate on one client with naturally-shaped blocks and are
the reference semantics; the simulator advances all clients of a round at
once with stacked arrays and is tested against loops over these functions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .bregman import GeneralizedDgf, Pair, prox_map


class DivergenceError(RuntimeError):
    """An iterate went non-finite or the duality gap exploded."""

    def __init__(self, message: str, round_index: int | None = None):
        super().__init__(message)
        self.round_index = round_index


@dataclass
class FeDualExClientState:
    varsigma: Pair  # running dual variable of this client within the round
    round: int
    local_step: int


@dataclass
class FeDualExServerState:
    varsigma: Pair  # server dual variable
    varsigma_bar: Pair  # fixed dual anchor
    eta_s: float
    eta_c: float
    ergodic_sum: Pair
    ergodic_count: int


@dataclass
class MirrorProxClientState:
    z: Pair  # primal iterate (also used by composite mirror descent)
    round: int
    local_step: int


@dataclass
class DualAveragingClientState:
    mu: Pair  # accumulated negative gradient sum in the dual space
    round: int
    local_step: int


def _check_finite(p: Pair, what: str, round_index: int) -> Pair:
    if not p.is_finite():
        raise DivergenceError(f"non-finite {what} at round {round_index}", round_index)
    return p


def fedualex_local_step(
    client: FeDualExClientState,
    varsigma_bar: Pair,
    dgf_now: GeneralizedDgf,
    dgf_next: GeneralizedDgf,
    eta_c: float,
    grad_fn,
) -> tuple[FeDualExClientState, Pair]:
    """One dual-extrapolation local step: two generalized-prox evaluations
    and a dual update.  ``grad_fn(z, half)`` supplies the (possibly noisy)
    gradient for half-step 0 or 1.  Returns the new state and the
    intermediate half-step point.
    """
    omega = varsigma_bar - client.varsigma
    z_k = prox_map(dgf_now, omega)
    g1 = grad_fn(z_k, 0)
    z_half = prox_map(dgf_next, omega - eta_c * g1)
    g2 = grad_fn(z_half, 1)
    varsigma = _check_finite(client.varsigma + eta_c * g2, "dual iterate", client.round)
    return (
        FeDualExClientState(varsigma, client.round, client.local_step + 1),
        z_half,
    )


def _mean_ascending(points: list[Pair]) -> Pair:
    """Mean by summation in ascending index order (deterministic reduction)."""
    if not points:
        raise ValueError("empty participant set")
    acc = points[0].copy()
    for p in points[1:]:
        acc = acc + p
    return acc.map(lambda b: b / len(points))


def fedualex_server_round(
    server: FeDualExServerState, client_deltas: list[Pair]
) -> FeDualExServerState:
    """Server dual update: add eta_s times the mean of the clients' dual
    increments, summed in ascending client-index order."""
    delta = _mean_ascending(client_deltas)
    return replace(server, varsigma=server.varsigma + server.eta_s * delta)


def shadow_primal(avg_omega: Pair, ell_t: GeneralizedDgf) -> Pair:
    """Primal projection of the across-client average dual point (the
    simulator's global view of the shadow sequence)."""
    return prox_map(ell_t, avg_omega)


def fedmip_local_step(
    client: MirrorProxClientState,
    dgf_local: GeneralizedDgf,
    eta_c: float,
    grad_fn,
) -> tuple[MirrorProxClientState, Pair]:
    """One composite mirror-prox (extragradient) local step; both composite
    mirror-map evaluations are anchored at the current iterate."""
    g1 = grad_fn(client.z, 0)
    z_half = prox_map(dgf_local, client.z - eta_c * g1)
    g2 = grad_fn(z_half, 1)
    z_next = _check_finite(
        prox_map(dgf_local, client.z - eta_c * g2), "primal iterate", client.round
    )
    return MirrorProxClientState(z_next, client.round, client.local_step + 1), z_half


def fedmid_local_step(
    client: MirrorProxClientState,
    dgf_local: GeneralizedDgf,
    eta_c: float,
    grad_fn,
) -> MirrorProxClientState:
    """One composite mirror-descent step (single gradient call), applied to
    the saddle gradient operator, so it performs descent-ascent."""
    g = grad_fn(client.z, 0)
    z_next = _check_finite(
        prox_map(dgf_local, client.z - eta_c * g), "primal iterate", client.round
    )
    return MirrorProxClientState(z_next, client.round, client.local_step + 1)


def primal_server_round(
    z_server: Pair,
    client_finals: list[Pair],
    dgf_server: GeneralizedDgf,
    eta_s: float,
) -> Pair:
    """Server update shared by the primal-aggregating methods: average the
    clients' final iterates into the mirror point and re-project through the
    composite map with the round-level weight.

    Computed as ``(1 - eta_s) * z + eta_s * mean`` (with the mean alone when
    eta_s is 1), which equals ``z + eta_s * mean(increments)`` because every
    participant starts the round at the server point.
    """
    mean = _mean_ascending(client_finals)
    mixed = mean if eta_s == 1.0 else (1.0 - eta_s) * z_server + eta_s * mean
    return prox_map(dgf_server, mixed)


def feddualavg_local_step(
    client: DualAveragingClientState,
    dgf_now: GeneralizedDgf,
    eta_c: float,
    grad_fn,
) -> tuple[DualAveragingClientState, Pair]:
    """One composite dual-averaging step: project the dual state, query the
    gradient there, accumulate.  Returns the new state and the query point."""
    z_k = prox_map(dgf_now, client.mu)
    g = grad_fn(z_k, 0)
    mu = _check_finite(client.mu - eta_c * g, "dual iterate", client.round)
    return DualAveragingClientState(mu, client.round, client.local_step + 1), z_k


def dual_server_round(mu_server: Pair, client_finals: list[Pair], eta_s: float) -> Pair:
    """Server update shared by the dual-aggregating methods; same mixing form
    as :func:`primal_server_round` but without a projection."""
    mean = _mean_ascending(client_finals)
    return mean if eta_s == 1.0 else (1.0 - eta_s) * mu_server + eta_s * mean


@dataclass
class SequentialDualExState:
    varsigma: Pair
    t: int


def stochastic_dualex_step(
    state: SequentialDualExState,
    varsigma_bar: Pair,
    dgf_now: GeneralizedDgf,
    dgf_next: GeneralizedDgf,
    eta: float,
    grad_fn,
) -> tuple[SequentialDualExState, Pair]:
    """One step of sequential stochastic dual extrapolation: the federated
    local step with a single client and regularization weight eta * t."""
    client = FeDualExClientState(state.varsigma, state.t, 0)
    new_client, z_half = fedualex_local_step(
        client, varsigma_bar, dgf_now, dgf_next, eta, grad_fn
    )
    return SequentialDualExState(new_client.varsigma, state.t + 1), z_half


def composite_dualex_step(
    state: SequentialDualExState,
    varsigma_bar: Pair,
    dgf_now: GeneralizedDgf,
    dgf_next: GeneralizedDgf,
    eta: float,
    grad_fn,
) -> tuple[SequentialDualExState, Pair]:
    """One step of deterministic composite dual extrapolation, written out
    explicitly: both half-steps query the exact gradient operator."""
    omega = varsigma_bar - state.varsigma
    z_t = prox_map(dgf_now, omega)
    z_half = prox_map(dgf_next, omega - eta * grad_fn(z_t))
    varsigma = _check_finite(state.varsigma + eta * grad_fn(z_half), "dual iterate", state.t)
    return SequentialDualExState(varsigma, state.t + 1), z_half
