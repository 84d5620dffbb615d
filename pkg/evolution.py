"""
EvoSeed – Evolution
Ground-truth network growth: Nettide arrivals, preferential attachment and
the expected-degree product that PA implies.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, gammaln, logit

from graph_core import EvolvingGraph

logger = logging.getLogger(__name__)

RK4_STEPS = 1024
DEFAULT_T0 = 1.0


class GrowthError(ValueError):
    """Raised for invalid growth parameters or an impossible growth step."""


@dataclass(frozen=True)
class GrowthParams:
    """Nettide coefficients (beta, theta, capacity N) and edges per new node m."""

    beta: float
    theta: float
    capacity: float
    m: int = 1

    def validate(self) -> None:
        problems = []
        if not self.beta > 0:
            problems.append(f"beta must be > 0, got {self.beta}")
        if self.theta < 0:
            problems.append(f"theta must be >= 0, got {self.theta}")
        if not self.capacity > 1:
            problems.append(f"capacity must be > 1, got {self.capacity}")
        if self.m < 1:
            problems.append(f"m must be >= 1, got {self.m}")
        if problems:
            raise GrowthError("; ".join(problems))

    def to_dict(self) -> dict:
        return {"beta": self.beta, "theta": self.theta, "capacity": self.capacity, "m": self.m}

    @classmethod
    def from_dict(cls, data: dict) -> "GrowthParams":
        return cls(
            beta=float(data["beta"]),
            theta=float(data["theta"]),
            capacity=float(data["capacity"]),
            m=int(data.get("m", 1)),
        )


@dataclass(frozen=True)
class GrowthState:
    """Continuous clock t, continuous population n(t) and nodes emitted so far."""

    t: float
    n: float
    realized: int


# ─── Growth ODE ──────────────────────────────────────────────────


def growth_rate(params: GrowthParams, t: float, n: float) -> float:
    """dn/dt = (beta / t^theta) * n * (N - n)."""
    return params.beta / t ** params.theta * n * (params.capacity - n)


def _time_integral(theta, t_start, t_end):
    """Integral of t^-theta over [t_start, t_end] (array-friendly in theta)."""
    theta = np.asarray(theta, dtype=float)
    one_minus = 1.0 - theta
    near_one = np.abs(one_minus) < 1e-12
    safe = np.where(near_one, 1.0, one_minus)
    power = (t_end ** safe - t_start ** safe) / safe
    return np.where(near_one, np.log(t_end / t_start), power)


def advance_population(beta, theta, capacity, t, n, dt, steps: int = RK4_STEPS, exact: bool = False):
    """
    Advance n(t) by dt for one or many growth functions at once.

    The ODE is integrated in the logit coordinate u = ln(n / (N - n)), where it
    reads du/dt = beta * N * t^-theta; RK4 with `steps` fixed steps is applied
    there, which stays stable for the large beta*N the priors allow. With
    `exact` the separable closed form is used instead. Populations at or above
    N, or at or below 0, are fixed points.
    """
    beta = np.asarray(beta, dtype=float)
    theta = np.asarray(theta, dtype=float)
    capacity = np.asarray(capacity, dtype=float)
    n = np.asarray(n, dtype=float)
    frozen = (n >= capacity) | (n <= 0) | (beta <= 0)
    ratio = np.clip(np.where(frozen, 0.5, n / capacity), 1e-300, 1.0)
    u = logit(ratio)
    scale = beta * capacity

    if exact:
        u = u + scale * _time_integral(theta, t, t + dt)
    else:
        h = dt / steps

        def rhs(tau, _u):
            return scale * tau ** (-theta)

        tau = t
        for _ in range(steps):
            k1 = rhs(tau, u)
            k2 = rhs(tau + h / 2, u + h / 2 * k1)
            k3 = rhs(tau + h / 2, u + h / 2 * k2)
            k4 = rhs(tau + h, u + h * k3)
            u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            tau += h

    advanced = capacity * expit(u)
    return np.where(frozen, n, np.clip(np.maximum(advanced, n), 0.0, capacity))


def logistic_closed_form(params: GrowthParams, n0: float, elapsed: float) -> float:
    """theta = 0 solution N / (1 + ((N - n0) / n0) e^{-beta N elapsed})."""
    N = params.capacity
    return N / (1.0 + (N - n0) / n0 * math.exp(-params.beta * N * elapsed))


def growth_closed_form(params: GrowthParams, t_start: float, n_start: float, t_end: float) -> float:
    """Exact n(t_end) for any theta, from the separable form of the ODE."""
    return float(advance_population(
        params.beta, params.theta, params.capacity, t_start, n_start, t_end - t_start, exact=True
    ))


def integrate_growth(
    params: GrowthParams,
    state: GrowthState,
    dt: float,
    steps: int = RK4_STEPS,
    t0: float = DEFAULT_T0,
) -> GrowthState:
    """
    Advance the population by dt under the Nettide ODE.

    theta = 0 uses the logistic closed form; otherwise fixed-step RK4. A clock
    at t <= 0 with theta > 0 starts from t0 instead, since t^-theta is
    undefined there. n is unchanged when beta = 0 or n has reached N.
    """
    if dt <= 0:
        raise GrowthError(f"dt must be positive, got {dt}")
    t = state.t
    if t <= 0 and params.theta > 0:
        t = t0
    if params.beta == 0 or state.n >= params.capacity:
        return replace(state, t=t + dt)
    if params.theta == 0:
        n = logistic_closed_form(params, state.n, dt)
    else:
        n = float(advance_population(
            params.beta, params.theta, params.capacity, t, state.n, dt, steps=steps
        ))
    n = min(max(n, state.n), params.capacity)
    return GrowthState(t=t + dt, n=n, realized=state.realized)


# ─── Preferential attachment ─────────────────────────────────────


def pa_growth_factor(total_degree, slots):
    """
    prod_{s=1}^{slots} (1 + 1 / (total_degree + 2s - 1)), through log-gamma so
    non-integer slot counts (expected arrivals) and array inputs work.
    """
    total = np.maximum(np.asarray(total_degree, dtype=float), 1.0)
    slots = np.maximum(np.asarray(slots, dtype=float), 0.0)
    a = total / 2.0
    b = (total - 1.0) / 2.0
    return np.exp(gammaln(slots + 1 + a) - gammaln(1 + a) - gammaln(slots + 1 + b) + gammaln(1 + b))


def expected_degree(d_now: float, total_degree: int, new_nodes: int, m: int) -> float:
    """Expected degree after `new_nodes` arrivals of m edges each under PA."""
    return float(d_now * pa_growth_factor(total_degree, m * new_nodes))


def attach_targets(
    stubs: list[int],
    new_node: int,
    m: int,
    rng: np.random.Generator,
    uniform_prob: float = 0.0,
    linked: Optional[set[int]] = None,
) -> list[int]:
    """
    Draw m distinct anchors for `new_node` in m successive slots.

    `stubs` lists every tie endpoint, so a uniform pick from it is
    degree-proportional; it is extended after each slot (target and new node),
    so later slots see the updated degrees. With probability `uniform_prob` a
    slot picks uniformly among nodes older than `new_node` instead. Repeats and
    the new node itself are redrawn.

    `linked` is the set of nodes present in `stubs`; callers growing many
    nodes pass one set and it is kept current here. Built from `stubs` when
    omitted.
    """
    if linked is None:
        linked = set(stubs)
    if uniform_prob == 0.0:
        candidates = len(linked) - (new_node in linked)
    else:
        candidates = new_node
    m = min(m, candidates)
    targets: list[int] = []
    chosen: set[int] = set()
    while len(targets) < m:
        if uniform_prob > 0.0 and rng.random() < uniform_prob:
            target = int(rng.integers(new_node))
        else:
            target = stubs[int(rng.integers(len(stubs)))]
        if target == new_node or target in chosen:
            continue
        chosen.add(target)
        targets.append(target)
        stubs.append(target)
        stubs.append(new_node)
    if targets:
        linked.update(targets)
        linked.add(new_node)
    return targets


def degree_stubs(graph: EvolvingGraph) -> list[int]:
    degrees = np.asarray(graph.degrees(), dtype=np.int64)
    return np.repeat(np.arange(len(degrees)), degrees).tolist()


@dataclass
class GrowthStep:
    node_ids: list[int] = field(default_factory=list)
    edge_ids: list[int] = field(default_factory=list)
    state: Optional[GrowthState] = None


def grow_one_trial(
    graph: EvolvingGraph,
    params: GrowthParams,
    state: GrowthState,
    trial: int,
    rng: np.random.Generator,
    bidirectional: bool = True,
    steps: int = RK4_STEPS,
) -> GrowthStep:
    """
    Grow the graph by one trial: floor(n_end) - floor(n_start) arrivals,
    each attaching m ties by preferential attachment.
    """
    if graph.total_degree == 0:
        raise GrowthError("preferential attachment needs at least one tie")
    graph.advance_to(trial)
    new_state = integrate_growth(params, state, 1.0, steps=steps)
    delta = max(0, math.floor(new_state.n) - state.realized)
    room = max(0, math.floor(params.capacity) - graph.node_count)
    if delta > room:
        logger.debug("arrivals clamped at capacity: %d -> %d", delta, room)
        delta = room

    result = GrowthStep(state=replace(new_state, realized=state.realized + delta))
    if delta == 0:
        return result

    stubs = degree_stubs(graph)
    linked = set(stubs)
    for _ in range(delta):
        node = graph.add_node(trial)
        result.node_ids.append(node)
        for target in attach_targets(stubs, node, params.m, rng, linked=linked):
            result.edge_ids.extend(graph.add_edge(node, target, trial, bidirectional))
    logger.debug("trial %d: %d arrivals, %d edges", trial, delta, len(result.edge_ids))
    return result


# ─── Generators ──────────────────────────────────────────────────


def sn_schedule(first_arrivals: int, trials: int, ratio: float = 2.0) -> list[int]:
    """Per-trial arrivals first_arrivals * ratio^(r-1) for r = 1..trials."""
    return [int(round(first_arrivals * ratio ** r)) for r in range(trials)]


def generate_sn_network(
    schedule: Sequence[int],
    rng: np.random.Generator,
    start_trial: int = 1,
    edges_per_node: int = 1,
    uniform_prob: float = 0.5,
    bidirectional: bool = True,
) -> EvolvingGraph:
    """
    Synthetic network: a two-node seed at trial 0, then schedule[i] arrivals at
    trial start_trial + i. Each arrival anchors to a uniformly chosen older
    node with probability `uniform_prob`, otherwise degree-proportionally.
    """
    graph = EvolvingGraph()
    a = graph.add_node(0)
    b = graph.add_node(0)
    graph.add_edge(a, b, 0, bidirectional)
    stubs = [a, b]
    linked = {a, b}
    for offset, count in enumerate(schedule):
        trial = start_trial + offset
        graph.advance_to(trial)
        for _ in range(int(count)):
            node = graph.add_node(trial)
            for target in attach_targets(stubs, node, edges_per_node, rng, uniform_prob, linked):
                graph.add_edge(node, target, trial, bidirectional)
    logger.debug("SN network: %d nodes, %d ties", graph.node_count, graph.tie_count)
    return graph


def generate_nettide_ba(
    initial_nodes: int,
    params: GrowthParams,
    trials: int,
    rng: np.random.Generator,
    t0: float = DEFAULT_T0,
    bidirectional: bool = True,
) -> tuple[EvolvingGraph, list[float]]:
    """
    Ground-truth world: a PA seed graph of `initial_nodes` at trial 0, grown for
    `trials` trials by Nettide arrivals. Returns the graph and n(T^r) for
    r = 0..trials.
    """
    if initial_nodes < 2:
        raise GrowthError("a Nettide-BA world needs at least two initial nodes")
    graph = generate_sn_network(
        [initial_nodes - 2], rng, start_trial=0,
        edges_per_node=params.m, uniform_prob=0.0, bidirectional=bidirectional,
    )
    state = GrowthState(t=t0, n=float(initial_nodes), realized=initial_nodes)
    true_n = [state.n]
    for trial in range(1, trials + 1):
        step = grow_one_trial(graph, params, state, trial, rng, bidirectional)
        state = step.state
        true_n.append(state.n)
    return graph, true_n
