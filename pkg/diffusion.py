"""
EvoSeed – Diffusion
Hidden ground truth: drifting edge weights, Independent Cascade runs with
edge-level feedback, and exact / Monte-Carlo influence oracles.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import networkx as nx
import numpy as np

from graph_core import GraphError, GraphSnapshot

logger = logging.getLogger(__name__)

EXACT_EDGE_LIMIT = 20


class InstanceTooLargeError(ValueError):
    """Raised when an exact oracle would have to enumerate too many worlds."""


def drift_variance(trial, birth, k: float, sigma0: float, floor_age: bool = False):
    """
    Random-walk variance sigma0 / (trial - birth)^k.

    Ages <= 0 give 0 unless `floor_age`, which treats them as age 1. An
    infinite k ("frozen") never drifts.
    """
    age = np.asarray(trial, dtype=float) - np.asarray(birth, dtype=float)
    if floor_age:
        age = np.maximum(age, 1.0)
    if math.isinf(k):
        return np.zeros_like(age)
    safe = np.where(age > 0, age, 1.0)
    return np.where(age > 0, sigma0 / safe ** k, 0.0)


# ─── Ground-truth weights ────────────────────────────────────────


@dataclass(frozen=True)
class EdgeTruth:
    edge: int
    w_true: float
    birth_trial: int


def initial_weights(count: int, w0: float, sigma0: float, rng: np.random.Generator) -> np.ndarray:
    """Fresh edge weights from N(w0, sigma0) (sigma0 is a variance), clamped to [0, 1]."""
    return np.clip(rng.normal(w0, math.sqrt(sigma0), count), 0.0, 1.0)


def step_truth_weights(
    truths: Sequence[EdgeTruth], trial: int, k: float, sigma0: float, rng: np.random.Generator
) -> list[EdgeTruth]:
    if not truths:
        return []
    weights = np.array([t.w_true for t in truths])
    births = np.array([t.birth_trial for t in truths])
    variance = drift_variance(trial, births, k, sigma0)
    stepped = np.clip(weights + rng.standard_normal(len(truths)) * np.sqrt(variance), 0.0, 1.0)
    return [EdgeTruth(t.edge, float(w), t.birth_trial) for t, w in zip(truths, stepped)]


class TruthTable:
    """True activation probabilities indexed by edge id."""

    def __init__(self, w0: float = 0.05, sigma0: float = 0.008, k: float = 2.0):
        self.w0 = w0
        self.sigma0 = sigma0
        self.k = k
        self._weight = np.zeros(0)
        self._birth = np.zeros(0, dtype=np.int64)

    def __len__(self) -> int:
        return int(self._weight.shape[0])

    def edge(self, edge_id: int) -> EdgeTruth:
        return EdgeTruth(edge_id, float(self._weight[edge_id]), int(self._birth[edge_id]))

    def weights(self) -> np.ndarray:
        return self._weight.copy()

    def register(self, establish_trials: Sequence[int], rng: np.random.Generator) -> int:
        """
        Draw weights for edges beyond the known ones. An edge that appears
        in G^r was born at the start of that trial, r - 1.
        """
        fresh = np.asarray(establish_trials[len(self):], dtype=np.int64)
        if fresh.size:
            self._weight = np.concatenate([self._weight, initial_weights(fresh.size, self.w0, self.sigma0, rng)])
            self._birth = np.concatenate([self._birth, np.maximum(fresh - 1, 0)])
        return int(fresh.size)

    def set_weights(self, weights: Sequence[float], births: Optional[Sequence[int]] = None) -> None:
        self._weight = np.clip(np.asarray(weights, dtype=float), 0.0, 1.0)
        self._birth = (
            np.zeros(len(self._weight), dtype=np.int64) if births is None
            else np.asarray(births, dtype=np.int64)
        )

    def step(self, trial: int, rng: np.random.Generator) -> None:
        if math.isinf(self.k) or len(self) == 0:
            return
        variance = drift_variance(trial, self._birth, self.k, self.sigma0)
        noise = rng.standard_normal(len(self)) * np.sqrt(variance)
        self._weight = np.clip(self._weight + noise, 0.0, 1.0)


# ─── Independent Cascade ─────────────────────────────────────────


@dataclass
class TrialFeedback:
    """
    What a campaign reveals: the influenced set, the outcome of every
    single-chance activation attempt, and the degrees of influenced nodes
    and their neighbours.
    """

    trial: int
    seeds: frozenset
    influenced: set[int] = field(default_factory=set)
    edge_outcomes: dict[int, int] = field(default_factory=dict)
    observed_degrees: dict[int, int] = field(default_factory=dict)

    @property
    def influenced_size(self) -> int:
        return len(self.influenced)


def _check_seeds(snapshot: GraphSnapshot, seeds: Iterable[int]) -> list[int]:
    seeds = sorted({int(s) for s in seeds})
    for s in seeds:
        if not snapshot.has_node(s):
            raise GraphError(f"seed {s} is not in G^{snapshot.trial}")
    return seeds


def _reach(snapshot: GraphSnapshot, seeds: list[int], live: np.ndarray, outcomes: Optional[dict] = None) -> set[int]:
    influenced = set(seeds)
    queue = deque(seeds)
    dst = snapshot.dst
    while queue:
        u = queue.popleft()
        for e in snapshot.out_edges(u).tolist():
            hit = bool(live[e])
            if outcomes is not None:
                outcomes[e] = int(hit)
            v = int(dst[e])
            if hit and v not in influenced:
                influenced.add(v)
                queue.append(v)
    return influenced


def run_cascade(
    snapshot: GraphSnapshot,
    seeds: Iterable[int],
    weights: np.ndarray,
    rng: np.random.Generator,
) -> TrialFeedback:
    """
    One IC campaign on the snapshot.

    One coin per edge is drawn up front (coins[e] < w[e] means live), so two
    runs fed the same stream are coupled: a superset of seeds influences a
    superset of nodes.
    """
    seeds = _check_seeds(snapshot, seeds)
    coins = rng.random(snapshot.edge_count)
    live = coins < np.asarray(weights[: snapshot.edge_count])
    feedback = TrialFeedback(trial=snapshot.trial, seeds=frozenset(seeds))
    feedback.influenced = _reach(snapshot, seeds, live, feedback.edge_outcomes)

    degrees = snapshot.degrees()
    for u in feedback.influenced:
        feedback.observed_degrees[u] = int(degrees[u])
        for v in snapshot.neighbors(u).tolist():
            feedback.observed_degrees[v] = int(degrees[v])
    logger.debug(
        "cascade on G^%d: %d seeds -> %d influenced, %d attempts",
        snapshot.trial, len(seeds), len(feedback.influenced), len(feedback.edge_outcomes),
    )
    return feedback


# ─── Influence oracles ───────────────────────────────────────────


@dataclass(frozen=True)
class InfluenceEstimate:
    value: float
    half_width: float = 0.0
    exact: bool = True


def _node_weight_vector(node_count: int, node_weights) -> np.ndarray:
    if node_weights is None:
        return np.ones(node_count)
    return np.asarray(node_weights, dtype=float)[:node_count]


class WorldEnumeration:
    """
    Every live/blocked world over a set of edges, with its probability.

    Edges with weight 0 are dropped and weight-1 edges are always live, so
    only the uncertain edges are enumerated.
    """

    def __init__(self, snapshot: GraphSnapshot, weights: np.ndarray, edges: Optional[Iterable[int]] = None,
                 limit: int = EXACT_EDGE_LIMIT):
        weights = np.asarray(weights[: snapshot.edge_count], dtype=float)
        edges = np.arange(snapshot.edge_count) if edges is None else np.asarray(sorted(edges), dtype=np.int64)
        edges = edges[weights[edges] > 0]
        uncertain = edges[weights[edges] < 1]
        if uncertain.size > limit:
            raise InstanceTooLargeError(
                f"{uncertain.size} uncertain edges exceed the exact limit of {limit}"
            )
        self.node_count = snapshot.node_count
        self.src = snapshot.src[edges]
        self.dst = snapshot.dst[edges]

        worlds = (np.arange(2 ** uncertain.size)[:, None] >> np.arange(uncertain.size)) & 1 == 1
        p = weights[uncertain]
        self.prob = np.prod(np.where(worlds, p, 1.0 - p), axis=1)
        self.live = np.ones((worlds.shape[0], edges.size), dtype=bool)
        self.live[:, np.isin(edges, uncertain)] = worlds

        self._to_dst = np.zeros((edges.size, self.node_count))
        self._to_dst[np.arange(edges.size), self.dst] = 1.0

    @property
    def world_count(self) -> int:
        return int(self.prob.shape[0])

    def reach(self, seeds: Iterable[int]) -> np.ndarray:
        """(worlds x nodes) activation indicator of the seed set in every world."""
        active = np.zeros((self.world_count, self.node_count), dtype=bool)
        active[:, list(seeds)] = True
        for _ in range(self.node_count):
            fired = (active[:, self.src] & self.live).astype(float)
            grown = active | (fired @ self._to_dst > 0)
            if np.array_equal(grown, active):
                break
            active = grown
        return active

    def influence(self, seeds: Iterable[int], node_weights=None) -> float:
        seeds = list(seeds)
        if not seeds:
            return 0.0
        c = _node_weight_vector(self.node_count, node_weights)
        return float(self.prob @ (self.reach(seeds).astype(float) @ c))


def relevant_edges(snapshot: GraphSnapshot, seeds: Sequence[int], weights: np.ndarray) -> np.ndarray:
    """Positive-weight edges leaving a node reachable from the seeds and entering a non-seed."""
    g = nx.DiGraph()
    g.add_nodes_from(range(snapshot.node_count))
    positive = np.flatnonzero(np.asarray(weights[: snapshot.edge_count]) > 0)
    g.add_edges_from(zip(snapshot.src[positive].tolist(), snapshot.dst[positive].tolist()))
    reachable = set(seeds)
    for s in seeds:
        reachable |= nx.descendants(g, s)
    seed_set = set(seeds)
    mask = np.array([
        int(snapshot.src[e]) in reachable and int(snapshot.dst[e]) not in seed_set for e in positive
    ], dtype=bool)
    return positive[mask] if positive.size else positive


def exact_influence(
    snapshot: GraphSnapshot,
    seeds: Iterable[int],
    weights: np.ndarray,
    node_weights=None,
    allow_fallback: bool = False,
    samples: int = 10_000,
    rng: Optional[np.random.Generator] = None,
    limit: int = EXACT_EDGE_LIMIT,
) -> InfluenceEstimate:
    """
    Expected (weighted) number of influenced nodes, by enumerating the worlds
    of the edges the seeds can reach. Falls back to Monte-Carlo when allowed.
    """
    seeds = _check_seeds(snapshot, seeds)
    if not seeds:
        return InfluenceEstimate(0.0)
    edges = relevant_edges(snapshot, seeds, weights)
    try:
        worlds = WorldEnumeration(snapshot, weights, edges, limit=limit)
    except InstanceTooLargeError:
        if not allow_fallback:
            raise
        logger.warning("exact oracle over %d edges too large, using Monte-Carlo", edges.size)
        return monte_carlo_influence(snapshot, seeds, weights, samples, rng or np.random.default_rng(), node_weights)
    return InfluenceEstimate(worlds.influence(seeds, node_weights))


def monte_carlo_influence(
    snapshot: GraphSnapshot,
    seeds: Iterable[int],
    weights: np.ndarray,
    samples: int,
    rng: np.random.Generator,
    node_weights=None,
) -> InfluenceEstimate:
    """Mean over `samples` cascades with a 95% half-width."""
    seeds = _check_seeds(snapshot, seeds)
    if not seeds or samples < 1:
        return InfluenceEstimate(0.0, exact=False)
    w = np.asarray(weights[: snapshot.edge_count])
    c = _node_weight_vector(snapshot.node_count, node_weights)
    totals = np.empty(samples)
    for i in range(samples):
        reached = _reach(snapshot, seeds, rng.random(snapshot.edge_count) < w)
        totals[i] = c[list(reached)].sum()
    half = 1.96 * totals.std(ddof=1) / math.sqrt(samples) if samples > 1 else float("inf")
    return InfluenceEstimate(float(totals.mean()), float(half), exact=False)
