"""
EvoSeed – Seed Selection
Evo-IMM: weighted ERR-set sampling over the intermediate evolving graph,
lazy greedy max-coverage, the static baselines and a brute-force oracle.
"""

import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from diffusion import InstanceTooLargeError, WorldEnumeration
from graph_core import GraphSnapshot
from influence_learning import BeliefTable

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 100_000
BASELINES = ("IMM", "HD", "Earliest")


# ─── Intermediate evolving graph ─────────────────────────────────


@dataclass
class IntermediateGraph:
    """The known graph at the start of a trial with node weights C and edge probabilities."""

    snapshot: GraphSnapshot
    node_weight: np.ndarray
    edge_prob: np.ndarray

    @property
    def node_count(self) -> int:
        return self.snapshot.node_count

    @property
    def n_prime(self) -> float:
        return float(self.node_weight.sum())

    @classmethod
    def uniform(cls, snapshot: GraphSnapshot, edge_prob: np.ndarray) -> "IntermediateGraph":
        return cls(snapshot, np.ones(snapshot.node_count), np.asarray(edge_prob[: snapshot.edge_count], dtype=float))


def node_weights(predicted_deltas: np.ndarray, w0: float, sigma0: float, c: float) -> np.ndarray:
    """C = E(delta d) * (w0 + c * sqrt(sigma0)) + 1."""
    deltas = np.maximum(np.asarray(predicted_deltas, dtype=float), 0.0)
    return deltas * (w0 + c * math.sqrt(sigma0)) + 1.0


def build_intermediate(
    snapshot: GraphSnapshot,
    predicted_deltas: np.ndarray,
    beliefs: BeliefTable,
    c: float,
) -> IntermediateGraph:
    deltas = np.zeros(snapshot.node_count)
    given = np.asarray(predicted_deltas, dtype=float)[: snapshot.node_count]
    deltas[: given.shape[0]] = given
    return IntermediateGraph(
        snapshot=snapshot,
        node_weight=node_weights(deltas, beliefs.w0, beliefs.sigma0, c),
        edge_prob=beliefs.ucb_vector(c, snapshot.edge_count),
    )


# ─── Root sampling ───────────────────────────────────────────────


def priority_sample_root(graph: IntermediateGraph, excluded: set[int], rng: np.random.Generator) -> int:
    """
    Draw a root from the non-excluded nodes with probability proportional to
    C, by locating a uniform point in the cumulative weight intervals. An
    exhausted exclusion set is cleared first.
    """
    if len(excluded) >= graph.node_count:
        logger.debug("every node has been a root; exclusion set reset")
        excluded.clear()
    weights = graph.node_weight.copy()
    if excluded:
        weights[list(excluded)] = 0.0
    bounds = np.cumsum(weights)
    point = rng.random() * bounds[-1]
    root = int(np.searchsorted(bounds, point, side="right"))
    return min(root, graph.node_count - 1)


class RootSampler:
    """
    Priority roots without replacement, one pass at a time.

    Each pass orders all nodes by exponential keys scaled by 1/C, which is
    the same law as repeated priority_sample_root calls with a growing
    exclusion set; when a pass is used up a new one starts.
    """

    def __init__(self, node_weight: np.ndarray, rng: np.random.Generator):
        self.node_weight = np.asarray(node_weight, dtype=float)
        self._rng = rng
        self._order = np.zeros(0, dtype=np.int64)
        self._pos = 0
        self.passes = 0

    def _new_pass(self) -> None:
        keys = self._rng.exponential(size=self.node_weight.shape[0]) / self.node_weight
        self._order = np.argsort(keys, kind="stable")
        self._pos = 0
        self.passes += 1
        if self.passes == 2:
            logger.debug("all %d nodes used as roots; starting another pass", self.node_weight.shape[0])

    def draw(self) -> int:
        if self._pos >= self._order.shape[0]:
            self._new_pass()
        root = int(self._order[self._pos])
        self._pos += 1
        return root


# ─── ERR sets ────────────────────────────────────────────────────


@dataclass(frozen=True)
class ERRSet:
    root: int
    members: frozenset
    root_weight: float


def _reverse_reach(graph: IntermediateGraph, root: int, rng: np.random.Generator) -> list[int]:
    snap = graph.snapshot
    indptr, eids, src, prob = snap.in_indptr, snap.in_eids, snap.src, graph.edge_prob
    visited = {root}
    members = [root]
    queue = [root]
    while queue:
        u = queue.pop()
        incoming = eids[indptr[u]:indptr[u + 1]]
        if incoming.size == 0:
            continue
        live = incoming[rng.random(incoming.size) < prob[incoming]]
        for v in src[live].tolist():
            if v not in visited:
                visited.add(v)
                members.append(v)
                queue.append(v)
    return members


def generate_err_set(graph: IntermediateGraph, root: int, rng: np.random.Generator) -> ERRSet:
    """Reverse BFS from `root`, each incoming edge live with its probability."""
    members = _reverse_reach(graph, root, rng)
    return ERRSet(root, frozenset(members), float(graph.node_weight[root]))


@dataclass
class ERRCollection:
    """R: sampled ERR sets, with theta' (sum of root weights) and n'."""

    n_prime: float
    node_weight: np.ndarray
    roots: list[int] = field(default_factory=list)
    members: list[np.ndarray] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)
    theta_prime: float = 0.0

    def __len__(self) -> int:
        return len(self.roots)

    @property
    def node_count(self) -> int:
        return int(self.node_weight.shape[0])

    def add(self, root: int, members: Sequence[int], weight: float) -> None:
        self.roots.append(int(root))
        self.members.append(np.asarray(members, dtype=np.int64))
        self.weights.append(float(weight))
        self.theta_prime += float(weight)

    def err_set(self, index: int) -> ERRSet:
        return ERRSet(self.roots[index], frozenset(self.members[index].tolist()), self.weights[index])

    def flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(set index per membership, member node per membership, set weights)."""
        if not self.members:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0)
        sizes = np.fromiter((m.size for m in self.members), dtype=np.int64, count=len(self.members))
        return np.repeat(np.arange(len(self.members)), sizes), np.concatenate(self.members), np.asarray(self.weights)

    def covered_weight(self, seeds: Iterable[int]) -> float:
        """F_R(S): total weight of the sets that contain a seed."""
        seeds = np.asarray(sorted(set(seeds)), dtype=np.int64)
        if seeds.size == 0 or not self.members:
            return 0.0
        set_ids, nodes, weights = self.flat()
        hit = np.unique(set_ids[np.isin(nodes, seeds)])
        return float(weights[hit].sum())

    def to_arrays(self) -> dict[str, np.ndarray]:
        set_ids, nodes, weights = self.flat()
        sizes = np.bincount(set_ids, minlength=len(self)) if len(self) else np.zeros(0, dtype=np.int64)
        return {
            "n_prime": np.array([self.n_prime]),
            "node_weight": np.asarray(self.node_weight, dtype=float),
            "roots": np.asarray(self.roots, dtype=np.int64),
            "sizes": sizes.astype(np.int64),
            "members": nodes,
            "weights": weights,
        }

    @classmethod
    def from_arrays(cls, arrays: dict) -> "ERRCollection":
        collection = cls(n_prime=float(arrays["n_prime"][0]), node_weight=np.asarray(arrays["node_weight"]))
        offsets = np.concatenate([[0], np.cumsum(arrays["sizes"])])
        for i, root in enumerate(arrays["roots"].tolist()):
            collection.add(root, arrays["members"][offsets[i]:offsets[i + 1]], float(arrays["weights"][i]))
        return collection


@dataclass(frozen=True)
class SamplerParams:
    k: int
    epsilon: float = 0.1
    l: float = 1.0

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError(f"seed budget must be >= 1, got {self.k}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.l < 1:
            raise ValueError(f"l must be >= 1, got {self.l}")

    def l_prime(self, n: int) -> float:
        return self.l * (1 + math.log(2) / math.log(n))


def log_binomial(n: int, k: int) -> float:
    k = min(k, n)
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def estimate_influence(
    collection: ERRCollection,
    seeds: Iterable[int],
    theta_prime: Optional[float] = None,
    n_prime: Optional[float] = None,
) -> float:
    """(n' / theta') * F_R(S)."""
    theta_prime = collection.theta_prime if theta_prime is None else theta_prime
    n_prime = collection.n_prime if n_prime is None else n_prime
    if theta_prime <= 0:
        return 0.0
    return n_prime / theta_prime * collection.covered_weight(seeds)


def sample_err_sets(
    graph: IntermediateGraph,
    params: SamplerParams,
    rng: np.random.Generator,
) -> ERRCollection:
    """
    Two-phase sampling. Phase 1 halves a guess x of OPT until the greedy
    estimate clears (1 + eps') x, counting sets against theta_i; phase 2 adds
    sets until their total root weight reaches theta.
    """
    params.validate()
    n = graph.node_count
    n_prime = graph.n_prime
    collection = ERRCollection(n_prime=n_prime, node_weight=graph.node_weight)
    if n < 2:
        if n == 1:
            collection.add(0, [0], float(graph.node_weight[0]))
        return collection

    sampler = RootSampler(graph.node_weight, rng)

    def top_up(count: Optional[int] = None, weight: Optional[float] = None) -> None:
        while (count is not None and len(collection) < count) or (
            weight is not None and collection.theta_prime < weight
        ):
            root = sampler.draw()
            collection.add(root, _reverse_reach(graph, root, rng), float(graph.node_weight[root]))

    k = min(params.k, n)
    l_prime = params.l_prime(n)
    eps_prime = math.sqrt(2) * params.epsilon
    log_cnk = log_binomial(n, k)
    log_n = math.log(n)

    lambda_prime = (
        (2 + 2 * eps_prime / 3) * (log_cnk + l_prime * log_n + math.log(math.log2(n))) * n_prime
        / eps_prime ** 2
    )
    lower_bound = 1.0
    for i in range(1, max(2, int(math.log2(n)))):
        x = n_prime / 2 ** i
        top_up(count=math.ceil(lambda_prime / x))
        seeds = greedy_node_selection(collection, k)
        estimate = estimate_influence(collection, seeds)
        if estimate >= (1 + eps_prime) * x:
            lower_bound = estimate / (1 + eps_prime)
            break

    alpha = math.sqrt(l_prime * log_n + math.log(2))
    beta = math.sqrt((1 - 1 / math.e) * (log_cnk + l_prime * log_n + math.log(2)))
    theta = 2 * n_prime * ((1 - 1 / math.e) * alpha + beta) ** 2 / (lower_bound * params.epsilon ** 2)
    top_up(weight=theta)
    logger.debug(
        "sampled %d ERR sets (theta' %.1f >= theta %.1f, LB %.2f, %d root passes)",
        len(collection), collection.theta_prime, theta, lower_bound, sampler.passes,
    )
    return collection


# ─── Greedy coverage ─────────────────────────────────────────────


def greedy_node_selection(collection: ERRCollection, k: int) -> list[int]:
    """
    Lazy greedy weighted max-coverage; equal gains go to the lowest id. When
    no set is left to cover, the remaining slots take the highest-C unchosen
    nodes.
    """
    if k < 1:
        raise ValueError(f"seed budget must be >= 1, got {k}")
    set_ids, nodes, weights = collection.flat()
    node_count = max(collection.node_count, int(nodes.max()) + 1 if nodes.size else 0)

    order = np.argsort(nodes, kind="stable")
    sets_of = set_ids[order]
    indptr = np.zeros(node_count + 1, dtype=np.int64)
    np.cumsum(np.bincount(nodes, minlength=node_count), out=indptr[1:])
    covered = np.zeros(len(weights), dtype=bool)

    gains = np.bincount(nodes, weights=weights[set_ids], minlength=node_count) if nodes.size else np.zeros(node_count)
    heap = [(-g, v, 0) for v, g in enumerate(gains.tolist()) if g > 0]
    heapq.heapify(heap)

    seeds: list[int] = []
    chosen: set[int] = set()
    while heap and len(seeds) < k:
        neg_gain, v, stamp = heapq.heappop(heap)
        if stamp == len(seeds):
            seeds.append(v)
            chosen.add(v)
            covered[sets_of[indptr[v]:indptr[v + 1]]] = True
            continue
        mine = sets_of[indptr[v]:indptr[v + 1]]
        fresh = float(weights[mine[~covered[mine]]].sum())
        if fresh > 0:
            heapq.heappush(heap, (-fresh, v, len(seeds)))

    if len(seeds) < k:
        c = np.zeros(node_count)
        c[: collection.node_count] = collection.node_weight
        for v in np.lexsort((np.arange(node_count), -c)).tolist():
            if len(seeds) >= k:
                break
            if v not in chosen:
                seeds.append(int(v))
                chosen.add(v)
    return seeds


def evo_imm(graph: IntermediateGraph, params: SamplerParams, rng: np.random.Generator) -> tuple[list[int], ERRCollection]:
    collection = sample_err_sets(graph, params, rng)
    return greedy_node_selection(collection, min(params.k, graph.node_count)), collection


# ─── Baselines and oracle ────────────────────────────────────────


def highest_degree(snapshot: GraphSnapshot, k: int) -> list[int]:
    deg = snapshot.degrees()
    return np.lexsort((np.arange(snapshot.node_count), -deg))[:k].tolist()


def earliest(snapshot: GraphSnapshot, k: int) -> list[int]:
    return list(range(min(k, snapshot.node_count)))


def baseline_select(
    kind: str,
    snapshot: GraphSnapshot,
    k: int,
    beliefs: Optional[BeliefTable] = None,
    c: float = 1.0,
    params: Optional[SamplerParams] = None,
    rng: Optional[np.random.Generator] = None,
) -> list[int]:
    """IMM (Evo-IMM with every C = 1), HD (top degree) or Earliest (lowest ids)."""
    if kind == "HD":
        return highest_degree(snapshot, k)
    if kind == "Earliest":
        return earliest(snapshot, k)
    if kind == "IMM":
        if beliefs is None or rng is None:
            raise ValueError("IMM needs beliefs and an rng")
        graph = IntermediateGraph.uniform(snapshot, beliefs.ucb_vector(c, snapshot.edge_count))
        seeds, _ = evo_imm(graph, params or SamplerParams(k), rng)
        return seeds
    raise ValueError(f"unknown baseline {kind!r}")


def brute_force_opt(
    snapshot: GraphSnapshot,
    weights: np.ndarray,
    k: int,
    node_weights=None,
    limit: int = BRUTE_FORCE_LIMIT,
) -> tuple[list[int], float]:
    """Exhaustive best size-k seed set under exact (weighted) influence."""
    n = snapshot.node_count
    k = min(k, n)
    if math.comb(n, k) > limit:
        raise InstanceTooLargeError(f"C({n}, {k}) seed sets exceed the limit of {limit}")
    worlds = WorldEnumeration(snapshot, weights)
    c = np.ones(n) if node_weights is None else np.asarray(node_weights, dtype=float)[:n]
    single = [worlds.reach([v]) for v in range(n)]

    best: tuple[list[int], float] = ([], -1.0)
    for combo in itertools.combinations(range(n), k):
        active = np.logical_or.reduce([single[v] for v in combo])
        value = float(worlds.prob @ (active.astype(float) @ c))
        if value > best[1] + 1e-12:
            best = (list(combo), value)
    return best
