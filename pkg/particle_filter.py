"""
EvoSeed – Particle Filter
Evo-NE: weighted particles over Nettide growth functions, scored against
observed degree increments and used to predict next-trial degree gains.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from evolution import DEFAULT_T0, RK4_STEPS, GrowthParams, GrowthState, advance_population, pa_growth_factor
from graph_core import GraphSnapshot

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PriorRanges:
    """Log-uniform prior bounds for beta, theta and capacity N."""

    beta: tuple[float, float] = (1e-8, 1.0)
    theta: tuple[float, float] = (1e-4, 10.0)
    capacity: tuple[float, float] = (1e5, 1e8)

    def to_dict(self) -> dict:
        return {"beta": list(self.beta), "theta": list(self.theta), "capacity": list(self.capacity)}

    @classmethod
    def from_dict(cls, data: dict) -> "PriorRanges":
        return cls(
            beta=tuple(data.get("beta", (1e-8, 1.0))),
            theta=tuple(data.get("theta", (1e-4, 10.0))),
            capacity=tuple(data.get("capacity", (1e5, 1e8))),
        )


@dataclass
class Particle:
    """
    One hypothesised growth function.

    `log_growth[s]` is the cumulative log PA gain of a tracked degree up to
    snapshot s under this particle, so a node last seen with degree d at
    trial a is expected to have d * exp(log_growth[now] - log_growth[a]).
    """

    params: GrowthParams
    state: GrowthState
    weight: float
    log_growth: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def expected_degree(self, anchor_degree: float, anchor_trial: int, trial: int) -> float:
        return float(anchor_degree * np.exp(self.log_growth[trial] - self.log_growth[anchor_trial]))


@dataclass(frozen=True)
class DegreeObservation:
    node: int
    observed_degree: int
    trial: int
    last_observed_trial: int
    last_observed_degree: int


class DegreeLedger:
    """Last known degree and the trial it was learnt, per known node."""

    def __init__(self):
        self.degree = np.zeros(0, dtype=float)
        self.trial = np.zeros(0, dtype=np.int64)

    @property
    def node_count(self) -> int:
        return int(self.degree.shape[0])

    def register(self, join_trials: np.ndarray, degree: float) -> None:
        """Anchor nodes not yet known (ids >= node_count) at `degree` on their join trial."""
        fresh = np.asarray(join_trials[self.node_count:], dtype=np.int64)
        if fresh.size == 0:
            return
        self.degree = np.concatenate([self.degree, np.full(fresh.size, float(degree))])
        self.trial = np.concatenate([self.trial, fresh])

    def seed(self, degrees: np.ndarray, trial: int) -> None:
        """Anchor every node at a fully known degree (the initial network)."""
        self.degree = np.asarray(degrees, dtype=float).copy()
        self.trial = np.full(self.degree.shape[0], trial, dtype=np.int64)

    def snap(self, observed: dict[int, int], trial: int) -> None:
        if not observed:
            return
        nodes = np.fromiter(observed.keys(), dtype=np.int64, count=len(observed))
        self.degree[nodes] = np.fromiter(observed.values(), dtype=float, count=len(observed))
        self.trial[nodes] = trial

    def reobserved(
        self, observed: dict[int, int], influenced: Iterable[int], influenced_before: set[int], trial: int
    ) -> list[DegreeObservation]:
        """Nodes influenced this trial and in some earlier trial, with their anchors."""
        return [
            DegreeObservation(
                node=v,
                observed_degree=int(observed[v]),
                trial=trial,
                last_observed_trial=int(self.trial[v]),
                last_observed_degree=int(self.degree[v]),
            )
            for v in sorted(influenced)
            if v in influenced_before and v in observed and v < self.node_count
        ]


# ─── Evidence and weights ────────────────────────────────────────


def particle_prior(particle: Particle, reobserved: Sequence[DegreeObservation]) -> Optional[float]:
    """Expected degree gain of the re-observed nodes under one particle; None without evidence."""
    if not reobserved:
        return None
    return sum(
        particle.expected_degree(o.last_observed_degree, o.last_observed_trial, o.trial)
        - o.last_observed_degree
        for o in reobserved
    )


def particle_posterior(reobserved: Sequence[DegreeObservation]) -> float:
    return float(sum(o.observed_degree - o.last_observed_degree for o in reobserved))


def compute_weights(priors: Sequence[float], posterior: float, delta: float = 1.0) -> np.ndarray:
    """Normalised weights inversely proportional to (posterior - prior)^2 + delta."""
    raw = 1.0 / ((posterior - np.asarray(priors, dtype=float)) ** 2 + delta)
    return raw / raw.sum()


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices of the particles to keep; one uniform offset, M evenly spaced positions."""
    count = len(weights)
    positions = (rng.random() + np.arange(count)) / count
    cumulative_sum = np.cumsum(weights)
    cumulative_sum[-1] = 1.0
    return np.searchsorted(cumulative_sum, positions)


def reweight_and_resample(
    particles: list[Particle],
    posterior: float,
    priors: Sequence[float],
    rng: np.random.Generator,
    delta: float = 1.0,
) -> list[Particle]:
    if len(priors) != len(particles):
        raise ValueError("one prior per particle is required")
    weights = compute_weights(priors, posterior, delta)
    indexes = systematic_resample(weights, rng)
    share = 1.0 / len(particles)
    return [
        Particle(
            params=particles[i].params,
            state=particles[i].state,
            weight=share,
            log_growth=particles[i].log_growth.copy(),
        )
        for i in indexes
    ]


# ─── Initialisation ──────────────────────────────────────────────


def _log_uniform(bounds: tuple[float, float], count: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = bounds
    return np.exp(rng.uniform(np.log(lo), np.log(hi), count))


def draw_parameters(count: int, ranges: PriorRanges, rng: np.random.Generator):
    """(beta, theta, capacity) arrays, drawn in that order."""
    if count < 1:
        raise ValueError("at least one particle is required")
    beta = _log_uniform(ranges.beta, count, rng)
    theta = _log_uniform(ranges.theta, count, rng)
    capacity = _log_uniform(ranges.capacity, count, rng)
    return beta, theta, capacity


def init_particles(
    count: int,
    ranges: PriorRanges,
    rng: np.random.Generator,
    initial_n: float = 2.0,
    m: int = 1,
    t0: float = DEFAULT_T0,
) -> list[Particle]:
    beta, theta, capacity = draw_parameters(count, ranges, rng)
    return [
        Particle(
            params=GrowthParams(float(b), float(th), float(c), m),
            state=GrowthState(t=t0, n=float(initial_n), realized=int(initial_n)),
            weight=1.0 / count,
        )
        for b, th, c in zip(beta, theta, capacity)
    ]


def relative_error(particles: Sequence[Particle], true_n: float) -> float:
    estimate = float(np.mean([p.state.n for p in particles]))
    return abs(estimate - true_n) / true_n


# ─── Filter ──────────────────────────────────────────────────────


class ParticleFilter:
    """
    Evo-NE over a shared degree ledger.

    Per trial r the harness calls `update` with the feedback observed on
    G^r (reweight, resample, snap the ledger) and then `predict` with the
    snapshot G^r, which propagates every particle to r + 1 and returns the
    expected degree gain of each node of G^r.
    """

    def __init__(
        self,
        count: int,
        ranges: PriorRanges,
        initial: GraphSnapshot,
        rng: np.random.Generator,
        m: int = 1,
        delta: float = 1.0,
        jitter: float = 0.0,
        t0: float = DEFAULT_T0,
        steps: int = RK4_STEPS,
    ):
        self.count = count
        self.ranges = ranges
        self.m = m
        self.delta = delta
        self.jitter = jitter
        self.t0 = t0
        self.steps = steps
        self._rng = rng

        self.beta, self.theta, self.capacity = draw_parameters(count, ranges, rng)
        self.n = np.full(count, float(initial.node_count))
        self.weights = np.full(count, 1.0 / count)
        self.log_growth = np.zeros((count, initial.trial + 1))
        self.trial = initial.trial

        self.ledger = DegreeLedger()
        self.ledger.seed(initial.degrees(), initial.trial)
        self._influenced_before: set[int] = set()

    @property
    def particles(self) -> list[Particle]:
        return [
            Particle(
                params=GrowthParams(float(self.beta[i]), float(self.theta[i]), float(self.capacity[i]), self.m),
                state=GrowthState(t=self.t0 + self.trial, n=float(self.n[i]), realized=int(self.n[i])),
                weight=float(self.weights[i]),
                log_growth=self.log_growth[i].copy(),
            )
            for i in range(self.count)
        ]

    def population_estimate(self) -> float:
        return float(np.mean(self.n))

    def relative_error(self, true_n: float) -> float:
        return abs(self.population_estimate() - true_n) / true_n

    def _priors(self, reobserved: Sequence[DegreeObservation]) -> np.ndarray:
        anchors = np.array([o.last_observed_degree for o in reobserved], dtype=float)
        anchor_trials = np.array([o.last_observed_trial for o in reobserved], dtype=np.int64)
        by_trial = np.bincount(anchor_trials, weights=anchors, minlength=self.trial + 1)
        gain = np.exp(self.log_growth[:, [self.trial]] - self.log_growth) - 1.0
        return gain @ by_trial

    def update(self, snapshot: GraphSnapshot, observed: dict[int, int], influenced: Iterable[int]) -> bool:
        """
        Fold in the degree observations made on `snapshot`; returns False when
        no node was re-observed and the weights were left untouched.
        """
        if snapshot.trial != self.trial:
            raise ValueError(f"filter is at trial {self.trial}, snapshot is G^{snapshot.trial}")
        self.ledger.register(snapshot.join, self.m)
        influenced = set(influenced)
        reobserved = self.ledger.reobserved(observed, influenced, self._influenced_before, self.trial)
        resampled = False
        if reobserved:
            priors = self._priors(reobserved)
            posterior = particle_posterior(reobserved)
            self.weights = compute_weights(priors, posterior, self.delta)
            if self.weights.max() > 0.99:
                logger.warning("particle weights degenerate at trial %d (max %.3f)", self.trial, self.weights.max())
            self._resample()
            resampled = True
            logger.debug(
                "trial %d: %d re-observed nodes, posterior %.1f, best prior %.1f",
                self.trial, len(reobserved), posterior, priors[np.argmin(np.abs(priors - posterior))],
            )
        else:
            logger.debug("trial %d: no re-observed nodes, weights kept", self.trial)
        self.ledger.snap(observed, self.trial)
        self._influenced_before |= influenced
        return resampled

    def _resample(self) -> None:
        indexes = systematic_resample(self.weights, self._rng)
        self.beta = self.beta[indexes]
        self.theta = self.theta[indexes]
        self.capacity = self.capacity[indexes]
        self.n = self.n[indexes]
        self.log_growth = self.log_growth[indexes]
        self.weights = np.full(self.count, 1.0 / self.count)
        if self.jitter > 0:
            self.beta = self.beta * np.exp(self.jitter * self._rng.standard_normal(self.count))
            self.capacity = np.maximum(
                self.capacity * np.exp(self.jitter * self._rng.standard_normal(self.count)), self.n
            )

    def predict(self, snapshot: GraphSnapshot) -> np.ndarray:
        """Propagate to the next trial; expected degree gain for every node of the snapshot."""
        if snapshot.trial != self.trial:
            raise ValueError(f"filter is at trial {self.trial}, snapshot is G^{snapshot.trial}")
        self.ledger.register(snapshot.join, self.m)
        now = self.trial

        n_next = advance_population(
            self.beta, self.theta, self.capacity, self.t0 + now, self.n, 1.0, steps=self.steps
        )
        arrivals = n_next - self.n
        anchored = np.bincount(self.ledger.trial, weights=self.ledger.degree, minlength=now + 1)
        carried = np.exp(self.log_growth[:, [now]] - self.log_growth)
        surplus = self.m * np.maximum(0.0, self.n - self.ledger.node_count)
        total = carried @ anchored + surplus
        gain = pa_growth_factor(total, self.m * arrivals)

        per_anchor_trial = (carried * (gain - 1.0)[:, None]).mean(axis=0)
        predicted = self.ledger.degree * per_anchor_trial[self.ledger.trial]

        self.log_growth = np.hstack([self.log_growth, (self.log_growth[:, now] + np.log(gain))[:, None]])
        self.n = n_next
        self.trial = now + 1
        return predicted[: snapshot.node_count]

    def step(
        self, snapshot: GraphSnapshot, observed: Optional[dict[int, int]] = None, influenced: Iterable[int] = ()
    ) -> np.ndarray:
        """One Evo-NE round: update from the last feedback (if any), then predict."""
        if observed is not None:
            self.update(snapshot, observed, influenced)
        return self.predict(snapshot)
