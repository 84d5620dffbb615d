"""
EvoSeed – Influence Learning
Evo-IL: per-edge Gaussian beliefs refined by scalar Kalman updates on
triggered edges, inflated on idle ones, read out as UCB estimates.
"""

import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from diffusion import TrialFeedback, drift_variance

logger = logging.getLogger(__name__)

# Observation noise of a Bernoulli outcome, fixed at its upper bound.
OBSERVATION_NOISE = 1.0


@dataclass(frozen=True)
class EdgeBelief:
    mean: float
    variance: float
    birth_trial: int
    last_update_trial: int

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "variance": self.variance,
            "birth_trial": self.birth_trial,
            "last_update_trial": self.last_update_trial,
        }


def delta_variance(trial, birth, k: float, sigma0: float):
    """Per-trial variance inflation sigma0 / max(trial - birth, 1)^k."""
    return drift_variance(trial, birth, k, sigma0, floor_age=True)


def _refine(mean, variance, z, inflation):
    q = variance + OBSERVATION_NOISE
    gain = variance / q
    return mean + gain * (z - mean), variance + inflation - gain * variance


def kalman_update(belief: EdgeBelief, z: int, trial: int, k: float, sigma0: float) -> EdgeBelief:
    inflation = float(delta_variance(trial, belief.birth_trial, k, sigma0))
    mean, variance = _refine(belief.mean, belief.variance, z, inflation)
    return replace(belief, mean=float(mean), variance=float(variance), last_update_trial=trial)


def idle_update(belief: EdgeBelief, trial: int, k: float, sigma0: float) -> EdgeBelief:
    inflation = float(delta_variance(trial, belief.birth_trial, k, sigma0))
    return replace(belief, variance=belief.variance + inflation)


def ucb_estimate(belief: EdgeBelief, c: float) -> float:
    return min(1.0, max(0.0, belief.mean + c * math.sqrt(belief.variance)))


def theory_c(edge_count: int, node_count: int, trials: int) -> float:
    """Exploration constant 2 * sqrt(ln(2 |E| |V| R)) from the regret analysis."""
    return 2.0 * math.sqrt(math.log(2.0 * max(edge_count, 1) * max(node_count, 1) * max(trials, 1)))


def process_feedback(
    beliefs: dict[int, EdgeBelief],
    feedback: TrialFeedback,
    trial: int,
    k: float,
    sigma0: float,
    w0: float,
) -> dict[int, EdgeBelief]:
    """Evo-IL on a plain mapping; outcomes for unknown edges register them first."""
    updated = dict(beliefs)
    birth = max(trial - 1, 0)
    for edge in feedback.edge_outcomes:
        if edge not in updated:
            updated[edge] = EdgeBelief(w0, sigma0, birth, birth)
    for edge, belief in updated.items():
        if edge in feedback.edge_outcomes:
            updated[edge] = kalman_update(belief, feedback.edge_outcomes[edge], trial, k, sigma0)
        else:
            updated[edge] = idle_update(belief, trial, k, sigma0)
    return updated


class BeliefTable:
    """Edge beliefs in parallel arrays indexed by edge id."""

    def __init__(self, w0: float = 0.05, sigma0: float = 0.008, k: float = 2.0):
        self.w0 = w0
        self.sigma0 = sigma0
        self.k = k
        self.mean = np.zeros(0)
        self.variance = np.zeros(0)
        self.birth = np.zeros(0, dtype=np.int64)
        self.last_update = np.zeros(0, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.mean.shape[0])

    def belief(self, edge: int) -> EdgeBelief:
        return EdgeBelief(
            float(self.mean[edge]), float(self.variance[edge]),
            int(self.birth[edge]), int(self.last_update[edge]),
        )

    def register(self, establish_trials: Sequence[int]) -> int:
        """Prior beliefs (w0, sigma0) for every edge id not yet known."""
        fresh = np.asarray(establish_trials[len(self):], dtype=np.int64)
        if fresh.size:
            births = np.maximum(fresh - 1, 0)
            self.mean = np.concatenate([self.mean, np.full(fresh.size, self.w0)])
            self.variance = np.concatenate([self.variance, np.full(fresh.size, self.sigma0)])
            self.birth = np.concatenate([self.birth, births])
            self.last_update = np.concatenate([self.last_update, births])
        return int(fresh.size)

    def process_feedback(self, feedback: TrialFeedback, trial: int, establish_trials: Optional[Sequence[int]] = None) -> int:
        """
        Kalman-refine every edge with an outcome this trial and inflate the
        rest. Returns the number of refined edges.
        """
        if establish_trials is not None:
            self.register(establish_trials)
        if feedback.edge_outcomes:
            top = max(feedback.edge_outcomes) + 1
            if top > len(self):
                logger.debug("registering %d edges seen only through feedback", top - len(self))
                self.register(np.full(top, trial, dtype=np.int64))

        inflation = delta_variance(trial, self.birth, self.k, self.sigma0)
        edges = np.fromiter(feedback.edge_outcomes.keys(), dtype=np.int64, count=len(feedback.edge_outcomes))
        z = np.fromiter(feedback.edge_outcomes.values(), dtype=float, count=len(feedback.edge_outcomes))

        idle = np.ones(len(self), dtype=bool)
        idle[edges] = False
        self.variance[idle] += inflation[idle]
        if edges.size:
            mean, variance = _refine(self.mean[edges], self.variance[edges], z, inflation[edges])
            self.mean[edges] = mean
            self.variance[edges] = variance
            self.last_update[edges] = trial
        logger.debug("trial %d: %d refined, %d idle beliefs", trial, edges.size, int(idle.sum()))
        return int(edges.size)

    def ucb_vector(self, c: float, edge_count: Optional[int] = None) -> np.ndarray:
        """
        UCB estimate per edge id, clamped to [0, 1]; ids beyond the table get
        the initial value w0 + c * sqrt(sigma0).
        """
        ucb = np.clip(self.mean + c * np.sqrt(self.variance), 0.0, 1.0)
        if edge_count is not None and edge_count > len(self):
            initial = min(1.0, max(0.0, self.w0 + c * math.sqrt(self.sigma0)))
            ucb = np.concatenate([ucb, np.full(edge_count - len(self), initial)])
        return ucb[:edge_count] if edge_count is not None else ucb

    def export_csv(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["edge", "mean", "variance", "birth_trial", "last_update_trial"])
            for e in range(len(self)):
                writer.writerow([
                    e, repr(float(self.mean[e])), repr(float(self.variance[e])),
                    int(self.birth[e]), int(self.last_update[e]),
                ])
