"""
EvoSeed – Harness
The trial loop: Evo-NE, Evo-IL and Evo-IMM (or a baseline) per algorithm
over one shared ground-truth timeline, plus scaled regret and outputs.
"""

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import stats

from charts import render_line_chart
from config import ExperimentConfig
from diffusion import InstanceTooLargeError, TruthTable, exact_influence, run_cascade
from err_cache import ErrCacheManager
from evolution import generate_nettide_ba, generate_sn_network, sn_schedule
from graph_core import EvolvingGraph, GraphError, GraphSnapshot, ingest_temporal_csv, make_bucketing, time_origin
from influence_learning import BeliefTable, theory_c
from particle_filter import ParticleFilter
from seed_selection import (
    ERRCollection,
    IntermediateGraph,
    SamplerParams,
    baseline_select,
    brute_force_opt,
    build_intermediate,
    estimate_influence,
    evo_imm,
    node_weights,
)
from utils import spawn_rng, stopwatch

logger = logging.getLogger(__name__)

METRICS_HEADER = [
    "trial", "algorithm", "influenced", "rel_error", "weight_mae", "regret",
    "ms_evo_ne", "ms_evo_il", "ms_evo_imm",
]
PHASES = ("ms_evo_ne", "ms_evo_il", "ms_evo_imm")
LEARNERS = ("EIM", "IMM")

# rng stream keys under the master seed
STREAM_GROWTH = 0
STREAM_TRUTH = 1
STREAM_PARTICLES = 2
STREAM_SELECT = 3
STREAM_CASCADE = 4
STREAM_ORACLE = 5


# ─── Ground-truth timeline ───────────────────────────────────────


@dataclass
class Timeline:
    """
    Everything the world does regardless of the algorithm: the grown graph,
    the true weights at the start of each trial (after new edges arrive)
    and during its cascade, and the true population n(T^r).
    """

    graph: EvolvingGraph
    trials: int
    true_n: list[float]
    start_weights: list[np.ndarray]
    cascade_weights: list[np.ndarray]
    static: bool = False
    _snapshots: dict = field(default_factory=dict, repr=False)

    def snapshot(self, trial: int) -> GraphSnapshot:
        if trial not in self._snapshots:
            self._snapshots[trial] = self.graph.snapshot(trial)
        return self._snapshots[trial]

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_snapshots"] = {}
        return state


def _load_dataset(config: ExperimentConfig) -> EvolvingGraph:
    # undecodable bytes survive as surrogates and are rejected per row
    with open(config.dataset_path, "r", encoding="utf-8", errors="surrogateescape") as f:
        lines = f.readlines()
    bucket = make_bucketing(time_origin(lines), config.bucket_span)
    report = ingest_temporal_csv(lines, bucket, config.bidirectional)
    for row in report.rejected[:10]:
        logger.warning("line %d rejected: %s", row.line_no, row.reason)
    return report.graph


def build_timeline(config: ExperimentConfig) -> Timeline:
    rng_growth = spawn_rng(config.seed, STREAM_GROWTH)
    rng_truth = spawn_rng(config.seed, STREAM_TRUTH)
    trials = config.trials
    true_n: Optional[list[float]] = None

    if config.generator == "sn":
        schedule = [config.initial_nodes - 2] + sn_schedule(config.sn_arrivals, trials, config.sn_growth)
        graph = generate_sn_network(
            schedule, rng_growth, start_trial=0,
            edges_per_node=config.edges_per_node, bidirectional=config.bidirectional,
        )
    elif config.generator == "nettide-ba":
        graph, true_n = generate_nettide_ba(
            config.initial_nodes, config.truth_params, trials, rng_growth,
            t0=config.t0, bidirectional=config.bidirectional,
        )
    elif config.generator == "static":
        graph = generate_sn_network(
            [config.initial_nodes - 2], rng_growth, start_trial=0,
            edges_per_node=config.edges_per_node, bidirectional=config.bidirectional,
        )
        graph.advance_to(trials)
    else:
        graph = _load_dataset(config)
        if graph.max_trial < 1:
            raise GraphError("dataset spans a single trial; nothing to run")
        if graph.max_trial < trials:
            logger.warning("dataset covers %d trials, running %d instead of %d",
                           graph.max_trial, graph.max_trial, trials)
            trials = graph.max_trial

    if true_n is None:
        true_n = [float(graph.snapshot(r).node_count) for r in range(trials + 1)]

    timeline = Timeline(
        graph=graph, trials=trials, true_n=true_n, start_weights=[], cascade_weights=[],
        static=config.generator == "static",
    )
    truth = TruthTable(config.w0, config.sigma0, config.decay_exponent)
    truth.register(timeline.snapshot(0).establish, rng_truth)
    timeline.start_weights.append(truth.weights())
    timeline.cascade_weights.append(truth.weights())
    for r in range(1, trials + 1):
        truth.register(timeline.snapshot(r).establish, rng_truth)
        timeline.start_weights.append(truth.weights())
        truth.step(r, rng_truth)
        timeline.cascade_weights.append(truth.weights())

    logger.info(
        "timeline: %s world, %d trials, %d -> %d nodes, %d edges",
        config.generator, trials, timeline.snapshot(0).node_count, graph.node_count, graph.edge_count,
    )
    return timeline


# ─── Regret ──────────────────────────────────────────────────────


def approximation_ratio(n: int, epsilon: float, l: float) -> float:
    """(1 - 1/e - eps) * (1 - 1/n^l)."""
    return (1 - 1 / math.e - epsilon) * (1 - 1 / max(n, 2) ** l)


def scaled_regret(
    oracle_values: Sequence[Optional[float]],
    achieved_values: Sequence[float],
    beta_ratio: Union[float, Sequence[float]],
) -> tuple[list[float], list[int]]:
    """
    Cumulative sum of oracle - achieved / beta. Trials without an oracle
    value add nothing; their positions (0-based) are returned as skipped.
    """
    if len(oracle_values) != len(achieved_values):
        raise ValueError("oracle and achieved series must be aligned")
    betas = [beta_ratio] * len(oracle_values) if isinstance(beta_ratio, (int, float)) else list(beta_ratio)
    total = 0.0
    cumulative: list[float] = []
    skipped: list[int] = []
    for i, (opt, got, beta) in enumerate(zip(oracle_values, achieved_values, betas)):
        if not 0 < beta <= 1:
            raise ValueError(f"approximation ratio must lie in (0, 1], got {beta}")
        if opt is None:
            skipped.append(i)
        else:
            total += opt - got / beta
        cumulative.append(total)
    if skipped:
        logger.warning("no oracle value for %d trial(s); regret skips them", len(skipped))
    return cumulative, skipped


@dataclass
class OracleTrial:
    """Best achievable value of one trial, and how to value another seed set."""

    trial: int
    value: float
    seeds: list[int]
    collection: Optional[ERRCollection] = None

    @property
    def is_proxy(self) -> bool:
        return self.collection is not None


def compute_oracles(timeline: Timeline, config: ExperimentConfig, budget: int) -> list[Optional[OracleTrial]]:
    """Per trial r (index r, 0 unused): brute force or proxy oracle on G^r with start-of-trial weights."""
    oracles: list[Optional[OracleTrial]] = [None]
    for r in range(1, timeline.trials + 1):
        snap = timeline.snapshot(r)
        weights = timeline.start_weights[r]
        if config.oracle == "exact":
            try:
                seeds, value = brute_force_opt(snap, weights, budget)
                oracles.append(OracleTrial(r, value, seeds))
            except InstanceTooLargeError as e:
                logger.warning("trial %d has no exact oracle: %s", r, e)
                oracles.append(None)
        else:
            graph = IntermediateGraph.uniform(snap, weights)
            rng = spawn_rng(config.seed, STREAM_ORACLE, budget, r)
            seeds, collection = evo_imm(graph, SamplerParams(budget, config.epsilon, config.l), rng)
            oracles.append(OracleTrial(r, estimate_influence(collection, seeds), seeds, collection))
    return oracles


def achieved_value(
    oracle: OracleTrial,
    snapshot: GraphSnapshot,
    seeds: Sequence[int],
    weights: np.ndarray,
    samples: int = 1000,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Value of `seeds` on the oracle's terms; `samples` cascades when enumeration is out of reach."""
    if oracle.is_proxy:
        return estimate_influence(oracle.collection, seeds)
    return exact_influence(snapshot, seeds, weights, allow_fallback=True, samples=samples, rng=rng).value


# ─── Trial loop ──────────────────────────────────────────────────


@dataclass
class TrialMetrics:
    trial: int
    algorithm: str
    influenced: int
    rel_error: Optional[float] = None
    weight_mae: Optional[float] = None
    regret: Optional[float] = None
    timings: dict[str, float] = field(default_factory=dict)

    def to_row(self, record_timings: bool = False) -> list[str]:
        row = [
            str(self.trial), self.algorithm, str(self.influenced),
            _fmt(self.rel_error), _fmt(self.weight_mae), _fmt(self.regret),
        ]
        row.extend(_fmt(self.timings.get(p)) if record_timings else "" for p in PHASES)
        return row


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6g}"


def exploration_constant(config: ExperimentConfig, timeline: Timeline) -> float:
    if config.c_preset == "theory":
        return theory_c(timeline.graph.edge_count, timeline.graph.node_count, timeline.trials)
    return config.c


def run_algorithm(
    timeline: Timeline,
    config: ExperimentConfig,
    algorithm: str,
    budget: int,
    oracles: Optional[list[Optional[OracleTrial]]] = None,
) -> list[TrialMetrics]:
    """
    Trials r = 1..R: learn from the feedback of trial r - 1, select seeds
    from G^(r-1), then cascade on G^r with the coins shared by every
    algorithm.
    """
    c = exploration_constant(config, timeline)
    params = SamplerParams(budget, config.epsilon, config.l)
    learns = algorithm in LEARNERS
    beliefs = BeliefTable(config.w0, config.sigma0, config.decay_exponent) if learns else None
    particles: Optional[ParticleFilter] = None
    if algorithm == "EIM" and not timeline.static:
        particles = ParticleFilter(
            config.particles, config.prior_ranges, timeline.snapshot(0),
            spawn_rng(config.seed, STREAM_PARTICLES, budget),
            m=config.edges_per_node, delta=config.particle_delta, jitter=config.particle_jitter,
            t0=config.t0,
        )
    cache = ErrCacheManager(Path(config.err_cache_dir)) if config.err_cache_dir and learns else None

    metrics: list[TrialMetrics] = []
    oracle_values: list[Optional[float]] = []
    achieved: list[float] = []
    betas: list[float] = []
    feedback = None

    for r in range(1, timeline.trials + 1):
        previous = timeline.snapshot(r - 1)
        current = timeline.snapshot(r)
        row = TrialMetrics(trial=r, algorithm=algorithm, influenced=0)

        deltas = np.zeros(previous.node_count)
        with stopwatch(row.timings, "ms_evo_ne"):
            if particles is not None:
                if feedback is None:
                    deltas = particles.step(previous)
                else:
                    deltas = particles.step(previous, feedback.observed_degrees, feedback.influenced)
                row.rel_error = particles.relative_error(timeline.true_n[r])

        with stopwatch(row.timings, "ms_evo_il"):
            if beliefs is not None:
                beliefs.register(previous.establish)
                if feedback is not None:
                    beliefs.process_feedback(feedback, r - 1)

        rng_select = spawn_rng(config.seed, STREAM_SELECT, budget, r)
        collection = None
        with stopwatch(row.timings, "ms_evo_imm"):
            if algorithm == "EIM":
                graph = build_intermediate(previous, deltas, beliefs, c)
                seeds, collection = evo_imm(graph, params, rng_select)
            else:
                seeds = baseline_select(algorithm, previous, budget, beliefs, c, params, rng_select)
        if cache is not None and collection is not None:
            cache.store(f"{algorithm}_k{budget}_r{r:03d}", collection)

        feedback = run_cascade(current, seeds, timeline.cascade_weights[r], spawn_rng(config.seed, STREAM_CASCADE, r))
        row.influenced = feedback.influenced_size

        if beliefs is not None and feedback.edge_outcomes:
            triggered = np.fromiter(feedback.edge_outcomes.keys(), dtype=np.int64)
            estimate = np.full(triggered.size, config.w0)
            known = triggered < len(beliefs)
            estimate[known] = beliefs.mean[triggered[known]]
            row.weight_mae = float(np.abs(estimate - timeline.cascade_weights[r][triggered]).mean())

        if oracles is not None:
            oracle = oracles[r]
            oracle_values.append(None if oracle is None else oracle.value)
            if oracle is None:
                achieved.append(0.0)
            else:
                rng_value = spawn_rng(config.seed, STREAM_ORACLE, budget, r, 1)
                achieved.append(achieved_value(
                    oracle, current, seeds, timeline.start_weights[r], config.mc_samples, rng_value,
                ))
            betas.append(approximation_ratio(current.node_count, config.epsilon, config.l))

        logger.debug("%s K=%d trial %d: influenced %d", algorithm, budget, r, row.influenced)
        metrics.append(row)

    if oracles is not None:
        cumulative, skipped = scaled_regret(oracle_values, achieved, betas)
        for i, row in enumerate(metrics):
            row.regret = None if i in skipped else cumulative[i]
    return metrics


def run_trial(timeline: Timeline, config: ExperimentConfig, trial: int, budget: Optional[int] = None) -> list[TrialMetrics]:
    """Metrics of one trial for the whole roster (replays the earlier trials to get there)."""
    if not 1 <= trial <= timeline.trials:
        raise ValueError(f"trial must lie in [1, {timeline.trials}]")
    budget = budget or config.budgets[0]
    clipped = Timeline(
        timeline.graph, trial, timeline.true_n[: trial + 1],
        timeline.start_weights[: trial + 1], timeline.cascade_weights[: trial + 1], timeline.static,
    )
    return [run_algorithm(clipped, config, algorithm, budget)[-1] for algorithm in config.roster]


# ─── Experiment ──────────────────────────────────────────────────


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    timeline: Timeline
    metrics: dict[int, list[TrialMetrics]] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)


def _run_roster(
    timeline: Timeline, config: ExperimentConfig, budget: int, oracles
) -> list[list[TrialMetrics]]:
    if config.workers > 1 and len(config.roster) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [
                pool.submit(run_algorithm, timeline, config, algorithm, budget, oracles)
                for algorithm in config.roster
            ]
            return [f.result() for f in futures]
    return [run_algorithm(timeline, config, algorithm, budget, oracles) for algorithm in config.roster]


def run_experiment(config: ExperimentConfig, output_dir: Optional[Path] = None) -> ExperimentResult:
    config.validate()
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    timeline = build_timeline(config)
    result = ExperimentResult(config=config, timeline=timeline)

    for budget in config.budgets:
        oracles = compute_oracles(timeline, config, budget) if config.oracle != "none" else None
        runs = _run_roster(timeline, config, budget, oracles)
        rows = [run[i] for i in range(timeline.trials) for run in runs]
        result.metrics[budget] = rows

        name = "metrics.csv" if len(config.budgets) == 1 else f"metrics_k{budget}.csv"
        result.files.append(write_metrics_csv(rows, out / name, config.record_timings))
        if config.plots:
            result.files.extend(_plot(rows, config, budget, out))
        logger.info("K=%d done: %s", budget, ", ".join(
            f"{a} {cumulative_influence(rows, a)}" for a in config.roster
        ))

    result.files.append(write_summary(result, out / "summary.txt"))
    return result


def cumulative_influence(rows: Sequence[TrialMetrics], algorithm: str) -> int:
    return sum(m.influenced for m in rows if m.algorithm == algorithm)


def write_metrics_csv(rows: Sequence[TrialMetrics], path: Path, record_timings: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for m in rows:
            writer.writerow(m.to_row(record_timings))
    return path


def write_summary(result: ExperimentResult, path: Path) -> Path:
    config = result.config
    lines = []
    for budget, rows in result.metrics.items():
        lines.append(f"== K={budget} ==")
        lines.append(f"generator: {config.generator}, trials: {result.timeline.trials}, seed: {config.seed}")
        lines.append("cumulative influenced size:")
        for algorithm in config.roster:
            lines.append(f"  {algorithm:<9}{cumulative_influence(rows, algorithm)}")
        errors = [m.rel_error for m in rows if m.algorithm == "EIM" and m.rel_error is not None]
        if errors:
            lines.append("relative error (EIM): " + ", ".join(f"{e:.4f}" for e in errors))
        if config.oracle != "none":
            label = "proxy" if config.oracle == "proxy" else "exact"
            lines.append(f"final cumulative regret ({label} oracle):")
            for algorithm in config.roster:
                regrets = [m.regret for m in rows if m.algorithm == algorithm and m.regret is not None]
                lines.append(f"  {algorithm:<9}{_fmt(regrets[-1]) if regrets else 'n/a'}")
        lines.append("")
    path = Path(path)
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


def _plot(rows: Sequence[TrialMetrics], config: ExperimentConfig, budget: int, out: Path) -> list[Path]:
    files = []
    series = {}
    for algorithm in config.roster:
        running, total = [], 0
        for m in rows:
            if m.algorithm == algorithm:
                total += m.influenced
                running.append(total)
        series[algorithm] = running
    files.append(render_line_chart(series, f"Cumulative influenced size (K={budget})", out / f"influence_k{budget}.svg", "%.0f"))
    errors = [m.rel_error for m in rows if m.algorithm == "EIM" and m.rel_error is not None]
    if errors:
        files.append(render_line_chart({"rel_error": errors}, "Relative error of n(t)", out / f"rel_error_k{budget}.svg", "%.3f"))
    if config.oracle != "none":
        regret = {a: [m.regret for m in rows if m.algorithm == a] for a in config.roster}
        files.append(render_line_chart(regret, f"Cumulative scaled regret (K={budget})", out / f"regret_k{budget}.svg"))
    return files


# ─── Oracle check and bench ──────────────────────────────────────


def random_instance(nodes: int, edges: int, rng: np.random.Generator) -> tuple[GraphSnapshot, np.ndarray]:
    """Directed graph on `nodes` nodes with `edges` distinct random edges and U(0, 1) weights."""
    graph = EvolvingGraph()
    for _ in range(nodes):
        graph.add_node(0)
    pairs = [(u, v) for u in range(nodes) for v in range(nodes) if u != v]
    for i in sorted(rng.permutation(len(pairs))[: min(edges, len(pairs))].tolist()):
        graph.add_edge(*pairs[i], 0, bidirectional=False)
    return graph.snapshot(0), rng.random(graph.edge_count)


@dataclass
class OracleCheckReport:
    passed: int
    total: int
    ratios: list[float]
    threshold: float


def run_oracle_check(
    instances: int = 100, nodes: int = 8, edges: int = 12, k: int = 2,
    epsilon: float = 0.1, l: float = 1.0, seed: int = 0,
) -> OracleCheckReport:
    """Evo-IMM's exact influence against brute-force OPT on random tiny instances."""
    threshold = 1 - 1 / math.e - epsilon
    ratios = []
    passed = 0
    for i in range(instances):
        snap, weights = random_instance(nodes, edges, spawn_rng(seed, i, 0))
        seeds, _ = evo_imm(IntermediateGraph.uniform(snap, weights), SamplerParams(k, epsilon, l), spawn_rng(seed, i, 1))
        value = exact_influence(snap, seeds, weights).value
        _, opt = brute_force_opt(snap, weights, k)
        ratio = value / opt if opt > 0 else 1.0
        ratios.append(ratio)
        passed += ratio >= threshold - 1e-12
    logger.info("oracle check: %d/%d instances within %.3f of OPT", passed, instances, threshold)
    return OracleCheckReport(passed, instances, ratios, threshold)


@dataclass
class BenchRow:
    nodes: int
    edges: int
    seconds: float
    sets: int

    @property
    def size(self) -> int:
        return self.nodes + self.edges


@dataclass
class BenchReport:
    rows: list[BenchRow]
    slope: float
    intercept: float


def run_bench(
    sizes: Sequence[int] = (10_000, 30_000, 100_000),
    k: int = 10,
    epsilon: float = 0.5,
    seed: int = 0,
    w0: float = 0.05,
    sigma0: float = 0.008,
    c: float = 1.0,
) -> BenchReport:
    """Evo-IMM wall time against |V| + |E| on SN graphs; log-log slope by linear regression."""
    rows = []
    for size in sizes:
        snap = generate_sn_network([size - 2], spawn_rng(seed, STREAM_GROWTH, size), start_trial=0).snapshot(0)
        edge_prob = np.full(snap.edge_count, min(1.0, w0 + c * math.sqrt(sigma0)))
        weights = node_weights(0.5 * snap.degrees(), w0, sigma0, c)
        graph = IntermediateGraph(snap, weights, edge_prob)
        start = time.perf_counter()
        _, collection = evo_imm(graph, SamplerParams(k, epsilon), spawn_rng(seed, STREAM_SELECT, size))
        rows.append(BenchRow(snap.node_count, snap.edge_count, time.perf_counter() - start, len(collection)))
        logger.info("bench |V|+|E|=%d: %.2fs, %d sets", rows[-1].size, rows[-1].seconds, rows[-1].sets)
    if len(rows) >= 2:
        fit = stats.linregress(np.log([r.size for r in rows]), np.log([r.seconds for r in rows]))
        slope, intercept = float(fit.slope), float(fit.intercept)
    else:
        slope, intercept = math.nan, math.nan
    return BenchReport(rows, slope, intercept)
