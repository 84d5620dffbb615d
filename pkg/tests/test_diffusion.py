import math

import numpy as np
import pytest
from scipy import stats

from conftest import build_graph
from diffusion import (
    EdgeTruth,
    InstanceTooLargeError,
    TruthTable,
    WorldEnumeration,
    drift_variance,
    exact_influence,
    initial_weights,
    monte_carlo_influence,
    relevant_edges,
    run_cascade,
    step_truth_weights,
)
from graph_core import GraphError


# ─── Truth weights ───────────────────────────────────────────────


def test_drift_variance():
    assert drift_variance(3, 1, 2.0, 0.008) == pytest.approx(0.002)
    assert drift_variance(1, 1, 2.0, 0.008) == 0.0
    assert drift_variance(1, 1, 2.0, 0.008, floor_age=True) == pytest.approx(0.008)
    assert drift_variance(50, 0, math.inf, 0.008) == 0.0


def test_frozen_walk_keeps_weights():
    truths = [EdgeTruth(i, 0.2 + 0.1 * i, 0) for i in range(4)]
    stepped = step_truth_weights(truths, 5, math.inf, 0.008, np.random.default_rng(0))
    assert [t.w_true for t in stepped] == [t.w_true for t in truths]

    table = TruthTable(k=math.inf)
    table.register([0, 0, 1], np.random.default_rng(1))
    before = table.weights()
    table.step(4, np.random.default_rng(2))
    assert np.array_equal(table.weights(), before)


def test_fresh_weights_follow_clamped_gaussian():
    draws = initial_weights(100_000, 0.05, 0.008, np.random.default_rng(3))
    assert draws.min() >= 0.0 and draws.max() <= 1.0
    sd = math.sqrt(0.008)
    # mean of N(0.05, 0.008) clamped below at 0
    a = -0.05 / sd
    clamped_mean = 0.05 * (1 - stats.norm.cdf(a)) + sd * stats.norm.pdf(a)
    assert draws.mean() == pytest.approx(clamped_mean, abs=0.003)


def test_weights_stay_in_unit_interval():
    table = TruthTable(w0=0.5, sigma0=0.5, k=0.0)
    table.register(np.zeros(50, dtype=int), np.random.default_rng(4))
    rng = np.random.default_rng(5)
    for r in range(1, 10_001):
        table.step(r, rng)
    w = table.weights()
    assert w.min() >= 0.0 and w.max() <= 1.0


def test_registered_edges_are_born_a_trial_before_they_appear():
    table = TruthTable()
    rng = np.random.default_rng(6)
    assert table.register([0, 0], rng) == 2
    assert table.register([0, 0, 3], rng) == 1
    assert table.edge(2).birth_trial == 2
    assert table.edge(0).birth_trial == 0


# ─── Cascades ────────────────────────────────────────────────────


def test_certain_path_cascade(path_graph):
    fb = run_cascade(path_graph.snapshot(0), [0], np.ones(2), np.random.default_rng(0))
    assert fb.influenced == {0, 1, 2}
    assert fb.edge_outcomes == {0: 1, 1: 1}


def test_blocked_cascade_records_seed_attempts(star_graph):
    snap = star_graph.snapshot(0)
    fb = run_cascade(snap, [0], np.zeros(snap.edge_count), np.random.default_rng(0))
    assert fb.influenced == {0}
    assert set(fb.edge_outcomes) == set(snap.out_edges(0).tolist())
    assert set(fb.edge_outcomes.values()) == {0}
    assert set(fb.observed_degrees) == {0, 1, 2, 3, 4}
    assert fb.observed_degrees[0] == 4


def test_seed_outside_snapshot(path_graph):
    with pytest.raises(GraphError):
        run_cascade(path_graph.snapshot(0), [7], np.ones(2), np.random.default_rng(0))


def test_single_edge_frequency():
    snap = build_graph(2, [(0, 1)]).snapshot(0)
    rng = np.random.default_rng(8)
    hits = sum(1 in run_cascade(snap, [0], np.array([0.3]), rng).influenced for _ in range(100_000))
    assert hits / 100_000 == pytest.approx(0.3, abs=0.01)


def test_coupled_cascades_are_monotone_in_seeds(six_node_graph):
    snap = six_node_graph.snapshot(0)
    weights = np.random.default_rng(9).random(snap.edge_count)
    for seed in range(50):
        small = run_cascade(snap, [0], weights, np.random.default_rng(seed))
        large = run_cascade(snap, [0, 4], weights, np.random.default_rng(seed))
        assert small.influenced <= large.influenced


def test_outcomes_cover_every_out_edge_of_influenced(six_node_graph):
    snap = six_node_graph.snapshot(0)
    weights = np.full(snap.edge_count, 0.5)
    for seed in range(30):
        fb = run_cascade(snap, [0, 3], weights, np.random.default_rng(seed))
        expected = {e for u in fb.influenced for e in snap.out_edges(u).tolist()}
        assert set(fb.edge_outcomes) == expected
        assert {0, 3} <= fb.influenced


# ─── Oracles ─────────────────────────────────────────────────────


def test_exact_influence_on_path(path_graph):
    snap = path_graph.snapshot(0)
    assert exact_influence(snap, [0], np.array([0.5, 0.5])).value == pytest.approx(1.75)
    assert exact_influence(snap, [0, 1, 2], np.array([0.5, 0.5])).value == pytest.approx(3.0)
    assert exact_influence(snap, [], np.array([0.5, 0.5])).value == 0.0


def test_exact_influence_on_star():
    graph = build_graph(5, [(0, 1), (0, 2), (0, 3), (0, 4)])
    w = np.array([0.1, 0.2, 0.3, 0.4])
    assert exact_influence(graph.snapshot(0), [0], w).value == pytest.approx(1 + w.sum())


def test_node_weights_scale_influence(path_graph):
    snap = path_graph.snapshot(0)
    value = exact_influence(snap, [0], np.array([0.5, 0.5]), node_weights=[2.0, 1.0, 4.0]).value
    assert value == pytest.approx(2.0 + 0.5 + 0.25 * 4.0)


def test_relevant_edges_prune_unreachable_parts():
    graph = build_graph(5, [(0, 1), (1, 0), (2, 3), (3, 4)])
    weights = np.array([0.5, 0.5, 0.5, 0.0])
    assert relevant_edges(graph.snapshot(0), [0], weights).tolist() == [0]


def test_too_many_edges_without_fallback():
    graph = build_graph(12, [(i, i + 1) for i in range(11)] + [(i + 1, i) for i in range(11)])
    snap = graph.snapshot(0)
    weights = np.full(snap.edge_count, 0.5)
    with pytest.raises(InstanceTooLargeError):
        exact_influence(snap, [0], weights)
    estimate = exact_influence(snap, [0], weights, allow_fallback=True, samples=2000, rng=np.random.default_rng(0))
    assert not estimate.exact
    assert estimate.half_width > 0


def test_world_enumeration_skips_certain_edges(path_graph):
    worlds = WorldEnumeration(path_graph.snapshot(0), np.array([1.0, 0.5]))
    assert worlds.world_count == 2
    assert worlds.prob.sum() == pytest.approx(1.0)


@pytest.mark.slow
def test_enumeration_agrees_with_monte_carlo():
    rng = np.random.default_rng(21)
    pairs = [(u, v) for u in range(8) for v in range(u + 1, 8)]
    chosen = [pairs[i] for i in sorted(rng.choice(len(pairs), 10, replace=False))]
    snap = build_graph(8, chosen).snapshot(0)
    weights = rng.random(snap.edge_count)
    seeds = [int(u) for u, _ in chosen[:2]]
    exact = exact_influence(snap, seeds, weights).value
    mc = monte_carlo_influence(snap, seeds, weights, 1_000_000, np.random.default_rng(22))
    assert abs(mc.value - exact) <= 3 * mc.half_width / 1.96
