import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from config import ExperimentConfig  # noqa: E402
from graph_core import EvolvingGraph  # noqa: E402


def build_graph(nodes: int, edges, bidirectional: bool = False, trial: int = 0) -> EvolvingGraph:
    graph = EvolvingGraph()
    for _ in range(nodes):
        graph.add_node(trial)
    for u, v in edges:
        graph.add_edge(u, v, trial, bidirectional=bidirectional)
    return graph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path_graph():
    """Directed path 0 -> 1 -> 2."""
    return build_graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def star_graph():
    """Center 0 with bidirectional ties to leaves 1..4."""
    return build_graph(5, [(0, 1), (0, 2), (0, 3), (0, 4)], bidirectional=True)


@pytest.fixture
def six_node_graph():
    """Small directed fixture used by the estimator checks."""
    return build_graph(6, [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (4, 5), (5, 0), (2, 5)])


@pytest.fixture
def tiny_config(tmp_path):
    return ExperimentConfig(
        trials=3,
        budgets=[2],
        generator="sn",
        initial_nodes=30,
        sn_arrivals=5,
        sn_growth=1.5,
        truth_capacity=1e5,
        particles=50,
        epsilon=0.5,
        w0=0.2,
        output_dir=str(tmp_path / "runs"),
    )
