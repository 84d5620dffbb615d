import numpy as np
import pytest

from err_cache import ErrCacheManager
from seed_selection import IntermediateGraph, SamplerParams, sample_err_sets


@pytest.fixture
def collection(six_node_graph):
    snap = six_node_graph.snapshot(0)
    graph = IntermediateGraph(snap, np.linspace(1.0, 2.0, 6), np.full(snap.edge_count, 0.4))
    return sample_err_sets(graph, SamplerParams(k=2, epsilon=0.5), np.random.default_rng(0))


def test_store_and_load(tmp_path, collection):
    cache = ErrCacheManager(tmp_path)
    path = cache.store("EIM_k2_r001", collection)
    assert path.exists() and path.with_suffix(".sig").exists()

    loaded = cache.load("EIM_k2_r001")
    assert loaded is not None
    assert loaded.roots == collection.roots
    assert loaded.theta_prime == pytest.approx(collection.theta_prime)
    assert loaded.covered_weight([0, 3]) == pytest.approx(collection.covered_weight([0, 3]))


def test_tampered_entry_is_rejected(tmp_path, collection):
    cache = ErrCacheManager(tmp_path)
    path = cache.store("IMM_k2_r001", collection)
    data = bytearray(path.read_bytes())
    data[-10] ^= 0xFF
    path.write_bytes(bytes(data))
    assert cache.load("IMM_k2_r001") is None
    assert "verification failed" in cache.last_error


def test_other_key_cannot_read(tmp_path, collection):
    ErrCacheManager(tmp_path).store("EIM_k2_r002", collection)
    other = ErrCacheManager(tmp_path, key=b"another key")
    assert other.load("EIM_k2_r002") is None


def test_missing_entry(tmp_path):
    cache = ErrCacheManager(tmp_path)
    assert cache.load("nothing") is None
    assert "not found" in cache.last_error
