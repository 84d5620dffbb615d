import json

from graph_core import ingest_temporal_csv
from main import EXIT_OK, EXIT_USAGE, build_parser, main


def _write_config(path, **values):
    base = {
        "trials": 2, "budgets": [2], "initial_nodes": 20, "sn_arrivals": 4,
        "particles": 20, "epsilon": 0.5, "roster": ["HD", "IMM"],
    }
    base.update(values)
    path.write_text(json.dumps(base), encoding="utf-8")
    return path


def test_budget_flag_collects_a_sweep():
    parser = build_parser()
    args = parser.parse_args(["run", "-k", "1", "-k", "3"])
    assert args.budget == [1, 3]


def test_generate_writes_an_ingestible_world(tmp_path):
    config = _write_config(tmp_path / "config.json")
    out = tmp_path / "world.csv"
    assert main(["generate", "--config", str(config), "-o", str(out)]) == EXIT_OK
    report = ingest_temporal_csv(out.read_text(encoding="utf-8").splitlines())
    assert report.ok
    assert report.graph.node_count == 20 + 4 + 5


def test_run_command(tmp_path, capsys):
    config = _write_config(tmp_path / "config.json")
    assert main(["run", "--config", str(config), "-o", str(tmp_path / "out"), "--seed", "3"]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "metrics.csv" in printed and "summary.txt" in printed
    assert (tmp_path / "out" / "metrics.csv").exists()


def test_bad_config_is_a_usage_error(tmp_path, capsys):
    config = _write_config(tmp_path / "config.json", epsilon=3.0)
    assert main(["run", "--config", str(config)]) == EXIT_USAGE
    assert "epsilon" in capsys.readouterr().err


def test_unknown_key_is_a_usage_error(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"speed": 2}), encoding="utf-8")
    assert main(["run", "--config", str(config)]) == EXIT_USAGE


def test_generate_refuses_file_worlds(tmp_path):
    config = _write_config(tmp_path / "config.json", generator="file", dataset_path="x.csv")
    assert main(["generate", "--config", str(config)]) == EXIT_USAGE


def test_oracle_command(capsys):
    code = main(["oracle", "--instances", "2", "--nodes", "5", "--edges", "6", "--epsilon", "0.3"])
    assert code in (0, 1)
    assert "instances reach" in capsys.readouterr().out


def test_undecodable_config_is_a_usage_error(tmp_path):
    config = tmp_path / "config.json"
    config.write_bytes(b'{"trials": "\xff"}')
    assert main(["run", "--config", str(config)]) == EXIT_USAGE


def test_run_survives_undecodable_dataset_rows(tmp_path):
    dataset = tmp_path / "world.csv"
    dataset.write_bytes(
        b"node,a,2000.1\nnode,b,2000.2\nnode,c,2000.3\nedge,a,b,2000.4\nedge,b,c,2000.5\n"
        b"node,\xff,2000.6\nnode,d,2001.1\nedge,d,a,2001.2\nnode,e,2002.1\nedge,e,b,2002.2\n"
    )
    config = _write_config(
        tmp_path / "config.json", generator="file", dataset_path=str(dataset), budgets=[1], roster=["HD"],
    )
    assert main(["run", "--config", str(config), "-o", str(tmp_path / "out")]) == EXIT_OK
