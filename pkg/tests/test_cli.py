import csv
import json
from pathlib import Path

import numpy as np
import pytest

from factorcube import cli, factoring, network
from factorcube.cli import EXIT_CAP, EXIT_PARSE, EXIT_USAGE, EXIT_VALIDATION, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write_two_node_net(path):
    net = network.BeliefNet(
        (network.Variable(0, "A", 2), network.Variable(1, "B", 2)),
        ((), (0,)),
        (np.array([0.5, 0.5]), np.array([0.9, 0.1, 0.2, 0.8])),
    )
    network.save_net(net, network.QuerySpec(0, {1: 0}), path)


# -- gen -----------------------------------------------------------------------

def test_gen_writes_valid_deterministic_file(tmp_path, capsys):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    for path in (a, b):
        code, _, _ = run(capsys, "gen", "--seed", "1", "--nodes", "10..10",
                         "--out", str(path))
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    net, q = network.load_net(a)
    assert network.validate(net) == []
    assert net.node_count == 10


def test_gen_range_errors(capsys):
    code, _, err = run(capsys, "gen", "--nodes", "5..4")
    assert code == EXIT_USAGE
    assert "range" in err
    code, _, err = run(capsys, "gen", "--nodes", "4..4", "--arcs", "3..3")
    assert code == EXIT_USAGE


def test_gen_rejects_malformed_range(capsys):
    with pytest.raises(SystemExit) as err:
        main(["gen", "--nodes", "ten..twenty"])
    assert err.value.code == EXIT_USAGE
    capsys.readouterr()


# -- validate ------------------------------------------------------------------

def test_validate_ok_and_failures(tmp_path, capsys):
    path = tmp_path / "net.json"
    write_two_node_net(path)
    code, out, _ = run(capsys, "validate", str(path))
    assert code == 0 and "ok" in out

    obj = json.loads(path.read_text())
    obj["cpts"][0] = [0.3, 0.6]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(obj))
    code, _, err = run(capsys, "validate", str(bad))
    assert code == EXIT_VALIDATION
    assert "row-sum" in err or "row-sum" in _

    garbage = tmp_path / "garbage.json"
    garbage.write_text("{oops")
    code, _, err = run(capsys, "validate", str(garbage))
    assert code == EXIT_PARSE


# -- query ---------------------------------------------------------------------

def test_query_two_node_bayes(tmp_path, capsys):
    path = tmp_path / "net.json"
    write_two_node_net(path)
    code, out, _ = run(capsys, "query", str(path))
    assert code == 0
    assert "A=0: 0.818182" in out


def test_query_oracle_check_sweep(tmp_path, capsys):
    for i in range(1, 11):
        net, q = network.random_net(
            network.NetGenParams((3, 10), (1.0, 2.0), (0, 2), seed=900 + i)
        )
        path = tmp_path / f"n{i}.json"
        network.save_net(net, q, path)
        code, out, _ = run(capsys, "query", str(path), "--check-oracle")
        assert code == 0
        dev = float(out.strip().split()[-1])
        assert dev < 1e-9


def test_query_prior_for_root_without_evidence(tmp_path, capsys):
    net = network.BeliefNet(
        (network.Variable(0, "A", 2),), ((),), (np.array([0.25, 0.75]),)
    )
    path = tmp_path / "root.json"
    network.save_net(net, network.QuerySpec(0), path)
    code, out, _ = run(capsys, "query", str(path))
    assert "A=0: 0.250000" in out and "A=1: 0.750000" in out


def test_query_dimension_cap_exit_code(tmp_path, capsys):
    net = network.BeliefNet(
        (network.Variable(0, "A", 2), network.Variable(1, "B", 2),
         network.Variable(2, "C", 2)),
        ((), (0,), (1,)),
        (np.array([0.4, 0.6]), np.array([0.9, 0.1, 0.2, 0.8]),
         np.array([0.7, 0.3, 0.5, 0.5])),
    )
    path = tmp_path / "n.json"
    network.save_net(net, network.QuerySpec(2), path)
    code, _, err = run(capsys, "query", str(path), "--max-dim", "1")
    assert code == EXIT_CAP
    assert "cap" in err


# -- plan ----------------------------------------------------------------------

def test_plan_single_factor_has_zero_products(tmp_path, capsys):
    net = network.BeliefNet(
        (network.Variable(0, "A", 2),), ((),), (np.array([0.4, 0.6]),)
    )
    path = tmp_path / "n.json"
    network.save_net(net, network.QuerySpec(0), path)
    code, out, _ = run(capsys, "plan", str(path), "--out",
                       str(tmp_path / "t.json"))
    assert code == 0
    assert "cps=0" in out


def test_plan_chain_writes_left_deep_tree(tmp_path, capsys):
    net = network.BeliefNet(
        (network.Variable(0, "A", 2), network.Variable(1, "B", 2),
         network.Variable(2, "C", 2)),
        ((), (0,), (1,)),
        (np.array([0.4, 0.6]), np.array([0.9, 0.1, 0.2, 0.8]),
         np.array([0.7, 0.3, 0.5, 0.5])),
    )
    path = tmp_path / "n.json"
    network.save_net(net, network.QuerySpec(2), path)
    tree_path = tmp_path / "t.json"
    code, _, _ = run(capsys, "plan", str(path), "--heuristic", "chain",
                     "--out", str(tree_path))
    assert code == 0
    tree = factoring.load_tree(tree_path)
    n3, n4 = tree.nodes[3], tree.nodes[4]
    assert (n3.left, n3.right) == (0, 1)
    assert (n4.left, n4.right) == (3, 2)
    factoring.check_tree(tree)


def test_plan_set_factoring_passes_invariants(tmp_path, capsys):
    net, q = network.random_net(
        network.NetGenParams((15, 25), (1.0, 2.5), (1, 4), seed=77)
    )
    path = tmp_path / "n.json"
    network.save_net(net, q, path)
    tree_path = tmp_path / "t.json"
    code, _, _ = run(capsys, "plan", str(path), "--out", str(tree_path))
    assert code == 0
    factoring.check_tree(factoring.load_tree(tree_path))


def test_plan_unknown_heuristic_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        main(["plan", "x.json", "--heuristic", "magic"])
    assert err.value.code == EXIT_USAGE
    capsys.readouterr()


# -- simulate ------------------------------------------------------------------

def read_details(path):
    # metadata comment lines are "# <text>"; the header row may itself
    # start with a "#" column name
    with open(path) as fh:
        rows = [r for r in csv.reader(line for line in fh
                                      if not line.startswith("# "))]
    header, *data = rows
    return [dict(zip(header, r)) for r in data]


def test_simulate_tiny_net_is_sequential(tmp_path, capsys):
    path = tmp_path / "n.json"
    write_two_node_net(path)
    out_dir = tmp_path / "out"
    code, out, _ = run(capsys, "simulate", str(path), "--out", str(out_dir))
    assert code == 0
    assert "r-spdp" in out and "mem/Dist-mem" in out and "%-time" in out
    for rec in read_details(out_dir / "details.csv"):
        assert float(rec["r_spdp"]) == 1.0
        assert float(rec["dd"]) == (
            (int(rec["dm"]) - int(rec["md"])) / int(rec["dm"])
            if int(rec["dm"]) else 0.0
        )


def test_simulate_zero_comm_machine_reaches_processor_bound(tmp_path, capsys):
    machine = tmp_path / "m.json"
    machine.write_text(json.dumps(
        {"c_st": 0, "c_b": 0, "n_a": 2, "g_min": 1}
    ))
    net, q = network.random_net(
        network.NetGenParams((8, 8), (1.2, 1.8), (0, 0), seed=5)
    )
    path = tmp_path / "n.json"
    network.save_net(net, q, path)
    out_dir = tmp_path / "out"
    code, _, _ = run(capsys, "simulate", str(path), "--machine", str(machine),
                     "--heuristic", "set-factoring", "--out", str(out_dir))
    assert code == 0
    (rec,) = read_details(out_dir / "details.csv")
    # every product result keeps >= 1 variable, so n_u = 2 everywhere
    assert int(rec["n_u_query"]) == 2
    assert float(rec["r_spdp"]) == 2.0
    assert float(rec["efficiency"]) == 1.0


def test_simulate_accepts_tree_files(tmp_path, capsys):
    net, q = network.random_net(
        network.NetGenParams((10, 14), (1.0, 2.0), (1, 2), seed=9)
    )
    npath = tmp_path / "n.json"
    network.save_net(net, q, npath)
    tpath = tmp_path / "t.json"
    run(capsys, "plan", str(npath), "--out", str(tpath))
    code, out, _ = run(capsys, "simulate", str(tpath))
    assert code == 0
    assert "results (tree)" in out


def test_simulate_rejects_unknown_format(tmp_path, capsys):
    path = tmp_path / "x.json"
    path.write_text('{"format": "mystery"}')
    code, _, err = run(capsys, "simulate", str(path))
    assert code == EXIT_PARSE


def test_simulate_malformed_machine_config(tmp_path, capsys):
    npath = tmp_path / "n.json"
    write_two_node_net(npath)
    machine = tmp_path / "m.json"
    machine.write_text('{"warp": 9}')
    code, _, err = run(capsys, "simulate", str(npath), "--machine", str(machine))
    assert code == EXIT_USAGE
    assert "machine" in err


# -- experiment ------------------------------------------------------------------

EXPERIMENT_FILES = [
    "nets_table.csv", "nets_table.txt",
    "results_set_factoring.csv", "results_set_factoring_c.csv",
    "results_chain.csv", "memory_comparison.csv",
    "tree_parallelism.csv", "details.csv", "metadata.json",
]


def test_experiment_writes_all_tables(tmp_path, capsys):
    out = tmp_path / "run"
    code, _, _ = run(capsys, "experiment", "--count", "8", "--seed", "7",
                     "--out", str(out))
    assert code == 0
    for name in EXPERIMENT_FILES:
        assert (out / name).exists(), name
    table1 = (out / "nets_table.csv").read_text().strip().split("\n")
    assert len([l for l in table1 if not l.startswith("# ")]) == 1 + 8
    details = read_details(out / "details.csv")
    assert len(details) == 8 * 3
    for rec in details:
        dd = float(rec["dd"])
        assert 0.0 <= dd < 1.0
        assert float(rec["efficiency"]) <= 1.0 + 1e-12
        assert float(rec["pct_time"]) <= 1.0 + 1e-12
        # default machine has zero fixed overheads, so total = work + comm
        assert float(rec["ttl_cst"]) == pytest.approx(
            float(rec["cm_cst"]) + float(rec["cp_cst"]), rel=1e-12
        )
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["memory_tables_heuristic"] == "set-factoring-c"
    assert meta["net_count"] == 8


def test_experiment_single_net(tmp_path, capsys):
    out = tmp_path / "one"
    code, _, _ = run(capsys, "experiment", "--count", "1", "--seed", "3",
                     "--nodes", "10..14", "--out", str(out))
    assert code == 0
    assert len(read_details(out / "details.csv")) == 3


def test_experiment_reruns_are_byte_identical(tmp_path, capsys):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        code, _, _ = run(capsys, "experiment", "--count", "5", "--seed", "11",
                         "--nodes", "10..40", "--out", str(out))
        assert code == 0
    for name in EXPERIMENT_FILES:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_experiment_records_partial_failures_and_continues(tmp_path, capsys):
    # an arcs average of 2.6 is infeasible for 4-node draws (at most
    # 6 arcs exist) but fine for larger ones, so some nets fail
    out = tmp_path / "partial"
    code, stdout, _ = run(capsys, "experiment", "--count", "12", "--seed", "2",
                          "--nodes", "4..30", "--arcs", "2.6..2.6",
                          "--out", str(out))
    assert code == 0
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["failures"] > 0
    assert meta["net_count"] + meta["failures"] == 12
    errors = (out / "errors.csv").read_text().strip().split("\n")
    assert len(errors) == 1 + meta["failures"]
    assert "infeasible" in errors[1]
    assert meta["net_count"] > 0  # the run kept going


def test_experiment_count_validation(capsys):
    with pytest.raises(SystemExit) as err:
        main(["experiment", "--count", "0", "--out", "x"])
    assert err.value.code == EXIT_USAGE
    capsys.readouterr()


def test_experiment_config_validation():
    from factorcube import ExperimentConfig

    with pytest.raises(ValueError):
        ExperimentConfig(count=0)
    with pytest.raises(ValueError):
        ExperimentConfig(heuristics=())
    with pytest.raises(ValueError):
        ExperimentConfig(heuristics=("alphabetical",))


def test_run_experiment_library_entry(tmp_path):
    from factorcube import ExperimentConfig, run_experiment

    config = ExperimentConfig(
        count=3, node_count_range=(10, 20), master_seed=5,
        heuristics=("set-factoring",),
    )
    meta = run_experiment(config, tmp_path / "lib")
    assert meta["net_count"] == 3
    assert (tmp_path / "lib" / "results_set_factoring.csv").exists()
    assert not (tmp_path / "lib" / "errors.csv").exists()
