import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from cocyclelab.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

# small versions of every experiment, for smoke tests
SMALL = {
    "lyapunov": {"cocycle": {"shipped": "diagonal"}, "params": {"n": 2000, "chains": 4}},
    "ldt": {"cocycle": {"shipped": "typical_sl2"},
            "params": {"eps": [0.3], "n": [10, 20, 30], "N": 2000, "truth_chains": 4}},
    "clt": {"cocycle": {"shipped": "scalar"}, "params": {"n": 200, "N": 300}},
    "holder": {"cocycle": {"shipped": "scalar"},
               "params": {"scales": [0.01, 0.1], "n": 1000, "chains": 4}},
    "holonomy": {"cocycle": {"shipped": "depth_two_bunched"}, "params": {"pairs": 20}},
    "reduce": {"cocycle": {"shipped": "future_dependent"}, "params": {"n": 2000, "chains": 4}},
    "typicality": {"cocycle": {"shipped": "typical_sl2"}},
    "kappa": {"cocycle": {"shipped": "typical_sl2"}, "params": {"n": [1, 2], "grid": 90,
                                                                "submultiplicative": [1]}},
    "operator": {"base": {"chain": [[0.9, 0.1], [0.2, 0.8]]}, "params": {"m_prime": 5}},
    "ldp": {"cocycle": {"shipped": "scalar"}, "params": {"t": {"min": -1, "max": 1, "count": 5}}},
    "schrodinger scan": {"schrodinger": {"potential": [1.0, 2.0]},
                         "params": {"energies": [0.0, 0.5], "lambdas": [0.5], "n": 2000,
                                    "chains": 4}},
    "schrodinger trace": {"schrodinger": {"potential": [1.0, 2.0], "energy": 0.7}},
    "schrodinger periodic": {"schrodinger": {"potential": [1.0, 2.0], "coupling": 1.0,
                                             "energy": 0.5}, "params": {"max_period": 3}},
}


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def strip_time(report):
    report = dict(report)
    report.pop("timestamp")
    return report


@pytest.mark.parametrize("command", list(SMALL))
def test_every_experiment_runs(tmp_path, command):
    cfg = write(tmp_path, "c.yaml", {"seed": 5, **SMALL[command]})
    out, table = tmp_path / "r.json", tmp_path / "t.csv"
    code = main(command.split() + [cfg, "--out", str(out), "--csv", str(table)])
    assert code == EXIT_OK
    report = json.loads(out.read_text())
    assert list(report) == ["artifact", "version", "experiment", "seed", "config", "result", "timestamp"]
    assert report["seed"] == 5
    assert table.read_text().count("\n") >= 2


def test_report_echo_and_stdout(tmp_path, capsys):
    cfg = write(tmp_path, "c.yaml", {"seed": 9, **SMALL["lyapunov"]})
    assert main(["lyapunov", "--config", cfg]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["config"]["params"]["n"] == 2000
    assert report["config"]["cocycle"]["matrices"][0] == [[3.0, 0.0], [0.0, 1 / 3]]


def test_malformed_transition_row(tmp_path, capsys):
    cfg = write(tmp_path, "c.yaml", {"base": {"chain": [[0.5, 0.5], [0.6, 0.3]]},
                                     "cocycle": {"shipped": "diagonal"}})
    assert main(["lyapunov", cfg]) == EXIT_VALIDATION
    err = capsys.readouterr().err
    assert "row 1" in err and "0.9" in err


def test_malformed_yaml(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("cocycle: {shipped: [unclosed\n")
    assert main(["lyapunov", str(path)]) == EXIT_VALIDATION
    assert "malformed config" in capsys.readouterr().err


@pytest.mark.parametrize("data,fragment", [
    ({"cocycle": {"shipped": "diagonal"}, "params": {"bogus": 1}}, "unknown lyapunov parameters"),
    ({"cocycle": {"shipped": "nope"}}, "unknown shipped example"),
    ({"cocycle": {"shipped": "diagonal"}, "colour": 1}, "unknown config keys"),
    ({"cocycle": {"matrices": [[[1, 0], [0, 0]], [[1, 0], [0, 1]]]}, "base": {"bernoulli": [0.5, 0.5]}},
     "singular"),
    ({"cocycle": {"shipped": "diagonal"}, "params": {"n": 10}}, "at least 1000"),
])
def test_validation_errors(tmp_path, capsys, data, fragment):
    cfg = write(tmp_path, "c.yaml", data)
    assert main(["lyapunov", cfg]) == EXIT_VALIDATION
    assert fragment in capsys.readouterr().err


def test_budget_error_exit_code(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"cocycle": {"shipped": "typical_sl2"},
                                     "params": {"n": [30], "submultiplicative": [1]}})
    assert main(["kappa", cfg]) == EXIT_NUMERICAL


def test_usage_errors(tmp_path, capsys):
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    assert main(["schrodinger"]) == EXIT_USAGE
    cfg = write(tmp_path, "c.yaml", SMALL["lyapunov"])
    assert main(["lyapunov", cfg, "--config", cfg]) == EXIT_USAGE
    assert main(["lyapunov", cfg, "--threads", "two"]) == EXIT_USAGE


def test_rerun_is_identical_modulo_timestamp(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"seed": 21, **SMALL["ldt"]})
    out = tmp_path / "r.json"
    texts = []
    for _ in range(2):
        assert main(["ldt", cfg, "--out", str(out)]) == EXIT_OK
        report = json.loads(out.read_text())
        texts.append(json.dumps(strip_time(report), indent=2))
    assert texts[0] == texts[1]


def test_thread_count_does_not_change_results(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"seed": 22, **SMALL["reduce"]})
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["reduce", cfg, "--threads", "1", "--out", str(a)]) == EXIT_OK
    assert main(["reduce", cfg, "--threads", "2", "--out", str(b)]) == EXIT_OK
    assert json.loads(a.read_text())["result"] == json.loads(b.read_text())["result"]


def test_generated_seed_is_recorded_and_reusable(tmp_path):
    cfg = write(tmp_path, "c.yaml", SMALL["lyapunov"])
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["lyapunov", cfg, "--out", str(a)]) == EXIT_OK
    ra = json.loads(a.read_text())
    assert ra["config"]["seed_generated"] is True
    assert main(["lyapunov", cfg, "--seed", str(ra["seed"]), "--out", str(b)]) == EXIT_OK
    assert ra["result"] == json.loads(b.read_text())["result"]


def test_shipped_lyapunov_csv(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["lyapunov", str(CONFIGS / "lyapunov_diagonal.yaml"), "--csv", str(out),
                 "--out", str(tmp_path / "r.json")]) == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    L1 = float(rows[0]["exponent"])
    assert L1 == pytest.approx((math.log(3) + math.log(2)) / 2, abs=3 * float(rows[0]["stderr"]))
    assert abs(L1 - 0.8959) < 1e-3


def test_operator_marginal(tmp_path):
    out = tmp_path / "r.json"
    assert main(["operator", str(CONFIGS / "operator_chain.yaml"), "--out", str(out)]) == EXIT_OK
    res = json.loads(out.read_text())["result"]
    assert abs(res["symbol_marginal"][0] - 2 / 3) < 1e-10
    assert abs(res["mixing_rate"] - 0.7) < 1e-6


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, "c.yaml", {"seed": 1, **SMALL["schrodinger trace"]})
    proc = subprocess.run([sys.executable, "-m", "cocyclelab", "schrodinger", "trace", cfg],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["experiment"] == "schrodinger-trace"
