import csv
import json

import pytest

from pluc.cli import EXIT_ERROR, EXIT_NEVER_TREAT, EXIT_OK, main

FAST = ["--iterations", "6", "--lambdas", "1,5", "--betas", "0,0.5"]


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(ln for ln in fh if not ln.startswith("#")))


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--scenario", "linear", "--n", "300", "--seed", "1", "--out", str(out)]) == 0
    return out


def test_simulate_layout(simulated):
    rows = _rows(simulated / "data.csv")
    assert len(rows) == 301
    assert rows[0] == [f"x{j}" for j in range(1, 11)] + ["a", "y", "xi"]
    assert len(_rows(simulated / "counterfactuals.csv")) == 301
    assert json.loads((simulated / "scenario.json").read_text())["n"] == 300


def test_simulate_is_byte_identical(simulated, tmp_path):
    main(["simulate", "--scenario", "linear", "--n", "300", "--seed", "1", "--out", str(tmp_path)])
    for name in ("data.csv", "counterfactuals.csv", "scenario.json"):
        assert (tmp_path / name).read_bytes() == (simulated / name).read_bytes()


def test_simulate_realistic_writes_scaled_data(tmp_path):
    assert main(["simulate", "--scenario", "realistic", "--n", "200", "--seed", "2", "--out",
                 str(tmp_path)]) == 0
    assert (tmp_path / "data_scaled.csv").exists() and (tmp_path / "preprocess.json").exists()


def test_fit_writes_outputs_and_is_reproducible(simulated, tmp_path):
    args = ["fit", "--data", str(simulated / "data.csv"), "--mode", "naive", "--seed", "3", *FAST]
    code = main(args + ["--out", str(tmp_path / "a")])
    assert code in (EXIT_OK, EXIT_NEVER_TREAT)
    assert main(args + ["--out", str(tmp_path / "b")]) == code
    for name in ("grid.json", "summary.csv", "assessments.csv", "policy.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_fit_never_treat_exit_code(simulated, tmp_path):
    code = main(["fit", "--data", str(simulated / "data.csv"), "--mode", "naive", "--seed", "3",
                 "--alpha", "0", "--lambdas", "0", "--betas", "0", "--iterations", "4",
                 "--out", str(tmp_path)])
    assert code == EXIT_NEVER_TREAT
    assert json.loads((tmp_path / "policy.json").read_text())["selection"] == "never_treat"


def test_oracle_mode_without_scenario_is_usage_error(simulated, tmp_path, capsys):
    code = main(["fit", "--data", str(simulated / "data.csv"), "--mode", "oracle", "--out", str(tmp_path)])
    assert code == EXIT_ERROR
    assert "--scenario" in capsys.readouterr().err


def test_bad_config_key(simulated, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grid": {"lambdaz": [1]}}))
    code = main(["fit", "--data", str(simulated / "data.csv"), "--config", str(cfg), "--out",
                 str(tmp_path / "o")])
    assert code == EXIT_ERROR


def test_unknown_subcommand_exits_one():
    assert main(["transmogrify"]) == EXIT_ERROR


def test_evaluate_never_treat_policy(tmp_path):
    pol = tmp_path / "p.json"
    pol.write_text(json.dumps({"policy": {"kind": "constant", "p": 0.0}}))
    out = tmp_path / "m.json"
    assert main(["evaluate", "--policy", str(pol), "--scenario", "small", "--mc-n", "1000",
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["constraint"] == -0.1


def test_evaluate_requires_exactly_one_source(tmp_path):
    pol = tmp_path / "p.json"
    pol.write_text(json.dumps({"kind": "constant", "value": 0.0}))
    assert main(["evaluate", "--policy", str(pol), "--out", str(tmp_path / "x")]) == EXIT_ERROR


def test_evaluate_malformed_policy(tmp_path):
    pol = tmp_path / "p.json"
    pol.write_text(json.dumps({"kind": "constant"}))
    assert main(["evaluate", "--policy", str(pol), "--scenario", "small", "--out",
                 str(tmp_path / "x")]) == EXIT_ERROR


def test_certify_command(tmp_path):
    out = tmp_path / "cert.csv"
    assert main(["certify", "--iterations", "10", "--out", str(out)]) == EXIT_OK
    assert out.read_text().startswith("# pluc-schema: fw_certificate/1")


def test_sweep_columns(tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--scenarios", "small", "--modes", "naive", "--n", "300", "--mc-n", "2000",
                 "--seed", "1", "--out", str(out), *FAST]) == 0
    rows = _rows(out)
    assert rows[0] == ["replicate", "mode", "scenario", "n", "lambda", "beta", "value_oracle",
                       "constraint_oracle", "s_upper", "v_lower", "selected"]
    assert len(rows) >= 2
