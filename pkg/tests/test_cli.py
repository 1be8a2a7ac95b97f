import csv
import json

import numpy as np
import pytest

from qperceptron import config as cfgmod
from qperceptron import models
from qperceptron.circuitry import ParameterTable, save_model
from qperceptron.cli import main, run_eval, run_train
from qperceptron.errors import ConfigError

XOR_DS = {"source": "table", "X": [[0, 0], [0, 1], [1, 0], [1, 1]], "Y": [[0], [1], [1], [0]]}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def xor_cfg(tmp_path, **over):
    cfg = {"model": {"kind": "shallow"}, "dataset": XOR_DS,
           "optimizer": {"iterations": 300}, "seeds": [0], "out": str(tmp_path / "run")}
    cfg.update(over)
    return cfg


# -- config -------------------------------------------------------------------------


def test_presets_resolve():
    for name in cfgmod.PRESETS:
        cfg = cfgmod.load(name)
        assert cfg["seeds"] and cfg["optimizer"]["iterations"] >= 1


def test_schema_error_names_every_field():
    with pytest.raises(ConfigError) as exc:
        cfgmod.resolve({"model": {"kind": "shallow"}, "dataset": {"source": "uci"},
                        "optimizer": {"iterations": 0}, "bogus": 1})
    msg = str(exc.value)
    assert "optimizer.iterations" in msg and "bogus" in msg


def test_zero_budget_is_schema_error(tmp_path, capsys):
    code = main(["train", "--config", write_cfg(tmp_path, xor_cfg(tmp_path, optimizer={"iterations": 0}))])
    assert code == 2 and "iterations" in capsys.readouterr().err


def test_bad_json_is_config_error(tmp_path):
    (tmp_path / "bad.json").write_text("{")
    assert main(["train", "--config", str(tmp_path / "bad.json")]) == 2


def test_table_source_needs_arrays():
    with pytest.raises(ConfigError):
        cfgmod.resolve({"model": {"kind": "shallow"}, "dataset": {"source": "table"}})


def test_missing_config_file(tmp_path):
    assert main(["train", "--config", str(tmp_path / "none.json")]) == 1


def test_int_seeds_expand():
    cfg = cfgmod.resolve({"model": {"kind": "shallow"}, "dataset": XOR_DS, "seeds": 3})
    assert cfg["seeds"] == [0, 1, 2]


# -- train / eval -------------------------------------------------------------------


def test_train_writes_artifacts(tmp_path):
    cfg_path = write_cfg(tmp_path, xor_cfg(tmp_path))
    assert main(["train", "--config", cfg_path]) == 0
    run = tmp_path / "run"
    for name in ("resolved_config.json", "model_seed0.json", "trace_seed0.csv", "metrics.json"):
        assert (run / name).exists()
    metrics = json.loads((run / "metrics.json").read_text())
    assert "mean" in metrics["final_loss"]


def test_traces_byte_identical(tmp_path):
    a = xor_cfg(tmp_path, out=str(tmp_path / "a"))
    b = xor_cfg(tmp_path, out=str(tmp_path / "b"))
    main(["train", "--config", write_cfg(tmp_path, a, "a.json")])
    main(["train", "--config", write_cfg(tmp_path, b, "b.json")])
    for name in ("trace_seed0.csv", "model_seed0.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_eval_exact_xor_model(tmp_path, capsys):
    topo = models.shallow(2, [], 1)
    params = ParameterTable({("x0", "y0"): 1.0, ("x1", "y0"): 1.0}, {"y0": 0.0})
    path = tmp_path / "xor.json"
    save_model(path, topo, params, {"dataset": XOR_DS, "seed": 0, "backend": "exact"})
    assert main(["eval", "--model", str(path)]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["accuracy"] == 1.0 and res["confusion"] == [[2, 0], [0, 2]]


def test_eval_rejects_corrupt_model(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text("{\"format\": 1")
    assert main(["eval", "--model", str(bad)]) == 1


def test_eval_requires_model(tmp_path):
    assert main(["eval"]) == 2


@pytest.mark.slow
def test_iris_train_not_far_below_test(tmp_path):
    cfg = cfgmod.load("iris")
    cfg["seeds"] = [0]
    metrics = run_train(cfg, str(tmp_path))
    assert metrics["train_accuracy"]["mean"] >= metrics["test_accuracy"]["mean"] - 0.1
    res = run_eval(tmp_path / "model_seed0.json")
    assert res["accuracy"] == pytest.approx(metrics["test_accuracy"]["mean"])
    assert np.sum(res["confusion"]) == res["n"]


def test_backend_override(tmp_path):
    cfg = xor_cfg(tmp_path, optimizer={"iterations": 5})
    assert main(["train", "--config", write_cfg(tmp_path, cfg), "--backend", "statevector",
                 "--seed", "4"]) == 0
    resolved = json.loads((tmp_path / "run" / "resolved_config.json").read_text())
    assert resolved["backend"] == "statevector" and resolved["seeds"] == [4]


# -- hopfield / grover / encode -----------------------------------------------------


def test_hopfield_outputs(tmp_path):
    cfg = {"model": {"kind": "hopfield"}, "dataset": {"source": "stripes"},
           "optimizer": {"iterations": 50}, "hopfield": {"runs": 2}, "out": str(tmp_path)}
    assert main(["hopfield", "--config", write_cfg(tmp_path, cfg)]) == 0
    with open(tmp_path / "trajectories_seed0.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert set(rows[0]) == {"probe_index", "probe", "run", "step", "state", "converged", "target"}
    assert {r["probe_index"] for r in rows} == {str(i) for i in range(20)}
    summary = json.loads((tmp_path / "hopfield_summary.json").read_text())["seeds"][0]
    assert len(summary["fixpoint_min_marginal"]) == 2 and 0 <= summary["recall_rate"] <= 1


def test_grover_outputs(tmp_path):
    cfg = {"model": {"kind": "shallow"}, "dataset": {"source": "one_dot"},
           "optimizer": {"iterations": 20}, "grover": {"shots": 100}, "out": str(tmp_path)}
    assert main(["grover", "--config", write_cfg(tmp_path, cfg)]) == 0
    lines = (tmp_path / "grover_seed0.csv").read_text().splitlines()
    assert len(lines) == 17
    summary = json.loads((tmp_path / "grover_summary.json").read_text())["seeds"][0]
    assert summary["positive_patterns"] == 4 and summary["uniform_share"] == 0.25


def test_encode_outputs(tmp_path):
    cfg = {"model": {"kind": "shallow"}, "dataset": {"source": "uci", "name": "iris"},
           "out": str(tmp_path)}
    assert main(["encode", "--config", write_cfg(tmp_path, cfg)]) == 0
    doc = json.loads((tmp_path / "encoded_seed0.json").read_text())
    assert [s["split"] for s in doc["splits"]] == ["train", "test"]
    assert all(r.count("1") == 4 for r in doc["splits"][0]["X"])
    assert len(doc["encoder"]["centers"]) == 4
