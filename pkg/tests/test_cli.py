"""Command-line interface: subcommands, option precedence, exit codes."""

import json
import os

import numpy as np
import pytest

from graphal.cli import main
from graphal.graph import load_bundle
from graphal.harness import ExperimentConfig, config_hash
from graphal.synth import write_synthetic_bundle


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    path = str(tmp_path_factory.mktemp("clidata") / "toy")
    write_synthetic_bundle(path, n=120, k=3, d=24, seed=0, words_per_node=6)
    return path


SMALL = ["--l-init", "1", "--l-max", "2", "--epochs", "12",
         "--epochs-per-query", "4", "--test-size", "40", "--val-size", "20"]


def run_json(capsys, argv):
    rc = main(argv)
    assert rc == 0
    return json.loads(capsys.readouterr().out)


def test_make_synth_writes_bundle(tmp_path, capsys):
    out = str(tmp_path / "ds")
    assert main(["make-synth", "--out", out, "--n", "60", "--k", "3",
                 "--d", "12", "--words-per-node", "4"]) == 0
    g, feats, labels, k = load_bundle(out)
    assert g.n == 60 and k == 3 and feats.d == 12


def test_make_synth_forwards_every_generator_flag(tmp_path, capsys):
    # every exposed knob must reach the generator, not just the common ones
    out = str(tmp_path / "ds")
    assert main(["make-synth", "--out", out, "--n", "90", "--k", "3",
                 "--d", "30", "--seed", "5", "--mean-degree", "3.5",
                 "--homophily", "0.7", "--tail", "2.5", "--words-per-node", "5",
                 "--topic-frac", "0.6", "--class-skew", "0.9",
                 "--community-size", "20", "--subtopic-frac", "0.4"]) == 0
    with open(os.path.join(out, "meta.json")) as fh:
        gen = json.load(fh)["generator"]
    assert gen["community_size"] == 20
    assert gen["subtopic_frac"] == 0.4
    assert gen["class_skew"] == 0.9 and gen["seed"] == 5


def test_run_emits_result(bundle, capsys):
    rec = run_json(capsys, ["run", "--dataset", bundle, "--strategy", "degree"]
                   + SMALL)
    assert len(rec["trace"]) == 3
    assert 0.0 <= rec["micro_f1"] <= 1.0
    assert rec["strategy"] == "degree"


def test_run_writes_out_file(bundle, tmp_path):
    out = str(tmp_path / "res.json")
    assert main(["run", "--dataset", bundle, "--strategy", "random",
                 "--out", out] + SMALL) == 0
    with open(out) as f:
        assert "micro_f1" in json.load(f)


def test_flag_beats_env_beats_file(bundle, tmp_path, capsys, monkeypatch):
    cfgfile = str(tmp_path / "cfg.json")
    with open(cfgfile, "w") as f:
        json.dump({"seed": 9}, f)

    def hash_for(seed):
        return config_hash(ExperimentConfig(
            dataset=bundle, strategy="random", l_init=1, l_max=2,
            epochs_total=12, epochs_per_query=4, test_size=40, val_size=20,
            seed=seed))

    base = ["run", "--dataset", bundle, "--strategy", "random",
            "--config", cfgfile] + SMALL
    monkeypatch.setenv("GRAPHAL_SEED", "7")
    assert run_json(capsys, base + ["--seed", "3"])["config_hash"] == hash_for(3)
    assert run_json(capsys, base)["config_hash"] == hash_for(7)
    monkeypatch.delenv("GRAPHAL_SEED")
    assert run_json(capsys, base)["config_hash"] == hash_for(9)
    cfgfile2 = str(tmp_path / "empty.json")
    with open(cfgfile2, "w") as f:
        json.dump({}, f)
    base2 = ["run", "--dataset", bundle, "--strategy", "random",
             "--config", cfgfile2] + SMALL
    assert run_json(capsys, base2)["config_hash"] == hash_for(0)  # default


def test_dataset_via_environment(bundle, capsys, monkeypatch):
    monkeypatch.setenv("GRAPHAL_DATASET", bundle)
    rec = run_json(capsys, ["run", "--strategy", "random"] + SMALL)
    assert len(rec["trace"]) == 3


def test_suite_writes_outputs(bundle, tmp_path, capsys):
    out = str(tmp_path / "suite")
    summary = run_json(capsys, ["suite", "--dataset", bundle,
                                "--strategies", "random,degree",
                                "--val-samples", "1", "--repeats", "2",
                                "--out", out] + SMALL)
    assert {s["strategy"] for s in summary} == {"random", "degree"}
    assert os.path.isfile(os.path.join(out, "results.jsonl"))
    assert os.path.isfile(os.path.join(out, "summary.tsv"))


def test_ablation_lists_five(bundle, capsys):
    summary = run_json(capsys, ["ablation", "--dataset", bundle,
                                "--val-samples", "1", "--repeats", "1"] + SMALL)
    assert len(summary) == 5


def test_sweep_budget(bundle, capsys):
    table = run_json(capsys, ["sweep-budget", "--dataset", bundle,
                              "--l-values", "2,3", "--val-samples", "1",
                              "--repeats", "1"] + SMALL)
    assert [t["l_max"] for t in table] == [2, 3]


def test_pool_inspect(bundle, capsys):
    rep = run_json(capsys, ["pool-inspect", "--dataset", bundle,
                            "--l-max", "2", "--limit", "5"])
    assert rep["capacity"] == 12 and len(rep["top"]) == 5
    degs = [row["degree"] for row in rep["top"]]
    assert rep["top"][0]["pool_score"] >= rep["top"][-1]["pool_score"]
    assert all(isinstance(x, int) for x in degs)


def test_lp_debug_reports_uncertainty(bundle, capsys):
    rep = run_json(capsys, ["lp-debug", "--dataset", bundle] + SMALL)
    assert rep["converged"] and rep["iterations"] > 0
    assert rep["uncertainty"] > 0.0
    assert len(rep["labeled"]) == 3


def test_lp_debug_single_hypothesis(bundle, capsys):
    rep = run_json(capsys, ["lp-debug", "--dataset", bundle] + SMALL)
    free = rep["labeled"]
    node = next(i for i in range(120) if i not in free)
    rep2 = run_json(capsys, ["lp-debug", "--dataset", bundle, "--node",
                             str(node), "--class-id", "1"] + SMALL)
    assert np.isfinite(rep2["uncertainty_drop"])


def test_usage_errors_exit_2(bundle, capsys):
    with pytest.raises(SystemExit) as e:
        main(["run", "--strategy", "random"] + SMALL)  # no dataset anywhere
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["suite", "--dataset", bundle, "--strategies", "oracle"] + SMALL)
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["lp-debug", "--dataset", bundle, "--node", "3"] + SMALL)
    assert e.value.code == 2
    with pytest.raises(SystemExit):
        main(["no-such-command"])


def test_runtime_errors_exit_1(tmp_path, capsys):
    rc = main(["run", "--dataset", str(tmp_path / "missing")] + SMALL)
    assert rc == 1
    assert "error" in capsys.readouterr().err
