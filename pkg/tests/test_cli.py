import json
import os
from pathlib import Path

import numpy as np
import pytest

from surrotest.cli import main
from surrotest.dataset import save_series
from surrotest.dynsys import flow_series


def run_cli(*argv):
    return main([str(a) for a in argv])


def snapshot(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


TINY = ["--L", "16", "--N", "6", "--epochs", "3", "--hidden-size", "3",
        "--max-iter", "20"]


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def test_generate_shape_contract(tmp_path):
    out = tmp_path / "run"
    assert run_cli("generate", "--system", "logistic", "--L", "32",
                   "--N", "4", "--seed", "1", "--out", out) == 0
    rows = (out / "realizations.csv").read_text().strip().splitlines()
    assert len(rows) == 4
    assert all(len(r.split(",")) == 32 for r in rows)
    meta = json.loads((out / "realizations.meta.json").read_text())
    assert meta["L"] == 32 and meta["N"] == 4


def test_generate_unknown_system_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit):
        run_cli("generate", "--system", "brusselator", "--out", tmp_path)


def test_generate_rerun_is_byte_identical(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        assert run_cli("generate", "--system", "henon", "--L", "16",
                       "--N", "5", "--seed", "7", "--out", out) == 0
    assert (out_a / "realizations.csv").read_bytes() == \
        (out_b / "realizations.csv").read_bytes()


def test_generate_validation_error_before_work(tmp_path, capsys):
    out = tmp_path / "run"
    assert run_cli("generate", "--system", "logistic", "--L", "0",
                   "--N", "4", "--out", out) == 2
    assert "error[ParameterError]" in capsys.readouterr().err
    assert not out.exists()


def test_generate_writes_only_inside_outdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    out = tmp_path / "only-here"
    assert run_cli("generate", "--system", "logistic", "--L", "16",
                   "--N", "3", "--out", out) == 0
    outside = [p for p in tmp_path.rglob("*")
               if p.is_file() and out not in p.parents]
    assert outside == []


# ---------------------------------------------------------------------------
# stage chaining
# ---------------------------------------------------------------------------

def test_surrogate_and_dataset_stages(tmp_path):
    out = tmp_path / "run"
    base = ["--system", "logistic", "--seed", "3", "--out", out] + TINY
    assert run_cli("generate", *base) == 0
    assert run_cli("surrogate", *base) == 0
    report = json.loads((out / "surrogate_report.json").read_text())
    assert len(report["pairs"]) == 6
    assert all("discrepancy" in p for p in report["pairs"])

    surr_rows = [np.array([float(v) for v in line.split(",")])
                 for line in (out / "surrogates.csv").read_text().strip().splitlines()]
    orig_rows = [np.array([float(v) for v in line.split(",")])
                 for line in (out / "realizations.csv").read_text().strip().splitlines()]
    for o, s in zip(orig_rows, surr_rows):
        assert np.array_equal(np.sort(o), np.sort(s))

    assert run_cli("dataset", *base) == 0
    lines = (out / "dataset.csv").read_text().strip().splitlines()
    assert lines[0].startswith("pair_id,label,split,s_0")
    assert len(lines) == 1 + 12


def test_train_and_report_stages(tmp_path, capsys):
    out = tmp_path / "run"
    base = ["--system", "logistic", "--seed", "4", "--out", out] + TINY
    assert run_cli("generate", *base) == 0
    assert run_cli("dataset", *base) == 0
    assert run_cli("train", *base) == 0
    assert (out / "model.json").exists()
    assert (out / "train_report.csv").exists()
    assert run_cli("report", *base) == 0
    verdict = json.loads((out / "verdict.json").read_text())
    for key in ("representative_epoch", "representative_accuracy",
                "p_value", "reject_random_guess", "test_items"):
        assert key in verdict


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def test_pipeline_end_to_end_and_deterministic(tmp_path):
    out = tmp_path / "run"
    base = ["pipeline", "--system", "logistic", "--seed", "5",
            "--out", out] + TINY
    assert run_cli(*base) == 0
    expected = {"config.frozen.json", "realizations.csv",
                "realizations.meta.json", "surrogates.csv",
                "surrogates.meta.json", "surrogate_report.json",
                "dataset.csv", "dataset.meta.json", "model.json",
                "model_representative.json", "train_report.csv",
                "train_report.meta.json", "verdict.json"}
    assert {p.name for p in out.iterdir()} == expected
    first = snapshot(out)
    assert run_cli(*base) == 0
    assert snapshot(out) == first


def test_pipeline_reruns_from_frozen_config(tmp_path):
    out_a = tmp_path / "a"
    assert run_cli("pipeline", "--system", "henon", "--seed", "6",
                   "--out", out_a, *TINY) == 0
    first = snapshot(out_a)
    out_b = tmp_path / "b"
    assert run_cli("pipeline", "--config", out_a / "config.frozen.json",
                   "--out", out_b) == 0
    second = snapshot(out_b)
    for name in first:
        if name == "config.frozen.json":
            continue  # records its own output directory
        assert first[name] == second[name], name


def test_pipeline_on_user_record(tmp_path):
    # Synthetic stand-in for an experimental record: single-column file,
    # filtered and windowed before the usual pipeline.
    record = flow_series("lorenz", 600, seed=11, rel_tol=1e-6, abs_tol=1e-9)
    rec_path = tmp_path / "record.txt"
    save_series(rec_path, record)
    out = tmp_path / "run"
    assert run_cli("pipeline", "--system", "file", "--input", rec_path,
                   "--mode", "windowed", "--filter-cutoff-hz", "2.0",
                   "--filter-fs-hz", "20.0", "--seed", "8",
                   "--out", out, *TINY) == 0
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["test_items"] > 0
    frozen = json.loads((out / "config.frozen.json").read_text())
    assert frozen["system"] == "file"
    assert frozen["filter_cutoff_hz"] == 2.0


def test_dataset_filter_precedes_surrogates(tmp_path):
    # Filtering a prebuilt realization CSV must happen before pairing, so
    # each surrogate still shares its original's value multiset.
    out = tmp_path / "run"
    base = ["--system", "logistic", "--seed", "12", "--out", out,
            "--filter-cutoff-hz", "2.0", "--filter-fs-hz", "20.0"] + TINY
    assert run_cli("generate", *base) == 0
    assert run_cli("dataset", *base) == 0
    lines = (out / "dataset.csv").read_text().strip().splitlines()[1:]
    rows = {}
    for line in lines:
        parts = line.split(",")
        rows.setdefault(parts[0], {})[parts[1]] = \
            np.array([float(v) for v in parts[3:]])
    for pid, pair in rows.items():
        assert np.allclose(np.sort(pair["1"]), np.sort(pair["0"]),
                           atol=1e-12), pid


def test_pipeline_stage_failure_names_stage(tmp_path, capsys):
    missing = tmp_path / "does-not-exist.txt"
    out = tmp_path / "run"
    code = run_cli("pipeline", "--system", "file", "--input", missing,
                   "--out", out, *TINY)
    assert code == 1
    err = capsys.readouterr().err
    assert "stage 'generate'" in err


# ---------------------------------------------------------------------------
# config precedence
# ---------------------------------------------------------------------------

def test_flags_override_config_file(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"system": "logistic", "L": 16, "N": 3,
                                    "epochs": 2, "hidden_size": 2,
                                    "master_seed": 9}))
    out = tmp_path / "run"
    assert run_cli("generate", "--config", cfg_path, "--N", "5",
                   "--out", out) == 0
    meta = json.loads((out / "realizations.meta.json").read_text())
    assert meta["N"] == 5          # flag wins
    assert meta["L"] == 16         # file value survives
    frozen = json.loads((out / "config.frozen.json").read_text())
    assert frozen["N"] == 5 and frozen["master_seed"] == 9


def test_unknown_config_key_rejected(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"sytem": "logistic"}))
    assert run_cli("generate", "--config", cfg_path,
                   "--out", tmp_path / "x") == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_output_root_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("SURROTEST_OUT", str(tmp_path / "root"))
    monkeypatch.chdir(tmp_path)
    assert run_cli("generate", "--system", "logistic", "--L", "16",
                   "--N", "3", "--seed", "2") == 0
    runs = list((tmp_path / "root").iterdir())
    assert len(runs) == 1
    assert (runs[0] / "realizations.csv").exists()
