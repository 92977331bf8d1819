import dataclasses
import json

import numpy as np
import pytest
from click.testing import CliRunner
from scipy.io import wavfile

from speaker_fusion import ExperimentManifest, FeatureKind, load_manifest, write_manifest
from speaker_fusion._cli._cli_app import _parse_feature_list, _parse_system_list, main

SMALL_CONFIG = {"em": {"n_components": 8, "max_iterations": 20}}


def _synth(runner, out):
    result = runner.invoke(
        main,
        [
            "synth-corpus",
            "--speakers", "3",
            "--utterances", "5",
            "--frames", "40",
            "--n-train", "4",
            "--n-test", "1",
            "--out", str(out),
        ],
    )  # fmt: skip
    assert result.exit_code == 0, result.output
    return out / "manifest.jsonl"


def _write_config(path, document):
    path.write_text(json.dumps(document))
    return str(path)


def test_parse_feature_list():
    """Test parsing comma-separated feature sets"""
    assert _parse_feature_list("F1,F2,F5") == ("F1", "F2", "F5")
    # Case and spaces do not matter, order is canonical and duplicates collapse
    assert _parse_feature_list(" f5, F1 ,f1") == ("F1", "F5")

    with pytest.raises(ValueError) as exc_info:
        _parse_feature_list("F1,F6")
    assert "Unknown feature set: F6" in str(exc_info.value)
    with pytest.raises(ValueError):
        _parse_feature_list(" , ")


def test_parse_system_list():
    """Test parsing comma-separated system numbers"""
    assert _parse_system_list("3,1") == (1, 3)
    assert _parse_system_list("1,2,3,2") == (1, 2, 3)

    with pytest.raises(ValueError) as exc_info:
        _parse_system_list("1,4")
    assert "Unknown system: 4" in str(exc_info.value)
    with pytest.raises(ValueError) as exc_info:
        _parse_system_list("one")
    assert "Invalid system list" in str(exc_info.value)
    with pytest.raises(ValueError):
        _parse_system_list("")


def test_synth_corpus(tmp_path):
    """Test that the generated manifest loads and is split"""
    manifest = load_manifest(_synth(CliRunner(), tmp_path / "corpus"))
    assert len(manifest) == 15
    assert len(manifest.test_entries) == 3


def test_run_grid_writes_results(tmp_path):
    """Test a CSV grid run with a configuration file"""
    runner = CliRunner()
    manifest = _synth(runner, tmp_path / "corpus")
    config = _write_config(tmp_path / "config.json", SMALL_CONFIG)
    out = tmp_path / "out"
    result = runner.invoke(
        main,
        [
            "run-grid",
            "--manifest", str(manifest),
            "--features", "F1,F5",
            "--systems", "2,3",
            "--format", "csv",
            "--config", config,
            "--out", str(out),
        ],
    )  # fmt: skip
    assert result.exit_code == 0, result.output
    results = (out / "results.csv").read_text()
    assert results.startswith("feature,system,correct,total,ir_percent,status,error\n")
    assert results in result.output
    assert len(results.splitlines()) == 1 + 2 * 2
    trials = (out / "trials.jsonl").read_text().splitlines()
    assert len(trials) == 2 * 3


def test_run_grid_rejects_unknown_feature_set(tmp_path):
    """Test that an unknown feature set is a usage error"""
    runner = CliRunner()
    manifest = _synth(runner, tmp_path / "corpus")
    result = runner.invoke(main, ["run-grid", "--manifest", str(manifest), "--features", "F9"])
    assert result.exit_code == 2
    assert "Unknown feature set: F9" in result.output


def test_staged_flow(tmp_path):
    """Test train-ubm, adapt, train and evaluate run one after the other"""
    runner = CliRunner()
    manifest = str(_synth(runner, tmp_path / "corpus"))
    common = ["--manifest", manifest, "--config", _write_config(tmp_path / "c.json", SMALL_CONFIG)]
    out = ["--out", str(tmp_path / "out")]

    steps = [
        ["train-ubm", "--kind", "MFCC12"],
        ["adapt", "--kind", "MFCC12"],
        ["train", "--system", "svm", "--feature", "f1"],
        ["train", "--system", "nb", "--feature", "F1"],
        ["evaluate", "--feature", "F1", "--system", "3"],
    ]
    for step in steps:
        result = runner.invoke(main, step + common + out)
        assert result.exit_code == 0, result.output

    assert "Feature 1 System 3: IR" in result.output
    assert (tmp_path / "out" / "models" / "ubm-MFCC12.json").is_file()
    assert (tmp_path / "out" / "supervectors" / "MFCC12.sv").is_file()
    trials = (tmp_path / "out" / "trials-F1-system3.jsonl").read_text().splitlines()
    assert len(trials) == 3
    assert json.loads(trials[0])["feature"] == "F1"


def test_extract_writes_archives(tmp_path):
    """Test that extract computes four streams per utterance with audio"""
    rng = np.random.default_rng(0)
    lines = []
    for s in range(2):
        for u in range(2):
            name = f"s{s}_u{u}.wav"
            samples = (rng.normal(0.0, 3000.0, size=1600)).astype(np.int16)
            wavfile.write(str(tmp_path / name), 16000, samples)
            split = "train" if u == 0 else "test"
            record = {"speaker_id": f"s{s}", "utterance_id": f"s{s}_u{u}", "path": name}
            lines.append(json.dumps(dict(record, split=split)))
    (tmp_path / "manifest.jsonl").write_text("\n".join(lines) + "\n")

    out = tmp_path / "out"
    result = CliRunner().invoke(
        main, ["extract", "--manifest", str(tmp_path / "manifest.jsonl"), "--out", str(out)]
    )
    assert result.exit_code == 0, result.output

    derived = load_manifest(out / "features" / "manifest.jsonl")
    assert len(derived) == 4
    for entry in derived.entries:
        assert set(entry.features) == set(FeatureKind)
        assert entry.path is not None
    assert (out / "features" / "MFCC12_DD" / "s0_u0.feat").is_file()


def test_exit_code_of_invalid_configuration(tmp_path):
    """Test that configuration errors exit with 2"""
    runner = CliRunner()
    manifest = str(_synth(runner, tmp_path / "corpus"))
    config = _write_config(tmp_path / "bad.json", {"gmm": {}})
    result = runner.invoke(main, ["run-grid", "--manifest", manifest, "--config", config])
    assert result.exit_code == 2
    assert "Unknown configuration section: gmm" in result.output

    (tmp_path / "broken.jsonl").write_text("{not json\n")
    result = runner.invoke(main, ["train-ubm", "--manifest", str(tmp_path / "broken.jsonl"),
                                  "--kind", "MFCC12"])  # fmt: skip
    assert result.exit_code == 2


def test_exit_code_of_training_failure(tmp_path):
    """Test that a UBM larger than the training data exits with 3"""
    runner = CliRunner()
    manifest = str(_synth(runner, tmp_path / "corpus"))
    config = _write_config(tmp_path / "big.json", {"em": {"n_components": 500}})
    result = runner.invoke(
        main,
        ["train-ubm", "--manifest", manifest, "--kind", "MFCC12", "--config", config,
         "--out", str(tmp_path / "out")],
    )  # fmt: skip
    assert result.exit_code == 3
    assert "M=500" in result.output


def test_exit_code_of_missing_model(tmp_path):
    """Test that evaluating without a trained back-end exits with 4"""
    runner = CliRunner()
    manifest = str(_synth(runner, tmp_path / "corpus"))
    config = _write_config(tmp_path / "c.json", SMALL_CONFIG)
    result = runner.invoke(
        main,
        ["evaluate", "--manifest", manifest, "--feature", "F2", "--system", "1",
         "--config", config, "--out", str(tmp_path / "out")],
    )  # fmt: skip
    assert result.exit_code == 4
    assert "run train first" in result.output


def test_exit_code_of_stale_artifacts(tmp_path):
    """Test that artifacts built under another configuration are refused with 4"""
    runner = CliRunner()
    manifest = str(_synth(runner, tmp_path / "corpus"))
    small = _write_config(tmp_path / "c.json", SMALL_CONFIG)
    out = ["--out", str(tmp_path / "out")]
    for step in (["train-ubm", "--kind", "MFCC12"], ["adapt", "--kind", "MFCC12"]):
        result = runner.invoke(main, step + ["--manifest", manifest, "--config", small] + out)
        assert result.exit_code == 0, result.output

    other_em = _write_config(
        tmp_path / "em.json", {"em": {"n_components": 4, "max_iterations": 20}}
    )
    result = runner.invoke(
        main, ["adapt", "--kind", "MFCC12", "--manifest", manifest, "--config", other_em] + out
    )
    assert result.exit_code == 4
    assert "config hash" in result.output

    result = runner.invoke(
        main, ["train", "--system", "svm", "--feature", "F1", "--manifest", manifest,
               "--config", small] + out,
    )  # fmt: skip
    assert result.exit_code == 0, result.output
    other_svm = _write_config(tmp_path / "svm.json", dict(SMALL_CONFIG, svm={"C": 4.0}))
    result = runner.invoke(
        main, ["evaluate", "--feature", "F1", "--system", "1", "--manifest", manifest,
               "--config", other_svm] + out,
    )  # fmt: skip
    assert result.exit_code == 4
    assert "classifier" in result.output


def test_exit_code_of_leakage(tmp_path):
    """Test that a training entry reading test audio features exits with 3"""
    runner = CliRunner()
    path = _synth(runner, tmp_path / "corpus")
    manifest = load_manifest(path)
    entries = list(manifest.entries)
    index = next(i for i, e in enumerate(entries) if e.split == "train")
    entries[index] = dataclasses.replace(
        entries[index], features=dict(manifest.test_entries[0].features)
    )
    write_manifest(path, ExperimentManifest(tuple(entries)))

    config = _write_config(tmp_path / "c.json", SMALL_CONFIG)
    result = runner.invoke(
        main, ["run-grid", "--manifest", str(path), "--features", "F1", "--systems", "1",
               "--config", config, "--out", str(tmp_path / "out")],
    )  # fmt: skip
    assert result.exit_code == 3
    assert "overlap the test set" in result.output
