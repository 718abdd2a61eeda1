import json

import numpy as np
import pytest

from gsdcheck.cli import main
from gsdcheck.estimation import save_grid
from gsdcheck.gsd import GsdParams, sample
from gsdcheck.ingest import ScoreRecord, write_scores_csv


@pytest.fixture(scope="module")
def grid_file(grid, tmp_path_factory):
    path = tmp_path_factory.mktemp("grid") / "grid.bin"
    save_grid(grid, path)
    return path


@pytest.fixture
def scores_csv(tmp_path):
    rng = np.random.default_rng(4)
    recs = []
    for exp in ("alpha", "beta"):
        for s in range(12):
            k = sample(GsdParams(rng.uniform(1.5, 4.5), rng.uniform(0.6, 0.95)), 16,
                       seed=int(rng.integers(2**32)))
            scores = np.repeat(np.arange(1, 6), k)
            recs += [ScoreRecord(exp, f"v{s:02d}", f"u{j}", int(x)) for j, x in enumerate(scores)]
    path = tmp_path / "scores.csv"
    write_scores_csv(recs, path)
    return path


def _analyze(grid_file, inputs, out, *extra):
    return main(["analyze", *map(str, inputs), "--grid-path", str(grid_file),
                 "--bootstrap-iters", "200", "--out", str(out), *extra])


def test_grid_build_and_verify(tmp_path):
    path = tmp_path / "g.bin"
    assert main(["grid", "build", "--grid-path", str(path)]) == 0
    first = path.read_bytes()
    assert main(["grid", "verify", "--grid-path", str(path)]) == 0
    assert main(["grid", "build", "--grid-path", str(path)]) == 0
    assert path.read_bytes() == first


def test_grid_verify_detects_tampering(grid_file, tmp_path):
    path = tmp_path / "g.bin"
    data = bytearray(grid_file.read_bytes())
    data[5000] ^= 0x01
    path.write_bytes(bytes(data))
    assert main(["grid", "verify", "--grid-path", str(path)]) == 2
    assert main(["grid", "verify", "--grid-path", str(tmp_path / "missing.bin")]) == 2


def test_analyze_writes_tree(grid_file, scores_csv, tmp_path, capsys):
    out = tmp_path / "out"
    assert _analyze(grid_file, [scores_csv], out) == 0
    for exp in ("alpha", "beta"):
        for name in ("results.csv", "ppplot.svg", "ppplot.csv", "verdict.json", "flagged.csv"):
            assert (out / exp / name).is_file()
        verdict = json.loads((out / exp / "verdict.json").read_text())
        assert verdict["n_stimuli"] == 12
        assert verdict["decision"] in ("consistent", "inconsistent")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["bootstrap_iters"] == 200
    assert str(scores_csv) in manifest["inputs"]
    assert len(manifest["grid_checksum"]) == 64
    assert len((out / "verdicts.jsonl").read_text().splitlines()) == 2
    assert "alpha:" in capsys.readouterr().out


def test_analyze_counts_input_matches_tidy(grid_file, scores_csv, tmp_path):
    from gsdcheck.ingest import aggregate, parse_csv, write_counts_csv
    counts = tmp_path / "counts.csv"
    write_counts_csv(aggregate(parse_csv(scores_csv).records), counts)
    assert _analyze(grid_file, [scores_csv], tmp_path / "a") == 0
    assert _analyze(grid_file, [counts], tmp_path / "b") == 0
    for exp in ("alpha", "beta"):
        assert ((tmp_path / "a" / exp / "results.csv").read_bytes()
                == (tmp_path / "b" / exp / "results.csv").read_bytes())


def test_analyze_empty_csv_writes_nothing(grid_file, tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("experiment,stimulus_id,subject_id,score\n")
    out = tmp_path / "out"
    assert _analyze(grid_file, [empty], out) == 2
    assert not out.exists()


def test_analyze_experiment_filter(grid_file, scores_csv, tmp_path):
    out = tmp_path / "out"
    assert _analyze(grid_file, [scores_csv], out, "--experiment", "beta") == 0
    assert (out / "beta").is_dir() and not (out / "alpha").exists()
    assert _analyze(grid_file, [scores_csv], tmp_path / "x", "--experiment", "nope") == 2


@pytest.mark.parametrize("args", [
    ["analyze"],
    ["analyze", "--bootstrap-iters", "10", "x.csv"],
    ["nonsense"],
    ["simulate", "--contaminate", "weird=0.1", "--no-analyze"],
    ["simulate", "--psi-range", "abc", "--no-analyze"],
])
def test_usage_errors(args, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(args) == 1


def test_help_and_version():
    assert main(["--help"]) == 0
    assert main(["--version"]) == 0


def test_env_var_and_flag_precedence(grid_file, scores_csv, tmp_path, monkeypatch):
    monkeypatch.setenv("GSDCHECK_BOOTSTRAP_ITERS", "150")
    monkeypatch.setenv("GSDCHECK_GRID_PATH", str(grid_file))
    out = tmp_path / "env"
    assert main(["analyze", str(scores_csv), "--out", str(out)]) == 0
    assert json.loads((out / "manifest.json").read_text())["config"]["bootstrap_iters"] == 150
    out = tmp_path / "flag"
    assert main(["analyze", str(scores_csv), "--out", str(out), "--bootstrap-iters", "120"]) == 0
    assert json.loads((out / "manifest.json").read_text())["config"]["bootstrap_iters"] == 120


def test_simulate_deterministic(grid_file, tmp_path):
    args = ["simulate", "--grid-path", str(grid_file), "--n-stimuli", "20", "--n-scores", "24",
            "--bootstrap-iters", "100", "--seed", "3", "--runs", "2",
            "--contaminate", "bimodal=0.25"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b"), "--workers", "4"]) == 0
    for run in ("run_3", "run_4"):
        for name in ("counts.csv", "labels.csv", "results.csv", "confusion.json"):
            assert ((tmp_path / "a" / run / name).read_bytes()
                    == (tmp_path / "b" / run / name).read_bytes())
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert [r["seed"] for r in summary["runs"]] == [3, 4]


def test_simulate_without_analysis(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--no-analyze", "--n-stimuli", "5", "--out", str(out),
                 "--grid-path", str(tmp_path / "unused.bin")]) == 0
    assert (out / "run_0" / "counts.csv").is_file()
    assert not (out / "run_0" / "results.csv").exists()
    assert not (tmp_path / "unused.bin").exists()
