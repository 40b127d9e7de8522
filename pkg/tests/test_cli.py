"""Command-line contract: exit codes, stream discipline, determinism."""

import json
import os
import subprocess
import sys
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest

from melime.blackbox import (
    KnnRegressor,
    NaiveBayesText,
    knn_regressor_to_json,
    naive_bayes_to_json,
)
from melime.core import Dataset
from melime.experiments import load_toy_corpus

TESTS_DIR = Path(__file__).resolve().parent
PEER = TESTS_DIR / "bridge_peer.py"
EMBEDDINGS = TESTS_DIR.parent / "src" / "melime" / "data" / "toy_embeddings.txt"


def run_cli(*argv, env_extra=None, timeout=180):
    env = os.environ.copy()
    env.pop("MELIME_SEED", None)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "melime", *argv],
        capture_output=True, text=True, env=env, timeout=timeout,
    )


@pytest.fixture(scope="module")
def tabular_fixture(tmp_path_factory):
    """A training CSV plus a serialized kNN model of y = 1 + 3a - 2b."""
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(0)
    x = rng.uniform(-2.0, 2.0, (300, 2))
    y = 1.0 + 3.0 * x[:, 0] - 2.0 * x[:, 1]
    train = Dataset(x, ("a", "b"))
    model_path = root / "knn.json"
    model_path.write_text(knn_regressor_to_json(KnnRegressor(train, y, k=3)))
    csv_path = root / "train.csv"
    csv_path.write_text(
        "a,b\n" + "\n".join(f"{float(r[0])!r},{float(r[1])!r}" for r in x) + "\n"
    )
    return csv_path, model_path, x


@pytest.fixture(scope="module")
def nb_model(tmp_path_factory):
    sentences, labels = load_toy_corpus()
    path = tmp_path_factory.mktemp("cli-nb") / "nb.json"
    path.write_text(naive_bayes_to_json(NaiveBayesText(sentences, labels)))
    return path


# ---------------------------------------------------------------------------
# demo subcommand


def test_demo_writes_report_file(tmp_path):
    out = tmp_path / "r.json"
    proc = run_cli("demo", "spiral", "--seed", "7", "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(out.read_text())
    assert "melime" in doc and "lime_baseline" in doc
    assert doc["seed"] == 7


def test_demo_same_seed_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run_cli("demo", "iris", "--seed", "4", "--out", str(a)).returncode == 0
    assert run_cli("demo", "iris", "--seed", "4", "--out", str(b)).returncode == 0
    assert a.read_bytes() == b.read_bytes()


def test_demo_unknown_name_exits_2():
    proc = run_cli("demo", "bogus")
    assert proc.returncode == 2
    assert "usage" in proc.stderr or "invalid choice" in proc.stderr


def test_demo_stdout_carries_only_the_report():
    proc = run_cli("demo", "text", "--seed", "1")
    assert proc.returncode == 0
    doc = json.loads(proc.stdout)
    assert proc.stdout == json.dumps(doc, indent=2) + "\n"
    assert "PASS" in proc.stderr  # summary lives on stderr


def test_demo_svg_charts(tmp_path):
    prefix = str(tmp_path / "chart-")
    proc = run_cli("demo", "iris", "--seed", "0", "--out",
                   str(tmp_path / "r.json"), "--svg", prefix)
    assert proc.returncode == 0
    made = sorted(p.name for p in tmp_path.glob("chart-*.svg"))
    assert made == ["chart-lime.svg", "chart-melime-linear.svg", "chart-melime-tree.svg"]
    for p in tmp_path.glob("chart-*.svg"):
        ET.parse(p)  # well-formed


def test_demo_seed_from_environment():
    proc = run_cli("demo", "text", env_extra={"MELIME_SEED": "9"})
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["seed"] == 9


def test_demo_bad_environment_seed_exits_2():
    proc = run_cli("demo", "text", env_extra={"MELIME_SEED": "soup"})
    assert proc.returncode == 2
    assert "MELIME_SEED" in proc.stderr


# ---------------------------------------------------------------------------
# explain subcommand


def test_explain_model_file_recovers_coefficients(tabular_fixture, tmp_path):
    csv_path, model_path, _ = tabular_fixture
    out = tmp_path / "e.json"
    proc = run_cli(
        "explain", "--data", str(csv_path), "--model", str(model_path),
        "--instance", "0.1,0.2", "--generator", "kde", "--local-model", "linear",
        "--r", "0.5", "--seed", "5", "--out", str(out),
    )
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(out.read_text())
    assert doc["importances"]["a"] == pytest.approx(3.0, abs=0.05)
    assert doc["importances"]["b"] == pytest.approx(-2.0, abs=0.05)
    assert proc.stdout == ""  # report went to the file


def test_explain_bridge_peer_matches_true_coefficients(tabular_fixture):
    # the peer's regression model is y = 1 + 2*x0 - 3*x1
    csv_path, _, _ = tabular_fixture
    proc = run_cli(
        "explain", "--data", str(csv_path),
        "--bridge", f"{sys.executable} {PEER} --task regression --mode linear",
        "--instance", "0.1,0.2", "--generator", "kde", "--r", "0.5", "--seed", "2",
    )
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(proc.stdout)
    assert doc["importances"]["a"] == pytest.approx(2.0, abs=0.05)
    assert doc["importances"]["b"] == pytest.approx(-3.0, abs=0.05)


def test_explain_vae_generator(tabular_fixture):
    csv_path, model_path, _ = tabular_fixture
    proc = run_cli(
        "explain", "--data", str(csv_path), "--model", str(model_path),
        "--instance", "0.1,0.2", "--generator", "vae", "--r", "1.0", "--seed", "3",
    )
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(proc.stdout)
    assert doc["importances"]["a"] == pytest.approx(3.0, abs=0.05)
    assert doc["importances"]["b"] == pytest.approx(-2.0, abs=0.05)


def test_explain_word2vec_stats(nb_model):
    proc = run_cli(
        "explain", "--model", str(nb_model),
        "--instance", "the,food,was,superb", "--generator", "word2vec",
        "--embeddings", str(EMBEDDINGS), "--local-model", "stats",
        "--r", "1.2", "--class-label", "pos", "--seed", "0",
    )
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(proc.stdout)
    ranked = sorted(doc["importances"].items(), key=lambda kv: -abs(kv[1]))
    assert ranked[0][0] == "superb@3" and ranked[0][1] < 0


def test_explain_radius_doubling_recovers(tabular_fixture):
    # nearest neighbor is farther than r but within 8r, so doubling rescues it
    csv_path, model_path, x = tabular_fixture
    nearest = float(np.min(np.linalg.norm(x - np.array([0.1, 0.2]), axis=1)))
    r = nearest * 0.6
    proc = run_cli(
        "explain", "--data", str(csv_path), "--model", str(model_path),
        "--instance", "0.1,0.2", "--r", repr(r), "--seed", "1",
    )
    assert proc.returncode == 0, proc.stderr
    assert "retrying" in proc.stderr
    assert json.loads(proc.stdout)["config"]["r"] == pytest.approx(2 * r)


def test_explain_r_zero_exits_3_with_hint(tabular_fixture):
    csv_path, model_path, x = tabular_fixture
    proc = run_cli(
        "explain", "--data", str(csv_path), "--model", str(model_path),
        "--instance", "99,99", "--r", "0",
    )
    assert proc.returncode == 3
    nearest = float(np.min(np.linalg.norm(x - np.array([99.0, 99.0]), axis=1)))
    assert f"{nearest:.6g}"[:6] in proc.stderr  # the minimum-distance hint


def test_explain_bridge_spawn_failure_exits_4(tabular_fixture):
    csv_path, _, _ = tabular_fixture
    proc = run_cli(
        "explain", "--data", str(csv_path), "--bridge", "no-such-binary-xyz",
        "--instance", "0.1,0.2", "--r", "0.5",
    )
    assert proc.returncode == 4
    assert "bridge failure" in proc.stderr


def test_explain_bridge_bad_handshake_exits_4(tabular_fixture):
    csv_path, _, _ = tabular_fixture
    proc = run_cli(
        "explain", "--data", str(csv_path),
        "--bridge", f"{sys.executable} {PEER} --task regression --misbehave bad-handshake",
        "--instance", "0.1,0.2", "--r", "0.5",
    )
    assert proc.returncode == 4


def test_explain_usage_errors(tabular_fixture, nb_model):
    csv_path, model_path, _ = tabular_fixture
    # stats surrogate needs word2vec annotations
    proc = run_cli("explain", "--data", str(csv_path), "--model", str(model_path),
                   "--instance", "0.1,0.2", "--local-model", "stats", "--r", "0.5")
    assert proc.returncode == 2
    # word2vec without embeddings
    proc = run_cli("explain", "--model", str(nb_model), "--instance", "the,food",
                   "--generator", "word2vec", "--r", "1.0")
    assert proc.returncode == 2
    # instance width mismatch
    proc = run_cli("explain", "--data", str(csv_path), "--model", str(model_path),
                   "--instance", "1,2,3", "--r", "0.5")
    assert proc.returncode == 2
    # model and bridge are mutually exclusive
    proc = run_cli("explain", "--data", str(csv_path), "--model", str(model_path),
                   "--bridge", "cmd", "--instance", "0.1,0.2", "--r", "0.5")
    assert proc.returncode == 2


def test_explain_unknown_model_schema_exits_2(tabular_fixture, tmp_path):
    csv_path, _, _ = tabular_fixture
    bad = tmp_path / "model.json"
    bad.write_text('{"format": "mystery"}')
    proc = run_cli("explain", "--data", str(csv_path), "--model", str(bad),
                   "--instance", "0.1,0.2", "--r", "0.5")
    assert proc.returncode == 2
    assert "schema" in proc.stderr or "mystery" in proc.stderr


def test_explain_converged_flag_surfaced(tabular_fixture):
    csv_path, model_path, _ = tabular_fixture
    proc = run_cli(
        "explain", "--data", str(csv_path), "--model", str(model_path),
        "--instance", "0.1,0.2", "--r", "0.5", "--sigma", "1e-3", "--seed", "0",
    )
    assert proc.returncode == 0
    doc = json.loads(proc.stdout)
    assert doc["converged"] is True
    deltas = [t["delta"] for t in doc["trace"] if t["delta"] is not None]
    assert deltas[-1] <= 1e-3
