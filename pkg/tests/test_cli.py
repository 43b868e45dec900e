import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from logtrace import cli
from logtrace.evaluation import EERReport
from logtrace.segmentation import CrossSectionSegmenter


def _tree_bytes(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Tiny synth -> segment run shared by the tests below."""
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["synth", "--out", str(root / "data"), "--logs", "8", "--acqs", "2", "--image-size", "128",
                     "--seed", "3"]) == 0
    assert cli.main(["segment", "--data", str(root / "data" / "S"), "--out", str(root / "seg"),
                     "--epochs", "2"]) == 0
    return root


def test_synth_defaults_and_profile():
    cfg = cli.resolve_config(cli.build_parser().parse_args(["synth", "--out", "x"]))
    assert (cfg.synth.n_logs, cfg.synth.acquisitions_per_end) == (8, 4)
    cfg = cli.resolve_config(cli.build_parser().parse_args(["synth", "--out", "x", "--profile", "hldb-sm"]))
    assert (cfg.synth.n_logs, cfg.synth.acquisitions_per_end, cfg.synth.dataset_tag) == (100, 3, "SM")


def test_config_defaults():
    cfg = cli.ExperimentConfig()
    assert cfg.segmentation.thresholds == {"SM": 0.5, "MVA": 0.5, "FH": 0.25, "FL": 0.25}
    assert cfg.baselines.max_shift == 21
    assert (cfg.embedding.epochs, cfg.embedding.base_lr, cfg.embedding.decay_period) == (400, 0.001, 120)
    assert (cfg.embedding.margin, cfg.embedding.dim, cfg.embedding.input_side) == (0.2, 256, 224)


def test_synth_run_directory_and_determinism(pipeline, tmp_path):
    data = pipeline / "data" / "S"
    manifest = json.loads((data / "manifest.json").read_text())
    assert len(manifest["entries"]) == 8 * 2 * 2
    run = json.loads((data / "run.json").read_text())
    assert run["seed"] == 3 and "torch" in run["versions"]
    snap = yaml.safe_load((data / "config.yaml").read_text())
    assert snap["synth"]["image_size"] == 128
    # replay from the snapshot
    assert cli.main(["synth", "--config", str(data / "config.yaml"), "--out", str(tmp_path)]) == 0
    a, b = _tree_bytes(data), _tree_bytes(tmp_path / "S")
    a.pop(next(k for k in a if k.name == "run.json"))
    b.pop(next(k for k in b if k.name == "run.json"))
    assert a == b


def test_segment_outputs(pipeline):
    index = json.loads((pipeline / "seg" / "patches" / "index.json").read_text())
    assert index["threshold"] == 0.5 and len(index["entries"]) == 32
    assert (pipeline / "seg" / "segmenter.pt").is_file()
    assert len(list((pipeline / "seg" / "masks").glob("*.mask.png"))) == 32


def test_segment_with_saved_model_is_reproducible(pipeline, tmp_path):
    model = str(pipeline / "seg" / "segmenter.pt")
    args = ["segment", "--data", str(pipeline / "data" / "S"), "--model", model]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    assert _tree_bytes(tmp_path / "a" / "patches") == _tree_bytes(tmp_path / "b" / "patches")
    assert cli.main(args + ["--out", str(tmp_path / "c"), "--threshold", "0.3"]) == 0
    assert json.loads((tmp_path / "c" / "patches" / "index.json").read_text())["threshold"] == 0.3


def test_segment_failures(pipeline, tmp_path, monkeypatch):
    real = CrossSectionSegmenter.predict
    calls = []

    def sometimes_empty(self, image, threshold=None):
        calls.append(1)
        m = real(self, image, threshold)
        return np.zeros_like(m) if len(calls) % 2 == 0 else m

    monkeypatch.setattr(CrossSectionSegmenter, "predict", sometimes_empty)
    args = ["segment", "--data", str(pipeline / "data" / "S"), "--model", str(pipeline / "seg" / "segmenter.pt")]
    assert cli.main(args + ["--out", str(tmp_path / "f")]) == cli.EXIT_DATA
    index = json.loads((tmp_path / "f" / "patches" / "index.json").read_text())
    assert sum(e.get("failed", False) for e in index["entries"]) == 16

    # one empty mask in 32 stays under the 10% failure budget
    calls.clear()

    def first_empty(self, image, threshold=None):
        calls.append(1)
        m = real(self, image, threshold)
        return np.zeros_like(m) if len(calls) == 1 else m

    monkeypatch.setattr(CrossSectionSegmenter, "predict", first_empty)
    assert cli.main(args + ["--out", str(tmp_path / "g")]) == 0


def test_baseline_extract_and_evaluate(pipeline):
    patches = str(pipeline / "seg" / "patches")
    assert cli.main(["baseline-extract", "--patches", patches, "--method", "iris",
                     "--out", str(pipeline / "iris_tpl")]) == 0
    assert len(list((pipeline / "iris_tpl" / "templates").glob("*.tpl"))) == 32
    assert cli.main(["evaluate", "--patches", patches, "--method", "iris", "--out", str(pipeline / "ev_iris")]) == 0
    report = EERReport.load(pipeline / "ev_iris" / "report.json")
    assert report.mean_eer == pytest.approx(np.mean(report.fold_eers))
    assert report.method == "iris" and len(report.fold_eers) == 4
    assert (pipeline / "ev_iris" / "scores.csv").is_file()


def test_embedder_commands(pipeline, capsys):
    patches = str(pipeline / "seg" / "patches")
    small = ["--epochs", "1", "--input-side", "48"]
    assert cli.main(["train-embed", "--patches", patches, "--out", str(pipeline / "emb")] + small) == 0
    assert cli.main(["embed", "--patches", patches, "--model", str(pipeline / "emb" / "embedder.pt"),
                     "--out", str(pipeline / "emb_out")]) == 0
    lines = (pipeline / "emb_out" / "embeddings.csv").read_text().splitlines()
    assert len(lines) == 33 and len(lines[0].split(",")) == 4 + 256
    assert cli.main(["evaluate", "--patches", patches, "--method", "embedder", "--regime", "sqnet+",
                     "--extra", patches, "--out", str(pipeline / "ev_emb")] + small) == 0
    report = EERReport.load(pipeline / "ev_emb" / "report.json")
    assert report.regime == "SqNet+" and report.method == "SqNet+"
    capsys.readouterr()
    assert cli.main(["report", str(pipeline / "ev_emb" / "report.json"),
                     str(pipeline / "ev_iris" / "report.json")]) == 0
    table = capsys.readouterr().out.splitlines()
    assert table[0].split() == ["Methods", "S"] and {t.split()[0] for t in table[2:]} == {"SqNet+", "iris"}


def test_exit_codes(pipeline, tmp_path):
    patches = pipeline / "seg" / "patches"
    assert cli.main(["segment", "--data", str(tmp_path / "nothing"), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert cli.main(["segment", "--data", str(pipeline / "data" / "S"), "--out", str(tmp_path / "o"),
                     "--threshold", "1.5"]) == cli.EXIT_CONFIG
    assert cli.main(["evaluate", "--patches", str(patches), "--regime", "sqnet+",
                     "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.yaml"
    bad.write_text("segmentation: {nonsense: 1}\n")
    assert cli.main(["synth", "--config", str(bad), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert cli.main(["synth", "--out", str(tmp_path / "o"), "--logs", "3"]) == cli.EXIT_DATA

    # four logs in four folds: no fold has an impostor pair
    index = json.loads((patches / "index.json").read_text())
    index["entries"] = [e for e in index["entries"] if e["id"].split("/")[1] < "log004"]
    (patches.parent / "few").mkdir()
    for e in index["entries"]:
        stem = e["patch"][: -len(".patch.png")]
        for suffix in (".patch.png", ".patch.mask.png"):
            (patches.parent / "few" / (stem + suffix)).write_bytes((patches / (stem + suffix)).read_bytes())
    (patches.parent / "few" / "index.json").write_text(json.dumps(index))
    assert cli.main(["evaluate", "--patches", str(patches.parent / "few"), "--method", "iris",
                     "--out", str(tmp_path / "o")]) == cli.EXIT_PROTOCOL


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "logtrace.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in cli.COMMANDS:
        assert cmd in out.stdout
