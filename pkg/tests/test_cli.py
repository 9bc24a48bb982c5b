import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from brainnetgen import AUTISM, CONTROL
from brainnetgen.cli import main
from brainnetgen.connectome import RoiTimeSeries, write_time_series
from brainnetgen.fileio import TimeSeriesEntry, read_cohort, write_time_series_manifest

TINY = {
    "cohort": {"n": 8, "count_per_class": 16},
    "generator": {"ordering": "identity", "max_nodes": 8, "epochs": 3, "graph_hidden_dim": 8,
                  "edge_hidden_dim": 4, "embed_dim": 6},
    "classifier": {"width": 8, "epochs": 3},
    "protocol": {"repeats": 2, "seed": 0},
}


def _write_config(path: Path, doc: dict) -> Path:
    path.write_text(json.dumps(doc))
    return path


def _tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def _rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def ts_manifest(tmp_path):
    rng = np.random.default_rng(0)
    entries = []
    (tmp_path / "ts").mkdir()
    for k in range(4):
        shared = rng.normal(size=120)
        sig = rng.normal(size=(6, 120)) + shared * np.linspace(0.2, 1.5, 6)[:, None]
        ts = RoiTimeSeries(f"s{k}", "toy", 2.0, sig, [f"roi{i}" for i in range(6)])
        write_time_series(ts, tmp_path / "ts" / f"s{k}.csv")
        entries.append(TimeSeriesEntry(f"s{k}", tmp_path / "ts" / f"s{k}.csv", (AUTISM, CONTROL)[k % 2], 2.0))
    write_time_series_manifest(entries, tmp_path / "manifest.csv")
    return tmp_path / "manifest.csv"


def test_preprocess_summary_and_determinism(tmp_path, ts_manifest):
    cfg = _write_config(tmp_path / "c.json", {"io": {"manifest": str(ts_manifest)}})
    before = _tree_digest(ts_manifest.parent / "ts")
    assert main(["preprocess", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["preprocess", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert _tree_digest(ts_manifest.parent / "ts") == before
    a = (tmp_path / "a" / "summary.csv").read_bytes()
    assert a == (tmp_path / "b" / "summary.csv").read_bytes()
    rows = _rows(tmp_path / "a" / "summary.csv")
    assert [r["subject_id"] for r in rows] == ["s0", "s1", "s2", "s3"]
    assert all(float(r["threshold_used"]) == 0.5 for r in rows)
    ids, graphs = read_cohort(tmp_path / "a")
    assert [g.edge_count for g in graphs] == [int(r["edges"]) for r in rows]
    assert (tmp_path / "a" / "config.json").is_file()


def test_preprocess_ablations(tmp_path, ts_manifest):
    cfg = _write_config(tmp_path / "c.json", {"io": {"manifest": str(ts_manifest)}})
    out = tmp_path / "pre"
    assert main(["preprocess", "--config", str(cfg), "--out", str(out), "--ablation", "preprocessing"]) == 0
    for name in ("filter+global", "filter", "global", "none"):
        assert (out / name / "summary.csv").is_file()
        assert (out / name / "config.json").is_file()
    out = tmp_path / "thr"
    assert main(["preprocess", "--config", str(cfg), "--out", str(out), "--ablation", "threshold"]) == 0
    rows = _rows(out / "edge_counts.csv")
    assert list(rows[0]) == ["subject_id", "tau0.3", "tau0.5", "tau0.7", "otsu"]
    for r in rows:
        assert int(r["tau0.3"]) >= int(r["tau0.5"]) >= int(r["tau0.7"])


def test_preprocess_fail_fast_and_skip_bad(tmp_path, ts_manifest):
    bad = ts_manifest.parent / "ts" / "s2.csv"
    bad.write_text("roi0,roi1\n1,1\n1,1\n1,1\n")  # zero variance
    cfg = _write_config(tmp_path / "c.json", {"io": {"manifest": str(ts_manifest)}})
    assert main(["preprocess", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 1
    assert main(["preprocess", "--config", str(cfg), "--out", str(tmp_path / "b"), "--skip-bad"]) == 0
    assert [r["subject_id"] for r in _rows(tmp_path / "b" / "skipped.csv")] == ["s2"]
    assert len(_rows(tmp_path / "b" / "summary.csv")) == 3


def test_exit_codes(tmp_path, capsys):
    assert main(["experiment", "--out", str(tmp_path / "x")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["synth"])  # --out missing
    assert exc.value.code == 1
    cfg = _write_config(tmp_path / "c.json", {"bogus": 1})
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "y")]) == 1
    assert main(["sample", "--checkpoint", str(tmp_path / "none.json"), "--count", "2", "--out", str(tmp_path / "z")]) == 1


def test_runtime_failure_exit_code(tmp_path):
    # a checkpoint whose density filter can never be met fails at runtime
    cfg = _write_config(tmp_path / "c.json", TINY)
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "cohort")]) == 0
    assert main(["train-gen", "--config", str(cfg), "--cohort", str(tmp_path / "cohort"),
                 "--label", AUTISM, "--out", str(tmp_path / "gen")]) == 0
    path = tmp_path / "gen" / AUTISM / "checkpoint.json"
    doc = json.loads(path.read_text())
    doc["config"]["min_edge_density"] = 1.0
    doc["config"]["max_edge_density"] = 1.0
    doc["params"]["edge_out.1.b"] = [-60.0]
    path.write_text(json.dumps(doc))
    assert main(["sample", "--checkpoint", str(path), "--count", "2", "--out", str(tmp_path / "s")]) == 2


def test_full_pipeline(tmp_path):
    doc = dict(TINY)
    doc["io"] = {
        "raw_cohort": "cohort",
        "checkpoints": {"autism": f"gen/{AUTISM}/checkpoint.json", "control": f"gen/{CONTROL}/checkpoint.json"},
    }
    cfg = str(_write_config(tmp_path / "c.json", doc))
    assert main(["synth", "--config", cfg, "--out", str(tmp_path / "cohort")]) == 0
    probe = json.loads((tmp_path / "cohort" / "probe.json").read_text())
    assert probe["autism"] == probe["control"] == 16
    cohort_before = _tree_digest(tmp_path / "cohort")

    assert main(["train-gen", "--config", cfg, "--cohort", str(tmp_path / "cohort"), "--out", str(tmp_path / "gen")]) == 0
    for lab in (AUTISM, CONTROL):
        loss = _rows(tmp_path / "gen" / lab / "loss.csv")
        assert len(loss) == 3
        assert (tmp_path / "gen" / lab / "config.json").is_file()

    ck = str(tmp_path / "gen" / AUTISM / "checkpoint.json")
    assert main(["sample", "--checkpoint", ck, "--count", "7", "--out", str(tmp_path / "s1"), "--seed", "3"]) == 0
    assert main(["sample", "--checkpoint", ck, "--count", "7", "--out", str(tmp_path / "s2"), "--seed", "3"]) == 0
    _, s1 = read_cohort(tmp_path / "s1")
    assert len(s1) == 7 and all(g.label == AUTISM for g in s1)
    assert (tmp_path / "s1" / "manifest.csv").read_bytes() == (tmp_path / "s2" / "manifest.csv").read_bytes()
    rej = _rows(tmp_path / "s1" / "rejection.csv")[0]
    assert int(rej["drawn"]) - int(rej["rejected"]) == 7

    assert main(["experiment", "--config", cfg, "--out", str(tmp_path / "e1")]) == 0
    assert main(["experiment", "--config", cfg, "--out", str(tmp_path / "e2")]) == 0
    for name in ("results.csv", "summary.csv", "pca.csv", "roc/raw_ratio0.6.csv"):
        assert (tmp_path / "e1" / name).read_bytes() == (tmp_path / "e2" / name).read_bytes()
    results = _rows(tmp_path / "e1" / "results.csv")
    assert len(results) == 3 * 2
    summary = _rows(tmp_path / "e1" / "summary.csv")
    assert all(r["repeats"] == "2" and r["accuracy_std"] != "" for r in summary)
    assert (tmp_path / "e1" / "config.json").is_file()

    assert main(["experiment", "--config", cfg, "--out", str(tmp_path / "e3"), "--seed", "9"]) == 0
    assert json.loads((tmp_path / "e3" / "config.json").read_text())["protocol"]["seed"] == 9

    assert main(["metrics", "--cohort", str(tmp_path / "s1"), "--reference", str(tmp_path / "cohort"),
                 "--out", str(tmp_path / "m")]) == 0
    assert len(_rows(tmp_path / "m" / "stats.csv")) == 7
    assert float(_rows(tmp_path / "m" / "mmd.csv")[0]["mmd_degree"]) >= 0
    assert (tmp_path / "m" / "config.json").is_file()

    for kind in ("degree", "clustering"):
        out = tmp_path / f"base-{kind}"
        assert main(["synth", "--from-cohort", str(tmp_path / "cohort"), "--baseline", kind, "--out", str(out)]) == 0
        _, base = read_cohort(out)
        _, raw = read_cohort(tmp_path / "cohort")
        assert all(np.array_equal(a.degrees(), b.degrees()) for a, b in zip(base, raw))

    assert _tree_digest(tmp_path / "cohort") == cohort_before


def test_experiment_raw_arm_matches_protocol(tmp_path):
    from brainnetgen.config import load_config
    from brainnetgen.discriminator import run_augmentation_protocol
    from brainnetgen.rng import child_seed

    doc = dict(TINY)
    doc["protocol"] = {"repeats": 1, "seed": 4}
    doc["io"] = {"raw_cohort": "cohort", "generated_cohort": "gen"}
    cfg_path = _write_config(tmp_path / "c.json", doc)
    assert main(["synth", "--config", str(cfg_path), "--out", str(tmp_path / "cohort")]) == 0
    assert main(["synth", "--config", str(cfg_path), "--out", str(tmp_path / "gen"), "--seed", "77"]) == 0
    missing = _write_config(tmp_path / "m.json", {**doc, "io": {"raw_cohort": "cohort", "generated_cohort": "nothere"}})
    assert main(["experiment", "--config", str(missing), "--out", str(tmp_path / "bad")]) == 1
    assert not (tmp_path / "bad").exists()

    assert main(["experiment", "--config", str(cfg_path), "--out", str(tmp_path / "e")]) == 0
    cfg = load_config(cfg_path)
    _, raw = read_cohort(tmp_path / "cohort")
    _, gen = read_cohort(tmp_path / "gen")
    res = run_augmentation_protocol(raw, gen, cfg.classifier, 0.6, child_seed(4, "repeat0"))
    row = [r for r in _rows(tmp_path / "e" / "results.csv") if r["arm"] == "raw"][0]
    assert float(row["accuracy"]) == res.reports["raw"].accuracy
    assert float(row["auc"]) == res.reports["raw"].auc
