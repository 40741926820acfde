import csv
import json
import os
import shutil
import subprocess
import sys

import pytest

from conftest import data_dir
from nodehmc.cli import main
from nodehmc.pipeline import STAGES

STAGE_ORDER = ["normalize", "split", "features", "embed", "train", "predict", "baseline", "eval"]


def _tsv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"]


def _copy_fixture(tmp_path, name):
    dst = tmp_path / name
    shutil.copytree(data_dir(name), dst)
    return dst


@pytest.fixture(scope="module")
def synthetic_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "out"
    cfg = os.path.join(data_dir("synthetic"), "config.ini")
    assert main(["run", "-c", cfg, "-o", str(out)]) == 0
    return out


def test_stage_list():
    assert list(STAGES) == STAGE_ORDER


def test_run_smoke_artifacts(synthetic_run):
    for rel in ("tree.tsv", "removed_edges.tsv", "closed_annotations.tsv", "subhierarchies.tsv",
                "predictions.tsv", "extended_annotations.tsv", "baseline_predictions.tsv",
                "metrics.json", "timing_report.tsv", "timing.json"):
        assert (synthetic_run / rel).is_file(), rel
    for stage in STAGE_ORDER:
        assert (synthetic_run / "manifests" / f"{stage}.json").is_file()
    assert any((synthetic_run / "curves" / "engine").rglob("*.pr.csv"))
    metrics = json.loads((synthetic_run / "metrics.json").read_text())
    assert set(metrics) == {"engine", "hbn"} and metrics["engine"]["summary"]["classes"] > 0


def test_predictions_have_model_column_and_consistency(synthetic_run):
    rows = _tsv(synthetic_run / "predictions.tsv")
    assert {r["model"] for r in rows} == {"engine"}
    tree = {}
    for line in (synthetic_run / "tree.tsv").read_text().splitlines():
        parts = line.split("\t")
        if len(parts) == 2:
            tree[parts[1]] = parts[0]
    ext = {}
    # same headerless node<TAB>class layout as the annotation input
    for line in (synthetic_run / "extended_annotations.tsv").read_text().splitlines():
        node, cls = line.split("\t")
        ext.setdefault(node, set()).add(cls)
    for node, classes in ext.items():
        for c in classes:
            assert tree.get(c) is None or tree[c] in classes


def test_baseline_timing_table(synthetic_run):
    rows = _tsv(synthetic_run / "timing_report.tsv")
    assert rows and set(rows[0]) == {"subhierarchy", "classes", "nodes", "engine_seconds", "hbn_seconds", "engine_over_hbn"}
    assert all(float(r["engine_seconds"]) > 0 and float(r["hbn_seconds"]) > 0 for r in rows)
    assert {r["model"] for r in _tsv(synthetic_run / "baseline_predictions.tsv")} == {"hbn"}


def test_split_sorted_by_class_count(synthetic_run):
    rows = _tsv(synthetic_run / "subhierarchies.tsv")
    counts = [int(r["classes"]) for r in rows]
    assert counts == sorted(counts) and len(rows) >= 2
    assert set(rows[0]) >= {"root", "classes", "nodes"}


def test_run_equals_stage_composition(synthetic_run, tmp_path):
    cfg = os.path.join(data_dir("synthetic"), "config.ini")
    out = tmp_path / "staged"
    for stage in STAGE_ORDER:
        assert main([stage, "-c", cfg, "-o", str(out)]) == 0, stage
    for rel in ("predictions.tsv", "baseline_predictions.tsv", "metrics.json", "extended_annotations.tsv", "tree.tsv"):
        assert (out / rel).read_bytes() == (synthetic_run / rel).read_bytes(), rel


def test_diamond_normalize_removed_edge(tmp_path):
    cfg = os.path.join(data_dir("diamond"), "config.ini")
    assert main(["normalize", "-c", cfg, "-o", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "removed_edges.tsv").read_text() == "B\tE\n"


def test_missing_annotations_is_ingest_error(tmp_path, capsys):
    d = _copy_fixture(tmp_path, "synthetic")
    os.remove(d / "annotations.tsv")
    assert main(["run", "-c", str(d / "config.ini"), "-o", str(tmp_path / "o")]) == 1
    err = _error(capsys)
    assert err["stage"] == "ingest" and err["exit_code"] == 1 and "annotations" in err["message"]


def test_eval_without_predictions_names_artifact(tmp_path, capsys):
    cfg = os.path.join(data_dir("synthetic"), "config.ini")
    assert main(["eval", "-c", cfg, "-o", str(tmp_path / "empty")]) == 2
    err = _error(capsys)
    assert err["stage"] == "eval" and "missing artifact" in err["message"] and "predict" in err["message"]


def test_stage_order_violations(tmp_path, capsys):
    cfg = os.path.join(data_dir("diamond"), "config.ini")
    out = str(tmp_path / "o")
    assert main(["normalize", "-c", cfg, "-o", out]) == 0
    assert main(["features", "-c", cfg, "-o", out]) == 2
    assert "split" in _error(capsys)["message"]
    assert main(["split", "-c", cfg, "-o", out]) == 0
    # a changed upstream artifact is detected by its manifest hash
    with open(os.path.join(out, "tree.tsv"), "a") as fh:
        fh.write("# edited\n")
    assert main(["split", "-c", cfg, "-o", out]) == 2
    assert "changed" in _error(capsys)["message"]
    # so is a different seed for a seeded stage
    assert main(["normalize", "-c", cfg, "-o", out]) == 0
    assert main(["split", "-c", cfg, "-o", out]) == 0


def test_seed_change_invalidates_downstream(synthetic_run, capsys):
    cfg = os.path.join(data_dir("synthetic"), "config.ini")
    assert main(["predict", "-c", cfg, "-o", str(synthetic_run), "--seed", "99"]) == 2
    assert "different settings" in _error(capsys)["message"]


@pytest.mark.parametrize("body,needle", [
    ("[split]\nmin_count = 10\nmax_count = 5\n", "already exists"),
    ("[bounds]\nmin_count = 10\n", "bounds"),
    ("[engine]\nk = 1\n", "k"),
    ("[engine]\nbogus = 3\n", "bogus"),
    ("[engine]\nseed = abc\n", "seed"),
])
def test_config_errors(tmp_path, capsys, body, needle):
    d = _copy_fixture(tmp_path, "diamond")
    with open(d / "config.ini", "a") as fh:
        fh.write("\n" + body)
    assert main(["normalize", "-c", str(d / "config.ini"), "-o", str(tmp_path / "o")]) == 1
    err = _error(capsys)
    assert err["stage"] == "config" and needle in err["message"]


def test_inverted_bounds(tmp_path, capsys):
    d = _copy_fixture(tmp_path, "diamond")
    text = (d / "config.ini").read_text().replace("min_count = 1", "min_count = 400")
    (d / "config.ini").write_text(text)
    assert main(["normalize", "-c", str(d / "config.ini"), "-o", str(tmp_path / "o")]) == 1
    assert "min_count" in _error(capsys)["message"]


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", "-c", str(tmp_path / "nope.ini")]) == 1
    assert _error(capsys)["stage"] == "config"


def test_help_lists_defaults():
    proc = subprocess.run([sys.executable, "-m", "nodehmc.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for needle in ("min_count", "300", "walk_length", "NODEHMC_LOG_LEVEL", "normalize", "baseline"):
        assert needle in proc.stdout


def test_obo_hierarchy_input(tmp_path):
    d = _copy_fixture(tmp_path, "diamond")
    edges = [ln.split("\t") for ln in (d / "hierarchy.tsv").read_text().split("\n") if "\t" in ln]
    parents = {}
    for p, c in edges:
        parents.setdefault(c, []).append(p)
    terms = sorted({x for e in edges for x in e})
    stanzas = ["[Term]\nid: " + t + "".join(f"\nis_a: {p}" for p in parents.get(t, [])) for t in terms]
    (d / "h.obo").write_text("format-version: 1.2\n\n" + "\n\n".join(stanzas) + "\n")
    text = (d / "config.ini").read_text().replace("hierarchy = hierarchy.tsv", "hierarchy = h.obo")
    (d / "config.ini").write_text(text)
    assert main(["normalize", "-c", str(d / "config.ini"), "-o", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "removed_edges.tsv").read_text() == "B\tE\n"
