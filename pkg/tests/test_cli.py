from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from conftest import two_source_problem
from fusebench.cli import main
from fusebench.fusion import load_config
from fusebench.imgfeat.io import write_boxes, write_image
from fusebench.imgfeat.synthetic import make_face
from fusebench.scores import save_scores


@pytest.fixture
def manifest(tmp_path):
    table = two_source_problem(seed=11, n_bona=60, n_attack=20)
    doc = {}
    for source in table.sources:
        save_scores(table, tmp_path / f"{source}.csv", source)
        doc[source] = {"path": f"{source}.csv"}
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_fit_then_eval(tmp_path, manifest, capsys):
    config_path = tmp_path / "fit" / "fusion.json"
    assert main(["fit", "--manifest", str(manifest), "--out", str(config_path)]) == 0
    config = load_config(config_path)
    assert config.sources == ("good", "noise")
    trace = (config_path.parent / "trace.csv").read_text()
    assert "iteration,objective,w_1,w_2" in trace

    out = tmp_path / "eval"
    assert main(["eval", "--config", str(config_path), "--manifest", str(manifest), "--out", str(out)]) == 0
    rows = _rows(out / "deer.csv")
    assert rows[0] == ["filter", "deer"]
    assert [r[0] for r in rows[1:]] == ["f1", "f2", "f3", "average"]
    assert (out / "det_fused.svg").exists() and (out / "det_fused.csv").exists()
    first = (out / "deer.csv").read_bytes()
    assert main(["eval", "--config", str(config_path), "--manifest", str(manifest), "--out", str(out)]) == 0
    assert (out / "deer.csv").read_bytes() == first
    assert "average" in capsys.readouterr().out


def test_eval_names_missing_source(tmp_path, manifest, capsys):
    config_path = tmp_path / "fusion.json"
    assert main(["fit", "--manifest", str(manifest), "--sources", "good", "--out", str(config_path)]) == 0
    doc = json.loads(manifest.read_text())
    del doc["good"]
    reduced = tmp_path / "reduced.json"
    reduced.write_text(json.dumps({"noise": doc["noise"]}))
    code = main(["eval", "--config", str(config_path), "--manifest", str(reduced), "--out", str(tmp_path / "e")])
    assert code == 2
    assert "good" in capsys.readouterr().err


def test_missing_config_file_is_io_error(tmp_path, manifest):
    assert main(["eval", "--config", str(tmp_path / "nope.json"), "--manifest", str(manifest)]) == 1


def test_det_and_beauty_stats(tmp_path, manifest):
    out = tmp_path / "det"
    assert main(["det", "--scores", str(manifest), "--source", "good", "--out", str(out)]) == 0
    assert (out / "det_good.svg").exists()
    assert _rows(out / "det_good.csv")[0] == ["curve", "threshold", "apcer", "bpcer"]

    out = tmp_path / "beauty"
    assert main(["beauty-stats", "--scores", str(tmp_path / "good.csv"), "--source", "good",
                 "--out", str(out)]) == 0
    rows = _rows(out / "stats_good.csv")
    assert rows[0] == ["filter", "mean", "std_dev", "distance"]
    assert rows[1][0] == "bonafide"
    assert (out / "kde_good.svg").exists() and (out / "kde_good.csv").exists()


@pytest.mark.parametrize("learner", ["forest", "svc"])
def test_ml_fuse_report(tmp_path, manifest, learner):
    out = tmp_path / "report.csv"
    args = ["ml-fuse", "--manifest", str(manifest), "--learner", learner, "--repeats", "3",
            "--trees", "10", "--epochs", "3", "--out", str(out)]
    assert main(args) == 0
    rows = _rows(out)
    assert rows[0] == ["run", "average_deer"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3", "mean", "std_dev"]
    assert np.mean([float(r[1]) for r in rows[1:4]]) == pytest.approx(float(rows[4][1]))


def test_global_flags_before_or_after_subcommand(tmp_path, manifest):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    common = ["--manifest", str(manifest), "--repeats", "2", "--trees", "5"]
    assert main(["--seed", "4", "--out", str(a), "ml-fuse", *common]) == 0
    assert main(["ml-fuse", *common, "--seed", "4", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def _images(tmp_path, n=10):
    images = tmp_path / "img"
    images.mkdir()
    boxes = {}
    for k in range(n):
        img, box = make_face(np.random.default_rng(k), 32)
        write_image(images / f"s{k}.ppm", np.rint(img))
        boxes[f"s{k}"] = box
    write_boxes(boxes, tmp_path / "boxes.csv")
    return images


def test_extract(tmp_path):
    images = _images(tmp_path)
    out = tmp_path / "feat"
    code = main(["extract", "--images", str(images), "--boxes", str(tmp_path / "boxes.csv"), "--crop",
                 "--method", "dct", "--out", str(out)])
    assert code == 0
    assert len(list(out.glob("*.f32"))) == 10
    assert len(_rows(next(out.glob("*.csv")))) == 11


def test_extract_failures(tmp_path, capsys):
    images = _images(tmp_path, 2)
    assert main(["extract", "--images", str(images), "--crop"]) == 2
    (tmp_path / "empty").mkdir()
    assert main(["extract", "--images", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 2
    assert "no images" in capsys.readouterr().err
    assert main(["extract", "--images", str(tmp_path / "missing")]) == 2


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["fit"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["ml-fuse", "--manifest", "m.json", "--learner", "knn"])
    assert info.value.code == 2
    assert main(["demo", "--n-subjects", "0"]) == 2
