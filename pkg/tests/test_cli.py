import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from occluseg.cli import main
from occluseg.dataset_gen import ClassCatalog, frame_labels_from_json
from occluseg.formats import instances_to_json
from occluseg.pq_eval import InstancePrediction

from conftest import rect
from test_augment import check_partitions

FIXTURE = Path(__file__).resolve().parents[1] / "fixtures" / "two_rect.json"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def built(tmp_path, capsys):
    out = tmp_path / "labels"
    code, stdout, _ = run(["dataset-build", FIXTURE, "--out", out], capsys)
    assert code == 0
    return out, json.loads(stdout)


class TestDatasetBuild:
    def test_two_rect(self, built):
        out, summary = built
        assert summary["frames"] == [f"video000_frame{f:04d}.json" for f in range(3)]
        doc = json.loads((out / "video000_frame0000.json").read_text())
        assert doc["format_version"] == 1
        labels, catalog = frame_labels_from_json(doc)
        book = next(i for i in labels.instances if i.instance_id == 1)
        assert book.whole.area == 100
        assert book.occluded.area == 16
        assert catalog.names == ("book", "socks")
        # frame 2: socks removed, book fully visible
        labels2, _ = frame_labels_from_json(json.loads((out / "video000_frame0002.json").read_text()))
        assert [i.instance_id for i in labels2.instances] == [1]
        assert labels2.instances[0].occluded.area == 0

    def test_empty_videos(self, tmp_path):
        ann = tmp_path / "empty.json"
        ann.write_text(json.dumps({"classes": ["a"], "height": 4, "width": 4, "videos": []}))
        proc = subprocess.run([sys.executable, "-m", "occluseg", "dataset-build", str(ann), "--out",
                               str(tmp_path / "o")], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "WARNING" in proc.stderr and "no videos" in proc.stderr
        assert json.loads(proc.stdout)["frames"] == []
        assert not (tmp_path / "o").exists()

    def test_duplicate_pick_frame(self, tmp_path, capsys):
        doc = json.loads(FIXTURE.read_text())
        doc["videos"][0]["instances"][1]["pick_frame"] = 2
        ann = tmp_path / "dup.json"
        ann.write_text(json.dumps(doc))
        code, _, err = run(["dataset-build", ann, "--out", tmp_path / "o"], capsys)
        assert code == 2
        assert "ValidationError" in err and "pick" in err

    def test_schema_error_names_field(self, tmp_path, capsys):
        doc = json.loads(FIXTURE.read_text())
        del doc["videos"][0]["instances"][1]["polygon"]
        ann = tmp_path / "bad.json"
        ann.write_text(json.dumps(doc))
        code, _, err = run(["dataset-build", ann, "--out", tmp_path / "o"], capsys)
        assert code == 2
        assert "SchemaError" in err and "instances[1]" in err and str(ann) in err

    def test_bad_json_reports_line(self, tmp_path, capsys):
        ann = tmp_path / "broken.json"
        ann.write_text('{\n "classes": ["a"],\n "height": 4,,\n}')
        code, _, err = run(["dataset-build", ann, "--out", tmp_path / "o"], capsys)
        assert code == 2
        assert f"{ann}:3" in err

    def test_jobs_do_not_change_output(self, tmp_path, capsys):
        doc = json.loads(FIXTURE.read_text())
        doc["videos"] = doc["videos"] * 3
        ann = tmp_path / "three.json"
        ann.write_text(json.dumps(doc))
        run(["dataset-build", ann, "--out", tmp_path / "a", "--jobs", 1], capsys)
        run(["dataset-build", ann, "--out", tmp_path / "b", "--jobs", 3], capsys)
        names = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
        for n in names:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


@pytest.fixture
def sample(built):
    out, _ = built
    path = out / "video000_frame0000.json"
    doc = json.loads(path.read_text())
    rng = np.random.default_rng(0)
    Image.fromarray(rng.integers(0, 256, (20, 20, 3), dtype=np.uint8)).save(out / "frame0.png")
    doc["image"] = "frame0.png"
    path.write_text(json.dumps(doc))
    return path


class TestAugment:
    def test_same_seed_identical(self, sample, tmp_path, capsys):
        for d in ("a", "b"):
            assert run(["augment", sample, "--count", 3, "--seed", 7, "--out", tmp_path / d], capsys)[0] == 0
        files = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert len(files) == 6
        for n in files:
            assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
        run(["augment", sample, "--count", 3, "--seed", 8, "--out", tmp_path / "c"], capsys)
        assert (tmp_path / "a" / files[0]).read_bytes() != (tmp_path / "c" / files[0]).read_bytes()

    def test_identity_config_copies(self, sample, tmp_path, capsys):
        cfg = tmp_path / "id.toml"
        cfg.write_text(
            "[augment]\nhue_shift = [0, 0]\nsaturation_scale = [1, 1]\nvalue_scale = [1, 1]\n"
            "blur_sigma = [0, 0]\nscale = [1, 1]\nrotation_deg = [0, 0]\n"
            "translate_frac = [0, 0]\nshear_deg = [0, 0]\n"
        )
        code, _, _ = run(["augment", sample, "--config", cfg, "--out", tmp_path / "o"], capsys)
        assert code == 0
        src = np.asarray(Image.open(sample.parent / "frame0.png"))
        assert np.array_equal(np.asarray(Image.open(tmp_path / "o" / f"{sample.stem}_aug0.png")), src)
        a, _ = frame_labels_from_json(json.loads(sample.read_text()))
        b, _ = frame_labels_from_json(json.loads((tmp_path / "o" / f"{sample.stem}_aug0.json").read_text()))
        assert a == b

    def test_default_keeps_partitions(self, sample, tmp_path, capsys):
        run(["augment", sample, "--count", 8, "--out", tmp_path / "o"], capsys)
        for k in range(8):
            labels, _ = frame_labels_from_json(json.loads((tmp_path / "o" / f"{sample.stem}_aug{k}.json").read_text()))
            check_partitions(labels)

    def test_missing_image(self, built, tmp_path, capsys):
        out, _ = built
        code, _, err = run(["augment", out / "video000_frame0001.json", "--out", tmp_path / "o"], capsys)
        assert code == 2 and "image" in err


def write_preds(path, images, catalog):
    path.write_text(json.dumps(instances_to_json(images, catalog)))
    return path


class TestEval:
    def test_self_eval(self, built, capsys):
        out, _ = built
        inst = out / "instances.json"
        code, stdout, err = run(["eval", inst, inst], capsys)
        assert code == 0
        doc = json.loads(stdout)
        assert doc["mpq"] == 1.0 and doc["matching"] == "union"
        assert doc["by_matching"]["visible"]["mpq"] == 1.0
        assert "mPQ" in err

    def test_empty_preds(self, built, tmp_path, capsys):
        out, _ = built
        empty = tmp_path / "empty.json"
        empty.write_text(json.dumps({"classes": ["book", "socks"], "images": {}}))
        code, stdout, _ = run(["eval", empty, out / "instances.json"], capsys)
        assert code == 0
        doc = json.loads(stdout)
        assert doc["mpq"] == 0.0
        assert {c["class"] for c in doc["classes"]} == {"book", "socks"}

    def test_point_four(self, tmp_path, capsys):
        cat = ClassCatalog(("book",))
        none = rect(20, 20, 0, 0, 0, 0)
        gt = [InstancePrediction(1, rect(20, 20, 0, 10, 0, 10), none, 1.0, 1)]
        pred = [
            InstancePrediction(1, rect(20, 20, 0, 10, 0, 6), none, 0.9, 1),
            InstancePrediction(1, rect(20, 20, 15, 18, 15, 18), none, 0.8, 2),
        ]
        g = write_preds(tmp_path / "gt.json", {"img": gt}, cat)
        p = write_preds(tmp_path / "pred.json", {"img": pred}, cat)
        code, stdout, _ = run(["eval", p, g, "--matching", "visible"], capsys)
        assert code == 0
        doc = json.loads(stdout)
        assert doc["matching"] == "visible"
        assert doc["classes"][0]["pq"] == pytest.approx(0.4, abs=1e-12)

    def test_unknown_class_name(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"classes": ["a"], "images": {"x": [
            {"class": "zebra", "visible": {"size": [2, 2], "counts": [4]},
             "occluded": {"size": [2, 2], "counts": [4]}}]}}))
        code, _, err = run(["eval", bad, bad], capsys)
        assert code == 2 and "zebra" in err


class TestPlan:
    def test_target(self, built, capsys):
        out, _ = built
        code, stdout, _ = run(["plan", out / "video000_frame0000.json", "--target", 1], capsys)
        assert code == 0
        doc = json.loads(stdout)
        assert [s["id"] for s in doc["steps"]] == [2, 1]
        assert [s["action"] for s in doc["steps"]] == ["move_to_obstacle_bin", "move_to_target_box"]
        assert doc["graph"]["edges"][0]["occluder"] == 2

    def test_random(self, built, capsys):
        out, _ = built
        code, stdout, _ = run(["plan", out / "video000_frame0000.json", "--random"], capsys)
        doc = json.loads(stdout)
        assert code == 0 and doc["steps"][0]["id"] == 2 and doc["degraded"] is False
        r, c = doc["steps"][0]["suction_point"][::-1]
        assert 8 <= r < 16 and 8 <= c < 16

    def test_instances_file_needs_image(self, built, capsys):
        out, _ = built
        code, _, err = run(["plan", out / "instances.json", "--random"], capsys)
        assert code == 2 and "--image" in err
        code, stdout, _ = run(["plan", out / "instances.json", "--random", "--image", "video000_frame0001"], capsys)
        assert code == 0 and json.loads(stdout)["steps"][0]["id"] == 2

    def test_unknown_target(self, built, capsys):
        out, _ = built
        code, _, err = run(["plan", out / "video000_frame0000.json", "--target", 9], capsys)
        assert code == 2 and "9" in err


class TestLosscheck:
    def test_default_passes(self, tmp_path, capsys):
        code, stdout, _ = run(["losscheck", "--trials", 10], capsys)
        assert code == 0
        doc = json.loads(stdout)
        assert doc["passed"] and len(doc["kernels"]) == 8
        assert max(r["worst_rel_error"] for r in doc["kernels"]) < 1e-5
        lams = [r["lambda"] for r in doc["lambda_sweep"]]
        assert lams == [1.0, 0.5, 0.25, 0.1]
        for r in doc["lambda_sweep"]:
            assert r["total"] == r["l_ins"] + r["lambda"] * r["l_sem"]

    def test_injected_sign_fails(self, capsys):
        code, stdout, err = run(["losscheck", "--trials", 3, "--inject-wrong-sign", "sigmoid_ce"], capsys)
        assert code == 1
        assert "sigmoid_ce" in err
        bad = [r for r in json.loads(stdout)["kernels"] if not r["passed"]]
        assert {r["kernel"] for r in bad} == {"sigmoid_ce"}

    def test_bad_sizes(self, capsys):
        with pytest.raises(SystemExit):
            main(["losscheck", "--sizes", "4x4"])

    def test_lambda_flag_joins_sweep(self, capsys):
        code, stdout, _ = run(["losscheck", "--trials", 2, "--lambda", 0.3, "--sizes", "3x3x2"], capsys)
        assert code == 0
        assert [r["lambda"] for r in json.loads(stdout)["lambda_sweep"]] == [1.0, 0.5, 0.3, 0.25, 0.1]


def test_out_flag_writes_file(built, tmp_path, capsys):
    out, _ = built
    target = tmp_path / "plan.json"
    code, stdout, _ = run(["plan", out / "video000_frame0000.json", "--target", 2, "--out", target], capsys)
    assert code == 0 and stdout == ""
    assert json.loads(target.read_text())["steps"][0]["id"] == 2
