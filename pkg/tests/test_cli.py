import csv
import json

import numpy as np
import pytest

from irt_ensemble.cli import build_parser, main, replay
from irt_ensemble.data import load_bundled
from irt_ensemble.ensemble import load_bundle, predict_batch


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    argv = ["train", "--data", "iris", "--trees", "50", "--iterations", "150", "--seed", "2",
            "--out", str(out)]
    assert main(argv) == 0
    return out, argv


class TestTrain:
    def test_outputs(self, trained, capsys):
        out, _ = trained
        summary = json.loads((out / "summary.json").read_text())
        assert summary["weights_sum"] == pytest.approx(1.0, abs=1e-12)
        assert len(summary["top_weights"]) == 5
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 2 and "--out" not in manifest["argv"]
        assert set(manifest["outputs"]) == {"model.json", "summary.json"}

    def test_rerun_is_byte_identical(self, trained, tmp_path):
        out, argv = trained
        assert main(argv[:-1] + [str(tmp_path)]) == 0
        assert (tmp_path / "model.json").read_bytes() == (out / "model.json").read_bytes()

    def test_model3_converges_on_separable_data(self, tmp_path):
        assert main(["train", "--checkerboard", "2", "200", "--engine", "model3",
                     "--trees", "15", "--out", str(tmp_path)]) == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["converged"] is True
        assert (tmp_path / "history.csv").exists()

    def test_stage_tagged_failure(self, tmp_path, capsys):
        assert main(["train", "--data", str(tmp_path / "missing.csv"), "--out",
                     str(tmp_path / "o")]) == 1
        assert "error [data]" in capsys.readouterr().err


class TestPredict:
    def test_labelled(self, trained, tmp_path):
        out, _ = trained
        assert main(["predict", "--model", str(out / "model.json"), "--data", "iris",
                     "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "predictions.csv")
        assert len(rows) == 150
        acc = json.loads((tmp_path / "summary.json").read_text())["accuracy"]
        _, expected = predict_batch(load_bundle(out / "model.json"), load_bundled("iris"))
        assert acc == expected
        assert np.mean([int(r["correct"]) for r in rows]) == pytest.approx(acc)

    def test_unlabelled(self, trained, tmp_path, write_csv):
        out, _ = trained
        text = "sepal_length,sepal_width,petal_length,petal_width\n5.1,3.5,1.4,0.2\n6.7,3.0,5.2,2.3\n"
        path = write_csv(text, "new.csv")
        assert main(["predict", "--model", str(out / "model.json"), "--data", str(path),
                     "--out", str(tmp_path / "p")]) == 0
        rows = read_csv(tmp_path / "p" / "predictions.csv")
        assert list(rows[0]) == ["row", "predicted"]
        assert json.loads((tmp_path / "p" / "summary.json").read_text())["accuracy"] is None

    def test_schema_mismatch(self, trained, tmp_path, write_csv, capsys):
        out, _ = trained
        path = write_csv("a,b\n1,2\n", "bad.csv")
        assert main(["predict", "--model", str(out / "model.json"), "--data", str(path),
                     "--out", str(tmp_path / "p")]) == 1
        assert "sepal_length" in capsys.readouterr().err


class TestRecoverCompare:
    def test_recover_rows(self, tmp_path):
        assert main(["recover", "--setting", "normal", "--classifiers", "60",
                     "--iterations", "60", "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "recovery_metrics.csv")
        assert len(rows) == 6
        for fam in ("theta", "beta"):
            assert sorted(r["engine"] for r in rows if r["parameter"] == fam) == \
                ["model1", "model2", "model3"]
        assert (tmp_path / "error_ratio_normal_beta.svg").exists()

    def test_compare_shapes_and_goal_difference(self, tmp_path):
        assert main(["compare", "--methods", "tree", "bagging-majority", "--trees", "5",
                     "--repetitions", "2", "--out", str(tmp_path)]) == 0
        acc = read_csv(tmp_path / "accuracy.csv")
        assert len(acc) == 6
        wins = read_csv(tmp_path / "win_table.csv")
        assert [w["method"] for w in wins] == ["tree", "bagging-majority"]
        means = {(r["dataset"], r["method"]): float(r["mean_accuracy"]) for r in acc}
        datasets = {d for d, _ in means}
        for w, other in zip(wins, ["bagging-majority", "tree"]):
            count = sum(means[d, w["method"]] >= means[d, other] for d in datasets)
            assert int(w[other]) == count
            assert int(w["goal_difference"]) == int(w["wins"]) - int(w["losses"])


class TestReplay:
    def test_threads_invariant(self, tmp_path):
        out = tmp_path / "r"
        assert main(["report", "--checkerboard", "2", "120", "--trees", "12",
                     "--iterations", "60", "--threads", "1", "--out", str(out)]) == 0
        result = replay(out / "manifest.json", threads=3)
        assert result and all(result.values())
        assert main(["replay", str(out / "manifest.json"), "--threads", "2"]) == 0

    def test_tampered_output_detected(self, tmp_path, capsys):
        out = tmp_path / "r"
        assert main(["train", "--checkerboard", "2", "80", "--engine", "model3",
                     "--trees", "4", "--out", str(out)]) == 0
        m = json.loads((out / "manifest.json").read_text())
        m["outputs"]["model.json"] = "0" * 64
        (out / "manifest.json").write_text(json.dumps(m))
        assert main(["replay", str(out / "manifest.json")]) == 1
        assert "DIFFERS" in capsys.readouterr().out

    def test_parser_requires_out(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["train", "--data", "iris"])
