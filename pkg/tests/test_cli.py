import json

import numpy as np
import pytest

from axmul.cli import EXIT_INVALID, EXIT_MISSING, EXIT_USAGE, build_parser, main
from axmul.nn import lenet5, save_weights
from axmul.nn.archive import load_tensors, load_weights

COMMANDS = [
    ("mul", "characterize"), ("mul", "metrics"), ("nn", "train"), ("nn", "eval"), ("conv", "similarity"),
    ("attack", "craft"), ("attack", "transfer"), ("report", "confidence"), ("report", "whitebox"),
]


def error_line(capsys):
    lines = capsys.readouterr().err.strip().splitlines()
    return json.loads(lines[-1])


@pytest.fixture(scope="module")
def weights_file(tmp_path_factory, small_model):
    path = tmp_path_factory.mktemp("w") / "w.axtf"
    save_weights(small_model[1], path, small_model[0])
    return path


class TestHelp:
    @pytest.mark.parametrize("group,command", COMMANDS)
    def test_lists_every_flag(self, capsys, group, command):
        assert main([group, command, "--help"]) == 0
        text = capsys.readouterr().out
        parser = build_parser()
        sub = parser._subparsers._group_actions[0].choices[group]
        leaf = sub._subparsers._group_actions[0].choices[command]
        for action in leaf._actions:
            for flag in action.option_strings:
                assert flag in text
        assert "default:" in text


class TestMul:
    def test_characterize(self, tmp_path):
        out = tmp_path / "noise.csv"
        assert main(["mul", "characterize", "--backend", "ama5", "--samples", "2000", "--range", "0", "1",
                     "--seed", "7", "--out", str(out)]) == 0
        assert out.read_text().splitlines()[0] == "index,x,y,exact,approx,error"
        assert len(out.read_text().splitlines()) == 2001
        doc = json.loads(out.with_suffix(".json").read_text())
        assert doc["seed"] == 7 and doc["config"]["samples"] == 2000
        assert out.with_suffix(".png").exists()

    def test_metrics_without_figure(self, tmp_path):
        out = tmp_path / "m.json"
        assert main(["mul", "metrics", "--backend", "exact-fpm", "--samples", "1000", "--seed", "1",
                     "--out", str(out), "--no-figure"]) == 0
        doc = json.loads(out.read_text())
        assert doc["summary"]["mred"] == 0 and doc["summary"]["nmed"] == 0
        assert sorted(p.name for p in tmp_path.iterdir()) == ["m.json"]

    def test_seed_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AXM_SEED", "7")
        out = tmp_path / "env.csv"
        assert main(["mul", "characterize", "--samples", "500", "--out", str(out), "--no-figure"]) == 0
        ref = tmp_path / "flag.csv"
        monkeypatch.delenv("AXM_SEED")
        assert main(["mul", "characterize", "--samples", "500", "--seed", "7", "--out", str(ref),
                     "--no-figure"]) == 0
        assert out.read_bytes() == ref.read_bytes()

    def test_seed_required(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv("AXM_SEED", raising=False)
        assert main(["mul", "characterize", "--out", str(tmp_path / "x.csv")]) == EXIT_USAGE
        assert error_line(capsys)["error"] == "usage"

    def test_directory_output(self, tmp_path):
        assert main(["mul", "characterize", "--samples", "100", "--seed", "3", "--out", str(tmp_path),
                     "--no-figure"]) == 0
        assert (tmp_path / "noise-seed3.csv").exists() and (tmp_path / "noise-seed3.json").exists()


class TestErrors:
    def test_unknown_flag(self, capsys):
        assert main(["mul", "characterize", "--bogus"]) == EXIT_USAGE
        assert error_line(capsys)["error"] == "usage"

    def test_missing_file(self, tmp_path, capsys):
        code = main(["nn", "eval", "--weights", str(tmp_path / "nope.axtf"), "--data", str(tmp_path),
                     "--out", str(tmp_path / "e.csv")])
        assert code == EXIT_MISSING
        assert error_line(capsys)["error"] == "missing_file"

    def test_missing_output_directory(self, tmp_path, capsys):
        code = main(["mul", "metrics", "--seed", "1", "--out", str(tmp_path / "no" / "m.json")])
        assert code == EXIT_MISSING

    def test_invalid_input(self, tmp_path, capsys):
        assert main(["mul", "metrics", "--seed", "1", "--range", "1", "0", "--out", str(tmp_path / "m.json")]) \
            == EXIT_INVALID
        assert error_line(capsys)["error"] == "invalid_input"

    def test_corrupt_weights(self, tmp_path, data_dir, capsys):
        bad = tmp_path / "bad.axtf"
        bad.write_bytes(b"AXTF\x01")
        code = main(["nn", "eval", "--weights", str(bad), "--data", str(data_dir),
                     "--out", str(tmp_path / "e.csv")])
        assert code == EXIT_INVALID

    def test_distinct_codes(self):
        assert len({EXIT_USAGE, EXIT_MISSING, EXIT_INVALID}) == 3


class TestNn:
    def test_train(self, tmp_path, data_dir):
        out = tmp_path / "w.axtf"
        model_file = tmp_path / "lenet.json"
        lenet5().save(model_file)
        args = ["nn", "train", "--model", str(model_file), "--data", str(data_dir), "--epochs", "1",
                "--lr", "0.05", "--train-samples", "64", "--seed", "1", "--out", str(out)]
        assert main(args) == 0
        w = load_weights(out, lenet5())
        assert set(w) == set(lenet5().param_shapes())
        first = out.read_bytes()
        assert main(args) == 0
        assert out.read_bytes() == first

    def test_eval(self, tmp_path, data_dir, weights_file):
        out = tmp_path / "acc.csv"
        assert main(["nn", "eval", "--weights", str(weights_file), "--data", str(data_dir),
                     "--backends", "exact,bf16", "--samples", "64", "--out", str(out)]) == 0
        doc = json.loads(out.with_suffix(".json").read_text())
        assert doc["summary"]["exact"]["accuracy"] > 0.5
        assert set(doc["summary"]) == {"exact", "bf16"}


class TestAttack:
    def test_craft_and_transfer(self, tmp_path, data_dir, weights_file):
        adv = tmp_path / "adv.axtf"
        assert main(["attack", "craft", "--weights", str(weights_file), "--data", str(data_dir),
                     "--method", "pgd", "--epsilon", "0.2", "--alpha", "0.05", "--iters", "3",
                     "--samples", "12", "--out", str(adv)]) == 0
        t = load_tensors(adv)
        assert t["x"].shape == t["x_star"].shape == (12, 1, 28, 28)
        assert np.abs(t["x_star"] - t["x"]).max() <= 0.2 + 1e-6
        out = tmp_path / "t.json"
        assert main(["attack", "transfer", "--adv", str(adv), "--weights", str(weights_file),
                     "--backend", "ama5", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["config"]["attack"] == {"method": "pgd", "epsilon": 0.2, "alpha": 0.05, "iterations": 3}
        assert doc["summary"]["exact"]["success_rate"] == 1.0
        assert 0 <= doc["summary"]["ama5"]["success_rate"] <= 1
        assert out.with_suffix(".csv").exists() and out.with_suffix(".png").exists()

    def test_transfer_rejects_incomplete_archive(self, tmp_path, weights_file, capsys):
        from axmul.nn.archive import save_tensors
        adv = tmp_path / "adv.axtf"
        save_tensors({"x": np.zeros((1, 1, 28, 28), dtype=np.float32)}, adv)
        assert main(["attack", "transfer", "--adv", str(adv), "--weights", str(weights_file),
                     "--out", str(tmp_path / "t.json")]) == EXIT_INVALID


class TestReports:
    def test_conv_similarity(self, tmp_path):
        out = tmp_path / "sim.csv"
        assert main(["conv", "similarity", "--backend", "ama5", "--out", str(out)]) == 0
        assert out.read_text().splitlines()[0] == "rank,patch,similarity,exact,approx,gap"
        assert json.loads(out.with_suffix(".json").read_text())["summary"]["approx_ge_exact"] == 6

    def test_confidence(self, tmp_path, data_dir, weights_file):
        out = tmp_path / "conf.csv"
        assert main(["report", "confidence", "--weights", str(weights_file), "--data", str(data_dir),
                     "--samples", "32", "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 22

    def test_whitebox(self, tmp_path, data_dir, weights_file):
        out = tmp_path / "wb.csv"
        assert main(["report", "whitebox", "--weights", str(weights_file), "--data", str(data_dir),
                     "--samples", "3", "--schedule", "0.1,0.3", "--iters", "2", "--out", str(out)]) == 0
        doc = json.loads(out.with_suffix(".json").read_text())
        assert doc["summary"]["schedule"] == [0.1, 0.3]
        assert len(doc["config"]["test_indices"]) == 3

    def test_bad_schedule(self, tmp_path, data_dir, weights_file):
        assert main(["report", "whitebox", "--weights", str(weights_file), "--data", str(data_dir),
                     "--schedule", "a,b", "--out", str(tmp_path / "wb.csv")]) == EXIT_USAGE
