import json
import logging

import numpy as np
import pytest

from gaitgraph.cli import run
from gaitgraph.features import read_feature_dump
from gaitgraph.pose_io import read_index


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert run(["gen-synth", "--classes", "3", "--seqs-per-class", "4", "--frames", "20", "--seed", "7",
                "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def trained(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = out / "cfg.toml"
    cfg.write_text("[model]\nblocks = [[8, 1], [16, 2]]\nembedding_dim = 8\ntemporal_kernel = 3\n"
                   "[train]\nepochs = 5\nt_fixed = 16\nresample_periods = [1]\n")
    code = run(["train", "--config", str(cfg), "--index", str(synth_dir / "train.json"), "--batch-size", "6",
                "--epochs", "2", "--seed", "3", "--bits", "64", "--out-dir", str(out)])
    assert code == 0
    return out


def test_gen_synth_outputs_and_determinism(synth_dir, tmp_path):
    entries = read_index(synth_dir / "index.json")
    assert len(entries) == 12
    assert len(read_index(synth_dir / "train.json")) == 9
    assert len(read_index(synth_dir / "gallery.json")) == 3 and len(read_index(synth_dir / "probe.json")) == 0
    assert run(["gen-synth", "--classes", "3", "--seqs-per-class", "4", "--frames", "20", "--seed", "7",
                "--out", str(tmp_path)]) == 0
    for e in entries:
        assert (tmp_path / e.path).read_bytes() == (synth_dir / e.path).read_bytes()


def test_extract_features(synth_dir, tmp_path):
    out = tmp_path / "feat.ggf"
    assert run(["extract-features", "--index", str(synth_dir / "index.json"), "--t-fixed", "16",
                "--out", str(out)]) == 0
    ft = read_feature_dump(out)
    assert ft.data.shape == (12, 20, 16, 18)
    assert (tmp_path / "feat.ggf.json").exists()


def test_train_flags_override_config_and_log(trained, caplog):
    cfg = json.loads((trained / "config.json").read_text())
    assert cfg["train"]["epochs"] == 2 and cfg["train"]["seed"] == 3 and cfg["train"]["float64"] is True
    assert cfg["model"]["temporal_kernel"] == 3
    assert (trained / "model.ckpt").exists() and (trained / "history.csv").exists()


def test_resolved_config_is_logged(synth_dir, tmp_path, caplog):
    with caplog.at_level(logging.INFO, logger="gaitgraph"):
        run(["extract-features", "--index", str(synth_dir / "index.json"), "--seed", "11", "--t-fixed", "16",
             "--out", str(tmp_path / "f.ggf")])
    assert "resolved config" in caplog.text and '"seed": 11' in caplog.text


def test_embed_and_eval(synth_dir, trained, tmp_path, capsys):
    assert run(["embed", "--checkpoint", str(trained / "model.ckpt"), "--index", str(synth_dir / "test.json"),
                "--t-fixed", "16", "--out", str(tmp_path / "emb.json")]) == 0
    emb = json.loads((tmp_path / "emb.json").read_text())
    assert len(emb) == 3 and len(emb[0]["vector"]) == 8
    assert abs(np.linalg.norm(emb[0]["vector"]) - 1) < 1e-6
    for order in ("sort", "shuffle"):
        code = run(["eval", "--checkpoint", str(trained / "model.ckpt"), "--gallery", str(synth_dir / "gallery.json"),
                    "--probe", str(synth_dir / "train.json"), "--t-fixed", "16", "--test-order", order,
                    "--seed", "1", "--out-dir", str(tmp_path), "--stem", order])
        assert code == 0
    doc = json.loads((tmp_path / "sort.json").read_text())
    assert doc["counts"] == [[9]]


def test_eval_is_reproducible(synth_dir, trained, tmp_path):
    args = ["eval", "--checkpoint", str(trained / "model.ckpt"), "--gallery", str(synth_dir / "gallery.json"),
            "--probe", str(synth_dir / "train.json"), "--t-fixed", "16", "--test-order", "shuffle", "--seed", "4"]
    run(args + ["--out-dir", str(tmp_path / "a")])
    run(args + ["--out-dir", str(tmp_path / "b")])
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_report_single_and_delta(trained, synth_dir, tmp_path, capsys):
    for order in ("sort", "shuffle"):
        run(["eval", "--checkpoint", str(trained / "model.ckpt"), "--gallery", str(synth_dir / "gallery.json"),
             "--probe", str(synth_dir / "train.json"), "--t-fixed", "16", "--test-order", order,
             "--out-dir", str(tmp_path), "--stem", order])
    capsys.readouterr()
    assert run(["report", str(tmp_path / "sort.json")]) == 0
    out = capsys.readouterr().out
    mean = json.loads((tmp_path / "sort.json").read_text())["overall_mean"]
    assert f"{100 * mean:.2f}%" in out
    assert run(["report", str(tmp_path / "sort.json"), str(tmp_path / "shuffle.json")]) == 0
    assert "delta" in capsys.readouterr().out


def test_report_history_and_plot(trained, tmp_path, capsys):
    pytest.importorskip("matplotlib")
    png = tmp_path / "loss.png"
    assert run(["report", "--history", str(trained / "history.csv"), "--plot", str(png)]) == 0
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_report_malformed_csv_exit_2_with_line(tmp_path, capsys):
    p = tmp_path / "history.csv"
    p.write_text("epoch,step,lr,loss\n0,0,0.001,2.5\n0,1,oops,2.4\n")
    assert run(["report", "--history", str(p)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_missing_files_are_data_errors(tmp_path):
    assert run(["report", str(tmp_path / "nope.json")]) == 2
    assert run(["train", "--index", str(tmp_path / "nope.json"), "--out-dir", str(tmp_path)]) == 2
    assert run(["embed", "--checkpoint", str(tmp_path / "x.ckpt"), "--index", str(tmp_path / "i.json"),
                "--out", str(tmp_path / "e.json")]) == 2


def test_usage_errors_exit_1(capsys):
    assert run(["train", "--no-such-flag"]) == 1
    assert "usage" in capsys.readouterr().err
    assert run([]) == 1
    assert run(["frobnicate"]) == 1
    assert run(["grad-check", "--bits", "32"]) == 1
    assert run(["report"]) == 1


def test_help_exits_0():
    assert run(["--help"]) == 0


def test_grad_check_command(capsys):
    assert run(["grad-check", "--bits", "64", "--no-composite"]) == 0
    out = capsys.readouterr().out
    assert "conv_temporal_s2" in out and "FAIL" not in out


def test_grad_check_failure_exit_3(monkeypatch, capsys):
    import gaitgraph.cli as cli

    monkeypatch.setattr(cli, "run_grad_checks", lambda **kw: {"bad_op": 0.5, "good_op": 1e-9})
    assert run(["grad-check"]) == 3
    assert "FAIL" in capsys.readouterr().out


def test_numerical_failure_exit_3(synth_dir, tmp_path, monkeypatch):
    import gaitgraph.train as train_mod

    monkeypatch.setattr(train_mod, "supcon_loss", lambda z, labels, t: z.sum() * float("nan"))
    code = run(["train", "--index", str(synth_dir / "train.json"), "--batch-size", "6", "--epochs", "1",
                "--kernel", "3", "--blocks", "reduced", "--out-dir", str(tmp_path)])
    assert code == 3


def test_log_level_env(monkeypatch, synth_dir, tmp_path, capsys):
    monkeypatch.setenv("GAITGRAPH_LOG", "WARNING")
    run(["extract-features", "--index", str(synth_dir / "index.json"), "--t-fixed", "16",
         "--out", str(tmp_path / "f.ggf")])
    assert logging.getLogger("gaitgraph").level == logging.WARNING
    monkeypatch.setenv("GAITGRAPH_LOG", "INFO")
    run(["extract-features", "--index", str(synth_dir / "index.json"), "--t-fixed", "16",
         "--out", str(tmp_path / "f.ggf")])
    assert logging.getLogger("gaitgraph").level == logging.INFO
