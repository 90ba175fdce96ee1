import json

import numpy as np
import pytest

from tpcnet.cli import main, pad_to_multiple
from tpcnet.config import SEED_ENV, RunConfig
from tpcnet.data import read_png, write_png
from tpcnet.physics import make_degraded_pairs


def test_run_config_defaults_and_rejection(tmp_path):
    cfg = RunConfig.from_dict({}, env={})
    assert cfg.train.lr_init == 2.5e-4 and cfg.network.base_channels == 12
    with pytest.raises(ValueError, match="bogus"):
        RunConfig.from_dict({"bogus": 1}, env={})
    desk = RunConfig.from_dict({"profile": "desk", "epochs": 5}, env={})
    assert desk.train.crop == 64 and desk.train.epochs == 5
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.load(path, env={}).to_dict() == cfg.to_dict()


def test_seed_env_override():
    cfg = RunConfig.from_dict({"seed": 1}, env={SEED_ENV: "42"})
    assert cfg.train.seed == 42


def test_pad_to_multiple():
    img = np.arange(3 * 20 * 18, dtype=np.float32).reshape(3, 20, 18)
    out = pad_to_multiple(img)
    assert out.shape == (3, 32, 32)
    assert np.array_equal(out[:, :20, :18], img)
    assert np.array_equal(out[:, 20, :18], img[:, 18, :])  # reflection, edge not repeated
    assert pad_to_multiple(np.zeros((3, 16, 32))).shape == (3, 16, 32)
    assert pad_to_multiple(np.zeros((3, 5, 5))).shape == (3, 16, 16)


@pytest.fixture
def dataset(tmp_path):
    root = tmp_path / "data"
    for i, (lo, hi) in enumerate(make_degraded_pairs(0, 2, 32, 32)):
        write_png(root / "low" / f"{i}.png", lo)
        write_png(root / "high" / f"{i}.png", hi)
    return root


def test_train_enhance_eval_end_to_end(tmp_path, dataset, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"base_channels": 4, "epochs": 1, "batch_size": 2, "crop": 16, "lr_init": 1e-3}))
    out = tmp_path / "run"
    assert main(["train", "--config", str(config), "--data", str(dataset), "--out", str(out)]) == 0
    assert (out / "final.ckpt").exists() and (out / "log.jsonl").exists()
    assert json.loads((out / "config.json").read_text())["base_channels"] == 4

    odd = tmp_path / "odd.png"
    write_png(odd, np.random.default_rng(0).random((3, 20, 28)))
    pred = tmp_path / "pred"
    rc = main(["enhance", "--ckpt", str(out / "final.ckpt"), "--input", str(odd), "--output", str(pred), "--save-sidebyside"])
    assert rc == 0
    assert read_png(pred / "odd.png").shape == (3, 20, 28)
    assert read_png(pred / "sidebyside" / "odd.png").shape == (3, 20, 56)

    assert main(["enhance", "--ckpt", str(out / "final.ckpt"), "--input", str(dataset / "low"), "--output", str(pred / "dir")]) == 0
    report = tmp_path / "report.jsonl"
    assert main(["eval", "--pred", str(pred / "dir"), "--gt", str(dataset / "high"), "--report", str(report)]) == 0
    lines = [json.loads(l) for l in report.read_text().splitlines()]
    assert lines[-1]["summary"] and lines[-1]["count"] == 2


def test_flops_command(capsys):
    assert main(["flops", "--height", "256", "--width", "256", "--channels", "64", "--heads", "4"]) == 0
    out = capsys.readouterr().out
    assert "ratio: 0.25" in out and str(256 * 256 * 64 * 64 // 8) in out
    assert main(["flops", "--height", "256", "--width", "256", "--channels", "64", "--heads", "5"]) != 0
    assert "divisible" in capsys.readouterr().err
    assert main(["flops", "--height", "64", "--width", "64", "--channels", "8", "--heads", "2", "--full-model"]) == 0
    assert "params" in capsys.readouterr().out


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["eval", "--pred", str(tmp_path), "--gt", str(tmp_path / "nope"), "--report", str(tmp_path / "r")]) != 0
    bad = tmp_path / "bad.json"
    bad.write_text('{"unknown_key": 1}')
    assert main(["train", "--config", str(bad), "--data", str(tmp_path), "--out", str(tmp_path / "o")]) != 0
    assert not (tmp_path / "o").exists()


@pytest.mark.slow
def test_selftest_command(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 6 and "FAIL" not in out
