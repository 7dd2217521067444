import json
import os
import subprocess
import sys

import pytest

from mixed_traffic import cli
from mixed_traffic.errors import ConfigError
from mixed_traffic.evaluate import evaluate
from mixed_traffic.metrics import read_report, summarize

TINY = {"demand": {"experiments": [1, 6], "total_vehicles": 40, "horizon": 40.0,
                   "penetrations": [1.0, 0.5]},
        "train": {"episodes": 1, "hidden": [16], "learning_starts": 20},
        "evaluation": {"runs": 2}}


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(TINY))
    return str(path), str(tmp_path / "out")


def run(*argv):
    return cli.main(list(argv))


def test_defaults_validate():
    cfg = cli.load_config(None)
    assert cfg["train"]["episodes"] == 150 and cfg["demand"]["penetrations"] == [1, 0.75, 0.5, 0.25]


def test_config_errors_name_the_field(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"demand": {"penetrations": [1.5]}}))
    assert run("baseline", "--config", str(bad)) == 2
    assert "penetrations" in capsys.readouterr().err
    bad.write_text(json.dumps({"train": {"learning_rate": 1}}))
    assert run("baseline", "--config", str(bad)) == 2
    assert run("baseline", "--penetration", "-0.1") == 2
    with pytest.raises(ConfigError):
        cli.validate_config({**cli.default_config(), "seed": "x"})


def test_missing_checkpoints_exit_3(tiny, capsys):
    cfg, out = tiny
    assert run("eval", "--config", cfg, "--out", out) == 3
    assert "experiment 1 at penetration 1.0" in capsys.readouterr().err
    assert run("eval", "--config", cfg, "--out", out, "--experiment", "1",
               "--penetration", "1", "--checkpoint", "/nonexistent.ckpt") == 3


def test_corrupt_checkpoint_exit_3(tiny, tmp_path):
    cfg, out = tiny
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"not a checkpoint")
    assert run("eval", "--config", cfg, "--out", out, "--experiment", "1",
               "--penetration", "1", "--checkpoint", str(junk)) == 3


def test_baseline_never_queries_policy():
    cfg = cli.load_config(None)
    cfg = cli._merge(cfg, TINY)
    specs = cli._specs(cfg, 1, 1.0, True, False, "baseline")
    assert all(r.queries == 0 for r in evaluate(specs, None))


def test_baseline_ignores_penetration(tiny):
    cfg, out = tiny
    w = []
    for pen in ("0", "1"):
        assert run("baseline", "--config", cfg, "--out", f"{out}{pen}", "--penetration", pen) == 0
        w.append([r.w_bar for r in read_report(f"{out}{pen}/baseline_report.csv")])
    assert w[0] == w[1]


def test_sweep_shape_and_determinism(tiny):
    cfg, out = tiny
    assert run("sweep", "--config", cfg, "--out", out, "--train-missing") == 0
    rows = read_report(os.path.join(out, "report.csv"))
    assert len(rows) == 2 * 3 * 2
    summary = summarize(rows)
    assert summary["columns"] == ["100%", "50%", "baseline"]
    assert len(summary["rows"]) == 2
    for name in ("train_exp1_p100.csv", "train_exp6_p050.csv"):
        assert os.path.exists(os.path.join(out, "logs", name))

    echo = os.path.join(out, "sweep_config.json")
    again = out + "_again"
    assert run("sweep", "--config", echo, "--out", again, "--train-missing") == 0
    for rel in ("report.csv", "report_summary.json", "logs/train_exp1_p100.csv",
                "checkpoints/exp6_p050.ckpt"):
        with open(os.path.join(out, rel), "rb") as a, open(os.path.join(again, rel), "rb") as b:
            assert a.read() == b.read(), rel


def test_eval_with_explicit_checkpoint(tiny):
    cfg, out = tiny
    assert run("train", "--config", cfg, "--out", out, "--experiment", "6",
               "--penetration", "0.5") == 0
    ckpt = os.path.join(out, "checkpoints", "exp6_p050.ckpt")
    assert run("eval", "--config", cfg, "--out", out, "--experiment", "6", "--penetration", "0.5",
               "--checkpoint", ckpt, "--trace") == 0
    rows = read_report(os.path.join(out, "eval_report.csv"))
    assert [r.seed for r in rows] == cli.eval_seeds(cli.load_config(cfg))
    assert len(os.listdir(os.path.join(out, "traces"))) == 2


def test_console_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "mixed_traffic.cli", "sweep", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "--train-missing" in out.stdout
