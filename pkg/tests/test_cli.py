import csv
import shutil
import subprocess
import sys

import pytest

from gnnjed.cli import CliError, main, parse_grid, parse_range, parse_taps
from gnnjed.nn.checkpoint import load_checkpoint


def test_latency_gnn_flood(capsys):
    assert main(["latency", "--receiver", "gnn-flood", "--iters", "12"]) == 0
    assert capsys.readouterr().out.strip() == "144"


def test_latency_bcjr_default_frame(capsys):
    assert main(["latency", "--receiver", "bcjr"]) == 0
    assert capsys.readouterr().out.strip() == "138"


def test_eval_bcjr_grid(tmp_path, capsys):
    out = tmp_path / "bcjr.csv"
    rc = main(["eval", "--receiver", "bcjr", "--snr", "10:14:1", "--n-symbols", "20", "--min-errors", "5",
               "--max-frames", "200", "--batch-size", "100", "--workers", "1", "--out", str(out)])
    assert rc == 0
    rows = list(csv.DictReader(out.open()))
    assert [float(r["snr_db"]) for r in rows] == [10, 11, 12, 13, 14]
    assert all(r["receiver"] == "bcjr" for r in rows)
    assert (tmp_path / "bcjr.csv.manifest.json").exists()


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("GNNJED_OUTPUT_DIR", str(tmp_path))
    assert main(["eval", "--receiver", "bp", "--snr", "8", "--n-symbols", "10", "--iters", "2", "--max-frames",
                 "100", "--out", "bp.csv"]) == 0
    assert (tmp_path / "bp.csv").exists()


def test_train_eq_zero_steps_writes_checkpoint(tmp_path):
    out = tmp_path / "eq.ckpt"
    assert main(["train-eq", "--steps", "0", "--n-symbols", "8", "--channel", "0.6,0.8", "--feature-size", "4",
                 "--out", str(out)]) == 0
    arrays, meta = load_checkpoint(out)
    assert meta["steps"] == 0 and arrays
    # the checkpoint drives a GNN evaluation
    assert main(["eval", "--receiver", "gnn", "--checkpoint", str(out), "--channel", "0.6,0.8", "--n-symbols", "8",
                 "--iters", "2", "--snr", "6", "--max-frames", "50", "--out", str(tmp_path / "g.csv")]) == 0


def test_manifest_rerun_is_bit_exact(tmp_path):
    first = tmp_path / "a.csv"
    assert main(["eval", "--receiver", "bp", "--channel", "proakis-b", "--snr", "6:8:1", "--n-symbols", "16",
                 "--iters", "3", "--min-errors", "20", "--max-frames", "400", "--seed", "4", "--out",
                 str(first)]) == 0
    second = tmp_path / "b.csv"
    assert main(["eval", "--from-manifest", str(first) + ".manifest.json", "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_config_file_supplies_options(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[run]\nchannel = 1.0\nn_symbols = 12\n\n[train]\nsteps = 0\nfeature_size = 4\n")
    out = tmp_path / "eq.ckpt"
    assert main(["train-eq", "--config", str(ini), "--out", str(out)]) == 0
    _, meta = load_checkpoint(out)
    assert meta["config"]["n_symbols"] == 12 and meta["taps"] == [1.0]


@pytest.mark.parametrize("argv", [
    ["eval", "--receiver", "bcjr"],
    ["eval", "--receiver", "bcjr", "--snr", "5:1:1"],
    ["eval", "--receiver", "nbp", "--snr", "5"],
    ["latency", "--receiver", "gnn"],
    ["latency", "--receiver", "nope"],
    ["eval", "--receiver", "bcjr", "--snr", "5", "--channel", "a,b"],
    ["frobnicate"],
])
def test_errors_are_single_line_exit_2(argv, capsys):
    assert main(argv) == 2
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and err.startswith("gnnjed: error:")


def test_incompatible_checkpoint(tmp_path, capsys):
    out = tmp_path / "eq.ckpt"
    main(["train-eq", "--steps", "0", "--n-symbols", "8", "--channel", "0.6,0.8", "--feature-size", "4", "--out",
          str(out)])
    capsys.readouterr()
    assert main(["eval", "--receiver", "gnn", "--checkpoint", str(out), "--channel", "proakis-c", "--n-symbols",
                 "8", "--snr", "6", "--out", str(tmp_path / "x.csv")]) == 2
    assert "incompatible checkpoint" in capsys.readouterr().err


def test_parsers():
    assert parse_grid("10:14:1") == [10, 11, 12, 13, 14]
    assert parse_grid("3,5") == [3, 5]
    assert parse_range("10:13") == (10, 13)
    assert parse_taps("proakis-b").tolist() == [0.407, 0.815, 0.407]
    with pytest.raises(CliError):
        parse_taps("0,0")


@pytest.mark.skipif(shutil.which("gnnjed") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["gnnjed", "latency", "--receiver", "bcjr"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "138"
    res = subprocess.run([sys.executable, "-m", "gnnjed.cli", "eval"], capture_output=True, text=True)
    assert res.returncode == 2
