import csv
import subprocess
import sys

import pytest

from cnneq.cli import DEFAULTS, EXIT_CONFIG, EXIT_INFEASIBLE, main, validate_config, yaml_load
from cnneq.errors import ConfigurationError

SMALL = ["--set", "training.iterations=20", "--set", "training.eval_symbols=4000", "--set", "model.v_p=2", "--set", "model.channels=2"]


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(l for l in fh if not l.startswith("#")))


def test_yaml_floats():
    assert yaml_load("a: 2e12")["a"] == 2e12


def test_unknown_key_rejected():
    cfg = dict(DEFAULTS, bogus=1)
    with pytest.raises(ConfigurationError, match="bogus"):
        validate_config(cfg)


def test_schema_error_exit_code(tmp_path, capsys):
    rc = main(["timing", "--out", str(tmp_path), "--set", "hardware.n_j=4"])
    assert rc == EXIT_CONFIG
    assert "hardware" in capsys.readouterr().err


def test_timing(tmp_path):
    assert main(["timing", "--out", str(tmp_path), "--set", "hardware.o_act=1024"]) == 0
    row = _rows(tmp_path / "timing.csv")[0]
    assert float(row["t_max"]) == 102.4e9
    assert abs(float(row["t_net"]) / 80e9 - 1) < 1e-3
    assert (tmp_path / "resolved_config.yaml").exists()


def test_lutgen(tmp_path):
    rc = main(["lutgen", "--out", str(tmp_path), "--set", "hardware.o_act=1024", "--set", "hardware.t_req=[80e9, 1e12]"])
    assert rc == 0
    rows = _rows(tmp_path / "lut.csv")
    assert rows[0]["l_inst"] == "7320" and rows[1]["l_inst"] == "infeasible"


def test_lutgen_infeasible(tmp_path):
    assert main(["lutgen", "--out", str(tmp_path), "--set", "hardware.t_req=[1e12]"]) == EXIT_INFEASIBLE


def test_train_is_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--out", str(a), "--seed", "5"] + SMALL) == 0
    assert main(["train", "--out", str(b), "--seed", "5"] + SMALL) == 0
    for name in ("summary.csv", "train_log_seed5.csv", "model_seed5.ckpt", "resolved_config.yaml"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert main(["evaluate", "--out", str(tmp_path / "e"), "--checkpoint", str(a / "model_seed5.ckpt"), "--set", "evaluate.n_symbols=4000"] + SMALL) == 0
    assert main(["dump", "--checkpoint", str(a / "model_seed5.ckpt"), "--out", str(tmp_path / "d")]) == 0


def test_simulate_writes_dataset(tmp_path):
    assert main(["simulate", "--out", str(tmp_path), "--seed", "2", "--set", "simulate.n_symbols=500", "--set", "simulate.csv=true"]) == 0
    assert (tmp_path / "dataset_seed2.bin").exists()
    assert len(_rows(tmp_path / "dataset_seed2.csv")) == 1000


def test_hwsim_bit_exact(tmp_path):
    rc = main(
        ["hwsim", "--out", str(tmp_path), "--set", "hardware.n_i=4", "--set", "hardware.l_inst=1024",
         "--set", "hardware.stream_samples=20000", "--set", "hardware.l_inst_sweep=[1024]"]
    )
    assert rc == 0
    assert _rows(tmp_path / "hwsim.csv")[0]["mismatches"] == "0"


def test_dse_desk_row_count(tmp_path):
    rc = main(
        ["dse", "--out", str(tmp_path), "--seed", "1", "--preset", "desk",
         "--set", "training.iterations=3", "--set", "training.eval_symbols=2000"]
    )
    assert rc == 0
    # 2 x 1 x 1 x 2 CNN configs, 15 FIR, 3 Volterra
    assert len(_rows(tmp_path / "points.csv")) == 22
    assert (tmp_path / "front.csv").exists() and (tmp_path / "dse.dat").exists()


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "cnneq.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "cnneq" in out.stdout


def test_channel_defaults_follow_kind(tmp_path):
    assert main(["timing", "--out", str(tmp_path), "--set", "channel.kind=imdd_surrogate"]) == 0
    resolved = yaml_load((tmp_path / "resolved_config.yaml").read_text())
    assert resolved["channel"]["snr_db"] == 30.0
    assert resolved["channel"]["dispersion_ps_per_nm"] == 300.0
