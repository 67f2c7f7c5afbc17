import subprocess
import sys

import numpy as np
import pytest

from mpddsim import cli, experiments
from mpddsim.io import read_csv
from mpddsim.pda import NumericalFailure

SMALL = ["--override", "system.N=16", "--override", "channel.max_delay=6",
         "--override", "sim.layers=2", "--override", "sim.mx=3", "--override", "sim.mz=3",
         "--override", "optimizer.iterations=5", "--override", "experiment.trials=2",
         "--override", "detector.iterations=5"]


def test_ber_run_and_seed(tmp_path):
    out = tmp_path / "ber.csv"
    assert cli.main(["ber", "--out", str(out), "--seed", "9"] + SMALL) == 0
    pts = read_csv(out)
    assert len(pts) == 3 * 3 * 3  # waveforms x default arms x default SNRs
    other = tmp_path / "ber2.csv"
    cli.main(["ber", "--out", str(other), "--seed", "10"] + SMALL)
    assert out.read_bytes() != other.read_bytes()


def test_channel_dump_writes_npz(tmp_path):
    out = tmp_path / "dump.csv"
    assert cli.main(["channel-dump", "--out", str(out)] + SMALL) == 0
    grids = np.load(tmp_path / "dump.npz")
    assert "ofdm_nosim" in grids and grids["afdm_sim"].shape == (32, 16)


def test_config_errors_exit_2(tmp_path, capsys):
    assert cli.main(["ber", "--override", "sim.nope=1"]) == 2
    assert "config error" in capsys.readouterr().err
    assert cli.main(["ber", "--config", str(tmp_path / "missing.toml")]) == 2
    assert cli.main(["ber", "--threads", "0"]) == 2
    assert cli.main(["mse", "--out", str(tmp_path / "m.csv"), "--override", "system.n_rx=2"]
                    + SMALL) == 2


def test_numerical_failure_exit_3(monkeypatch, tmp_path):
    def boom(*a, **k):
        raise NumericalFailure("singular")
    monkeypatch.setattr(experiments, "run_ber_experiment", boom)
    assert cli.main(["ber", "--out", str(tmp_path / "x.csv")]) == 3


def test_module_entry_point(tmp_path):
    out = tmp_path / "opt.csv"
    r = subprocess.run([sys.executable, "-m", "mpddsim", "optimize", "--out", str(out)] + SMALL,
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert {p.arm for p in read_csv(out)} == {"comm", "sensing"}
    r = subprocess.run([sys.executable, "-m", "mpddsim", "nonsense"], capture_output=True)
    assert r.returncode == 2
