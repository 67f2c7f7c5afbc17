"""End-to-end acceptance checks, one test per criterion.

Each test records its criterion number so the terminal summary prints a
single PASS/FAIL line per criterion. Run with ``pytest tests/test_acceptance.py``.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import norm

from conftest import crandn
from mpddsim.arrays import UlaGeometry
from mpddsim.channel import (PathSet, afdm_phase, conventional_mimo_channel, sample_paths,
                             zero_phase)
from mpddsim.config import load
from mpddsim.experiments import (build_scenario, draw_paths, mse_trial, run_ber_experiment,
                                 run_mse_experiment)
from mpddsim.gabp import detect
from mpddsim.metasurfaces import SimStack
from mpddsim.simopt import (AscentConfig, SimProblem, gradients, objective_value, optimize_comm,
                            optimize_sensing, path_powers, select_min_path)
from mpddsim.waveforms import (FrameSpec, default_c1, demod_transform, demodulate,
                               effective_channel, modulate, qpsk_demap, qpsk_map)

from test_channel import brute_force
from test_simopt import finite_difference

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
LAM = 3e8 / 28e9
RADAR = ["system.N=144", "system.k_delay=12", "system.k_doppler=12", "system.n_rx=1",
         "channel.paths=2", "channel.target_ranges=[37.5, 97.5]",
         "channel.target_velocities=[-54.0, 54.0]"]


@pytest.fixture
def criterion(record_property):
    def mark(num, detail=""):
        record_property("criterion", num)
        record_property("detail", detail)
    return mark


def spec(kind, N):
    return FrameSpec(kind, N, c1=default_c1(2.0, N) if kind == "afdm" else 0.0)


def test_c01_waveform_unitarity(criterion):
    criterion(1)
    t0 = time.perf_counter()
    worst = 0.0
    rng = np.random.default_rng(1)
    for N in (16, 144, 256):
        for kind in ("ofdm", "otfs", "afdm"):
            s = spec(kind, N)
            T = demod_transform(s)
            worst = max(worst, np.abs(T @ T.conj().T - np.eye(N)).max())
            x = crandn(rng, N)
            worst = max(worst, np.abs(demodulate(s, modulate(s, x)) - x).max())
    elapsed = time.perf_counter() - t0
    criterion(1, f"max error {worst:.1e}, {elapsed:.2f}s")
    assert worst < 1e-10
    assert elapsed < 5


def test_c02_sandwich_equivalence(criterion):
    criterion(2)
    t0 = time.perf_counter()
    worst = 0.0
    for kind in ("ofdm", "otfs", "afdm"):
        for seed in range(50):
            rng = np.random.default_rng([2, seed])
            N = 64 if seed % 2 else 16
            n_tx, n_rx = (1, 1) if seed % 3 == 0 else (2, 2)
            s = spec(kind, N)
            ps = sample_paths(5, 14, 2.0, rng)
            td = conventional_mimo_channel(ps, UlaGeometry(n_tx), UlaGeometry(n_rx), N, s.phase_fn)
            x = crandn(rng, n_tx * N)
            lhs = demodulate(s, td.matrix @ modulate(s, x))
            rhs = effective_channel(td, s).matrix @ x
            worst = max(worst, np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))
    elapsed = time.perf_counter() - t0
    criterion(2, f"max relative error {worst:.1e}, {elapsed:.1f}s")
    assert worst < 1e-9
    assert elapsed < 30


def test_c03_brute_force_channel(criterion):
    criterion(3)
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng([3, seed])
        N = (16, 32, 64)[seed % 3]
        ps = sample_paths(4, 14, 2.0, rng).direct
        phase_fn = afdm_phase(default_c1(2.0, N), N) if seed % 2 else zero_phase
        H = conventional_mimo_channel(PathSet(ps), UlaGeometry(1), UlaGeometry(1), N, phase_fn)
        s = crandn(rng, N)
        ref = brute_force(ps, s, phase_fn)
        worst = max(worst, np.linalg.norm(H.matrix @ s - ref) / np.linalg.norm(ref))
    criterion(3, f"max relative error {worst:.1e}")
    assert worst < 1e-9


def test_c04_gradients(criterion):
    criterion(4)
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng([4, seed])
        tx = SimStack.from_wavelengths("tx", 2, 3, 3, 2, LAM)
        rx = SimStack.from_wavelengths("rx", 2, 3, 3, 2, LAM)
        prob = SimProblem.from_paths(sample_paths(3, 5, 1.0, rng), tx, rx)
        Z, Zr = rng.uniform(-np.pi, np.pi, (2, 2, 9))
        for kind in ("communication", "sensing"):
            path = select_min_path(prob.components(Z, Zr)) if kind == "sensing" else None
            for g, f in zip(gradients(prob, Z, Zr, kind, path),
                            finite_difference(prob, Z, Zr, kind, path)):
                worst = max(worst, np.linalg.norm(g - f) / np.linalg.norm(f))
    elapsed = time.perf_counter() - t0
    criterion(4, f"max relative error {worst:.1e}, {elapsed:.1f}s")
    assert worst < 1e-5
    assert elapsed < 60


def test_c05_optimizer_dominance(criterion):
    criterion(5)
    t0 = time.perf_counter()
    cfg = load(overrides=["sim.layers=3", "sim.mx=7", "sim.mz=7"])
    scen = build_scenario(cfg)
    acfg = AscentConfig()
    comm_wins = sens_wins = 0
    for seed in range(100):
        paths = draw_paths(cfg, seed)
        prob = SimProblem.from_paths(paths, scen.tx, scen.rx)
        res = optimize_comm(prob, acfg)
        Z0, Zr0 = scen.tx.zero_phases(), scen.rx.zero_phases()
        comm_wins += objective_value(prob, res.tx_phases, res.rx_phases) > objective_value(prob, Z0, Zr0)
        sprob = SimProblem.from_paths(paths, scen.tx, scen.rx, unit_gains=True)
        sres = optimize_sensing(sprob, acfg)
        before = path_powers(sprob.components(Z0, Zr0)).min()
        after = path_powers(sprob.components(sres.tx_phases, sres.rx_phases)).min()
        sens_wins += after > before
    elapsed = time.perf_counter() - t0
    criterion(5, f"comm {comm_wins}/100, sensing {sens_wins}/100, {elapsed:.0f}s")
    assert comm_wins >= 95
    assert sens_wins >= 90
    assert elapsed < 300


def test_c06_detector_oracles(criterion):
    criterion(6)
    rng = np.random.default_rng(6)
    bits = rng.integers(0, 2, 100_000)
    errors = 0
    for chunk in np.split(bits, 400):
        x = qpsk_map(chunk)
        y = x + np.sqrt(1e-9 / 2) * (rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size))
        errors += np.count_nonzero(qpsk_demap(detect(y, np.eye(x.size), 1e-9).symbols) != chunk)
    lines = [f"identity errors {errors}"]
    ok = errors == 0
    N, trials = 64, 400
    for snr_db in (0.0, 4.0, 8.0):
        snr = 10 ** (snr_db / 10)
        err = 0
        for _ in range(trials):
            Q, _ = np.linalg.qr(crandn(rng, N, N))
            b = rng.integers(0, 2, 2 * N)
            w = np.sqrt(1 / (2 * snr)) * (rng.standard_normal(N) + 1j * rng.standard_normal(N))
            err += np.count_nonzero(qpsk_demap(detect(Q @ qpsk_map(b) + w, Q, 1 / snr).symbols) != b)
        n = 2 * N * trials
        p = norm.sf(np.sqrt(snr))
        z = (err / n - p) / np.sqrt(p * (1 - p) / n)
        lines.append(f"{snr_db:g} dB z={z:+.2f}")
        ok &= abs(z) < 3
    criterion(6, ", ".join(lines))
    assert ok


def test_c07_ber_ordering(criterion):
    criterion(7)
    t0 = time.perf_counter()
    desk = ["system.N=64", "system.k_delay=8", "system.k_doppler=8", "sim.layers=3", "sim.mx=7",
            "sim.mz=7", "experiment.frames=2", "experiment.snr_db=[-4.0, 0.0, 4.0]"]
    curves = {}
    for nr in (2, 4):
        cfg = load(CONFIGS / "ber_mimo.toml", desk + [f"system.n_rx={nr}"])
        for p in run_ber_experiment(cfg):
            assert p.count >= 10_000
            curves[(nr, p.waveform, p.arm, p.snr_db)] = p.value
    keys = [k for k in curves if k[0] == 2]
    sim_better = all(curves[(nr, wf, "comm", s)] < min(curves[(nr, wf, "nosim", s)],
                                                       curves[(nr, wf, "sim", s)])
                     for (nr, wf, arm, s) in curves if arm == "comm")
    # zero errors at both sizes carries no ordering information
    more_rx = all(curves[(4, wf, arm, s)] < curves[(2, wf, arm, s)]
                  or curves[(4, wf, arm, s)] == curves[(2, wf, arm, s)] == 0.0
                  for (_, wf, arm, s) in keys)
    zero_ties = sum(curves[(4, wf, arm, s)] == curves[(2, wf, arm, s)] == 0.0
                    for (_, wf, arm, s) in keys)
    elapsed = time.perf_counter() - t0
    criterion(7, f"optimized SIM below no-SIM and identity SIM: {sim_better}, "
                 f"N_R=4 below N_R=2: {more_rx} ({zero_ties}/{len(keys)} points error-free "
                 f"at both), {elapsed:.0f}s")
    assert sim_better and more_rx
    assert elapsed < 900


def test_c08_mse_ordering_and_floor(criterion):
    criterion(8)
    t0 = time.perf_counter()
    cfg = load(overrides=RADAR + ["experiment.kind='mse'", "experiment.trials=100",
                                  "experiment.arms=['sensing']"])
    exact = {wf: 0 for wf in cfg.experiment.waveforms}
    for trial in range(100):
        out = mse_trial(cfg, trial, noiseless=True)
        for wf in exact:
            exact[wf] += out[(wf, "sensing", 0)][2] == out["truth_support"]
    cfg = load(overrides=RADAR + ["experiment.kind='mse'", "experiment.trials=50",
                                  "experiment.snr_db=[0.0, 10.0, 20.0, 30.0]",
                                  "experiment.arms=['comm', 'sensing']"])
    pts = {(p.waveform, p.arm, p.snr_db, p.metric): p.value for p in run_mse_experiment(cfg)}
    top = cfg.experiment.snr_db[-2:]
    ordered = all(pts[(wf, "sensing", s, m)] <= pts[(wf, "comm", s, m)]
                  for wf in exact for s in top for m in ("range_mse", "velocity_mse"))
    floor_ok = True
    for wf in exact:
        for m in ("range_mse", "velocity_mse"):
            floor = pts[(wf, "resolution_limit", top[-1], m)]
            mse = pts[(wf, "sensing", top[-1], m)]
            floor_ok &= floor / 2 <= mse <= 2 * floor
    elapsed = time.perf_counter() - t0
    criterion(8, f"noiseless exact {exact}, sensing<=comm: {ordered}, "
                 f"at floor: {floor_ok}, {elapsed:.0f}s")
    assert all(v == 100 for v in exact.values())
    assert ordered and floor_ok
    assert elapsed < 900


def test_c09_isac_ber(criterion):
    criterion(9)
    t0 = time.perf_counter()
    cfg = load(CONFIGS / "isac_ber.toml", ["experiment.arms=['nosim', 'sensing']"])
    pts = {(p.waveform, p.arm, p.snr_db): p.value for p in run_ber_experiment(cfg)}
    ok = all(pts[(wf, "sensing", s)] < pts[(wf, "nosim", s)]
             for wf in cfg.experiment.waveforms for s in cfg.experiment.snr_db)
    elapsed = time.perf_counter() - t0
    criterion(9, f"sensing below no-SIM everywhere: {ok}, {elapsed:.0f}s")
    assert ok
    assert elapsed < 900


def test_c10_determinism(criterion, tmp_path):
    criterion(10)
    common = ["--override", "system.N=16", "--override", "channel.max_delay=6",
              "--override", "sim.layers=2", "--override", "sim.mx=3", "--override", "sim.mz=3",
              "--override", "optimizer.iterations=20", "--override", "experiment.trials=4",
              "--seed", "11"]
    runs = {}
    for cmd, extra in (("ber", ["--override", "experiment.arms=['nosim','sim','comm','sensing']"]),
                       ("mse", ["--override", "system.n_rx=1", "--override", "channel.paths=2",
                                "--override", "estimator.delay_bins=8"])):
        for tag, threads in (("a", 1), ("b", 1), ("c", 3)):
            out = tmp_path / f"{cmd}_{tag}.csv"
            r = subprocess.run([sys.executable, "-m", "mpddsim", cmd, "--out", str(out),
                                "--threads", str(threads)] + common + extra,
                               capture_output=True, text=True)
            assert r.returncode == 0, r.stderr
            runs[(cmd, tag)] = out.read_bytes()
    same = all(runs[(c, "a")] == runs[(c, t)] for c in ("ber", "mse") for t in ("b", "c"))
    criterion(10, f"byte-identical across reruns and --threads 1/3: {same}")
    assert same
