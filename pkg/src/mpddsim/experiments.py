"""Monte-Carlo experiment runners.

Randomness is hierarchical: every draw comes from
``default_rng([seed, trial, stream, ...])``, so a trial can be replayed on its
own and results do not depend on how trials are spread over workers. Arms,
waveforms and SNR points of one trial share their bits and noise draws.

Channel normalization (``experiment.normalization``):

* ``reference``: per realization, the unoptimized SIM channel is scaled to
  ||H||_F^2 = rows and every SIM arm reuses that factor, so optimized arms
  keep the gain the optimizer bought. The no-SIM channel is scaled to
  ||H||_F^2 = rows on its own.
* ``equal``: every arm is scaled to ||H||_F^2 = rows.

Noise: SNR = E_S ||H_ref||_F^2 / (rows sigma_w^2), i.e. per receive sample.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.optimize import linear_sum_assignment

from .arrays import UlaGeometry
from .channel import (PathSet, TdChannel, assemble_td_channel, conventional_mimo_channel,
                      sample_paths, sim_frontend)
from .config import Config, ConfigError
from .gabp import DetectorConfig, detect
from .io import CurvePoint
from .metasurfaces import SimStack
from .pda import (DelayDopplerGrid, PdaConfig, build_dictionary, estimate, grid_to_radar,
                  radar_to_grid, SPEED_OF_LIGHT)
from .simopt import AscentConfig, SimProblem, optimize_comm, optimize_sensing
from .waveforms import FrameSpec, default_c1, effective_channel, qpsk_demap, qpsk_map

CHANNEL, DATA, PILOT = 0, 1, 2  # rng stream ids


@dataclass
class Scenario:
    cfg: Config
    tx: SimStack
    rx: SimStack
    tx_ula: UlaGeometry
    rx_ula: UlaGeometry
    specs: dict[str, FrameSpec]

    @property
    def rows(self) -> int:
        return self.cfg.system.n_rx * self.cfg.system.N

    @property
    def cols(self) -> int:
        return self.cfg.system.n_tx * self.cfg.system.N


def target_grid_points(cfg: Config) -> tuple[list[int] | None, list[float] | None]:
    """Delay taps / Doppler cycles per frame implied by configured targets."""
    c, s = cfg.channel, cfg.system
    delays, dopplers = c.delays, c.dopplers
    if c.target_ranges is not None:
        vel = c.target_velocities or [0.0] * len(c.target_ranges)
        pts = [radar_to_grid(r, v, s.N, s.bandwidth, s.carrier)
               for r, v in zip(c.target_ranges, vel)]
        taps = [p[0] for p in pts]
        if any(abs(t - round(t)) > 1e-6 for t in taps):
            raise ConfigError(f"target ranges map to fractional delays {taps}")
        delays = [int(round(t)) for t in taps]
        if c.target_velocities is not None:
            dopplers = [p[1] for p in pts]
    elif c.target_velocities is not None:
        raise ConfigError("target_velocities requires target_ranges")
    return delays, dopplers


def build_scenario(cfg: Config) -> Scenario:
    s, g = cfg.system, cfg.sim
    lam = SPEED_OF_LIGHT / s.carrier
    common = dict(layers=g.layers, mx=g.mx, mz=g.mz, wavelength=lam, layer_gap=g.layer_gap,
                  atom_spacing=g.atom_spacing, antenna_spacing=g.antenna_spacing,
                  antenna_gap=g.antenna_gap, obliquity=g.obliquity)
    tx = SimStack.from_wavelengths("tx", antennas=s.n_tx, **common)
    rx = SimStack.from_wavelengths("rx", antennas=s.n_rx, **common)
    _, dopplers = target_grid_points(cfg)
    f_max = max(abs(f) for f in dopplers) if dopplers else cfg.channel.max_doppler
    c1 = s.c1 if s.c1 is not None else default_c1(f_max, s.N)
    specs = {wf: FrameSpec(wf, s.N, s.k_delay, s.k_doppler, c1=c1, c2=s.c2)
             for wf in cfg.experiment.waveforms}
    return Scenario(cfg, tx, rx, UlaGeometry(s.n_tx, g.antenna_spacing, lam),
                    UlaGeometry(s.n_rx, g.antenna_spacing, lam), specs)


def draw_paths(cfg: Config, trial: int) -> PathSet:
    rng = np.random.default_rng([cfg.experiment.seed, trial, CHANNEL])
    c = cfg.channel
    delays, dopplers = target_grid_points(cfg)
    return sample_paths(c.paths, c.max_delay, c.max_doppler, rng, cfg.system.N,
                        delays=delays, dopplers=dopplers)


def arm_phases(scen: Scenario, paths: PathSet, arm: str):
    """(Z_tx, Z_rx) for a SIM arm, ``None`` for the conventional no-SIM link."""
    o = scen.cfg.optimizer
    acfg = AscentConfig(o.iterations, o.decay, o.genie_gains, o.reselect)
    if arm == "nosim":
        return None
    if arm == "sim":
        return scen.tx.zero_phases(), scen.rx.zero_phases()
    if arm == "comm":
        res = optimize_comm(SimProblem.from_paths(paths, scen.tx, scen.rx,
                                                  unit_gains=not o.genie_gains), acfg)
    elif arm == "sensing":
        res = optimize_sensing(SimProblem.from_paths(paths, scen.tx, scen.rx, unit_gains=True),
                               acfg)
    else:
        raise ConfigError(f"unknown arm {arm!r}")
    return res.tx_phases, res.rx_phases


def td_channel(scen: Scenario, paths: PathSet, phases, spec: FrameSpec) -> TdChannel:
    N = scen.cfg.system.N
    if phases is None:
        return conventional_mimo_channel(paths, scen.tx_ula, scen.rx_ula, N, spec.phase_fn)
    Z, Zr = phases
    return assemble_td_channel(paths, sim_frontend(scen.rx, Zr), sim_frontend(scen.tx, Z), N,
                               spec.phase_fn)


def arm_channels(scen: Scenario, paths: PathSet, phases: dict, spec: FrameSpec) -> dict:
    """Normalized decision-domain matrices for every arm of one waveform."""
    rows = scen.rows
    eff = {arm: effective_channel(td_channel(scen, paths, ph, spec), spec).matrix
           for arm, ph in phases.items()}
    ref = None
    if scen.cfg.experiment.normalization == "reference" and any(a != "nosim" for a in eff):
        base = eff.get("sim")
        if base is None:
            base = effective_channel(td_channel(scen, paths, (scen.tx.zero_phases(),
                                                              scen.rx.zero_phases()), spec),
                                     spec).matrix
        ref = math.sqrt(rows / np.linalg.norm(base) ** 2)
    out = {}
    for arm, H in eff.items():
        if ref is not None and arm != "nosim":
            out[arm] = ref * H
        else:
            out[arm] = H * math.sqrt(rows / np.linalg.norm(H) ** 2)
    return out


def noise_variance(snr_db: float, es: float = 1.0, channel_sq_norm: float | None = None,
                   rows: int | None = None) -> float:
    """sigma_w^2 = E_S ||H||_F^2 / (rows * SNR); E_S / SNR for a normalized channel."""
    gain = 1.0 if channel_sq_norm is None else channel_sq_norm / rows
    return es * gain / 10 ** (snr_db / 10)


def awgn(length: int, snr_db: float, rng: np.random.Generator, es: float = 1.0,
         channel_sq_norm: float | None = None, rows: int | None = None):
    """Circularly-symmetric complex Gaussian noise and its variance."""
    var = noise_variance(snr_db, es, channel_sq_norm, rows)
    w = math.sqrt(var / 2) * (rng.standard_normal(length) + 1j * rng.standard_normal(length))
    return w, var


# --- BER ----------------------------------------------------------------------

def ber_trial(cfg: Config, trial: int) -> dict:
    """Bit errors per (waveform, arm, snr index) for one channel realization."""
    scen = build_scenario(cfg)
    e, d = cfg.experiment, cfg.detector
    paths = draw_paths(cfg, trial)
    phases = {arm: arm_phases(scen, paths, arm) for arm in e.arms}
    dcfg = DetectorConfig(d.iterations, d.damping, d.es)
    nbits = 2 * scen.cols
    errors: dict = {}
    for wf in e.waveforms:
        H = arm_channels(scen, paths, phases, scen.specs[wf])
        for frame in range(e.frames):
            for k, snr in enumerate(e.snr_db):
                rng = np.random.default_rng([e.seed, trial, DATA, frame, k])
                bits = rng.integers(0, 2, nbits)
                x = qpsk_map(bits, d.es)
                w, var = awgn(scen.rows, snr, rng, d.es)
                for arm in e.arms:
                    det = detect(H[arm] @ x + w, H[arm], var, dcfg)
                    err = int(np.count_nonzero(qpsk_demap(det.symbols) != bits))
                    key = (wf, arm, k)
                    errors[key] = errors.get(key, 0) + err
    return errors


def _map_trials(fn, trials: int, threads: int):
    if threads <= 1:
        return [fn(t) for t in range(trials)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(trials)))


def run_ber_experiment(cfg: Config, threads: int = 1, label: str | None = None) -> list[CurvePoint]:
    e = cfg.experiment
    scen = build_scenario(cfg)
    per_trial = _map_trials(partial(ber_trial, cfg), e.trials, threads)
    bits = 2 * scen.cols * e.frames * e.trials
    label = label or e.kind
    points = []
    for wf in e.waveforms:
        for arm in e.arms:
            for k, snr in enumerate(e.snr_db):
                errs = sum(t[(wf, arm, k)] for t in per_trial)
                p = errs / bits
                points.append(CurvePoint(label, wf, arm, float(snr), "ber", p, e.trials, bits,
                                         1.96 * math.sqrt(p * (1 - p) / bits)))
    return points


# --- MSE (radar parameter estimation) -------------------------------------------

def estimator_grid(cfg: Config) -> DelayDopplerGrid:
    s = cfg.estimator
    return DelayDopplerGrid(s.delay_bins, s.doppler_bins, s.doppler_step)


def true_targets(cfg: Config, paths: PathSet) -> list[tuple[float, float]]:
    s = cfg.system
    return [grid_to_radar(p.delay, p.doppler, s.N, s.bandwidth, s.carrier) for p in paths.direct]


def match_errors(truth, estimates) -> tuple[float, float]:
    """Mean squared range / velocity errors under the best one-to-one pairing.

    Missing estimates count as the target's full range and velocity.
    """
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    est = np.asarray(estimates, dtype=float).reshape(-1, 2)
    if est.size == 0:
        return float(np.mean(truth[:, 0] ** 2)), float(np.mean(truth[:, 1] ** 2))
    scale = np.maximum(np.abs(truth).max(axis=0), 1.0)
    cost = (((truth[:, None, :] - est[None, :, :]) / scale) ** 2).sum(-1)
    r, c = linear_sum_assignment(cost)
    rng_err = np.zeros(len(truth))
    vel_err = np.zeros(len(truth))
    hit = np.zeros(len(truth), dtype=bool)
    hit[r] = True
    rng_err[r] = (truth[r, 0] - est[c, 0]) ** 2
    vel_err[r] = (truth[r, 1] - est[c, 1]) ** 2
    rng_err[~hit] = truth[~hit, 0] ** 2
    vel_err[~hit] = truth[~hit, 1] ** 2
    return float(rng_err.mean()), float(vel_err.mean())


def resolution_limit(cfg: Config, paths: PathSet) -> tuple[float, float]:
    """Errors of a perfect sparse estimate: every target at its nearest grid atom."""
    grid, s = estimator_grid(cfg), cfg.system
    est = [grid_to_radar(*grid.point(grid.index(p.delay, p.doppler)), s.N, s.bandwidth, s.carrier)
           for p in paths.direct]
    return match_errors(true_targets(cfg, paths), est)


def mse_trial(cfg: Config, trial: int, noiseless: bool = False) -> dict:
    scen = build_scenario(cfg)
    e, est = cfg.experiment, cfg.estimator
    if cfg.system.n_tx != 1 or cfg.system.n_rx != 1:
        raise ConfigError("radar estimation runs on SISO links (n_tx = n_rx = 1)")
    paths = draw_paths(cfg, trial)
    phases = {arm: arm_phases(scen, paths, arm) for arm in e.arms}
    grid = estimator_grid(cfg)
    pcfg = PdaConfig(est.iterations, est.damping,
                     cfg.channel.paths if est.known_paths else None, est.threshold)
    truth = true_targets(cfg, paths)
    s = cfg.system
    out: dict = {}
    rng_pilot = np.random.default_rng([e.seed, trial, PILOT])
    x = qpsk_map(rng_pilot.integers(0, 2, 2 * s.N), cfg.detector.es)
    snrs = [None] if noiseless else list(e.snr_db)
    for wf in e.waveforms:
        spec = scen.specs[wf]
        H = arm_channels(scen, paths, phases, spec)
        E = build_dictionary(grid, x, spec)
        for k, snr in enumerate(snrs):
            rng = np.random.default_rng([e.seed, trial, DATA, 0, k])
            if snr is not None:
                w, var = awgn(s.N, snr, rng, cfg.detector.es)
            for arm in e.arms:
                y = H[arm] @ x
                if snr is None:
                    # noiseless: a vanishing variance keeps the covariance invertible
                    var = 1e-10 * np.linalg.norm(y) ** 2 / y.size
                else:
                    y = y + w
                res = estimate(y, E, grid, var, pcfg, prior_paths=cfg.channel.paths)
                found = [grid_to_radar(dl, f, s.N, s.bandwidth, s.carrier)
                         for dl, f, _ in res.params]
                out[(wf, arm, k)] = (*match_errors(truth, found), tuple(res.support))
    out["truth_support"] = tuple(sorted(grid.index(p.delay, p.doppler) for p in paths.direct))
    out["floor"] = resolution_limit(cfg, paths)
    return out


def run_mse_experiment(cfg: Config, threads: int = 1) -> list[CurvePoint]:
    e = cfg.experiment
    per_trial = _map_trials(partial(mse_trial, cfg), e.trials, threads)
    points = []
    for wf in e.waveforms:
        for k, snr in enumerate(e.snr_db):
            for arm in e.arms:
                for m, metric in enumerate(("range_mse", "velocity_mse")):
                    vals = np.array([t[(wf, arm, k)][m] for t in per_trial])
                    ci = 1.96 * vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
                    points.append(CurvePoint("mse", wf, arm, float(snr), metric,
                                             float(vals.mean()), e.trials, len(vals), float(ci)))
            for m, metric in enumerate(("range_mse", "velocity_mse")):
                floor = float(np.mean([t["floor"][m] for t in per_trial]))
                points.append(CurvePoint("mse", wf, "resolution_limit", float(snr), metric,
                                         floor, e.trials, e.trials, 0.0))
    return points


# --- channel dump / optimizer trace -------------------------------------------

def channel_dump(cfg: Config) -> tuple[dict[str, np.ndarray], list[CurvePoint]]:
    """|H_wf| grids for the no-SIM and identity-SIM links of one realization."""
    scen = build_scenario(cfg)
    paths = draw_paths(cfg, 0)
    arms = [a for a in cfg.experiment.arms if a in ("nosim", "sim")] or ["nosim", "sim"]
    phases = {arm: arm_phases(scen, paths, arm) for arm in arms}
    grids, points = {}, []
    for wf in cfg.experiment.waveforms:
        H = arm_channels(scen, paths, phases, scen.specs[wf])
        for arm, M in H.items():
            mag = np.abs(M) / np.linalg.norm(M)
            grids[f"{wf}/{arm}"] = mag
            points.append(CurvePoint("channel-dump", wf, arm, None, "nonzero_fraction",
                                     float(np.mean(mag > 1e-8 * mag.max())), 1, mag.size, 0.0))
    return grids, points


def optimizer_trace(cfg: Config) -> list[CurvePoint]:
    scen = build_scenario(cfg)
    paths = draw_paths(cfg, 0)
    o = cfg.optimizer
    acfg = AscentConfig(o.iterations, o.decay, o.genie_gains, o.reselect)
    points = []
    comm = optimize_comm(SimProblem.from_paths(paths, scen.tx, scen.rx,
                                               unit_gains=not o.genie_gains), acfg)
    sens = optimize_sensing(SimProblem.from_paths(paths, scen.tx, scen.rx, unit_gains=True), acfg)
    for arm, res, metric in (("comm", comm, "objective"), ("sensing", sens, "min_path_power")):
        for i, v in enumerate(res.history):
            points.append(CurvePoint("optimize", "-", arm, None, metric, float(v), 1, i, 0.0))
    return points
