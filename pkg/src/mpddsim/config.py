"""Experiment configuration: nested dataclasses loaded from TOML.

Unknown sections or keys are rejected. Overrides use dotted paths such as
``sim.layers=3`` and TOML value syntax (bare words fall back to strings).
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


EXPERIMENTS = ("ber", "mse", "isac", "channel-dump", "optimize")
ARMS = ("nosim", "sim", "comm", "sensing")


@dataclass
class ExperimentSection:
    kind: str = "ber"
    trials: int = 20
    frames: int = 1  # frames per channel realization
    snr_db: list[float] = field(default_factory=lambda: [0.0, 4.0, 8.0])
    seed: int = 0
    waveforms: list[str] = field(default_factory=lambda: ["ofdm", "otfs", "afdm"])
    arms: list[str] = field(default_factory=lambda: ["nosim", "sim", "comm"])
    normalization: str = "equal"  # or "reference"


@dataclass
class SystemSection:
    n_tx: int = 1
    n_rx: int = 2
    N: int = 64
    k_delay: int | None = None
    k_doppler: int | None = None
    carrier: float = 28e9
    bandwidth: float = 20e6
    c1: float | None = None  # AFDM chirp; default from the Doppler spread
    c2: float = 0.0


@dataclass
class ChannelSection:
    paths: int = 5
    max_delay: int = 14
    max_doppler: float = 2.0  # cycles per frame
    delays: list[int] | None = None
    dopplers: list[float] | None = None
    target_ranges: list[float] | None = None  # meters, overrides delays
    target_velocities: list[float] | None = None  # m/s, overrides dopplers


@dataclass
class SimSection:
    layers: int = 3
    mx: int = 7
    mz: int = 7
    layer_gap: float = 5.0  # wavelengths
    atom_spacing: float = 0.5
    antenna_spacing: float = 0.5
    antenna_gap: float | None = None
    obliquity: str = "aligned"


@dataclass
class OptimizerSection:
    iterations: int = 200
    decay: float = 0.99
    genie_gains: bool = True
    reselect: str = "iteration"  # or "round"


@dataclass
class DetectorSection:
    iterations: int = 50
    damping: float = 0.5
    es: float = 1.0


@dataclass
class EstimatorSection:
    delay_bins: int = 16
    doppler_bins: int = 5
    doppler_step: float = 1.0
    iterations: int = 30
    damping: float = 0.5
    known_paths: bool = True
    threshold: float = 0.5


@dataclass
class OutputSection:
    path: str = "results.csv"


@dataclass
class Config:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    system: SystemSection = field(default_factory=SystemSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    sim: SimSection = field(default_factory=SimSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    detector: DetectorSection = field(default_factory=DetectorSection)
    estimator: EstimatorSection = field(default_factory=EstimatorSection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> "Config":
        e, s, c = self.experiment, self.system, self.channel
        if e.kind not in EXPERIMENTS:
            raise ConfigError(f"experiment.kind must be one of {EXPERIMENTS}, got {e.kind!r}")
        if e.trials < 1 or e.frames < 1:
            raise ConfigError("experiment.trials and experiment.frames must be >= 1")
        bad = [a for a in e.arms if a not in ARMS]
        if bad:
            raise ConfigError(f"unknown arms {bad}; choose from {ARMS}")
        bad = [w for w in e.waveforms if w not in ("ofdm", "otfs", "afdm")]
        if bad:
            raise ConfigError(f"unknown waveforms {bad}")
        if e.normalization not in ("reference", "equal"):
            raise ConfigError("experiment.normalization must be 'reference' or 'equal'")
        if s.n_tx < 1 or s.n_rx < 1 or s.N < 2:
            raise ConfigError("system dimensions must be positive (N >= 2)")
        if s.n_tx > s.n_rx:
            # one stream per transmit antenna, so streams = min(n_tx, n_rx) needs n_tx <= n_rx
            raise ConfigError("n_tx may not exceed n_rx")
        if c.paths < 1:
            raise ConfigError("channel.paths must be >= 1")
        if c.max_delay >= s.N:
            raise ConfigError(f"channel.max_delay={c.max_delay} must be below N={s.N}")
        for name in ("delays", "dopplers", "target_ranges", "target_velocities"):
            seq = getattr(c, name)
            if seq is not None and len(seq) != c.paths:
                raise ConfigError(f"channel.{name} needs {c.paths} entries")
        if "otfs" in e.waveforms:
            kd, kn = s.k_delay, s.k_doppler
            if kd is None and kn is None:
                ok = int(round(s.N ** 0.5)) ** 2 == s.N
            else:
                ok = kd is not None and kn is not None and kd * kn == s.N
            if not ok:
                raise ConfigError("OTFS needs k_delay * k_doppler == N")
        if self.sim.obliquity not in ("aligned", "geometric"):
            raise ConfigError("sim.obliquity must be 'aligned' or 'geometric'")
        if self.optimizer.reselect not in ("iteration", "round"):
            raise ConfigError("optimizer.reselect must be 'iteration' or 'round'")
        if not 0 < self.optimizer.decay < 1:
            raise ConfigError("optimizer.decay must lie in (0, 1)")
        if not 0 < self.detector.damping <= 1 or not 0 < self.estimator.damping <= 1:
            raise ConfigError("damping factors must lie in (0, 1]")
        return self


_SCALARS = {"int": int, "float": (int, float), "str": str, "bool": bool}


def _check_type(value, annotation: str, where: str):
    options = [a.strip() for a in annotation.split("|")]
    if value is None:
        if "None" in options:
            return value
        raise ConfigError(f"{where} may not be empty")
    for opt in options:
        if opt.startswith("list["):
            inner = _SCALARS[opt[5:-1]]
            if isinstance(value, list) and all(isinstance(v, inner) and not
                                               (isinstance(v, bool) and inner is not bool)
                                               for v in value):
                return [float(v) if opt == "list[float]" else v for v in value]
        elif opt in _SCALARS:
            kind = _SCALARS[opt]
            if isinstance(value, bool) and opt != "bool":
                continue
            if isinstance(value, kind):
                return float(value) if opt == "float" else value
    raise ConfigError(f"{where} has wrong type: expected {annotation}, got {value!r}")


def _build(cls, data: dict[str, Any], where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {sorted(unknown)}")
    kwargs = {name: _check_type(value, known[name].type, f"{where}.{name}")
              for name, value in data.items()}
    return cls(**kwargs)


def from_dict(data: dict[str, Any]) -> Config:
    unknown = set(data) - {f.name for f in fields(Config)}
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    sections = {}
    for f in fields(Config):
        cls = type(f.default_factory())
        sections[f.name] = _build(cls, data.get(f.name, {}), f.name)
    return Config(**sections).validate()


def to_dict(cfg: Config) -> dict[str, Any]:
    return dataclasses.asdict(cfg)


def parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(data: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    for item in overrides:
        key, sep, raw = item.partition("=")
        parts = key.strip().split(".")
        if not sep or len(parts) != 2 or not all(parts):
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        data.setdefault(parts[0], {})[parts[1]] = parse_value(raw.strip())
    return data


def load(path: str | Path | None = None, overrides: list[str] | None = None,
         kind: str | None = None) -> Config:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    if kind is not None:
        data.setdefault("experiment", {})["kind"] = kind
    apply_overrides(data, overrides or [])
    return from_dict(data)
