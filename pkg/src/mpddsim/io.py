"""CSV emission of curve points."""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable

HEADER = ("experiment", "waveform", "arm", "snr_db", "metric", "value", "trials", "count", "ci95")


@dataclass(frozen=True)
class CurvePoint:
    experiment: str
    waveform: str
    arm: str
    snr_db: float | None
    metric: str
    value: float
    trials: int
    count: int
    ci95: float


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(points: Iterable[CurvePoint], path: str | Path) -> Path:
    path = Path(path)
    try:
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HEADER)
            for p in points:
                w.writerow([_fmt(v) for v in astuple(p)])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path: str | Path) -> list[CurvePoint]:
    types = {f.name: f.type for f in fields(CurvePoint)}
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {}
            for k, v in row.items():
                t = types[k]
                if t == "float | None":
                    vals[k] = float(v) if v else None
                elif t == "float":
                    vals[k] = float(v)
                elif t == "int":
                    vals[k] = int(v)
                else:
                    vals[k] = v
            out.append(CurvePoint(**vals))
    return out
