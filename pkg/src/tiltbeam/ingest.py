"""Tilt-trace ingestion: CSV reading/writing, baseline removal, time-to-
position mapping, window selection, resampling onto the load-position grid,
channel compositing, and mis-trigger rejection.

Measurement CSV schema (one file per crossing, all channels interleaved):
``time_s, channel, tilt_mm_per_m`` with a header row, comma separators,
UTF-8, ``.`` decimal.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import DomainError, IngestError
from .model import MeasurementSet, SensorStation, mm_per_m_to_rad

CSV_COLUMNS = ("time_s", "channel", "tilt_mm_per_m")


@dataclass(frozen=True)
class TiltTrace:
    """One channel's tilt samples during one crossing."""

    channel: str
    time_s: np.ndarray
    tilt_mm_per_m: np.ndarray
    rate_hz: float
    speed_m_s: float
    start_offset_m: float

    def __post_init__(self):
        t = np.asarray(self.time_s, dtype=float)
        v = np.asarray(self.tilt_mm_per_m, dtype=float)
        object.__setattr__(self, "time_s", t)
        object.__setattr__(self, "tilt_mm_per_m", v)
        if t.ndim != 1 or t.size != v.size or t.size < 2:
            raise DomainError("trace needs matching 1-D time and tilt arrays")
        if np.any(np.diff(t) <= 0.0):
            raise DomainError("trace times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise DomainError("trace samples must be finite")
        if self.speed_m_s == 0.0:
            raise DomainError("crossing speed must be nonzero")

    def positions(self) -> np.ndarray:
        """Load position of the reference axle at each sample."""
        return self.start_offset_m + self.speed_m_s * (self.time_s - self.time_s[0])


@dataclass(frozen=True)
class IngestSpec:
    """Preprocessing parameters for a set of crossings."""

    speed_m_s: float
    start_offset_m: float
    window: tuple[float, float] = (5.0, 30.0)
    baseline_seconds: float = 4.0
    min_correlation: float = 0.85
    groups: Mapping[str, tuple[str, ...]] | None = None
    signs: Mapping[str, float] | None = None

    def __post_init__(self):
        if not (self.window[0] < self.window[1]):
            raise DomainError(f"bad position window {self.window}")
        if not (0.0 < self.min_correlation <= 1.0):
            raise DomainError("correlation threshold must be in (0, 1]")


def write_tilt_csv(path, traces: Iterable[TiltTrace]) -> None:
    """Serialize traces in the measurement CSV schema (full precision)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for tr in traces:
            for t, v in zip(tr.time_s, tr.tilt_mm_per_m):
                writer.writerow([f"{t:.17g}", tr.channel, f"{v:.17g}"])


def read_tilt_csv(path, spec: IngestSpec) -> list[TiltTrace]:
    """Parse one crossing file into per-channel traces."""
    path = Path(path)
    by_channel: dict[str, list[tuple[float, float]]] = {}
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise IngestError(f"{path}: missing columns {missing}")
        for row in reader:
            try:
                t = float(row["time_s"])
                v = float(row["tilt_mm_per_m"])
            except (TypeError, ValueError) as exc:
                raise IngestError(f"{path}: unparsable row {row!r}") from exc
            by_channel.setdefault(row["channel"], []).append((t, v))
    if not by_channel:
        raise IngestError(f"{path}: no samples")
    traces = []
    for ch, rows in sorted(by_channel.items()):
        rows.sort(key=lambda r: r[0])
        t = np.array([r[0] for r in rows])
        v = np.array([r[1] for r in rows])
        rate = 1.0 / float(np.median(np.diff(t))) if t.size > 1 else 0.0
        traces.append(
            TiltTrace(ch, t, v, rate_hz=rate, speed_m_s=spec.speed_m_s,
                      start_offset_m=spec.start_offset_m)
        )
    return traces


def _normalized_correlation(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 1.0 if np.allclose(a, b) else 0.0
    return float(a @ b / (na * nb))


def _resample_crossing(
    traces: Sequence[TiltTrace], spec: IngestSpec, sweep: np.ndarray
) -> dict[str, np.ndarray]:
    """Baseline-remove, map to position, window, and resample one crossing."""
    out: dict[str, np.ndarray] = {}
    for tr in traces:
        t0 = tr.time_s[0]
        base = tr.tilt_mm_per_m[tr.time_s <= t0 + spec.baseline_seconds]
        tilt = tr.tilt_mm_per_m - (np.median(base) if base.size else 0.0)
        x = tr.positions()
        if tr.speed_m_s < 0.0:
            x, tilt = x[::-1], tilt[::-1]
        lo, hi = spec.window
        keep = (x >= lo) & (x <= hi)
        if not np.any(keep):
            raise IngestError(
                f"channel {tr.channel}: no samples inside the window [{lo}, {hi}]"
            )
        xk, vk = x[keep], tilt[keep]
        if sweep.min() < xk.min() - 1e-9 or sweep.max() > xk.max() + 1e-9:
            raise IngestError(
                f"channel {tr.channel}: retained window [{xk.min():.3f}, {xk.max():.3f}] "
                f"does not cover the sweep [{sweep.min():.3f}, {sweep.max():.3f}]"
            )
        out[tr.channel] = np.interp(sweep, xk, vk)
    return out


def ingest_tilt_csv(
    paths: Sequence,
    spec: IngestSpec,
    sensors: Sequence[SensorStation],
    sweep: Sequence[float],
) -> MeasurementSet:
    """Turn crossing files into a stacked MeasurementSet in radians.

    Per crossing and channel: subtract the median of the first
    ``baseline_seconds``, map time to load position via the crossing speed,
    keep the configured position window, resample onto the sweep grid, and
    average channel groups into composite channels.  Crossings whose
    normalized cross-correlation against the ensemble median falls below
    ``min_correlation`` are discarded as mis-triggered; the survivors are
    averaged.  Channel sign flags are applied last, then mm/m -> rad.
    """
    sweep = np.asarray(sweep, dtype=float)
    if sweep.size == 0:
        raise DomainError("empty sweep")
    ids = [s.id for s in sensors]
    groups = dict(spec.groups) if spec.groups else {i: (i,) for i in ids}
    for cid in ids:
        if cid not in groups:
            raise IngestError(f"no channel group for sensor {cid!r}")

    per_crossing: list[dict[str, np.ndarray]] = []
    for path in paths:
        raw = _resample_crossing(read_tilt_csv(path, spec), spec, sweep)
        composite = {}
        for cid in ids:
            members = groups[cid]
            absent = [m for m in members if m not in raw]
            if absent:
                raise IngestError(f"{path}: channels {absent} missing for group {cid!r}")
            composite[cid] = np.mean([raw[m] for m in members], axis=0)
        per_crossing.append(composite)
    if not per_crossing:
        raise IngestError("no crossing files given")

    stacked = np.array([np.concatenate([c[cid] for cid in ids]) for c in per_crossing])
    reference = np.median(stacked, axis=0)
    ncc = np.array([_normalized_correlation(s, reference) for s in stacked])
    kept = ncc >= spec.min_correlation
    if not np.any(kept):
        raise IngestError(
            f"all {len(per_crossing)} crossings fall below the correlation "
            f"threshold {spec.min_correlation}"
        )
    mean = stacked[kept].mean(axis=0).reshape(len(ids), sweep.size)
    signs = np.array([(spec.signs or {}).get(cid, 1.0) for cid in ids])
    y = mm_per_m_to_rad(mean * signs[:, None])
    return MeasurementSet(sensors=tuple(sensors), positions=sweep, y=y)
