"""Run configuration: INI-style structured text with sections
``[system] [mesh] [sensors] [loads] [noise] [prior] [hyper] [output]`` plus
the optional extensions ``[truth]`` (synthetic studies), ``[ingest]``
(trace preprocessing), and ``[sweep]`` (study commands).

Validation collects every problem before failing, so one run reports all
defects.  A parsed config plus a master seed fully reproduces a run; the
SHA-256 of the raw config bytes goes into the provenance record.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ConfigError
from .ingest import IngestSpec
from .model import (
    RIGID,
    AxleTrain,
    BeamSystem,
    SensorStation,
    Support,
    mm_per_m_to_rad,
    tonnes_to_newtons,
)
from .synthetic import TruthProfile


@dataclass
class RunConfig:
    """Validated, unit-converted run description."""

    system: BeamSystem
    estimate_springs: bool
    n_per_span: list[int] | None
    breakpoints: list[float] | None
    sensors: list[SensorStation]
    signs: dict[str, float]
    train: AxleTrain
    sweep: np.ndarray
    sigma_rad: float
    noise_structure: str  # "identity" or "ar1"
    noise_rho: float
    parameterization: str  # "linear" | "log"
    difference_order: int
    tau: float
    center_ei: float
    hyper_policy: str  # "fixed" | "evidence" | "quasi-optimality"
    sigma2_grid: np.ndarray | None
    tau_grid: np.ndarray | None
    k_grid: np.ndarray | None
    lambda_grid: np.ndarray | None
    output_dir: Path
    seed: int
    # trace synthesis / ingestion
    speed_m_s: float
    start_offset_m: float
    trace_rate_hz: float
    trace_seconds: float
    crossings: int
    data_paths: list[Path]
    ingest: IngestSpec
    # optional sections
    truth: TruthProfile | None
    sigma_levels_mm: list[float]
    sweep_seeds: int
    n_list: list[int]
    sensor_sets: list[list[float]]
    reference_n: int
    band_method: str
    config_hash: str = ""
    config_path: str = ""


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace("|", ",").split(",") if x.strip()]


class _Reader:
    """configparser access that records errors instead of raising."""

    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser
        self.errors: list[str] = []

    def complain(self, where: str, what: str) -> None:
        self.errors.append(f"[{where}] {what}")

    def get(self, section: str, key: str, default=None, required=False):
        if not self.parser.has_option(section, key):
            if required:
                self.complain(f"{section}].{key}", "missing required key")
            return default
        return self.parser.get(section, key).strip()

    def number(self, section: str, key: str, default=None, required=False):
        raw = self.get(section, key, None, required)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            self.complain(f"{section}].{key}", f"not a number: {raw!r}")
            return default

    def integer(self, section: str, key: str, default=None, required=False):
        val = self.number(section, key, None, required)
        if val is None:
            return default
        if val != int(val):
            self.complain(f"{section}].{key}", f"not an integer: {val}")
            return default
        return int(val)

    def numbers(self, section: str, key: str, default=None, required=False):
        raw = self.get(section, key, None, required)
        if raw is None:
            return default
        try:
            return _floats(raw)
        except ValueError:
            self.complain(f"{section}].{key}", f"not a number list: {raw!r}")
            return default

    def grid(self, section: str, key: str):
        """lo, hi, n triple -> log-spaced grid."""
        vals = self.numbers(section, key)
        if vals is None:
            return None
        if len(vals) != 3 or not (0 < vals[0] < vals[1]) or vals[2] < 2:
            self.complain(f"{section}].{key}", "expected 'lo, hi, n' with 0 < lo < hi")
            return None
        return np.logspace(math.log10(vals[0]), math.log10(vals[1]), int(vals[2]))


def _parse_supports(reader: _Reader, text: str) -> list[Support]:
    out = []
    for i, token in enumerate(t.strip() for t in text.split(",")):
        if token == "pinned":
            out.append(Support(0.0))
        elif token == "rigid":
            out.append(Support(RIGID))
        elif token.startswith("spring:"):
            try:
                out.append(Support(float(token.split(":", 1)[1])))
            except ValueError:
                reader.complain("system].supports", f"bad spring value in {token!r}")
                out.append(Support(0.0))
        else:
            reader.complain(
                "system].supports",
                f"entry {i}: expected pinned | rigid | spring:<k>, got {token!r}",
            )
            out.append(Support(0.0))
    return out


def _parse_zones(reader: _Reader, text: str) -> tuple:
    zones = []
    for token in (t.strip() for t in text.split(",") if t.strip()):
        parts = token.split(":")
        if len(parts) != 3:
            reader.complain("truth].zones", f"expected a:b:factor, got {token!r}")
            continue
        try:
            zones.append((float(parts[0]), float(parts[1]), float(parts[2])))
        except ValueError:
            reader.complain("truth].zones", f"bad numbers in {token!r}")
    return tuple(zones)


def load_config(path) -> RunConfig:
    """Parse and validate a run config; all failures are reported together."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = path.read_bytes()
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(raw.decode("utf-8"))
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc
    r = _Reader(parser)

    for section in ("system", "mesh", "sensors", "loads", "noise", "prior"):
        if not parser.has_section(section):
            r.complain(section, "missing section")
    if r.errors:
        raise ConfigError(r.errors)

    # [system]
    spans = r.numbers("system", "spans", required=True) or [1.0]
    supports_text = r.get("system", "supports", required=True) or "pinned, pinned"
    supports = _parse_supports(r, supports_text)
    vertical = r.get("system", "vertical")
    if vertical is not None:
        flags = [t.strip().lower() in ("1", "true", "yes") for t in vertical.split(",")]
        if len(flags) == len(supports):
            supports = [Support(s.rotational, v) for s, v in zip(supports, flags)]
        else:
            r.complain("system].vertical", "one flag per support node required")
    load_path = r.numbers("system", "load_path")
    springs_mode = (r.get("system", "springs", "fixed") or "fixed").lower()
    if springs_mode not in ("fixed", "estimate"):
        r.complain("system].springs", f"expected fixed | estimate, got {springs_mode!r}")
    system = None
    try:
        system = BeamSystem(
            spans=tuple(spans),
            supports=tuple(supports),
            load_path=tuple(load_path) if load_path else None,
        )
    except Exception as exc:
        r.complain("system", str(exc))

    # [mesh]
    n_per_span = r.numbers("mesh", "n_per_span")
    breakpoints = r.numbers("mesh", "breakpoints")
    if (n_per_span is None) == (breakpoints is None):
        r.complain("mesh", "give exactly one of n_per_span or breakpoints")
    if n_per_span is not None:
        if system is not None and len(n_per_span) not in (1, len(system.spans)):
            r.complain("mesh].n_per_span", "one count, or one per span")
        n_per_span = [int(n) for n in n_per_span]
        if system is not None and len(n_per_span) == 1:
            n_per_span = n_per_span * len(system.spans)

    # [sensors]
    positions = r.numbers("sensors", "positions", required=True) or []
    ids_text = r.get("sensors", "ids")
    ids = [t.strip() for t in ids_text.split(",")] if ids_text else [
        f"S{i+1}" for i in range(len(positions))
    ]
    if len(ids) != len(positions):
        r.complain("sensors].ids", "one id per position required")
        ids = [f"S{i+1}" for i in range(len(positions))]
    sensors = [SensorStation(i, p) for i, p in zip(ids, positions)]
    if system is not None:
        total = system.total_length
        for s in sensors:
            if not (0.0 < s.position < total):
                r.complain(
                    "sensors].positions",
                    f"sensor {s.id!r} at {s.position} m not inside (0, {total})",
                )
        if len({s.position for s in sensors}) != len(sensors):
            r.complain("sensors].positions", "positions must be distinct")
    signs_list = r.numbers("sensors", "signs")
    signs = {}
    if signs_list is not None:
        if len(signs_list) != len(sensors):
            r.complain("sensors].signs", "one sign per sensor required")
        else:
            signs = {s.id: float(v) for s, v in zip(sensors, signs_list)}

    # [loads]
    offsets = r.numbers("loads", "axle_offsets", [0.0])
    loads_n = r.numbers("loads", "axle_loads_n")
    mass_t = r.number("loads", "total_mass_t")
    train = None
    if (loads_n is None) == (mass_t is None):
        r.complain("loads", "give exactly one of axle_loads_n or total_mass_t")
    try:
        if loads_n is not None:
            train = AxleTrain(tuple(offsets), tuple(loads_n))
        elif mass_t is not None:
            train = AxleTrain.from_total_mass(mass_t, tuple(offsets))
    except Exception as exc:
        r.complain("loads", str(exc))
    if train is None:
        train = AxleTrain.point_load(1.0)
    sweep_spec = r.numbers("loads", "sweep", required=True) or [0.0, 1.0, 2]
    if len(sweep_spec) != 3 or sweep_spec[2] < 1 or sweep_spec[0] >= sweep_spec[1]:
        r.complain("loads].sweep", "expected 'start, stop, count'")
        sweep_spec = [0.0, 1.0, 2]
    sweep = np.linspace(sweep_spec[0], sweep_spec[1], int(sweep_spec[2]))
    if system is not None:
        lo, hi = system.load_path
        if sweep[0] < lo - 1e-9 or sweep[-1] > hi + 1e-9:
            r.complain("loads].sweep", f"sweep outside load_path [{lo}, {hi}]")
    speed = r.number("loads", "speed_m_s", 1.25)
    start_offset = r.number("loads", "start_offset_m", -8.0)
    rate = r.number("loads", "trace_rate_hz", 5.0)
    seconds = r.number("loads", "trace_seconds", 0.0)
    crossings = r.integer("loads", "crossings", 3)
    data_field = r.get("loads", "data")
    data_paths: list[Path] = []
    if data_field:
        for token in (t.strip() for t in data_field.split(",") if t.strip()):
            hits = sorted(path.parent.glob(token)) if any(c in token for c in "*?[") else [
                path.parent / token if not Path(token).is_absolute() else Path(token)
            ]
            data_paths.extend(hits)

    # [noise]
    sigma_mm = r.number("noise", "sigma_mm_per_m")
    sigma_rad_direct = r.number("noise", "sigma_rad")
    if (sigma_mm is None) == (sigma_rad_direct is None):
        r.complain("noise", "give exactly one of sigma_mm_per_m or sigma_rad")
        sigma_rad = 1e-5
    else:
        sigma_rad = float(mm_per_m_to_rad(sigma_mm)) if sigma_mm is not None else sigma_rad_direct
    if not (sigma_rad > 0):
        r.complain("noise", f"noise level must be > 0, got {sigma_rad}")
        sigma_rad = 1e-5
    corr = (r.get("noise", "correlation", "identity") or "identity").lower()
    rho = 0.0
    if corr.startswith("ar1:"):
        try:
            rho = float(corr.split(":", 1)[1])
            corr = "ar1"
        except ValueError:
            r.complain("noise].correlation", f"bad AR(1) coefficient in {corr!r}")
            corr = "identity"
    elif corr != "identity":
        r.complain("noise].correlation", f"expected identity | ar1:<rho>, got {corr!r}")
        corr = "identity"

    # [prior]
    parameterization = (r.get("prior", "parameterization", "log") or "log").lower()
    if parameterization == "log-latent":
        parameterization = "log"
    if parameterization not in ("linear", "log"):
        r.complain("prior].parameterization", f"expected linear | log, got {parameterization!r}")
        parameterization = "log"
    order = r.integer("prior", "difference_order", 2)
    if order not in (1, 2):
        r.complain("prior].difference_order", f"expected 1 or 2, got {order}")
        order = 2
    tau = r.number("prior", "tau", 1.0)
    center_ei = r.number("prior", "center_ei", required=True) or 1.0
    if not (center_ei > 0):
        r.complain("prior].center_ei", "must be > 0")
        center_ei = 1.0

    # [hyper]
    policy = (r.get("hyper", "policy", "fixed") or "fixed").lower()
    if policy not in ("fixed", "evidence", "quasi-optimality"):
        r.complain("hyper].policy", f"expected fixed | evidence | quasi-optimality, got {policy!r}")
        policy = "fixed"
    sigma2_grid = r.grid("hyper", "sigma2")
    tau_grid = r.grid("hyper", "tau")
    k_grid = r.grid("hyper", "k_theta")
    lambda_grid = r.grid("hyper", "lambda")
    if policy == "quasi-optimality" and lambda_grid is None:
        lambda_grid = np.logspace(-10, -2, 40)

    # [truth]
    truth = None
    if parser.has_section("truth"):
        base_ei = r.number("truth", "base_ei", required=True) or 1.0
        zones = _parse_zones(r, r.get("truth", "zones", "") or "")
        try:
            truth = TruthProfile(base_ei=base_ei, zones=zones)
        except Exception as exc:
            r.complain("truth", str(exc))

    # [ingest]
    window = r.numbers("ingest", "window", [5.0, 30.0])
    baseline_s = r.number("ingest", "baseline_seconds", 4.0)
    min_corr = r.number("ingest", "min_correlation", 0.85)
    groups = None
    groups_text = r.get("ingest", "groups")
    if groups_text:
        groups = {}
        for token in (t.strip() for t in groups_text.split(",") if t.strip()):
            if ":" not in token:
                r.complain("ingest].groups", f"expected composite:ch1+ch2, got {token!r}")
                continue
            cid, members = token.split(":", 1)
            groups[cid.strip()] = tuple(mm.strip() for mm in members.split("+"))
    ingest_spec = None
    try:
        ingest_spec = IngestSpec(
            speed_m_s=speed,
            start_offset_m=start_offset,
            window=(float(window[0]), float(window[1])),
            baseline_seconds=baseline_s,
            min_correlation=min_corr,
            groups=groups,
            signs=signs or None,
        )
    except Exception as exc:
        r.complain("ingest", str(exc))

    # [sweep]
    sigma_levels = r.numbers("sweep", "sigma_levels_mm", [0.02, 0.01, 0.005, 0.001])
    sweep_seeds = r.integer("sweep", "seeds", 20)
    n_list = [int(n) for n in r.numbers("sweep", "n_list", [8, 16, 32, 48, 64, 96, 144, 200])]
    reference_n = r.integer("sweep", "reference_n", 48)
    sets_text = r.get("sweep", "r_positions")
    sensor_sets = []
    if sets_text:
        for group in sets_text.split("|"):
            try:
                sensor_sets.append([float(x) for x in group.split(",") if x.strip()])
            except ValueError:
                r.complain("sweep].r_positions", f"bad number in {group!r}")

    # [output]
    out_dir = Path(r.get("output", "directory", "out") or "out")
    if not out_dir.is_absolute():
        out_dir = path.parent / out_dir
    seed = r.integer("output", "seed", 0)
    band_method = (r.get("output", "band_method", "delta") or "delta").lower()
    if band_method not in ("delta", "sampling"):
        r.complain("output].band_method", f"expected delta | sampling, got {band_method!r}")
        band_method = "delta"

    if r.errors:
        raise ConfigError(r.errors)

    return RunConfig(
        system=system,
        estimate_springs=springs_mode == "estimate",
        n_per_span=n_per_span,
        breakpoints=breakpoints,
        sensors=sensors,
        signs=signs,
        train=train,
        sweep=sweep,
        sigma_rad=sigma_rad,
        noise_structure=corr,
        noise_rho=rho,
        parameterization=parameterization,
        difference_order=order,
        tau=tau,
        center_ei=center_ei,
        hyper_policy=policy,
        sigma2_grid=sigma2_grid,
        tau_grid=tau_grid,
        k_grid=k_grid,
        lambda_grid=lambda_grid,
        output_dir=out_dir,
        seed=seed,
        speed_m_s=speed,
        start_offset_m=start_offset,
        trace_rate_hz=rate,
        trace_seconds=seconds,
        crossings=crossings,
        data_paths=data_paths,
        ingest=ingest_spec,
        truth=truth,
        sigma_levels_mm=sigma_levels,
        sweep_seeds=sweep_seeds,
        n_list=n_list,
        sensor_sets=sensor_sets,
        reference_n=reference_n,
        band_method=band_method,
        config_hash=hashlib.sha256(raw).hexdigest(),
        config_path=str(path),
    )
