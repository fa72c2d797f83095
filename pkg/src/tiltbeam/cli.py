"""Command-line surface: reproducible runs driven by a config file.

Subcommands: ``simulate``, ``ingest``, ``invert``, ``fisher``,
``sweep-noise``, ``sweep-bv``; each takes ``--config``, ``--seed``,
``--out``.  Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .diagnostics import bias_variance_sweep, fisher_report
from .exceptions import (
    ConfigError,
    DomainError,
    IngestError,
    ModelError,
    NumericError,
    SweepError,
    TiltBeamError,
)
from .inference import NoiseModel
from .model import RigidityField, SensorStation
from .synthetic import noise_sweep_study
from .workflow import (
    _atomic_write,
    _fmt,
    export_results,
    ingest_from_config,
    run_inversion,
    run_mesh,
    simulate_crossings,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _load(args) -> RunConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.out is not None:
        config.output_dir = Path(args.out)
    return config


def _cmd_simulate(args) -> int:
    config = _load(args)
    written = simulate_crossings(config, config.output_dir)
    for p in written:
        print(p)
    return EXIT_OK


def _cmd_ingest(args) -> int:
    config = _load(args)
    ms = ingest_from_config(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["channel,position_m,rotation_rad"]
    for i, s in enumerate(ms.sensors):
        for k, x in enumerate(ms.positions):
            lines.append(f"{s.id},{_fmt(x)},{_fmt(ms.y[i, k])}")
    path = out / "measurements.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    print(path)
    return EXIT_OK


def _cmd_invert(args) -> int:
    config = _load(args)
    data = ingest_from_config(config)
    bundle = run_inversion(config, data)
    for p in export_results(bundle, config.output_dir):
        print(p)
    return EXIT_OK


def _cmd_fisher(args) -> int:
    config = _load(args)
    mesh = run_mesh(config)
    rigidity = RigidityField(mesh, np.full(mesh.n_elements, config.center_ei))
    noise = NoiseModel.iid(config.sigma_rad**2)
    report = fisher_report(
        config.system, rigidity, config.sensors, config.sweep, noise, config.train
    )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["sensor,x_mid,info"]
    for i, ch in enumerate(report.sensor_ids):
        for j, x in enumerate(report.midpoints):
            lines.append(f"{ch},{_fmt(x)},{_fmt(report.curves[i, j])}")
    path = out / "fisher_curves.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    print(path)
    summary = {
        "eigenvalues": report.spectrum.eigenvalues.tolist(),
        "rank": report.spectrum.rank,
        "threshold": report.spectrum.threshold,
        "sensors": list(report.sensor_ids),
        "version": __version__,
        "config_sha256": config.config_hash,
    }
    path = out / "report.json"
    _atomic_write(path, json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(path)
    return EXIT_OK


def _cmd_sweep_noise(args) -> int:
    config = _load(args)
    if config.truth is None:
        raise DomainError("sweep-noise needs a [truth] section")
    mesh = run_mesh(config)
    records = noise_sweep_study(
        config.system,
        config.truth,
        mesh,
        config.sensors,
        config.sweep,
        config.sigma_levels_mm,
        tau_eta=config.tau,
        n_seeds=config.sweep_seeds,
        master_seed=config.seed,
        train=config.train,
    )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["sigma_mm_per_m,mean_width95,detected,detect_fraction"]
    for r in records:
        lines.append(
            f"{_fmt(r.sigma_mm_per_m)},{_fmt(r.mean_width95)},{int(r.detected)},{_fmt(r.detect_fraction)}"
        )
    path = out / "noise_sweep.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    print(path)
    lines = ["sigma_mm_per_m,x_mid,ei_mean,lo95,hi95"]
    for r in records:
        for j, x in enumerate(r.midpoints):
            lines.append(
                ",".join(
                    _fmt(v)
                    for v in (r.sigma_mm_per_m, x, r.mean_ei[j], r.mean_lo95[j], r.mean_hi95[j])
                )
            )
    path = out / "noise_sweep_bands.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    print(path)
    return EXIT_OK


def _cmd_sweep_bv(args) -> int:
    config = _load(args)
    if config.truth is None:
        raise DomainError("sweep-bv needs a [truth] section")
    if not config.sensor_sets:
        raise DomainError("sweep-bv needs [sweep] r_positions")
    sensor_sets = [
        [SensorStation(f"R{len(g)}S{i+1}", p) for i, p in enumerate(g)]
        for g in config.sensor_sets
    ]
    records = bias_variance_sweep(
        config.system,
        config.truth,
        sensor_sets,
        config.sweep,
        sigma_rad=config.sigma_rad,
        n_list=config.n_list,
        n_seeds=config.sweep_seeds,
        reference_n=config.reference_n,
        lambda_grid=config.lambda_grid,
        prior_order=config.difference_order,
        master_seed=config.seed,
    )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["n_elements,n_sensors,lambda,rmse,bias2,variance,mc_se_rmse2,n_failures"]
    for r in records:
        lines.append(
            ",".join(
                [str(r.n_elements), str(r.n_sensors)]
                + [_fmt(v) for v in (r.lam, r.rmse, r.bias2, r.variance, r.mc_se_rmse2)]
                + [str(r.n_failures)]
            )
        )
    path = out / "bv_sweep.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    print(path)
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "ingest": _cmd_ingest,
    "invert": _cmd_invert,
    "fisher": _cmd_fisher,
    "sweep-noise": _cmd_sweep_noise,
    "sweep-bv": _cmd_sweep_bv,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiltbeam",
        description="Distributed flexural rigidity from tilt influence lines.",
    )
    parser.add_argument("--version", action="version", version=f"tiltbeam {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", required=True, help="run config file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=None, help="output directory override")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, DomainError, ModelError, IngestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericError, SweepError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except TiltBeamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
