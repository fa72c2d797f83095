"""Orchestration: turn a validated config plus measurements into posterior
rigidity bands, Fisher diagnostics, fit series, and deterministic exports.

Every artifact a run writes is a pure function of (config bytes, data bytes,
seed): no timestamps, sorted JSON keys, fixed float formatting, and atomic
write-then-rename.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .assembly import build_design_matrix, build_mesh
from .config import RunConfig
from .diagnostics import FisherReport, fisher_report
from .exceptions import DomainError, ModelError
from .fem import compliance_jacobian, fe_rotation_matrix, forward_operator
from .inference import (
    CredibleBand,
    GaussianPosterior,
    HyperEstimate,
    NoiseModel,
    PriorSpec,
    posterior_linear,
    quasi_optimality_lambda,
    maximize_evidence,
    rigidity_credible_band,
)
from .ingest import ingest_tilt_csv, write_tilt_csv
from .model import (
    BeamSystem,
    ComplianceField,
    MeasurementSet,
    Mesh,
    RigidityField,
    Support,
)
from .synthetic import invert_latent, replicate_rng, synthesize_traces


def run_mesh(config: RunConfig) -> Mesh:
    if config.breakpoints is not None:
        return build_mesh(config.system, breakpoints=config.breakpoints)
    return build_mesh(config.system, n_per_span=config.n_per_span)


def system_with_springs(system: BeamSystem, k_theta: float) -> BeamSystem:
    """Replace both abutment rotational springs with a shared stiffness."""
    supports = list(system.supports)
    supports[0] = Support(k_theta, supports[0].vertical)
    supports[-1] = Support(k_theta, supports[-1].vertical)
    return dataclasses.replace(system, supports=tuple(supports))


def _noise(config: RunConfig, m: int) -> NoiseModel:
    sigma2 = config.sigma_rad**2
    if config.noise_structure == "ar1":
        r, k = len(config.sensors), config.sweep.size
        if r * k != m:
            raise DomainError("AR(1) layout does not match the data size")
        return NoiseModel.ar1(sigma2, config.noise_rho, r, k)
    return NoiseModel.iid(sigma2)


def _prior(config: RunConfig, n: int, tau: float | None = None) -> PriorSpec:
    v0 = 1.0 / config.center_ei
    center = np.full(n, np.log(v0) if config.parameterization == "log" else v0)
    return PriorSpec(
        config.parameterization, config.difference_order,
        config.tau if tau is None else tau, center,
    )


def _linearized(system, mesh, config, prior, at: np.ndarray | None = None):
    """Design matrix and working data offset, linearized at ``at`` (field
    space; defaults to the prior center).

    Returns (J_field, theta0) where J_field is the Jacobian in the prior's
    parameterization and theta0 the forward value at the linearization point.
    """
    point = prior.center if at is None else at
    v0 = np.exp(point) if config.parameterization == "log" else point
    if system.is_single_span_ss:
        A = build_design_matrix(system, config.sensors, config.sweep, mesh, config.train)
        theta0 = A @ v0
        Jv = A
    else:
        field = ComplianceField(mesh, v0)
        theta0 = fe_rotation_matrix(
            system, field, config.sensors, config.sweep, config.train
        ).ravel()
        Jv = compliance_jacobian(system, field, config.sensors, config.sweep, config.train)
    J = Jv * v0[None, :] if config.parameterization == "log" else Jv
    return J, theta0, point


@dataclass
class ResultBundle:
    """Everything one inversion run produces, ready for export."""

    mesh: Mesh
    band: CredibleBand
    posterior: GaussianPosterior
    fisher: FisherReport
    hyper: HyperEstimate | None
    channels: tuple[str, ...]
    positions: np.ndarray
    measured: np.ndarray  # (R, K) rad
    predicted: np.ndarray  # (R, K) rad
    k_theta: float | None
    convergence: dict
    provenance: dict

    def report(self) -> dict:
        spec = self.fisher.spectrum
        hyper = None
        if self.hyper is not None:
            hyper = {
                "method": self.hyper.method,
                "sigma2": self.hyper.sigma2,
                "tau": self.hyper.tau,
                "lambda": self.hyper.lam,
                "k_theta": self.hyper.k_theta,
                "flags": list(self.hyper.flags),
                "n_evaluations": len(self.hyper.trace),
            }
        return {
            "elements": {
                "x_left": self.mesh.breakpoints[:-1].tolist(),
                "x_right": self.mesh.breakpoints[1:].tolist(),
                "ei_mean": self.band.ei_mean.tolist(),
                "lo75": self.band.lo75.tolist(),
                "hi75": self.band.hi75.tolist(),
                "lo95": self.band.lo95.tolist(),
                "hi95": self.band.hi95.tolist(),
            },
            "hyper": hyper,
            "k_theta": self.k_theta,
            "convergence": self.convergence,
            "fisher": {
                "eigenvalues": spec.eigenvalues.tolist(),
                "rank": spec.rank,
                "threshold": spec.threshold,
            },
            "provenance": self.provenance,
        }


def run_inversion(config: RunConfig, data: MeasurementSet) -> ResultBundle:
    """Assemble the forward model, select hyperparameters per policy, invert,
    and collect bands, diagnostics, and the data-model comparison."""
    mesh = run_mesh(config)
    n = mesh.n_elements
    y = data.stacked
    noise = _noise(config, y.size)
    prior = _prior(config, n)
    hyper: HyperEstimate | None = None
    k_theta: float | None = None
    system = config.system

    # a linearized evidence pass is exact for the linear determinate route;
    # everywhere else one relinearization at the provisional MAP removes the
    # bias of expanding around the prior center
    exactly_linear = system.is_single_span_ss and config.parameterization == "linear"

    if config.hyper_policy == "evidence":
        lin_point = None
        passes = 1 if exactly_linear else 2
        for pass_i in range(passes):
            if config.estimate_springs:
                k_grid = (
                    config.k_grid if config.k_grid is not None else np.logspace(5, 11, 25)
                )

                def builder(k, lp=lin_point):
                    sys_k = system_with_springs(system, k)
                    J, theta0, point = _linearized(sys_k, mesh, config, prior, lp)
                    return J, y - theta0 + J @ point

                hyper = maximize_evidence(
                    builder, y, noise, prior,
                    sigma2_grid=config.sigma2_grid, tau_grid=config.tau_grid,
                    k_grid=k_grid,
                )
                k_theta = hyper.k_theta
                sys_pass = system_with_springs(system, k_theta)
            else:
                J, theta0, point = _linearized(system, mesh, config, prior, lin_point)
                y_lin = y - theta0 + J @ point
                hyper = maximize_evidence(
                    J, y_lin, noise, prior,
                    sigma2_grid=config.sigma2_grid, tau_grid=config.tau_grid,
                )
                sys_pass = system
            if pass_i + 1 < passes:
                gn_pass, _ = invert_latent(
                    sys_pass, mesh, config.sensors, config.sweep, y,
                    noise.with_sigma2(hyper.sigma2), prior.with_tau(hyper.tau),
                    config.train,
                )
                lin_point = gn_pass.map
        if config.estimate_springs:
            system = system_with_springs(system, k_theta)
        noise = noise.with_sigma2(hyper.sigma2)
        prior = prior.with_tau(hyper.tau)
    elif config.hyper_policy == "quasi-optimality":
        if config.estimate_springs:
            raise ModelError("spring estimation needs the evidence policy")
        J, theta0, point = _linearized(system, mesh, config, prior)
        y_lin = y - theta0 + J @ point
        hyper = quasi_optimality_lambda(J, y_lin, noise, prior, config.lambda_grid)
        prior = prior.with_tau(hyper.lam / noise.sigma2)
    elif config.estimate_springs:
        raise ModelError("spring estimation needs the evidence policy")

    if system.is_single_span_ss and config.parameterization == "linear":
        A = build_design_matrix(system, config.sensors, config.sweep, mesh, config.train)
        posterior = posterior_linear(A, y, noise, prior)
        predicted = (A @ posterior.mean).reshape(data.y.shape)
        v_map = posterior.mean
        convergence = {"path": "linear", "converged": True}
    else:
        gn, posterior = invert_latent(
            system, mesh, config.sensors, config.sweep, y, noise, prior, config.train
        )
        v_map = np.exp(gn.map) if config.parameterization == "log" else gn.map
        op = forward_operator(system, mesh, config.sensors, list(config.sweep), config.train)
        predicted = op(v_map)[0].reshape(data.y.shape)
        convergence = {
            "path": "gauss-newton",
            "converged": gn.converged,
            "accepted_steps": gn.n_accepted,
            "gradient_norm": gn.gradient_norm,
            "message": gn.message,
        }

    band = rigidity_credible_band(posterior, config.band_method, seed=config.seed)
    rigidity = RigidityField(mesh, 1.0 / v_map)
    fisher = fisher_report(
        system, rigidity, config.sensors, config.sweep, noise, config.train
    )
    provenance = {
        "config_sha256": config.config_hash,
        "config_path": os.path.basename(config.config_path),
        "seed": config.seed,
        "version": __version__,
        "policy": config.hyper_policy,
        "parameterization": config.parameterization,
    }
    return ResultBundle(
        mesh=mesh,
        band=band,
        posterior=posterior,
        fisher=fisher,
        hyper=hyper,
        channels=tuple(s.id for s in config.sensors),
        positions=config.sweep.copy(),
        measured=data.y.copy(),
        predicted=predicted,
        k_theta=k_theta,
        convergence=convergence,
        provenance=provenance,
    )


# --------------------------------------------------------------------------
# deterministic exports
# --------------------------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def export_results(bundle: ResultBundle, directory) -> list[Path]:
    """Write ei_profile.csv, fit.csv, fisher_curves.csv, and report.json.

    Full-precision serialization; identical bundles produce byte-identical
    files.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []

    lines = ["x_left,x_right,ei_mean,lo75,hi75,lo95,hi95"]
    b = bundle.band
    for j in range(bundle.mesh.n_elements):
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    bundle.mesh.breakpoints[j],
                    bundle.mesh.breakpoints[j + 1],
                    b.ei_mean[j],
                    b.lo75[j],
                    b.hi75[j],
                    b.lo95[j],
                    b.hi95[j],
                )
            )
        )
    path = directory / "ei_profile.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    written.append(path)

    lines = ["channel,position_m,measured_rad,predicted_rad"]
    for i, ch in enumerate(bundle.channels):
        for k, x in enumerate(bundle.positions):
            lines.append(
                f"{ch},{_fmt(x)},{_fmt(bundle.measured[i, k])},{_fmt(bundle.predicted[i, k])}"
            )
    path = directory / "fit.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    written.append(path)

    lines = ["sensor,x_mid,info"]
    for i, ch in enumerate(bundle.fisher.sensor_ids):
        for j, x in enumerate(bundle.fisher.midpoints):
            lines.append(f"{ch},{_fmt(x)},{_fmt(bundle.fisher.curves[i, j])}")
    path = directory / "fisher_curves.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    written.append(path)

    path = directory / "report.json"
    _atomic_write(path, json.dumps(bundle.report(), sort_keys=True, indent=2) + "\n")
    written.append(path)
    return written


# --------------------------------------------------------------------------
# synthetic crossings through the measurement-file path
# --------------------------------------------------------------------------

def simulate_crossings(config: RunConfig, directory) -> list[Path]:
    """Write seeded synthetic tilt-trace CSVs (one file per crossing) plus a
    truth_ei.csv reference, so synthetic and field data follow one path."""
    if config.truth is None:
        raise DomainError("simulation needs a [truth] section")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mesh = run_mesh(config)
    truth = config.truth.project(mesh)
    duration = config.trace_seconds
    if duration <= 0.0:
        travel = config.system.total_length - min(config.train.offsets) - config.start_offset_m
        duration = (travel + 2.0) / abs(config.speed_m_s)
    written = []
    for c in range(config.crossings):
        seed = int(replicate_rng(config.seed, c).integers(2**31 - 1))
        traces = synthesize_traces(
            config.system,
            truth,
            config.sensors,
            config.train,
            speed_m_s=config.speed_m_s,
            start_offset_m=config.start_offset_m,
            rate_hz=config.trace_rate_hz,
            duration_s=duration,
            sigma_mm_per_m=float(config.sigma_rad * 1e3),
            seed=seed,
        )
        path = directory / f"crossing_{c + 1:02d}.csv"
        write_tilt_csv(path, traces)
        written.append(path)
    lines = ["x_left,x_right,ei"]
    for j in range(mesh.n_elements):
        lines.append(
            f"{_fmt(mesh.breakpoints[j])},{_fmt(mesh.breakpoints[j + 1])},{_fmt(truth.values[j])}"
        )
    path = directory / "truth_ei.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    written.append(path)
    return written


def ingest_from_config(config: RunConfig, paths: Sequence | None = None) -> MeasurementSet:
    files = list(paths) if paths else config.data_paths
    if not files:
        raise DomainError("no measurement files: set [loads] data or pass paths")
    return ingest_tilt_csv(files, config.ingest, config.sensors, config.sweep)
