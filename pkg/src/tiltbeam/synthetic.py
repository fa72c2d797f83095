"""Ground-truth rigidity profiles and seeded forward simulation of noisy
tilt measurements for desk-scale studies.

Reproducibility rule: every replicate draws from
``default_rng(SeedSequence(master_seed, spawn_key=(indices...)))``, so
parallel execution order can never change a dataset.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import DomainError
from .fem import forward_operator
from .inference import (
    CredibleBand,
    GaussianPosterior,
    GaussNewtonResult,
    NoiseModel,
    PriorSpec,
    _gamma_solve,
    gauss_newton_map,
    rigidity_credible_band,
)
from .model import (
    AxleTrain,
    BeamSystem,
    ComplianceField,
    MeasurementSet,
    Mesh,
    RigidityField,
    SensorStation,
    mm_per_m_to_rad,
    rad_to_mm_per_m,
)


def replicate_rng(master_seed: int, *indices: int) -> np.random.Generator:
    """The documented seed-splitting rule for parallel replicates."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(indices)))


@dataclass(frozen=True)
class TruthProfile:
    """Stepped ground-truth rigidity: a base EI with damage zones.

    Each zone is ``(start_m, end_m, factor)`` with factor in (0, 1); zones
    must be disjoint (overlaps would compose ambiguously and are rejected).
    """

    base_ei: float
    zones: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        if not (self.base_ei > 0.0):
            raise DomainError(f"base EI must be > 0, got {self.base_ei}")
        zones = tuple((float(a), float(b), float(f)) for a, b, f in self.zones)
        object.__setattr__(self, "zones", zones)
        for a, b, f in zones:
            if not (a < b):
                raise DomainError(f"zone [{a}, {b}] is empty or reversed")
            if not (0.0 < f < 1.0):
                raise DomainError(f"zone factor must be in (0, 1), got {f}")
        spans = sorted((a, b) for a, b, _ in zones)
        for (a1, b1), (a2, b2) in zip(spans, spans[1:]):
            if a2 < b1:
                raise DomainError(f"zones [{a1},{b1}] and [{a2},{b2}] overlap")

    def value_at(self, x: float) -> float:
        for a, b, f in self.zones:
            if a <= x < b:
                return self.base_ei * f
        return self.base_ei

    def breakpoints(self, total_length: float) -> np.ndarray:
        pts = {0.0, float(total_length)}
        for a, b, _ in self.zones:
            if not (0.0 <= a and b <= total_length):
                raise DomainError(f"zone [{a}, {b}] outside [0, {total_length}]")
            pts.update((a, b))
        return np.array(sorted(pts))

    def project(self, mesh: Mesh) -> RigidityField:
        """Exact area-weighted average of the stepped profile per element."""
        edges = self.breakpoints(mesh.total_length)
        values = np.empty(mesh.n_elements)
        for j in range(mesh.n_elements):
            lo, hi = mesh.breakpoints[j], mesh.breakpoints[j + 1]
            cuts = np.unique(np.concatenate([[lo, hi], edges[(edges > lo) & (edges < hi)]]))
            mids = 0.5 * (cuts[:-1] + cuts[1:])
            widths = np.diff(cuts)
            values[j] = np.sum(widths * [self.value_at(m) for m in mids]) / (hi - lo)
        return RigidityField(mesh, values)


def make_truth(base_ei: float, zones: Sequence[tuple[float, float, float]], mesh: Mesh) -> RigidityField:
    """Project a stepped base-EI-with-damage-zones profile onto a mesh."""
    return TruthProfile(base_ei, tuple(zones)).project(mesh)


@dataclass(frozen=True)
class SyntheticDataset:
    """Seeded noisy rotations plus everything needed to reproduce them."""

    measurements: MeasurementSet
    truth: RigidityField
    noise: NoiseModel
    seed: int
    clean: np.ndarray  # noise-free (R, K) rotations

    @property
    def sigma_rad(self) -> float:
        return float(np.sqrt(self.noise.sigma2))

    @property
    def sigma_mm_per_m(self) -> float:
        return float(rad_to_mm_per_m(self.sigma_rad))


def simulate(
    system: BeamSystem,
    truth: RigidityField,
    sensors: Sequence[SensorStation],
    sweep: Sequence[float],
    noise: NoiseModel,
    seed: int,
    train: AxleTrain | None = None,
) -> SyntheticDataset:
    """Forward-simulate ``y = theta(truth) + eps`` with ``eps ~ N(0, sigma^2 Gamma)``.

    The clean rotations come from the exact analytic map on a simply
    supported span and from the finite element model otherwise, always on
    the truth's own mesh.  ``sigma2 = 0`` is not representable in
    :class:`NoiseModel`; pass a tiny value or use the returned ``clean``
    field for noise-free oracles.
    """
    sweep = np.asarray(sweep, dtype=float)
    op = forward_operator(system, truth.mesh, sensors, list(sweep), train)
    clean = op(truth.to_compliance().values)[0].reshape(len(sensors), sweep.size)
    rng = np.random.default_rng(seed)
    m = clean.size
    z = rng.standard_normal(m)
    if noise.structure == "identity":
        eps = np.sqrt(noise.sigma2) * z
    else:
        L = np.linalg.cholesky(noise.gamma(m))
        eps = np.sqrt(noise.sigma2) * (L @ z)
    y = clean + eps.reshape(clean.shape)
    ms = MeasurementSet(sensors=tuple(sensors), positions=sweep, y=y)
    return SyntheticDataset(measurements=ms, truth=truth, noise=noise, seed=seed, clean=clean)


def synthesize_traces(
    system: BeamSystem,
    truth: RigidityField,
    sensors: Sequence[SensorStation],
    train: AxleTrain,
    speed_m_s: float,
    start_offset_m: float,
    rate_hz: float,
    duration_s: float,
    sigma_mm_per_m: float,
    seed: int,
    baseline_mm_per_m: Sequence[float] | None = None,
):
    """Time-domain tilt traces for one synthetic crossing, in mm/m.

    The reference axle moves as ``x(t) = start_offset + speed * t``; samples
    taken at ``rate_hz`` for ``duration_s``.  Off-domain axles contribute
    nothing, so a lead-in with the vehicle off the bridge produces the flat
    baseline that ingestion's median removal expects.  Returns
    :class:`tiltbeam.ingest.TiltTrace` objects, one per sensor channel.
    """
    from .assembly import build_design_matrix
    from .fem import fe_rotation_matrix
    from .ingest import TiltTrace

    t = np.arange(0.0, float(duration_s), 1.0 / float(rate_hz))
    x = start_offset_m + speed_m_s * t
    if system.is_single_span_ss:
        A = build_design_matrix(system, sensors, x, truth.mesh, train, enforce_path=False)
        theta = (A @ truth.to_compliance().values).reshape(len(sensors), t.size)
    else:
        theta = fe_rotation_matrix(
            system, truth.to_compliance(), sensors, x, train, enforce_path=False
        )
    rng = np.random.default_rng(seed)
    tilt = rad_to_mm_per_m(theta) + sigma_mm_per_m * rng.standard_normal(theta.shape)
    if baseline_mm_per_m is not None:
        tilt = tilt + np.asarray(baseline_mm_per_m, dtype=float)[:, None]
    return [
        TiltTrace(
            channel=s.id,
            time_s=t,
            tilt_mm_per_m=tilt[i],
            rate_hz=rate_hz,
            speed_m_s=speed_m_s,
            start_offset_m=start_offset_m,
        )
        for i, s in enumerate(sensors)
    ]


# --------------------------------------------------------------------------
# noise sweep study (credible-band shrinkage and damage detection)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSweepRecord:
    """Aggregated inversion results at one tilt-noise level."""

    sigma_mm_per_m: float
    mean_width95: float
    detected: bool
    detect_fraction: float
    midpoints: np.ndarray
    mean_ei: np.ndarray
    mean_lo95: np.ndarray
    mean_hi95: np.ndarray
    mean_width_per_element: np.ndarray


def _damage_mask(profile: TruthProfile, mesh: Mesh) -> np.ndarray:
    mids = mesh.midpoints
    mask = np.zeros(mids.size, dtype=bool)
    for a, b, _ in profile.zones:
        mask |= (mids > a) & (mids < b)
    return mask


def detect_damage(band: CredibleBand, damaged: np.ndarray) -> bool:
    """Damage flag: every damaged element's posterior mean lies below the
    smallest 95% lower bound among the *interior* undamaged elements.

    Support-adjacent elements are excluded from the reference set because
    rotations carry almost no information there and their lower bounds stay
    wide at every noise level; including them would make the flag insensitive
    rather than conservative.
    """
    n = band.ei_mean.size
    interior = np.ones(n, dtype=bool)
    interior[0] = interior[-1] = False
    reference = interior & ~damaged
    if not np.any(damaged) or not np.any(reference):
        return False
    return bool(np.max(band.ei_mean[damaged]) < np.min(band.lo95[reference]))


def invert_latent(
    system: BeamSystem,
    mesh: Mesh,
    sensors: Sequence[SensorStation],
    sweep: Sequence[float],
    y: np.ndarray,
    noise: NoiseModel,
    prior: PriorSpec,
    train: AxleTrain | None = None,
) -> tuple[GaussNewtonResult, GaussianPosterior]:
    """Gauss-Newton MAP in the requested parameterization plus its Laplace
    posterior; the shared inversion core of the synthetic studies."""
    op = forward_operator(system, mesh, sensors, list(sweep), train)
    res = gauss_newton_map(op, np.ravel(y), noise, prior, init=prior.center.copy())
    J = res.jacobian_latent
    H = J.T @ _gamma_solve(noise, J) / noise.sigma2 + prior.precision()
    post = GaussianPosterior(res.map, H, prior.parameterization, lam=noise.sigma2 * prior.tau)
    return res, post


def noise_sweep_study(
    system: BeamSystem,
    profile: TruthProfile,
    mesh: Mesh,
    sensors: Sequence[SensorStation],
    sweep: Sequence[float],
    sigmas_mm_per_m: Sequence[float],
    tau_eta: float,
    n_seeds: int = 1,
    master_seed: int = 0,
    train: AxleTrain | None = None,
) -> list[NoiseSweepRecord]:
    """Invert the same damaged-beam truth at decreasing tilt-noise levels.

    Per level and seed: simulate, run the log-latent Gauss-Newton MAP with
    the true sigma and fixed tau_eta, form 95% bands, record band widths and
    the damage-detection flag.  Returns one aggregated record per level.
    """
    sigmas = [float(s) for s in sigmas_mm_per_m]
    if len(sigmas) < 2:
        raise DomainError("noise sweep needs at least two levels")
    truth = profile.project(mesh)
    eta0 = np.full(mesh.n_elements, np.log(1.0 / profile.base_ei))
    damaged = _damage_mask(profile, mesh)
    records = []
    for li, s_mm in enumerate(sigmas):
        sigma2 = float(mm_per_m_to_rad(s_mm)) ** 2
        noise = NoiseModel.iid(sigma2)
        prior = PriorSpec("log", 2, tau_eta, eta0)
        widths, eis, los, his, flags = [], [], [], [], []
        for s in range(n_seeds):
            seed = int(replicate_rng(master_seed, li, s).integers(2**31 - 1))
            ds = simulate(system, truth, sensors, sweep, noise, seed, train)
            _, post = invert_latent(system, mesh, sensors, sweep,
                                    ds.measurements.stacked, noise, prior, train)
            band = rigidity_credible_band(post, "delta")
            widths.append(band.width(0.95))
            eis.append(band.ei_mean)
            los.append(band.lo95)
            his.append(band.hi95)
            flags.append(detect_damage(band, damaged))
        frac = float(np.mean(flags))
        records.append(
            NoiseSweepRecord(
                sigma_mm_per_m=s_mm,
                mean_width95=float(np.mean(widths)),
                detected=frac >= 0.5,
                detect_fraction=frac,
                midpoints=mesh.midpoints.copy(),
                mean_ei=np.mean(eis, axis=0),
                mean_lo95=np.mean(los, axis=0),
                mean_hi95=np.mean(his, axis=0),
                mean_width_per_element=np.mean(widths, axis=0),
            )
        )
    return records
