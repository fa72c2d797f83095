"""Bayesian identification of distributed beam flexural rigidity from
rotation (tilt) influence lines, with Fisher-information diagnostics of
sensor informativeness and identifiability."""

__version__ = "0.1.0"

from .exceptions import (
    ConfigError,
    DomainError,
    IdentifiabilityError,
    IngestError,
    ModelError,
    NumericError,
    SweepError,
    TiltBeamError,
)
from .model import (
    RIGID,
    AxleTrain,
    BeamSystem,
    ComplianceField,
    MeasurementSet,
    Mesh,
    RigidityField,
    SensorStation,
    Support,
    mm_per_m_to_rad,
    rad_to_mm_per_m,
    tonnes_to_newtons,
)
from .kernels import kernel, load_moment, moment_influence, rotation_uniform_ss
from .assembly import (
    build_design_matrix,
    build_mesh,
    difference_operator,
    element_integral,
)
from .fem import (
    FESolution,
    compliance_jacobian,
    fe_rotation_matrix,
    fe_solve,
    fe_solve_couple,
    forward_operator,
)
from .inference import (
    CredibleBand,
    GaussNewtonResult,
    GaussianPosterior,
    HyperEstimate,
    NoiseModel,
    Predictive,
    PriorSpec,
    gauss_newton_map,
    gibbs_hyper_updates,
    laplace_covariance,
    log_evidence,
    map_tikhonov,
    maximize_evidence,
    posterior_linear,
    posterior_predictive,
    quasi_optimality_lambda,
    rigidity_credible_band,
    sample_prior,
)
from .diagnostics import (
    FisherReport,
    SpectrumReport,
    SweepRecord,
    bias_variance_sweep,
    fisher_in_rigidity,
    fisher_information,
    fisher_report,
    identifiability_spectrum,
    informativeness_curve,
    per_sensor_fisher,
)
from .synthetic import (
    NoiseSweepRecord,
    SyntheticDataset,
    TruthProfile,
    detect_damage,
    invert_latent,
    make_truth,
    noise_sweep_study,
    replicate_rng,
    simulate,
    synthesize_traces,
)
from .ingest import IngestSpec, TiltTrace, ingest_tilt_csv, read_tilt_csv, write_tilt_csv
from .config import RunConfig, load_config
from .workflow import (
    ResultBundle,
    export_results,
    ingest_from_config,
    run_inversion,
    simulate_crossings,
)
