"""Measure-preserving diffusions: drift recipes, verification harness and geometric MCMC samplers."""

from .errors import (
    ConfigError,
    ConventionError,
    InsufficientDataError,
    InvalidInputError,
    InvalidPointError,
    MpdiffError,
    SamplingError,
    UnsupportedError,
)
from .geometry import (
    EmbeddedSphere,
    EuclideanSpace,
    FlatTorus,
    MatrixLieGroup,
    algebra_force,
    haar_sample,
    lie_exp,
    lie_log,
    project_horizontal,
    sphere_geodesic,
)
from .recipe import (
    AntisymmetricBracket,
    Convention,
    DiffusionSpec,
    NoiseModel,
    TargetDensity,
    a_diffusion_drift,
    assemble_a_diffusion,
    assemble_obstruction,
    euclidean_recipe_drift,
    gauge_shift,
    generator_apply,
    modular_field,
    to_ito,
    to_stratonovich,
    torus_obstruction_drift,
    volume_free_noise,
)
from .integrators import (
    LiePotential,
    SpherePotential,
    StepResult,
    euler_maruyama_step,
    geodesic_splitting_step,
    lie_leapfrog_trajectory,
    ou_exact_step,
    stratonovich_heun_step,
)
from .samplers import (
    Chain,
    SamplerConfig,
    ilmcmc_lie_step,
    ilmcmc_sphere_step,
    mala_step,
    mh_accept,
    run_chain,
    underdamped_trajectory,
)
from .verify import (
    BoundaryPolicy,
    GridSpec,
    ResidualReport,
    current_residual,
    fokker_planck_analysis,
    fokker_planck_residual,
    generator_symmetry_defect,
    kl_decay_trace,
    volume_jacobian_check,
)
from .diagnostics import MomentReport, effective_sample_size, ergodic_average, histogram_kl
from .rng import ChainRNG

__version__ = "0.1.0"
