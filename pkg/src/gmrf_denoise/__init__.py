"""Linear-time Bayesian image denoising with a lattice smoothness prior.

The package estimates noise level and prior strength from one or more
degraded copies of an image by EM, where every E-step statistic is
either a Gauss-Seidel sweep (linear time) or a closed spectral form,
then restores the image as the posterior mean. A dense oracle and an
FFT-based baseline cross-validate the fast path at small sizes.
"""

from .bench import METHODS, run_bench
from .checks import run_checks
from .em import EMConfig, EMIterationRecord, EMTrace, NumericalError, restore, run_em
from .em_spectral import (
    SpectralObs,
    run_em_spectral,
    spectral_map,
    spectral_posterior_gradients,
)
from .free_energy import (
    ALPHA_FLOOR,
    LAMBDA_FLOOR,
    SIGMA2_FLOOR,
    GradientReport,
    PosteriorStats,
    alpha_init,
    alpha_init_from_stats,
    posterior_free_energy,
    posterior_gradients,
    posterior_stats,
    prior_free_energy,
    prior_gradients,
    q_gradients,
    q_gradients_from_stats,
    sigma2_from_stats,
    sigma2_update,
)
from .instrument import WorkCounter, resolvent_touches, sweep_touches
from .lattice import (
    Hyperparams,
    ImageBuffer,
    LatticeSpec,
    ObservationSet,
    center,
    edge_sq_sum,
)
from .meanfield import MeanFieldState, fixed_point_residual, mf_sweep, solve_map
from .metrics import mse, psnr
from .noise import NoiseSpec, degrade, sample_prior, synthetic_scene
from .oracle import (
    MAX_DENSE_V,
    DenseGaussian,
    build_posterior,
    build_prior,
    exact_q_gradients,
    finite_difference,
    laplacian_dense,
    posterior_free_energy_dense,
    run_em_dense,
)
from .pgm import quantize, read_gray_image, read_pgm, write_gray_image, write_pgm
from .spectral import (
    Boundary,
    SpectrumTable,
    TransformPlan,
    dct_matrix,
    eigenvalues,
    forward,
    inverse,
    make_plan,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # lattice
    "LatticeSpec",
    "ImageBuffer",
    "ObservationSet",
    "Hyperparams",
    "center",
    "edge_sq_sum",
    # spectral
    "Boundary",
    "SpectrumTable",
    "TransformPlan",
    "eigenvalues",
    "dct_matrix",
    "make_plan",
    "forward",
    "inverse",
    # mean field
    "MeanFieldState",
    "mf_sweep",
    "solve_map",
    "fixed_point_residual",
    # free energy and gradients
    "LAMBDA_FLOOR",
    "ALPHA_FLOOR",
    "SIGMA2_FLOOR",
    "GradientReport",
    "PosteriorStats",
    "prior_free_energy",
    "prior_gradients",
    "posterior_free_energy",
    "posterior_gradients",
    "posterior_stats",
    "q_gradients",
    "q_gradients_from_stats",
    "sigma2_update",
    "sigma2_from_stats",
    "alpha_init",
    "alpha_init_from_stats",
    # EM drivers
    "EMConfig",
    "EMIterationRecord",
    "EMTrace",
    "NumericalError",
    "run_em",
    "restore",
    "SpectralObs",
    "spectral_posterior_gradients",
    "spectral_map",
    "run_em_spectral",
    # oracle
    "MAX_DENSE_V",
    "DenseGaussian",
    "laplacian_dense",
    "build_prior",
    "build_posterior",
    "posterior_free_energy_dense",
    "exact_q_gradients",
    "finite_difference",
    "run_em_dense",
    # data and metrics
    "NoiseSpec",
    "degrade",
    "sample_prior",
    "synthetic_scene",
    "mse",
    "psnr",
    "quantize",
    "read_pgm",
    "write_pgm",
    "read_gray_image",
    "write_gray_image",
    # instrumentation
    "WorkCounter",
    "sweep_touches",
    "resolvent_touches",
    # harnesses
    "METHODS",
    "run_bench",
    "run_checks",
]
