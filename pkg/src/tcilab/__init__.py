"""Simulation lab for stochastic reaction-diffusion equations on a
truncated line, driven by multiplicative space-time white noise.

The package exercises every constructive step behind a coupling proof of
a quadratic transportation-cost inequality: weighted heat-kernel bounds,
stochastic convolutions (direct and factorized), Girsanov-coupled solution
pairs, relative entropy, and the resulting constant estimates.
"""

from .config import ExperimentConfig, parse_config, parse_override_args
from .convolution import (
    FactorizationParams,
    drift_convolution,
    gap_convolution,
    stochastic_convolution_direct,
    stochastic_convolution_factorized,
)
from .domain import (
    FieldPath,
    GridSpec,
    WeightedMetricParams,
    tem_l2_metric,
    tem_sup_metric,
    weighted_l2_norm,
    weighted_sup_metric,
)
from .errors import (
    CoefficientContractError,
    ConfigError,
    CouplingIntegrityError,
    DivergenceError,
    GridMismatchError,
    InvalidInputError,
    RangeOverflowError,
    TcilabError,
    TruncationError,
    UnderpoweredError,
)
from .estimators import (
    FactorizationGapReport,
    IsometryConfig,
    LipschitzConfig,
    TciConfig,
    c_hat_band_overlap,
    estimate_moment_l2,
    estimate_moment_sup,
    factorization_gap_study,
    ito_isometry_check,
    moment_refinement_study,
    run_lipschitz_experiment,
    run_tci_experiment,
)
from .heatkernel import (
    apply_semigroup,
    check_kernel_weight_bound_1,
    check_kernel_weight_bound_2,
    check_semigroup_contraction,
    kernel_bound_sweep,
    kernel_value,
)
from .noise import (
    NoisePath,
    ShiftSpec,
    entropy_of_shift,
    girsanov_log_density,
    sample_noise_path,
    scale_shift,
    shift_field,
)
from .presets import (
    coefficient_preset,
    initial_preset,
    scaled_bump_pairs,
    shift_preset,
)
from .solver import (
    CoefficientSpec,
    CoupledRun,
    mild_fixed_point_oracle,
    solve_coupled,
    solve_spde,
    validate_coefficients,
)

__version__ = "0.1.0"
