"""Kernel estimation of the quadratic functional and quadratic Renyi entropy
of stationary linear processes, with a Monte Carlo verification harness."""

__version__ = "0.1.0"

from .charfn import (
    assumption_profile,
    check_a2,
    check_a3,
    density_oracle,
    process_cf,
    quadratic_functional_oracle,
)
from .errors import NoCharacteristicFunction, OracleError, ResolutionError, ValidationError
from .estimator import (
    BandwidthSchedule,
    EstimateResult,
    bandwidth,
    estimate,
    estimate_binned,
    estimate_naive,
    renyi_estimate,
)
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    bias_sweep,
    clt_check,
    long_run_variance,
    rate_check_small_gamma,
    renyi_clt_check,
)
from .kernels import KernelSpec, get_kernel
from .linear_process import (
    ExplicitCoefficients,
    GeometricCoefficients,
    LaplaceLaw,
    LinearProcessSpec,
    NormalLaw,
    PolynomialDecayCoefficients,
    SeriesSample,
    StudentTLaw,
    TabulatedLaw,
    UniformLaw,
    simulate,
    validate_spec,
)

__all__ = [name for name in dir() if not name.startswith("_")]
