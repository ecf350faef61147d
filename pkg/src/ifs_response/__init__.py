"""Stationary measures, linear response and its failure for random affine maps."""

from .errors import (
    BadProbabilityVector,
    CommonFixedPoint,
    DegenerateDistribution,
    EnumerationTooLarge,
    IFSError,
    InadmissiblePerturbation,
    MomentDiverges,
    NoFeasibleM,
    NonFiniteSample,
    NonPositiveRatio,
    NotContractingOnAverage,
    OrderTooLarge,
    RegimeViolation,
    UnsupportedIFS,
    ValidationError,
)
from .ifs import (
    AffineMap,
    ProbabilisticIFS,
    conjugate_to_unit_translations,
    cramer_rate,
    lyapunov_exponent,
    moment_growth,
    spectral_report,
    tail_exponent,
    validate_ifs,
)
from .moments import (
    binomial_identity,
    exact_moment,
    exact_moment_derivative,
    expected_formal_derivative,
    moment_table,
)
from .response import (
    compare_response,
    faa_di_bruno_terms,
    response_check,
    response_finite_difference,
    response_formula,
)
from .sampler import (
    MCEstimate,
    ParamDirection,
    Ratio,
    Translation,
    estimate_expectation,
    eval_formal_derivatives,
    eval_series,
    sample_path,
)
from .testfunctions import (
    AffinePullback,
    CappedPolynomial,
    PlateauFunction,
    PowerMoment,
    SmoothBump,
    WitnessBacked,
)
from .witness import (
    build_witness,
    detect_regime,
    divergence_report,
    enumerate_prefix_atoms,
    estimate_hN_prime,
    find_M,
    derivative_floor_constant,
    median_r,
)

__version__ = "0.1.0"
