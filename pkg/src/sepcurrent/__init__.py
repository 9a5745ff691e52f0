"""Particle current in the symmetric exclusion process, three ways:

event-driven stirring Monte Carlo, exact duality-based moments and small-
system laws, and the independent-Bernoulli decomposition of current laws
through their generating polynomials.
"""

from ._loops import BACKEND, HAS_NUMBA
from .analysis import (
    GrowthFit,
    NormalityReport,
    StepCDF,
    empirical_law,
    growth_fit,
    ks_metric,
    ks_to_normal,
    levy_metric,
    levy_to_normal,
    norm_cdf,
    normality_report,
    rate_regression,
    tv_distance,
)
from .chain import (
    SemigroupTable,
    balance_profile,
    expected_current,
    geometric_grid,
    occupation_mean,
    occupation_profile,
    rigidity_profile,
    semigroup,
)
from .exact import (
    FullLaw,
    PairTable,
    SumLaw,
    andjel_check,
    cov_exact,
    current_law,
    full_law,
    lower_bound_check,
    lower_bound_integrand,
    pair_semigroup,
    variance_current_exact,
    variance_identity,
)
from .kernels import (
    Configuration,
    Partition,
    RateKernel,
    SiteWindow,
    kernel_from_json,
    kernel_to_json,
    make_heavy_tail,
    make_nearest_neighbor,
    make_random_environment,
    product_configuration,
    step_configuration,
)
from .rayleigh import (
    ESSEEN_CONSTANT,
    BernoulliDecomposition,
    GenPoly,
    RootCertificate,
    bernoulli_decompose,
    bernoulli_sum_pmf,
    certify_real_rooted,
    esseen_rate,
    genpoly_from_sumlaw,
    negative_association_check,
)
from .stirring import (
    CurrentSample,
    ReplicaSummary,
    StirringTrajectory,
    current_of,
    run_replicas,
    simulate,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
