"""Penalized GLM fitting and de-biased Wald inference for p < n designs.

The package fits L1-penalized generalized linear models (gaussian,
binomial, poisson; the intercept is never penalized), removes the
penalty-induced bias by a one-step correction based on the inverted
sample Hessian, and turns the corrected estimates into confidence
intervals, regions, and tests for arbitrary linear combinations of
coefficients. A Monte-Carlo harness measures bias and coverage over
seeded, reproducible replicates.
"""

__version__ = "0.1.0"

from .data import CoefMap, Dataset, from_arrays, load_csv, standardize
from .debias import (
    DebiasedFit,
    HessianModel,
    NodewiseResult,
    hessian,
    invert_hessian,
    nodewise_theta,
    orig_debias,
    qp_debias,
    qp_full_debias,
    qp_theta,
    refine_debias,
)
from .families import (
    BINOMIAL,
    GAUSSIAN,
    POISSON,
    GlmFamily,
    d2loss,
    dloss,
    get_family,
    loss,
)
from .inference import CiResult, RegionResult, confidence_region, wald_ci, wald_test
from .lasso import (
    CvResult,
    LassoFit,
    cross_validate,
    fit_lasso,
    fit_path,
    lambda_max,
    lambda_path,
)
from .simulate import (
    SimConfig,
    SimSummary,
    default_xi0,
    gen_covariates,
    gen_response,
    mu_sweep,
    run_replicates,
)

__all__ = [
    "__version__",
    "BINOMIAL", "GAUSSIAN", "POISSON", "GlmFamily",
    "loss", "dloss", "d2loss", "get_family",
    "Dataset", "CoefMap", "from_arrays", "load_csv", "standardize",
    "LassoFit", "CvResult", "fit_lasso", "fit_path",
    "lambda_max", "lambda_path", "cross_validate",
    "HessianModel", "DebiasedFit", "NodewiseResult",
    "hessian", "invert_hessian", "refine_debias",
    "qp_debias", "qp_theta", "qp_full_debias",
    "nodewise_theta", "orig_debias",
    "CiResult", "RegionResult", "wald_ci", "confidence_region", "wald_test",
    "SimConfig", "SimSummary", "default_xi0",
    "gen_covariates", "gen_response", "run_replicates", "mu_sweep",
]
