"""Estimation of causal-effect heterogeneity that covariates leave unexplained.

The positive and negative parts of the conditional average causal effect
(and their stochastic-intervention counterparts) are estimated from a
local-linear conditional CDF, bounded when monotonicity is doubtful, and
validated against Monte Carlo ground truths from built-in structural models.
"""

from .bounds import (
    BoundPair,
    bound_n_cace_t2,
    bound_n_cpice_t5,
    bound_p_cace_t2,
    bound_p_cpice_t5,
    bound_pn_cace_t3,
)
from .cdf import (
    CdfModel,
    KernelSpec,
    NoLocalDataError,
    PropensityModel,
    eval_cdf,
    fit_cdf,
    fit_propensity,
    select_bandwidth,
)
from .dataset import (
    Dataset,
    EmptyDatasetError,
    SchemaConfig,
    SchemaError,
    filter_covariates,
    infer_y_bounds,
    load_csv,
)
from .inference import MeasureReport, bootstrap
from .measures import (
    McConfig,
    MeasureTriple,
    estimate_cace,
    estimate_cace_parts,
    estimate_cpice,
    estimate_cpice_parts,
    estimate_n_cace,
    estimate_n_cpice,
    estimate_p_cace,
    estimate_p_cpice,
)
from .pipeline import EstimationPlan
from .policies import InterventionPolicy, PolicyPairSample, dirac, double_shift, empirical, normal, single_shift, uniform
from .scm import (
    OracleResult,
    ScmSpec,
    builtin_scms,
    get_scm,
    oracle_cace_parts,
    oracle_cpice_parts,
    oracle_thr_tbr_c_integral,
    sample_observational,
)

__version__ = "0.1.0"
