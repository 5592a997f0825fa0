"""Partial-identification bounds for the heterogeneity measures.

Without the monotonicity assumption the positive and negative parts are
only bounded.  With ``F0 = F(y; x0, w)`` and ``F1 = F(y; x1, w)``:

* CDF-only bounds (also used for policy pairs)::

      max{F0 - F1, 0}  <=  integrand of P  <=  min{1 - F1, F0}

  and the mirror image for N.

* Bounds that also use the treatment share ``p1 = P(X = 1 | W = w)``
  (binary treatment only).  With ``F = p0 F0 + p1 F1`` and the joint terms
  ``J_x = P(Y < y, X = x | W = w) = F_x p_x``::

      l_P = max{0, F0 - F1, F0 - F, F - F1}
      u_P = min{1 - F1, F0, 1 - J1 + J0, F0 - F1 + J1 + 1 - J0}

  These contain every CDF-only term, so the interval is never wider.

Every bound shares its outcome and policy draws with the point estimator,
so the lower bound equals the point estimate exactly and
``lower <= upper`` holds draw by draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cdf import CdfModel, PropensityModel
from .measures import ArmCdfs, McConfig, arm_cdfs, integrate
from .policies import InterventionPolicy, dirac

THEOREM_FORM = "theorem"
APPENDIX_FORM = "appendix"

CDF_ONLY = "cdf_only"
WITH_PROPENSITY = "with_propensity"
POLICY = "policy"


@dataclass(frozen=True)
class BoundPair:
    lower: float
    upper: float
    kind: str = CDF_ONLY

    def __post_init__(self):
        # allow rounding slack from averaging two pointwise-ordered integrands
        if not (self.lower >= 0.0 and self.lower <= self.upper + 1e-12 * max(1.0, abs(self.upper))):
            raise ValueError(f"invalid bound pair: lower={self.lower}, upper={self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= value <= self.upper + tol


def upper_integrand(fa: np.ndarray, fb: np.ndarray, form: str) -> np.ndarray:
    # P-part upper integrand for "from" arm fa and "to" arm fb
    if form == THEOREM_FORM:
        return np.minimum(1.0 - fb, fa)
    if form == APPENDIX_FORM:
        return np.maximum(1.0 - fb, fa)
    raise ValueError(f"upper_form must be {THEOREM_FORM!r} or {APPENDIX_FORM!r}, got {form!r}")


def _cdf_only_pair(c: ArmCdfs, positive: bool, form: str, kind: str) -> BoundPair:
    fa, fb = (c.f0, c.f1) if positive else (c.f1, c.f0)
    lower = integrate(np.maximum(fa - fb, 0.0), c.width)
    upper = integrate(upper_integrand(fa, fb, form), c.width)
    return BoundPair(lower, upper, kind)


def bound_p_cace_t2(model: CdfModel, w, cfg: McConfig, x0=0.0, x1=1.0, upper_form=THEOREM_FORM) -> BoundPair:
    """CDF-only bounds on P-CACE.

    ``upper_form="theorem"`` integrates ``min{1 - F1, F0}`` (the sharp
    bound).  ``"appendix"`` integrates ``max{1 - F1, F0}``, a looser
    quantity kept for reproducing reference simulation tables.
    """
    return _cdf_only_pair(arm_cdfs(model, w, dirac(x0), dirac(x1), cfg), True, upper_form, CDF_ONLY)


def bound_n_cace_t2(model: CdfModel, w, cfg: McConfig, x0=0.0, x1=1.0, upper_form=THEOREM_FORM) -> BoundPair:
    """CDF-only bounds on N-CACE; see :func:`bound_p_cace_t2`."""
    return _cdf_only_pair(arm_cdfs(model, w, dirac(x0), dirac(x1), cfg), False, upper_form, CDF_ONLY)


def bound_p_cpice_t5(model, w, pi0: InterventionPolicy, pi1: InterventionPolicy, cfg: McConfig, upper_form=THEOREM_FORM) -> BoundPair:
    """Bounds on P-CPICE, averaged over coupled policy draws."""
    return _cdf_only_pair(arm_cdfs(model, w, pi0, pi1, cfg), True, upper_form, POLICY)


def bound_n_cpice_t5(model, w, pi0: InterventionPolicy, pi1: InterventionPolicy, cfg: McConfig, upper_form=THEOREM_FORM) -> BoundPair:
    """Bounds on N-CPICE, averaged over coupled policy draws."""
    return _cdf_only_pair(arm_cdfs(model, w, pi0, pi1, cfg), False, upper_form, POLICY)


def propensity_integrands(f0, f1, p1):
    """The four integrands ``(l_P, u_P, l_N, u_N)`` from arm CDFs and the treated share ``p1``."""
    p0 = 1.0 - p1
    f = p0 * f0 + p1 * f1
    j0, j1 = p0 * f0, p1 * f1
    zero = np.zeros_like(f0)
    l_p = np.maximum.reduce([zero, f0 - f1, f0 - f, f - f1])
    u_p = np.minimum.reduce([1.0 - f1, f0, 1.0 - j1 + j0, f0 - f1 + j1 + 1.0 - j0])
    l_n = np.maximum.reduce([zero, f1 - f0, f1 - f, f - f0])
    u_n = np.minimum.reduce([1.0 - f0, f1, 1.0 - j0 + j1, f1 - f0 + j0 + 1.0 - j1])
    return l_p, u_p, l_n, u_n


def bound_pn_cace_t3(cdf: CdfModel, prop: PropensityModel, w, cfg: McConfig) -> tuple[BoundPair, BoundPair]:
    """Bounds on (P-CACE, N-CACE) that also use ``P(X = x | W = w)``.

    The joint ``P(Y < y, X = x | W = w)`` is taken as the product of the
    conditional CDF and the treatment share.  Arms are fixed at 0 and 1.
    """
    c = arm_cdfs(cdf, w, dirac(0.0), dirac(1.0), cfg)
    l_p, u_p, l_n, u_n = propensity_integrands(c.f0, c.f1, prop.prob(1, w))
    return (
        BoundPair(integrate(l_p, c.width), integrate(u_p, c.width), WITH_PROPENSITY),
        BoundPair(integrate(l_n, c.width), integrate(u_n, c.width), WITH_PROPENSITY),
    )
