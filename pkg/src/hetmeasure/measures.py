"""Monte Carlo point estimators of the effect-heterogeneity measures.

For a switch ``x0 -> x1`` at covariate point ``w``::

    P-CACE(w) = int max{F(y; x0, w) - F(y; x1, w), 0} dy
    N-CACE(w) = int max{F(y; x1, w) - F(y; x0, w), 0} dy
    CACE(w)   = P-CACE(w) - N-CACE(w)

with ``F(y; x, w) = P(Y < y | X = x, W = w)`` replaced by a fitted
:class:`~hetmeasure.cdf.CdfModel`.  The integral over ``[a, b]`` is a Monte
Carlo average over ``n2`` outcome draws; the policy versions additionally
average over ``n1`` coupled treatment pairs ``(x0_j, x1_j)``.

All three members of a family are computed from one shared set of draws,
so ``P - N == total`` holds draw by draw (up to rounding) and not only in
expectation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cdf import CdfModel
from .policies import InterventionPolicy, PolicyPairSample, dirac, draw_policy_pair

Y_STREAM = 0
POLICY_STREAM = 1


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings.

    ``y_bounds=None`` integrates over the model's outcome domain (declared
    bounds, else the observed range).  ``y_design="midpoint"`` replaces the
    uniform random draws with equally spaced midpoints.
    """

    n1: int = 10
    n2: int = 100
    y_bounds: tuple[float, float] | None = None
    seed: int = 0
    y_design: str = "random"

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError(f"n1 and n2 must be >= 1, got {self.n1}, {self.n2}")
        if self.y_bounds is not None:
            a, b = map(float, self.y_bounds)
            if not a < b:
                raise ValueError(f"y_bounds must satisfy a < b, got {self.y_bounds}")
            object.__setattr__(self, "y_bounds", (a, b))
        if self.y_design not in ("random", "midpoint"):
            raise ValueError(f"y_design must be 'random' or 'midpoint', got {self.y_design!r}")

    def bounds_for(self, model: CdfModel) -> tuple[float, float]:
        return self.y_bounds if self.y_bounds is not None else model.y_range

    def y_draws(self, a: float, b: float) -> np.ndarray:
        if self.y_design == "midpoint":
            u = (np.arange(self.n2) + 0.5) / self.n2
        else:
            u = np.random.default_rng([self.seed, Y_STREAM]).random(self.n2)
        return a + (b - a) * u

    def policy_rng(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, POLICY_STREAM])


class MeasureTriple(NamedTuple):
    total: float
    positive: float
    negative: float


class ArmCdfs(NamedTuple):
    """CDF values on shared draws: ``f0[j, k] = F(y_k; x0_j, w)``, likewise ``f1``."""

    f0: np.ndarray
    f1: np.ndarray
    ys: np.ndarray
    width: float
    pairs: PolicyPairSample


def arm_cdfs(model: CdfModel, w, pi0: InterventionPolicy, pi1: InterventionPolicy, cfg: McConfig) -> ArmCdfs:
    a, b = cfg.bounds_for(model)
    ys = cfg.y_draws(a, b)
    pairs = draw_policy_pair(pi0, pi1, cfg.n1, cfg.policy_rng(), w)
    x0, x1 = pairs
    # point-mass policies collapse to one row so they agree bit-for-bit with the fixed-arm estimators
    if np.all(x0 == x0[0]) and np.all(x1 == x1[0]):
        x0, x1 = x0[:1], x1[:1]
    f0 = model.cdf_grid(ys, x0, w)
    f1 = model.cdf_grid(ys, x1, w)
    return ArmCdfs(f0, f1, ys, b - a, pairs)


def integrate(values: np.ndarray, width: float) -> float:
    """``(b - a)`` times the mean of the integrand over every (policy, y) draw."""
    return float(width * values.mean())


def _triple(c: ArmCdfs) -> MeasureTriple:
    diff = c.f0 - c.f1
    pos = integrate(np.maximum(diff, 0.0), c.width)
    neg = integrate(np.maximum(-diff, 0.0), c.width)
    return MeasureTriple(integrate(diff, c.width), pos, neg)


def estimate_cace_parts(model: CdfModel, w, cfg: McConfig, x0: float = 0.0, x1: float = 1.0) -> MeasureTriple:
    """(CACE, P-CACE, N-CACE) at ``w`` for the switch ``x0 -> x1`` on one set of draws."""
    return _triple(arm_cdfs(model, w, dirac(x0), dirac(x1), cfg))


def estimate_cpice_parts(model: CdfModel, w, pi0: InterventionPolicy, pi1: InterventionPolicy, cfg: McConfig) -> MeasureTriple:
    """(CPICE, P-CPICE, N-CPICE) at ``w`` for the policy pair ``(pi0, pi1)``."""
    return _triple(arm_cdfs(model, w, pi0, pi1, cfg))


def estimate_cace(model, w, cfg, x0=0.0, x1=1.0) -> float:
    return estimate_cace_parts(model, w, cfg, x0, x1).total


def estimate_p_cace(model, w, cfg, x0=0.0, x1=1.0) -> float:
    return estimate_cace_parts(model, w, cfg, x0, x1).positive


def estimate_n_cace(model, w, cfg, x0=0.0, x1=1.0) -> float:
    return estimate_cace_parts(model, w, cfg, x0, x1).negative


def estimate_cpice(model, w, pi0, pi1, cfg) -> float:
    return estimate_cpice_parts(model, w, pi0, pi1, cfg).total


def estimate_p_cpice(model, w, pi0, pi1, cfg) -> float:
    return estimate_cpice_parts(model, w, pi0, pi1, cfg).positive


def estimate_n_cpice(model, w, pi0, pi1, cfg) -> float:
    return estimate_cpice_parts(model, w, pi0, pi1, cfg).negative
