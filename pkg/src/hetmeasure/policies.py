"""Stochastic intervention policies and coupled pair sampling.

A policy is either a *base* law (point mass, uniform, normal, empirical) or a
*shift* ``x -> x + d`` applied to a base draw.  Pairs are sampled by
:func:`draw_policy_pair`:

* base, shift(d)       -> ``x0 ~ base``, ``x1 = x0 + d``  (single shift)
* shift(d0), shift(d1) -> ``b ~ base``, ``x0 = b + d0``, ``x1 = b + d1``
* base, base           -> independent draws from each (product law)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

DIRAC = "dirac"
UNIFORM = "uniform"
NORMAL = "normal"
EMPIRICAL = "empirical"
SHIFT = "shift"


@dataclass(frozen=True)
class InterventionPolicy:
    kind: str
    params: tuple[float, ...] = ()
    base: InterventionPolicy | None = None

    def __post_init__(self):
        if self.kind not in (DIRAC, UNIFORM, NORMAL, EMPIRICAL, SHIFT):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == UNIFORM and not self.params[0] < self.params[1]:
            raise ValueError("uniform policy needs lo < hi")
        if self.kind == NORMAL and not self.params[1] > 0:
            raise ValueError("normal policy needs sd > 0")
        if self.kind == EMPIRICAL and len(self.params) == 0:
            raise ValueError("empirical policy needs at least one value")
        if self.kind == SHIFT and self.base is not None and self.base.kind == SHIFT:
            raise ValueError("a shift must be applied to a base policy")

    @property
    def is_shift(self) -> bool:
        return self.kind == SHIFT

    def sample(self, rng: np.random.Generator, size: int, w=None) -> np.ndarray:
        """Draw ``size`` treatment values.  ``w`` is accepted for covariate-dependent policies."""
        if self.kind == DIRAC:
            return np.full(size, self.params[0], dtype=float)
        if self.kind == UNIFORM:
            lo, hi = self.params
            return lo + (hi - lo) * rng.random(size)
        if self.kind == NORMAL:
            mu, sd = self.params
            return mu + sd * rng.standard_normal(size)
        if self.kind == EMPIRICAL:
            values = np.asarray(self.params, dtype=float)
            return values[rng.integers(0, values.size, size)]
        if self.base is None:
            raise ValueError("shift policy has no base; pair it with a base policy")
        return self.base.sample(rng, size, w) + self.params[0]

    def describe(self) -> str:
        if self.kind == SHIFT:
            inner = "" if self.base is None else f"{self.base.describe()}"
            return f"{inner}+{self.params[0]:g}" if inner else f"shift({self.params[0]:g})"
        if self.kind == EMPIRICAL:
            return f"empirical(n={len(self.params)})"
        return f"{self.kind}({','.join(f'{p:g}' for p in self.params)})"


def dirac(x: float) -> InterventionPolicy:
    return InterventionPolicy(DIRAC, (float(x),))


def uniform(lo: float, hi: float) -> InterventionPolicy:
    return InterventionPolicy(UNIFORM, (float(lo), float(hi)))


def normal(mean: float = 0.0, sd: float = 1.0) -> InterventionPolicy:
    return InterventionPolicy(NORMAL, (float(mean), float(sd)))


def empirical(values) -> InterventionPolicy:
    return InterventionPolicy(EMPIRICAL, tuple(float(v) for v in np.ravel(values)))


def single_shift(d: float, base: InterventionPolicy | None = None) -> InterventionPolicy:
    """``x + d``; with ``base=None`` the shift is applied to the partner policy's draw."""
    return InterventionPolicy(SHIFT, (float(d),), base)


def double_shift(d: float, base: InterventionPolicy) -> tuple[InterventionPolicy, InterventionPolicy]:
    """The pair ``(X - d, X + d)`` with ``X ~ base``."""
    return single_shift(-d, base), single_shift(d, base)


class PolicyPairSample(NamedTuple):
    x0: np.ndarray
    x1: np.ndarray


def draw_policy_pair(
    pi0: InterventionPolicy,
    pi1: InterventionPolicy,
    size: int,
    rng: np.random.Generator,
    w=None,
) -> PolicyPairSample:
    """Joint draws ``(x0_j, x1_j)``, honouring shift couplings (see module docstring)."""
    if size < 1:
        raise ValueError("size must be >= 1")
    if pi0.is_shift and pi1.is_shift:
        base = pi0.base if pi0.base is not None else pi1.base
        if base is None or (pi0.base is not None and pi1.base is not None and pi0.base != pi1.base):
            raise ValueError("two shift policies need one shared base policy")
        b = base.sample(rng, size, w)
        return PolicyPairSample(b + pi0.params[0], b + pi1.params[0])
    if pi1.is_shift and pi1.base in (None, pi0):
        x0 = pi0.sample(rng, size, w)
        return PolicyPairSample(x0, x0 + pi1.params[0])
    if pi0.is_shift and pi0.base in (None, pi1):
        x1 = pi1.sample(rng, size, w)
        return PolicyPairSample(x1 + pi0.params[0], x1)
    x0 = pi0.sample(rng, size, w)
    x1 = pi1.sample(rng, size, w)
    return PolicyPairSample(x0, x1)


def parse_policy(spec: str) -> InterventionPolicy:
    """Parse CLI policy specs: ``dirac:2``, ``uniform:0:0.1``, ``normal:0:1``, ``shift:1.9``."""
    kind, *rest = spec.strip().split(":")
    vals = [float(v) for v in rest]
    if kind == DIRAC and len(vals) == 1:
        return dirac(*vals)
    if kind == UNIFORM and len(vals) == 2:
        return uniform(*vals)
    if kind == NORMAL and len(vals) in (0, 2):
        return normal(*vals)
    if kind == SHIFT and len(vals) == 1:
        return single_shift(*vals)
    raise ValueError(f"cannot parse policy {spec!r}")
