"""Executable structural causal models and brute-force ground truths.

Every built-in model has the form ``W := f_W(U_W)``, ``X := f_X(W, U_X)``,
``Y := f_Y(X, W, U_Y)`` with independent noises.  The oracles never touch the
estimators: they push the same ``U_Y`` draws through ``f_Y`` at both arms and
average the individual effects.

Monte Carlo draws are generated in fixed blocks of :data:`BLOCK` with one
seed stream per block, so results do not depend on how blocks are spread
over workers.
"""

from __future__ import annotations

from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.integrate import trapezoid

from .dataset import Dataset
from .policies import InterventionPolicy, dirac, draw_policy_pair

BLOCK = 1 << 16

BINARY = "binary"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class NoiseLaw:
    """Product of independent one-dimensional laws.

    ``components`` holds ``(kind, params)`` pairs with kind ``normal``
    (mean, sd), ``uniform`` (lo, hi) or ``bernoulli`` (p).  A single
    component samples shape ``(n,)``, several sample ``(n, k)``.
    """

    components: tuple[tuple[str, tuple[float, ...]], ...]

    def sample(self, rng: np.random.Generator, size: int, antithetic: bool = False) -> np.ndarray:
        cols = []
        for kind, p in self.components:
            if antithetic:
                half = (size + 1) // 2
                z = _draw(kind, p, rng, half)
                col = np.concatenate([z, _reflect(kind, p, z)])[:size]
            else:
                col = _draw(kind, p, rng, size)
            cols.append(col)
        return cols[0] if len(cols) == 1 else np.stack(cols, axis=1)


def _draw(kind, p, rng, size):
    if kind == "normal":
        return p[0] + p[1] * rng.standard_normal(size)
    if kind == "uniform":
        return p[0] + (p[1] - p[0]) * rng.random(size)
    if kind == "bernoulli":
        return (rng.random(size) < p[0]).astype(float)
    raise ValueError(f"unknown noise law {kind!r}")


def _reflect(kind, p, z):
    if kind == "normal":
        return 2 * p[0] - z
    if kind == "uniform":
        return p[0] + p[1] - z
    raise ValueError(f"antithetic draws need a symmetric law, not {kind!r}")


def normal_law(mean=0.0, sd=1.0) -> NoiseLaw:
    return NoiseLaw((("normal", (float(mean), float(sd))),))


def uniform_law(lo=0.0, hi=1.0) -> NoiseLaw:
    return NoiseLaw((("uniform", (float(lo), float(hi))),))


def bernoulli_law(p=0.5) -> NoiseLaw:
    return NoiseLaw((("bernoulli", (float(p),)),))


@dataclass(frozen=True)
class ScmSpec:
    """Structural model with vectorised structural functions.

    ``f_y(x, w, u_y)``, ``f_x(w, u_x)`` and ``f_w(u_w)`` take numpy arrays;
    ``w`` is passed with shape ``(n,)`` (all built-ins have one covariate).
    ``monotone_in_uy`` is documentation only.
    """

    name: str
    f_y: Callable
    f_x: Callable
    f_w: Callable
    u_y: NoiseLaw
    u_x: NoiseLaw
    u_w: NoiseLaw
    treatment_kind: str = CONTINUOUS
    outcome_kind: str = CONTINUOUS
    monotone_in_uy: bool = True
    description: str = ""
    w_range: tuple[float, float] = (0.0, 1.0)
    meta: dict = field(default_factory=dict, compare=False)

    def outcome(self, x, w, u_y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        w = np.broadcast_to(np.asarray(w, dtype=float), x.shape) if np.ndim(w) == 0 else np.asarray(w, float)
        return np.asarray(self.f_y(x, w, u_y), dtype=float)


class OracleResult(NamedTuple):
    measure: str
    value: float
    mc_draws: int
    mc_std_error: float


class OracleParts(NamedTuple):
    total: OracleResult
    positive: OracleResult
    negative: OracleResult


class TailIntegrals(NamedTuple):
    tbr: float
    thr: float
    n_mc: int


def sample_observational(scm: ScmSpec, n: int, seed: int = 0) -> Dataset:
    """Draw ``n`` i.i.d. records from the observational law of ``scm``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    s_w, s_x, s_y = np.random.SeedSequence(seed).spawn(3)
    w = np.asarray(scm.f_w(scm.u_w.sample(np.random.default_rng(s_w), n)), dtype=float)
    x = np.asarray(scm.f_x(w, scm.u_x.sample(np.random.default_rng(s_x), n)), dtype=float)
    y = scm.outcome(x, w, scm.u_y.sample(np.random.default_rng(s_y), n))
    return Dataset(
        x=x,
        y=y,
        w=w.reshape(n, -1),
        column_names=("x", "y", "w"),
        binary_treatment=scm.treatment_kind == BINARY,
    )


def _block_sizes(n_mc: int) -> list[int]:
    full, rest = divmod(n_mc, BLOCK)
    return [BLOCK] * full + ([rest] if rest else [])


def _ice_block(scm, w, pi0, pi1, seed, k, size, antithetic):
    u = scm.u_y.sample(np.random.default_rng([seed, k, 0]), size, antithetic=antithetic)
    x0, x1 = draw_policy_pair(pi0, pi1, size, np.random.default_rng([seed, k, 1]), w)
    return scm.outcome(x1, w, u) - scm.outcome(x0, w, u)


def _ice_sample(scm, w, pi0, pi1, n_mc, seed, antithetic, workers) -> np.ndarray:
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    sizes = _block_sizes(n_mc)
    jobs = [(scm, w, pi0, pi1, seed, k, s, antithetic) for k, s in enumerate(sizes)]
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda a: _ice_block(*a), jobs))
    else:
        parts = [_ice_block(*a) for a in jobs]
    return np.concatenate(parts)


def _parts(ice: np.ndarray, prefix: str) -> OracleParts:
    n = ice.size
    pos = np.maximum(ice, 0.0)
    neg = np.maximum(-ice, 0.0)

    def res(name, v):
        se = float(v.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return OracleResult(name, float(v.mean()), n, se)

    return OracleParts(res(prefix, ice), res("p_" + prefix, pos), res("n_" + prefix, neg))


def oracle_cace_parts(
    scm: ScmSpec,
    w: float,
    x0: float = 0.0,
    x1: float = 1.0,
    n_mc: int = 1_000_000,
    seed: int = 0,
    antithetic: bool = False,
    workers: int = 1,
) -> OracleParts:
    """(CACE, P-CACE, N-CACE) at ``w`` for the switch ``x0 -> x1``.

    Uses the same ``U_Y`` draws at both arms, so the positive and negative
    parts differ by exactly the mean individual effect.
    """
    ice = _ice_sample(scm, w, dirac(x0), dirac(x1), n_mc, seed, antithetic, workers)
    return _parts(ice, "cace")


def oracle_cpice_parts(
    scm: ScmSpec,
    w: float,
    pi0: InterventionPolicy,
    pi1: InterventionPolicy,
    n_mc: int = 1_000_000,
    seed: int = 0,
    antithetic: bool = False,
    workers: int = 1,
) -> OracleParts:
    """(CPICE, P-CPICE, N-CPICE) at ``w`` for the policy pair ``(pi0, pi1)``.

    With point-mass policies this reproduces :func:`oracle_cace_parts` on the
    identical ``U_Y`` stream.
    """
    ice = _ice_sample(scm, w, pi0, pi1, n_mc, seed, antithetic, workers)
    return _parts(ice, "cpice")


def oracle_binary_rates(
    scm: ScmSpec, w: float, x0: float = 0.0, x1: float = 1.0, n_mc: int = 1_000_000, seed: int = 0
) -> tuple[float, float]:
    """Treatment benefit and harm rates ``P(Y0=0, Y1=1 | w)``, ``P(Y0=1, Y1=0 | w)`` by counting."""
    if scm.outcome_kind != BINARY:
        raise ValueError(f"{scm.name} does not have a binary outcome")
    benefit = harm = 0
    for k, size in enumerate(_block_sizes(n_mc)):
        u = scm.u_y.sample(np.random.default_rng([seed, k, 0]), size)
        y0 = scm.outcome(np.full(size, x0), w, u)
        y1 = scm.outcome(np.full(size, x1), w, u)
        benefit += int(np.count_nonzero((y0 == 0) & (y1 == 1)))
        harm += int(np.count_nonzero((y0 == 1) & (y1 == 0)))
    return benefit / n_mc, harm / n_mc


def oracle_thr_tbr_c_integral(
    scm: ScmSpec,
    w: float,
    c_max: float = 100.0,
    n_mc: int = 1_000_000,
    n_c_grid: int = 10_001,
    seed: int = 0,
    x0: float = 0.0,
    x1: float = 1.0,
) -> TailIntegrals:
    """Trapezoid integrals over ``c in [0, c_max]`` of ``P(ICE > c)`` and ``P(-ICE > c)``."""
    if c_max <= 0:
        raise ValueError("c_max must be > 0")
    if n_c_grid < 2:
        raise ValueError("n_c_grid must be >= 2")
    ice = np.sort(_ice_sample(scm, w, dirac(x0), dirac(x1), n_mc, seed, False, 1))
    c = np.linspace(0.0, c_max, n_c_grid)
    n = ice.size
    tbr = (n - np.searchsorted(ice, c, side="right")) / n
    thr = np.searchsorted(ice, -c, side="left") / n
    return TailIntegrals(float(trapezoid(tbr, c)), float(trapezoid(thr, c)), n)


# ---------------------------------------------------------------------------
# Built-in models


def _bern_x(w, u):
    return u


def _ex4_y(x, w, u):
    return x + (x == 1) * u + (x == 0) * w * u


def _appc_y(x, w, u):
    return (0.5 * x + 0.1 * w + 1.0) * (-u + 0.5)


def _appc_violated_y(x, w, u):
    return _appc_y(x, w, u[:, 0]) + u[:, 1]


def _binary_y(x, w, u):
    return (0.8 * x + 0.5 * w + u > 1.0).astype(float)


def _identity(u):
    return u


def _scale10(u):
    return 10.0 * u


def _additive_x(w, u):
    return w + u


def builtin_scms() -> dict[str, ScmSpec]:
    """Catalogue of the named built-in models."""
    unit = uniform_law(0.0, 1.0)
    std = normal_law(0.0, 1.0)
    coin = bernoulli_law(0.5)
    models = [
        ScmSpec("ex1_additive", lambda x, w, u: x + u, _bern_x, _identity, std, coin, unit,
                BINARY, description="Y := X + U_Y, U_Y ~ N(0,1); homogeneous positive effect"),
        ScmSpec("ex2_multiplicative", lambda x, w, u: x * u, _bern_x, _identity, std, coin, unit,
                BINARY, description="Y := X U_Y, U_Y ~ N(0,1); effects of both signs"),
        ScmSpec("ex3_null", lambda x, w, u: u + 0.0 * x, _bern_x, _identity, std, coin, unit,
                BINARY, description="Y := U_Y; no effect for anyone"),
        ScmSpec("ex4_interaction", _ex4_y, _bern_x, _scale10, std, coin, unit, BINARY,
                description="Y := X + I(X=1) U_Y + I(X=0) W U_Y, W ~ Unif(0,10)", w_range=(0.0, 10.0)),
        ScmSpec("appc_main", _appc_y, _additive_x, _identity, unit, unit, unit, CONTINUOUS,
                description="Y := (0.5X + 0.1W + 1)(0.5 - U_Y), X := W + U_X; all noises Unif(0,1)"),
        ScmSpec("appc_violated", _appc_violated_y, _additive_x, _identity,
                NoiseLaw((("uniform", (0.0, 1.0)), ("uniform", (0.0, 1.0)))), unit, unit, CONTINUOUS,
                monotone_in_uy=False,
                description="appc_main plus independent E ~ Unif(0,1) added to Y"),
        ScmSpec("binary_outcome", _binary_y, _bern_x, _identity, std, coin, unit, BINARY,
                outcome_kind=BINARY,
                description="Y := I(0.8X + 0.5W + U_Y > 1), U_Y ~ N(0,1), W ~ Unif(0,1)"),
    ]
    return {m.name: m for m in models}


def get_scm(name: str) -> ScmSpec:
    catalogue = builtin_scms()
    try:
        return catalogue[name]
    except KeyError:
        raise KeyError(f"unknown SCM {name!r}; choose from {sorted(catalogue)}") from None
