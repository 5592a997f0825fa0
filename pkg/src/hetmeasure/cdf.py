"""Local-linear conditional CDF estimation.

``alpha_hat(y; x, w)`` is the intercept ``c0`` of the kernel-weighted least
squares fit of ``I(Y_i < y)`` on ``(1, X_i - x, W_i - w)`` with product
kernel weights ``K_h(X_i - x) prod_j K_h(W_ij - w_j)``.  For a fixed query
point the intercept is linear in the responses, ``c0 = sum_i l_i I(Y_i < y)``,
so one solve per ``(x, w)`` gives the whole curve in ``y``.

Consistency of the estimator rests on the usual smoothness and kernel
conditions: positive design density and a twice-differentiable CDF near
``(x, w)``, a symmetric compactly supported Lipschitz kernel, weakly
dependent records, and ``h -> 0`` with ``N h^(2(d+1))`` bounded away from
zero.  None of these are checked at runtime.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dataset import Dataset

RCOND = 1e-10
_CACHE_SIZE = 512


class NoLocalDataError(ValueError):
    """Raised when no training record gets positive kernel weight at a query point."""


def _epanechnikov(u):
    return np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)


def _gaussian(u):
    return np.exp(-0.5 * u * u) * 0.3989422804014327


def _uniform(u):
    return np.where(np.abs(u) < 1.0, 0.5, 0.0)


KERNELS = {"epanechnikov": _epanechnikov, "gaussian": _gaussian, "uniform": _uniform}


@dataclass(frozen=True)
class KernelSpec:
    family: str = "epanechnikov"
    h: float = 1.0

    def __post_init__(self):
        if self.family not in KERNELS:
            raise ValueError(f"unknown kernel {self.family!r}; choose from {sorted(KERNELS)}")
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError(f"bandwidth must be positive, got {self.h}")

    def product_weights(self, scaled_offsets: np.ndarray) -> np.ndarray:
        """Product kernel over the last axis of already-scaled offsets ``(Z_i - z) / h``."""
        k = KERNELS[self.family](scaled_offsets)
        return np.prod(k, axis=-1)


class LocalFit(NamedTuple):
    weights: np.ndarray  # equivalent-kernel weights l_i, one per training record
    rank: int
    rank_deficient: bool


def _psd_pinv_first_col(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First column of the pseudo-inverse of a stack of PSD matrices, and their ranks."""
    vals, vecs = np.linalg.eigh(S)
    top = vals[..., -1:]
    keep = vals > RCOND * top
    inv = np.where(keep, 1.0 / np.where(keep, vals, 1.0), 0.0)
    first = np.einsum("...ik,...k,...k->...i", vecs, inv, vecs[..., 0, :])
    return first, keep.sum(axis=-1)


def local_linear_weights(Z: np.ndarray, z0: np.ndarray, kernel: KernelSpec) -> LocalFit:
    """Equivalent-kernel weights of the local-linear intercept at one query ``z0``.

    ``Z`` is the ``(n, p)`` design in kernel coordinates.  When the weighted
    design is rank deficient the minimum-norm solution is used; if every
    local offset is zero this is the kernel-weighted mean.
    """
    D = (Z - z0) / kernel.h
    K = kernel.product_weights(D)
    total = K.sum()
    if not total > 0:
        raise NoLocalDataError(f"no local data at {np.asarray(z0).tolist()} with h={kernel.h}")
    A = np.concatenate([np.ones((D.shape[0], 1)), D], axis=1)
    S = (A * (K / total)[:, None]).T @ A
    a, rank = _psd_pinv_first_col(S)
    l = (K / total) * (A @ a)
    return LocalFit(l, int(rank), bool(rank < A.shape[1]))


def local_linear_weights_batch(Z: np.ndarray, Q: np.ndarray, kernel: KernelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`local_linear_weights` for a block of queries.

    Works from raw weighted moments, so it trades a little accuracy at very
    small ``h`` for speed; used for cross-validation.  Returns ``(L, ok)``
    with ``L`` of shape ``(q, n)``; rows with zero total weight are ``nan``
    and flagged ``False`` in ``ok``.
    """
    h = kernel.h
    kfun = KERNELS[kernel.family]
    p = Z.shape[1]
    K = kfun((Z[None, :, 0] - Q[:, 0, None]) / h)
    for j in range(1, p):
        K *= kfun((Z[None, :, j] - Q[:, j, None]) / h)
    total = K.sum(axis=1)
    ok = total > 0
    K /= np.where(ok, total, 1.0)[:, None]
    Zs = Z / h
    Qs = Q / h
    M1 = K @ Zs - Qs  # weighted mean offsets, (q, p)
    M2 = (K @ (Zs[:, :, None] * Zs[:, None, :]).reshape(-1, p * p)).reshape(-1, p, p)
    mq = K @ Zs
    centred = M2 - Qs[:, :, None] * mq[:, None, :] - mq[:, :, None] * Qs[:, None, :] + Qs[:, :, None] * Qs[:, None, :]
    S = np.empty((Q.shape[0], p + 1, p + 1))
    S[:, 0, 0] = 1.0
    S[:, 0, 1:] = M1
    S[:, 1:, 0] = M1
    S[:, 1:, 1:] = centred
    a, _ = _psd_pinv_first_col(S)
    lin = a[:, 0] - np.einsum("qj,qj->q", Qs, a[:, 1:])
    L = K * (lin[:, None] + a[:, 1:] @ Zs.T)
    L[~ok] = np.nan
    return L, ok


class CdfModel:
    """Fitted local-linear estimator of ``P(Y < y | X = x, W = w)``.

    Evaluation is lazy: the weighted least-squares problem is solved per
    query point (and cached), never ahead of time.  Outputs are clamped to
    ``[0, 1]`` but are not forced to be monotone in ``y``.
    """

    def __init__(self, data: Dataset, kernel: KernelSpec, standardize: bool = False):
        if data.n < data.d + 2:
            raise ValueError(f"need at least d + 2 = {data.d + 2} records, got {data.n}")
        self.kernel = kernel
        self.d = data.d
        self.n = data.n
        raw = np.column_stack([data.x, data.w]) if data.d else data.x[:, None]
        if standardize:
            loc = raw.mean(axis=0)
            scale = raw.std(axis=0)
            scale[scale == 0] = 1.0
        else:
            loc = np.zeros(raw.shape[1])
            scale = np.ones(raw.shape[1])
        self.loc, self.scale = loc, scale
        self.standardize = standardize
        self._Z = (raw - loc) / scale
        self._y = data.y.copy()
        self._order = np.argsort(self._y, kind="stable")
        self._y_sorted = self._y[self._order]
        self.y_bounds = data.y_bounds
        self._cache: OrderedDict = OrderedDict()

    @property
    def y_range(self) -> tuple[float, float]:
        """Declared outcome domain if the data carried one, else the observed range."""
        if self.y_bounds is not None:
            return self.y_bounds
        lo, hi = float(self._y_sorted[0]), float(self._y_sorted[-1])
        return (lo, hi) if lo < hi else (lo - 1.0, hi + 1.0)

    def _point(self, x, w) -> np.ndarray:
        w = np.atleast_1d(np.asarray(w, dtype=float)).ravel() if self.d else np.zeros(0)
        if w.size != self.d:
            raise ValueError(f"covariate point has dimension {w.size}, model expects {self.d}")
        return (np.concatenate([[float(x)], w]) - self.loc) / self.scale

    def local_fit(self, x, w) -> LocalFit:
        z0 = self._point(x, w)
        key = z0.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        fit = local_linear_weights(self._Z, z0, self.kernel)
        self._cache[key] = fit
        if len(self._cache) > _CACHE_SIZE:
            self._cache.popitem(last=False)
        return fit

    def _cumulative(self, fit: LocalFit) -> np.ndarray:
        cs = np.concatenate([[0.0], np.cumsum(fit.weights[self._order])])
        cs[-1] = 1.0  # the weights sum to one exactly; drop the rounding residue
        return cs

    def cdf(self, ys, x, w) -> np.ndarray:
        """``alpha_hat(y; x, w)`` for every ``y`` in ``ys``."""
        cs = self._cumulative(self.local_fit(x, w))
        idx = np.searchsorted(self._y_sorted, np.asarray(ys, dtype=float), side="left")
        return np.clip(cs[idx], 0.0, 1.0)

    def cdf_grid(self, ys, xs, w) -> np.ndarray:
        """Matrix ``alpha_hat(ys[k]; xs[j], w)`` of shape ``(len(xs), len(ys))``."""
        return np.stack([self.cdf(ys, x, w) for x in np.ravel(xs)])


class PropensityModel:
    """Kernel-weighted share of treated records near ``w`` (binary treatment only)."""

    def __init__(self, data: Dataset, kernel: KernelSpec):
        if not data.binary_treatment and not np.all((data.x == 0) | (data.x == 1)):
            raise ValueError("propensity model needs a binary treatment")
        self.kernel = kernel
        self.d = data.d
        self._x = data.x.copy()
        self._w = data.w.copy()

    def treated_share(self, w) -> float:
        if self.d == 0:
            return float(np.clip(self._x.mean(), 0.0, 1.0))
        w = np.atleast_1d(np.asarray(w, dtype=float)).ravel()
        K = self.kernel.product_weights((self._w - w) / self.kernel.h)
        total = K.sum()
        if not total > 0:
            raise NoLocalDataError(f"no local data at w={w.tolist()} with h={self.kernel.h}")
        return float(np.clip(K @ self._x / total, 0.0, 1.0))

    def prob(self, x, w) -> float:
        """``P_hat(X = x | W = w)`` for ``x`` in ``{0, 1}``."""
        p1 = self.treated_share(w)
        if x == 1:
            return p1
        if x == 0:
            return 1.0 - p1
        raise ValueError(f"treatment arm must be 0 or 1, got {x}")


def fit_cdf(data: Dataset, kernel: KernelSpec, standardize: bool = False) -> CdfModel:
    return CdfModel(data, kernel, standardize=standardize)


def eval_cdf(model: CdfModel, y: float, x: float, w) -> float:
    return float(model.cdf([y], x, w)[0])


def fit_propensity(data: Dataset, kernel: KernelSpec) -> PropensityModel:
    return PropensityModel(data, kernel)


def cv_scores(
    data: Dataset,
    candidates,
    folds: int = 5,
    seed: int = 0,
    family: str = "epanechnikov",
    n_grid: int = 25,
    y_bounds: tuple[float, float] | None = None,
    max_eval: int | None = None,
    standardize: bool = False,
    block: int = 128,
) -> dict[float, float]:
    """Cross-validated squared error of the indicator fit for each bandwidth.

    Record ``i`` belongs to fold ``i mod folds``.  The score of ``h`` is the
    mean over held-out records and a uniform grid of ``n_grid`` outcome
    values of ``(I(Y_i < y) - alpha_hat_{-fold}(y; X_i, W_i))^2``.  A
    bandwidth that leaves any held-out record without local data scores
    ``inf``.  ``max_eval`` caps the held-out records scored per fold
    (chosen with ``seed``).
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    cands = [float(h) for h in candidates]
    if not cands:
        raise ValueError("need at least one bandwidth candidate")
    raw = np.column_stack([data.x, data.w]) if data.d else data.x[:, None]
    if standardize:
        scale = raw.std(axis=0)
        scale[scale == 0] = 1.0
        raw = (raw - raw.mean(axis=0)) / scale
    a, b = y_bounds if y_bounds is not None else (float(data.y.min()), float(data.y.max()))
    grid = np.linspace(a, b, n_grid)
    fold_of = np.arange(data.n) % folds
    rng = np.random.default_rng(seed)
    splits = []
    for f in range(folds):
        test = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        if test.size == 0 or train.size < data.d + 2:
            continue
        if max_eval is not None and test.size > max_eval:
            test = np.sort(rng.choice(test, size=max_eval, replace=False))
        splits.append((train, test))
    if not splits:
        raise ValueError("not enough records for cross-validation")

    scores = {}
    for h in cands:
        kernel = KernelSpec(family, h)
        sse, count, failed = 0.0, 0, False
        for train, test in splits:
            Ztr = raw[train]
            ind = (data.y[train][:, None] < grid[None, :]).astype(float)
            truth = (data.y[test][:, None] < grid[None, :]).astype(float)
            for start in range(0, test.size, block):
                sl = slice(start, start + block)
                L, ok = local_linear_weights_batch(Ztr, raw[test[sl]], kernel)
                if not ok.all():
                    failed = True
                    break
                pred = np.clip(L @ ind, 0.0, 1.0)
                sse += float(((truth[sl] - pred) ** 2).sum())
                count += pred.size
            if failed:
                break
        scores[h] = np.inf if failed else sse / count
    return scores


def select_bandwidth(
    data: Dataset,
    candidates=(1.0, 0.1, 0.01, 0.001),
    folds: int = 5,
    seed: int = 0,
    family: str = "epanechnikov",
    trace: list | None = None,
    **kwargs,
) -> float:
    """Candidate bandwidth with the smallest cross-validation score; ties go to the smaller ``h``.

    If ``trace`` is a list, ``(h, score)`` pairs are appended to it.
    """
    scores = cv_scores(data, candidates, folds=folds, seed=seed, family=family, **kwargs)
    if trace is not None:
        trace.extend(scores.items())
    finite = [(s, h) for h, s in scores.items() if np.isfinite(s)]
    if not finite:
        raise NoLocalDataError(f"every bandwidth candidate left held-out records without local data: {list(scores)}")
    return min(finite)[1]
