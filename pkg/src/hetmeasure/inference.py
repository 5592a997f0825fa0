"""Percentile bootstrap for any estimator of the measures or bounds."""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import Dataset

log = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "measure", "w", "point", "lower_bound", "upper_bound",
    "boot_mean", "ci_low", "ci_high", "replicates", "failed", "seed",
)


@dataclass(frozen=True)
class MeasureReport:
    """One measure at one covariate point (or stratum label).

    Bootstrap fields are ``nan`` and ``replicates == 0`` when no bootstrap
    was run.
    """

    measure: str
    w: str
    point: float
    lower_bound: float | None = None
    upper_bound: float | None = None
    boot_mean: float = float("nan")
    ci_low: float = float("nan")
    ci_high: float = float("nan")
    replicates: int = 0
    failed: int = 0
    seed: int | None = None

    def as_row(self) -> dict:
        row = asdict(self)
        return {k: ("" if row[k] is None else row[k]) for k in REPORT_COLUMNS}


class BootstrapFailure(RuntimeError):
    """Raised when every bootstrap replicate failed."""


@dataclass(frozen=True)
class BootstrapSummary:
    values: np.ndarray  # successful replicate values, in replicate order
    failed: int

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    def percentile_ci(self, level: float = 0.95) -> tuple[float, float]:
        tail = 50.0 * (1.0 - level)
        lo, hi = np.percentile(self.values, [tail, 100.0 - tail])
        return float(lo), float(hi)


def resample_indices(n: int, seed: int, b: int) -> np.ndarray:
    """Row indices of replicate ``b``; depends only on ``(seed, b)``."""
    return np.random.default_rng([seed, b]).integers(0, n, n)


def bootstrap_many(
    data: Dataset,
    pipeline: Callable[[Dataset], Mapping[str, float]],
    B: int,
    seed: int = 0,
    workers: int = 1,
) -> dict[str, BootstrapSummary]:
    """Run ``pipeline`` on ``B`` row resamples and collect every named output.

    A replicate whose pipeline raises ``ValueError`` (for instance no local
    data at the query point) is dropped and counted.  Results do not depend
    on ``workers``.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    if data.n < 1:
        raise ValueError("cannot bootstrap an empty dataset")

    def one(b):
        try:
            return dict(pipeline(data.take(resample_indices(data.n, seed, b))))
        except ValueError as e:
            log.debug("replicate %d failed: %s", b, e)
            return None

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(one, range(B)))
    else:
        results = [one(b) for b in range(B)]
    ok = [r for r in results if r is not None]
    failed = B - len(ok)
    if not ok:
        raise BootstrapFailure(f"all {B} bootstrap replicates failed")
    if failed:
        log.warning("%d of %d bootstrap replicates failed and were dropped", failed, B)
    return {k: BootstrapSummary(np.array([r[k] for r in ok]), failed) for k in ok[0]}


def bootstrap(
    data: Dataset,
    estimator: Callable[[Dataset], float],
    B: int,
    seed: int = 0,
    measure: str = "value",
    w="",
    point: float | None = None,
    workers: int = 1,
) -> MeasureReport:
    """Percentile bootstrap of a scalar estimator.

    ``point`` defaults to the estimator on the full data.
    """
    summary = bootstrap_many(data, lambda d: {measure: estimator(d)}, B, seed, workers)[measure]
    if point is None:
        point = float(estimator(data))
    return report_from(measure, w, point, summary, seed)


def report_from(measure, w, point, summary: BootstrapSummary | None, seed=None, lower=None, upper=None) -> MeasureReport:
    if summary is None:
        return MeasureReport(measure, str(w), float(point), lower, upper, seed=seed)
    lo, hi = summary.percentile_ci()
    return MeasureReport(
        measure, str(w), float(point), lower, upper,
        boot_mean=summary.mean, ci_low=lo, ci_high=hi,
        replicates=int(summary.values.size), failed=summary.failed, seed=seed,
    )
