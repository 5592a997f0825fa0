"""End-to-end estimation: bandwidth choice, CDF fit, measures, bounds, bootstrap."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import bounds as bnd
from .cdf import KernelSpec, fit_cdf, fit_propensity, select_bandwidth
from .dataset import Dataset
from .inference import MeasureReport, bootstrap_many, report_from
from .measures import McConfig, estimate_cace_parts, estimate_cpice_parts
from .policies import InterventionPolicy

CACE_FAMILY = ("cace", "p_cace", "n_cace")
CPICE_FAMILY = ("cpice", "p_cpice", "n_cpice")
MEASURES = CACE_FAMILY + CPICE_FAMILY
DEFAULT_CANDIDATES = (1.0, 0.1, 0.01, 0.001)


def w_label(w) -> str:
    return ";".join(f"{v:g}" for v in np.atleast_1d(np.asarray(w, dtype=float)))


@dataclass(frozen=True)
class EstimationPlan:
    """Everything needed to turn a dataset into measure estimates at a point ``w``.

    ``h=None`` selects the bandwidth by cross-validation over ``candidates``.
    ``bounds`` adds CDF-only intervals for the P/N measures;
    ``propensity_bounds`` adds the tighter intervals that also use the
    treatment share (binary treatment, CACE family only).
    """

    measures: tuple[str, ...] = CACE_FAMILY
    x0: float = 0.0
    x1: float = 1.0
    pi0: InterventionPolicy | None = None
    pi1: InterventionPolicy | None = None
    mc: McConfig = field(default_factory=McConfig)
    family: str = "epanechnikov"
    h: float | None = None
    candidates: tuple[float, ...] = DEFAULT_CANDIDATES
    folds: int = 5
    cv_seed: int = 0
    cv_max_eval: int | None = None
    bounds: bool = False
    propensity_bounds: bool = False
    upper_form: str = bnd.THEOREM_FORM
    standardize: bool = False
    reselect_h: bool = False

    def __post_init__(self):
        unknown = [m for m in self.measures if m not in MEASURES]
        if unknown:
            raise ValueError(f"unknown measure(s) {unknown}; choose from {list(MEASURES)}")
        if any(m in CPICE_FAMILY for m in self.measures) and (self.pi0 is None or self.pi1 is None):
            raise ValueError("policy measures need both pi0 and pi1")

    def resolve_h(self, data: Dataset, trace: list | None = None) -> float:
        if self.h is not None:
            return float(self.h)
        return select_bandwidth(
            data, self.candidates, folds=self.folds, seed=self.cv_seed, family=self.family,
            trace=trace, max_eval=self.cv_max_eval, standardize=self.standardize,
            y_bounds=self.mc.y_bounds,
        )

    def evaluate(self, data: Dataset, w, h: float) -> dict[str, float]:
        """Named outputs at ``w``: each measure, plus ``<m>_lower``/``<m>_upper`` when bounded."""
        kernel = KernelSpec(self.family, h)
        model = fit_cdf(data, kernel, standardize=self.standardize)
        out: dict[str, float] = {}
        wanted = set(self.measures)
        if wanted & set(CACE_FAMILY):
            c = estimate_cace_parts(model, w, self.mc, self.x0, self.x1)
            out.update(zip(CACE_FAMILY, c))
            if self.bounds:
                for name, fn in (("p_cace", bnd.bound_p_cace_t2), ("n_cace", bnd.bound_n_cace_t2)):
                    pair = fn(model, w, self.mc, self.x0, self.x1, upper_form=self.upper_form)
                    out[name + "_lower"], out[name + "_upper"] = pair.lower, pair.upper
            if self.propensity_bounds:
                pp, nn = bnd.bound_pn_cace_t3(model, fit_propensity(data, kernel), w, self.mc)
                out["p_cace_lower_prop"], out["p_cace_upper_prop"] = pp.lower, pp.upper
                out["n_cace_lower_prop"], out["n_cace_upper_prop"] = nn.lower, nn.upper
        if wanted & set(CPICE_FAMILY):
            c = estimate_cpice_parts(model, w, self.pi0, self.pi1, self.mc)
            out.update(zip(CPICE_FAMILY, c))
            if self.bounds:
                for name, fn in (("p_cpice", bnd.bound_p_cpice_t5), ("n_cpice", bnd.bound_n_cpice_t5)):
                    pair = fn(model, w, self.pi0, self.pi1, self.mc, upper_form=self.upper_form)
                    out[name + "_lower"], out[name + "_upper"] = pair.lower, pair.upper
        return out

    def run(self, data: Dataset, w, h: float | None = None) -> dict[str, float]:
        return self.evaluate(data, w, self.resolve_h(data) if h is None else h)

    def reports(self, data: Dataset, w, B: int = 0, seed: int = 0, workers: int = 1, h: float | None = None) -> list[MeasureReport]:
        """One :class:`MeasureReport` per requested measure (plus ``*_prop`` rows for propensity bounds)."""
        h = self.resolve_h(data) if h is None else h
        full = self.evaluate(data, w, h)
        summaries = None
        if B > 0:
            if self.reselect_h:
                def pipe(d):
                    return self.run(d, w)
            else:
                def pipe(d):
                    return self.evaluate(d, w, h)
            summaries = bootstrap_many(data, pipe, B, seed, workers)
        label = w_label(w)
        rows = []
        for m in self.measures:
            lo, hi = full.get(m + "_lower"), full.get(m + "_upper")
            rows.append(report_from(m, label, full[m], summaries[m] if summaries else None, seed, lo, hi))
            if m + "_lower_prop" in full:
                rows.append(report_from(m + "_prop", label, full[m], None, seed,
                                        full[m + "_lower_prop"], full[m + "_upper_prop"]))
        return rows

    def with_seed(self, seed: int) -> EstimationPlan:
        return replace(self, mc=replace(self.mc, seed=seed))
