"""Acceptance criteria, one test per criterion.

Every test appends a single PASS/FAIL line to ``conftest.ACCEPTANCE_LINES``,
which is printed at the end of the pytest run.  The simulation-table checks
run 100 replicates per sample size and dominate the runtime (a few minutes
on one core).  Running this file as a script executes the same checks.

The insurance workflow needs the public insurance CSV; point
``HETMEASURE_INSURANCE_CSV`` at it or drop it in ``tests/data/insurance.csv``.
"""

from __future__ import annotations

import math
import os
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from hetmeasure.bounds import APPENDIX_FORM, THEOREM_FORM, bound_n_cace_t2, bound_n_cpice_t5, bound_p_cace_t2, bound_p_cpice_t5, bound_pn_cace_t3
from hetmeasure.cdf import KernelSpec, fit_cdf, fit_propensity
from hetmeasure.dataset import SchemaConfig, filter_covariates, load_csv
from hetmeasure.experiments import SimulationSetting, ground_truths, run_simulation, summarize
from hetmeasure.measures import McConfig, estimate_cace_parts, estimate_cpice_parts
from hetmeasure.pipeline import EstimationPlan
from hetmeasure.policies import dirac, empirical, normal, single_shift, uniform
from hetmeasure.scm import get_scm, oracle_binary_rates, oracle_cace_parts, oracle_cpice_parts, oracle_thr_tbr_c_integral, sample_observational

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
SIZES = (100, 1_000, 10_000)
N_SIMS = 100


def record(name: str, passed: bool | None, detail: str = "") -> None:
    status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
    line = f"[{status}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def _workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))


@pytest.fixture(scope="module")
def main_tables():
    """Simulation summaries for the monotone model, keyed by sample size."""
    out = {}
    truths = None
    for n in SIZES:
        setting = SimulationSetting(scm="appc_main", n=n, n_sims=N_SIMS)
        if truths is None:
            truths = ground_truths(setting, n_mc=1_000_000)
        sims = run_simulation(setting, _workers())
        out[n] = (sims, {c.measure: c for c in summarize(setting, sims, truths)})
    return out


@pytest.fixture(scope="module")
def violated_table():
    setting = SimulationSetting(scm="appc_violated", n=10_000, n_sims=N_SIMS)
    truths = ground_truths(setting, n_mc=1_000_000)
    sims = run_simulation(setting, _workers())
    return sims, truths


# --------------------------------------------------------------------------


def test_monotone_simulation_table(main_tables):
    reference = {"cace": 0.002, "p_cace": 0.128, "n_cace": 0.122, "cpice": 0.002, "p_cpice": 0.121, "n_cpice": 0.121}
    truth = {"cace": 0.0, "p_cace": 0.125, "n_cace": 0.125, "cpice": 0.0, "p_cpice": 0.119, "n_cpice": 0.119}
    cells = main_tables[10_000][1]
    bad, parts = [], []
    for m in reference:
        mean = cells[m].mean
        ok = abs(mean - reference[m]) <= 0.015 and abs(mean - truth[m]) <= 0.02
        parts.append(f"{m}={mean:.4f}")
        if not ok:
            bad.append(m)
    record("Monotone simulation table (N=10000)", not bad, " ".join(parts) + (f" off: {bad}" if bad else ""))
    assert not bad


def test_violated_simulation_containment(violated_table):
    sims, truths = violated_table
    reference_ub = {"p_cace": 2.453, "n_cace": 2.440, "p_cpice": 2.402, "n_cpice": 2.405}
    bad, parts = [], []
    for m, ub_ref in reference_ub.items():
        lo, ub = float(sims[m].mean()), float(sims[m + "_ub"].mean())
        t = truths[m]
        ok = lo <= t <= ub and abs(ub - ub_ref) <= 0.15
        parts.append(f"{m}=[{lo:.3f},{ub:.3f}]∋{t:.4f}")
        if not ok:
            bad.append(m)
    record("Violated-monotonicity containment (N=10000)", not bad, " ".join(parts) + (f" off: {bad}" if bad else ""))
    assert not bad


def test_oracle_closed_forms():
    n_mc = 1_000_000
    cases = [
        ("ex1", oracle_cace_parts(get_scm("ex1_additive"), 0.5, n_mc=n_mc, seed=1), (1.0, 1.0, 0.0)),
        ("ex2", oracle_cace_parts(get_scm("ex2_multiplicative"), 0.5, n_mc=n_mc, seed=2), (0.0, INV_SQRT_2PI, INV_SQRT_2PI)),
        ("ex3", oracle_cace_parts(get_scm("ex3_null"), 0.5, n_mc=n_mc, seed=3), (0.0, 0.0, 0.0)),
        ("ex1'", oracle_cpice_parts(get_scm("ex1_additive"), 0.5, normal(0, 1), single_shift(2.0), n_mc=n_mc, seed=4), (2.0, 2.0, 0.0)),
    ]
    bad, parts = [], []
    for name, res, target in cases:
        for r, t in zip(res, target):
            z = abs(r.value - t) / r.mc_std_error if r.mc_std_error > 0 else (0.0 if abs(r.value - t) <= 1e-12 else math.inf)
            if z > 3.0:
                bad.append(f"{name}.{r.measure}")
        parts.append(f"{name}=({', '.join(f'{r.value:.4f}' for r in res)})")
    record("Oracle closed forms (3 SE, n_mc=1e6)", not bad, " ".join(parts) + (f" off: {bad}" if bad else ""))
    assert not bad


def test_exact_identities(appc_1k):
    tol = 1e-12
    worst = {"decomp": 0.0, "dirac": 0.0, "lower=point": 0.0, "order": 0.0, "t3_in_t2": 0.0}
    model = fit_cdf(appc_1k, KernelSpec("epanechnikov", 1.0))
    pi0, pi1 = uniform(0.0, 0.1), single_shift(1.9)
    for k, w in enumerate((0.2, 0.5, 0.8)):
        cfg = McConfig(seed=k)
        c = estimate_cace_parts(model, w, cfg, 0.0, 2.0)
        p = estimate_cpice_parts(model, w, pi0, pi1, cfg)
        d = estimate_cpice_parts(model, w, dirac(0.0), dirac(2.0), cfg)
        worst["decomp"] = max(worst["decomp"], abs(c.positive - c.negative - c.total), abs(p.positive - p.negative - p.total))
        worst["dirac"] = max(worst["dirac"], *(abs(a - b) for a, b in zip(c, d)))
        for form in (THEOREM_FORM, APPENDIX_FORM):
            pairs = [
                (bound_p_cace_t2(model, w, cfg, 0.0, 2.0, form), c.positive),
                (bound_n_cace_t2(model, w, cfg, 0.0, 2.0, form), c.negative),
                (bound_p_cpice_t5(model, w, pi0, pi1, cfg, form), p.positive),
                (bound_n_cpice_t5(model, w, pi0, pi1, cfg, form), p.negative),
            ]
            for pair, point in pairs:
                worst["lower=point"] = max(worst["lower=point"], abs(pair.lower - point))
                worst["order"] = max(worst["order"], pair.lower - pair.upper)

    binary = sample_observational(get_scm("ex2_multiplicative"), 2_000, seed=7)
    bmodel = fit_cdf(binary, KernelSpec("epanechnikov", 0.3))
    prop = fit_propensity(binary, KernelSpec("epanechnikov", 0.3))
    for k, w in enumerate((0.3, 0.5, 0.7)):
        cfg = McConfig(seed=k)
        pp, nn = bound_pn_cace_t3(bmodel, prop, w, cfg)
        for t3, t2 in ((pp, bound_p_cace_t2(bmodel, w, cfg)), (nn, bound_n_cace_t2(bmodel, w, cfg))):
            worst["t3_in_t2"] = max(worst["t3_in_t2"], t2.lower - t3.lower, t3.upper - t2.upper)
            worst["order"] = max(worst["order"], t3.lower - t3.upper)

    ok = all(v <= tol for v in worst.values())
    record("Exact identities (1e-12)", ok, " ".join(f"{k}={v:.1e}" for k, v in worst.items()))
    assert ok


def test_ex4_sweep_shape():
    scm = get_scm("ex4_interaction")
    grid = np.arange(0.0, 10.01, 0.5)
    n_mc = 1_000_000
    bad = []
    p_vals, n_vals, p_se, n_se = [], [], [], []
    worst_exact = 0.0
    for w in grid:
        c, p, n = oracle_cace_parts(scm, w, n_mc=n_mc, seed=0)
        if abs(c.value - 1.0) > 3.0 * c.mc_std_error + 1e-12:
            bad.append(f"cace@{w:g}")
        ca, pa, na = oracle_cace_parts(scm, w, n_mc=n_mc, seed=0, antithetic=True)
        worst_exact = max(worst_exact, abs(pa.value - na.value - 1.0))
        p_vals.append(p.value)
        n_vals.append(n.value)
        p_se.append(p.mc_std_error)
        n_se.append(n.mc_std_error)
    if worst_exact > 1e-12:
        bad.append("p-n")
    # nondecreasing for w >= 1, allowing 3 SE of slack between neighbours
    for vals, ses, name in ((p_vals, p_se, "p"), (n_vals, n_se, "n")):
        for i in range(1, grid.size):
            if grid[i - 1] >= 1.0 and vals[i] < vals[i - 1] - 3.0 * math.hypot(ses[i], ses[i - 1]):
                bad.append(f"{name}@{grid[i]:g}")
    detail = f"P(0..10)={p_vals[0]:.3f}..{p_vals[-1]:.3f} N={n_vals[0]:.3f}..{n_vals[-1]:.3f} |P-N-1|max={worst_exact:.1e}"
    record("ex4 sweep shape", not bad, detail + (f" off: {bad}" if bad else ""))
    assert not bad


def test_ex4_tail_integral_difference():
    scm = get_scm("ex4_interaction")
    bad, parts = [], []
    for w in (0, 2, 4, 6, 8, 10):
        t = oracle_thr_tbr_c_integral(scm, float(w), c_max=100.0, n_mc=4_000_000, n_c_grid=100_001, seed=w)
        diff = t.tbr - t.thr
        parts.append(f"w={w}:{diff:.4f}")
        if abs(diff - 1.0) > 0.02:
            bad.append(w)
    record("ex4 tail integrals (TBR - THR = 1)", not bad, " ".join(parts))
    assert not bad


def test_binary_outcome_reduction():
    scm = get_scm("binary_outcome")
    data = sample_observational(scm, 50_000, seed=21)
    # W lives on [0, 1]: scale the bandwidth grid to it (a near-flat CV curve
    # otherwise drifts to the degenerate 0.001 candidate)
    plan = EstimationPlan(measures=("p_cace",), mc=McConfig(seed=21), candidates=(1.0, 0.3, 0.1), cv_max_eval=400)
    report = plan.reports(data, 0.5, B=100, seed=21)[0]
    # normal-theory SE implied by the 95% percentile interval
    boot_se = (report.ci_high - report.ci_low) / (2 * 1.96)
    n_mc = 1_000_000
    tbr, _ = oracle_binary_rates(scm, 0.5, n_mc=n_mc, seed=21)
    oracle_se = math.sqrt(tbr * (1.0 - tbr) / n_mc)
    tol = 3.0 * boot_se + 3.0 * oracle_se
    ok = abs(report.point - tbr) <= tol
    record("Binary-outcome reduction", ok, f"P-CACE={report.point:.4f} TBR={tbr:.4f} tol={tol:.4f}")
    assert ok


def test_consistency_trend(main_tables):
    errs = [float(np.mean(np.abs(main_tables[n][0]["p_cace"] - 0.125))) for n in SIZES]
    ok = errs[0] > errs[1] > errs[2]
    record("Consistency trend", ok, " > ".join(f"N={n}:{e:.4f}" for n, e in zip(SIZES, errs)))
    assert ok


def _insurance_csv() -> Path | None:
    env = os.environ.get("HETMEASURE_INSURANCE_CSV")
    for cand in (env, Path(__file__).parent / "data" / "insurance.csv"):
        if cand and Path(cand).is_file():
            return Path(cand)
    return None


def test_insurance_workflow():
    path = _insurance_csv()
    if path is None:
        record("Insurance workflow", None, "insurance CSV not available offline")
        pytest.skip("insurance CSV not available (set HETMEASURE_INSURANCE_CSV)")
    schema = SchemaConfig(
        treatment="bmi", outcome="charges",
        covariates=(("age", "numeric"), ("sex", "categorical"), ("smoker", "categorical"), ("children", "numeric")),
    )
    data = filter_covariates(load_csv(path, schema), {"age": 30, "smoker": "no", "sex": "male", "children": 1})
    w = data.w[0]
    # BMI is in kg/m^2, so candidates are on that scale
    candidates = (1.0, 2.0, 5.0, 10.0)
    cace_plan = EstimationPlan(measures=("cace", "p_cace", "n_cace"), x0=20.0, x1=40.0, candidates=candidates, bounds=True)
    pi0 = empirical(data.x)
    cpice_plan = EstimationPlan(measures=("cpice", "p_cpice", "n_cpice"), pi0=pi0, pi1=single_shift(3.0, pi0),
                                candidates=candidates, bounds=True)
    rows = {r.measure: r for r in cace_plan.reports(data, w, B=100, seed=0) + cpice_plan.reports(data, w, B=100, seed=0)}
    checks = {
        "cace>0": rows["cace"].point > 0,
        "n/p<0.1": rows["n_cace"].point < 0.1 * rows["p_cace"].point,
        "cpice>0": rows["cpice"].point > 0,
        "cpice_ci_spans_0": rows["cpice"].ci_low < 0 < rows["cpice"].ci_high,
    }
    for m in ("p_cace", "n_cace", "p_cpice", "n_cpice"):
        checks[f"{m}_ub>=10lb"] = rows[m].upper_bound >= 10.0 * rows[m].lower_bound
    bad = [k for k, v in checks.items() if not v]
    detail = " ".join(f"{m}={rows[m].point:.1f}[{rows[m].lower_bound or 0:.1f},{rows[m].upper_bound or 0:.1f}]"
                      for m in ("p_cace", "n_cace", "p_cpice", "n_cpice"))
    record("Insurance workflow", not bad, detail + (f" off: {bad}" if bad else ""))
    assert not bad


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
