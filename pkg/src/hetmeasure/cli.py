"""Command-line entry point: ``hetmeasure <subcommand> [options]``.

Settings resolve as command-line flag, then ``--config`` TOML file (top-level
keys, or a table named after the subcommand), then built-in defaults.  Every
CSV written starts with a ``# config: {...}`` line holding the resolved
settings.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from . import experiments as ex
from .bounds import APPENDIX_FORM, THEOREM_FORM
from .cdf import KERNELS
from .dataset import SchemaConfig, filter_covariates, load_csv, parse_predicate
from .inference import REPORT_COLUMNS
from .measures import McConfig
from .pipeline import CACE_FAMILY, MEASURES, EstimationPlan
from .policies import parse_policy
from .scm import (
    builtin_scms,
    get_scm,
    oracle_cace_parts,
    oracle_cpice_parts,
    oracle_thr_tbr_c_integral,
    sample_observational,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger("hetmeasure")

DEFAULTS = {
    "n1": 10,
    "n2": 100,
    "B": 0,
    "folds": 5,
    "kernel": "epanechnikov",
    "candidates": [1.0, 0.1, 0.01, 0.001],
    "seed": 0,
    "n": 1000,
    "x0": 0.0,
    "x1": 1.0,
    "measures": list(CACE_FAMILY),
    "upper_form": None,  # theorem form for estimates, appendix form for table reproduction
    "n_mc": 1_000_000,
    "workers": 1,
    "mode": "oracle",
    "c_max": 100.0,
    "n_c_grid": 10001,
    "sims": 100,
    "sizes": [100, 1000, 10000],
    "table": "2",
    "cv_max_eval": None,
}

# subcommand tables used by the table-reproduction harness
TABLE_SCM = {"2": "appc_main", "3": "appc_violated"}


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# output


def write_csv(path: str | None, columns: Sequence[str], rows: Sequence[dict], config: dict) -> None:
    """Write rows atomically (temp file then rename); ``None`` or ``-`` means stdout."""
    header = "# config: " + json.dumps(config, sort_keys=True, default=str) + "\n"
    if path in (None, "-"):
        sys.stdout.write(header)
        w = csv.DictWriter(sys.stdout, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return
    target = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".csv", dir=target.parent if str(target.parent) else ".")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(header)
            w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_config_comment(path: str | Path) -> dict:
    """Parse the ``# config:`` header of a CSV written by this tool."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.startswith("# config: "):
        raise ValueError(f"{path} has no config header")
    return json.loads(first[len("# config: "):])


# ---------------------------------------------------------------------------
# settings


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _grid(text) -> list[float]:
    """``start:stop:step`` (inclusive stop) or a comma list."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if ":" in str(text):
        start, stop, step = (float(v) for v in str(text).split(":"))
        if step <= 0:
            raise CliError("grid step must be > 0")
        k = int(np.floor((stop - start) / step + 1e-9))
        return [round(start + i * step, 12) for i in range(k + 1)]
    return _floats(text)


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, "rb") as fh:
            raw = tomllib.load(fh)
        section = raw.get(args.command.replace("-", "_"), {})
        cfg.update({k.replace("-", "_"): v for k, v in raw.items() if not isinstance(v, dict)})
        cfg.update({k.replace("-", "_"): v for k, v in section.items()})
    for k, v in vars(args).items():
        if v is not None and k not in ("func", "config"):
            cfg[k] = v
    cfg["command"] = args.command
    return cfg


def _policy(cfg, key):
    v = cfg.get(key)
    return None if v is None else parse_policy(str(v))


def _measures(cfg) -> tuple[str, ...]:
    m = cfg["measures"]
    names = tuple(s.strip() for s in (m.split(",") if isinstance(m, str) else m) if s.strip())
    bad = [x for x in names if x not in MEASURES]
    if bad:
        raise CliError(f"unknown measure(s) {bad}; choose from {list(MEASURES)}")
    return names


def _load_data(cfg):
    """Dataset from ``--data``/``--schema`` (optionally filtered) or a built-in SCM sample."""
    if cfg.get("data") and cfg.get("scm"):
        raise CliError("give either --data or --scm, not both")
    if cfg.get("data"):
        if not cfg.get("schema"):
            raise CliError("--data needs --schema")
        data = load_csv(cfg["data"], SchemaConfig.from_toml(cfg["schema"]))
        if cfg.get("filter"):
            data = filter_covariates(data, parse_predicate(cfg["filter"]))
        if data.n == 0:
            raise CliError("the filter matched no rows")
        return data
    if cfg.get("scm"):
        return sample_observational(get_scm(cfg["scm"]), int(cfg["n"]), seed=int(cfg["seed"]))
    raise CliError("no data source: give --data with --schema, or --scm")


def _query_points(cfg, data) -> list:
    if cfg.get("w") is not None:
        vals = cfg["w"] if isinstance(cfg["w"], list) else [cfg["w"]]
        pts = []
        for v in vals:
            p = _floats(str(v).replace(";", ","))
            if len(p) != data.d:
                raise CliError(f"query point {v!r} has {len(p)} coordinates, data has {data.d} covariates")
            pts.append(p)
        return pts
    # a fully stratified sample conditions on its (constant) covariate values
    if data.d and np.all(data.w == data.w[0]):
        return [list(data.w[0])]
    if data.d == 0:
        return [[]]
    raise CliError("give --w (covariates vary within the data)")


def _plan(cfg, bounds: bool) -> EstimationPlan:
    yb = None
    if cfg.get("a") is not None or cfg.get("b") is not None:
        if cfg.get("a") is None or cfg.get("b") is None:
            raise CliError("give both --a and --b")
        yb = (float(cfg["a"]), float(cfg["b"]))
    mc = McConfig(n1=int(cfg["n1"]), n2=int(cfg["n2"]), y_bounds=yb, seed=int(cfg["seed"]))
    return EstimationPlan(
        measures=_measures(cfg),
        x0=float(cfg["x0"]),
        x1=float(cfg["x1"]),
        pi0=_policy(cfg, "pi0"),
        pi1=_policy(cfg, "pi1"),
        mc=mc,
        family=cfg["kernel"],
        h=None if cfg.get("h") is None else float(cfg["h"]),
        candidates=tuple(_floats(cfg["candidates"])),
        folds=int(cfg["folds"]),
        cv_seed=int(cfg["seed"]),
        cv_max_eval=None if cfg.get("cv_max_eval") is None else int(cfg["cv_max_eval"]),
        bounds=bounds or bool(cfg.get("bounds")),
        propensity_bounds=bool(cfg.get("propensity_bounds")),
        upper_form=cfg["upper_form"] or THEOREM_FORM,
        standardize=bool(cfg.get("standardize")),
        reselect_h=bool(cfg.get("reselect_h")),
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg) -> None:
    data = sample_observational(get_scm(cfg["scm"]), int(cfg["n"]), seed=int(cfg["seed"]))
    cols = data.column_names
    rows = [dict(zip(cols, (x, y, *w))) for x, y, w in zip(data.x, data.y, data.w)]
    write_csv(cfg.get("out"), cols, rows, cfg)


def cmd_estimate(cfg, bounds: bool = False) -> None:
    data = _load_data(cfg)
    plan = _plan(cfg, bounds)
    trace: list = []
    h = plan.resolve_h(data, trace=trace)
    cfg = dict(cfg, h_selected=h, n_records=data.n)
    if cfg.get("bandwidth_trace"):
        write_csv(cfg["bandwidth_trace"], ("candidate", "cv_score"),
                  [{"candidate": c, "cv_score": s} for c, s in trace], cfg)
    rows = []
    for w in _query_points(cfg, data):
        for rep in plan.reports(data, w, B=int(cfg["B"]), seed=int(cfg["seed"]), workers=int(cfg["workers"]), h=h):
            rows.append(rep.as_row())
    write_csv(cfg.get("out"), REPORT_COLUMNS, rows, cfg)


def cmd_bounds(cfg) -> None:
    cmd_estimate(cfg, bounds=True)


def cmd_oracle(cfg) -> None:
    scm = get_scm(cfg["scm"])
    ws = _grid(cfg["w"]) if cfg.get("w") is not None else [0.5]
    rows = []
    for w in ws:
        parts = oracle_cace_parts(scm, w, float(cfg["x0"]), float(cfg["x1"]), n_mc=int(cfg["n_mc"]), seed=int(cfg["seed"]))
        results = list(parts)
        pi0, pi1 = _policy(cfg, "pi0"), _policy(cfg, "pi1")
        if pi0 is not None and pi1 is not None:
            results += list(oracle_cpice_parts(scm, w, pi0, pi1, n_mc=int(cfg["n_mc"]), seed=int(cfg["seed"])))
        for r in results:
            rows.append({"measure": r.measure, "w": w, "value": r.value, "se": r.mc_std_error, "mc_draws": r.mc_draws})
    write_csv(cfg.get("out"), ("measure", "w", "value", "se", "mc_draws"), rows, cfg)


def cmd_sweep(cfg) -> None:
    mode = cfg["mode"]
    scm = get_scm(cfg["scm"])
    ws = _grid(cfg["w_grid"]) if cfg.get("w_grid") is not None else _grid(f"{scm.w_range[0]}:{scm.w_range[1]}:0.5")
    rows = []
    if mode == "oracle":
        for w in ws:
            c, p, n = oracle_cace_parts(scm, w, float(cfg["x0"]), float(cfg["x1"]), n_mc=int(cfg["n_mc"]), seed=int(cfg["seed"]))
            rows.append({"w": w, "cace": c.value, "p_cace": p.value, "n_cace": n.value, "p_minus_n": p.value - n.value})
        cols = ("w", "cace", "p_cace", "n_cace", "p_minus_n")
    elif mode == "estimate":
        data = sample_observational(scm, int(cfg["n"]), seed=int(cfg["seed"]))
        plan = _plan(dict(cfg, measures=list(CACE_FAMILY)), bounds=False)
        h = plan.resolve_h(data)
        for w in ws:
            out = plan.evaluate(data, w, h)
            rows.append({"w": w, "cace": out["cace"], "p_cace": out["p_cace"], "n_cace": out["n_cace"],
                         "p_minus_n": out["p_cace"] - out["n_cace"]})
        cols = ("w", "cace", "p_cace", "n_cace", "p_minus_n")
        cfg = dict(cfg, h_selected=h)
    elif mode == "tail":
        for w in ws:
            t = oracle_thr_tbr_c_integral(scm, w, c_max=float(cfg["c_max"]), n_mc=int(cfg["n_mc"]),
                                          n_c_grid=int(cfg["n_c_grid"]), seed=int(cfg["seed"]),
                                          x0=float(cfg["x0"]), x1=float(cfg["x1"]))
            rows.append({"w": w, "int_tbr": t.tbr, "int_thr": t.thr, "difference": t.tbr - t.thr})
        cols = ("w", "int_tbr", "int_thr", "difference")
    else:
        raise CliError(f"unknown sweep mode {mode!r}; choose oracle, estimate or tail")
    write_csv(cfg.get("out"), cols, rows, cfg)


def cmd_reproduce_tables(cfg) -> None:
    table = str(cfg["table"])
    scm = cfg.get("scm") or TABLE_SCM.get(table)
    if scm is None:
        raise CliError(f"unknown table {table!r}; choose 2 or 3, or give --scm")
    get_scm(scm)
    cells = ex.reproduce_table(
        scm=scm,
        sizes=tuple(int(v) for v in _floats(cfg["sizes"])),
        n_sims=int(cfg["sims"]),
        workers=int(cfg["workers"]),
        master_seed=int(cfg["seed"]),
        n_mc=int(cfg["n_mc"]),
        n1=int(cfg["n1"]),
        n2=int(cfg["n2"]),
        family=cfg["kernel"],
        candidates=tuple(_floats(cfg["candidates"])),
        folds=int(cfg["folds"]),
        cv_max_eval=200 if cfg.get("cv_max_eval") is None else int(cfg["cv_max_eval"]),
        upper_form=cfg["upper_form"] or APPENDIX_FORM,
    )
    cols = ("scm", "n", "measure", "mean", "band_low", "band_high", "truth", "sims")
    rows = [{**c._asdict(), "truth": "" if c.truth is None else c.truth} for c in cells]
    # record the simulation setting actually used, not unrelated CLI defaults
    used = ex.setting_dict(ex.SimulationSetting(scm=scm, upper_form=cfg["upper_form"] or APPENDIX_FORM))
    header = {k: v for k, v in cfg.items() if k not in ("x0", "x1", "measures", "mode", "c_max", "n_c_grid", "B", "n")}
    header.update(scm=scm, upper_form=used["upper_form"], w=used["w"], x0=used["x0"], x1=used["x1"],
                  pi0=used["pi0"], pi1=used["pi1"])
    write_csv(cfg.get("out"), cols, rows, header)


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML file with settings (flags override it)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", "-o", help="output CSV path (default: stdout)")


def _add_estimation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="input CSV")
    p.add_argument("--schema", help="schema TOML for --data")
    p.add_argument("--filter", help='stratum, e.g. "age=30,sex=male,bmi=20:40"')
    p.add_argument("--scm", help="sample from a built-in SCM instead of reading a CSV")
    p.add_argument("--n", type=int, help="sample size with --scm")
    p.add_argument("--w", action="append", help="covariate point; ';'-separate coordinates; repeatable")
    p.add_argument("--measures", help=f"comma list from {','.join(MEASURES)}")
    p.add_argument("--x0", type=float)
    p.add_argument("--x1", type=float)
    p.add_argument("--pi0", help="policy, e.g. uniform:0:0.1, dirac:0, normal:0:1")
    p.add_argument("--pi1", help="policy, e.g. shift:1.9 (shift of pi0's draw)")
    p.add_argument("--n1", type=int, help="policy draws")
    p.add_argument("--n2", type=int, help="outcome draws")
    p.add_argument("--a", type=float, help="lower end of the outcome domain")
    p.add_argument("--b", type=float, help="upper end of the outcome domain")
    p.add_argument("--kernel", choices=sorted(KERNELS))
    p.add_argument("--h", type=float, help="fixed bandwidth (skips selection)")
    p.add_argument("--candidates", help="comma list of bandwidth candidates")
    p.add_argument("--folds", type=int)
    p.add_argument("--cv-max-eval", type=int, help="held-out records scored per fold")
    p.add_argument("--standardize", action="store_true", default=None, help="z-score X and W before the kernel")
    p.add_argument("--bandwidth-trace", help="write (candidate, cv_score) CSV here")
    p.add_argument("--B", type=int, help="bootstrap replicates (0 = none)")
    p.add_argument("--reselect-h", action="store_true", default=None, help="reselect h in every replicate")
    p.add_argument("--bounds", action="store_true", default=None, help="add CDF-only bounds")
    p.add_argument("--propensity-bounds", action="store_true", default=None,
                   help="add bounds that also use P(X=x|W=w) (binary treatment)")
    p.add_argument("--upper-form", choices=(THEOREM_FORM, APPENDIX_FORM))
    p.add_argument("--workers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetmeasure", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample observational data from a built-in SCM")
    _add_common(p)
    p.add_argument("--scm", required=True, choices=sorted(builtin_scms()))
    p.add_argument("--n", type=int)
    p.set_defaults(func=cmd_simulate)

    for name, func, text in (("estimate", cmd_estimate, "point estimates (optionally bounds and bootstrap)"),
                             ("bounds", cmd_bounds, "point estimates with bounds")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        _add_estimation(p)
        p.set_defaults(func=func)

    p = sub.add_parser("oracle", help="Monte Carlo ground truths from a built-in SCM")
    _add_common(p)
    p.add_argument("--scm", required=True)
    p.add_argument("--w", help="point or grid start:stop:step")
    p.add_argument("--x0", type=float)
    p.add_argument("--x1", type=float)
    p.add_argument("--pi0")
    p.add_argument("--pi1")
    p.add_argument("--n-mc", type=int)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="per-w curves for plotting")
    _add_common(p)
    p.add_argument("--scm", required=True)
    p.add_argument("--mode", choices=("oracle", "estimate", "tail"))
    p.add_argument("--w-grid", help="start:stop:step or comma list")
    p.add_argument("--x0", type=float)
    p.add_argument("--x1", type=float)
    p.add_argument("--n-mc", type=int)
    p.add_argument("--c-max", type=float)
    p.add_argument("--n-c-grid", type=int)
    p.add_argument("--n", type=int, help="sample size in estimate mode")
    p.add_argument("--n1", type=int)
    p.add_argument("--n2", type=int)
    p.add_argument("--kernel", choices=sorted(KERNELS))
    p.add_argument("--h", type=float)
    p.add_argument("--candidates")
    p.add_argument("--folds", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce-tables", help="repeated-simulation summary tables")
    _add_common(p)
    p.add_argument("--table", choices=sorted(TABLE_SCM))
    p.add_argument("--scm")
    p.add_argument("--sizes", help="comma list of sample sizes")
    p.add_argument("--sims", type=int)
    p.add_argument("--n1", type=int)
    p.add_argument("--n2", type=int)
    p.add_argument("--kernel", choices=sorted(KERNELS))
    p.add_argument("--candidates")
    p.add_argument("--folds", type=int)
    p.add_argument("--cv-max-eval", type=int)
    p.add_argument("--n-mc", type=int)
    p.add_argument("--upper-form", choices=(THEOREM_FORM, APPENDIX_FORM))
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_reproduce_tables)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        cfg.pop("verbose", None)
        args.func(cfg)
    except (CliError, ValueError, KeyError, OSError, RuntimeError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"hetmeasure {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
