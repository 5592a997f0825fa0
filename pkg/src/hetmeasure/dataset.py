"""Observational data ingestion.

A :class:`Dataset` holds one treatment column ``x``, one outcome column ``y``
and a ``(n, d)`` covariate matrix ``w``.  Categorical covariates are
integer-coded on load; the codes are kept in ``encodings`` so that filters can
be written with the original labels.
"""

from __future__ import annotations

import csv
import logging
import math
import sys
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class SchemaError(ValueError):
    """Raised when a CSV file or schema file does not match the declared schema."""


class EmptyDatasetError(ValueError):
    """Raised when ingestion leaves no usable rows."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SchemaConfig:
    """Column roles for :func:`load_csv`.

    ``covariates`` is an ordered list of ``(name, kind)`` pairs with
    ``kind`` in ``{"numeric", "categorical"}``.  ``encodings`` maps a
    categorical column to a ``label -> code`` table; categorical columns
    without an explicit table are coded by sorted label order.
    """

    treatment: str
    outcome: str
    covariates: tuple[tuple[str, str], ...] = ()
    encodings: Mapping[str, Mapping[str, int]] = field(default_factory=dict)
    binary_treatment: bool = False
    y_bounds: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple((str(n), str(k)) for n, k in self.covariates))
        names = [self.treatment, self.outcome] + [n for n, _ in self.covariates]
        if len(set(names)) != len(names):
            raise SchemaError(f"treatment, outcome and covariate columns must be distinct: {names}")
        for name, kind in self.covariates:
            if kind not in (NUMERIC, CATEGORICAL):
                raise SchemaError(f"covariate {name!r}: unknown kind {kind!r}")
        for name in self.encodings:
            if name not in self.covariate_names:
                raise SchemaError(f"encoding given for unknown covariate {name!r}")

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.covariates)

    @property
    def columns(self) -> tuple[str, ...]:
        return (self.treatment, self.outcome) + self.covariate_names

    @classmethod
    def from_toml(cls, path: str | Path) -> SchemaConfig:
        """Read a schema file.

        Grammar (TOML)::

            treatment = "bmi"
            outcome = "charges"
            binary_treatment = false        # optional
            y_bounds = [0.0, 70000.0]       # optional

            [covariates]                    # order is kept
            age = "numeric"
            sex = "categorical"

            [encodings.sex]                 # optional per categorical column
            female = 0
            male = 1
        """
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any]) -> SchemaConfig:
        try:
            treatment, outcome = raw["treatment"], raw["outcome"]
        except KeyError as e:
            raise SchemaError(f"schema is missing key {e.args[0]!r}") from None
        cov = raw.get("covariates", {})
        if isinstance(cov, Mapping):
            covariates = tuple(cov.items())
        else:
            covariates = tuple((c, NUMERIC) if isinstance(c, str) else tuple(c) for c in cov)
        yb = raw.get("y_bounds")
        return cls(
            treatment=treatment,
            outcome=outcome,
            covariates=covariates,
            encodings={k: dict(v) for k, v in raw.get("encodings", {}).items()},
            binary_treatment=bool(raw.get("binary_treatment", False)),
            y_bounds=None if yb is None else (float(yb[0]), float(yb[1])),
        )


@dataclass(frozen=True)
class Dataset:
    """Immutable i.i.d. sample ``{(X_i, Y_i, W_i)}``.

    ``column_names`` is ``(treatment, outcome, *covariates)``.  ``dropped``
    records how many input rows ingestion discarded.  A dataset may be empty
    only as the result of :func:`filter_covariates`.
    """

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    column_names: tuple[str, ...] = ()
    y_bounds: tuple[float, float] | None = None
    binary_treatment: bool = False
    encodings: Mapping[str, Mapping[str, int]] = field(default_factory=dict)
    dropped: int = 0

    def __post_init__(self):
        x = _frozen(np.ravel(self.x))
        y = _frozen(np.ravel(self.y))
        w = np.asarray(self.w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(-1, 1) if w.size else np.zeros((x.size, 0))
        w = _frozen(w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        if not (x.shape[0] == y.shape[0] == w.shape[0]):
            raise ValueError(f"column lengths differ: x={x.shape[0]}, y={y.shape[0]}, w={w.shape[0]}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
            raise ValueError("dataset contains non-finite values")
        if not self.column_names:
            names = ("x", "y") + tuple(f"w{j}" for j in range(w.shape[1]))
            object.__setattr__(self, "column_names", names)
        elif len(self.column_names) != 2 + w.shape[1]:
            raise ValueError("column_names must list treatment, outcome and every covariate")
        if self.binary_treatment and not np.all((x == 0) | (x == 1)):
            raise ValueError("binary treatment declared but x has values outside {0, 1}")
        if self.y_bounds is not None:
            a, b = map(float, self.y_bounds)
            if not a < b:
                raise ValueError(f"y_bounds must satisfy a < b, got {self.y_bounds}")
            if y.size and (y.min() < a or y.max() > b):
                raise ValueError(f"outcomes fall outside y_bounds {self.y_bounds}")
            object.__setattr__(self, "y_bounds", (a, b))

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    @property
    def d(self) -> int:
        return int(self.w.shape[1])

    @property
    def treatment_name(self) -> str:
        return self.column_names[0]

    @property
    def outcome_name(self) -> str:
        return self.column_names[1]

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return self.column_names[2:]

    def take(self, idx) -> Dataset:
        """Row subset (or resample) by integer index or boolean mask."""
        idx = np.asarray(idx)
        return replace(self, x=self.x[idx], y=self.y[idx], w=self.w[idx], dropped=0)

    def column(self, name: str) -> np.ndarray:
        if name == self.treatment_name:
            return self.x
        if name == self.outcome_name:
            return self.y
        try:
            return self.w[:, self.covariate_names.index(name)]
        except ValueError:
            raise KeyError(f"unknown column {name!r}") from None

    def encode(self, name: str, value) -> float:
        """Map a categorical label to its code; numbers pass through."""
        table = self.encodings.get(name)
        if table is not None and isinstance(value, str):
            if value not in table:
                raise KeyError(f"column {name!r} has no category {value!r}")
            return float(table[value])
        return float(value)


def _parse_float(cell: str) -> float:
    v = float(cell)
    if not math.isfinite(v):
        raise ValueError(cell)
    return v


def load_csv(path: str | Path, schema: SchemaConfig) -> Dataset:
    """Read ``path`` into a :class:`Dataset` following ``schema``.

    Rows with an empty or unparsable cell in any schema column are dropped
    (counted in ``Dataset.dropped``, one warning per file).  Raises
    :class:`SchemaError` when a schema column is missing from the header and
    :class:`EmptyDatasetError` when no rows survive.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyDatasetError(f"{path}: empty dataset (no header)") from None
        missing = [c for c in schema.columns if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}; header is {header}")
        pos = {c: header.index(c) for c in schema.columns}
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]

    kinds = dict(schema.covariates)
    encodings: dict[str, dict[str, int]] = {}
    for name, kind in schema.covariates:
        if kind != CATEGORICAL:
            continue
        if name in schema.encodings:
            encodings[name] = dict(schema.encodings[name])
        else:
            labels = sorted({r[pos[name]].strip() for r in rows if len(r) > pos[name] and r[pos[name]].strip()})
            encodings[name] = {lab: i for i, lab in enumerate(labels)}

    xs, ys, ws = [], [], []
    dropped = 0
    for r in rows:
        try:
            cells = {c: r[pos[c]].strip() for c in schema.columns}
        except IndexError:
            dropped += 1
            continue
        try:
            xv = _parse_float(cells[schema.treatment])
            yv = _parse_float(cells[schema.outcome])
            wv = []
            for name in schema.covariate_names:
                cell = cells[name]
                if kinds[name] == CATEGORICAL:
                    if not cell:
                        raise ValueError(cell)
                    if cell not in encodings[name]:
                        raise SchemaError(f"{path}: column {name!r} value {cell!r} has no code")
                    wv.append(float(encodings[name][cell]))
                else:
                    wv.append(_parse_float(cell))
        except SchemaError:
            raise
        except ValueError:
            dropped += 1
            continue
        xs.append(xv)
        ys.append(yv)
        ws.append(wv)

    if dropped:
        log.warning("%s: dropped %d row(s) with missing or unparsable cells", path, dropped)
    if not xs:
        raise EmptyDatasetError(f"{path}: empty dataset")
    return Dataset(
        x=np.array(xs),
        y=np.array(ys),
        w=np.array(ws, dtype=float).reshape(len(xs), len(schema.covariates)),
        column_names=schema.columns,
        y_bounds=schema.y_bounds,
        binary_treatment=schema.binary_treatment,
        encodings=encodings,
        dropped=dropped,
    )


def filter_covariates(data: Dataset, predicate: Mapping[str, Any]) -> Dataset:
    """Keep rows satisfying every constraint in ``predicate``.

    Each value is either a scalar (equality; categorical labels are accepted)
    or a ``(lo, hi)`` pair meaning ``lo <= value <= hi`` (``None`` for an open
    end).  Row order is preserved and the result may be empty.
    """
    mask = np.ones(data.n, dtype=bool)
    for name, cond in predicate.items():
        col = data.column(name)
        if isinstance(cond, tuple | list) and len(cond) == 2:
            lo, hi = cond
            if lo is not None:
                mask &= col >= data.encode(name, lo)
            if hi is not None:
                mask &= col <= data.encode(name, hi)
        else:
            mask &= col == data.encode(name, cond)
    return data.take(np.flatnonzero(mask))


def parse_predicate(spec: str | Sequence[str] | None) -> dict[str, Any]:
    """Parse ``"age=30,sex=male,bmi=20:40"`` into a predicate mapping.

    ``name=a:b`` is an inclusive range (either end may be empty); any other
    value is an equality.  Values that parse as numbers become floats.
    """
    if not spec:
        return {}
    parts = spec.split(",") if isinstance(spec, str) else [p for s in spec for p in s.split(",")]
    out: dict[str, Any] = {}
    for part in parts:
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"bad constraint {part!r}; expected name=value or name=lo:hi")
        name, value = (s.strip() for s in part.split("=", 1))

        def conv(v):
            if v == "":
                return None
            try:
                return float(v)
            except ValueError:
                return v

        out[name] = tuple(conv(v) for v in value.split(":", 1)) if ":" in value else conv(value)
    return out


def infer_y_bounds(data: Dataset, margin_fraction: float = 0.0) -> tuple[float, float]:
    """Outcome domain ``[a, b]`` from the observed range, widened by a margin.

    A constant outcome is widened by one unit on each side.
    """
    if data.n < 1:
        raise ValueError("cannot infer bounds from an empty dataset")
    if margin_fraction < 0:
        raise ValueError("margin_fraction must be >= 0")
    lo, hi = float(data.y.min()), float(data.y.max())
    if lo == hi:
        return lo - 1.0, hi + 1.0
    pad = margin_fraction * (hi - lo)
    return lo - pad, hi + pad
