"""Embedded datasets and CSV ingestion.

Two small samples are embedded as literals; the regression tables ship as
CSV fixtures under ``ewdfit/data`` with pinned SHA-256 checksums.
"""
from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .regression import RegressionData

__all__ = [
    "DataError",
    "Dataset",
    "SHOSHONI",
    "DROSOPHILA",
    "FIXTURE_SHA256",
    "EMBEDDED",
    "load_dataset",
    "ingest_csv",
    "parse_csv_text",
    "write_csv",
    "count_table",
]

# width-to-length ratios of beaded rectangles in Shoshoni baskets
SHOSHONI = (0.693, 0.662, 0.690, 0.606, 0.570, 0.749, 0.672, 0.628, 0.609, 0.844,
            0.654, 0.615, 0.668, 0.601, 0.576, 0.670, 0.606, 0.611, 0.553, 0.933)
# Drosophila recessive lethal counts: 23 zeros, 7 ones, 3 twos and one 91
DROSOPHILA = (0,) * 23 + (1,) * 7 + (2,) * 3 + (91,)

FIXTURE_SHA256 = {
    "telephone.csv": "cd46d193df0a8afe7409d30e1b428c22f1a0647bd1f37185b73628ddf4a5f8ac",
    "stars.csv": "a1fa1da9e26df5bceeb3e134dbb3ea19247cb576d835a7802e2ca26d9645dd02",
    "alcohol.csv": "bac6f284498c7f4b4348de3dab59170bced97c04a687fac961df573b202ea094",
}

KINDS = ("sample", "counts", "regression")


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass
class Dataset:
    """A named dataset.

    ``kind`` is ``"sample"`` (univariate), ``"counts"`` (non-negative
    integers) or ``"regression"`` (a numeric table with a designated
    ``response`` column). ``values`` is 1-D for the first two kinds and
    ``rows x columns`` for regression tables.
    """

    name: str
    kind: str
    values: np.ndarray
    columns: tuple = ()
    provenance: str = ""
    response: str | None = None
    predictors: tuple = ()
    labels: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown dataset kind {self.kind!r}; expected one of {KINDS}")
        self.values = np.asarray(self.values, dtype=float)
        if self.kind == "regression":
            if self.values.ndim != 2:
                raise DataError("regression data must be a 2-D table")
            if self.response not in self.columns:
                raise DataError(f"response column {self.response!r} not among {list(self.columns)}")
            if not self.predictors:
                self.predictors = tuple(c for c in self.columns if c != self.response)
        elif self.values.ndim != 1:
            raise DataError(f"{self.kind} data must be one-dimensional")
        if self.kind == "counts":
            v = self.values
            if np.any(v < 0) or np.any(v != np.round(v)):
                raise DataError("count data must be non-negative integers")

    @property
    def n(self):
        return self.values.shape[0]

    def column(self, name):
        return self.values[:, self.columns.index(name)]

    def regression(self, intercept=True):
        """:class:`RegressionData` for ``response ~ predictors``."""
        if self.kind != "regression":
            raise DataError(f"dataset {self.name!r} is not a regression table")
        P = np.column_stack([self.column(c) for c in self.predictors])
        return RegressionData.from_columns(P, self.column(self.response), intercept, self.predictors)

    def report(self):
        """One-line summary of rows and columns."""
        if self.kind == "regression":
            cols = ", ".join(self.predictors)
            return f"{self.name}: {self.n} rows; response {self.response}; predictors {cols}"
        return f"{self.name}: {self.n} {self.kind} values"


def count_table(values, top=5):
    """Observed frequencies of ``0, ..., top-1`` and of ``>= top``."""
    v = np.asarray(values)
    return np.array([np.sum(v == k) for k in range(top)] + [np.sum(v >= top)], dtype=float)


def _fixture_text(filename):
    raw = resources.files("ewdfit").joinpath("data", filename).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != FIXTURE_SHA256[filename]:
        raise DataError(f"fixture {filename} checksum mismatch: {digest}")
    return raw.decode("utf-8")


_REGRESSION_FIXTURES = {
    "telephone": ("telephone.csv", "calls", ("year",),
                  "Belgian international calls (tens of millions), years 1950-1973; "
                  "robustbase 'telef' via Rdatasets"),
    "stars": ("stars.csv", "log_light", ("log_temperature",),
              "Hertzsprung-Russell diagram of star cluster CYG OB1 (47 stars); "
              "robustbase 'starsCYG' via Rdatasets"),
    "alcohol": ("alcohol.csv", "logSolubility", ("SAG", "V", "Mass"),
                "Aqueous solubility of 44 aliphatic alcohols; robustbase 'alcohol' via "
                "Rdatasets; the regression uses SAG, volume and mass"),
}

EMBEDDED = ("shoshoni", "drosophila") + tuple(_REGRESSION_FIXTURES)


def load_dataset(name):
    """Load an embedded dataset by name (see ``EMBEDDED``)."""
    key = name.lower()
    if key == "shoshoni":
        return Dataset("shoshoni", "sample", np.array(SHOSHONI), ("ratio",),
                       "Width-to-length ratios of 20 Shoshoni beaded rectangles")
    if key == "drosophila":
        return Dataset("drosophila", "counts", np.array(DROSOPHILA, dtype=float), ("count",),
                       "Recessive lethal counts in 34 Drosophila daughters")
    if key in _REGRESSION_FIXTURES:
        filename, response, predictors, note = _REGRESSION_FIXTURES[key]
        ds = parse_csv_text(_fixture_text(filename), "regression", response, name=key)
        ds.predictors = predictors
        ds.provenance = note
        return ds
    raise DataError(f"unknown dataset {name!r}; embedded datasets are {', '.join(EMBEDDED)}")


def _number(text):
    try:
        v = float(text)
    except ValueError:
        return None
    return v


def parse_csv_text(text, kind="sample", response=None, column=None, name="data"):
    """Parse CSV text with a header row into a :class:`Dataset`.

    Columns whose every cell is non-numeric (for instance country names)
    are kept as labels; any other non-numeric or empty cell is an error
    naming its data row (1-based, header excluded) and column.
    """
    if kind not in KINDS:
        raise DataError(f"unknown dataset kind {kind!r}; expected one of {KINDS}")
    rows = [r for r in csv.reader(io.StringIO(text)) if any(c.strip() for c in r)]
    if not rows:
        raise DataError("file is empty: no header row")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataError("file has a header but no data rows")
    if len(set(header)) != len(header) or not all(header):
        raise DataError("header names must be nonempty and unique")
    for i, r in enumerate(body, start=1):
        if len(r) != len(header):
            raise DataError(f"row {i} has {len(r)} fields, expected {len(header)}")

    parsed = [[_number(c.strip()) for c in r] for r in body]
    numeric, labels = [], {}
    for j, h in enumerate(header):
        col = [p[j] for p in parsed]
        if all(v is None for v in col) and kind == "regression":
            labels[h] = [r[j].strip() for r in body]
            continue
        for i, v in enumerate(col, start=1):
            if v is None:
                raise DataError(f"non-numeric value {body[i - 1][j]!r} at row {i}, column {j + 1} ({h!r})")
            if not np.isfinite(v):
                raise DataError(f"non-finite value at row {i}, column {j + 1} ({h!r})")
        numeric.append(h)
    table = np.array([[p[header.index(h)] for h in numeric] for p in parsed], dtype=float)

    if kind == "regression":
        if response is None:
            raise DataError("regression data need a designated response column")
        if response not in numeric:
            raise DataError(f"response column {response!r} not found among numeric columns {numeric}")
        return Dataset(name, kind, table, tuple(numeric), response=response, labels=labels)
    if column is None:
        if len(numeric) != 1:
            raise DataError(f"choose one of the columns {numeric} for a {kind} dataset")
        column = numeric[0]
    if column not in numeric:
        raise DataError(f"column {column!r} not found among {numeric}")
    return Dataset(name, kind, table[:, numeric.index(column)], (column,))


def ingest_csv(path, kind="sample", response=None, column=None):
    """Read a CSV file into a :class:`Dataset` (see :func:`parse_csv_text`)."""
    p = Path(path)
    if not p.is_file():
        raise DataError(f"file not found: {p}")
    return parse_csv_text(p.read_text(encoding="utf-8"), kind, response, column, name=p.stem)


def write_csv(path, columns, header):
    """Write equal-length columns with full float precision."""
    cols = [np.asarray(c) for c in columns]
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return p
