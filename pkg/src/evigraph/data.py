"""Tabular datasets: typed columns, CSV round-trip, content addressing.

A dataset is the d of an evidence tuple.  Columns carry a declared kind so
that method preconditions (binary treatment, count response, trials bound)
are checkable before any fit runs.  Identity is the content digest of the
canonical CSV bytes, so byte-identical data deduplicates no matter where
the file came from.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

COLUMN_KINDS = ("continuous", "count", "binary", "ordinal", "group")


@dataclass
class DatasetTable:
    """Column-major table. Group columns hold labels, the rest numbers."""

    columns: tuple[str, ...]
    kinds: dict[str, str]
    data: dict[str, list]
    trials: dict[str, str] = field(default_factory=dict)  # response -> trials col
    name: str = ""

    def __post_init__(self):
        self.columns = tuple(self.columns)
        if len(set(self.columns)) != len(self.columns):
            raise DataError("duplicate column names")
        if set(self.kinds) != set(self.columns):
            raise DataError("column kinds must cover exactly the declared columns")
        for col, kind in self.kinds.items():
            if kind not in COLUMN_KINDS:
                raise DataError(f"column {col}: unknown kind {kind!r}")
        lengths = {len(self.data[c]) for c in self.columns}
        if len(lengths) > 1:
            raise DataError("ragged columns: " + str(sorted(lengths)))
        for resp, tri in self.trials.items():
            if resp not in self.kinds or tri not in self.kinds:
                raise DataError(f"trials declaration {resp} <= {tri}: unknown column")

    @property
    def n_rows(self):
        return len(self.data[self.columns[0]]) if self.columns else 0

    def column(self, name):
        """Numeric column as a float array."""
        if name not in self.kinds:
            raise DataError(f"no column named {name!r}")
        if self.kinds[name] == "group":
            raise DataError(f"column {name} is a grouping column, not numeric")
        return np.asarray(self.data[name], dtype=float)

    def group_codes(self, name):
        """Integer codes plus the sorted level labels for a group column."""
        if name not in self.kinds:
            raise DataError(f"no column named {name!r}")
        values = [str(v) for v in self.data[name]]
        levels = sorted(set(values))
        index = {lvl: i for i, lvl in enumerate(levels)}
        return np.array([index[v] for v in values], dtype=int), levels

    def subset(self, keep_mask):
        keep_mask = np.asarray(keep_mask, dtype=bool)
        data = {c: [v for v, k in zip(self.data[c], keep_mask) if k]
                for c in self.columns}
        return DatasetTable(columns=self.columns, kinds=dict(self.kinds),
                            data=data, trials=dict(self.trials), name=self.name)

    def drop_row(self, i):
        mask = np.ones(self.n_rows, dtype=bool)
        mask[i] = False
        return self.subset(mask)


def _format_cell(value, kind):
    if kind == "group":
        return str(value)
    f = float(value)
    if math.isfinite(f) and f == int(f) and kind in ("count", "binary", "ordinal"):
        return str(int(f))
    return repr(f)


def to_csv_bytes(table):
    """Canonical CSV: declared column order, \\n endings, shortest float repr."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for i in range(table.n_rows):
        writer.writerow(
            _format_cell(table.data[c][i], table.kinds[c]) for c in table.columns
        )
    return buf.getvalue().encode("utf-8")


def content_digest(csv_bytes):
    return hashlib.sha256(csv_bytes).hexdigest()


def dataset_id_for(csv_bytes):
    return "d-" + content_digest(csv_bytes)[:12]


def metadata_dict(table):
    return {
        "name": table.name,
        "columns": {c: table.kinds[c] for c in table.columns},
        "trials": dict(table.trials),
    }


def read_metadata(path):
    with open(path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if "columns" not in meta or not isinstance(meta["columns"], dict):
        raise DataError(f"{path}: metadata must declare a columns mapping")
    return meta


def read_csv(csv_path, metadata):
    """Parse a CSV file against sidecar metadata into a validated table."""
    kinds = metadata["columns"]
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{csv_path}: empty file")
    header = rows[0]
    if sorted(header) != sorted(kinds):
        missing = sorted(set(kinds) - set(header))
        extra = sorted(set(header) - set(kinds))
        raise DataError(
            f"{csv_path}: header does not match metadata "
            f"(missing {missing}, undeclared {extra})"
        )
    data = {c: [] for c in header}
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{csv_path}: row {r}: expected {len(header)} cells")
        for c, cell in zip(header, row):
            if kinds[c] == "group":
                data[c].append(cell)
            else:
                try:
                    data[c].append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{csv_path}: row {r}, column {c}: not numeric: {cell!r}"
                    )
    table = DatasetTable(
        columns=tuple(header),
        kinds=dict(kinds),
        data=data,
        trials=dict(metadata.get("trials", {})),
        name=metadata.get("name", ""),
    )
    validate_table(table)
    return table


def validate_table(table):
    """Enforce column-kind rules; report the first violation's coordinates.

    Rows are 1-indexed over data rows (header excluded) to match how people
    count rows in a CSV viewer.
    """
    for c in table.columns:
        kind = table.kinds[c]
        values = table.data[c]
        for i, v in enumerate(values, start=1):
            if kind == "group":
                if str(v).strip() == "":
                    raise DataError(f"row {i}, column {c}: empty group label")
                continue
            f = float(v)
            if not math.isfinite(f):
                raise DataError(f"row {i}, column {c}: non-finite value")
            if kind == "binary" and f not in (0.0, 1.0):
                raise DataError(f"row {i}, column {c}: binary columns are 0/1, got {v}")
            if kind in ("count", "ordinal") and (f != int(f) or f < 0):
                raise DataError(
                    f"row {i}, column {c}: {kind} columns are non-negative "
                    f"integers, got {v}"
                )
    for resp, tri in table.trials.items():
        resp_vals, tri_vals = table.data[resp], table.data[tri]
        for i, (rv, tv) in enumerate(zip(resp_vals, tri_vals), start=1):
            if float(rv) > float(tv):
                raise DataError(
                    f"row {i}, column {resp}: response {rv} exceeds trials "
                    f"{tv} in column {tri}"
                )
    return True


def concat_tables(tables, study_column="study", study_labels=None):
    """Stack tables rowwise, adding a group column recording the origin."""
    if not tables:
        raise DataError("nothing to concatenate")
    first = tables[0]
    for t in tables[1:]:
        if set(t.columns) != set(first.columns):
            raise DataError(
                "column mismatch: "
                f"{sorted(set(first.columns) ^ set(t.columns))}"
            )
        if t.kinds != first.kinds:
            raise DataError("column kind mismatch across datasets")
    if study_column in first.columns:
        raise DataError(f"column {study_column} already exists")
    labels = study_labels or [f"s{i}" for i in range(len(tables))]
    data = {c: [] for c in first.columns}
    data[study_column] = []
    for label, t in zip(labels, tables):
        for c in first.columns:
            data[c].extend(t.data[c])
        data[study_column].extend([label] * t.n_rows)
    kinds = dict(first.kinds)
    kinds[study_column] = "group"
    return DatasetTable(
        columns=first.columns + (study_column,),
        kinds=kinds,
        data=data,
        trials=dict(first.trials),
        name="pooled",
    )
