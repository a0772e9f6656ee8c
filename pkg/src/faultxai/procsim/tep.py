"""Reader for Tennessee Eastman Process CSV exports.

Accepted layout: comma-separated, optional header row, one row per sample.
Columns are mapped by position to ``xmeas_1..xmeas_41, xmv_1..xmv_11`` (52)
or additionally ``xmv_12`` (53), optionally followed by one integer label
column holding the active disturbance number (0 = normal) for that row.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import CSVParseError, MissingArtifactError, SchemaError
from .dataset import NORMAL, Dataset, Run, standardization_stats

XMEAS = tuple(f"xmeas_{i}" for i in range(1, 42))
XMV_11 = tuple(f"xmv_{i}" for i in range(1, 12))
TEP_SCHEMAS = {52: XMEAS + XMV_11, 53: XMEAS + XMV_11 + ("xmv_12",)}


def tep_channels(schema: int = 52) -> tuple[str, ...]:
    if schema not in TEP_SCHEMAS:
        raise SchemaError(f"schema option must be 52 or 53, got {schema}")
    return TEP_SCHEMAS[schema]


def idv_label(n: int) -> str:
    return NORMAL if n == 0 else f"IDV{n}"


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _schema_message(schema: int, got: int) -> str:
    return (
        f"expected {schema} columns (schema {schema}: "
        f"{'xmeas_1..41 + xmv_1..11' if schema == 52 else 'xmeas_1..41 + xmv_1..12'}) "
        f"or {schema + 1} with a trailing integer label column; got {got}. "
        "Accepted schemas: 52 (xmeas_1..41, xmv_1..11) and 53 (adds xmv_12)."
    )


def read_tep_csv(path, schema: int = 52) -> tuple[np.ndarray, np.ndarray | None]:
    """Parse the file into ``(data [T, schema], labels [T] or None)``.

    Errors report 1-based file row and column numbers.
    """
    channels = tep_channels(schema)
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise SchemaError(f"{path}: file is empty")
    first = 0
    if not any(_is_number(c) for c in rows[0]):
        first = 1  # header
    body = rows[first:]
    if not body:
        raise SchemaError(f"{path}: no data rows")
    ncols = len(body[0])
    if ncols not in (len(channels), len(channels) + 1):
        raise SchemaError(f"{path}: {_schema_message(schema, ncols)}")
    out = np.empty((len(body), ncols))
    for i, row in enumerate(body):
        lineno = i + first + 1
        if len(row) != ncols:
            raise SchemaError(f"{path}: row {lineno} has {len(row)} columns, expected {ncols}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise CSVParseError(lineno, j + 1, cell, path) from None
            if not np.isfinite(v):
                raise CSVParseError(lineno, j + 1, cell, path)
            out[i, j] = v
    if ncols == len(channels):
        return out, None
    labels = out[:, -1]
    if not np.all(labels == np.round(labels)):
        raise SchemaError(f"{path}: label column must hold integers")
    return out[:, :-1].copy(), labels.astype(np.int64)


def _run_from_file(path, schema, label, onset) -> Run:
    data, row_labels = read_tep_csv(path, schema)
    if label is None and row_labels is not None:
        faults = np.unique(row_labels[row_labels != 0])
        if len(faults) > 1:
            raise SchemaError(f"{path}: label column mixes several faults {faults.tolist()}")
        if len(faults) == 1:
            label = idv_label(int(faults[0]))
            if onset is None:
                onset = int(np.flatnonzero(row_labels != 0)[0])
    if label is None:
        label = NORMAL
    elif isinstance(label, (int, np.integer)):
        label = idv_label(int(label))
    if label != NORMAL and onset is None:
        onset = 0
    return Run(data, label, onset if label != NORMAL else None)


def ingest_tep_csv(path, schema: int = 52, label=None, onset: int | None = None) -> Dataset:
    """Load one TEP CSV as a single-run :class:`Dataset` (units untouched, then standardized)."""
    return ingest_tep_files([(path, label, onset)], schema)


def ingest_tep_files(sources: Iterable[Sequence], schema: int = 52) -> Dataset:
    """Load several ``(path, label, onset)`` sources into one dataset."""
    runs = []
    for src in sources:
        path, label, onset = (list(src) + [None, None])[:3]
        if not Path(path).is_file():
            raise MissingArtifactError(path, "ingest")
        runs.append(_run_from_file(path, schema, label, onset))
    labels = [NORMAL]
    for r in runs:
        if r.label not in labels:
            labels.append(r.label)
    mean, std = standardization_stats(runs)
    return Dataset(tep_channels(schema), runs, labels, mean, std)
