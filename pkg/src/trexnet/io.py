"""Readers and writers for the CSV/JSON artifacts the command line emits.

CSV files are comma-separated with '.' decimals; an optional header row is
detected by failing to parse as numbers.  Floats are written with repr so a
read-back reproduces the exact double.  JSON artifacts are pretty-printed
with sorted keys and carry a schema tag.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import InputError
from .grouping import GroupPartition

SELECTION_SCHEMA = "trexnet-selection-v1"
SUMMARY_SCHEMA = "trexnet-mc-summary-v1"

TRIAL_COLUMNS = ("base", "trial", "seed", "n_selected", "fdp", "tpp", "selected")
BENCH_COLUMNS = ("p", "selector", "mean_seconds", "ratio_vs_lasso")
PATH_COLUMNS = ("step", "event", "variable", "penalty", "coefficient")


def _fmt(value) -> str:
    return repr(float(value))


def _read_rows(path) -> list[list[str]]:
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise InputError(f"{path} is empty")
    return rows


def _is_numeric_row(row) -> bool:
    for cell in row:
        try:
            float(cell)
        except ValueError:
            return False
    return True


def read_matrix_csv(path) -> tuple[np.ndarray, tuple[str, ...] | None]:
    """Numeric matrix with an optional header row of column names."""
    rows = _read_rows(path)
    names: tuple[str, ...] | None = None
    if not _is_numeric_row(rows[0]):
        names = tuple(cell.strip() for cell in rows[0])
        rows = rows[1:]
    if not rows:
        raise InputError(f"{path} has a header but no data rows")
    width = len(rows[0])
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise InputError(
                f"{path}: row {i + 1} has {len(row)} fields, expected {width}"
            )
        try:
            data[i] = [float(cell) for cell in row]
        except ValueError as exc:
            raise InputError(f"{path}: row {i + 1} is not numeric: {exc}") from exc
    if names is not None and len(names) != width:
        raise InputError(f"{path}: header has {len(names)} names for {width} columns")
    return data, names


def read_vector_csv(path) -> np.ndarray:
    """Single-column numeric CSV, optional header cell."""
    data, _ = read_matrix_csv(path)
    if data.shape[1] != 1:
        raise InputError(f"{path}: expected a single column, found {data.shape[1]}")
    return data[:, 0]


def write_matrix_csv(path, X, names=None) -> None:
    X = np.asarray(X, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if names is not None:
            if len(names) != X.shape[1]:
                raise InputError("names length must match the column count")
            writer.writerow(list(names))
        for row in X:
            writer.writerow([_fmt(v) for v in row])


def write_vector_csv(path, y, name=None) -> None:
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    write_matrix_csv(path, y, names=None if name is None else (name,))


def _write_json(path, payload) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _read_json(path, schema=None) -> dict:
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise InputError(f"{path}: expected a JSON object")
    if schema is not None and payload.get("schema") != schema:
        raise InputError(
            f"{path}: schema {payload.get('schema')!r} does not match {schema!r}"
        )
    return payload


def write_selection_json(path, payload) -> None:
    if payload.get("schema") != SELECTION_SCHEMA:
        raise InputError("selection payload is missing its schema tag")
    _write_json(path, payload)


def read_selection_json(path) -> dict:
    return _read_json(path, schema=SELECTION_SCHEMA)


def write_occurrences_csv(path, values, names) -> None:
    """Relative occurrences of every variable at the calibrated dummy budget."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or len(names) != values.size:
        raise InputError("occurrence values and names must align")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["variable", "name", "occurrence"])
        for j, (name, value) in enumerate(zip(names, values)):
            writer.writerow([j, name, _fmt(value)])


def read_occurrences_csv(path) -> tuple[np.ndarray, tuple[str, ...]]:
    rows = _read_rows(path)
    if rows[0] != ["variable", "name", "occurrence"]:
        raise InputError(f"{path}: unexpected occurrence header {rows[0]}")
    names = []
    values = []
    for i, row in enumerate(rows[1:]):
        if len(row) != 3 or int(row[0]) != i:
            raise InputError(f"{path}: malformed occurrence row {i + 1}")
        names.append(row[1])
        values.append(float(row[2]))
    return np.array(values), tuple(names)


def trial_rows(base, summary, include_timings=False) -> list[dict]:
    """Flatten one Monte-Carlo summary into trials.csv rows."""
    rows = []
    for outcome in summary.outcomes:
        row = {
            "base": base,
            "trial": outcome.trial,
            "seed": outcome.seed,
            "n_selected": outcome.n_selected,
            "fdp": outcome.fdp,
            "tpp": outcome.tpp,
            "selected": "|".join(str(j) for j in outcome.selected),
        }
        if include_timings:
            row["select_s"] = outcome.timings.get("select_s", 0.0)
        rows.append(row)
    return rows


def write_trials_csv(path, rows, include_timings=False) -> None:
    columns = TRIAL_COLUMNS + (("select_s",) if include_timings else ())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(columns))
        for row in rows:
            out = [row["base"], row["trial"], row["seed"], row["n_selected"],
                   _fmt(row["fdp"]), _fmt(row["tpp"]), row["selected"]]
            if include_timings:
                out.append(_fmt(row.get("select_s", 0.0)))
            writer.writerow(out)


def read_trials_csv(path) -> list[dict]:
    rows = _read_rows(path)
    header = tuple(rows[0])
    if header[:len(TRIAL_COLUMNS)] != TRIAL_COLUMNS:
        raise InputError(f"{path}: unexpected trials header {rows[0]}")
    out = []
    for row in rows[1:]:
        if len(row) != len(header):
            raise InputError(f"{path}: malformed trials row {row}")
        record = {
            "base": row[0],
            "trial": int(row[1]),
            "seed": int(row[2]),
            "n_selected": int(row[3]),
            "fdp": float(row[4]),
            "tpp": float(row[5]),
            "selected": tuple(int(j) for j in row[6].split("|") if j),
        }
        if "select_s" in header:
            record["select_s"] = float(row[header.index("select_s")])
        out.append(record)
    return out


def write_summary_json(path, payload) -> None:
    if payload.get("schema") != SUMMARY_SCHEMA:
        raise InputError("summary payload is missing its schema tag")
    _write_json(path, payload)


def read_summary_json(path) -> dict:
    return _read_json(path, schema=SUMMARY_SCHEMA)


def write_bench_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(BENCH_COLUMNS))
        for row in rows:
            writer.writerow([row["p"], row["selector"],
                             _fmt(row["mean_seconds"]), _fmt(row["ratio_vs_lasso"])])


def read_bench_csv(path) -> list[dict]:
    rows = _read_rows(path)
    if tuple(rows[0]) != BENCH_COLUMNS:
        raise InputError(f"{path}: unexpected bench header {rows[0]}")
    out = []
    for row in rows[1:]:
        if len(row) != 4:
            raise InputError(f"{path}: malformed bench row {row}")
        out.append({
            "p": int(row[0]),
            "selector": row[1],
            "mean_seconds": float(row[2]),
            "ratio_vs_lasso": float(row[3]),
        })
    return out


def read_path_csv(path) -> list[dict]:
    rows = _read_rows(path)
    if tuple(rows[0]) != PATH_COLUMNS:
        raise InputError(f"{path}: unexpected path header {rows[0]}")
    out = []
    for row in rows[1:]:
        if len(row) != 5:
            raise InputError(f"{path}: malformed path row {row}")
        out.append({
            "step": int(row[0]),
            "event": row[1],
            "variable": int(row[2]),
            "penalty": float(row[3]),
            "coefficient": float(row[4]),
        })
    return out


def write_groups_json(path, partition: GroupPartition, names=None) -> None:
    with open(path, "w") as fh:
        fh.write(partition.to_json(names))


def read_groups_json(path) -> GroupPartition:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return GroupPartition.from_json(text)
