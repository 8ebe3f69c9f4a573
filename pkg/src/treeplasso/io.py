"""CSV/JSON ingestion and artifact writers.

Floats are written with ``repr`` so that a written value reads back as the
identical double.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import CoefficientSet, DesignData, Standardizer
from .tree import ResponseTree


class IngestError(ValueError):
    """Malformed input file; the message carries file, line and column."""

    def __init__(self, path, message: str, line: int | None = None, column: int | None = None):
        where = str(path)
        if line is not None:
            where += f", line {line}"
        if column is not None:
            where += f", column {column}"
        super().__init__(f"{where}: {message}")
        self.path, self.line, self.column = str(path), line, column


def read_matrix(path) -> tuple[list[str], np.ndarray]:
    """Read a header-first numeric CSV into (column names, N x c array)."""
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestError(path, f"cannot open ({exc.strerror})") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(path, "empty file, a header row is required", 1) from None
        except (csv.Error, UnicodeDecodeError) as exc:
            raise IngestError(path, f"unreadable header ({exc})", 1) from None
        header = [h.strip() for h in header]
        if not header or any(not h for h in header):
            raise IngestError(path, "header has an empty column name", 1)
        rows = []
        try:
            for row in reader:
                line = reader.line_num
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue  # blank line
                if len(row) != len(header):
                    raise IngestError(path, f"expected {len(header)} fields, found {len(row)}", line)
                vals = []
                for c, cell in enumerate(row, start=1):
                    try:
                        v = float(cell)
                    except ValueError:
                        raise IngestError(path, f"non-numeric value {cell!r}", line, c) from None
                    if not math.isfinite(v):
                        raise IngestError(path, f"non-finite value {cell!r}", line, c)
                    vals.append(v)
                rows.append(vals)
        except (csv.Error, UnicodeDecodeError) as exc:
            raise IngestError(path, f"malformed CSV ({exc})", reader.line_num) from None
    if not rows:
        raise IngestError(path, "no data rows")
    return header, np.array(rows, dtype=np.float64)


def write_matrix(path, header, M) -> None:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[:, None]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in M:
            w.writerow([repr(float(v)) for v in row])


def default_names(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(n)]


@dataclass
class Dataset:
    data: DesignData  # raw scale
    x_names: list[str]
    z_names: list[str]
    y_names: list[str]

    @property
    def scaler(self) -> Standardizer:
        return Standardizer.fit(self.data)

    def standardized(self) -> DesignData:
        return self.scaler.transform(self.data)


def ingest(x_path, z_path, y_path=None) -> Dataset:
    """Load row-aligned X, Z and (optionally) Y CSVs.

    Without ``y_path`` a zero-column placeholder response is not allowed by
    DesignData, so a single zero response is used (prediction mode).
    """
    xn, X = read_matrix(x_path)
    zn, Z = read_matrix(z_path)
    if X.shape[0] != Z.shape[0]:
        raise IngestError(z_path, f"has {Z.shape[0]} data rows but {x_path} has {X.shape[0]}")
    if y_path is not None:
        yn, Y = read_matrix(y_path)
        if Y.shape[0] != X.shape[0]:
            raise IngestError(y_path, f"has {Y.shape[0]} data rows but {x_path} has {X.shape[0]}")
    else:
        yn, Y = ["y1"], np.zeros((X.shape[0], 1))
    return Dataset(DesignData(X, Z, Y), xn, zn, yn)


def write_dataset(directory, ds: Dataset) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "X.csv", ds.x_names, ds.data.X)
    write_matrix(d / "Z.csv", ds.z_names, ds.data.Z)
    write_matrix(d / "Y.csv", ds.y_names, ds.data.Y)


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def coef_to_dict(coef: CoefficientSet, x_names, z_names, y_names, **meta) -> dict:
    """JSON document for a coefficient set (arrays as nested lists, B indexed [j][k][d])."""
    doc = {
        "beta0": coef.beta0.tolist(),
        "theta0": coef.theta0.tolist(),
        "B": coef.B.tolist(),
        "x_names": list(x_names),
        "z_names": list(z_names),
        "y_names": list(y_names),
        "shape": {"p": coef.p, "K": coef.K, "D": coef.D},
    }
    doc.update(meta)
    return doc


def coef_from_dict(doc: dict) -> CoefficientSet:
    try:
        coef = CoefficientSet(doc["beta0"], doc["theta0"], doc["B"])
    except KeyError as exc:
        raise ValueError(f"coefficient document lacks field {exc.args[0]!r}") from None
    shape = doc.get("shape")
    if shape and (shape["p"], shape["K"], shape["D"]) != (coef.p, coef.K, coef.D):
        raise ValueError("coefficient document shape metadata disagrees with its arrays")
    return coef


def read_coefficients(path) -> tuple[CoefficientSet, dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IngestError(path, f"cannot open ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise IngestError(path, f"invalid JSON ({exc.msg})", exc.lineno, exc.colno) from None
    return coef_from_dict(doc), doc


def write_interactions(path, coef: CoefficientSet, x_names, z_names, y_names, dense: bool = False) -> int:
    """Long-format θ table (j, k, d, names, value); non-zeros only unless ``dense``."""
    th = coef.theta
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "k", "d", "x", "z", "y", "theta"])
        for j in range(coef.p):
            for k in range(coef.K):
                for d in range(coef.D):
                    v = th[j, k, d]
                    if dense or v != 0:
                        w.writerow([j + 1, k + 1, d + 1, x_names[j], z_names[k], y_names[d], repr(float(v))])
                        n += 1
    return n


def write_table(path, header, rows) -> None:
    """CSV of heterogeneous rows; floats through repr."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_tree(path) -> ResponseTree:
    try:
        return ResponseTree.from_json(Path(path))
    except OSError as exc:
        raise IngestError(path, f"cannot open ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise IngestError(path, f"invalid JSON ({exc.msg})", exc.lineno, exc.colno) from None
