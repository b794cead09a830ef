"""CSV datasets and model JSON files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from .metrics import SparsePce
from .rvm import result_from_dict

__all__ = ["DataError", "Dataset", "read_dataset", "read_inputs", "write_dataset", "format_float", "load_model", "dump_json", "write_text"]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True, eq=False)
class Dataset:
    Xi: np.ndarray
    y: np.ndarray
    source: str = ""
    sha256: str = ""

    @property
    def N(self) -> int:
        return self.Xi.shape[0]

    @property
    def K(self) -> int:
        return self.Xi.shape[1]

    def provenance(self) -> dict:
        return {"source": self.source, "sha256": self.sha256, "N": self.N, "K": self.K}


def format_float(x: float) -> str:
    """Shortest text that parses back to the same double."""
    return repr(float(x))


def _read_text(path: str) -> str:
    try:
        if path == "-":
            return sys.stdin.read()
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _parse_table(text: str, source: str):
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{source}: no data rows")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    if not rows:
        raise DataError(f"{source}: no data rows")
    width = len(rows[0])
    if header is not None and len(header) != width:
        raise DataError(f"{source}: header has {len(header)} columns but rows have {width}")
    values = np.empty((len(rows), width))
    for n, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{source}: row {n + 1} has {len(row)} columns, expected {width}")
        try:
            values[n] = [float(c) for c in row]
        except ValueError as exc:
            raise DataError(f"{source}: row {n + 1}: {exc}") from exc
    bad = ~np.isfinite(values).all(axis=1)
    if bad.any():
        raise DataError(f"{source}: non-finite value in row {int(np.flatnonzero(bad)[0]) + 1}")
    return header, values


def read_dataset(path: str) -> Dataset:
    """Read ``xi_1, ..., xi_K, y`` rows; a header line is detected automatically."""
    text = _read_text(path)
    header, values = _parse_table(text, path)
    if values.shape[1] < 2:
        raise DataError(f"{path}: need at least one input column and an output column")
    if header is not None:
        expected = [f"xi_{k}" for k in range(1, values.shape[1])] + ["y"]
        if header != expected:
            raise DataError(f"{path}: unexpected header {header}; expected {','.join(expected)}")
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return Dataset(values[:, :-1].copy(), values[:, -1].copy(), path, digest)


def read_inputs(path: str, K: int | None = None) -> np.ndarray:
    """Read input points; a trailing ``y`` column is dropped when the header names it."""
    header, values = _parse_table(_read_text(path), path)
    if header is not None and header[-1] == "y":
        values = values[:, :-1]
    if K is not None and values.shape[1] != K:
        raise DataError(f"{path}: expected {K} input columns, got {values.shape[1]}")
    return values


def write_dataset(fh, Xi, y=None):
    Xi = np.asarray(Xi, dtype=float)
    K = Xi.shape[1]
    cols = [f"xi_{k}" for k in range(1, K + 1)] + (["y"] if y is not None else [])
    fh.write(",".join(cols) + "\n")
    for n in range(Xi.shape[0]):
        vals = [format_float(v) for v in Xi[n]]
        if y is not None:
            vals.append(format_float(y[n]))
        fh.write(",".join(vals) + "\n")


def load_model(path_or_dict) -> SparsePce:
    """Expansion from a model JSON written by either fitting method."""
    if isinstance(path_or_dict, dict):
        d = path_or_dict
    else:
        try:
            d = json.loads(_read_text(path_or_dict))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path_or_dict}: invalid JSON: {exc}") from exc
    try:
        if "coefficients" in d:
            return result_from_dict(d).pce
        return SparsePce.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"not a model file: {exc}") from exc


def dump_json(obj, path: str, indent=None):
    text = json.dumps(obj, indent=indent, allow_nan=False) + "\n"
    write_text(text, path)


def write_text(text: str, path: str):
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise DataError(f"cannot write {path}: no such directory")
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
