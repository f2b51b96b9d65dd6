"""Dense complex arrays on disk and builtin inputs.

Arrays are stored as CSV with one row per entry: the integer index of
every axis followed by the real and imaginary parts, row-major order, and
a header naming each index coordinate. Functions on a grid use one index
per grid axis; symbols add ``dual``, ``row`` and ``col``.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .dual import DualModel
from .grids import GroupGrid, SampledFunction
from .testfunctions import TestFunctionError, sample


class DimensionError(ValueError):
    """Raised when a stored array does not fit the configured grids."""


class InputError(ValueError):
    """Raised for unreadable inputs or unknown builtins."""


def write_array(target, values: np.ndarray, names) -> None:
    """Write a complex array with named index columns to a path or a text stream."""
    values = np.asarray(values, dtype=complex)
    names = list(names)
    if len(names) != values.ndim:
        raise DimensionError("one name per array axis is required")
    if hasattr(target, "write"):
        _write_rows(target, values, names)
        return
    with open(target, "w", encoding="utf-8", newline="") as fh:
        _write_rows(fh, values, names)


def _write_rows(fh, values: np.ndarray, names: list) -> None:
    idx = np.stack(np.unravel_index(np.arange(values.size), values.shape), axis=-1)
    flat = values.ravel()
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(names + ["re", "im"])
    for k in range(flat.size):
        writer.writerow([*map(str, idx[k]), repr(float(flat[k].real)), repr(float(flat[k].imag))])


def read_array(path, shape, names=None) -> np.ndarray:
    """Read a complex array written by :func:`write_array` and check it against ``shape``."""
    shape = tuple(int(s) for s in shape)
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows:
        raise DimensionError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if header[-2:] != ["re", "im"] or len(header) != len(shape) + 2:
        raise DimensionError(f"{path}: expected {len(shape)} index columns followed by re,im")
    if names is not None and header[:-2] != list(names):
        raise DimensionError(f"{path}: index columns {header[:-2]} do not match {list(names)}")
    size = int(np.prod(shape))
    if len(body) != size:
        raise DimensionError(f"{path}: expected {size} rows, found {len(body)}")
    out = np.zeros(shape, dtype=complex)
    try:
        for line, row in enumerate(body, start=2):
            if len(row) != len(header):
                raise DimensionError(f"{path}, line {line}: wrong number of columns")
            idx = tuple(int(v) for v in row[:-2])
            if any(i < 0 or i >= n for i, n in zip(idx, shape)):
                raise DimensionError(f"{path}, line {line}: index out of range")
            out[idx] = complex(float(row[-2]), float(row[-1]))
    except ValueError as exc:
        if isinstance(exc, DimensionError):
            raise
        raise InputError(f"{path}: {exc}") from exc
    return out


def axis_names(grid: GroupGrid) -> list:
    return [f"i{k}" for k in range(len(grid.axes))]


def write_function(path, f: SampledFunction) -> None:
    write_array(path, f.values.reshape(f.grid.shape), axis_names(f.grid))


def read_function(path, grid: GroupGrid) -> SampledFunction:
    return SampledFunction(grid, read_array(path, grid.shape, axis_names(grid)).ravel())


def symbol_names(grid: GroupGrid) -> list:
    return axis_names(grid) + ["dual", "row", "col"]


def write_symbol(path, values: np.ndarray, model: DualModel) -> None:
    """Write a full symbol array of shape (N, n_dual, M, M)."""
    shape = model.grid.shape + (model.n_dual, model.M, model.M)
    write_array(path, np.asarray(values).reshape(shape), symbol_names(model.grid))


def read_symbol(path, model: DualModel) -> np.ndarray:
    shape = model.grid.shape + (model.n_dual, model.M, model.M)
    vals = read_array(path, shape, symbol_names(model.grid))
    return vals.reshape(model.grid.size, model.n_dual, model.M, model.M)


def parse_builtin(text: str) -> dict:
    """Parse a builtin description given as inline JSON."""
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"builtin description is not valid JSON: {exc.msg}") from exc
    if not isinstance(spec, dict):
        raise InputError("builtin description must be a JSON object")
    return spec


def load_function(source: str, grid: GroupGrid) -> SampledFunction:
    """Function from a CSV path or an inline JSON builtin such as ``{"kind": "gaussian"}``."""
    if source.lstrip().startswith("{"):
        try:
            return sample(grid, parse_builtin(source))
        except TestFunctionError as exc:
            raise InputError(str(exc)) from exc
    return read_function(source, grid)
