"""
Reading and writing data matrices, label files and experiment results.

Two matrix formats are supported, both one sample per column:

csv
    One feature per line, comma separated. A first line starting with '#'
    and mentioning 'labels' marks the last line as integer labels
    (-1 for unlabeled samples).

rawf64
    A 16-byte little-endian header (magic b'RONM', u32 d, u32 n, u32 c with
    0 meaning "infer"), then d * n float64 values in column-major order, then
    optionally n int32 labels.
"""

import csv
import json
import logging
import math
import struct
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .errors import ContractViolation, DataError
from .models import METRIC_NAMES, DataMatrix, ResultsRecord, UNLABELED, mean_std

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MAGIC = b'RONM'
HEADER = struct.Struct('<4sIII')
FORMATS = ('csv', 'rawf64')
RESULT_FORMATS = ('json', 'csv')
RESULT_COLUMNS = ('method', 'repetition', 'acc', 'f1', 'nmi', 'pur', 'iters', 'feasibility', 'seconds')


def infer_format(path: PathLike) -> str:
    """csv for .csv files, rawf64 for anything else."""
    return 'csv' if Path(path).suffix.lower() == '.csv' else 'rawf64'


def _check_format(fmt: str, allowed) -> str:
    if fmt not in allowed:
        raise ContractViolation(f"unknown format {fmt!r}; expected one of {', '.join(allowed)}")
    return fmt


def load_matrix(path: PathLike, fmt: Optional[str] = None) -> DataMatrix:
    """
    Read a data matrix.

    Raises:
        DataError: When the file is missing or malformed, or holds NaN or
            negative entries; the message names the line/column or byte offset
    """
    path = Path(path)
    fmt = _check_format(fmt or infer_format(path), FORMATS)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    data = _load_csv(path) if fmt == 'csv' else _load_rawf64(path)
    logger.info("loaded %s: d=%d, n=%d, labels=%s", path, data.d, data.n, data.has_labels)
    return data


def _parse_cell(text: str, line: int, column: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"not a number: {text.strip()!r}", position=f"line {line}, column {column}") from None
    if math.isnan(value) or math.isinf(value):
        raise DataError(f"non-finite entry {text.strip()!r}", position=f"line {line}, column {column}")
    if value < 0:
        raise DataError(f"negative entry {value!r}", position=f"line {line}, column {column}")
    return value


def _load_csv(path: Path) -> DataMatrix:
    rows: List[List[float]] = []
    labels = None
    has_labels = False
    width = None

    with open(path, newline='') as handle:
        lines = list(enumerate(csv.reader(handle), start=1))
    lines = [(number, cells) for number, cells in lines if cells and any(cell.strip() for cell in cells)]
    if lines and lines[0][1][0].lstrip().startswith('#'):
        has_labels = 'labels' in ','.join(lines[0][1]).lower()
        lines = lines[1:]
    if not lines:
        raise DataError("no data rows", position=f"file {path}")

    if has_labels:
        (label_line, label_cells), lines = lines[-1], lines[:-1]
        labels = []
        for column, cell in enumerate(label_cells, start=1):
            try:
                label = int(cell)
            except ValueError:
                raise DataError(f"not an integer label: {cell.strip()!r}",
                                position=f"line {label_line}, column {column}") from None
            if label < UNLABELED:
                raise DataError(f"invalid label {label}", position=f"line {label_line}, column {column}")
            labels.append(label)
        width = len(labels)

    for number, cells in lines:
        if width is None:
            width = len(cells)
        if len(cells) != width:
            raise DataError(f"expected {width} columns, found {len(cells)}", position=f"line {number}")
        rows.append([_parse_cell(cell, number, column) for column, cell in enumerate(cells, start=1)])

    if not rows:
        raise DataError("no feature rows", position=f"file {path}")
    return DataMatrix(values=np.array(rows), labels=labels)


def _load_rawf64(path: Path) -> DataMatrix:
    buffer = path.read_bytes()
    if len(buffer) < HEADER.size:
        raise DataError(f"truncated header: {len(buffer)} bytes", position=f"byte {len(buffer)}")
    magic, d, n, c = HEADER.unpack_from(buffer, 0)
    if magic != MAGIC:
        raise DataError(f"bad magic {magic!r}", position="byte 0")

    payload = 8 * d * n
    rest = len(buffer) - HEADER.size - payload
    if rest < 0:
        raise DataError(f"truncated values: need {payload} bytes", position=f"byte {len(buffer)}")
    if rest not in (0, 4 * n):
        raise DataError(f"unexpected {rest} trailing bytes", position=f"byte {HEADER.size + payload}")

    values = np.frombuffer(buffer, dtype='<f8', count=d * n, offset=HEADER.size).reshape((d, n), order='F')
    for test, what in ((lambda v: ~np.isfinite(v), "non-finite"), (lambda v: v < 0, "negative")):
        bad = np.argwhere(test(values))
        if bad.size:
            i, j = (int(k) for k in bad[np.lexsort((bad[:, 0], bad[:, 1]))][0])
            offset = HEADER.size + 8 * (j * d + i)
            raise DataError(f"{what} entry at cell ({i}, {j})", position=f"byte {offset}")

    labels = None
    if rest:
        labels = np.frombuffer(buffer, dtype='<i4', count=n, offset=HEADER.size + payload)
        bad = np.flatnonzero(labels < UNLABELED)
        if bad.size:
            offset = HEADER.size + payload + 4 * int(bad[0])
            raise DataError(f"invalid label {int(labels[bad[0]])}", position=f"byte {offset}")
    return DataMatrix(values=values, labels=labels, c=c or None)


def save_matrix(data: DataMatrix, path: PathLike, fmt: Optional[str] = None):
    """Write a data matrix in a format load_matrix reads back exactly."""
    path = Path(path)
    fmt = _check_format(fmt or infer_format(path), FORMATS)
    try:
        if fmt == 'csv':
            with open(path, 'w', newline='') as handle:
                writer = csv.writer(handle)
                if data.has_labels:
                    writer.writerow(['# features by samples, last row labels'])
                for row in data.values:
                    writer.writerow([repr(float(v)) for v in row])
                if data.has_labels:
                    writer.writerow([int(v) for v in data.labels])
        else:
            with open(path, 'wb') as handle:
                c = data.c if data.has_labels and data.c else 0
                handle.write(HEADER.pack(MAGIC, data.d, data.n, c))
                handle.write(np.asarray(data.values, dtype='<f8').tobytes(order='F'))
                if data.has_labels:
                    handle.write(np.asarray(data.labels, dtype='<i4').tobytes())
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_labels(path: PathLike) -> np.ndarray:
    """Read one integer label per line; blank lines are skipped."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"label file not found: {path}")
    labels = []
    with open(path) as handle:
        for number, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                labels.append(int(text))
            except ValueError:
                raise DataError(f"not an integer label: {text!r}", position=f"{path} line {number}") from None
    if not labels:
        raise DataError(f"no labels in {path}")
    return np.array(labels, dtype=np.int64)


def generate_synthetic(
    c: int,
    per_class: int,
    d: int,
    separation: float,
    seed: Optional[int] = None,
    spread: float = 1.0
) -> DataMatrix:
    """
    Draw c Gaussian blobs of per_class samples each in d dimensions.

    The features are split into c contiguous groups; class j has mean
    1 + separation on its own group and 1 elsewhere. Entries are clamped at
    zero and samples are ordered by class.
    """
    if c < 1 or per_class < 1 or d < 1:
        raise ContractViolation("c, per_class and d must be positive")
    if d < c:
        raise ContractViolation(f"need at least one feature per class (d={d}, c={c})")
    if separation < 0 or spread < 0:
        raise ContractViolation("separation and spread cannot be negative")

    rng = np.random.default_rng(seed)
    means = np.ones((d, c))
    for j, group in enumerate(np.array_split(np.arange(d), c)):
        means[group, j] += separation
    labels = np.repeat(np.arange(c), per_class)
    values = means[:, labels] + rng.normal(0.0, spread, size=(d, c * per_class))
    return DataMatrix(values=np.maximum(values, 0.0), labels=labels, c=c)


def normalize_maxabs(data: DataMatrix) -> DataMatrix:
    """Divide X by its largest absolute entry; an all-zero X is returned as is."""
    peak = float(np.max(np.abs(data.values))) if data.values.size else 0.0
    if peak == 0:
        return data
    return data.with_values(data.values / peak)


def _csv_rows(record: ResultsRecord, include_timing: bool):
    for method, results in record.methods.items():
        for result in results:
            row = {'method': method, 'repetition': result.repetition, 'iters': result.iterations,
                   'feasibility': '' if result.feasibility is None else result.feasibility,
                   'seconds': result.seconds if include_timing else ''}
            if result.metrics is not None:
                row.update(result.metrics.as_row())
            yield row
        summary = {'method': method, 'repetition': 'mean'}
        aggregate = record.summary(method)
        for name in METRIC_NAMES:
            summary[name] = '' if math.isnan(aggregate[name]['mean']) else aggregate[name]['mean']
        summary['iters'] = mean_std([r.iterations for r in results])[0]
        feasible = [r.feasibility for r in results if r.feasibility is not None]
        summary['feasibility'] = mean_std(feasible)[0] if feasible else ''
        summary['seconds'] = mean_std([r.seconds for r in results])[0] if include_timing else ''
        yield summary


def emit_results(record: ResultsRecord, path: PathLike, fmt: str = 'json', include_timing: bool = True):
    """
    Write a results record.

    json holds the full record with sorted keys; csv has one row per method
    and repetition followed by a 'mean' summary row per method.
    """
    path = Path(path)
    _check_format(fmt, RESULT_FORMATS)
    try:
        if fmt == 'json':
            text = json.dumps(record.to_dict(include_timing=include_timing), sort_keys=True, indent=2)
            path.write_text(text + '\n')
        else:
            with open(path, 'w', newline='') as handle:
                writer = csv.DictWriter(handle, fieldnames=RESULT_COLUMNS)
                writer.writeheader()
                writer.writerows(_csv_rows(record, include_timing))
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from exc
    logger.info("wrote %s results to %s", fmt, path)


def write_rows(rows: List[dict], path: PathLike, columns):
    """Write plot-ready sweep rows as CSV with a header."""
    path = Path(path)
    try:
        with open(path, 'w', newline='') as handle:
            writer = csv.DictWriter(handle, fieldnames=list(columns))
            writer.writeheader()
            writer.writerows(rows)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from exc


def load_results(path: PathLike) -> ResultsRecord:
    """Read a record written by emit_results in json format."""
    path = Path(path)
    try:
        return ResultsRecord.from_dict(json.loads(path.read_text()))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except (ValueError, KeyError) as exc:
        raise DataError(f"malformed results file {path}: {exc}") from exc
