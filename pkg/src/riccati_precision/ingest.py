"""Data loading and the in-scope data preparation steps.

All variance computations use the 1/T convention so that a normalized row
has a unit diagonal entry in ``(1/T) X X^T``.
"""

import csv
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConstantSignal,
    InvalidInput,
    NonFiniteEntry,
    ParseError,
    StorageError,
    TruncatedPayload,
)

RAW64_MAGIC = b"RAW64LE\x00"
MAD_THRESHOLD = 4.4478


@dataclass(frozen=True)
class DataMatrix:
    """N signals (rows) over T samples (columns).

    ``sample_count`` is the T used when forming covariances. It differs from
    the number of columns after a random projection, which compresses the
    sample axis but keeps ``Y Y^T`` an estimate of ``X X^T``.
    """

    values: np.ndarray
    normalized: bool = False
    sample_count: int | None = None
    projected: bool = False
    row_labels: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise InvalidInput(f"data matrix must be non-empty 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            r, c = np.argwhere(~np.isfinite(values))[0]
            raise NonFiniteEntry(int(r), int(c))
        if self.row_labels is not None and len(self.row_labels) != values.shape[0]:
            raise InvalidInput("row_labels length does not match the number of rows")
        object.__setattr__(self, "values", values)

    @property
    def n_signals(self):
        return self.values.shape[0]

    @property
    def n_samples(self):
        return self.sample_count if self.sample_count is not None else self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


def as_data(X, normalized=False):
    if isinstance(X, DataMatrix):
        return X
    return DataMatrix(np.asarray(X, dtype=np.float64), normalized=normalized)


@dataclass(frozen=True)
class ParcellationMap:
    labels: np.ndarray
    parcel_count: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise InvalidInput("parcellation labels must be a non-empty vector")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise InvalidInput("parcellation labels must be integers")
            labels = labels.astype(np.int64)
        if labels.min() < 1 or labels.max() > self.parcel_count:
            raise InvalidInput(f"labels must lie in 1..{self.parcel_count}")
        counts = np.bincount(labels, minlength=self.parcel_count + 1)[1:]
        if np.any(counts == 0):
            empty = int(np.flatnonzero(counts == 0)[0]) + 1
            raise InvalidInput(f"parcel {empty} has no nodes")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_labels(cls, labels):
        labels = np.asarray(labels, dtype=np.int64)
        return cls(labels, int(labels.max()) if labels.size else 0)


def load_matrix(path, format=None):
    """Read a matrix from a headerless CSV file or a raw64 binary file.

    ``format`` defaults to ``raw64`` for ``.raw64``/``.bin`` suffixes and CSV
    otherwise.
    """
    path = Path(path)
    if format is None:
        format = "raw64" if path.suffix in (".raw64", ".bin") else "csv"
    try:
        if format == "csv":
            return DataMatrix(_read_csv(path))
        if format == "raw64":
            return DataMatrix(_read_raw64(path))
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    raise InvalidInput(f"unknown matrix format {format!r}")


def _read_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for i, record in enumerate(csv.reader(fh)):
            if not record or all(not cell.strip() for cell in record):
                continue
            row = []
            for j, cell in enumerate(record):
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: cannot parse {cell!r} at row {i}, column {j}") from None
                if not np.isfinite(value):
                    raise NonFiniteEntry(i, j, f"{path}: non-finite entry {cell.strip()!r} at row {i}, column {j}")
                row.append(value)
            if rows and len(row) != len(rows[0]):
                raise ParseError(f"{path}: row {i} has {len(row)} columns, expected {len(rows[0])}")
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: empty matrix file")
    return np.array(rows, dtype=np.float64)


def _read_raw64(path):
    blob = path.read_bytes()
    header = struct.calcsize("<8sQQ")
    if len(blob) < header:
        raise TruncatedPayload(f"{path}: file shorter than the raw64 header")
    magic, rows, cols = struct.unpack_from("<8sQQ", blob)
    if magic != RAW64_MAGIC:
        raise ParseError(f"{path}: bad raw64 magic {magic!r}")
    expected = header + 8 * rows * cols
    if len(blob) < expected:
        raise TruncatedPayload(f"{path}: expected {expected} bytes, found {len(blob)}")
    if len(blob) > expected:
        raise ParseError(f"{path}: {len(blob) - expected} trailing bytes after payload")
    values = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=header)
    values = values.reshape(rows, cols).astype(np.float64)
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        raise NonFiniteEntry(int(bad[0, 0]), int(bad[0, 1]))
    return values


def raw64_bytes(values):
    values = np.ascontiguousarray(values, dtype="<f8")
    rows, cols = values.shape
    return struct.pack("<8sQQ", RAW64_MAGIC, rows, cols) + values.tobytes()


def csv_text(values):
    return "".join(",".join(f"{x:.17g}" for x in row) + "\n" for row in np.atleast_2d(values))


def normalize(X):
    """Zero mean, unit variance (1/T) per row.

    Raises
    ------
    ConstantSignal
        For the first row whose variance is zero.
    """
    data = as_data(X)
    values = data.values
    T = values.shape[1]
    if T < 2:
        raise InvalidInput("normalization needs at least two samples")
    centered = values - values.mean(axis=1, keepdims=True)
    std = np.sqrt(np.mean(centered**2, axis=1))
    scale = np.abs(values).max(axis=1)
    constant = std <= 1e-14 * np.maximum(scale, 1e-300)
    if np.any(constant):
        raise ConstantSignal(int(np.flatnonzero(constant)[0]))
    out = centered / std[:, None]
    # second pass removes the rounding left by the first
    out -= out.mean(axis=1, keepdims=True)
    out /= np.sqrt(np.mean(out**2, axis=1))[:, None]
    return DataMatrix(out, normalized=True, row_labels=data.row_labels)


def is_normalized(values, tol=1e-6):
    """Rows either all-zero or zero-mean/unit-variance within ``tol``."""
    values = np.asarray(values)
    mean = values.mean(axis=1)
    var = np.mean(values**2, axis=1) - mean**2
    zero = ~np.any(values, axis=1)
    ok = (np.abs(mean) <= tol) & (np.abs(var - 1.0) <= tol)
    return bool(np.all(ok | zero))


def mad_clamp(x, k=MAD_THRESHOLD):
    """Clip ``x`` to ``median +/- k * MAD`` with ``MAD = median(|x - median(x)|)``.

    The default ``k`` is the robust analogue of a three-sigma cut. When the
    MAD is zero the input is returned unchanged with a warning.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise InvalidInput("cannot clamp an empty vector")
    if k <= 0:
        raise InvalidInput("clamp width must be positive")
    med = np.median(x)
    mad = np.median(np.abs(x - med))
    if mad == 0:
        warnings.warn("median absolute deviation is zero; values passed through", RuntimeWarning, stacklevel=2)
        return x.copy()
    return np.clip(x, med - k * mad, med + k * mad)


def parcel_means(X, parcellation):
    """Unweighted mean of the rows sharing each label (no renormalization)."""
    values = as_data(X).values
    labels = parcellation.labels
    if labels.shape[0] != values.shape[0]:
        raise InvalidInput(f"{labels.shape[0]} labels for {values.shape[0]} rows")
    sums = np.zeros((parcellation.parcel_count, values.shape[1]))
    np.add.at(sums, labels - 1, values)
    counts = np.bincount(labels - 1, minlength=parcellation.parcel_count)
    return sums / counts[:, None]


def parcel_average(X, parcellation):
    return normalize(parcel_means(X, parcellation))


def trim_samples(X, n):
    """Drop the first ``n`` samples (e.g. filter transients)."""
    data = as_data(X)
    if n < 0 or n >= data.values.shape[1]:
        raise InvalidInput(f"cannot trim {n} of {data.values.shape[1]} samples")
    return DataMatrix(data.values[:, n:], row_labels=data.row_labels)
