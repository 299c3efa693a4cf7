"""On-disk formats and atomic output.

Binary layouts (all little-endian, real values as IEEE float64):

precision file
    ``magic "RICQPREC"``, N (u64), m (u64), baseline kind (u64: 0 scalar,
    1 diagonal, 2 dense), rho (f64), c (f64); then W column-major (N*m),
    omega (m), baseline payload (1, N or N*N values).

shared-basis model file
    ``magic "RICJSVD1"``, N (u64), m (u64), K (u64), rho (f64); then W
    column-major (N*m) and K spectra of m values each. Only the identity
    penalty is representable.

Text formats: network files hold one-based node indices one per line,
parcellation files one integer label per line, cohort manifests
``<subject> <path>`` per line (repetitions in order of appearance, paths
relative to the manifest). ``#`` starts a comment everywhere.
"""

import os
import struct
import tempfile
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .analysis import NetworkSelection
from .errors import InvalidInput, ParseError, StorageError, TruncatedPayload
from .ingest import ParcellationMap, csv_text, raw64_bytes
from .riccati import FactoredPrecision, PenaltyShape
from .shared import SharedBasisModel

PRECISION_MAGIC = b"RICQPREC"
MODEL_MAGIC = b"RICJSVD1"
_KINDS = ("scalar", "diagonal", "dense")
_PREC_HEADER = "<8sQQQdd"
_MODEL_HEADER = "<8sQQQd"


def commit(outputs):
    """Write ``{path: bytes|str}`` so that either every file appears or none does.

    Each payload goes to a temporary file next to its target; targets are
    only replaced once all temporaries are written.
    """
    staged = []
    try:
        for path, payload in outputs.items():
            path = Path(path)
            data = payload.encode() if isinstance(payload, str) else payload
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
            staged.append((tmp, path))
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
        for tmp, path in staged:
            os.replace(tmp, path)
    except OSError as exc:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise StorageError(f"cannot write output: {exc}") from exc


def matrix_bytes(values, path):
    """Serialized matrix in the format implied by the file suffix."""
    if Path(path).suffix in (".raw64", ".bin"):
        return raw64_bytes(values)
    return csv_text(values)


def precision_bytes(Q):
    kind = _KINDS.index(Q.baseline_kind)
    head = struct.pack(_PREC_HEADER, PRECISION_MAGIC, Q.n_nodes, Q.rank, kind, Q.rho, Q.c)
    payload = np.atleast_1d(np.asarray(Q.baseline, dtype="<f8")).ravel()
    return (
        head
        + np.asarray(Q.basis, dtype="<f8").tobytes(order="F")
        + np.asarray(Q.omega, dtype="<f8").tobytes()
        + payload.tobytes()
    )


def _read(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc


def _floats(blob, offset, count, path):
    end = offset + 8 * count
    if len(blob) < end:
        raise TruncatedPayload(f"{path}: payload truncated")
    return np.frombuffer(blob, dtype="<f8", count=count, offset=offset).astype(np.float64), end


def load_precision(path):
    blob = _read(path)
    size = struct.calcsize(_PREC_HEADER)
    if len(blob) < size:
        raise TruncatedPayload(f"{path}: shorter than the precision header")
    magic, N, m, kind, rho, c = struct.unpack_from(_PREC_HEADER, blob)
    if magic != PRECISION_MAGIC:
        raise ParseError(f"{path}: not a precision file")
    if kind > 2:
        raise ParseError(f"{path}: unknown baseline kind {kind}")
    W, pos = _floats(blob, size, N * m, path)
    omega, pos = _floats(blob, pos, m, path)
    baseline, pos = _floats(blob, pos, (1, N, N * N)[kind], path)
    if pos != len(blob):
        raise ParseError(f"{path}: trailing bytes after payload")
    if kind == 0:
        baseline = float(baseline[0])
    elif kind == 2:
        baseline = baseline.reshape(N, N)
    return FactoredPrecision(W.reshape((N, m), order="F"), omega, baseline, rho, c)


def model_bytes(model):
    pen = model.penalty
    if not pen.is_identity():
        raise InvalidInput("only identity-penalty models can be saved")
    N, m = model.basis.shape
    head = struct.pack(_MODEL_HEADER, MODEL_MAGIC, N, m, model.n_subjects, pen.rho)
    return head + np.asarray(model.basis, dtype="<f8").tobytes(order="F") + np.asarray(model.subject_spectra, dtype="<f8").tobytes()


def load_model(path):
    blob = _read(path)
    size = struct.calcsize(_MODEL_HEADER)
    if len(blob) < size:
        raise TruncatedPayload(f"{path}: shorter than the model header")
    magic, N, m, K, rho = struct.unpack_from(_MODEL_HEADER, blob)
    if magic != MODEL_MAGIC:
        raise ParseError(f"{path}: not a shared-basis model file")
    W, pos = _floats(blob, size, N * m, path)
    spectra, pos = _floats(blob, pos, K * m, path)
    if pos != len(blob):
        raise ParseError(f"{path}: trailing bytes after payload")
    return SharedBasisModel(W.reshape((N, m), order="F"), spectra.reshape(K, m), PenaltyShape.identity(rho))


def _lines(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    for number, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield number, line


def _int_lines(path):
    out = []
    for number, line in _lines(path):
        try:
            out.append(int(line))
        except ValueError:
            raise ParseError(f"{path}:{number}: expected an integer, got {line!r}") from None
    return out


def load_network(path):
    """Read one-based node indices into a zero-based :class:`NetworkSelection`."""
    idx = _int_lines(path)
    if not idx:
        raise InvalidInput(f"{path}: network is empty")
    if min(idx) < 1:
        raise InvalidInput(f"{path}: node indices are one-based")
    if len(set(idx)) != len(idx):
        raise InvalidInput(f"{path}: duplicate node index")
    return NetworkSelection(np.array(sorted(idx), dtype=np.int64) - 1)


def load_parcellation(path):
    return ParcellationMap.from_labels(_int_lines(path))


def load_vector(path):
    out = []
    for number, line in _lines(path):
        for token in line.replace(",", " ").split():
            try:
                out.append(float(token))
            except ValueError:
                raise ParseError(f"{path}:{number}: cannot parse {token!r}") from None
    if not out:
        raise InvalidInput(f"{path}: empty vector")
    return np.array(out)


def load_manifest(path):
    """``OrderedDict`` subject -> list of scan paths."""
    base = Path(path).parent
    subjects = OrderedDict()
    for number, line in _lines(path):
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise ParseError(f"{path}:{number}: expected '<subject> <path>'")
        subjects.setdefault(parts[0], []).append(base / parts[1].strip())
    if not subjects:
        raise InvalidInput(f"{path}: cohort manifest is empty")
    return subjects
