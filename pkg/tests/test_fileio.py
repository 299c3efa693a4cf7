import struct

import numpy as np
import pytest

from conftest import normalized_data
from riccati_precision import fileio
from riccati_precision.errors import InvalidInput, ParseError, StorageError, TruncatedPayload
from riccati_precision.riccati import FactoredPrecision, PenaltyShape, densify, estimate
from riccati_precision.shared import fit_shared


@pytest.mark.parametrize("baseline", [0.7, np.array([1.0, 2.0, 3.0]), np.diag([1.0, 2.0, 3.0]) + 0.1])
def test_precision_round_trip(tmp_path, baseline):
    Q = FactoredPrecision(np.arange(6.0).reshape(3, 2), [-0.01, -0.02], baseline, 0.5, 1.4)
    path = tmp_path / "q.prec"
    path.write_bytes(fileio.precision_bytes(Q))
    R = fileio.load_precision(path)
    assert R.baseline_kind == Q.baseline_kind
    np.testing.assert_array_equal(R.basis, Q.basis)
    np.testing.assert_array_equal(R.omega, Q.omega)
    np.testing.assert_array_equal(densify(R), densify(Q))
    assert (R.rho, R.c) == (0.5, 1.4)


def test_precision_header_layout():
    Q = FactoredPrecision(np.array([[1.0], [2.0]]), [-0.5], 3.0, 4.0, 0.5)
    blob = fileio.precision_bytes(Q)
    assert blob[:8] == b"RICQPREC"
    assert struct.unpack_from("<QQQdd", blob, 8) == (2, 1, 0, 4.0, 0.5)
    assert len(blob) == 48 + 8 * (2 + 1 + 1)


def test_precision_corruption(tmp_path):
    Q = FactoredPrecision(np.ones((2, 1)), [-0.1], 1.0, 1.0, 1.0)
    blob = fileio.precision_bytes(Q)
    p = tmp_path / "q"
    p.write_bytes(blob[:-4])
    with pytest.raises(TruncatedPayload):
        fileio.load_precision(p)
    p.write_bytes(blob + b"\0" * 8)
    with pytest.raises(ParseError):
        fileio.load_precision(p)
    p.write_bytes(b"NOTMAGIC" + blob[8:])
    with pytest.raises(ParseError):
        fileio.load_precision(p)
    p.write_bytes(blob[:10])
    with pytest.raises(TruncatedPayload):
        fileio.load_precision(p)
    with pytest.raises(StorageError):
        fileio.load_precision(tmp_path / "missing")


def test_model_round_trip(tmp_path, rng):
    Xs = [normalized_data(rng, 6, 15) for _ in range(3)]
    model = fit_shared(Xs, 2, PenaltyShape.identity(0.5))
    p = tmp_path / "m.jsvd"
    p.write_bytes(fileio.model_bytes(model))
    back = fileio.load_model(p)
    np.testing.assert_array_equal(back.basis, model.basis)
    np.testing.assert_array_equal(back.subject_spectra, model.subject_spectra)
    assert back.penalty.rho == 0.5
    diag = fit_shared(Xs, 2, PenaltyShape.diagonal(np.full(6, 2.0), 0.5))
    with pytest.raises(InvalidInput):
        fileio.model_bytes(diag)


def test_estimate_survives_round_trip(tmp_path, rng):
    X = normalized_data(rng, 8, 20)
    Q = estimate(X, PenaltyShape.diagonal(rng.uniform(1, 2, 8), 0.3))
    p = tmp_path / "q.prec"
    p.write_bytes(fileio.precision_bytes(Q))
    np.testing.assert_array_equal(densify(fileio.load_precision(p)), densify(Q))


def test_commit_writes_all(tmp_path):
    fileio.commit({tmp_path / "a.txt": "x", tmp_path / "b.bin": b"\x01"})
    assert (tmp_path / "a.txt").read_text() == "x"
    assert (tmp_path / "b.bin").read_bytes() == b"\x01"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.txt", "b.bin"]


def test_commit_failure_leaves_nothing(tmp_path):
    with pytest.raises(StorageError):
        fileio.commit({tmp_path / "a.txt": "x", tmp_path / "missing" / "b.txt": "y"})
    assert list(tmp_path.iterdir()) == []


def test_network_file(tmp_path):
    p = tmp_path / "net.txt"
    p.write_text("# network\n3\n1  # first\n\n2\n")
    assert fileio.load_network(p).node_indices.tolist() == [0, 1, 2]
    for text, err in [("0\n", InvalidInput), ("1\n1\n", InvalidInput), ("a\n", ParseError), ("#\n", InvalidInput)]:
        p.write_text(text)
        with pytest.raises(err):
            fileio.load_network(p)


def test_vector_and_parcellation(tmp_path):
    p = tmp_path / "v.txt"
    p.write_text("1.5, 2\n3\n")
    np.testing.assert_array_equal(fileio.load_vector(p), [1.5, 2.0, 3.0])
    p.write_text("x\n")
    with pytest.raises(ParseError):
        fileio.load_vector(p)
    p.write_text("2\n1\n2\n")
    parc = fileio.load_parcellation(p)
    assert parc.parcel_count == 2


def test_manifest(tmp_path):
    m = tmp_path / "cohort.txt"
    m.write_text("s1 a.csv\ns2 b.csv\ns1 c.csv\n# comment\n")
    out = fileio.load_manifest(m)
    assert list(out) == ["s1", "s2"]
    assert out["s1"] == [tmp_path / "a.csv", tmp_path / "c.csv"]
    m.write_text("s1\n")
    with pytest.raises(ParseError):
        fileio.load_manifest(m)


def test_matrix_bytes_by_suffix():
    A = np.array([[0.1, 2.0]])
    assert fileio.matrix_bytes(A, "x.csv") == "0.10000000000000001,2\n"
    assert fileio.matrix_bytes(A, "x.raw64")[:8] == b"RAW64LE\x00"
