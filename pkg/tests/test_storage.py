import numpy as np
import pytest

from manifold_csi import read_matrix, write_matrix
from manifold_csi.storage import MAGIC, FormatError


class TestMatrixFiles:
    def test_real_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(7, 5))
        write_matrix(tmp_path / "a.mlcf", a)
        b = read_matrix(tmp_path / "a.mlcf")
        assert b.dtype == np.float64
        assert np.array_equal(a, b)

    def test_complex_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(4, 6)) + 1j * rng.normal(size=(4, 6))
        write_matrix(tmp_path / "a.mlcf", a)
        b = read_matrix(tmp_path / "a.mlcf")
        assert b.dtype == np.complex128
        assert np.array_equal(a, b)

    def test_header_layout(self, tmp_path):
        write_matrix(tmp_path / "a.mlcf", np.zeros((2, 3)))
        raw = (tmp_path / "a.mlcf").read_bytes()
        assert raw[:4] == MAGIC
        assert int.from_bytes(raw[4:8], "little") == 1
        assert raw[8] == 1  # real dtype code
        assert int.from_bytes(raw[9:17], "little") == 2
        assert int.from_bytes(raw[17:25], "little") == 3
        assert len(raw) == 25 + 2 * 3 * 8

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.mlcf"
        path.write_bytes(b"NOPE" + bytes(40))
        with pytest.raises(FormatError):
            read_matrix(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "a.mlcf"
        write_matrix(path, np.ones((4, 4)))
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(FormatError):
            read_matrix(path)

    def test_truncated_header_rejected(self, tmp_path):
        path = tmp_path / "a.mlcf"
        path.write_bytes(b"MLC")
        with pytest.raises(FormatError):
            read_matrix(path)

    def test_vector_input_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_matrix(tmp_path / "a.mlcf", np.ones(4))

    def test_bit_exact_many_trials(self, tmp_path):
        rng = np.random.default_rng(2)
        for i in range(50):
            shape = (int(rng.integers(1, 9)), int(rng.integers(1, 9)))
            if i % 2:
                a = rng.normal(size=shape)
            else:
                a = rng.normal(size=shape) + 1j * rng.normal(size=shape)
            write_matrix(tmp_path / "t.mlcf", a)
            assert np.array_equal(read_matrix(tmp_path / "t.mlcf"), a)
