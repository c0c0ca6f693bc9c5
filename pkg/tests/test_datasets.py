import gzip

import numpy as np
import pytest

from spikecost.datasets import load_mnist, read_idx, write_idx
from spikecost.errors import ValidationError


class TestIdx:
    @pytest.mark.parametrize("dtype", [np.uint8, np.int8, np.int16, np.int32, np.float32, np.float64])
    @pytest.mark.parametrize("suffix", ["", ".gz"])
    def test_round_trip(self, tmp_path, dtype, suffix):
        arr = (np.arange(24).reshape(2, 3, 4) - 5).astype(dtype) if dtype != np.uint8 else \
            np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
        path = tmp_path / f"x.idx{suffix}"
        write_idx(path, arr)
        out = read_idx(path)
        assert out.dtype == arr.dtype and np.array_equal(out, arr)

    def test_big_endian_header(self, tmp_path):
        path = tmp_path / "h.idx"
        write_idx(path, np.zeros((2, 5), dtype=np.uint8))
        raw = path.read_bytes()
        assert raw[:4] == bytes([0, 0, 0x08, 2])
        assert raw[4:12] == (2).to_bytes(4, "big") + (5).to_bytes(4, "big")

    def test_bit_exact_payload(self, tmp_path):
        payload = bytes(range(256)) * 2
        path = tmp_path / "p.idx"
        path.write_bytes(bytes([0, 0, 8, 1]) + (512).to_bytes(4, "big") + payload)
        assert read_idx(path).tobytes() == payload

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(b"\x01\x00\x08\x01" + b"\x00\x00\x00\x01" + b"\x00")
        with pytest.raises(ValidationError):
            read_idx(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.gz"
        with gzip.open(path, "wb") as fh:
            fh.write(bytes([0, 0, 8, 1]) + (10).to_bytes(4, "big") + b"\x00" * 3)
        with pytest.raises(ValidationError):
            read_idx(path)


class TestMnist:
    def test_shipped_subset(self, mnist_root):
        x, y = load_mnist(mnist_root, "train")
        xt, yt = load_mnist(mnist_root, "test")
        assert x.shape == (8000, 1, 28, 28) and xt.shape == (2000, 1, 28, 28)
        assert x.min() >= 0 and x.max() <= 1
        assert set(np.unique(y)) == set(range(10))

    def test_limit(self, mnist_root):
        x, y = load_mnist(mnist_root, "test", limit=7)
        assert len(x) == len(y) == 7

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_mnist(tmp_path)

    def test_mismatched_files(self, tmp_path):
        write_idx(tmp_path / "t10k-images-idx3-ubyte", np.zeros((3, 28, 28), np.uint8))
        write_idx(tmp_path / "t10k-labels-idx1-ubyte", np.zeros(2, np.uint8))
        with pytest.raises(ValidationError):
            load_mnist(tmp_path, "test")
