import numpy as np
import pytest

from amr_retrofit.errors import DataError, DimensionMismatch
from amr_retrofit.store import VectorStore, from_bytes, load_vectors


def test_binary_round_trip(tmp_path, rng):
    store = VectorStore(["a", "ünï", "c d"], rng.standard_normal((3, 5)), b"x" * 16)
    path = tmp_path / "v.vec"
    store.save(path)
    back = load_vectors(path)
    assert back.ids == store.ids
    assert back.digest == b"x" * 16
    np.testing.assert_array_equal(back.vectors, store.vectors.astype(np.float32))
    assert path.read_bytes()[:4] == b"AMRV"


def test_empty_store():
    back = from_bytes(VectorStore([], np.zeros((0, 3))).to_bytes())
    assert len(back) == 0 and back.dim == 3


def test_lookup(rng):
    store = VectorStore(["a", "b"], rng.standard_normal((2, 2)))
    assert "a" in store and "z" not in store
    np.testing.assert_array_equal(store.rows(["b", "a"]), store.vectors[::-1])
    with pytest.raises(DataError):
        store.get("z")


def test_text_format(tmp_path):
    path = tmp_path / "v.txt"
    path.write_text("2 3\nx 1 2 3\ny 0 0.5 -1\n", encoding="utf-8")
    store = load_vectors(path)
    assert store.ids == ["x", "y"]
    np.testing.assert_array_equal(store.get("y"), [0, 0.5, -1])
    assert store.digest == bytes(16)


@pytest.mark.parametrize(
    "text, error",
    [("", DataError), ("two 3\n", DataError), ("3 2\nx 1 2\n", DataError), ("1 2\nx 1 2 3\n", DimensionMismatch)],
)
def test_text_format_errors(tmp_path, text, error):
    path = tmp_path / "v.txt"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(error):
        load_vectors(path)


@pytest.mark.parametrize("cut", [3, 20, 33, -1])
def test_truncated_binary(rng, cut):
    data = VectorStore(["a", "b"], rng.standard_normal((2, 2))).to_bytes()
    with pytest.raises(DataError):
        from_bytes(data[:cut])


def test_bad_version(rng):
    data = bytearray(VectorStore(["a"], rng.standard_normal((1, 2))).to_bytes())
    data[4] = 7
    with pytest.raises(DataError):
        from_bytes(bytes(data))


def test_duplicate_ids():
    with pytest.raises(DataError):
        VectorStore(["a", "a"], np.zeros((2, 2)))
    with pytest.raises(DimensionMismatch):
        VectorStore(["a"], np.zeros((2, 2)))
