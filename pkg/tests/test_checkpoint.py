import numpy as np
import pytest

from coldrec import checkpoint


def sample_arrays(seed=0):
    rng = np.random.default_rng(seed)
    return {"w": rng.normal(size=(3, 4)),
            "b": rng.normal(size=5),
            "t": rng.normal(size=(2, 2, 2))}


def test_round_trip_exact(tmp_path):
    arrays = sample_arrays()
    path = tmp_path / "p.ckpt"
    checkpoint.save(path, arrays, meta={"kind": "test", "n": 3})
    loaded, meta = checkpoint.load(path)
    assert meta == {"kind": "test", "n": 3}
    assert set(loaded) == set(arrays)
    for k in arrays:
        assert np.array_equal(loaded[k], arrays[k])
        assert loaded[k].dtype == arrays[k].dtype


def test_save_load_save_byte_identical(tmp_path):
    arrays = sample_arrays(1)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    checkpoint.save(p1, arrays, meta={"x": 1})
    loaded, meta = checkpoint.load(p1)
    checkpoint.save(p2, loaded, meta=meta)
    assert p1.read_bytes() == p2.read_bytes()


def test_key_order_does_not_matter(tmp_path):
    arrays = sample_arrays(2)
    reordered = dict(reversed(list(arrays.items())))
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    checkpoint.save(p1, arrays)
    checkpoint.save(p2, reordered)
    assert p1.read_bytes() == p2.read_bytes()


def test_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ValueError):
        checkpoint.load(path)


def test_scalar_and_int_arrays(tmp_path):
    arrays = {"s": np.array(3.5), "i": np.arange(4, dtype=np.int64)}
    path = tmp_path / "p.ckpt"
    checkpoint.save(path, arrays)
    loaded, _ = checkpoint.load(path)
    assert loaded["s"].shape == ()
    assert loaded["s"] == 3.5
    assert np.array_equal(loaded["i"], arrays["i"])
    assert loaded["i"].dtype == np.int64


def test_non_contiguous_input(tmp_path):
    arr = np.arange(12.0).reshape(3, 4).T
    path = tmp_path / "p.ckpt"
    checkpoint.save(path, {"a": arr})
    loaded, _ = checkpoint.load(path)
    assert np.array_equal(loaded["a"], arr)
