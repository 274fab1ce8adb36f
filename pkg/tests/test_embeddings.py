import numpy as np
import pytest

from smine.embeddings import (
    EmbeddingStore,
    StoreBuilder,
    default_index_path,
    load_store,
    read_smeb,
    save_store,
    write_smeb,
)
from smine.errors import InvalidInputError, StoreError


def build_store(dim=8, n_frames=6, n_queries=2, seed=0):
    rng = np.random.default_rng(seed)
    b = StoreBuilder(dim)
    for i in range(n_frames):
        b.add_frame("log0", "ring_front_center", i * 100_000_000, rng.normal(size=dim))
    for q in range(n_queries):
        b.add_text(f"q{q}", rng.normal(size=dim))
    return b.build()


class TestStoreBuilder:
    def test_dim_mismatch_rejected(self):
        b = StoreBuilder(4)
        with pytest.raises(InvalidInputError):
            b.add_frame("l", "c", 0, np.zeros(5))

    def test_duplicate_frame_key_rejected(self):
        b = StoreBuilder(4)
        b.add_frame("l", "c", 0, np.zeros(4))
        with pytest.raises(InvalidInputError):
            b.add_frame("l", "c", 0, np.ones(4))

    def test_text_token_matrix(self):
        b = StoreBuilder(3)
        b.add_text("q", np.arange(6, dtype=np.float32).reshape(2, 3))
        store = b.build()
        toks = store.text_tokens("q")
        assert toks.shape == (2, 3)
        np.testing.assert_array_equal(store.text_vector("q"), toks.mean(axis=0))

    def test_frame_timestamps_sorted(self):
        b = StoreBuilder(2)
        for ts in (300, 100, 200):
            b.add_frame("l", "c", ts, np.zeros(2))
        store = b.build()
        np.testing.assert_array_equal(store.frame_timestamps("l", "c"), [100, 200, 300])
        assert store.frame_timestamps("l", "other").size == 0


class TestSmebFile:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        mat = rng.normal(size=(17, 5)).astype(np.float32)
        path = tmp_path / "m.smeb"
        write_smeb(mat, path)
        back = read_smeb(path)
        assert back.dtype == np.float32
        assert mat.tobytes() == back.tobytes()

    def test_empty_matrix(self, tmp_path):
        path = tmp_path / "e.smeb"
        write_smeb(np.empty((0, 7), dtype=np.float32), path)
        back = read_smeb(path)
        assert back.shape == (0, 7)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.smeb"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(StoreError):
            read_smeb(path)

    def test_truncated(self, tmp_path):
        rng = np.random.default_rng(2)
        path = tmp_path / "t.smeb"
        write_smeb(rng.normal(size=(4, 4)).astype(np.float32), path)
        data = path.read_bytes()
        path.write_bytes(data[:-3])
        with pytest.raises(StoreError):
            read_smeb(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "v.smeb"
        write_smeb(np.zeros((1, 2), dtype=np.float32), path)
        raw = bytearray(path.read_bytes())
        raw[4] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(StoreError):
            read_smeb(path)


class TestStoreRoundTrip:
    def test_store_round_trip(self, tmp_path):
        store = build_store()
        smeb = tmp_path / "emb.smeb"
        save_store(store, smeb)
        assert default_index_path(smeb).exists()
        loaded = load_store(smeb)
        assert loaded.dim == store.dim
        assert loaded.vectors.tobytes() == store.vectors.tobytes()
        assert loaded.frame_index == store.frame_index
        assert loaded.text_index == store.text_index

    def test_index_out_of_range_rejected(self):
        with pytest.raises(InvalidInputError):
            EmbeddingStore(dim=2, vectors=np.zeros((1, 2)), frame_index={("l", "c", 0): 5})
