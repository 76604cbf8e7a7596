import numpy as np
import pytest

from iseeq.errors import DataError, EmptyInputError
from iseeq.sitq import build_index, encode_query, load_index, query, save_index

from conftest import make_store, random_store
from oracles import brute_mips_ids


class TestBuild:
    def test_identical_vectors_identical_codes(self):
        store = make_store(["a", "b"], [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
        index = build_index(store, code_bits=8, itq_iters=5, seed=0)
        assert np.array_equal(index.codes[0], index.codes[1])

    def test_antipodal_codes_complement(self):
        x = np.array([0.3, -1.2, 0.7])
        store = make_store(["p", "n"], [x, -x])
        index = build_index(store, code_bits=1, itq_iters=3, seed=1)
        # augmented residual is zero for both (norm equals the max norm)
        assert index.max_norm == pytest.approx(np.linalg.norm(x), rel=1e-6)
        assert (index.codes[0] ^ index.codes[1]) & 1 == 1

    def test_quantization_error_monotone(self):
        rng = np.random.default_rng(3)
        store = make_store([f"v{i}" for i in range(1000)], rng.standard_normal((1000, 32)))
        index = build_index(store, code_bits=64, itq_iters=50, seed=7)
        objective = np.array(index.itq_objective)
        assert len(objective) == 50
        assert np.all(np.diff(objective) <= 1e-9)

    def test_rotation_orthogonal(self):
        rng = np.random.default_rng(4)
        store = make_store([f"v{i}" for i in range(200)], rng.standard_normal((200, 16)))
        index = build_index(store, code_bits=16, itq_iters=20, seed=2)
        gram = index.rotation.T @ index.rotation
        assert np.abs(gram - np.eye(16)).max() < 1e-4

    def test_max_norm_bounds_rows(self):
        rng = np.random.default_rng(5)
        store = random_store(rng, 50, 8)
        index = build_index(store, code_bits=8, itq_iters=5, seed=0)
        assert (store.norms <= index.max_norm + 1e-12).all()

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(6)
        matrix = rng.standard_normal((100, 12))
        a = build_index(make_store([f"v{i}" for i in range(100)], matrix), seed=9)
        b = build_index(make_store([f"v{i}" for i in range(100)], matrix), seed=9)
        assert np.array_equal(a.codes, b.codes)
        assert np.array_equal(a.rotation, b.rotation)

    def test_empty_store_rejected(self):
        store = make_store([], np.zeros((0, 4)))
        with pytest.raises(EmptyInputError):
            build_index(store)

    def test_bad_args(self):
        store = make_store(["a"], [[1.0]])
        with pytest.raises(ValueError):
            build_index(store, code_bits=0)
        with pytest.raises(ValueError):
            build_index(store, itq_iters=0)


class TestQuery:
    def test_singleton_index(self):
        store = make_store(["only"], [[1.0, 0.0]])
        index = build_index(store, code_bits=4, itq_iters=3, seed=0)
        for probe in (1, 10):
            result = query(index, np.array([0.5, 0.5]), top_n=1, probe=probe)
            assert [c.passage_id for c in result] == ["only"]

    def test_exhaustive_probe_is_exact(self):
        rng = np.random.default_rng(8)
        store = random_store(rng, 100, 16)
        index = build_index(store, code_bits=16, itq_iters=10, seed=3)
        target = store.matrix[17].astype(np.float64)
        unit = target / np.linalg.norm(target)
        result = query(index, unit, top_n=5, probe=100)
        expected = brute_mips_ids(store.ids, store.matrix, unit, 5)
        assert [c.passage_id for c in result] == expected
        assert result[0].passage_id == "v17"

    def test_augmentation_preserves_mips_order(self):
        rng = np.random.default_rng(9)
        store = random_store(rng, 60, 10)
        index = build_index(store, code_bits=10, itq_iters=5, seed=4)
        q = rng.standard_normal(10)
        q /= np.linalg.norm(q)
        ips = store.matrix.astype(np.float64) @ q
        aug_data = np.hstack(
            [
                store.matrix.astype(np.float64) / index.max_norm,
                np.sqrt(
                    np.clip(1 - (store.norms / index.max_norm) ** 2, 0, None)
                )[:, None],
            ]
        )
        cos = aug_data @ np.concatenate([q, [0.0]])  # both sides unit norm
        assert np.array_equal(np.argsort(-ips, kind="stable"), np.argsort(-cos, kind="stable"))

    def test_probe_raised_to_top_n(self, caplog):
        rng = np.random.default_rng(10)
        store = random_store(rng, 30, 6)
        index = build_index(store, code_bits=6, itq_iters=5, seed=5)
        result = query(index, rng.standard_normal(6), top_n=10, probe=2)
        assert len(result) == 10

    def test_dim_mismatch(self):
        store = make_store(["a"], [[1.0, 0.0]])
        index = build_index(store, code_bits=2, itq_iters=2, seed=0)
        with pytest.raises(DataError):
            query(index, np.array([1.0, 0.0, 0.0]), top_n=1)

    def test_zero_query_rejected(self):
        store = make_store(["a"], [[1.0, 0.0]])
        index = build_index(store, code_bits=2, itq_iters=2, seed=0)
        with pytest.raises(DataError):
            query(index, np.zeros(2), top_n=1)

    def test_recall_nondecreasing_in_probe(self):
        rng = np.random.default_rng(11)
        store = random_store(rng, 2000, 32)
        index = build_index(store, code_bits=32, itq_iters=20, seed=6)
        for qi in range(5):
            q = rng.standard_normal(32)
            true_top = set(brute_mips_ids(store.ids, store.matrix, q, 50))
            last = -1.0
            for probe in (50, 200, 800, 2000):
                got = {c.passage_id for c in query(index, q, top_n=50, probe=probe)}
                recall = len(got & true_top) / 50
                assert recall >= last
                last = recall
            assert last == 1.0  # exhaustive probe

    def test_candidate_recall_quality(self):
        # 64-bit codes over 10k Gaussian rows: the exhaustive-MIPS top-100
        # overlap at probe 500 sits near one half; guard against regressions.
        rng = np.random.default_rng(12)
        store = random_store(rng, 10_000, 64)
        index = build_index(store, code_bits=64, itq_iters=50, seed=0)
        overlaps = []
        for _ in range(10):
            q = rng.standard_normal(64)
            got = {c.passage_id for c in query(index, q, top_n=100, probe=500)}
            true_top = set(brute_mips_ids(store.ids, store.matrix, q, 100))
            overlaps.append(len(got & true_top) / 100)
        assert np.mean(overlaps) >= 0.40


class TestPersistence:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(13)
        store = random_store(rng, 80, 12)
        index = build_index(store, code_bits=24, itq_iters=10, seed=7)
        path = tmp_path / "index.bin"
        save_index(index, path)
        loaded = load_index(path, store)
        assert loaded.ids == index.ids
        assert np.array_equal(loaded.codes, index.codes)
        assert np.array_equal(loaded.rotation, index.rotation)
        assert loaded.max_norm == index.max_norm
        q = rng.standard_normal(12)
        assert [c.passage_id for c in query(loaded, q, top_n=5, probe=80)] == [
            c.passage_id for c in query(index, q, top_n=5, probe=80)
        ]

    def test_reordered_store_still_aligns(self, tmp_path):
        rng = np.random.default_rng(14)
        store = random_store(rng, 40, 8)
        index = build_index(store, code_bits=8, itq_iters=5, seed=8)
        path = tmp_path / "index.bin"
        save_index(index, path)
        perm = rng.permutation(40)
        shuffled = make_store(
            [store.ids[i] for i in perm], store.matrix[perm]
        )
        loaded = load_index(path, shuffled)
        q = rng.standard_normal(8)
        assert [c.passage_id for c in query(loaded, q, top_n=5, probe=40)] == [
            c.passage_id for c in query(index, q, top_n=5, probe=40)
        ]

    def test_missing_ids_rejected(self, tmp_path):
        rng = np.random.default_rng(15)
        store = random_store(rng, 10, 4)
        index = build_index(store, code_bits=4, itq_iters=3, seed=0)
        path = tmp_path / "index.bin"
        save_index(index, path)
        partial = make_store(store.ids[:5], store.matrix[:5])
        with pytest.raises(DataError):
            load_index(path, partial)

    def test_query_code_stable_across_save(self, tmp_path):
        rng = np.random.default_rng(16)
        store = random_store(rng, 30, 6)
        index = build_index(store, code_bits=12, itq_iters=5, seed=1)
        path = tmp_path / "index.bin"
        save_index(index, path)
        loaded = load_index(path, store)
        q = rng.standard_normal(6)
        assert np.array_equal(encode_query(index, q), encode_query(loaded, q))
