import json

import numpy as np
import pytest

from iseeq.embeddings import TokenDoc, build_token_doc, load_vectors, save_vectors
from iseeq.errors import DataError, EmptyInputError, ParseError

from conftest import make_store


class TestBinaryFormat:
    def test_small_round_trip(self, tmp_path):
        path = tmp_path / "v.bin"
        matrix = np.arange(12, dtype=np.float32).reshape(3, 4)
        save_vectors(path, ["a", "b", "c"], matrix)
        store = load_vectors(path)
        assert store.ids == ["a", "b", "c"]
        assert store.dim == 4
        assert np.array_equal(store.matrix, matrix)

    def test_random_round_trip_bitwise(self, tmp_path):
        rng = np.random.default_rng(5)
        matrix = rng.standard_normal((100, 17)).astype(np.float32)
        ids = [f"row-{i:03d}" for i in range(100)]
        path = tmp_path / "v.bin"
        save_vectors(path, ids, matrix)
        store = load_vectors(path)
        assert store.ids == ids
        assert store.matrix.tobytes() == matrix.tobytes()

    def test_utf8_ids(self, tmp_path):
        path = tmp_path / "v.bin"
        save_vectors(path, ["café", "naïve"], np.eye(2, dtype=np.float32))
        assert load_vectors(path).ids == ["café", "naïve"]

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "v.bin"
        save_vectors(path, ["a", "b"], np.eye(2, dtype=np.float32))
        data = path.read_bytes()
        path.write_bytes(data[:-3])
        with pytest.raises(DataError):
            load_vectors(path)


class TestJsonl:
    def test_unit_vector_norm(self, tmp_path):
        path = tmp_path / "v.jsonl"
        path.write_text('{"id": "p1", "vec": [1, 0, 0, 0]}\n')
        store = load_vectors(path)
        assert store.norms.tolist() == [1.0]

    def test_dim_mismatch(self, tmp_path):
        path = tmp_path / "v.jsonl"
        path.write_text('{"id": "a", "vec": [1, 0]}\n{"id": "b", "vec": [1]}\n')
        with pytest.raises(ParseError, match="dim mismatch"):
            load_vectors(path)

    def test_duplicate_id(self, tmp_path):
        path = tmp_path / "v.jsonl"
        path.write_text('{"id": "a", "vec": [1]}\n{"id": "a", "vec": [2]}\n')
        with pytest.raises(DataError, match="duplicate"):
            load_vectors(path)

    def test_non_finite_rejected(self, tmp_path):
        path = tmp_path / "v.jsonl"
        path.write_text('{"id": "a", "vec": [1e400]}\n')
        with pytest.raises(DataError):
            load_vectors(path)

    def test_norms_match_rows(self, tmp_path):
        rng = np.random.default_rng(11)
        rows = rng.standard_normal((20, 6))
        lines = [json.dumps({"id": f"r{i}", "vec": row.tolist()}) for i, row in enumerate(rows)]
        path = tmp_path / "v.jsonl"
        path.write_text("\n".join(lines))
        store = load_vectors(path)
        recomputed = np.linalg.norm(store.matrix.astype(np.float64), axis=1)
        assert np.abs(store.norms - recomputed).max() < 1e-6
        # self-cosine through the stored norms is 1
        cos = np.einsum("ij,ij->i", store.matrix, store.matrix) / store.norms**2
        assert np.abs(cos - 1.0).max() < 1e-6


class TestTokenDoc:
    def test_frequency_weights(self):
        store = make_store(["a", "b"], np.eye(2))
        doc = build_token_doc("d", ["a", "a", "b"], store)
        assert doc.tokens == ["a", "b"]
        assert doc.weights.tolist() == [2 / 3, 1 / 3]

    def test_single_token(self):
        store = make_store(["a"], [[1.0, 2.0]])
        doc = build_token_doc("d", ["a"], store)
        assert doc.weights.tolist() == [1.0]

    def test_oov_dropped_lenient(self, caplog):
        store = make_store(["w0", "w1", "w2"], np.eye(3))
        tokens = ["w0"] * 10 + ["w1"] * 20 + ["w2"] * 15 + ["oov"] * 5
        doc = build_token_doc("d", tokens, store)
        assert doc.tokens == ["w0", "w1", "w2"]
        assert np.allclose(doc.weights, [10 / 45, 20 / 45, 15 / 45])
        assert abs(doc.weights.sum() - 1.0) < 1e-6

    def test_oov_strict_raises(self):
        store = make_store(["a"], [[1.0]])
        with pytest.raises(DataError):
            build_token_doc("d", ["a", "oov"], store, strict=True)

    def test_all_oov_rejected(self):
        store = make_store(["a"], [[1.0]])
        with pytest.raises(EmptyInputError):
            build_token_doc("d", ["x", "y"], store)
