"""Precomputed-embedding ingestion.

All neural encoders live outside this package; their outputs arrive as
files. Two transports are supported: a compact binary format for bulk
passage/sentence vectors and JSONL for small fixtures. Token-level
documents for transport distances are normalized bags of words over a
vector lookup.

Binary layout (little-endian throughout):
    magic "ISEQVEC1" | u32 dim | u64 count |
    per row: u16 id_len | id utf-8 | dim * f32
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, EmptyInputError, ParseError

logger = logging.getLogger(__name__)

VEC_MAGIC = b"ISEQVEC1"


@dataclass
class VectorStore:
    """Immutable id-keyed float32 matrix with precomputed row norms."""

    dim: int
    ids: list[str]
    matrix: np.ndarray  # (len(ids), dim) float32, row-major
    norms: np.ndarray  # (len(ids),) float64

    def __post_init__(self):
        self._row_of = {pid: i for i, pid in enumerate(self.ids)}
        if len(self._row_of) != len(self.ids):
            raise DataError("duplicate id in vector store")

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, vec_id: str) -> bool:
        return vec_id in self._row_of

    def row(self, vec_id: str) -> np.ndarray:
        return self.matrix[self._row_of[vec_id]]

    def row_index(self, vec_id: str) -> int:
        return self._row_of[vec_id]


def _finish_store(ids: list[str], matrix: np.ndarray, origin: str) -> VectorStore:
    if matrix.size and not np.isfinite(matrix).all():
        bad = int(np.argwhere(~np.isfinite(matrix).all(axis=1))[0][0])
        raise DataError(f"{origin}: non-finite value in vector {ids[bad]!r}")
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    return VectorStore(dim=matrix.shape[1], ids=ids, matrix=matrix, norms=norms)


def load_vectors(path: str | Path) -> VectorStore:
    """Load a vector store, sniffing binary vs JSONL by the magic bytes."""
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(8)
    if head == VEC_MAGIC:
        return _load_binary(path)
    return _load_jsonl(path)


def _load_binary(path: Path) -> VectorStore:
    with path.open("rb") as fh:
        magic = fh.read(8)
        if magic != VEC_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        header = fh.read(12)
        if len(header) != 12:
            raise DataError(f"{path}: truncated header")
        dim, count = struct.unpack("<IQ", header)
        ids: list[str] = []
        matrix = np.empty((count, dim), dtype=np.float32)
        row_bytes = dim * 4
        for i in range(count):
            (id_len,) = struct.unpack("<H", fh.read(2))
            ids.append(fh.read(id_len).decode("utf-8"))
            buf = fh.read(row_bytes)
            if len(buf) != row_bytes:
                raise DataError(f"{path}: truncated row {i}")
            matrix[i] = np.frombuffer(buf, dtype="<f4")
    return _finish_store(ids, matrix, str(path))


def _load_jsonl(path: Path) -> VectorStore:
    ids: list[str] = []
    rows: list[np.ndarray] = []
    dim: int | None = None
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                vec_id = record["id"]
                vec = np.asarray(record["vec"], dtype=np.float32)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}: {exc}", line_no) from exc
            if vec.ndim != 1:
                raise ParseError(f"{path}: vec must be a flat list", line_no)
            if dim is None:
                dim = int(vec.shape[0])
            elif vec.shape[0] != dim:
                raise ParseError(
                    f"{path}: dim mismatch ({vec.shape[0]} != {dim})", line_no
                )
            ids.append(str(vec_id))
            rows.append(vec)
    if not rows:
        raise EmptyInputError(f"{path}: no vectors")
    return _finish_store(ids, np.vstack(rows), str(path))


def save_vectors(path: str | Path, ids: list[str], matrix: np.ndarray) -> None:
    """Write the binary transport format. Round-trips bit-exactly."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise ValueError("matrix must be 2-D with one row per id")
    with Path(path).open("wb") as fh:
        fh.write(VEC_MAGIC)
        fh.write(struct.pack("<IQ", matrix.shape[1], matrix.shape[0]))
        for vec_id, row in zip(ids, matrix):
            encoded = vec_id.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ValueError(f"id too long: {vec_id[:32]!r}...")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(row.astype("<f4").tobytes())


@dataclass
class TokenDoc:
    """Token-level embedding bag with nBOW weights.

    Duplicate tokens are collapsed; ``weights`` are occurrence counts
    normalized to sum to 1.
    """

    doc_id: str
    tokens: list[str]
    vectors: np.ndarray  # (len(tokens), dim) float32
    weights: np.ndarray  # (len(tokens),) float64, sums to 1

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def build_token_doc(
    doc_id: str,
    tokens: list[str],
    lookup: VectorStore,
    strict: bool = False,
) -> TokenDoc:
    """Assemble a TokenDoc from raw tokens and a token-vector lookup.

    Unknown tokens raise in strict mode; otherwise they are dropped with
    a warning. Raises :class:`EmptyInputError` when nothing survives.
    """
    counts: dict[str, int] = {}
    dropped = 0
    for token in tokens:
        if token in lookup:
            counts[token] = counts.get(token, 0) + 1
        elif strict:
            raise DataError(f"token {token!r} missing from vector lookup")
        else:
            dropped += 1
    if dropped:
        logger.warning("doc %s: dropped %d tokens missing from lookup", doc_id, dropped)
    if not counts:
        raise EmptyInputError(f"doc {doc_id}: no tokens with vectors")
    kept = list(counts)
    total = sum(counts.values())
    vectors = np.vstack([lookup.row(t) for t in kept])
    weights = np.array([counts[t] / total for t in kept], dtype=np.float64)
    return TokenDoc(doc_id=doc_id, tokens=kept, vectors=vectors, weights=weights)
