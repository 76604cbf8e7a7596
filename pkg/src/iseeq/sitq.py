"""SITQ approximate maximum-inner-product index.

Inner-product search is reduced to cosine search by padding each vector
x with sqrt(1 - ||x/M||^2) where M is the largest row norm (queries get
a zero pad), then binary codes are learned on the augmented data:
center, project onto the top principal directions, and refine a random
orthogonal rotation by alternating sign-quantization with the
orthogonal-Procrustes update. Search scans packed codes by Hamming
distance, keeps the closest ``probe`` rows as candidates and re-ranks
them by exact inner product.

Build is deterministic given the seed (the rotation init is the only
randomized step).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import VectorStore
from .errors import DataError, EmptyInputError

logger = logging.getLogger(__name__)

IDX_MAGIC = b"ISEQIDX1"


@dataclass(frozen=True)
class Candidate:
    passage_id: str
    hamming: int
    inner_product: float


@dataclass
class SitqIndex:
    dim_aug: int
    max_norm: float
    mean: np.ndarray  # (dim_aug,) centering vector of the augmented data
    projection: np.ndarray  # (dim_aug, code_bits)
    rotation: np.ndarray  # (code_bits, code_bits), orthogonal
    codes: np.ndarray  # (n, words) uint64, packed sign bits
    ids: list[str]
    raw: VectorStore
    itq_objective: list[float] = field(default_factory=list)

    def __post_init__(self):
        # codes follow ids order; the raw store may order rows differently
        self._store_rows = np.array([self.raw.row_index(p) for p in self.ids])

    @property
    def code_bits(self) -> int:
        return self.rotation.shape[0]

    @property
    def store_rows(self) -> np.ndarray:
        return self._store_rows

    def __len__(self) -> int:
        return len(self.ids)


def _pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a (n, code_bits) boolean array into little-endian u64 words."""
    n, code_bits = bits.shape
    words = (code_bits + 63) // 64
    padded = np.zeros((n, words * 64), dtype=np.uint8)
    padded[:, :code_bits] = bits
    return np.packbits(padded, axis=1, bitorder="little").view("<u8").reshape(n, words)


def _augment_data(matrix: np.ndarray, max_norm: float) -> np.ndarray:
    scaled = matrix.astype(np.float64) / max_norm
    resid = np.clip(1.0 - np.einsum("ij,ij->i", scaled, scaled), 0.0, None)
    return np.hstack([scaled, np.sqrt(resid)[:, None]])


def build_index(
    store: VectorStore,
    code_bits: int = 64,
    itq_iters: int = 50,
    seed: int = 42,
) -> SitqIndex:
    """Learn codes for every vector in ``store``."""
    if code_bits < 1:
        raise ValueError(f"code_bits must be >= 1, got {code_bits}")
    if itq_iters < 1:
        raise ValueError(f"itq_iters must be >= 1, got {itq_iters}")
    if len(store) == 0:
        raise EmptyInputError("cannot index an empty vector store")
    dim_aug = store.dim + 1
    if code_bits > dim_aug:
        logger.warning(
            "code_bits=%d exceeds augmented dim %d; extra bits carry no signal",
            code_bits, dim_aug,
        )
    max_norm = float(store.norms.max())
    if max_norm == 0.0:
        raise DataError("all vectors are zero; nothing to index")

    aug = _augment_data(store.matrix, max_norm)
    mean = aug.mean(axis=0)
    centered = aug - mean

    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    keep = min(code_bits, vt.shape[0])
    projection = np.zeros((dim_aug, code_bits))
    projection[:, :keep] = vt[:keep].T
    v = centered @ projection

    rng = np.random.default_rng(seed)
    rotation, _ = np.linalg.qr(rng.standard_normal((code_bits, code_bits)))
    objective: list[float] = []
    for _ in range(itq_iters):
        b = np.where(v @ rotation >= 0.0, 1.0, -1.0)
        u, _, wt = np.linalg.svd(v.T @ b)
        rotation = u @ wt
        objective.append(float(((v @ rotation - b) ** 2).sum()))

    codes = _pack_bits(v @ rotation >= 0.0)
    return SitqIndex(
        dim_aug=dim_aug,
        max_norm=max_norm,
        mean=mean,
        projection=projection,
        rotation=rotation,
        codes=codes,
        ids=list(store.ids),
        raw=store,
        itq_objective=objective,
    )


def encode_query(index: SitqIndex, q: np.ndarray) -> np.ndarray:
    """Packed code for a query vector (normalized, zero-padded)."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (index.dim_aug - 1,):
        raise DataError(f"query dim {q.shape} does not match store dim {index.dim_aug - 1}")
    norm = np.linalg.norm(q)
    if norm == 0.0:
        raise DataError("cannot search with a zero query vector")
    qa = np.concatenate([q / norm, [0.0]])
    bits = ((qa - index.mean) @ index.projection @ index.rotation) >= 0.0
    return _pack_bits(bits[None, :])[0]


def query(
    index: SitqIndex,
    q: np.ndarray,
    top_n: int = 100,
    probe: int | None = None,
) -> list[Candidate]:
    """Approximate MIPS: Hamming-scan candidates, exact re-rank.

    Returns up to ``top_n`` candidates ordered by exact inner product
    (descending, ties by id). ``probe`` rows with the smallest Hamming
    distance are examined; equal distances are broken by larger stored
    norm first (the better MIPS bet), then id. ``probe`` below ``top_n``
    is raised to it.
    """
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    if probe is None:
        probe = 8 * top_n
    if probe < top_n:
        logger.warning("probe=%d < top_n=%d; raising probe", probe, top_n)
        probe = top_n
    probe = min(probe, len(index))

    qcode = encode_query(index, q)
    hamming = np.bitwise_count(index.codes ^ qcode).sum(axis=1)
    ids_arr = np.asarray(index.ids)
    norms = index.raw.norms[index.store_rows]
    pick = np.lexsort((ids_arr, -norms, hamming))[:probe]

    q64 = np.asarray(q, dtype=np.float64)
    ips = index.raw.matrix[index.store_rows[pick]].astype(np.float64) @ q64
    order = np.lexsort((ids_arr[pick], -ips))[:top_n]
    return [
        Candidate(
            passage_id=str(ids_arr[pick[i]]),
            hamming=int(hamming[pick[i]]),
            inner_product=float(ips[i]),
        )
        for i in order
    ]


def save_index(index: SitqIndex, path: str | Path) -> None:
    """Persist everything but the raw vectors (they live in their own file)."""
    code_bits = index.code_bits
    words = index.codes.shape[1]
    with Path(path).open("wb") as fh:
        fh.write(IDX_MAGIC)
        fh.write(
            struct.pack(
                "<IIIIQd",
                index.dim_aug - 1,
                index.dim_aug,
                code_bits,
                words,
                len(index.ids),
                index.max_norm,
            )
        )
        fh.write(index.mean.astype("<f8").tobytes())
        fh.write(np.ascontiguousarray(index.projection, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(index.rotation, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(index.codes, dtype="<u8").tobytes())
        for pid in index.ids:
            encoded = pid.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)


def load_index(path: str | Path, store: VectorStore) -> SitqIndex:
    """Load a persisted index; ``store`` must contain every indexed id."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(8)
        if magic != IDX_MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        dim, dim_aug, code_bits, words, count, max_norm = struct.unpack(
            "<IIIIQd", fh.read(32)
        )
        if dim != store.dim:
            raise DataError(f"{path}: index dim {dim} != store dim {store.dim}")
        mean = np.frombuffer(fh.read(dim_aug * 8), dtype="<f8").copy()
        projection = (
            np.frombuffer(fh.read(dim_aug * code_bits * 8), dtype="<f8")
            .reshape(dim_aug, code_bits)
            .copy()
        )
        rotation = (
            np.frombuffer(fh.read(code_bits * code_bits * 8), dtype="<f8")
            .reshape(code_bits, code_bits)
            .copy()
        )
        codes = (
            np.frombuffer(fh.read(count * words * 8), dtype="<u8")
            .reshape(count, words)
            .copy()
        )
        ids = []
        for _ in range(count):
            (id_len,) = struct.unpack("<H", fh.read(2))
            ids.append(fh.read(id_len).decode("utf-8"))
    missing = [pid for pid in ids if pid not in store]
    if missing:
        raise DataError(f"{path}: {len(missing)} indexed ids missing from store")
    return SitqIndex(
        dim_aug=dim_aug,
        max_norm=max_norm,
        mean=mean,
        projection=projection,
        rotation=rotation,
        codes=codes,
        ids=ids,
        raw=store,
    )
