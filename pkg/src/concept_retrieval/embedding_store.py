"""Loading, validating, normalizing and persisting embedding matrices.

Three on-disk formats are understood:

* the canonical binary layout (``.cret``): magic ``CRET``, u32 version (1),
  u64 row count, u32 dimension, u32 reserved (0), ``n*d`` little-endian
  float32 values in row-major order, then an optional block of ``n``
  newline-separated UTF-8 ids;
* CSV, one embedding per line, with an optional header row whose first
  cell ``id`` marks the first column as row identifiers;
* NPY (format version 1.0) holding a single 2-D float32/float64 array.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmbeddingFormatError,
    MalformedHeaderError,
    NonFiniteValueError,
    RaggedRowsError,
    TooFewRowsError,
    ZeroNormRowError,
)

MAGIC = b"CRET"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQII")  # magic, version, n, d, reserved

DEFAULT_SAMPLE_PAIRS = 100_000
MIN_SAMPLE_PAIRS = 1000

NORM_TOL = 1e-6
ZERO_NORM = 1e-8


@dataclass(frozen=True, eq=False)
class EmbeddingDataset:
    """An ``n x d`` embedding matrix with one string id per row.

    ``suppressed`` marks rows that collapsed to (numerically) zero norm
    during concept suppression; such rows are skipped by searches.
    """

    ids: tuple
    vectors: np.ndarray
    normalized: bool = False
    suppressed: np.ndarray = field(default=None)

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {vectors.shape}")
        n, d = vectors.shape
        if n < 2 or d < 2:
            raise ValueError(f"need n >= 2 and d >= 2, got n={n}, d={d}")
        if not np.all(np.isfinite(vectors)):
            bad = int(np.argwhere(~np.isfinite(vectors))[0, 0])
            raise ValueError(f"non-finite value in row {bad}")
        ids = tuple(str(i) for i in self.ids)
        if len(ids) != n:
            raise ValueError(f"{len(ids)} ids for {n} rows")
        if len(set(ids)) != n:
            raise ValueError("ids must be unique")
        suppressed = (np.zeros(n, dtype=bool) if self.suppressed is None
                      else np.array(self.suppressed, dtype=bool))
        if suppressed.shape != (n,):
            raise ValueError("suppressed mask must have one entry per row")
        if self.normalized:
            norms = np.linalg.norm(vectors, axis=1)
            live = ~suppressed
            if np.any(np.abs(norms[live] - 1.0) > NORM_TOL):
                raise ValueError("dataset flagged normalized but has non-unit rows")
            if np.any(norms[suppressed] >= ZERO_NORM):
                raise ValueError("rows flagged suppressed must have norm < 1e-8")
        vectors.setflags(write=False)
        suppressed.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "suppressed", suppressed)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def index_of(self, row_id: str) -> int:
        try:
            return self.ids.index(str(row_id))
        except ValueError:
            raise KeyError(f"unknown id {row_id!r}") from None

    def replace_vectors(self, vectors, suppressed=None) -> "EmbeddingDataset":
        """Working-copy constructor: same ids, new vectors, unit-norm check skipped."""
        out = object.__new__(EmbeddingDataset)
        vectors = np.array(vectors, dtype=np.float64)
        vectors.setflags(write=False)
        mask = np.zeros(len(self.ids), dtype=bool) if suppressed is None else np.array(suppressed, dtype=bool)
        mask.setflags(write=False)
        object.__setattr__(out, "ids", self.ids)
        object.__setattr__(out, "vectors", vectors)
        object.__setattr__(out, "normalized", False)
        object.__setattr__(out, "suppressed", mask)
        return out


@dataclass(frozen=True)
class SimilarityStats:
    """Mean and spread of pairwise cosine similarity over a dataset."""

    mu: float
    sigma: float
    sample_pairs: int


# --- loading -----------------------------------------------------------------

def load_embeddings(path, format=None) -> EmbeddingDataset:
    """Read an embedding file.

    ``format`` is one of ``"binary"``, ``"csv"`` or ``"npy"``; when omitted
    it is inferred from the file suffix (anything other than ``.csv`` /
    ``.npy`` is read as binary). The result is never normalized.
    """
    path = Path(path)
    if format is None:
        format = {".csv": "csv", ".npy": "npy"}.get(path.suffix.lower(), "binary")
    if format == "binary":
        ids, vectors = _read_binary(path.read_bytes())
    elif format == "csv":
        ids, vectors = _read_csv(path.read_text(encoding="utf-8"))
    elif format == "npy":
        ids, vectors = _read_npy(path)
    else:
        raise ValueError(f"unknown format {format!r}")
    return EmbeddingDataset(ids=ids, vectors=vectors, normalized=False)


def _check_rows(vectors: np.ndarray, row_base: int = 0) -> None:
    if vectors.shape[0] < 2:
        raise TooFewRowsError(f"need at least 2 embeddings, found {vectors.shape[0]}")
    if vectors.ndim != 2 or vectors.shape[1] < 2:
        raise RaggedRowsError("embeddings need at least 2 dimensions")
    finite = np.isfinite(vectors)
    if not finite.all():
        row = int(np.argwhere(~finite)[0, 0])
        raise NonFiniteValueError("non-finite value", row=row + row_base)


def _read_binary(blob: bytes):
    if len(blob) < _HEADER.size:
        raise MalformedHeaderError(f"file shorter than the {_HEADER.size}-byte header", offset=len(blob))
    magic, version, n, d, reserved = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise MalformedHeaderError(f"bad magic {magic!r}", offset=0)
    if version != FORMAT_VERSION:
        raise MalformedHeaderError(f"unsupported version {version}", offset=4)
    if reserved != 0:
        raise MalformedHeaderError("reserved field must be 0", offset=20)
    payload = n * d * 4
    end = _HEADER.size + payload
    if len(blob) < end:
        short_row = (len(blob) - _HEADER.size) // (4 * d) if d else 0
        raise RaggedRowsError(
            f"payload truncated: expected {payload} bytes for {n}x{d}",
            row=short_row, offset=len(blob))
    vectors = np.frombuffer(blob, dtype="<f4", count=n * d, offset=_HEADER.size)
    vectors = vectors.reshape(n, d).astype(np.float64)
    if n < 2:
        raise TooFewRowsError(f"need at least 2 embeddings, found {n}")
    finite = np.isfinite(vectors)
    if not finite.all():
        row, col = (int(v) for v in np.argwhere(~finite)[0])
        raise NonFiniteValueError("non-finite value", row=row,
                                  offset=_HEADER.size + 4 * (row * d + col))
    tail = blob[end:]
    if tail.strip(b"\n"):
        try:
            ids = tail.decode("utf-8").rstrip("\n").split("\n")
        except UnicodeDecodeError as exc:
            raise MalformedHeaderError("id section is not UTF-8", offset=end + exc.start) from None
        if len(ids) != n:
            raise MalformedHeaderError(f"id section has {len(ids)} entries for {n} rows", offset=end)
    else:
        ids = [str(i) for i in range(n)]
    return ids, vectors


def _read_csv(text: str):
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise TooFewRowsError("empty CSV")
    has_ids = False
    if rows[0][0].strip().lower() == "id":
        has_ids = True
        rows = rows[1:]
    elif not _is_number(rows[0][0]):
        raise MalformedHeaderError(
            f"header cell {rows[0][0]!r} is not 'id' and row is not numeric", row=0)
    # data row numbers are reported relative to the file, header included
    row_base = 1 if has_ids else 0
    width = None
    ids, values = [], []
    for i, row in enumerate(rows):
        cells = row[1:] if has_ids else row
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise RaggedRowsError(f"expected {width} values, found {len(cells)}", row=i + row_base)
        try:
            parsed = [float(c) for c in cells]
        except ValueError:
            raise EmbeddingFormatError("unparseable number", row=i + row_base) from None
        if not all(math.isfinite(v) for v in parsed):
            raise NonFiniteValueError("non-finite value", row=i + row_base)
        values.append(parsed)
        ids.append(row[0].strip() if has_ids else str(i))
    vectors = np.asarray(values, dtype=np.float64)
    if vectors.shape[0] < 2:
        raise TooFewRowsError(f"need at least 2 embeddings, found {vectors.shape[0]}")
    if vectors.shape[1] < 2:
        raise RaggedRowsError("embeddings need at least 2 dimensions")
    return ids, vectors


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _read_npy(path: Path):
    with open(path, "rb") as fh:
        try:
            version = np.lib.format.read_magic(fh)
        except ValueError as exc:
            raise MalformedHeaderError(f"not an NPY file: {exc}", offset=0) from None
        if version != (1, 0):
            raise MalformedHeaderError(f"NPY version {version} unsupported, need 1.0", offset=6)
        try:
            shape, fortran, dtype = np.lib.format.read_array_header_1_0(fh)
        except ValueError as exc:
            raise MalformedHeaderError(f"bad NPY header: {exc}", offset=8) from None
    if len(shape) != 2:
        raise MalformedHeaderError(f"expected a 2-D array, got shape {shape}", offset=8)
    if dtype not in (np.dtype("<f4"), np.dtype(">f4"), np.dtype("<f8"), np.dtype(">f8")):
        raise MalformedHeaderError(f"expected float32/float64, got {dtype}", offset=8)
    array = np.load(path, allow_pickle=False)
    vectors = np.asarray(array, dtype=np.float64)
    _check_rows(vectors)
    return [str(i) for i in range(vectors.shape[0])], vectors


def npy_dtype(path) -> np.dtype:
    """dtype stored in an NPY file, read from the header only."""
    with open(path, "rb") as fh:
        np.lib.format.read_magic(fh)
        _, _, dtype = np.lib.format.read_array_header_1_0(fh)
    return dtype


# --- saving ------------------------------------------------------------------

def save_embeddings(ds: EmbeddingDataset, path, format="binary", write_ids=True) -> None:
    path = Path(path)
    if format == "binary":
        path.write_bytes(to_binary(ds, write_ids=write_ids))
    elif format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id"] + [f"x{j}" for j in range(ds.d)])
            for row_id, row in zip(ds.ids, ds.vectors):
                writer.writerow([row_id] + [repr(float(v)) for v in row])
    elif format == "npy":
        np.save(path, ds.vectors.astype(np.float32), allow_pickle=False)
    else:
        raise ValueError(f"unknown format {format!r}")


def to_binary(ds: EmbeddingDataset, write_ids=True) -> bytes:
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, ds.n, ds.d, 0)
    payload = np.ascontiguousarray(ds.vectors, dtype="<f4").tobytes()
    tail = b""
    if write_ids:
        if any("\n" in i for i in ds.ids):
            raise ValueError("ids may not contain newlines")
        tail = "\n".join(ds.ids).encode("utf-8") + b"\n"
    return header + payload + tail


# --- normalization and statistics -------------------------------------------

def normalize_rows(ds: EmbeddingDataset) -> EmbeddingDataset:
    """Scale every row to unit Euclidean norm."""
    norms = np.linalg.norm(ds.vectors, axis=1)
    zero = np.flatnonzero(norms < ZERO_NORM)
    if zero.size:
        raise ZeroNormRowError(ds.ids[zero[0]])
    return EmbeddingDataset(ids=ds.ids, vectors=ds.vectors / norms[:, None], normalized=True)


def estimate_similarity_stats(ds: EmbeddingDataset, sample_pairs: int = DEFAULT_SAMPLE_PAIRS,
                              seed: int = 0) -> SimilarityStats:
    """Mean/std of cosine similarity over random distinct row pairs.

    When the dataset has no more than ``max(sample_pairs, 1000)`` pairs, every
    pair is used exactly once instead of sampling. Requests below 1000 pairs
    are raised to 1000 so the estimate has a usable floor.
    """
    if sample_pairs < 1:
        raise ValueError("sample_pairs must be >= 1")
    if not ds.normalized:
        raise ValueError("dataset must be normalized")
    n = ds.n
    if n < 2:
        raise ValueError("need at least two rows")
    total = n * (n - 1) // 2
    want = max(int(sample_pairs), MIN_SAMPLE_PAIRS)
    x = ds.vectors
    if total <= want:
        i, j = np.triu_indices(n, k=1)
        sims = _pair_sims(x, i, j)
        count = total
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, size=want)
        j = (i + rng.integers(1, n, size=want)) % n
        sims = _pair_sims(x, i, j)
        count = want
    sims = np.clip(sims, -1.0, 1.0)
    return SimilarityStats(mu=float(sims.mean()), sigma=float(sims.std()), sample_pairs=int(count))


def _pair_sims(x, i, j, chunk=65536):
    out = np.empty(len(i))
    for start in range(0, len(i), chunk):
        sl = slice(start, start + chunk)
        out[sl] = np.einsum("ij,ij->i", x[i[sl]], x[j[sl]])
    return out
