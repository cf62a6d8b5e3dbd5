"""Bit-exact binary interchange for externally computed embeddings.

The semantic branch never runs a neural network here; per-sample embeddings
and per-class text embeddings arrive through SEMB files produced by an
external exporter.  The layout is fully little-endian with no padding:

    magic   4 bytes  "SEMB"
    version u16      1
    flags   u16      0
    count   u32      number of records
    dim     u32      vector width
    records count x (id_len: u16, id: id_len UTF-8 bytes, dim x f32)

Readers validate strictly: bad magic, version, flags, truncation, trailing
bytes, duplicate ids, and non-finite floats are all format errors.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import FeatureVector, l2_normalize
from .errors import FormatError, InvalidInput, MissingEmbedding

MAGIC = b"SEMB"
VERSION = 1
_HEADER = struct.Struct("<4sHHII")


@dataclass(frozen=True, eq=False)
class EmbeddingFile:
    """Parsed contents of one SEMB file: ordered ids and their vectors."""

    ids: tuple[str, ...]
    vectors: np.ndarray  # (count, dim) float64 in memory, float32 on disk

    @property
    def count(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


def read_embedding_file(path) -> EmbeddingFile:
    """Parse a SEMB file, validating every structural invariant."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"file too short for header ({len(data)} bytes)", path=path)
    magic, version, flags, count, dim = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", path=path)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", path=path)
    if flags != 0:
        raise FormatError(f"unsupported flags {flags:#06x}", path=path)

    offset = _HEADER.size
    vec_bytes = 4 * dim
    # a record is at least 2 + vec_bytes bytes; reject impossible counts
    # before allocating anything sized by untrusted header fields
    if count * (2 + vec_bytes) > len(data) - offset:
        raise FormatError(
            f"declared {count} records of dim {dim} cannot fit in {len(data)} bytes",
            path=path,
        )
    ids: list[str] = []
    seen: set[str] = set()
    vectors = np.empty((count, dim), dtype=np.float32)
    for rec in range(count):
        if offset + 2 > len(data):
            raise FormatError(f"truncated before record {rec}", path=path)
        (id_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if offset + id_len + vec_bytes > len(data):
            raise FormatError(f"truncated inside record {rec}", path=path)
        try:
            rec_id = data[offset : offset + id_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"record {rec} id is not valid UTF-8", path=path) from exc
        offset += id_len
        if rec_id in seen:
            raise FormatError(f"duplicate id {rec_id!r}", path=path)
        seen.add(rec_id)
        ids.append(rec_id)
        vectors[rec] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += vec_bytes
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after {count} records", path=path)
    if not np.all(np.isfinite(vectors)):
        raise FormatError("non-finite vector entry", path=path)
    out = vectors.astype(np.float64)
    out.setflags(write=False)
    return EmbeddingFile(ids=tuple(ids), vectors=out)


def write_embedding_file(records, path) -> None:
    """Write id -> vector records in the SEMB layout.

    Accepts a mapping or an iterable of (id, vector) pairs; insertion order
    is preserved.  Vectors are stored as little-endian float32.
    """
    if hasattr(records, "items"):
        pairs = list(records.items())
    else:
        pairs = list(records)
    ids = [p[0] for p in pairs]
    if len(set(ids)) != len(ids):
        raise InvalidInput("record ids must be unique")

    dim = None
    encoded: list[tuple[bytes, np.ndarray]] = []
    for rec_id, vec in pairs:
        arr = np.asarray(vec, dtype=np.float64).reshape(-1)
        if dim is None:
            dim = arr.shape[0]
        elif arr.shape[0] != dim:
            raise InvalidInput(
                f"record {rec_id!r} has dim {arr.shape[0]}, expected {dim}"
            )
        with np.errstate(over="ignore"):
            as32 = arr.astype(np.float32)
        if not np.all(np.isfinite(as32)):
            raise InvalidInput(f"record {rec_id!r} is not representable in float32")
        id_bytes = rec_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise InvalidInput(f"id longer than 65535 bytes: {rec_id[:32]!r}...")
        encoded.append((id_bytes, as32))
    if dim is None:
        dim = 0

    chunks = [_HEADER.pack(MAGIC, VERSION, 0, len(encoded), dim)]
    for id_bytes, as32 in encoded:
        chunks.append(struct.pack("<H", len(id_bytes)))
        chunks.append(id_bytes)
        chunks.append(as32.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


@dataclass(frozen=True, eq=False)
class SemanticProvider:
    """Serves per-sample embeddings and optional per-class text embeddings."""

    samples: dict[str, np.ndarray]
    class_text: dict[str, np.ndarray] | None = None
    dim: int = field(default=0)

    @classmethod
    def from_files(cls, embeddings_path, class_text_path=None) -> "SemanticProvider":
        emb = read_embedding_file(embeddings_path)
        samples = {i: emb.vectors[r] for r, i in enumerate(emb.ids)}
        class_text = None
        dim = emb.vectors.shape[1]
        if class_text_path is not None:
            txt = read_embedding_file(class_text_path)
            if txt.count and emb.count and txt.vectors.shape[1] != dim:
                raise InvalidInput(
                    f"class-text dim {txt.vectors.shape[1]} != sample dim {dim}"
                )
            class_text = {i: txt.vectors[r] for r, i in enumerate(txt.ids)}
        return cls(samples=samples, class_text=class_text, dim=dim)

    def missing(self, ids) -> list[str]:
        return [i for i in ids if i not in self.samples]


def semantic_feature(provider: SemanticProvider, sample_id: str) -> FeatureVector:
    """The stored embedding of one sample, l2-normalized.

    A stored zero vector comes back with the zero_norm flag set; a missing id
    raises MissingEmbedding.
    """
    vec = provider.samples.get(sample_id)
    if vec is None:
        raise MissingEmbedding([sample_id])
    return l2_normalize(FeatureVector(vec))
