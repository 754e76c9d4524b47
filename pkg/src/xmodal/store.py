"""On-disk embedding dataset: JSONL manifest + binary f32 matrix.

A store directory holds two files:

* ``manifest.jsonl`` -- one JSON object per line, UTF-8, keys exactly
  ``{"sample_id", "clip_id", "modality", "labels", "split", "embedding_model"}``.
* ``embeddings.xmeb`` -- little-endian: magic ``XMEB`` (4 bytes),
  version u16 = 1, dim u32, count u64, then count x dim IEEE-754 f32
  row-major.  Total size must equal ``18 + 4 * dim * count`` bytes.

Manifest line i describes matrix row i; every view keeps that alignment.
Stores are immutable after load and safe for concurrent readers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AmbiguousPairError,
    CorruptStoreError,
    FormatError,
    UnsupportedFormatError,
    ValidationError,
)

MAGIC = b"XMEB"
VERSION = 1
_HEADER = struct.Struct("<4sHIQ")  # magic, version, dim, count

MODALITIES = ("audio", "image")
SPLITS = ("train", "val", "test")

# Published embedding models and their output dimensions; stores tagged with
# one of these must match, anything else is unconstrained.
KNOWN_MODEL_DIMS = {
    "vgg16": 512,
    "resnet50": 2048,
    "openl3-image": 8192,
    "vggish": 128,
    "yamnet": 1024,
    "openl3-audio": 6144,
}

MANIFEST_KEYS = frozenset(
    {"sample_id", "clip_id", "modality", "labels", "split", "embedding_model"}
)


@dataclass(frozen=True)
class SampleMeta:
    """Per-row metadata; ``labels`` are ontology ids, never display names."""

    sample_id: str
    clip_id: str
    modality: str
    labels: tuple[str, ...]
    split: str
    embedding_model: str


class EmbeddingStore:
    """Validated, immutable pairing of a manifest with its f32 matrix."""

    def __init__(self, metas: list[SampleMeta] | tuple[SampleMeta, ...], matrix: np.ndarray):
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        _validate(tuple(metas), matrix)
        self.metas: tuple[SampleMeta, ...] = tuple(metas)
        self.matrix = matrix
        self.matrix.setflags(write=False)

    @property
    def count(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.count

    def filter_split(self, split: str) -> "EmbeddingStore":
        """Row-aligned view of the records in one split (may be empty)."""
        if split not in SPLITS:
            raise ValidationError(f"unknown split {split!r}, expected one of {SPLITS}")
        keep = [i for i, m in enumerate(self.metas) if m.split == split]
        return self.select(keep)

    def select(self, rows: list[int]) -> "EmbeddingStore":
        """View of the given rows, in the given order."""
        metas = [self.metas[i] for i in rows]
        matrix = self.matrix[np.asarray(rows, dtype=np.intp)].reshape(len(rows), self.dim)
        return EmbeddingStore(metas, matrix)

    def modality(self) -> str:
        """The single modality of this store; error if rows are mixed."""
        kinds = {m.modality for m in self.metas}
        if len(kinds) != 1:
            raise ValidationError(f"store holds {len(kinds)} modalities, expected exactly 1")
        return next(iter(kinds))


@dataclass(frozen=True)
class PairedDataset:
    """Audio/image rows matched on clip identity, sorted by clip_id."""

    audio_store: EmbeddingStore
    image_store: EmbeddingStore
    pairs: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.pairs)

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-aligned (audio, image) matrices, pair i on row i."""
        a_idx = np.asarray([p[0] for p in self.pairs], dtype=np.intp)
        v_idx = np.asarray([p[1] for p in self.pairs], dtype=np.intp)
        return self.audio_store.matrix[a_idx], self.image_store.matrix[v_idx]


def _validate(metas: tuple[SampleMeta, ...], matrix: np.ndarray) -> None:
    if matrix.ndim != 2:
        raise FormatError(f"matrix must be 2-D, got shape {matrix.shape}")
    count, dim = matrix.shape
    if dim < 1:
        raise FormatError("matrix must have at least one column")
    if len(metas) != count:
        raise FormatError(
            f"manifest has {len(metas)} records but matrix has {count} rows"
        )
    bad = ~np.isfinite(matrix)
    if bad.any():
        row = int(np.argwhere(bad)[0][0])
        raise ValidationError(f"non-finite embedding value at row {row}")
    seen: set[str] = set()
    for i, m in enumerate(metas):
        if m.sample_id in seen:
            raise ValidationError(f"duplicate sample_id {m.sample_id!r} at row {i}")
        seen.add(m.sample_id)
        if not m.labels:
            raise ValidationError(f"row {i} ({m.sample_id!r}) has no labels")
        if m.modality not in MODALITIES:
            raise ValidationError(f"row {i} has unknown modality {m.modality!r}")
        if m.split not in SPLITS:
            raise ValidationError(f"row {i} has unknown split {m.split!r}")
        expected = KNOWN_MODEL_DIMS.get(m.embedding_model)
        if expected is not None and expected != dim:
            raise ValidationError(
                f"row {i}: model {m.embedding_model!r} is {expected}-dim, store is {dim}-dim"
            )


def write_store(metas: list[SampleMeta], matrix: np.ndarray, path: str | Path) -> None:
    """Write a validated store directory; re-reading is bit-identical."""
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    _validate(tuple(metas), matrix)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / "manifest.jsonl", "w", encoding="utf-8") as fh:
        for m in metas:
            fh.write(
                json.dumps(
                    {
                        "sample_id": m.sample_id,
                        "clip_id": m.clip_id,
                        "modality": m.modality,
                        "labels": list(m.labels),
                        "split": m.split,
                        "embedding_model": m.embedding_model,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
    count, dim = matrix.shape
    with open(path / "embeddings.xmeb", "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, count))
        fh.write(matrix.astype("<f4", copy=False).tobytes())


def read_store(path: str | Path) -> EmbeddingStore:
    """Read and validate a store directory written by :func:`write_store`."""
    path = Path(path)
    raw = (path / "embeddings.xmeb").read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptStoreError(f"{path}: file shorter than the 18-byte header")
    magic, version, dim, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise UnsupportedFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedFormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * dim * count
    if len(raw) != expected:
        raise CorruptStoreError(
            f"{path}: payload is {len(raw)} bytes, header promises {expected}"
        )
    matrix = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(count, dim)

    metas: list[SampleMeta] = []
    with open(path / "manifest.jsonl", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: manifest line {lineno} is not JSON: {exc}") from exc
            if set(obj) != MANIFEST_KEYS:
                raise FormatError(
                    f"{path}: manifest line {lineno} has keys {sorted(obj)}, "
                    f"expected {sorted(MANIFEST_KEYS)}"
                )
            metas.append(
                SampleMeta(
                    sample_id=obj["sample_id"],
                    clip_id=obj["clip_id"],
                    modality=obj["modality"],
                    labels=tuple(obj["labels"]),
                    split=obj["split"],
                    embedding_model=obj["embedding_model"],
                )
            )
    if len(metas) != count:
        raise FormatError(
            f"{path}: manifest has {len(metas)} lines, matrix header promises {count}"
        )
    return EmbeddingStore(metas, np.array(matrix))  # copy: buffer of raw is read-only


def pair_by_clip(audio_store: EmbeddingStore, image_store: EmbeddingStore) -> PairedDataset:
    """Match rows across modalities on clip_id, deterministically sorted.

    Exactly the clip ids present in both stores contribute one pair each.
    A clip id occurring twice within one modality is an error: silently
    picking one row would bias pair statistics.
    """
    a_by_clip = _index_by_clip(audio_store, "audio")
    v_by_clip = _index_by_clip(image_store, "image")
    shared = sorted(a_by_clip.keys() & v_by_clip.keys())
    pairs = []
    for clip in shared:
        ai, vi = a_by_clip[clip], v_by_clip[clip]
        ma, mv = audio_store.metas[ai], image_store.metas[vi]
        if set(ma.labels) != set(mv.labels) or ma.split != mv.split:
            raise ValidationError(
                f"clip {clip!r}: paired rows disagree on labels or split"
            )
        pairs.append((ai, vi))
    return PairedDataset(audio_store, image_store, tuple(pairs))


def _index_by_clip(store: EmbeddingStore, name: str) -> dict[str, int]:
    index: dict[str, int] = {}
    for i, m in enumerate(store.metas):
        if m.clip_id in index:
            raise AmbiguousPairError(
                f"clip_id {m.clip_id!r} occurs more than once in the {name} store"
            )
        index[m.clip_id] = i
    return index


def filter_split(store: EmbeddingStore, split: str) -> EmbeddingStore:
    """Functional alias for :meth:`EmbeddingStore.filter_split`."""
    return store.filter_split(split)
