"""Capacity-bounded per-class exemplar memory with FIFO eviction and persistence."""

from __future__ import annotations

import struct
import threading
import time
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import (
    ConfigError,
    CorruptSnapshot,
    DataError,
    MissingFile,
    OutOfRange,
    ShapeMismatch,
)
from .knn_core import DEFAULT_QFORMAT, FixedVector, QFormat, quantize_array
from .signal import FilterCoefficients, Label, LabeledWindow, featurize_batch

SAMPLE_BYTES = 2
LABEL_BYTES = 1
INDEX_BYTES = 4
ENTRY_OVERHEAD_BYTES = LABEL_BYTES + INDEX_BYTES
USER_DATA_BUDGET_BYTES = 80 * 1024

SNAPSHOT_MAGIC = b"KNN1"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sBIIBBIQ")  # magic, version, alpha, n, ibits, fbits, count, next_seq
_ENTRY_HEAD = struct.Struct("<BQ")  # label, insertion_seq
_CRC = struct.Struct("<I")


@dataclass(frozen=True, eq=False)
class StoreEntry:
    vector: FixedVector
    label: Label
    insertion_seq: int

    def __eq__(self, other) -> bool:
        if not isinstance(other, StoreEntry):
            return NotImplemented
        return (
            self.vector == other.vector
            and self.label == other.label
            and self.insertion_seq == other.insertion_seq
        )


@dataclass(frozen=True)
class StoreView:
    """Immutable snapshot of a store's contents for concurrent readers."""

    alpha: int
    n: int
    q_format: QFormat
    entries: tuple[StoreEntry, ...]

    def codes(self) -> np.ndarray:
        if not self.entries:
            return np.empty((0, self.n), dtype=np.int16)
        return np.vstack([e.vector.values for e in self.entries])

    def labels(self) -> np.ndarray:
        return np.array([int(e.label) for e in self.entries], dtype=np.int8)


class TrainingStore:
    """Labelled exemplar memory holding at most ``alpha`` entries per class.

    Inserting into a full class evicts that class's oldest entry. Writers
    are serialised by a lock; ``entries`` is replaced wholesale on every
    insert, so a reader holding a previous tuple (or a :meth:`view`) never
    sees a half-applied update.
    """

    def __init__(self, alpha: int, n: int, q_format: QFormat = DEFAULT_QFORMAT):
        if not (isinstance(alpha, (int, np.integer)) and alpha > 0):
            raise ConfigError(f"alpha must be a positive integer, got {alpha!r}")
        if not (isinstance(n, (int, np.integer)) and n > 0):
            raise ConfigError(f"n must be a positive integer, got {n!r}")
        self.alpha = int(alpha)
        self.n = int(n)
        self.q_format = q_format
        self._entries: tuple[StoreEntry, ...] = ()
        self._next_seq = 0
        self._counts = {Label.SEIZURE: 0, Label.NONSEIZURE: 0}
        self._lock = threading.Lock()

    @property
    def entries(self) -> tuple[StoreEntry, ...]:
        return self._entries

    @property
    def next_seq(self) -> int:
        return self._next_seq

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrainingStore):
            return NotImplemented
        return (
            self.alpha == other.alpha
            and self.n == other.n
            and self.q_format == other.q_format
            and self._next_seq == other._next_seq
            and self._entries == other._entries
        )

    def __repr__(self) -> str:
        counts = self.class_counts()
        return (
            f"TrainingStore(alpha={self.alpha}, n={self.n}, q_format={self.q_format}, "
            f"seizure={counts[Label.SEIZURE]}, nonseizure={counts[Label.NONSEIZURE]})"
        )

    def class_counts(self) -> dict[Label, int]:
        return dict(self._counts)

    def _set_entries(self, entries, next_seq: int) -> None:
        self._entries = tuple(entries)
        self._next_seq = next_seq
        self._counts = {Label.SEIZURE: 0, Label.NONSEIZURE: 0}
        for e in self._entries:
            self._counts[e.label] += 1

    def view(self) -> StoreView:
        return StoreView(self.alpha, self.n, self.q_format, self._entries)

    def insert(self, vector: FixedVector, label) -> "TrainingStore":
        label = Label(label)
        if len(vector) != self.n or vector.q_format != self.q_format:
            raise ShapeMismatch(
                f"vector ({len(vector)}, {vector.q_format}) does not match store "
                f"({self.n}, {self.q_format})"
            )
        with self._lock:
            entries = list(self._entries)
            if self._counts[label] >= self.alpha:
                # entries are kept in insertion order, so the first match is the oldest
                oldest = next(i for i, e in enumerate(entries) if e.label == label)
                del entries[oldest]
            else:
                self._counts[label] += 1
            entries.append(StoreEntry(vector, label, self._next_seq))
            self._next_seq += 1
            self._entries = tuple(entries)
        return self

    def copy(self) -> "TrainingStore":
        clone = TrainingStore(self.alpha, self.n, self.q_format)
        clone._set_entries(self._entries, self._next_seq)
        return clone


@dataclass(frozen=True)
class AdaptResult:
    store: TrainingStore
    duration_s: float
    windows: int


def adapt(
    store: TrainingStore,
    user_windows: Sequence[LabeledWindow],
    coeffs: FilterCoefficients,
    q_format: QFormat | None = None,
    features: str = "raw",
) -> AdaptResult:
    """Filter, quantize and insert a user's labelled windows in order.

    The call is all-or-nothing: every window is converted before the first
    insert, so a failing window leaves ``store`` untouched. The reported
    duration covers conversion and insertion only, not file I/O.
    """
    if not user_windows:
        raise DataError("adapt needs at least one labelled window")
    start = time.perf_counter()
    X = np.vstack([lw.window.samples for lw in user_windows])
    labels = [lw.binary_label for lw in user_windows]
    adapt_arrays(store, X, labels, coeffs, q_format, features)
    return AdaptResult(store, time.perf_counter() - start, len(user_windows))


def adapt_arrays(
    store: TrainingStore,
    X: np.ndarray,
    labels: Sequence,
    coeffs: FilterCoefficients,
    q_format: QFormat | None = None,
    features: str = "raw",
) -> TrainingStore:
    """Array form of :func:`adapt`: rows of ``X`` are windows, ``labels`` binary."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise DataError("adapt needs at least one labelled window")
    if len(labels) != X.shape[0]:
        raise ShapeMismatch(f"{X.shape[0]} windows but {len(labels)} labels")
    q_format = q_format or store.q_format
    feats = featurize_batch(X, coeffs, features)
    try:
        codes = quantize_array(feats, q_format)
    except OutOfRange:
        for seq, row in enumerate(feats):
            try:
                quantize_array(row, q_format)
            except OutOfRange as exc:
                raise OutOfRange(exc.index, exc.value, window_seq=seq) from None
        raise
    vectors = [FixedVector(row, q_format) for row in codes]
    for vector, label in zip(vectors, labels):
        store.insert(vector, label)
    return store


# --- memory accounting -------------------------------------------------------


@dataclass(frozen=True)
class MemoryReport:
    vector_bytes: int
    label_bytes: int
    index_bytes: int
    total_bytes: int

    @property
    def fits_budget(self) -> bool:
        return self.total_bytes <= USER_DATA_BUDGET_BYTES


def footprint_for(entries: int, n: int) -> MemoryReport:
    """Bytes needed for ``entries`` exemplars of ``n`` 16-bit features.

    Each entry also carries a 1-byte label and a 4-byte sequence index.
    There is no fixed per-store overhead.
    """
    vector = entries * n * SAMPLE_BYTES
    label = entries * LABEL_BYTES
    index = entries * INDEX_BYTES
    return MemoryReport(vector, label, index, vector + label + index)


def memory_footprint(store: TrainingStore) -> MemoryReport:
    return footprint_for(len(store), store.n)


def max_entries_within_budget(n: int, budget: int = USER_DATA_BUDGET_BYTES) -> int:
    return budget // (n * SAMPLE_BYTES + ENTRY_OVERHEAD_BYTES)


# --- persistence -------------------------------------------------------------


def to_bytes(store: TrainingStore) -> bytes:
    parts = [
        _HEADER.pack(
            SNAPSHOT_MAGIC,
            SNAPSHOT_VERSION,
            store.alpha,
            store.n,
            store.q_format.integer_bits,
            store.q_format.fraction_bits,
            len(store),
            store.next_seq,
        )
    ]
    for e in store.entries:
        parts.append(_ENTRY_HEAD.pack(int(e.label), e.insertion_seq))
        parts.append(e.vector.values.astype("<i2").tobytes())
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def from_bytes(blob: bytes) -> TrainingStore:
    if len(blob) < _HEADER.size + _CRC.size:
        raise CorruptSnapshot(f"truncated: {len(blob)} bytes")
    magic, version, alpha, n, ibits, fbits, count, next_seq = _HEADER.unpack_from(blob)
    if magic != SNAPSHOT_MAGIC:
        raise CorruptSnapshot(f"bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise CorruptSnapshot(f"unsupported version {version}")
    entry_size = _ENTRY_HEAD.size + n * SAMPLE_BYTES
    expected = _HEADER.size + count * entry_size + _CRC.size
    if len(blob) != expected:
        raise CorruptSnapshot(f"length {len(blob)} != expected {expected}")
    body, (crc,) = blob[:-_CRC.size], _CRC.unpack_from(blob, len(blob) - _CRC.size)
    if zlib.crc32(body) != crc:
        raise CorruptSnapshot("checksum mismatch")
    try:
        q_format = QFormat(ibits, fbits)
        store = TrainingStore(alpha, n, q_format)
    except ConfigError as exc:
        raise CorruptSnapshot(str(exc)) from None
    entries = []
    offset = _HEADER.size
    last_seq = -1
    for _ in range(count):
        label, seq = _ENTRY_HEAD.unpack_from(blob, offset)
        offset += _ENTRY_HEAD.size
        values = np.frombuffer(blob, dtype="<i2", count=n, offset=offset)
        offset += n * SAMPLE_BYTES
        if label not in (0, 1):
            raise CorruptSnapshot(f"bad label byte {label}")
        if seq <= last_seq or seq >= next_seq:
            raise CorruptSnapshot("insertion sequence out of order")
        last_seq = seq
        entries.append(StoreEntry(FixedVector(values, q_format), Label(label), seq))
    store._set_entries(entries, next_seq)
    counts = store.class_counts()
    if max(counts.values()) > alpha:
        raise CorruptSnapshot("class count exceeds alpha")
    return store


def snapshot(store: TrainingStore, path) -> Path:
    path = Path(path)
    path.write_bytes(to_bytes(store))
    return path


def restore(path) -> TrainingStore:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    return from_bytes(path.read_bytes())
