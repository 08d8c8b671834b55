"""Integer kNN datapath: quantization, squared distance, comparison, k-selection, voting.

Everything here is pure. Distances are exact integers and the square root of
the Euclidean norm is never taken: the ordering of neighbours is invariant
under it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .exceptions import (
    ConfigError,
    DimensionMismatch,
    EmptyNeighborSet,
    EmptyStore,
    OutOfRange,
)
from .signal import EegWindow, Label

WORD_BITS = 16
ACC_BITS = 64
_ACC_MASK = (1 << ACC_BITS) - 1


@dataclass(frozen=True)
class QFormat:
    """Signed 16-bit fixed point, ``integer_bits.fraction_bits``.

    ``integer_bits`` includes the sign bit.
    """

    integer_bits: int = 13
    fraction_bits: int = 3

    def __post_init__(self):
        if self.integer_bits < 1 or self.fraction_bits < 0:
            raise ConfigError(f"invalid q-format {self}")
        if self.integer_bits + self.fraction_bits != WORD_BITS:
            raise ConfigError(
                f"q-format {self.integer_bits}.{self.fraction_bits} must total {WORD_BITS} bits"
            )

    @property
    def scale(self) -> int:
        return 1 << self.fraction_bits

    @property
    def min_code(self) -> int:
        return -(1 << (WORD_BITS - 1))

    @property
    def max_code(self) -> int:
        return (1 << (WORD_BITS - 1)) - 1

    @property
    def resolution(self) -> float:
        return 1.0 / self.scale

    @property
    def max_magnitude(self) -> float:
        return self.max_code / self.scale

    def __str__(self) -> str:
        return f"{self.integer_bits}.{self.fraction_bits}"

    @classmethod
    def parse(cls, text: str) -> "QFormat":
        try:
            i, f = text.split(".")
            return cls(int(i), int(f))
        except ValueError:
            raise ConfigError(f"q-format must look like '13.3', got {text!r}") from None


DEFAULT_QFORMAT = QFormat()


@dataclass(frozen=True, eq=False)
class FixedVector:
    values: np.ndarray
    q_format: QFormat = DEFAULT_QFORMAT

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 1:
            raise DimensionMismatch(f"fixed vector must be 1-D, got shape {values.shape}")
        bad = (values < self.q_format.min_code) | (values > self.q_format.max_code)
        if bad.any():
            index = int(np.flatnonzero(bad)[0])
            raise OutOfRange(index, float(values[index]))
        values = values.astype(np.int16, copy=True)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FixedVector):
            return NotImplemented
        return self.q_format == other.q_format and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.q_format, self.values.tobytes()))


def quantize_array(samples, q_format: QFormat = DEFAULT_QFORMAT) -> np.ndarray:
    """Round-half-even to fixed-point codes; works on any array shape.

    Raises ``OutOfRange`` for the first (flat-order) sample whose code does
    not fit the signed word.
    """
    samples = np.asarray(samples, dtype=float)
    # scaling by a power of two is exact in binary floating point
    codes = np.rint(samples * q_format.scale)
    bad = (codes < q_format.min_code) | (codes > q_format.max_code) | ~np.isfinite(codes)
    if bad.any():
        flat = int(np.flatnonzero(bad.ravel())[0])
        index = flat % samples.shape[-1] if samples.ndim else 0
        raise OutOfRange(index, float(samples.ravel()[flat]))
    return codes.astype(np.int16)


def quantize(window: EegWindow | np.ndarray, q_format: QFormat = DEFAULT_QFORMAT) -> FixedVector:
    samples = window.samples if isinstance(window, EegWindow) else window
    return FixedVector(quantize_array(samples, q_format), q_format)


def dequantize(vector: FixedVector) -> np.ndarray:
    return vector.values.astype(float) / vector.q_format.scale


def squared_distance(a: FixedVector, b: FixedVector) -> int:
    """Exact sum of squared code differences."""
    if len(a) != len(b):
        raise DimensionMismatch(f"vector lengths differ: {len(a)} vs {len(b)}")
    if a.q_format != b.q_format:
        raise DimensionMismatch(f"q-formats differ: {a.q_format} vs {b.q_format}")
    diff = a.values.astype(np.int64) - b.values.astype(np.int64)
    # |diff| <= 2**16, so each term is <= 2**32 and n terms fit int64 for n < 2**31
    return int(np.dot(diff, diff))


def squared_distances_batch(Q: np.ndarray, S: np.ndarray) -> np.ndarray:
    """All-pairs squared distances between code rows of ``Q`` and ``S`` as int64.

    Uses ``|q|^2 + |s|^2 - 2 q.s`` in float64. Every intermediate is an
    integer below ``4 * n * 2**30``; for ``n < 2**21`` that stays under
    ``2**53`` so the float BLAS result is exact.
    """
    Q = np.atleast_2d(Q).astype(np.float64)
    S = np.atleast_2d(S).astype(np.float64)
    n = Q.shape[1]
    if S.shape[1] != n:
        raise DimensionMismatch(f"feature lengths differ: {n} vs {S.shape[1]}")
    if n >= 1 << 21:
        raise DimensionMismatch("feature length too large for exact float accumulation")
    qq = np.einsum("ij,ij->i", Q, Q)
    ss = np.einsum("ij,ij->i", S, S)
    d = qq[:, None] + ss[None, :] - 2.0 * (Q @ S.T)
    return d.astype(np.int64)


class Ordering(enum.IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


def compare_const_time(d1: int, d2: int) -> Ordering:
    """Compare two unsigned 64-bit distances by one's-complement addition.

    ``d1 + ~d2`` carries out of the word iff ``d1 > d2`` and leaves the
    all-ones word (negative zero) iff ``d1 == d2``. The same four word
    operations run for every operand pair, with no data-dependent branch
    before the final enum lookup.
    """
    if not (0 <= d1 <= _ACC_MASK and 0 <= d2 <= _ACC_MASK):
        raise OutOfRange(0, float(max(d1, d2)))
    total = d1 + (d2 ^ _ACC_MASK)
    greater = total >> ACC_BITS
    equal = int((total & _ACC_MASK) == _ACC_MASK) & (greater ^ 1)
    return Ordering(greater - (1 - greater - equal))


@dataclass(frozen=True)
class Neighbor:
    distance: int
    label: Label
    store_index: int


@dataclass(frozen=True)
class NeighborSet:
    entries: tuple[Neighbor, ...]
    k: int

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def labels(self) -> list[Label]:
        return [e.label for e in self.entries]


def _check_k(k: int) -> None:
    if not (isinstance(k, (int, np.integer)) and k > 0 and k % 2 == 1):
        raise ConfigError(f"k must be a positive odd integer, got {k!r}")


def select_k_nearest(query: FixedVector, store, k: int) -> NeighborSet:
    """Linear scan with insertion into a k-bounded sorted buffer.

    ``store`` is anything exposing ``entries`` whose items have ``vector``
    and ``label`` (a :class:`~seizknn.model_store.TrainingStore` or a view of
    one). Order is ``(distance, store_index)`` ascending. Each candidate
    costs one comparison against the current k-th entry and at most k shift
    steps.
    """
    _check_k(k)
    entries = store.entries
    if not entries:
        raise EmptyStore("cannot select neighbours from an empty store")
    buffer: list[Neighbor] = []
    for index, entry in enumerate(entries):
        d = squared_distance(query, entry.vector)
        if len(buffer) == k and compare_const_time(d, buffer[-1].distance) is not Ordering.LESS:
            continue
        pos = len(buffer)
        # strict LESS keeps earlier (lower-index) entries ahead on ties
        while pos > 0 and compare_const_time(d, buffer[pos - 1].distance) is Ordering.LESS:
            pos -= 1
        buffer.insert(pos, Neighbor(d, entry.label, index))
        if len(buffer) > k:
            buffer.pop()
    return NeighborSet(tuple(buffer), k)


@dataclass(frozen=True)
class Vote:
    label: Label
    confidence: Fraction


def vote(neighbors: NeighborSet | Sequence[Neighbor]) -> Vote:
    """Majority label; an exact tie goes to the single nearest entry."""
    entries = neighbors.entries if isinstance(neighbors, NeighborSet) else tuple(neighbors)
    if not entries:
        raise EmptyNeighborSet("no neighbours to vote on")
    total = len(entries)
    seizure = sum(1 for e in entries if e.label == Label.SEIZURE)
    if 2 * seizure > total:
        label = Label.SEIZURE
    elif 2 * seizure < total:
        label = Label.NONSEIZURE
    else:
        label = entries[0].label
    count = seizure if label == Label.SEIZURE else total - seizure
    return Vote(label, Fraction(count, total))


def select_k_nearest_batch(D: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest columns per row of a distance matrix.

    A stable sort reproduces the ``(distance, store_index)`` tie rule of
    :func:`select_k_nearest`.
    """
    _check_k(k)
    return np.argsort(D, axis=1, kind="stable")[:, :k]


def vote_batch(neighbor_labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`vote` over rows of neighbour labels (nearest first).

    Returns ``(labels, seizure_votes)``; confidence is the vote count of the
    returned label divided by the row length.
    """
    neighbor_labels = np.asarray(neighbor_labels)
    total = neighbor_labels.shape[1]
    seizure = (neighbor_labels == Label.SEIZURE).sum(axis=1)
    labels = np.where(
        2 * seizure > total,
        Label.SEIZURE,
        np.where(2 * seizure < total, Label.NONSEIZURE, neighbor_labels[:, 0]),
    ).astype(np.int8)
    return labels, seizure
