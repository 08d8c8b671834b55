"""Streaming detector: windowing, the filter -> quantize -> kNN -> vote chain, output frames."""

from __future__ import annotations

import functools
import math
import struct
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable

import numpy as np

from .exceptions import (
    BadCrc,
    BadSync,
    ConfigError,
    FrameError,
    NotTrained,
    OutOfRange,
    ShortFrame,
)
from .knn_core import (
    DEFAULT_QFORMAT,
    FixedVector,
    QFormat,
    quantize_array,
    select_k_nearest,
    select_k_nearest_batch,
    squared_distances_batch,
    vote,
    vote_batch,
)
from .signal import (
    DEFAULT_SAMPLE_RATE_HZ,
    DEFAULT_WINDOW_LEN,
    FEATURE_MODES,
    EegWindow,
    FilterCoefficients,
    FilterSpec,
    Label,
    design_lowpass,
    featurize,
    featurize_batch,
)


@dataclass(frozen=True)
class DetectorConfig:
    k: int = 3
    alpha: int = 30
    window_len: int = DEFAULT_WINDOW_LEN
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    filter: FilterSpec = field(default_factory=FilterSpec)
    q_format: QFormat = DEFAULT_QFORMAT
    threshold_confidence: Fraction = Fraction(1, 2)
    features: str = "raw"

    def __post_init__(self):
        object.__setattr__(self, "threshold_confidence", Fraction(self.threshold_confidence))
        if self.filter.sample_rate_hz != self.sample_rate_hz:
            object.__setattr__(
                self, "filter", replace(self.filter, sample_rate_hz=self.sample_rate_hz)
            )

    def validate(self) -> "DetectorConfig":
        if not (isinstance(self.k, (int, np.integer)) and self.k > 0 and self.k % 2 == 1):
            raise ConfigError(f"k must be a positive odd integer, got {self.k!r}")
        if not (isinstance(self.alpha, (int, np.integer)) and self.alpha > 0):
            raise ConfigError(f"alpha must be a positive integer, got {self.alpha!r}")
        if self.k > 2 * self.alpha:
            raise ConfigError(f"k={self.k} exceeds the store capacity 2*alpha={2 * self.alpha}")
        if not Fraction(1, 2) <= self.threshold_confidence <= 1:
            raise ConfigError(
                f"threshold_confidence must lie in [1/2, 1], got {self.threshold_confidence}"
            )
        if self.window_len < 2:
            raise ConfigError("window_len must be at least 2")
        if self.features not in FEATURE_MODES:
            raise ConfigError(f"features must be one of {FEATURE_MODES}")
        self.filter.validate()
        return self

    @property
    def feature_len(self) -> int:
        return self.window_len if self.features == "raw" else 5

    @property
    def window_period_s(self) -> float:
        return self.window_len / self.sample_rate_hz

    def coefficients(self) -> FilterCoefficients:
        return _lowpass(self.filter)


@functools.lru_cache(maxsize=32)
def _lowpass(spec: FilterSpec) -> FilterCoefficients:
    return design_lowpass(spec)


def _apply_threshold(label: Label, confidence: Fraction, threshold: Fraction):
    if label == Label.SEIZURE and confidence < threshold:
        return Label.NONSEIZURE, 1 - confidence
    return label, confidence


def classify_window(window: EegWindow, store, config: DetectorConfig) -> tuple[Label, Fraction]:
    """Label one window against ``store``.

    A seizure majority below ``threshold_confidence`` is reported as
    non-seizure, with the non-seizure vote share as its confidence.
    """
    if not store.entries:
        raise NotTrained("the training store is empty")
    features = featurize(window, config.coefficients(), config.features)
    query = FixedVector(quantize_array(features, config.q_format), config.q_format)
    result = vote(select_k_nearest(query, store, config.k))
    return _apply_threshold(result.label, result.confidence, config.threshold_confidence)


def classify_batch(X: np.ndarray, store, config: DetectorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`classify_window` over rows of ``X``.

    Returns ``(labels, confidences)`` as int8 and float64 arrays. Labels
    and vote counts are identical to the per-window path.
    """
    entries = store.entries
    if not entries:
        raise NotTrained("the training store is empty")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    codes = quantize_array(featurize_batch(X, config.coefficients(), config.features), config.q_format)
    S = np.vstack([e.vector.values for e in entries])
    store_labels = np.array([int(e.label) for e in entries], dtype=np.int8)
    nearest = select_k_nearest_batch(squared_distances_batch(codes, S), config.k)
    labels, seizure_votes = vote_batch(store_labels[nearest])
    total = nearest.shape[1]
    votes = np.where(labels == Label.SEIZURE, seizure_votes, total - seizure_votes)
    # threshold test in integers: votes/total < p/q  <=>  votes*q < p*total
    th = config.threshold_confidence
    demote = (labels == Label.SEIZURE) & (votes * th.denominator < th.numerator * total)
    labels = np.where(demote, Label.NONSEIZURE, labels).astype(np.int8)
    votes = np.where(demote, total - votes, votes)
    return labels, votes / total


# --- streaming ---------------------------------------------------------------


@dataclass(frozen=True)
class DetectionEvent:
    timestamp_ms: int
    label: Label
    confidence: Fraction
    window_seq: int
    latency_us: float = 0.0

    def to_json(self, include_latency: bool = True) -> dict:
        out = {
            "window_seq": self.window_seq,
            "timestamp_ms": self.timestamp_ms,
            "label": self.label.name.lower(),
            "confidence": float(self.confidence),
        }
        if include_latency:
            out["latency_us"] = round(self.latency_us, 3)
        return out

    def same_decision(self, other: "DetectionEvent") -> bool:
        """Equality ignoring the measured latency."""
        return (
            self.timestamp_ms == other.timestamp_ms
            and self.label == other.label
            and self.confidence == other.confidence
            and self.window_seq == other.window_seq
        )


class Detector:
    """Accumulates samples into non-overlapping windows and classifies each one.

    Not thread-safe: calls to :meth:`push_samples` must be serialised.
    """

    def __init__(self, store, config: DetectorConfig | None = None, start_timestamp_ms: int = 0):
        self.store = store
        self.config = (config or DetectorConfig()).validate()
        self.start_timestamp_ms = int(start_timestamp_ms)
        self._pending = np.empty(0, dtype=float)
        self._next_seq = 0

    @property
    def pending(self) -> int:
        return self._pending.shape[0]

    @property
    def windows_emitted(self) -> int:
        return self._next_seq

    def _timestamp(self, seq: int) -> int:
        cfg = self.config
        return self.start_timestamp_ms + math.floor(seq * cfg.window_len * 1000 / cfg.sample_rate_hz)

    def push_samples(self, samples: Iterable[float]) -> list[DetectionEvent]:
        if not self.store.entries:
            raise NotTrained("the training store is empty")
        incoming = np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=float)
        buf = np.concatenate([self._pending, incoming.ravel()])
        n = self.config.window_len
        events = []
        done = 0
        while buf.shape[0] - done >= n:
            seq = self._next_seq
            window = EegWindow(
                buf[done:done + n], self.config.sample_rate_hz, 0, self._timestamp(seq)
            )
            t0 = time.perf_counter_ns()
            try:
                label, confidence = classify_window(window, self.store, self.config)
            except OutOfRange as exc:
                raise OutOfRange(exc.index, exc.value, window_seq=seq) from None
            latency_us = (time.perf_counter_ns() - t0) / 1000.0
            events.append(DetectionEvent(window.timestamp_ms, label, confidence, seq, latency_us))
            self._next_seq += 1
            done += n
        self._pending = buf[done:].copy()
        return events


# --- output frame ------------------------------------------------------------

FRAME_SYNC = 0xA5
FRAME_LEN = 10
_FRAME_BODY = struct.Struct("<BHIBB")  # sync, seq, timestamp, label, confidence_q8


def crc8(data: bytes, poly: int = 0x07, init: int = 0x00) -> int:
    """MSB-first CRC-8, no reflection, no final XOR."""
    crc = init
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = ((crc << 1) ^ poly) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
    return crc


def confidence_to_q8(confidence) -> int:
    # half-up rounding on the exact rational
    return math.floor(Fraction(confidence) * 255 + Fraction(1, 2))


@dataclass(frozen=True)
class DecodedFrame:
    window_seq: int
    timestamp_ms: int
    label: Label
    confidence_q8: int

    @property
    def confidence(self) -> float:
        return self.confidence_q8 / 255


def encode_frame(event: DetectionEvent) -> bytes:
    body = _FRAME_BODY.pack(
        FRAME_SYNC,
        event.window_seq % (1 << 16),
        event.timestamp_ms % (1 << 32),
        int(event.label),
        confidence_to_q8(event.confidence),
    )
    return body + bytes([crc8(body)])


def decode_frame(frame: bytes) -> DecodedFrame:
    frame = bytes(frame)
    if len(frame) < FRAME_LEN:
        raise ShortFrame(f"need {FRAME_LEN} bytes, got {len(frame)}")
    if len(frame) > FRAME_LEN:
        raise FrameError(f"frame is {len(frame)} bytes, expected {FRAME_LEN}")
    if frame[0] != FRAME_SYNC:
        raise BadSync(f"sync byte 0x{frame[0]:02X}")
    if crc8(frame[:-1]) != frame[-1]:
        raise BadCrc(f"crc 0x{frame[-1]:02X} != 0x{crc8(frame[:-1]):02X}")
    _, seq, ts, label, q8 = _FRAME_BODY.unpack_from(frame)
    if label not in (0, 1):
        raise BadCrc(f"label byte {label} is not a valid label")
    return DecodedFrame(seq, ts, Label(label), q8)


def iter_frames(blob: bytes) -> Iterable[DecodedFrame]:
    if len(blob) % FRAME_LEN:
        raise ShortFrame(f"stream length {len(blob)} is not a multiple of {FRAME_LEN}")
    for i in range(0, len(blob), FRAME_LEN):
        yield decode_frame(blob[i:i + FRAME_LEN])
