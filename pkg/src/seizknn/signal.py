"""EEG windows, dataset ingestion, low-pass prefilter and band-power features."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import signal as sps

from .exceptions import (
    DataError,
    InvalidSpec,
    MalformedRow,
    MissingFile,
    UnknownClass,
    WindowTooShort,
)

DEFAULT_SAMPLE_RATE_HZ = 178.0
DEFAULT_WINDOW_LEN = 178
DEFAULT_CUTOFF_HZ = 40.0
DEFAULT_FILTER_ORDER = 4

BAND_EDGES = {
    "delta": (0.5, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
    "gamma": (30.0, None),  # upper edge is Nyquist, exclusive
}


class Label(enum.IntEnum):
    NONSEIZURE = 0
    SEIZURE = 1

    @classmethod
    def from_source_class(cls, source_class: int) -> "Label":
        return cls.SEIZURE if source_class == 1 else cls.NONSEIZURE


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EegWindow:
    """One fixed-length window of single-channel EEG, amplitudes in µV."""

    samples: np.ndarray
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    channel_id: int = 0
    timestamp_ms: int = 0

    def __post_init__(self):
        samples = _frozen(self.samples)
        if samples.ndim != 1:
            raise DataError(f"window samples must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise DataError("window contains non-finite samples")
        if not self.sample_rate_hz > 0:
            raise DataError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.timestamp_ms < 0:
            raise DataError("timestamp_ms must be non-negative")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EegWindow):
            return NotImplemented
        return (
            np.array_equal(self.samples, other.samples)
            and self.sample_rate_hz == other.sample_rate_hz
            and self.channel_id == other.channel_id
            and self.timestamp_ms == other.timestamp_ms
        )

    def with_samples(self, samples) -> "EegWindow":
        return EegWindow(samples, self.sample_rate_hz, self.channel_id, self.timestamp_ms)


@dataclass(frozen=True)
class LabeledWindow:
    window: EegWindow
    binary_label: Label
    source_class: int

    def __post_init__(self):
        if self.source_class not in range(1, 6):
            raise UnknownClass(self.source_class)
        if self.binary_label != Label.from_source_class(self.source_class):
            raise DataError(
                f"binary label {self.binary_label!r} inconsistent with class {self.source_class}"
            )


def labeled(samples, source_class: int, **kwargs) -> LabeledWindow:
    """Shorthand used by loaders and tests."""
    return LabeledWindow(
        EegWindow(samples, **kwargs), Label.from_source_class(source_class), source_class
    )


def concat_channels(windows: Sequence[EegWindow]) -> EegWindow:
    """Join 1..4 simultaneous channel windows into one feature window.

    The result keeps the first window's rate and timestamp and uses
    ``channel_id`` 0.
    """
    if not 1 <= len(windows) <= 4:
        raise DataError(f"expected 1..4 channels, got {len(windows)}")
    first = windows[0]
    if any(w.sample_rate_hz != first.sample_rate_hz or len(w) != len(first) for w in windows):
        raise DataError("channel windows differ in length or sample rate")
    samples = np.concatenate([w.samples for w in windows])
    return EegWindow(samples, first.sample_rate_hz, 0, first.timestamp_ms)


# --- ingestion ---------------------------------------------------------------


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _window_period_ms(window_len: int, sample_rate_hz: float) -> float:
    return 1000.0 * window_len / sample_rate_hz


def load_dataset(
    path,
    window_len: int = DEFAULT_WINDOW_LEN,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> list[LabeledWindow]:
    """Load a per-row-window CSV.

    Each data row holds ``window_len`` samples followed by an integer class
    in 1..5. An optional header row is skipped, and a leading non-numeric
    segment-id column (as in the public UCI export of the Bonn recordings)
    is dropped. Class 1 maps to ``Label.SEIZURE``, classes 2-5 to
    ``Label.NONSEIZURE``.

    Row indices in errors are 0-based over data rows (header excluded).
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    period = _window_period_ms(window_len, sample_rate_hz)
    out: list[LabeledWindow] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        row_index = 0
        first = True
        for cells in reader:
            if not cells or all(not c.strip() for c in cells):
                continue
            if first:
                first = False
                # header: the trailing class cell of a data row is always numeric
                if not _is_number(cells[-1].strip()):
                    continue
            out.append(_parse_row(cells, row_index, window_len, sample_rate_hz, period))
            row_index += 1
    return out


def _parse_row(cells, row_index, window_len, sample_rate_hz, period) -> LabeledWindow:
    if len(cells) == window_len + 2:
        cells = cells[1:]
    if len(cells) != window_len + 1:
        raise MalformedRow(row_index, f"expected {window_len + 1} cells, got {len(cells)}")
    try:
        samples = np.array([float(c) for c in cells[:-1]])
    except ValueError as exc:
        raise MalformedRow(row_index, f"non-numeric sample ({exc})") from None
    if not np.all(np.isfinite(samples)):
        raise MalformedRow(row_index, "non-finite sample")
    raw_class = cells[-1].strip()
    try:
        source_class = int(raw_class)
    except ValueError:
        raise MalformedRow(row_index, f"class cell {raw_class!r} is not an integer") from None
    if not 1 <= source_class <= 5:
        raise UnknownClass(source_class)
    window = EegWindow(
        samples, sample_rate_hz, 0, int(math.floor(row_index * period))
    )
    return LabeledWindow(window, Label.from_source_class(source_class), source_class)


def load_raw(
    path,
    source_class: int,
    window_len: int = DEFAULT_WINDOW_LEN,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> list[LabeledWindow]:
    """Read a one-sample-per-line text file and cut consecutive windows.

    A trailing partial window is dropped.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    if not 1 <= source_class <= 5:
        raise UnknownClass(source_class)
    values = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise MalformedRow(lineno, f"non-numeric sample {line!r}") from None
    return segment(values, source_class, window_len, sample_rate_hz)


def segment(
    values: Iterable[float],
    source_class: int,
    window_len: int = DEFAULT_WINDOW_LEN,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> list[LabeledWindow]:
    arr = np.asarray(list(values), dtype=float)
    period = _window_period_ms(window_len, sample_rate_hz)
    n_windows = arr.shape[0] // window_len
    return [
        labeled(
            arr[i * window_len:(i + 1) * window_len],
            source_class,
            sample_rate_hz=sample_rate_hz,
            timestamp_ms=int(math.floor(i * period)),
        )
        for i in range(n_windows)
    ]


def as_arrays(dataset: Sequence[LabeledWindow]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack a dataset into ``(X, binary_labels, source_classes)``."""
    if not dataset:
        return np.empty((0, 0)), np.empty(0, dtype=np.int8), np.empty(0, dtype=np.int8)
    X = np.vstack([lw.window.samples for lw in dataset])
    y = np.array([int(lw.binary_label) for lw in dataset], dtype=np.int8)
    src = np.array([lw.source_class for lw in dataset], dtype=np.int8)
    return X, y, src


# --- low-pass prefilter ------------------------------------------------------


@dataclass(frozen=True)
class FilterSpec:
    cutoff_hz: float = DEFAULT_CUTOFF_HZ
    order: int = DEFAULT_FILTER_ORDER
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ

    def validate(self) -> "FilterSpec":
        if not (isinstance(self.order, (int, np.integer)) and self.order > 0 and self.order % 2 == 0):
            raise InvalidSpec(f"order must be a positive even integer, got {self.order!r}")
        if not self.sample_rate_hz > 0:
            raise InvalidSpec(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        nyquist = self.sample_rate_hz / 2
        if not 0 < self.cutoff_hz < nyquist:
            raise InvalidSpec(
                f"cutoff {self.cutoff_hz} Hz must lie strictly inside (0, {nyquist}) Hz"
            )
        return self


@dataclass(frozen=True, eq=False)
class FilterCoefficients:
    """Cascaded second-order sections, one ``[b0 b1 b2 a0 a1 a2]`` row each."""

    sos: np.ndarray
    spec: FilterSpec = field(default_factory=FilterSpec)

    def dc_gain(self) -> float:
        return float(np.prod(self.sos[:, :3].sum(axis=1) / self.sos[:, 3:].sum(axis=1)))

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(section[3:]) for section in self.sos])


def design_lowpass(spec: FilterSpec) -> FilterCoefficients:
    """Butterworth low-pass as second-order sections, DC gain pinned to 1."""
    spec.validate()
    sos = sps.butter(spec.order, spec.cutoff_hz, btype="low", fs=spec.sample_rate_hz, output="sos")
    sos = np.array(sos, dtype=float)
    # butter() is unity-gain at DC only up to rounding; fold the residue into the first section
    gain = np.prod(sos[:, :3].sum(axis=1) / sos[:, 3:].sum(axis=1))
    sos[0, :3] /= gain
    sos.setflags(write=False)
    coeffs = FilterCoefficients(sos, spec)
    if np.any(np.abs(coeffs.poles()) >= 1.0):
        raise InvalidSpec(f"designed filter is unstable for {spec}")
    return coeffs


def apply_filter(coeffs: FilterCoefficients, window: EegWindow) -> EegWindow:
    """Filter one window from zero initial state; metadata is preserved."""
    out = sps.sosfilt(np.array(coeffs.sos), window.samples)
    return window.with_samples(out)


def filter_batch(coeffs: FilterCoefficients, X: np.ndarray) -> np.ndarray:
    """Row-wise equivalent of :func:`apply_filter` for a 2-D array of windows."""
    return sps.sosfilt(np.array(coeffs.sos), np.asarray(X, dtype=float), axis=-1)


# --- band powers -------------------------------------------------------------


@dataclass(frozen=True)
class BandPowers:
    delta: float
    theta: float
    alpha: float
    beta: float
    gamma: float

    def as_array(self) -> np.ndarray:
        return np.array([self.delta, self.theta, self.alpha, self.beta, self.gamma])


def _one_sided_power(samples: np.ndarray) -> np.ndarray:
    """Per-bin contribution to the mean-square amplitude (Parseval)."""
    n = samples.shape[-1]
    spec = np.fft.rfft(samples, axis=-1)
    power = np.abs(spec) ** 2 / n**2
    # fold negative frequencies; DC and (even-n) Nyquist have no mirror bin
    power[..., 1:] *= 2.0
    if n % 2 == 0:
        power[..., -1] /= 2.0
    return power


def _band_masks(n: int, sample_rate_hz: float) -> list[np.ndarray]:
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate_hz)
    nyquist = sample_rate_hz / 2
    masks = []
    for low, high in BAND_EDGES.values():
        high = nyquist if high is None else high
        masks.append((freqs >= low) & (freqs < high))
    return masks


def band_powers(window: EegWindow) -> BandPowers:
    """Mean-square amplitude in each EEG band, rectangular window.

    Bins are assigned to a band by their centre frequency.
    """
    n = len(window)
    if n < 2:
        raise WindowTooShort(f"need at least 2 samples, got {n}")
    if window.sample_rate_hz <= 60:
        raise WindowTooShort(
            f"sample rate {window.sample_rate_hz} Hz leaves no gamma band above 30 Hz"
        )
    power = _one_sided_power(window.samples)
    values = [float(power[m].sum()) for m in _band_masks(n, window.sample_rate_hz)]
    return BandPowers(*values)


def band_rms_batch(X: np.ndarray, sample_rate_hz: float) -> np.ndarray:
    """Per-band RMS amplitude (µV) for each row of ``X``; shape ``(rows, 5)``.

    This is the feature vector of the ``bands`` mode: square roots of the
    band powers, so the features stay in amplitude units and fit the same
    fixed-point word as raw samples.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] < 2:
        raise WindowTooShort(f"need at least 2 samples, got {X.shape[1]}")
    if sample_rate_hz <= 60:
        raise WindowTooShort(f"sample rate {sample_rate_hz} Hz leaves no gamma band")
    power = _one_sided_power(X)
    masks = _band_masks(X.shape[1], sample_rate_hz)
    return np.sqrt(np.stack([power[:, m].sum(axis=1) for m in masks], axis=1))


# --- feature extraction ------------------------------------------------------

FEATURE_MODES = ("raw", "bands")


def featurize_batch(
    X: np.ndarray, coeffs: FilterCoefficients, features: str = "raw"
) -> np.ndarray:
    """Filter each row and map it to the configured feature vector."""
    if features not in FEATURE_MODES:
        raise InvalidSpec(f"features must be one of {FEATURE_MODES}, got {features!r}")
    filtered = filter_batch(coeffs, X)
    if features == "bands":
        return band_rms_batch(filtered, coeffs.spec.sample_rate_hz)
    return filtered


def featurize(window: EegWindow, coeffs: FilterCoefficients, features: str = "raw") -> np.ndarray:
    if features == "raw":
        return apply_filter(coeffs, window).samples
    return featurize_batch(window.samples[None, :], coeffs, features)[0]
