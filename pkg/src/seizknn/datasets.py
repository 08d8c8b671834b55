"""Locating the public Bonn-derived CSV, and a synthetic stand-in for offline tests.

The surrogate is *not* EEG. It only mimics the file layout and coarse
amplitude/spectral structure of the five recording sets: integer µV samples
clipped to a 12-bit range, rhythmic high-amplitude activity for set 1 and
broadband 1/f background for sets 2-5 (with a 10 Hz rhythm in set 4). Use
it to exercise the pipeline, never to quote accuracy.
"""

from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Sequence

import numpy as np

from .signal import DEFAULT_SAMPLE_RATE_HZ, DEFAULT_WINDOW_LEN, LabeledWindow, labeled

DATA_ENV = "SEIZKNN_DATA"
_CANDIDATE_NAMES = ("Epileptic Seizure Recognition.csv", "Epileptic_Seizure_Recognition.csv", "data.csv")
BONN_ROWS = 11500


def find_bonn_csv(search_dirs: Sequence[Path] = ()) -> Path | None:
    """Return the first available copy of the public CSV, or None.

    ``$SEIZKNN_DATA`` wins; then the listed directories and ``./data``.
    """
    env = os.environ.get(DATA_ENV)
    if env:
        path = Path(env)
        return path if path.is_file() else None
    for directory in (*map(Path, search_dirs), Path.cwd() / "data"):
        for name in _CANDIDATE_NAMES:
            candidate = directory / name
            if candidate.is_file():
                return candidate
    return None


def _pink_noise(rng: np.random.Generator, n: int, exponent: float = 1.0) -> np.ndarray:
    freqs = np.fft.rfftfreq(n)
    spectrum = rng.normal(size=freqs.size) + 1j * rng.normal(size=freqs.size)
    spectrum[1:] /= freqs[1:] ** (exponent / 2)
    spectrum[0] = 0
    x = np.fft.irfft(spectrum, n)
    return x / x.std()


def _surrogate_window(rng, source_class: int, n: int, fs: float) -> np.ndarray:
    t = np.arange(n) / fs
    if source_class == 1:
        f0 = rng.uniform(2.5, 7.0)
        phase = rng.uniform(0, 2 * np.pi)
        amp = rng.uniform(150, 550)
        wave = np.sin(2 * np.pi * f0 * t + phase)
        # spike-and-wave: sharpened odd harmonics
        wave += 0.5 * np.sin(2 * np.pi * 2 * f0 * t + 2 * phase) + 0.25 * np.sin(2 * np.pi * 3 * f0 * t + 3 * phase)
        x = amp * wave / 1.3 + rng.uniform(20, 60) * _pink_noise(rng, n)
    else:
        scale = {2: (25, 70), 3: (25, 70), 4: (20, 60), 5: (15, 50)}[source_class]
        x = rng.uniform(*scale) * _pink_noise(rng, n, rng.uniform(0.8, 1.6))
        if source_class == 4:
            x += rng.uniform(10, 40) * np.sin(2 * np.pi * rng.uniform(8.5, 12) * t + rng.uniform(0, 2 * np.pi))
    return np.clip(np.rint(x), -2048, 2047)


def make_surrogate(
    n_per_class: int = 200,
    seed: int = 0,
    window_len: int = DEFAULT_WINDOW_LEN,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
) -> list[LabeledWindow]:
    """Synthetic five-set dataset, rows interleaved by class like the UCI export."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_per_class):
        for source_class in (1, 2, 3, 4, 5):
            x = _surrogate_window(rng, source_class, window_len, sample_rate_hz)
            out.append(labeled(x, source_class, sample_rate_hz=sample_rate_hz))
    return out


def write_csv(dataset: Sequence[LabeledWindow], path, id_column: bool = True) -> Path:
    """Write windows in the UCI layout: optional id, ``X1..Xn``, ``y``."""
    path = Path(path)
    n = len(dataset[0].window) if dataset else DEFAULT_WINDOW_LEN
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ([""] if id_column else []) + [f"X{i + 1}" for i in range(n)] + ["y"]
        writer.writerow(header)
        for row, lw in enumerate(dataset):
            cells = [f"{v:g}" for v in lw.window.samples] + [lw.source_class]
            writer.writerow(([f"S{row}.V1"] if id_column else []) + cells)
    return path
