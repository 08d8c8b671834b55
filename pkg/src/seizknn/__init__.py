"""Streaming kNN seizure detection on single-channel EEG windows."""

__version__ = "0.1.0"

from .detector import (
    DetectionEvent,
    Detector,
    DetectorConfig,
    classify_batch,
    classify_window,
    decode_frame,
    encode_frame,
)
from .estimator import (
    BandPowerFeatures,
    FixedPointQuantizer,
    KnnSeizureClassifier,
    LowpassFilter,
)
from .knn_core import (
    FixedVector,
    QFormat,
    compare_const_time,
    dequantize,
    quantize,
    select_k_nearest,
    squared_distance,
    vote,
)
from .model_store import TrainingStore, adapt, memory_footprint, restore, snapshot
from .signal import (
    EegWindow,
    FilterSpec,
    Label,
    LabeledWindow,
    apply_filter,
    band_powers,
    design_lowpass,
    load_dataset,
)

__all__ = [
    "BandPowerFeatures",
    "DetectionEvent",
    "Detector",
    "DetectorConfig",
    "EegWindow",
    "FilterSpec",
    "FixedPointQuantizer",
    "FixedVector",
    "KnnSeizureClassifier",
    "Label",
    "LabeledWindow",
    "LowpassFilter",
    "QFormat",
    "TrainingStore",
    "adapt",
    "apply_filter",
    "band_powers",
    "classify_batch",
    "classify_window",
    "compare_const_time",
    "decode_frame",
    "dequantize",
    "design_lowpass",
    "encode_frame",
    "load_dataset",
    "memory_footprint",
    "quantize",
    "restore",
    "select_k_nearest",
    "snapshot",
    "squared_distance",
    "vote",
]
