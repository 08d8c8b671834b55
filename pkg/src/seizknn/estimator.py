"""scikit-learn compatible wrappers around the detection pipeline.

Rows of ``X`` are EEG windows (``n_samples, window_len``) and ``y`` holds
binary labels (1 = seizure, 0 = non-seizure). Everything composes with
``Pipeline``, ``clone`` and ``GridSearchCV``.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .detector import Detector, DetectorConfig, classify_batch
from .knn_core import QFormat, quantize_array, select_k_nearest_batch, squared_distances_batch
from .model_store import TrainingStore, adapt_arrays, memory_footprint
from .signal import FilterSpec, band_rms_batch, design_lowpass, filter_batch, featurize_batch


class LowpassFilter(TransformerMixin, BaseEstimator):
    """Zero-state Butterworth low-pass applied independently to every row."""

    def __init__(self, cutoff_hz=40.0, order=4, sample_rate_hz=178.0):
        self.cutoff_hz = cutoff_hz
        self.order = order
        self.sample_rate_hz = sample_rate_hz

    def fit(self, X, y=None):
        X = check_array(X)
        self.coefficients_ = design_lowpass(FilterSpec(self.cutoff_hz, self.order, self.sample_rate_hz))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "coefficients_")
        return filter_batch(self.coefficients_, check_array(X))


class BandPowerFeatures(TransformerMixin, BaseEstimator):
    """Per-row delta/theta/alpha/beta/gamma features.

    ``kind="power"`` gives mean-square amplitude, ``kind="rms"`` its square
    root (the units used by the ``bands`` detector mode).
    """

    def __init__(self, sample_rate_hz=178.0, kind="power"):
        self.sample_rate_hz = sample_rate_hz
        self.kind = kind

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=2)
        if self.kind not in ("power", "rms"):
            raise ValueError(f"kind must be 'power' or 'rms', got {self.kind!r}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        rms = band_rms_batch(check_array(X, ensure_min_features=2), self.sample_rate_hz)
        return rms if self.kind == "rms" else rms**2

    def get_feature_names_out(self, input_features=None):
        return np.array(["delta", "theta", "alpha", "beta", "gamma"], dtype=object)


class FixedPointQuantizer(TransformerMixin, BaseEstimator):
    """Round to signed 16-bit fixed-point codes; out-of-range samples raise."""

    def __init__(self, integer_bits=13, fraction_bits=3):
        self.integer_bits = integer_bits
        self.fraction_bits = fraction_bits

    def fit(self, X, y=None):
        X = check_array(X)
        self.q_format_ = QFormat(self.integer_bits, self.fraction_bits)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "q_format_")
        return quantize_array(check_array(X), self.q_format_)

    def inverse_transform(self, X):
        check_is_fitted(self, "q_format_")
        return np.asarray(X, dtype=float) / self.q_format_.scale


class KnnSeizureClassifier(ClassifierMixin, BaseEstimator):
    """Fixed-point kNN seizure detector with an alpha-per-class exemplar store.

    ``fit`` feeds every training row, in order, through the filter and
    quantizer into a fresh store; a class that overflows ``alpha`` keeps
    its most recent ``alpha`` rows.

    Parameters
    ----------
    k : int, default=3
        Odd number of neighbours consulted.
    alpha : int, default=30
        Exemplars kept per class.
    sample_rate_hz, cutoff_hz, filter_order
        Low-pass prefilter settings.
    integer_bits, fraction_bits : int
        Q-format of the 16-bit datapath words.
    threshold_confidence : float, default=0.5
        Minimum seizure vote share required to report a seizure.
    features : {"raw", "bands"}, default="raw"
        Filtered samples, or per-band RMS amplitudes.

    Attributes
    ----------
    store_ : TrainingStore
    config_ : DetectorConfig
    classes_ : ndarray of shape (2,)
    """

    def __init__(
        self,
        k=3,
        alpha=30,
        sample_rate_hz=178.0,
        cutoff_hz=40.0,
        filter_order=4,
        integer_bits=13,
        fraction_bits=3,
        threshold_confidence=0.5,
        features="raw",
    ):
        self.k = k
        self.alpha = alpha
        self.sample_rate_hz = sample_rate_hz
        self.cutoff_hz = cutoff_hz
        self.filter_order = filter_order
        self.integer_bits = integer_bits
        self.fraction_bits = fraction_bits
        self.threshold_confidence = threshold_confidence
        self.features = features

    def _make_config(self, window_len: int) -> DetectorConfig:
        return DetectorConfig(
            k=self.k,
            alpha=self.alpha,
            window_len=window_len,
            sample_rate_hz=self.sample_rate_hz,
            filter=FilterSpec(self.cutoff_hz, self.filter_order, self.sample_rate_hz),
            q_format=QFormat(self.integer_bits, self.fraction_bits),
            threshold_confidence=Fraction(self.threshold_confidence).limit_denominator(10**6),
            features=self.features,
        ).validate()

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        y = np.asarray(y)
        if not np.isin(y, (0, 1)).all():
            raise ValueError("y must hold binary labels (1 = seizure, 0 = non-seizure)")
        self.config_ = self._make_config(X.shape[1])
        self.store_ = TrainingStore(self.config_.alpha, self.config_.feature_len, self.config_.q_format)
        adapt_arrays(
            self.store_, X, y.astype(int), self.config_.coefficients(),
            self.config_.q_format, self.config_.features,
        )
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def _validate_X(self, X):
        check_is_fitted(self, "store_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def predict(self, X):
        labels, _ = classify_batch(self._validate_X(X), self.store_, self.config_)
        return labels.astype(int)

    def predict_proba(self, X):
        """Vote shares ``[non-seizure, seizure]`` among the k neighbours.

        These ignore ``threshold_confidence``.
        """
        X = self._validate_X(X)
        cfg = self.config_
        codes = quantize_array(featurize_batch(X, cfg.coefficients(), cfg.features), cfg.q_format)
        view = self.store_.view()
        nearest = select_k_nearest_batch(squared_distances_batch(codes, view.codes()), cfg.k)
        seizure = view.labels()[nearest].sum(axis=1)
        total = nearest.shape[1]
        return np.column_stack([(total - seizure) / total, seizure / total])

    def memory_footprint(self):
        check_is_fitted(self, "store_")
        return memory_footprint(self.store_)

    def detector(self, start_timestamp_ms: int = 0) -> Detector:
        """Streaming runtime sharing this estimator's store and configuration."""
        check_is_fitted(self, "store_")
        return Detector(self.store_, self.config_, start_timestamp_ms)
