import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import butterworth_bilinear_db, dft_band_power, sos_magnitude
from seizknn.exceptions import InvalidSpec, MalformedRow, MissingFile, UnknownClass, WindowTooShort
from seizknn.signal import (
    EegWindow,
    FilterSpec,
    Label,
    apply_filter,
    band_powers,
    concat_channels,
    design_lowpass,
    load_dataset,
    load_raw,
)

FS = 178.0


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def _row(values, cls, n=4):
    return ",".join(str(v) for v in values[:n]) + f",{cls}\n"


# --- load_dataset -------------------------------------------------------------


def test_load_row_count_matches_line_count(surrogate_csv):
    with open(surrogate_csv, encoding="utf-8") as fh:
        data_lines = sum(1 for line in fh if line.strip()) - 1  # header
    assert len(load_dataset(surrogate_csv)) == data_lines


def test_header_only_file_gives_empty(tmp_path):
    path = _write(tmp_path / "h.csv", ",".join(f"X{i}" for i in range(1, 179)) + ",y\n")
    assert load_dataset(path) == []


def test_unknown_class(tmp_path):
    path = _write(tmp_path / "bad.csv", _row([1, 2, 3, 4], 6))
    with pytest.raises(UnknownClass) as exc:
        load_dataset(path, window_len=4)
    assert exc.value.value == 6


def test_wrong_arity_row(tmp_path):
    path = _write(tmp_path / "bad.csv", _row([1, 2, 3, 4], 1) + "1,2,3\n")
    with pytest.raises(MalformedRow) as exc:
        load_dataset(path, window_len=4)
    assert exc.value.row_index == 1


def test_non_numeric_cell(tmp_path):
    path = _write(tmp_path / "bad.csv", "1,x,3,4,2\n")
    with pytest.raises(MalformedRow):
        load_dataset(path, window_len=4)


def test_missing_file(tmp_path):
    with pytest.raises(MissingFile):
        load_dataset(tmp_path / "nope.csv")


def test_leading_id_column_dropped_and_order_kept(tmp_path):
    text = "id,X1,X2,X3,X4,y\nA,1,2,3,4,1\nB,5,6,7,8,3\n"
    rows = load_dataset(_write(tmp_path / "ids.csv", text), window_len=4)
    assert [r.source_class for r in rows] == [1, 3]
    np.testing.assert_array_equal(rows[1].window.samples, [5, 6, 7, 8])


def test_load_is_deterministic_and_maps_labels(surrogate_csv):
    a = load_dataset(surrogate_csv)
    b = load_dataset(surrogate_csv)
    assert a == b
    assert all((lw.source_class == 1) == (lw.binary_label == Label.SEIZURE) for lw in a)


def test_load_raw_segments_and_drops_tail(tmp_path):
    path = _write(tmp_path / "raw.txt", "\n".join(str(i) for i in range(10)) + "\n")
    windows = load_raw(path, source_class=2, window_len=4)
    assert len(windows) == 2
    assert windows[1].binary_label == Label.NONSEIZURE
    np.testing.assert_array_equal(windows[1].window.samples, [4, 5, 6, 7])


def test_window_rejects_non_finite():
    with pytest.raises(Exception):
        EegWindow([0.0, float("nan")])


def test_concat_channels():
    a = EegWindow(np.zeros(4))
    b = EegWindow(np.ones(4))
    assert len(concat_channels([a, b])) == 8
    with pytest.raises(Exception):
        concat_channels([a] * 5)


# --- filter design ------------------------------------------------------------


@pytest.mark.parametrize("cutoff,order", [(40, 4), (10, 2), (30, 6), (60, 8), (1, 2)])
def test_dc_gain_is_unity(cutoff, order):
    coeffs = design_lowpass(FilterSpec(cutoff, order, FS))
    assert abs(sos_magnitude(coeffs.sos, 0.0, FS) - 1.0) <= 1e-9
    assert np.all(np.abs(coeffs.poles()) < 1.0)


def test_nyquist_attenuation_at_least_20db():
    coeffs = design_lowpass(FilterSpec(40, 4, FS))
    mag = sos_magnitude(coeffs.sos, 89.0, FS)
    assert mag == 0 or 20 * math.log10(mag) <= -20


def test_designed_response_matches_closed_form():
    coeffs = design_lowpass(FilterSpec(40, 4, FS))
    for f in (5.0, 20.0, 40.0, 60.0, 80.0):
        got = 20 * math.log10(sos_magnitude(coeffs.sos, f, FS))
        assert got == pytest.approx(butterworth_bilinear_db(f, 40, FS, 4), abs=1e-6)


@pytest.mark.parametrize(
    "spec",
    [FilterSpec(100, 4, FS), FilterSpec(89, 4, FS), FilterSpec(40, 3, FS), FilterSpec(40, 0, FS), FilterSpec(0, 4, FS)],
)
def test_invalid_spec(spec):
    with pytest.raises(InvalidSpec):
        design_lowpass(spec)


# --- apply_filter -------------------------------------------------------------


def test_constant_signal_settles_to_itself():
    coeffs = design_lowpass(FilterSpec(40, 4, FS))
    out = apply_filter(coeffs, EegWindow(np.full(178, 37.5))).samples
    assert np.all(np.abs(out[4 * 4:] - 37.5) <= 0.01 * 37.5)


def test_zero_signal_exact():
    coeffs = design_lowpass(FilterSpec(40, 4, FS))
    assert np.all(apply_filter(coeffs, EegWindow(np.zeros(178))).samples == 0.0)


def test_metadata_preserved():
    coeffs = design_lowpass(FilterSpec(40, 4, FS))
    w = EegWindow(np.arange(178.0), FS, channel_id=2, timestamp_ms=1234)
    out = apply_filter(coeffs, w)
    assert (len(out), out.sample_rate_hz, out.channel_id, out.timestamp_ms) == (178, FS, 2, 1234)


def test_80hz_sinusoid_attenuated():
    coeffs = design_lowpass(FilterSpec(40, 4, FS))
    t = np.arange(2000) / FS
    out = apply_filter(coeffs, EegWindow(np.sin(2 * np.pi * 80 * t))).samples
    steady = out[500:]
    # expected analytic gain is about -69 dB; require the stated 20 dB
    expected_db = butterworth_bilinear_db(80, 40, FS, 4)
    measured_db = 20 * math.log10(np.max(np.abs(steady)))
    assert measured_db <= -20
    assert measured_db == pytest.approx(expected_db, abs=1.0)


@settings(max_examples=40, deadline=None)
@given(
    a=st.floats(-100, 100),
    b=st.floats(-100, 100),
    seed=st.integers(0, 2**32 - 1),
)
def test_filter_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    coeffs = design_lowpass(FilterSpec(40, 4, FS))
    x, y = rng.normal(0, 50, 178), rng.normal(0, 50, 178)
    lhs = apply_filter(coeffs, EegWindow(a * x + b * y)).samples
    rhs = a * apply_filter(coeffs, EegWindow(x)).samples + b * apply_filter(coeffs, EegWindow(y)).samples
    assert np.max(np.abs(lhs - rhs)) <= 1e-9


@pytest.mark.parametrize("cutoff,order", [(40, 4), (10, 2), (30, 6), (80, 8), (2, 4)])
def test_impulse_response_decays(cutoff, order):
    coeffs = design_lowpass(FilterSpec(cutoff, order, FS))
    n = 178
    impulse = np.zeros(10 * n)
    impulse[0] = 1.0
    h = apply_filter(coeffs, EegWindow(impulse)).samples
    assert np.max(np.abs(h[-n:])) < 1e-12


# --- band powers --------------------------------------------------------------


def test_band_powers_zero_signal():
    bp = band_powers(EegWindow(np.zeros(178)))
    assert bp.as_array().tolist() == [0.0] * 5


def test_pure_alpha_sinusoid():
    t = np.arange(178) / FS
    bp = band_powers(EegWindow(np.sin(2 * np.pi * 10 * t)))
    others = [bp.delta, bp.theta, bp.beta, bp.gamma]
    assert all(bp.alpha > o for o in others)


def test_two_tone_matches_dft_oracle():
    t = np.arange(178) / FS
    x = np.sin(2 * np.pi * 2 * t) + np.sin(2 * np.pi * 20 * t)
    bp = band_powers(EegWindow(x))
    oracle_delta = dft_band_power(x, FS, 0.5, 4)
    oracle_beta = dft_band_power(x, FS, 13, 30)
    assert bp.delta == pytest.approx(oracle_delta, rel=1e-9)
    assert bp.beta == pytest.approx(oracle_beta, rel=1e-9)
    assert bp.delta == pytest.approx(bp.beta, rel=0.05)
    for other in (bp.theta, bp.alpha, bp.gamma):
        assert other < 0.05 * bp.delta


def test_band_sum_bounded_by_total_power(rng):
    for _ in range(20):
        x = rng.normal(5, 30, 178)
        bp = band_powers(EegWindow(x))
        assert np.all(bp.as_array() >= 0)
        assert bp.as_array().sum() <= np.mean(x**2) * (1 + 1e-12)


def test_band_powers_preconditions():
    with pytest.raises(WindowTooShort):
        band_powers(EegWindow([1.0]))
    with pytest.raises(WindowTooShort):
        band_powers(EegWindow(np.zeros(100), sample_rate_hz=50))
