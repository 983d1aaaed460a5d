import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptive_rpeak.errors import ConfigurationError, DataError, FormatError, UnsupportedRateError
from adaptive_rpeak.signal_io import (
    EcgRecord,
    PeakList,
    SynthesisSpec,
    WindowGeometry,
    beat_times,
    downsample,
    load_ecg,
    load_peaks,
    save_ecg,
    save_peaks,
    synthesize_ecg,
)


# --- geometry ---------------------------------------------------------------


def test_geometry_at_250_hz():
    g = WindowGeometry.from_fs(250)
    assert (g.window_len, g.mf_delay, g.relen_delay) == (437, 150, 237)
    assert g.warmup == 387


def test_geometry_at_500_hz():
    g = WindowGeometry.from_fs(500)
    assert (g.window_len, g.mf_delay, g.relen_delay) == (875, 300, 475)


# --- records and peaks ------------------------------------------------------


def test_record_rejects_non_finite():
    with pytest.raises(DataError):
        EcgRecord(np.array([0.0, np.nan]), 250)


def test_record_rejects_bad_fs():
    with pytest.raises(ConfigurationError):
        EcgRecord(np.zeros(3), 0)
    with pytest.raises(ConfigurationError):
        EcgRecord(np.zeros(3), 250.5)


def test_record_samples_are_read_only():
    rec = EcgRecord(np.zeros(4), 250)
    with pytest.raises(ValueError):
        rec.samples[0] = 1.0


def test_peaklist_must_increase():
    with pytest.raises(ValueError):
        PeakList(np.array([3, 3]))
    with pytest.raises(ValueError):
        PeakList(np.array([1, 2]), ("lightweight",))
    with pytest.raises(ValueError):
        PeakList(np.array([1]), ("gqrs",))


def test_peaklist_bounds():
    with pytest.raises(ValueError):
        PeakList(np.array([1, 10])).within(10)
    assert len(PeakList(np.array([1, 9])).within(10)) == 2


# --- file formats -----------------------------------------------------------


def test_load_two_column_csv(tmp_path):
    p = tmp_path / "seg.csv"
    p.write_text("fs=500\n0,1.5\n1,-2.0\n2,3.25\n")
    rec = load_ecg(p)
    assert rec.fs == 500
    np.testing.assert_array_equal(rec.samples, [1.5, -2.0, 3.25])
    assert rec.label == "seg"


def test_load_single_column_csv(tmp_path):
    p = tmp_path / "seg.csv"
    p.write_text("fs=250\n1\n2\n\n3\n")
    np.testing.assert_array_equal(load_ecg(p).samples, [1, 2, 3])


def test_nan_row_is_reported(tmp_path):
    p = tmp_path / "seg.csv"
    rows = ["fs=250"] + [str(i) for i in range(6)] + ["nan"] + ["1"]
    p.write_text("\n".join(rows) + "\n")
    with pytest.raises(DataError) as info:
        load_ecg(p)
    assert info.value.row == 7
    assert "row 7" in str(info.value)


@pytest.mark.parametrize("header", ["", "250", "fs=abc", "rate=250", "fs=-1"])
def test_bad_header(tmp_path, header):
    p = tmp_path / "seg.csv"
    p.write_text(f"{header}\n1\n2\n" if header else "")
    with pytest.raises(FormatError):
        load_ecg(p)


def test_wfdb_text_with_sidecar(tmp_path):
    (tmp_path / "r1.hea").write_text("r1 1 500 3\nr1.dat 16 200/mV 16 0 0 0 0 ECG\n")
    (tmp_path / "r1.txt").write_text("'sample' 'ECG'\n0 0.5\n1 -0.25\n2 1.0\n")
    rec = load_ecg(tmp_path / "r1.txt", fmt="wfdb_text")
    assert rec.fs == 500
    np.testing.assert_allclose(rec.samples, [500.0, -250.0, 1000.0])


def test_wfdb_text_without_header(tmp_path):
    (tmp_path / "r1.txt").write_text("0 0.5\n")
    with pytest.raises(FormatError):
        load_ecg(tmp_path / "r1.txt", fmt="wfdb_text")


def test_open_dataset_sized_segment(tmp_path):
    # ~25 s at 500 Hz, the size of one segment of the open dataset
    rec = EcgRecord(np.sin(np.arange(12500) / 50.0), 500)
    path = save_ecg(rec, tmp_path / "s.csv")
    assert len(load_ecg(path)) == 12500


@given(st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=1, max_size=50))
def test_save_load_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("rt") / "x.csv"
    rec = EcgRecord(np.array(values), 250)
    first = load_ecg(save_ecg(rec, path))
    np.testing.assert_array_equal(first.samples, rec.samples)
    text = path.read_text()
    save_ecg(first, path)
    assert path.read_text() == text


def test_peaks_round_trip(tmp_path):
    p = save_peaks(PeakList(np.array([3, 10, 99])), tmp_path / "a.peaks", fs=250)
    peaks, fs = load_peaks(p)
    assert fs == 250
    np.testing.assert_array_equal(peaks.indices, [3, 10, 99])


def test_peaks_file_must_increase(tmp_path):
    p = tmp_path / "a.peaks"
    p.write_text("5\n4\n")
    with pytest.raises(FormatError):
        load_peaks(p)


# --- downsampling -----------------------------------------------------------


def test_downsample_halves_length():
    rec = EcgRecord(np.random.default_rng(0).normal(size=1001), 500)
    out = downsample(rec, 250)
    assert out.fs == 250 and len(out) == 500


def test_downsample_identity():
    rec = EcgRecord(np.arange(10.0), 250)
    assert downsample(rec, 250) is rec


def test_downsample_idempotent_at_same_rate():
    rec = EcgRecord(np.random.default_rng(1).normal(size=2000), 500)
    once = downsample(rec, 250)
    assert downsample(once, 250) is once


def test_downsample_rejects_non_integer_ratio():
    with pytest.raises(UnsupportedRateError):
        downsample(EcgRecord(np.zeros(100), 360), 250)


def test_downsample_sine_amplitude():
    # oracle: the sine evaluated directly on the 250 Hz grid
    t500 = np.arange(5000) / 500
    rec = EcgRecord(1000 * np.sin(2 * np.pi * 10 * t500), 500)
    out = downsample(rec, 250)
    t250 = np.arange(len(out)) / 250
    ref = 1000 * np.sin(2 * np.pi * 10 * t250)
    core = slice(100, -100)
    amp = np.sqrt(2) * np.std(out.samples[core])
    assert abs(amp / 1000 - 1) < 0.01
    assert np.max(np.abs(out.samples[core] - ref[core])) < 10.0


# --- synthesis --------------------------------------------------------------


def test_constant_75_bpm():
    _, peaks = synthesize_ecg(SynthesisSpec(duration=10, hr_profile=((0, 75),)))
    assert len(peaks) in (12, 13)
    assert set(np.diff(peaks.indices)) == {200}


def test_ramp_gives_decreasing_rr():
    spec = SynthesisSpec(duration=60, hr_profile=((0, 80), (60, 180)))
    _, peaks = synthesize_ecg(spec)
    # the beat instants themselves shorten strictly
    assert np.all(np.diff(np.diff(beat_times(spec))) < 0)
    # on the sample grid the RR can only wobble by the one-sample rounding
    rr = np.diff(peaks.indices)
    assert np.all(np.diff(rr) <= 1)
    assert np.all(rr[:-10] > rr[10:])


def test_amplitude_step_keeps_indices():
    base = SynthesisSpec(duration=20, hr_profile=((0, 120),), noise_sd=5, seed=7)
    stepped = base.replace(amplitude_profile=((0, 1.0), (5, 1.0), (5, 0.4)))
    _, a = synthesize_ecg(base)
    rec_b, b = synthesize_ecg(stepped)
    np.testing.assert_array_equal(a.indices, b.indices)
    early, late = b.indices[b.indices < 1250], b.indices[b.indices > 1250]
    assert rec_b.samples[late].max() < 0.5 * rec_b.samples[early].min()


def test_synthesis_is_deterministic():
    spec = SynthesisSpec(duration=5, noise_sd=20, seed=3)
    a, _ = synthesize_ecg(spec)
    b, _ = synthesize_ecg(spec)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_r_wave_at_ground_truth():
    rec, peaks = synthesize_ecg(SynthesisSpec(duration=10, hr_profile=((0, 90),)))
    for p in peaks.indices:
        lo, hi = max(0, p - 10), min(len(rec), p + 11)
        assert lo + int(np.argmax(rec.samples[lo:hi])) == p


def test_zero_gain_beats_are_dropped():
    _, full = synthesize_ecg(SynthesisSpec(duration=10, hr_profile=((0, 120),)))
    _, half = synthesize_ecg(SynthesisSpec(duration=10, hr_profile=((0, 120),), beat_gains=(1.0, 0.0)))
    np.testing.assert_array_equal(half.indices, full.indices[::2])


@pytest.mark.parametrize("bad", [
    dict(duration=0),
    dict(duration=5, hr_profile=((0, 20),)),
    dict(duration=5, hr_profile=((0, 250),)),
    dict(duration=5, noise_sd=-1),
    dict(duration=5, beat_gains=()),
    dict(duration=5, noise_bursts=((2, 1, 10),)),
])
def test_spec_validation(bad):
    with pytest.raises(ConfigurationError):
        SynthesisSpec(**bad)


@given(
    hr0=st.floats(40, 200),
    hr1=st.floats(40, 200),
    duration=st.floats(8, 40),
)
def test_rr_follows_heart_rate_integral(hr0, hr1, duration):
    spec = SynthesisSpec(duration=duration, hr_profile=((0, hr0), (duration, hr1)))
    _, peaks = synthesize_ecg(spec)
    exact = beat_times(spec) * spec.fs
    exact = exact[exact < duration * spec.fs - 0.5]
    # every beat lands on the sample nearest its integrated instant
    assert np.all(np.abs(peaks.indices - exact[: len(peaks)]) <= 1)
    # over a linear ramp one RR spans 60/hr at the interval midpoint exactly;
    # rounding both beats costs one sample, the rounded midpoint half more
    mid = 0.5 * (peaks.indices[1:] + peaks.indices[:-1]) / spec.fs
    hr_mid = hr0 + (hr1 - hr0) * np.clip(mid / duration, 0, 1)
    rr_expected = 60.0 / hr_mid * spec.fs
    assert np.all(np.abs(np.diff(peaks.indices) - rr_expected) <= 1.5)
