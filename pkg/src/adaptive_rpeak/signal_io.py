"""Annotated single-lead ECG records: loading, saving, resampling, synthesis.

Amplitudes are always microvolts. The canonical analysis rate is 250 Hz and
all window arithmetic is done in integer sample counts (see
:class:`WindowGeometry`).

File formats
------------
ECG CSV
    First non-empty line ``fs=<int>``; then either one sample per line or
    ``index,value`` pairs.
wfdb_text
    A whitespace-separated text export of a WFDB record (last column is the
    physical value) next to its ``.hea`` header, which supplies the sampling
    rate and the units of the signal.
Peak/annotation file
    Optional ``fs=<int>`` line, then one ascending sample index per line.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .errors import ConfigurationError, DataError, FormatError, UnsupportedRateError
from .validation import check_fs, check_peaks, check_signal

#: Anti-alias filter applied by :func:`downsample`; surfaced in report metadata.
ANTIALIAS_FILTER = "scipy.signal.decimate, 30-tap Hamming FIR, zero-phase"

SOURCES = ("lightweight", "bayeslope")


@dataclass(frozen=True)
class EcgRecord:
    """Uniformly sampled single-lead ECG in microvolts."""

    samples: np.ndarray
    fs: int
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "fs", check_fs(self.fs))
        samples = check_signal(self.samples, min_length=0, name="samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size / self.fs


@dataclass(frozen=True)
class PeakList:
    """Strictly increasing R-peak sample indices, optionally tagged by source."""

    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    sources: tuple | None = None

    def __post_init__(self):
        idx = check_peaks(self.indices)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        if self.sources is not None:
            sources = tuple(self.sources)
            if len(sources) != idx.size:
                raise ValueError("sources must have one tag per peak")
            unknown = set(sources) - set(SOURCES)
            if unknown:
                raise ValueError(f"unknown peak sources {sorted(unknown)}")
            object.__setattr__(self, "sources", sources)

    def __len__(self):
        return self.indices.size

    def __iter__(self):
        return iter(self.indices.tolist())

    def tagged(self, source):
        return PeakList(self.indices, (source,) * self.indices.size)

    def within(self, n_samples):
        """Check every index lies inside a record of `n_samples`."""
        check_peaks(self.indices, n_samples)
        return self


@dataclass(frozen=True)
class WindowGeometry:
    """Analysis window and preprocessing delays, in samples.

    At 250 Hz: ``window_len=437`` (1.75 s floored), ``mf_delay=150``
    (0.6 s), ``relen_delay=237`` (0.95 s floored).
    """

    window_len: int
    mf_delay: int
    relen_delay: int

    @classmethod
    def from_fs(cls, fs):
        fs = check_fs(fs)
        # integer arithmetic: 1.75*fs in floats is exact here, but 0.95*fs is not
        return cls(window_len=175 * fs // 100, mf_delay=60 * fs // 100, relen_delay=95 * fs // 100)

    @property
    def warmup(self):
        return self.mf_delay + self.relen_delay


# ---------------------------------------------------------------------------
# file I/O


def _parse_fs_line(line, path):
    key, sep, value = line.partition("=")
    if not sep or key.strip().lower() != "fs":
        raise FormatError(f"{path}: expected header 'fs=<int>', got {line!r}")
    try:
        fs = int(value.strip())
    except ValueError:
        raise FormatError(f"{path}: sampling rate {value.strip()!r} is not an integer") from None
    if fs <= 0:
        raise FormatError(f"{path}: sampling rate must be positive")
    return fs


def _parse_value(text, row, path):
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{path}: row {row}: cannot parse {text!r} as a number", row=row) from None
    if not math.isfinite(v):
        raise DataError(f"{path}: non-finite sample at row {row}", row=row)
    return v


def _load_csv(path):
    lines = [ln.strip() for ln in path.read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise FormatError(f"{path}: empty file")
    fs = _parse_fs_line(lines[0], path)
    values = []
    for row, line in enumerate(lines[1:], start=1):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) > 2:
            raise FormatError(f"{path}: row {row}: expected 'value' or 'index,value'")
        values.append(_parse_value(parts[-1], row, path))
    return fs, np.array(values, dtype=np.float64)


_UNIT_SCALE = {"uv": 1.0, "µv": 1.0, "mv": 1e3, "v": 1e6}


def _load_wfdb_text(path):
    hea = path.with_suffix(".hea")
    if not hea.exists():
        raise FormatError(f"{path}: sidecar header {hea.name} not found")
    header = [ln.split() for ln in hea.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not header or len(header[0]) < 3:
        raise FormatError(f"{hea}: malformed record line")
    try:
        fs = int(float(header[0][2].split("/")[0]))
    except ValueError:
        raise FormatError(f"{hea}: malformed sampling rate {header[0][2]!r}") from None
    if fs <= 0:
        raise FormatError(f"{hea}: sampling rate must be positive")
    scale = 1e3  # WFDB default physical unit is mV
    if len(header) > 1 and len(header[1]) > 2 and "/" in header[1][2]:
        unit = header[1][2].split("/", 1)[1].lower()
        if unit not in _UNIT_SCALE:
            raise FormatError(f"{hea}: unsupported units {unit!r}")
        scale = _UNIT_SCALE[unit]
    values = []
    row = 0
    for line in path.read_text().splitlines():
        parts = line.replace(",", " ").split()
        if not parts or parts[0].startswith("#") or parts[0].startswith("'"):
            continue
        row += 1
        values.append(_parse_value(parts[-1], row, path) * scale)
    return fs, np.array(values, dtype=np.float64)


def load_ecg(path, fmt="csv"):
    """Read an ECG record in microvolts.

    Raises
    ------
    FormatError
        Missing or garbled sampling-rate header.
    DataError
        A non-finite or unparsable sample; ``err.row`` is the 1-based data row.
    """
    path = Path(path)
    if fmt == "csv":
        fs, values = _load_csv(path)
    elif fmt == "wfdb_text":
        fs, values = _load_wfdb_text(path)
    else:
        raise ConfigurationError(f"unknown ECG format {fmt!r}")
    return EcgRecord(values, fs, label=path.stem)


def save_ecg(rec, path, decimals=None):
    """Write `rec` as ECG CSV.

    Floats use their shortest round-trip repr, so loading gives back the
    exact samples; `decimals` rounds first (fixed-point text).
    """
    path = Path(path)
    if decimals is None:
        body = "\n".join(repr(float(v)) for v in rec.samples)
    else:
        body = "\n".join(f"{v:.{int(decimals)}f}" for v in np.round(rec.samples, decimals) + 0.0)
    path.write_text(f"fs={rec.fs}\n{body}\n")
    return path


def load_peaks(path):
    """Read a peak/annotation file. Returns ``(PeakList, fs or None)``."""
    path = Path(path)
    fs = None
    values = []
    for row, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.lower().startswith("fs"):
            fs = _parse_fs_line(line, path)
            continue
        try:
            values.append(int(line.split(",")[0]))
        except ValueError:
            raise FormatError(f"{path}: line {row}: {line!r} is not a sample index") from None
    try:
        peaks = PeakList(np.array(values, dtype=np.int64))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return peaks, fs


def save_peaks(peaks, path, fs=None):
    path = Path(path)
    lines = [] if fs is None else [f"fs={fs}"]
    lines += [str(int(i)) for i in PeakList(np.asarray(peaks.indices if hasattr(peaks, "indices") else peaks)).indices]
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# resampling


def downsample(rec, target_fs=250):
    """Decimate `rec` to `target_fs` after an anti-alias low-pass.

    The output length is ``len(rec) // q`` with ``q = rec.fs // target_fs``.
    """
    target_fs = check_fs(target_fs)
    if rec.fs == target_fs:
        return rec
    if rec.fs % target_fs:
        raise UnsupportedRateError(f"cannot decimate {rec.fs} Hz to {target_fs} Hz: ratio is not an integer")
    q = rec.fs // target_fs
    n_out = len(rec) // q
    if n_out == 0:
        return EcgRecord(np.zeros(0), target_fs, rec.label)
    y = sps.decimate(rec.samples, q, ftype="fir", zero_phase=True)
    return EcgRecord(y[:n_out], target_fs, rec.label)


# ---------------------------------------------------------------------------
# synthesis

#: Beat template: (wave, offset from R in s, amplitude relative to R, gaussian width in s).
#: The T-wave offset is a placeholder; it follows the RR interval (see `_t_offset`).
BEAT_TEMPLATE = (
    ("P", -0.160, 0.12, 0.025),
    ("Q", -0.028, -0.10, 0.010),
    ("R", 0.000, 1.00, 0.010),
    ("S", 0.028, -0.20, 0.010),
    ("T", None, 0.28, 0.040),
)
R_AMPLITUDE_UV = 1000.0


def _t_offset(rr):
    # QT shortens with RR roughly like sqrt(RR)
    return 0.30 * math.sqrt(rr)


@dataclass(frozen=True)
class SynthesisSpec:
    """Parameters of a synthetic record.

    `hr_profile` and `amplitude_profile` are piecewise-linear curves given as
    ``(time_s, value)`` points; repeating a time makes a step. `beat_gains`
    is cycled over consecutive beats (``(1.0, 0.1)`` gives 10:1 alternans)
    and multiplies on top of the amplitude profile. Amplitude scaling applies
    to the whole beat; `t_wave_gain` scales the T wave relative to R.
    `noise_bursts` adds extra white noise as ``(t_start, t_stop, sd_uv)``
    intervals on top of the stationary `noise_sd`.
    """

    duration: float
    hr_profile: tuple = ((0.0, 75.0),)
    amplitude_profile: tuple = ((0.0, 1.0),)
    t_wave_gain: float = 1.0
    noise_sd: float = 0.0
    seed: int = 0
    fs: int = 250
    beat_gains: tuple = (1.0,)
    first_beat_phase: float = 0.5
    noise_bursts: tuple = ()

    def __post_init__(self):
        check_fs(self.fs)
        if not self.duration > 0:
            raise ConfigurationError("duration must be positive")
        for name in ("hr_profile", "amplitude_profile"):
            pts = tuple((float(t), float(v)) for t, v in getattr(self, name))
            if not pts:
                raise ConfigurationError(f"{name} needs at least one point")
            if any(b[0] < a[0] for a, b in zip(pts, pts[1:])):
                raise ConfigurationError(f"{name} times must be non-decreasing")
            object.__setattr__(self, name, pts)
        if any(not 30.0 <= v <= 240.0 for _, v in self.hr_profile):
            raise ConfigurationError("heart rate must stay within [30, 240] bpm")
        if any(v < 0 for _, v in self.amplitude_profile):
            raise ConfigurationError("amplitude profile must be non-negative")
        if self.noise_sd < 0 or self.t_wave_gain < 0:
            raise ConfigurationError("noise_sd and t_wave_gain must be non-negative")
        gains = tuple(float(g) for g in self.beat_gains)
        if not gains or any(g < 0 for g in gains):
            raise ConfigurationError("beat_gains must be non-empty and non-negative")
        object.__setattr__(self, "beat_gains", gains)
        if not 0.0 <= self.first_beat_phase < 1.0:
            raise ConfigurationError("first_beat_phase must lie in [0, 1)")
        bursts = tuple((float(a), float(b), float(sd)) for a, b, sd in self.noise_bursts)
        if any(b <= a or sd < 0 for a, b, sd in bursts):
            raise ConfigurationError("noise bursts need t_start < t_stop and a non-negative sd")
        object.__setattr__(self, "noise_bursts", bursts)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def piecewise_linear(points, t):
    """Evaluate a ``(time, value)`` curve; held constant outside its span.

    At a repeated time the later point wins for ``t >= time``.
    """
    t = np.asarray(t, dtype=np.float64)
    times = np.array([p[0] for p in points])
    values = np.array([p[1] for p in points])
    if times.size == 1:
        return np.full_like(t, values[0])
    # last segment whose start is <= t; duplicates resolve to the later point
    k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 2)
    t0, t1 = times[k], times[k + 1]
    v0, v1 = values[k], values[k + 1]
    span = t1 - t0
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(span > 0, (t - t0) / np.where(span > 0, span, 1.0), 1.0)
    out = v0 + np.clip(w, 0.0, 1.0) * (v1 - v0)
    out = np.where(t < times[0], values[0], out)
    return np.where(t >= times[-1], values[-1], out)


def beat_times(spec):
    """Beat instants (s) where the integrated heart-rate phase crosses k + phase0."""
    fs = spec.fs
    n = int(round(spec.duration * fs))
    # fine grid for the phase integral
    grid = np.arange(0, n * 8 + 1) / (8 * fs)
    rate = piecewise_linear(spec.hr_profile, grid) / 60.0
    phase = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(grid))])
    targets = np.arange(spec.first_beat_phase, phase[-1], 1.0)
    return np.interp(targets, phase, grid)


def synthesize_ecg(spec):
    """Render a synthetic record and its exact R-peak ground truth.

    Each beat is the sum of the Gaussian waves in :data:`BEAT_TEMPLATE`
    centred on an integer sample, so the R wave's maximum is exactly the
    ground-truth index. Deterministic for a given `spec`.
    """
    fs = spec.fs
    n = int(round(spec.duration * fs))
    t = np.arange(n) / fs
    times = beat_times(spec)
    idx = np.round(times * fs).astype(np.int64)
    keep = (idx >= 0) & (idx < n)
    idx = idx[keep]
    idx = idx[np.concatenate([[True], np.diff(idx) > 0])]

    amps = piecewise_linear(spec.amplitude_profile, idx / fs)
    gains = np.resize(np.array(spec.beat_gains), idx.size)
    # a beat rendered with zero amplitude is not a beat
    visible = amps * gains > 0
    idx, amps, gains = idx[visible], amps[visible], gains[visible]
    x = np.zeros(n)
    for k, center in enumerate(idx):
        rr_next = (idx[k + 1] - center) / fs if k + 1 < idx.size else (
            (center - idx[k - 1]) / fs if k > 0 else 60.0 / spec.hr_profile[0][1])
        scale = R_AMPLITUDE_UV * amps[k] * gains[k]
        tc = center / fs
        for name, offset, amp, width in BEAT_TEMPLATE:
            if name == "T":
                offset, amp = _t_offset(rr_next), amp * spec.t_wave_gain
            mu = tc + offset
            lo = max(0, int((mu - 5 * width) * fs))
            hi = min(n, int((mu + 5 * width) * fs) + 2)
            if lo >= hi:
                continue
            seg = t[lo:hi]
            x[lo:hi] += scale * amp * np.exp(-0.5 * ((seg - mu) / width) ** 2)

    rng = np.random.default_rng(spec.seed)
    if spec.noise_sd > 0:
        x = x + rng.normal(0.0, spec.noise_sd, n)
    for t0, t1, sd in spec.noise_bursts:
        lo, hi = int(round(t0 * fs)), min(n, int(round(t1 * fs)))
        if hi > lo and sd > 0:
            x[lo:hi] += rng.normal(0.0, sd, hi - lo)
    label = f"synth(seed={spec.seed})"
    return EcgRecord(x, fs, label), PeakList(idx)
