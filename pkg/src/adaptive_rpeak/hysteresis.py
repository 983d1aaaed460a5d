"""Lightweight two-threshold R-peak detector run window by window.

The thresholds for a window come from the statistics of the window before
it, so a beat that is much smaller than its neighbours is easily lost. That
fragility is intended: it is what the error detector is built to catch.

Update rule, per full window ``w`` (magnitudes taken on the polarity-
oriented signal)::

    target = high_frac * (mean|w| + max|w|) / 2
    high   = max(floor, blend * high + (1 - blend) * target)
    low    = max(floor, low_frac * high)
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigurationError
from .preprocess import segment_windows
from .signal_io import PeakList, WindowGeometry
from .validation import check_fs, check_signal


@dataclass(frozen=True)
class HysteresisParams:
    fs: int = 250
    hyst_high_frac: float = 0.6
    hyst_low_frac: float = 0.5
    hyst_floor_uv: float = 50.0
    hyst_blend: float = 0.5
    refractory_ms: float = 240.0

    def __post_init__(self):
        check_fs(self.fs)
        if not 0 < self.hyst_low_frac <= 1:
            raise ConfigurationError("hyst_low_frac must lie in (0, 1]")
        if not self.hyst_high_frac > 0 or self.hyst_floor_uv < 0:
            raise ConfigurationError("hyst_high_frac must be positive and hyst_floor_uv non-negative")
        if not 0 <= self.hyst_blend < 1:
            raise ConfigurationError("hyst_blend must lie in [0, 1)")

    @property
    def refractory(self):
        return int(round(self.refractory_ms * self.fs / 1000.0))

    @classmethod
    def from_mapping(cls, mapping, fs=None):
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {k: v for k, v in mapping.items() if k in known}
        if fs is not None:
            kwargs["fs"] = fs
        return cls(**kwargs)


@dataclass(frozen=True)
class HysteresisState:
    """Thresholds (on magnitudes) plus the excursion carried across windows."""

    high_thr: float
    low_thr: float
    polarity: int = 1
    last_peak: int | None = None
    in_excursion: bool = False
    exc_index: int = -1
    exc_value: float = 0.0

    def __post_init__(self):
        if not self.high_thr >= self.low_thr >= 0:
            raise ConfigurationError("thresholds must satisfy high_thr >= low_thr >= 0")
        if self.polarity not in (1, -1):
            raise ConfigurationError("polarity must be +1 or -1")


def init_state(first_window, params=None):
    """Thresholds at 0.6 and 0.3 of the window's peak magnitude.

    The polarity is the sign of the sample with the largest magnitude; an
    all-zero window leaves both thresholds at the floor.
    """
    params = params or HysteresisParams()
    w = check_signal(getattr(first_window, "samples", first_window))
    k = int(np.argmax(np.abs(w)))
    peak = float(abs(w[k]))
    polarity = -1 if w[k] < 0 else 1
    high = max(params.hyst_floor_uv, params.hyst_high_frac * peak)
    low = max(params.hyst_floor_uv, params.hyst_low_frac * params.hyst_high_frac * peak)
    return HysteresisState(high_thr=high, low_thr=min(low, high), polarity=polarity)


def next_thresholds(w, state, params):
    """Thresholds for the next window from this window's magnitudes."""
    mag = np.maximum(state.polarity * np.asarray(w, dtype=np.float64), 0.0)
    target = params.hyst_high_frac * 0.5 * (float(mag.mean()) + float(mag.max()))
    high = max(params.hyst_floor_uv, params.hyst_blend * state.high_thr + (1 - params.hyst_blend) * target)
    low = max(params.hyst_floor_uv, params.hyst_low_frac * high)
    return high, min(low, high)


def detect_window(win, state, params=None, start=None):
    """Detect peaks in one window.

    Parameters
    ----------
    win : WindowView or array_like
        Window samples; a :class:`WindowView` carries its absolute start.
    state : HysteresisState
    start : int, optional
        Absolute index of the first sample when `win` is a bare array.

    Returns
    -------
    (PeakList, HysteresisState)
        Peaks in absolute sample indices and the state for the next window.
        Partial windows do not refresh the thresholds.
    """
    params = params or HysteresisParams()
    if start is None:
        start = getattr(win, "start", 0)
    partial = getattr(win, "partial", False)
    w = check_signal(getattr(win, "samples", win))
    y = state.polarity * w
    hi, lo = state.high_thr, state.low_thr
    refractory = params.refractory
    last = state.last_peak
    inside, k_max, v_max = state.in_excursion, state.exc_index, state.exc_value
    found = []

    def emit(k):
        nonlocal last
        if last is None or k - last >= refractory:
            found.append(k)
            last = k

    for j, v in enumerate(y):
        i = start + j
        if inside:
            if v > v_max:
                k_max, v_max = i, v
            if v < lo:
                emit(k_max)
                inside = False
        elif v > hi:
            inside, k_max, v_max = True, i, v

    if partial:
        high, low = hi, lo
    else:
        high, low = next_thresholds(w, state, params)
    new = HysteresisState(high, low, state.polarity, last, inside, k_max, float(v_max))
    return PeakList(np.array(found, dtype=np.int64)), new


def detect_record(s, params=None, geom=None):
    """Run the detector over every window of `s`; returns (PeakList, states).

    ``states[k]`` is the state window ``k`` was processed with.
    """
    params = params or HysteresisParams()
    geom = geom or WindowGeometry.from_fs(params.fs)
    views = segment_windows(s, geom)
    state = init_state(views[0], params)
    peaks, states = [], []
    for view in views:
        states.append(state)
        p, state = detect_window(view, state, params)
        peaks.extend(p.indices.tolist())
    return PeakList(np.array(peaks, dtype=np.int64)), states


class HysteresisDetector(BaseEstimator):
    """Estimator wrapper: ``fit`` sets thresholds from the first window,
    ``predict`` returns the R-peak indices of a relative-energy signal."""

    def __init__(self, fs=250, hyst_high_frac=0.6, hyst_low_frac=0.5, hyst_floor_uv=50.0, hyst_blend=0.5,
                 refractory_ms=240.0):
        self.fs = fs
        self.hyst_high_frac = hyst_high_frac
        self.hyst_low_frac = hyst_low_frac
        self.hyst_floor_uv = hyst_floor_uv
        self.hyst_blend = hyst_blend
        self.refractory_ms = refractory_ms

    def _params(self):
        return HysteresisParams(**self.get_params())

    def fit(self, X, y=None):
        params = self._params()
        geom = WindowGeometry.from_fs(params.fs)
        x = check_signal(X, min_length=geom.window_len)
        self.state_ = init_state(x[: geom.window_len], params)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "state_")
        params = self._params()
        geom = WindowGeometry.from_fs(params.fs)
        x = check_signal(X, min_length=geom.window_len)
        state = self.state_
        peaks = []
        for view in segment_windows(x, geom):
            p, state = detect_window(view, state, params)
            peaks.extend(p.indices.tolist())
        return np.array(peaks, dtype=np.int64)

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)
