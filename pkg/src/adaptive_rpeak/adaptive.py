"""The three detection benches: lightweight only, BayeSlope only, adaptive.

All benches share the preprocessing front end and work on the delay-
compensated signal, so peak indices refer to the input record directly.

Adaptive flow per full window ``k``:

1. the hysteresis detector proposes peaks;
2. window 0 is accepted unchecked, later windows go through the RR-ratio
   test with the detector's own last two peaks as context (the check
   judges the lightweight stream, so a BayeSlope window never feeds back
   into later checks);
3. a flagged window is re-detected by BayeSlope, initialized on windows
   ``k-1..k`` or continuing from its carried state (see :mod:`.schedule`);
   only window ``k``'s peaks are replaced.

The trailing partial window is always left to the lightweight detector.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import bayeslope as bsl
from . import hysteresis as hyst
from .error_detector import RrThresholds, check_window
from .errors import ConfigurationError, InsufficientDataError, UnitError
from .preprocess import PreprocessConfig, preprocess_signal
from .schedule import (
    BENCHES,
    DetectionReport,
    WindowDecision,
    merge_peaks,
    next_decision,
    window_bounds,
)
from .signal_io import ANTIALIAS_FILTER, EcgRecord, PeakList, WindowGeometry
from .validation import check_fs

__all__ = [
    "PipelineConfig",
    "DetectionReport",
    "WindowDecision",
    "merge_peaks",
    "process_record",
    "run_bayeslope",
    "run_bench",
    "run_lightweight",
    "AdaptiveRPeakDetector",
]


@dataclass(frozen=True)
class PipelineConfig:
    """Configuration of every stage for one sampling rate."""

    fs: int = 250
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    hysteresis: hyst.HysteresisParams = field(default_factory=hyst.HysteresisParams)
    bayeslope: bsl.BayeSlopeParams = field(default_factory=bsl.BayeSlopeParams)

    def __post_init__(self):
        check_fs(self.fs)
        if self.hysteresis.fs != self.fs or self.bayeslope.fs != self.fs:
            raise ConfigurationError("all stages must share the pipeline sampling rate")

    @classmethod
    def for_fs(cls, fs):
        pre = PreprocessConfig() if fs == 250 else PreprocessConfig.for_fs(fs)
        return cls(fs, pre, hyst.HysteresisParams(fs=fs), bsl.BayeSlopeParams(fs=fs))

    @classmethod
    def from_mapping(cls, mapping, fs=250):
        """Build from a flat key/value mapping (config-file keys)."""
        base = cls.for_fs(fs)
        return cls(
            fs,
            PreprocessConfig.from_mapping({**dataclasses.asdict(base.preprocess), **mapping}),
            hyst.HysteresisParams.from_mapping(mapping, fs=fs),
            bsl.BayeSlopeParams.from_mapping(mapping, fs=fs),
        )

    @property
    def geometry(self):
        return WindowGeometry.from_fs(self.fs)


def _prepare(rec, cfg, min_windows):
    if cfg is None:
        cfg = PipelineConfig.for_fs(rec.fs)
    if rec.fs != cfg.fs:
        raise UnitError(f"record is sampled at {rec.fs} Hz but the pipeline is configured for {cfg.fs} Hz")
    need = min_windows * cfg.geometry.window_len
    if len(rec) < need:
        raise InsufficientDataError(f"record has {len(rec)} samples; this bench needs at least {need}")
    return preprocess_signal(rec.samples, cfg.preprocess), cfg


def _metadata(cfg, bench, thr=None):
    meta = {
        "bench": bench,
        "antialias_filter": ANTIALIAS_FILTER,
        "preprocess": dataclasses.asdict(cfg.preprocess),
        "hysteresis": dataclasses.asdict(cfg.hysteresis),
        "bayeslope": dataclasses.asdict(cfg.bayeslope),
    }
    if thr is not None:
        meta["thresholds"] = dataclasses.asdict(thr)
    return meta


def _decisions(n, cfg, bench):
    out = []
    for k, (start, stop, partial) in enumerate(window_bounds(n, cfg.geometry)):
        out.append(next_decision(k, start, stop, partial, True, out[-1] if out else None, bench))
    return out


def run_lightweight(rec, cfg=None):
    """Hysteresis detector on every window."""
    s, cfg = _prepare(rec, cfg, 2)
    peaks, _ = hyst.detect_record(s, cfg.hysteresis, cfg.geometry)
    decisions = _decisions(s.size, cfg, "lightweight")
    return DetectionReport(
        peaks.tagged("lightweight"), decisions, cfg.fs, s.size, "lightweight", rec.label,
        lightweight_peaks=peaks, metadata=_metadata(cfg, "lightweight"),
    )


def run_bayeslope(rec, cfg=None):
    """BayeSlope over the whole record, initialized on its first two windows."""
    s, cfg = _prepare(rec, cfg, 2)
    w = cfg.geometry.window_len
    state = bsl.init_state(s[: 2 * w], cfg.bayeslope)
    peaks, _ = bsl.detect(s, state, cfg.bayeslope)
    decisions = _decisions(s.size, cfg, "bayeslope")
    return DetectionReport(
        peaks.tagged("bayeslope"), decisions, cfg.fs, s.size, "bayeslope", rec.label,
        bayeslope_peaks=peaks, metadata=_metadata(cfg, "bayeslope"),
    )


def process_record(rec, thr, cfg=None):
    """Adaptive bench: lightweight detection with BayeSlope on flagged windows.

    Raises
    ------
    InsufficientDataError
        The record holds fewer than three analysis windows.
    """
    if not isinstance(thr, RrThresholds):
        raise ConfigurationError("the adaptive bench needs RR-ratio thresholds")
    s, cfg = _prepare(rec, cfg, 3)
    geom = cfg.geometry
    params = cfg.bayeslope
    min_rr = params.min_rr_dist
    lw, _ = hyst.detect_record(s, cfg.hysteresis, geom)
    lw_idx = lw.indices
    bounds = window_bounds(s.size, geom)

    decisions = []
    bs_found = []
    state = None
    for k, (start, stop, partial) in enumerate(bounds):
        prev = decisions[-1] if decisions else None
        if k == 0 or partial:
            decisions.append(next_decision(k, start, stop, partial, False, prev))
            continue
        context = lw_idx[lw_idx < start][-2:]
        window = lw_idx[(lw_idx >= start) & (lw_idx < stop)]
        error = check_window(window, thr, context)
        d = next_decision(k, start, stop, partial, error, prev)
        if d.bs_invoked:
            if d.bs_window_count == 2:
                first = bounds[k - 1][0]
                state = bsl.init_state(s[first:stop], params)
                found, state = bsl.detect(s, state, params, start=first, stop=stop)
            else:
                found, state = bsl.detect(s, state, params, start=start, stop=stop)
            bs_found = sorted(set(bs_found) | set(found.indices.tolist()))
        decisions.append(d)

    bs = PeakList(np.array(bs_found, dtype=np.int64))
    peaks = merge_peaks(lw_idx, bs.indices, decisions, min_rr)
    return DetectionReport(
        peaks, decisions, cfg.fs, s.size, "adaptive", rec.label,
        lightweight_peaks=lw, bayeslope_peaks=bs, metadata=_metadata(cfg, "adaptive", thr),
    )


def run_bench(rec, bench, thr=None, cfg=None):
    """Dispatch to one of the three benches by name."""
    if bench == "lightweight":
        return run_lightweight(rec, cfg)
    if bench == "bayeslope":
        return run_bayeslope(rec, cfg)
    if bench == "adaptive":
        if thr is None:
            raise ConfigurationError("the adaptive bench needs a threshold file")
        return process_record(rec, thr, cfg)
    raise ConfigurationError(f"unknown bench {bench!r}; expected one of {BENCHES}")


class AdaptiveRPeakDetector(BaseEstimator):
    """End-to-end detector on raw ECG samples (microvolts).

    Parameters
    ----------
    bench : {"adaptive", "lightweight", "bayeslope"}
    fs : int
    p_low, p_high : float
        RR-ratio thresholds used by the adaptive bench.
    config : dict, optional
        Flat overrides for any stage (config-file keys).

    After ``predict`` the last :class:`DetectionReport` is kept in
    ``report_``.
    """

    def __init__(self, bench="adaptive", fs=250, p_low=0.64, p_high=1.47, config=None):
        self.bench = bench
        self.fs = fs
        self.p_low = p_low
        self.p_high = p_high
        self.config = config

    def fit(self, X=None, y=None):
        if self.bench not in BENCHES:
            raise ConfigurationError(f"unknown bench {self.bench!r}; expected one of {BENCHES}")
        self.config_ = PipelineConfig.from_mapping(self.config or {}, fs=self.fs)
        self.thresholds_ = RrThresholds(self.p_low, self.p_high)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "config_")
        rec = X if isinstance(X, EcgRecord) else EcgRecord(np.asarray(X, dtype=np.float64).ravel(), self.fs)
        self.report_ = run_bench(rec, self.bench, self.thresholds_, self.config_)
        return self.report_.peaks.indices.copy()

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)
