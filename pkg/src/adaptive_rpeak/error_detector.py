"""RR-ratio tail test for windows where the lightweight detector slipped.

A missed beat roughly doubles one RR interval and an inserted beat roughly
halves one, so the ratio of consecutive intervals leaves its usual band. The
band is the [0.5, 99.5] percentile range of ratios pooled over other
subjects (leave-one-out).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigurationError, FormatError
from .validation import check_peaks

MIN_POOL = 200
P_LOW = 0.5
P_HIGH = 99.5


class ThresholdQualityWarning(UserWarning):
    """The pooled ratio count is too small for stable tail percentiles."""


@dataclass(frozen=True)
class RrThresholds:
    p_low: float
    p_high: float
    source_count: int = 0
    excluded_subject: str | None = None

    def __post_init__(self):
        if not (0 < self.p_low <= 1 <= self.p_high and math.isfinite(self.p_high)):
            raise ConfigurationError(
                f"thresholds must satisfy 0 < p_low <= 1 <= p_high, got ({self.p_low}, {self.p_high})"
            )

    def is_outlier(self, ratio):
        return ratio < self.p_low or ratio > self.p_high


@dataclass(frozen=True)
class RrRatioSeries:
    """``ratios[k] = RR(k+1) / RR(k)`` with the peak triple behind each."""

    ratios: np.ndarray
    anchor_indices: np.ndarray

    def __len__(self):
        return self.ratios.size


def rr_ratios(peaks):
    """Consecutive RR ratios; fewer than three peaks give an empty series."""
    p = check_peaks(peaks)
    if p.size < 3:
        return RrRatioSeries(np.zeros(0), np.zeros((0, 3), dtype=np.int64))
    rr = np.diff(p).astype(np.float64)
    anchors = np.stack([p[:-2], p[1:-1], p[2:]], axis=1)
    return RrRatioSeries(rr[1:] / rr[:-1], anchors)


def _ratios_of(series):
    return np.asarray(getattr(series, "ratios", series), dtype=np.float64)


def build_thresholds(all_subjects, exclude=None, p_low=P_LOW, p_high=P_HIGH):
    """Tail percentiles of the ratios pooled over every subject but `exclude`.

    Percentiles interpolate linearly between order statistics. A pool of
    fewer than 200 ratios triggers a :class:`ThresholdQualityWarning`.

    Raises
    ------
    ConfigurationError
        The pool is empty once `exclude` is removed.
    """
    pool = [_ratios_of(series) for subject, series in all_subjects.items() if subject != exclude]
    pool = np.concatenate(pool) if pool else np.zeros(0)
    if pool.size == 0:
        raise ConfigurationError("no RR ratios left to build thresholds from")
    if not np.all(np.isfinite(pool)) or np.any(pool <= 0):
        raise ConfigurationError("RR ratios must be finite and positive")
    if pool.size < MIN_POOL:
        warnings.warn(
            f"only {pool.size} RR ratios pooled; tail percentiles are unreliable below {MIN_POOL}",
            ThresholdQualityWarning,
            stacklevel=2,
        )
    lo, hi = np.percentile(pool, [p_low, p_high], method="linear")
    return RrThresholds(float(lo), float(hi), int(pool.size), exclude)


def check_window(window_peaks, thr, context=()):
    """True when the window holds an outlying RR ratio.

    `context` carries the last (up to two) peaks before the window so that
    ratios spanning the boundary are tested too. With fewer than three
    peaks in total nothing can be checked and the window is flagged.
    """
    p = np.concatenate([check_peaks(context)[-2:], check_peaks(window_peaks)])
    if p.size < 3:
        return True
    r = rr_ratios(p).ratios
    return bool(np.any((r < thr.p_low) | (r > thr.p_high)))


# ---------------------------------------------------------------------------
# threshold file: key=value lines


def save_thresholds(thr, path):
    lines = [
        f"p_low={thr.p_low!r}",
        f"p_high={thr.p_high!r}",
        f"source_count={thr.source_count}",
        f"excluded_subject={'' if thr.excluded_subject is None else thr.excluded_subject}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_thresholds(path):
    """Read a threshold file written by :func:`save_thresholds`."""
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{path}:{n}: expected key=value")
        values[key.strip()] = value.strip()
    try:
        return RrThresholds(
            float(values["p_low"]),
            float(values["p_high"]),
            int(values.get("source_count", 0)),
            values.get("excluded_subject") or None,
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise FormatError(f"{path}: bad or missing threshold field ({exc})") from exc


class RrErrorDetector(BaseEstimator):
    """Leave-one-out threshold estimator.

    ``fit`` takes a mapping ``subject -> peaks or ratio series``;
    ``predict`` takes a list of ``(window_peaks, context)`` pairs and returns
    one error flag per window.
    """

    def __init__(self, exclude=None, p_low=P_LOW, p_high=P_HIGH):
        self.exclude = exclude
        self.p_low = p_low
        self.p_high = p_high

    def fit(self, X, y=None):
        subjects = {
            k: v if isinstance(v, RrRatioSeries) else rr_ratios(v) for k, v in dict(X).items()
        }
        self.thresholds_ = build_thresholds(subjects, self.exclude, self.p_low, self.p_high)
        return self

    def predict(self, X):
        check_is_fitted(self, "thresholds_")
        return np.array([check_window(w, self.thresholds_, c) for w, c in X], dtype=bool)
