"""Slope-domain R-peak detection with a Bayesian expectation prior.

Each sample of the relative-energy signal goes through:

1. ``x = |s[i] - s[i-1]|``;
2. a Gaussian prior on the distance from the last peak, centred on the
   expected RR interval ``mu`` with spread ``sd`` (both tracked over the
   last five peaks);
3. a generalized-logistic normalization ``f(x)`` that saturates at the high
   cluster centroid and crosses the cluster midpoint at ``x = 2*lcentr``;
4. ``st = max(x, f(x) * prior)``, labelled by a streaming two-means
   (MacQueen) update of the low/high slope centroids.

A high-labelled sample far enough from the last peak opens a QRS search,
which closes after ``zero_run_len`` consecutive low samples or
``max_qrs_dur``. The R peak is then located between the steepest up- and
down-slope of the span.
"""

from __future__ import annotations

import copy
import math
import statistics
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigurationError, InitError, InsufficientDataError
from .signal_io import PeakList, WindowGeometry
from .validation import check_fs, check_signal

B_POLICIES = ("span", "lcentr")
PEAK_RULES = ("extremum", "midpoint")


def _ms(ms, fs):
    return int(round(ms * fs / 1000.0))


@dataclass(frozen=True)
class BayeSlopeParams:
    """Constant detector parameters; time constants are given in ms.

    `logistic_B_policy` selects the steepness of the normalizing sigmoid:
    ``"span"`` uses ``B = logistic_gain / (hcentr - lcentr)``, ``"lcentr"``
    uses ``B = logistic_gain / lcentr``. A float fixes B outright. The
    default ties the transition width to the low centroid, so an expected
    beat whose slope clears the noise floor by a few multiples is lifted to
    nearly ``hcentr`` whatever its amplitude.
    """

    fs: int = 250
    min_rr_dist_ms: float = 240.0
    max_qrs_dur_ms: float = 140.0
    zero_run_len: int = 30
    history_len: int = 5
    sd_floor_ms: float = 10.0
    init_hr_bpm: float = 75.0
    init_sd_ms: float = 100.0
    init_lcentr: float = 1.0
    init_percentile: float = 99.0
    logistic_B_policy: object = "lcentr"
    logistic_gain: float = 4.0
    peak_rule: str = "extremum"

    def __post_init__(self):
        check_fs(self.fs)
        if isinstance(self.logistic_B_policy, str):
            if self.logistic_B_policy not in B_POLICIES:
                raise ConfigurationError(f"logistic_B_policy must be one of {B_POLICIES} or a number")
        elif not float(self.logistic_B_policy) > 0:
            raise ConfigurationError("a fixed logistic B must be positive")
        if self.peak_rule not in PEAK_RULES:
            raise ConfigurationError(f"peak_rule must be one of {PEAK_RULES}")
        for name in ("min_rr_dist_ms", "max_qrs_dur_ms", "sd_floor_ms", "init_hr_bpm", "init_sd_ms",
                     "init_lcentr", "logistic_gain"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.zero_run_len <= 0 or self.history_len < 2:
            raise ConfigurationError("zero_run_len must be positive and history_len at least 2")

    @classmethod
    def from_mapping(cls, mapping, fs=None):
        known = {k: mapping[k] for k in asdict(cls()) if k in mapping}
        if fs is not None:
            known["fs"] = fs
        return cls(**known)

    @property
    def min_rr_dist(self):
        return _ms(self.min_rr_dist_ms, self.fs)

    @property
    def max_qrs_dur(self):
        return _ms(self.max_qrs_dur_ms, self.fs)

    @property
    def sd_floor(self):
        return self.sd_floor_ms * self.fs / 1000.0

    @property
    def init_mu(self):
        return 60.0 * self.fs / self.init_hr_bpm

    @property
    def init_sd(self):
        return self.init_sd_ms * self.fs / 1000.0


@dataclass
class BayeSlopeState:
    """Streaming state; a plain value that callers may copy and resume.

    Centroids are kept as running sums so each one is exactly the mean of
    the ``st`` values assigned to it. Until a cluster receives its first
    member it reports its initial value.
    """

    hinit: float
    linit: float
    mu: float
    sd: float
    hsum: float = 0.0
    lsum: float = 0.0
    hcount: int = 0
    lcount: int = 0
    last_peaks: deque = field(default_factory=deque)
    in_qrs: bool = False
    qrs_init: int = 0
    zeroctr: int = 0
    prev_sample: float | None = None
    qrs_span: list = field(default_factory=list)

    @property
    def hcentr(self):
        return self.hsum / self.hcount if self.hcount else self.hinit

    @property
    def lcentr(self):
        return self.lsum / self.lcount if self.lcount else self.linit

    @property
    def last_peak(self):
        return self.last_peaks[-1] if self.last_peaks else None

    def copy(self):
        return copy.deepcopy(self)


# ---------------------------------------------------------------------------
# per-sample primitives


def gaussian_prior(offset, mu, sd):
    """Unnormalized Gaussian weight in (0, 1], equal to 1 at ``offset == mu``."""
    z = (offset - mu) / sd
    return math.exp(-0.5 * z * z)


def logistic_midpoint(lcentr, hcentr, B):
    """Inflection point M placing ``f(2*lcentr)`` on the centroid midpoint."""
    return 2.0 * lcentr + math.log((hcentr - lcentr) / (hcentr + lcentr)) / B


def logistic_normalize(x, lcentr, hcentr, B):
    """Generalized logistic ``hcentr / (1 + exp(-B (x - M)))``.

    Monotone in `x`, bounded by ``[0, hcentr)`` and passing through
    ``(lcentr + hcentr) / 2`` at ``x = 2 * lcentr``.
    """
    if not hcentr > lcentr:
        raise ValueError("hcentr must exceed lcentr")
    z = -B * (x - logistic_midpoint(lcentr, hcentr, B))
    if z > 700.0:
        return 0.0
    return hcentr / (1.0 + math.exp(z))


def normalize_sample(x, prior, sigmoid):
    return max(x, sigmoid * prior)


def assign_and_update_clusters(st, state):
    """Label `st` (1 = high-slope cluster) and fold it into that centroid.

    Ties at the midpoint go to the low cluster.
    """
    h, l = state.hcentr, state.lcentr
    if abs(st - h) < abs(st - l):
        state.hsum += st
        state.hcount += 1
        return 1
    state.lsum += st
    state.lcount += 1
    return 0


def update_expectation(last_peaks, mu, sd, sd_floor):
    """Mean and spread of the RR intervals in `last_peaks`.

    With fewer than two peaks the current ``(mu, sd)`` is kept; with a
    single interval only ``mu`` moves.
    """
    peaks = list(last_peaks)
    if len(peaks) < 2:
        return mu, sd
    rr = [b - a for a, b in zip(peaks, peaks[1:])]
    new_mu = sum(rr) / len(rr)
    if len(rr) < 2:
        return new_mu, sd
    return new_mu, max(statistics.stdev(rr), sd_floor)


def steepness(lcentr, hcentr, params):
    policy = params.logistic_B_policy
    if policy == "span":
        return params.logistic_gain / (hcentr - lcentr)
    if policy == "lcentr":
        return params.logistic_gain / max(lcentr, 1e-12)
    return float(policy)


# ---------------------------------------------------------------------------
# detector


def init_state(init_windows, params=None):
    """Initialize centroids and expectation from two analysis windows.

    ``hcentr`` is the 99th percentile of ``|diff(s)|`` over the span,
    ``lcentr`` the configured constant (1), ``mu``/``sd`` the 75 bpm /
    100 ms defaults.

    Raises
    ------
    InsufficientDataError
        Fewer than two windows of samples.
    InitError
        ``hcentr <= lcentr`` (for instance a flat span).
    """
    params = params or BayeSlopeParams()
    s = check_signal(init_windows, min_length=0)
    need = 2 * WindowGeometry.from_fs(params.fs).window_len
    if s.size < need:
        raise InsufficientDataError(f"initialization needs {need} samples, got {s.size}")
    hcentr = float(np.percentile(np.abs(np.diff(s[:need])), params.init_percentile))
    if not hcentr > params.init_lcentr:
        raise InitError(
            f"degenerate initialization: hcentr={hcentr:g} does not exceed lcentr={params.init_lcentr:g}"
        )
    return BayeSlopeState(
        hinit=hcentr,
        linit=float(params.init_lcentr),
        mu=params.init_mu,
        sd=params.init_sd,
        last_peaks=deque(maxlen=params.history_len),
    )


@dataclass
class SampleTrace:
    """Per-sample diagnostics collected when ``detect(..., trace=...)`` is used."""

    index: list = field(default_factory=list)
    x: list = field(default_factory=list)
    prior: list = field(default_factory=list)
    sigmoid: list = field(default_factory=list)
    st: list = field(default_factory=list)
    label: list = field(default_factory=list)
    hcentr: list = field(default_factory=list)
    lcentr: list = field(default_factory=list)

    def arrays(self):
        return {k: np.asarray(v) for k, v in asdict(self).items()}


def _locate_peak(s, span, lo_index, rule):
    """Pick the R peak inside a closed QRS span.

    `span` holds ``st * sign(s2)`` for consecutive samples starting at
    `lo_index`.
    """
    vals = np.asarray(span)
    up = lo_index + int(np.argmax(vals))
    down = lo_index + int(np.argmin(vals))
    a, b = (up, down) if up <= down else (down, up)
    if rule == "midpoint":
        return (a + b) // 2
    seg = s[a : b + 1]
    return a + int(np.argmax(np.abs(seg)))


def detect(s, state, params=None, start=0, stop=None, trace=None):
    """Run the detector over ``s[start:stop]``.

    `s` is the whole relative-energy signal in absolute sample coordinates,
    so successive calls can continue from where the previous one stopped.
    The input `state` is not modified; the advanced copy is returned.

    Returns
    -------
    (PeakList, BayeSlopeState)
    """
    params = params or BayeSlopeParams()
    s = np.asarray(s, dtype=np.float64)
    stop = s.size if stop is None else min(stop, s.size)
    st_ = state.copy()
    if not st_.hcentr > st_.lcentr:
        raise InitError("detector state has hcentr <= lcentr")
    if st_.last_peaks.maxlen != params.history_len:
        st_.last_peaks = deque(st_.last_peaks, maxlen=params.history_len)

    min_rr = params.min_rr_dist
    max_qrs = params.max_qrs_dur
    zero_run = params.zero_run_len
    sd_floor = params.sd_floor
    rule = params.peak_rule
    found = []
    exp = math.exp
    log = math.log

    prev = st_.prev_sample
    if prev is None:
        prev = s[start - 1] if start > 0 else s[start] if start < stop else 0.0
    for i in range(start, stop):
        cur = s[i]
        s2 = cur - prev
        prev = cur
        x = abs(s2)

        last = st_.last_peaks[-1] if st_.last_peaks else None
        if last is None:
            bf = 0.0
        else:
            z = (i - last - st_.mu) / st_.sd
            bf = exp(-0.5 * z * z)

        h = st_.hsum / st_.hcount if st_.hcount else st_.hinit
        l = st_.lsum / st_.lcount if st_.lcount else st_.linit
        B = steepness(l, h, params)
        m = 2.0 * l + log((h - l) / (h + l)) / B
        zz = -B * (x - m)
        bt = 0.0 if zz > 700.0 else h / (1.0 + exp(zz))
        boosted = bt * bf
        stv = x if x >= boosted else boosted

        if abs(stv - h) < abs(stv - l):
            st_.hsum += stv
            st_.hcount += 1
            label = 1
        else:
            st_.lsum += stv
            st_.lcount += 1
            label = 0

        if trace is not None:
            trace.index.append(i)
            trace.x.append(x)
            trace.prior.append(bf)
            trace.sigmoid.append(bt)
            trace.st.append(stv)
            trace.label.append(label)
            trace.hcentr.append(st_.hcentr)
            trace.lcentr.append(st_.lcentr)

        if st_.in_qrs:
            st_.qrs_span.append(stv if s2 > 0 else -stv if s2 < 0 else 0.0)
            st_.zeroctr = st_.zeroctr + 1 if label == 0 else 0
            if st_.zeroctr >= zero_run or i - st_.qrs_init > max_qrs:
                peak = _locate_peak(s, st_.qrs_span, st_.qrs_init, rule)
                found.append(peak)
                st_.last_peaks.append(peak)
                st_.mu, st_.sd = update_expectation(st_.last_peaks, st_.mu, st_.sd, sd_floor)
                st_.in_qrs = False
                st_.zeroctr = 0
                st_.qrs_span = []
        elif label == 1 and (last is None or i > last + min_rr):
            st_.in_qrs = True
            st_.qrs_init = i
            st_.zeroctr = 0
            st_.qrs_span = [stv if s2 > 0 else -stv if s2 < 0 else 0.0]

    st_.prev_sample = float(prev)
    return PeakList(np.array(found, dtype=np.int64)), st_


class BayeSlopeDetector(BaseEstimator):
    """Estimator wrapper: ``fit`` initializes from the first two windows,
    ``predict`` returns R-peak indices of a relative-energy signal."""

    def __init__(self, fs=250, min_rr_dist_ms=240.0, max_qrs_dur_ms=140.0, zero_run_len=30, history_len=5,
                 sd_floor_ms=10.0, logistic_B_policy="lcentr", logistic_gain=4.0, peak_rule="extremum"):
        self.fs = fs
        self.min_rr_dist_ms = min_rr_dist_ms
        self.max_qrs_dur_ms = max_qrs_dur_ms
        self.zero_run_len = zero_run_len
        self.history_len = history_len
        self.sd_floor_ms = sd_floor_ms
        self.logistic_B_policy = logistic_B_policy
        self.logistic_gain = logistic_gain
        self.peak_rule = peak_rule

    def _params(self):
        return BayeSlopeParams(
            fs=self.fs, min_rr_dist_ms=self.min_rr_dist_ms, max_qrs_dur_ms=self.max_qrs_dur_ms,
            zero_run_len=self.zero_run_len, history_len=self.history_len, sd_floor_ms=self.sd_floor_ms,
            logistic_B_policy=self.logistic_B_policy, logistic_gain=self.logistic_gain, peak_rule=self.peak_rule,
        )

    def fit(self, X, y=None):
        self.params_ = self._params()
        self.init_state_ = init_state(check_signal(X), self.params_)
        return self

    def predict(self, X):
        s = check_signal(X)
        if not hasattr(self, "init_state_"):
            raise ConfigurationError("BayeSlopeDetector is not fitted; call fit first")
        peaks, self.state_ = detect(s, self.init_state_, self.params_)
        return peaks.indices

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)
