"""Per-window dispatch bookkeeping shared by the pipeline and the energy model.

A window flagged by the error detector hands detection over to BayeSlope.
If the window before it was clean, both windows are shipped to the cluster
so BayeSlope can initialize on them; if it was already BayeSlope-processed,
the detector state is carried over and only the flagged window is sent.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError
from .signal_io import PeakList, WindowGeometry

BENCHES = ("lightweight", "bayeslope", "adaptive")


@dataclass(frozen=True)
class WindowDecision:
    """What happened to one analysis window.

    ``bs_window_count`` is 2 for a fresh BayeSlope call that also covers the
    previous (initialization) window, 1 for a call continuing from carried
    state, 0 when BayeSlope did not run. ``overlap`` marks calls that re-read
    the tail of the previous window to avoid border misses.
    """

    window_index: int
    start: int
    stop: int
    partial: bool = False
    checked: bool = False
    error_flag: bool = False
    bs_invoked: bool = False
    bs_window_count: int = 0
    peaks_source: str = "lightweight"
    overlap: bool = False

    def __post_init__(self):
        if self.bs_invoked != (self.bs_window_count > 0):
            raise ConfigurationError("bs_window_count must be positive exactly when BayeSlope runs")
        if self.bs_window_count not in (0, 1, 2):
            raise ConfigurationError("bs_window_count must be 0, 1 or 2")
        expected = "bayeslope" if self.bs_invoked else "lightweight"
        if self.peaks_source != expected:
            raise ConfigurationError(f"peaks_source must be {expected!r} for this decision")

    @property
    def n_samples(self):
        return self.stop - self.start

    def to_dict(self):
        return asdict(self)


@dataclass
class DetectionReport:
    """Merged detector output for one record plus the per-window decisions."""

    peaks: PeakList
    decisions: list
    fs: int
    n_samples: int
    bench: str = "adaptive"
    label: str = ""
    lightweight_peaks: PeakList | None = None
    bayeslope_peaks: PeakList | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def trigger_fraction(self):
        return trigger_fraction(self.decisions)

    def to_dict(self):
        return {
            "bench": self.bench,
            "label": self.label,
            "fs": self.fs,
            "n_samples": self.n_samples,
            "trigger_fraction": self.trigger_fraction,
            "peaks": self.peaks.indices.tolist(),
            "sources": list(self.peaks.sources) if self.peaks.sources else None,
            "decisions": [d.to_dict() for d in self.decisions],
            "metadata": dict(self.metadata),
        }


def trigger_fraction(decisions):
    """BayeSlope-processed full windows (init windows included) over full windows."""
    full = [d for d in decisions if not d.partial]
    if not full:
        return 0.0
    return min(1.0, sum(d.bs_window_count for d in full) / len(full))


def window_bounds(n_samples, geom):
    """``(start, stop, partial)`` for every analysis window of a record."""
    w = geom.window_len
    return [(s, min(s + w, n_samples), s + w > n_samples) for s in range(0, n_samples, w)]


def next_decision(k, start, stop, partial, error, previous, bench="adaptive"):
    """Decision for window `k` given its error flag and the previous decision."""
    if bench == "lightweight" or (bench == "adaptive" and (k == 0 or partial)):
        return WindowDecision(k, start, stop, partial)
    if bench == "bayeslope":
        # every window is a separate call re-reading the previous border
        return WindowDecision(k, start, stop, partial, False, True, True, 1, "bayeslope", overlap=k > 0)
    if bench != "adaptive":
        raise ConfigurationError(f"unknown bench {bench!r}; expected one of {BENCHES}")
    if not error:
        return WindowDecision(k, start, stop, partial, True, False)
    carried = previous is not None and previous.bs_invoked
    count = 1 if carried else 2
    return WindowDecision(k, start, stop, partial, True, True, True, count, "bayeslope", overlap=carried)


def plan_decisions(n_samples, fs, bench, error_flags=()):
    """Decision sequence for a bench given precomputed per-window error flags.

    `error_flags` may be a sequence indexed by window or a set of flagged
    window indices; it only matters for the adaptive bench.
    """
    geom = WindowGeometry.from_fs(fs)
    flags = error_flags if isinstance(error_flags, (set, frozenset)) else {
        k for k, f in enumerate(error_flags) if f
    }
    out = []
    for k, (start, stop, partial) in enumerate(window_bounds(n_samples, geom)):
        out.append(next_decision(k, start, stop, partial, k in flags, out[-1] if out else None, bench))
    return out


def merge_peaks(lightweight, bayeslope, decisions, min_distance):
    """Take each window's peaks from the source its decision names.

    Peaks closer than `min_distance` across a window border are collapsed,
    keeping the BayeSlope one (or the earlier one between equals).
    """
    lw = np.asarray(getattr(lightweight, "indices", lightweight), dtype=np.int64)
    bs = np.asarray(getattr(bayeslope, "indices", bayeslope), dtype=np.int64)
    picked = []
    for d in decisions:
        src, tag = (bs, "bayeslope") if d.bs_invoked else (lw, "lightweight")
        sel = src[(src >= d.start) & (src < d.stop)]
        picked.extend((int(i), tag) for i in sel)
    picked.sort()
    out = []
    for idx, tag in picked:
        if out and idx - out[-1][0] < min_distance:
            if tag == "bayeslope" and out[-1][1] != "bayeslope":
                out[-1] = (idx, tag)
            continue
        out.append((idx, tag))
    return PeakList(np.array([i for i, _ in out], dtype=np.int64), tuple(t for _, t in out))
