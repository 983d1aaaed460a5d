"""Scoring detected R peaks against reference annotations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UndefinedScoreError
from .validation import check_fs, check_peaks

DEFAULT_TOL_MS = 150.0


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    time_diffs: tuple = ()
    pairs: tuple = field(default=(), repr=False)

    def __add__(self, other):
        return MatchResult(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn,
            self.time_diffs + other.time_diffs, self.pairs + other.pairs,
        )


@dataclass(frozen=True)
class Scores:
    f1: float
    ppv: float
    sensitivity: float


def match_peaks(detected, annotated, fs, tol_ms=DEFAULT_TOL_MS):
    """Greedy nearest-neighbour matching within ``tol_ms``.

    Candidate pairs are accepted in order of increasing ``|Δt|`` (ties
    broken by time), each peak being used at most once. Unmatched detections
    are false positives, unmatched annotations false negatives.
    """
    fs = check_fs(fs)
    if not tol_ms > 0:
        raise ValueError("tolerance must be positive")
    det = check_peaks(detected, name="detected")
    ann = check_peaks(annotated, name="annotated")
    # |Δ| samples within tol: |Δ| * 1000 <= tol_ms * fs, kept exact for integer tolerances
    limit = tol_ms * fs / 1000.0
    cands = []
    j0 = 0
    for a_pos, a in enumerate(ann):
        while j0 < det.size and det[j0] < a - limit:
            j0 += 1
        j = j0
        while j < det.size and det[j] <= a + limit:
            d = int(det[j] - a)
            if abs(d) * 1000 <= tol_ms * fs:
                cands.append((abs(d), int(a), int(det[j]), a_pos, j))
            j += 1
    cands.sort()
    used_a, used_d = set(), set()
    pairs = []
    for _, a, d, ai, dj in cands:
        if ai in used_a or dj in used_d:
            continue
        used_a.add(ai)
        used_d.add(dj)
        pairs.append((d, a))
    pairs.sort(key=lambda p: p[1])
    tp = len(pairs)
    diffs = tuple((d - a) * 1000.0 / fs for d, a in pairs)
    return MatchResult(tp, int(det.size - tp), int(ann.size - tp), diffs, tuple(pairs))


def f1(m):
    """F1 = TP / (TP + (FP + FN) / 2), with PPV and sensitivity alongside.

    PPV or sensitivity is NaN when its own denominator is zero.
    """
    if m.tp + m.fp + m.fn == 0:
        raise UndefinedScoreError("no detections and no annotations: scores are undefined")
    score = m.tp / (m.tp + 0.5 * (m.fp + m.fn))
    ppv = m.tp / (m.tp + m.fp) if m.tp + m.fp else math.nan
    se = m.tp / (m.tp + m.fn) if m.tp + m.fn else math.nan
    return Scores(score, ppv, se)


def timing_stats(m):
    """Mean and sample standard deviation of the matched offsets, in ms."""
    if m.tp < 1:
        raise UndefinedScoreError("timing statistics need at least one true positive")
    d = np.asarray(m.time_diffs, dtype=np.float64)
    return float(d.mean()), float(d.std(ddof=1)) if d.size > 1 else 0.0


def restrict(peaks, lo, hi):
    """Indices of `peaks` inside ``[lo, hi)``."""
    p = check_peaks(peaks)
    return p[(p >= lo) & (p < hi)]


def score_region(detected, annotated, fs, lo, hi, tol_ms=DEFAULT_TOL_MS):
    """Match only inside ``[lo, hi)``.

    Detections are taken from the region widened by the tolerance, and any
    of those that end up unmatched outside ``[lo, hi)`` are discarded, so
    edge effects neither reward nor penalize a detector.
    """
    margin = int(math.ceil(tol_ms * fs / 1000.0))
    ann = restrict(annotated, lo, hi)
    det = restrict(detected, lo - margin, hi + margin)
    m = match_peaks(det, ann, fs, tol_ms)
    matched = {d for d, _ in m.pairs}
    stray = [d for d in det if d not in matched and not lo <= d < hi]
    return MatchResult(m.tp, m.fp - len(stray), m.fn, m.time_diffs, m.pairs)


@dataclass
class ScoreTable:
    """Rows of ``(detector, segment_class)`` with pooled and averaged scores."""

    rows: dict = field(default_factory=dict)

    def add(self, detector, segment_class, match):
        self.rows.setdefault((detector, segment_class), []).append(match)

    def pooled(self, detector, segment_class=None):
        ms = [m for (d, c), v in self.rows.items() for m in v if d == detector and (segment_class in (None, c))]
        total = MatchResult(0, 0, 0)
        for m in ms:
            total = total + m
        return total

    def records(self):
        """One dict per row (plus a per-detector ``Total``), Table-I style."""
        out = []
        detectors = sorted({d for d, _ in self.rows}, key=list(dict.fromkeys(d for d, _ in self.rows)).index)
        classes = list(dict.fromkeys(c for _, c in self.rows))
        for det in detectors:
            for cls in classes + [None]:
                group = [m for (d, c), v in self.rows.items() for m in v if d == det and cls in (None, c)]
                if not group:
                    continue
                pooled = self.pooled(det, cls)
                row = {"detector": det, "segment_class": cls or "Total", "segments": len(group),
                       "tp": pooled.tp, "fp": pooled.fp, "fn": pooled.fn}
                try:
                    sc = f1(pooled)
                    row.update(f1=sc.f1, ppv=sc.ppv, se=sc.sensitivity)
                except UndefinedScoreError:
                    row.update(f1=math.nan, ppv=math.nan, se=math.nan)
                per = []
                for m in group:
                    try:
                        per.append(f1(m).f1)
                    except UndefinedScoreError:
                        pass
                row["f1_segment_mean"] = float(np.mean(per)) if per else math.nan
                if pooled.tp:
                    row["dt_mean_ms"], row["dt_sd_ms"] = timing_stats(pooled)
                else:
                    row["dt_mean_ms"] = row["dt_sd_ms"] = math.nan
                out.append(row)
        return out

    def render(self):
        lines = [f"{'detector':<12}{'class':<16}{'F1%':>7}{'PPV%':>7}{'Se%':>7}{'F1seg%':>8}  time (ms)"]
        for r in self.records():
            lines.append(
                f"{r['detector']:<12}{r['segment_class']:<16}{100 * r['f1']:7.1f}{100 * r['ppv']:7.1f}"
                f"{100 * r['se']:7.1f}{100 * r['f1_segment_mean']:8.1f}  {r['dt_mean_ms']:.1f}±{r['dt_sd_ms']:.1f}"
            )
        return "\n".join(lines)
