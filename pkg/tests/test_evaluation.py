import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptive_rpeak.errors import UndefinedScoreError
from adaptive_rpeak.evaluation import MatchResult, ScoreTable, f1, match_peaks, score_region, timing_stats

from .oracles import best_matching_count

FS = 250
TOL = 37.5  # 150 ms in samples


def test_inside_tolerance():
    m = match_peaks([100], [130], FS)
    assert (m.tp, m.fp, m.fn) == (1, 0, 0)
    assert m.time_diffs == (-120.0,)


def test_outside_tolerance():
    m = match_peaks([100], [140], FS)
    assert (m.tp, m.fp, m.fn) == (0, 1, 1)


def test_tolerance_edge_is_inclusive():
    assert match_peaks([0], [75], 500).tp == 1  # exactly 150 ms
    assert match_peaks([0], [76], 500).tp == 0


def test_nearest_wins():
    m = match_peaks([100, 105], [102], FS)
    assert (m.tp, m.fp, m.fn) == (1, 1, 0)
    assert m.pairs == ((100, 102),)
    assert best_matching_count([100, 105], [102], TOL) == 1


def test_empty_lists():
    assert match_peaks([], [10, 20], FS).fn == 2
    assert match_peaks([10], [], FS).fp == 1


def test_bad_tolerance():
    with pytest.raises(ValueError):
        match_peaks([1], [1], FS, tol_ms=0)


# F1, PPV and Se worked out by hand from the counts
TRIPLES = [
    ((99, 1, 1), (0.99, 0.99, 0.99)),
    ((10, 0, 0), (1.0, 1.0, 1.0)),
    ((1, 1, 0), (2 / 3, 0.5, 1.0)),
    ((1, 0, 1), (2 / 3, 1.0, 0.5)),
    ((0, 1, 1), (0.0, 0.0, 0.0)),
    ((0, 3, 0), (0.0, 0.0, math.nan)),
    ((0, 0, 4), (0.0, math.nan, 0.0)),
    ((3, 1, 1), (0.75, 0.75, 0.75)),
    ((8, 2, 0), (8 / 9, 0.8, 1.0)),
    ((8, 0, 2), (8 / 9, 1.0, 0.8)),
    ((5, 5, 5), (0.5, 0.5, 0.5)),
    ((90, 10, 0), (18 / 19, 0.9, 1.0)),
    ((45, 5, 15), (9 / 11, 0.9, 0.75)),
    ((100, 0, 25), (8 / 9, 1.0, 0.8)),
    ((7, 3, 1), (7 / 9, 0.7, 0.875)),
    ((2, 2, 2), (0.5, 0.5, 0.5)),
    ((60, 20, 20), (0.75, 0.75, 0.75)),
    ((1, 0, 0), (1.0, 1.0, 1.0)),
    ((4, 4, 0), (2 / 3, 0.5, 1.0)),
    ((19, 1, 3), (19 / 21, 0.95, 19 / 22)),
]


@pytest.mark.parametrize("counts, expected", TRIPLES)
def test_hand_computed_scores(counts, expected):
    s = f1(MatchResult(*counts))
    for got, want in zip((s.f1, s.ppv, s.sensitivity), expected):
        if math.isnan(want):
            assert math.isnan(got)
        else:
            assert got == pytest.approx(want, abs=1e-15)


def test_all_empty_is_undefined():
    with pytest.raises(UndefinedScoreError):
        f1(MatchResult(0, 0, 0))


def test_timing_examples():
    assert timing_stats(MatchResult(3, 0, 0, (0.0, 0.0, 0.0))) == (0.0, 0.0)
    mean, sd = timing_stats(MatchResult(2, 0, 0, (4.0, -4.0)))
    assert mean == 0.0
    assert sd == pytest.approx(math.sqrt(32), abs=1e-12)
    assert round(sd, 2) == 5.66
    with pytest.raises(UndefinedScoreError):
        timing_stats(MatchResult(0, 1, 1))


# --- properties -------------------------------------------------------------


def peak_sets(min_gap):
    """Up to 8 sorted peaks at least `min_gap` apart."""
    return st.lists(st.integers(min_gap, 3 * min_gap), min_size=0, max_size=8).map(
        lambda gaps: np.cumsum(gaps).tolist()
    )


@given(peak_sets(76), peak_sets(76), st.integers(-60, 60))
def test_greedy_equals_brute_force(det, ann, shift):
    # min RR 76 samples = 304 ms > 2 x 150 ms
    det = [d + shift for d in det if d + shift > 0]
    m = match_peaks(det, ann, FS)
    assert m.tp == best_matching_count(det, ann, TOL)


@given(peak_sets(20), peak_sets(20))
def test_swapping_roles(det, ann):
    a = match_peaks(det, ann, FS)
    b = match_peaks(ann, det, FS)
    assert (a.tp, a.fp, a.fn) == (b.tp, b.fn, b.fp)
    assert sorted(a.time_diffs) == sorted(-d for d in b.time_diffs)


@given(peak_sets(20), peak_sets(20), st.integers(0, 10_000))
def test_shift_invariance(det, ann, off):
    a = match_peaks(det, ann, FS)
    b = match_peaks([d + off for d in det], [x + off for x in ann], FS)
    assert (a.tp, a.fp, a.fn, a.time_diffs) == (b.tp, b.fp, b.fn, b.time_diffs)


@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 499))
def test_f1_monotone_in_tp(tp, errors, split):
    fp = min(split, errors)
    lo = MatchResult(tp, fp, errors - fp)
    hi = MatchResult(tp + 1, fp, errors - fp)
    if tp + errors == 0:
        assert f1(hi).f1 == 1.0
    else:
        assert f1(hi).f1 >= f1(lo).f1


# --- regions and tables -----------------------------------------------------


def test_region_discards_stray_edge_detections():
    m = score_region([90, 210, 400, 610], [205, 400], FS, 100, 600)
    assert (m.tp, m.fp, m.fn) == (2, 0, 0)
    m = score_region([250, 300], [205], FS, 100, 600)
    assert (m.tp, m.fp, m.fn) == (0, 2, 1)


def test_region_keeps_edge_match():
    # an annotation just inside may be matched by a detection just outside
    m = score_region([95], [105], FS, 100, 600)
    assert (m.tp, m.fp, m.fn) == (1, 0, 0)


def test_table_pools_counts():
    t = ScoreTable()
    t.add("bayeslope", "VO2max", MatchResult(99, 1, 0, (2.0,) * 99))
    t.add("bayeslope", "VO2max", MatchResult(1, 0, 1, (4.0,)))
    t.add("bayeslope", "Recovery", MatchResult(50, 0, 0, (0.0,) * 50))
    p = t.pooled("bayeslope", "VO2max")
    assert (p.tp, p.fp, p.fn) == (100, 1, 1)
    rows = {(r["detector"], r["segment_class"]): r for r in t.records()}
    assert rows[("bayeslope", "VO2max")]["f1"] == pytest.approx(100 / 101)
    assert rows[("bayeslope", "VO2max")]["f1_segment_mean"] == pytest.approx((99 / 99.5 + 1 / 1.5) / 2)
    assert rows[("bayeslope", "Total")]["segments"] == 3
    assert "Total" in t.render()
