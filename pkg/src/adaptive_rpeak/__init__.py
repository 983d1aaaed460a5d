"""Adaptive R-peak detection: a lightweight hysteresis detector guarded by an
RR-ratio error check, with BayeSlope dispatched on flagged windows, plus a
duty-cycle energy model of the two-domain platform it runs on."""

from .adaptive import AdaptiveRPeakDetector, PipelineConfig, process_record, run_bench
from .bayeslope import BayeSlopeDetector, BayeSlopeParams, BayeSlopeState
from .error_detector import RrErrorDetector, RrRatioSeries, RrThresholds, build_thresholds, check_window, rr_ratios
from .evaluation import MatchResult, ScoreTable, f1, match_peaks, timing_stats
from .hysteresis import HysteresisDetector, HysteresisState
from .preprocess import MorphologicalFilter, PreprocessConfig, RelativeEnergy
from .schedule import DetectionReport, WindowDecision
from .signal_io import EcgRecord, PeakList, SynthesisSpec, WindowGeometry, synthesize_ecg

__version__ = "0.1.0"
