"""Robust dominant-period detection for series with outliers, trends and gaps."""

from .baselines import BaselineResult, acf_med, fisher_baseline, lomb_scargle
from .detector import DetectConfig, DetectionResult, detect_period
from .mspec import HuberConfig, MPeriodogram, m_periodogram, robust_acf_m
from .racf import RobustAcf, acf_bruteforce, acf_fft, pair_counts
from .series import ObservedSeries, SeriesError, linear_interpolate, load_series
from .synthbench import PrecisionReport, SynthSpec, Trend, generate, run_benchmark
from .trendfilter import TrendConfig, TrendFit, robust_detrend

__version__ = "0.1.0"

__all__ = [
    "BaselineResult",
    "DetectConfig",
    "DetectionResult",
    "HuberConfig",
    "MPeriodogram",
    "ObservedSeries",
    "PrecisionReport",
    "RobustAcf",
    "SeriesError",
    "SynthSpec",
    "Trend",
    "TrendConfig",
    "TrendFit",
    "acf_bruteforce",
    "acf_fft",
    "acf_med",
    "detect_period",
    "fisher_baseline",
    "generate",
    "linear_interpolate",
    "load_series",
    "lomb_scargle",
    "m_periodogram",
    "pair_counts",
    "robust_acf_m",
    "robust_detrend",
    "run_benchmark",
]
