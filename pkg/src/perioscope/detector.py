"""Dominant-period decision: Fisher's g-test on the Wiener-Khinchin spectrum of
the robust ACF, refined by the spacing of ACF peaks.

The periodogram bin ``k`` only pins the period to roughly ``[N/k, N/(k-1))``.
The ACF peak spacing supplies the exact length, and it is accepted only when
it falls inside the window allowed by that bin.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import mpmath
import numpy as np
from scipy import fft as sfft

from .mspec import HuberConfig, robust_acf_m
from .racf import RobustAcf
from .series import ObservedSeries, SeriesError, robust_scale, scan_missing_blocks
from .trendfilter import TrendConfig, robust_detrend

MIN_DETECT_LENGTH = 16


@dataclass(frozen=True)
class DetectConfig:
    alpha: float = 0.05
    peak_height_frac: float = 0.3
    trend_cfg: TrendConfig = field(default_factory=TrendConfig)
    huber_cfg: HuberConfig = field(default_factory=HuberConfig)
    use_m_periodogram: bool = True
    fallback_to_bin: bool = False

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not 0 < self.peak_height_frac < 1:
            raise ValueError(f"peak_height_frac must lie in (0, 1), got {self.peak_height_frac!r}")


@dataclass
class DetectionResult:
    periodic: bool
    period: int | None
    g_stat: float
    p_value: float
    k_star: int | None
    acf_peaks: list[int]
    median_peak_distance: float | None
    rk_window: tuple[float, float] | None
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["rk_window"] = list(self.rk_window) if self.rk_window is not None else None
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def _fill_invalid(acf: RobustAcf) -> np.ndarray:
    r = np.asarray(acf.r, dtype=float)
    ok = acf.valid & np.isfinite(r)
    if not ok.any():
        raise ValueError("all lags are invalid")
    if ok.all():
        return r.copy()
    lags = np.arange(r.size)
    return np.interp(lags, lags[ok], r[ok])


def wk_periodogram(acf: RobustAcf) -> np.ndarray:
    """Power spectrum of an ACF on the length-``N`` Fourier grid.

    The even extension ``r[-(N-1)..N-1]`` is folded onto ``N`` points, so bin
    ``k`` corresponds to period ``N/k`` just like the periodogram of the
    series. Lag ``k`` is weighted by ``(N - k)/N`` before the transform: for a
    complete series this reproduces the ordinary periodogram exactly, and
    for gapped data it keeps the poorly supported long lags from dominating.
    Negative power is clamped to zero and the DC bin is zeroed.
    """
    r = _fill_invalid(acf)
    n = r.size
    k = np.arange(n)
    weighted = r * (n - k) / n
    folded = weighted.copy()
    folded[1:] += weighted[1:][::-1]
    power = sfft.fft(folded).real
    power = np.maximum(power, 0.0)
    power[0] = 0.0
    return power


def fisher_ordinates(power: np.ndarray) -> np.ndarray:
    """Bins ``1..floor(L/2)-1`` of a length-``L`` spectrum (no DC, no Nyquist)."""
    L = len(power)
    return np.asarray(power[1 : L // 2], dtype=float)


def fisher_g(ordinates) -> tuple[float, int]:
    """Fisher's g for periodogram ordinates at bins ``1..M``.

    Returns ``(g, k_star)`` where ``k_star`` is the 1-based bin of the
    maximum, the smallest on ties.
    """
    p = np.asarray(ordinates, dtype=float)
    if p.size < 2:
        raise ValueError("need at least two ordinates")
    total = p.sum()
    if not total > 0:
        raise ValueError("all-zero spectrum: g is undefined")
    j = int(np.argmax(p))
    return float(p[j] / total), j + 1


def fisher_pvalue(g: float, m: int) -> float:
    """Exact null tail probability of Fisher's g over ``m`` ordinates.

    ``P(G > g) = sum_{j=1}^{floor(1/g)} (-1)^(j-1) C(m, j) (1 - j g)^(m-1)``.
    Terms are formed as logarithms and summed in extended precision, since
    the alternating series cancels badly for small ``g``.
    """
    if m < 2:
        raise ValueError("m must be at least 2")
    if not 0 < g <= 1:
        raise ValueError(f"g must lie in (0, 1], got {g!r}")
    jmax = min(int(math.floor(1.0 / g)), m)
    logs = []
    for j in range(1, jmax + 1):
        base = 1.0 - j * g
        if base <= 0:
            break
        logs.append((j, math.lgamma(m + 1) - math.lgamma(j + 1) - math.lgamma(m - j + 1)
                     + (m - 1) * math.log(base)))
    if not logs:
        return 0.0
    biggest = max(v for _, v in logs)
    # the sum is at most 1, so precision must cover the largest term's magnitude
    digits = int(biggest / math.log(10)) + 30 if biggest > 0 else 30
    with mpmath.workdps(max(digits, 30)):
        total = mpmath.mpf(0)
        for j, _ in logs:
            term = mpmath.binomial(m, j) * mpmath.power(1 - j * mpmath.mpf(g), m - 1)
            total += term if j % 2 else -term
        p = float(total)
    return min(max(p, 0.0), 1.0)


def find_acf_peaks(acf: RobustAcf, height_frac: float, min_distance: int = 1) -> list[int]:
    """Local maxima of the normalised ACF over lags ``2..N/2``.

    A peak must be strictly above its left neighbour and above the first
    differing value to its right, reach ``height_frac``, and sit on a valid
    lag. Flat tops report their leftmost lag.

    With ``min_distance > 1`` peaks are visited from highest to lowest and
    any peak closer than ``min_distance`` to an already kept one is dropped,
    which removes the split maxima that estimation noise creates around a
    true ACF peak.
    """
    acf = acf.normalize()
    r = np.asarray(acf.r, dtype=float)
    valid = acf.valid & np.isfinite(r)
    n = r.size
    hi = n // 2
    peaks: list[int] = []
    k = 2
    while k <= hi:
        if not valid[k] or not valid[k - 1] or r[k] < height_frac or r[k] <= r[k - 1]:
            k += 1
            continue
        j = k
        while j + 1 < n and valid[j + 1] and r[j + 1] == r[k]:
            j += 1
        if j + 1 < n and valid[j + 1] and r[j + 1] < r[k]:
            peaks.append(k)
        k = j + 1
    if min_distance > 1 and len(peaks) > 1:
        kept: list[int] = []
        for k in sorted(peaks, key=lambda lag: (-r[lag], lag)):
            if all(abs(k - j) >= min_distance for j in kept):
                kept.append(k)
        peaks = sorted(kept)
    return peaks


def median_peak_distance(peaks: list[int]) -> float | None:
    if not peaks:
        return None
    if len(peaks) == 1:
        return float(peaks[0])
    return float(np.median(np.diff(peaks)))


def cycle_spacing(peaks: list[int], rough: float | None = None) -> float | None:
    """Median of ``peak / cycle`` over the peaks, anchored at the lag-0 peak.

    Each peak is assigned the cycle index ``round(peak / rough)``, where
    ``rough`` defaults to the median successive distance. Peaks that round
    to cycle 0 are dropped. Successive differences of noisy peak lags carry
    the jitter of two peaks each, while ``peak / cycle`` divides a single
    peak's jitter by its cycle index, so long periods with few cycles are
    pinned down far more tightly.
    """
    if rough is None:
        rough = median_peak_distance(peaks)
    if rough is None or not rough > 0:
        return None
    ratios = []
    for p in peaks:
        j = int(round(p / rough))
        if j >= 1:
            ratios.append(p / j)
    if not ratios:
        return None
    return float(np.median(ratios))


def rk_window(n: int, k: int) -> tuple[float, float]:
    """Period lengths compatible with periodogram bin ``k`` of an ``n``-point series.

    For ``k = 1`` the upper edge ``N/(k-1)`` does not exist and is replaced
    by ``n``.
    """
    if not 1 <= k <= n / 2:
        raise ValueError(f"bin k={k} out of range for n={n}")
    low = 0.5 * (n / (k + 1) + n / k) - 1
    high = float(n) if k == 1 else 0.5 * (n / k + n / (k - 1)) + 1
    return low, high


def _non_periodic(reason: str, diagnostics: dict, **kw) -> DetectionResult:
    diagnostics["reason"] = reason
    base = dict(
        periodic=False,
        period=None,
        g_stat=float("nan"),
        p_value=1.0,
        k_star=None,
        acf_peaks=[],
        median_peak_distance=None,
        rk_window=None,
    )
    base.update(kw)
    return DetectionResult(diagnostics=diagnostics, **base)


def detect_period(s: ObservedSeries, cfg: DetectConfig | None = None) -> DetectionResult:
    """Decide whether ``s`` is periodic and estimate its dominant period.

    Pipeline: robust detrending, removal of the observed mean, robust ACF,
    Fisher's test on the ACF spectrum, then ACF peak refinement checked
    against the resolution window of the winning bin.
    """
    cfg = cfg or DetectConfig()
    n = len(s)
    if n < MIN_DETECT_LENGTH:
        raise SeriesError(f"detection needs N >= {MIN_DETECT_LENGTH}, got {n}")

    report = scan_missing_blocks(s)
    diagnostics: dict[str, Any] = {"missing": report.to_dict()}

    # work on a standardised copy so every decision is scale free
    obs = s.values[s.mask]
    center = float(np.median(obs))
    scale = robust_scale(obs - center)
    if not scale > 0:
        scale = 1.0
    y = ObservedSeries((s.values - center) / scale, s.mask)

    fit = robust_detrend(y, cfg.trend_cfg)
    diagnostics["detrend"] = fit.diagnostics()
    x = np.where(s.mask, y.values - fit.trend, 0.0)
    x[s.mask] -= x[s.mask].mean()

    acf = robust_acf_m(x, s.mask, cfg.huber_cfg, fast=not cfg.use_m_periodogram)
    diagnostics["invalid_lags"] = acf.n_invalid
    diagnostics["mode"] = "huber" if cfg.use_m_periodogram else "fast"

    r0 = acf.r[0]
    # data are standardised, so a residual power this small is round-off
    if not (np.isfinite(r0) and r0 > 1e-14):
        return _non_periodic("zero autocorrelation", diagnostics)

    nacf = acf.normalize()
    power = wk_periodogram(nacf)
    ordinates = fisher_ordinates(power)
    if ordinates.size < 2 or not ordinates.sum() > 0:
        return _non_periodic("zero spectrum", diagnostics)
    g, k_star = fisher_g(ordinates)
    p = fisher_pvalue(g, ordinates.size)
    diagnostics["fisher_m"] = int(ordinates.size)

    window = rk_window(n, k_star)
    # two maxima closer than half the shortest period allowed by bin k* cannot both be period peaks
    min_distance = max(1, int(window[0] // 2))
    diagnostics["peak_min_distance"] = min_distance
    peaks = find_acf_peaks(nacf, cfg.peak_height_frac, min_distance)
    successive = median_peak_distance(peaks)
    diagnostics["successive_peak_distance"] = successive
    med = cycle_spacing(peaks, successive)
    common = dict(g_stat=g, p_value=p, k_star=k_star, acf_peaks=peaks,
                  median_peak_distance=med, rk_window=window)

    if not p < cfg.alpha:
        return _non_periodic("fisher test not significant", diagnostics, **common)
    if med is None:
        return _non_periodic("no ACF peaks above threshold", diagnostics, **common)

    low, high = window
    consistent = k_star >= 2 and low <= med <= high and low <= round(med) <= high
    if consistent:
        diagnostics["reason"] = "periodic"
        return DetectionResult(periodic=True, period=int(round(med)), diagnostics=diagnostics, **common)
    if cfg.fallback_to_bin and k_star >= 2:
        diagnostics["reason"] = "fallback to periodogram bin"
        return DetectionResult(periodic=True, period=int(round(n / k_star)),
                               diagnostics=diagnostics, **common)
    return _non_periodic("ACF period outside periodogram window", diagnostics, **common)
