"""Non-robust reference detectors: ACF-Med, Fisher's test and Lomb-Scargle.

ACF-Med and the Fisher baseline fill gaps by linear interpolation first;
Lomb-Scargle uses the observed samples only. Peak finding and the Fisher
formulas are shared with the main detector so that measured differences come
from the robust components alone.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import fft as sfft

from .detector import (
    MIN_DETECT_LENGTH,
    find_acf_peaks,
    fisher_g,
    fisher_ordinates,
    fisher_pvalue,
    median_peak_distance,
)
from .racf import RobustAcf
from .series import ObservedSeries, SeriesError, linear_interpolate


@dataclass
class BaselineResult:
    method: str
    periodic: bool
    period: float | None
    score: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.period is not None and not self.period > 1:
            raise ValueError(f"period must exceed 1, got {self.period}")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _prepared(s: ObservedSeries) -> np.ndarray:
    if len(s) < MIN_DETECT_LENGTH:
        raise SeriesError(f"baselines need N >= {MIN_DETECT_LENGTH}, got {len(s)}")
    x = linear_interpolate(s).values
    return x - x.mean()


def classical_acf(x: np.ndarray) -> RobustAcf:
    """Biased sample autocovariance of a complete series, via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.size
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = sfft.rfft(x, nfft)
    c = sfft.irfft(spec.real**2 + spec.imag**2, nfft)[:n] / n
    return RobustAcf(r=c, pair_count=np.arange(n, 0, -1, dtype=np.int64))


def acf_med(s: ObservedSeries, peak_height_frac: float = 0.3) -> BaselineResult:
    """Median spacing of thresholded peaks of the classical ACF."""
    x = _prepared(s)
    acf = classical_acf(x)
    if not acf.r[0] > 0:
        return BaselineResult("acf_med", False, None, 0.0)
    nacf = acf.normalize()
    peaks = find_acf_peaks(nacf, peak_height_frac)
    med = median_peak_distance(peaks)
    score = float(max(nacf.r[k] for k in peaks)) if peaks else 0.0
    if med is None or med <= 1:
        return BaselineResult("acf_med", False, None, score, {"peaks": peaks})
    return BaselineResult("acf_med", True, float(med), score, {"peaks": peaks})


def fisher_baseline(s: ObservedSeries, alpha: float = 0.05) -> BaselineResult:
    """Fisher's g-test on the ordinary periodogram; period ``round(N/k*)``."""
    x = _prepared(s)
    n = x.size
    spec = sfft.fft(x)
    power = (spec.real**2 + spec.imag**2) / n
    ordinates = fisher_ordinates(power)
    if not ordinates.sum() > 0:
        return BaselineResult("fisher", False, None, 0.0, {"p_value": 1.0})
    g, k_star = fisher_g(ordinates)
    p = fisher_pvalue(g, ordinates.size)
    meta = {"p_value": p, "k_star": k_star}
    if p < alpha:
        return BaselineResult("fisher", True, float(round(n / k_star)), g, meta)
    return BaselineResult("fisher", False, None, g, meta)


def default_frequency_grid(n: int, oversample: int = 4) -> np.ndarray:
    """Frequencies for periods ``2..N/2`` spaced ``1/(oversample N)`` apart."""
    fmin = 2.0 / n
    fmax = 0.5
    df = 1.0 / (oversample * n)
    return np.arange(fmin, fmax + 0.5 * df, df)


def lomb_scargle_power(t: np.ndarray, y: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Normalised Lomb-Scargle power with the per-frequency time shift.

    ``y`` is centred internally; power is divided by twice the sample
    variance, so under Gaussian noise it is roughly unit exponential.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    y = y - y.mean()
    var = y.var()
    if not var > 0:
        return np.zeros(len(freqs))
    out = np.empty(len(freqs))
    # process frequencies in blocks to bound memory
    step = max(1, 2_000_000 // max(t.size, 1))
    for i in range(0, len(freqs), step):
        w = 2 * np.pi * np.asarray(freqs[i : i + step])[:, None]
        tau = np.arctan2(np.sin(2 * w * t).sum(axis=1), np.cos(2 * w * t).sum(axis=1)) / (2 * w[:, 0])
        arg = w * (t[None, :] - tau[:, None])
        c, s_ = np.cos(arg), np.sin(arg)
        yc, ys = c @ y, s_ @ y
        cc, ss = (c * c).sum(axis=1), (s_ * s_).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(cc > 0, yc**2 / cc, 0.0) + np.where(ss > 0, ys**2 / ss, 0.0)
        out[i : i + step] = term / (2 * var)
    return out


def lomb_scargle(
    s: ObservedSeries,
    freq_grid: np.ndarray | None = None,
    alpha: float = 0.05,
    oversample: int = 4,
) -> BaselineResult:
    """Lomb-Scargle on observed samples only.

    Significance uses the classical bound ``FAP = 1 - (1 - exp(-P))^M``
    with ``M`` independent frequencies, taken as the grid size divided by
    the oversampling factor.
    """
    n = len(s)
    if s.n_observed < 4:
        raise SeriesError("Lomb-Scargle needs at least four observed samples")
    if freq_grid is None:
        freq_grid = default_frequency_grid(n, oversample)
    freq_grid = np.asarray(freq_grid, dtype=float)
    if freq_grid.size < 2 or not np.all(freq_grid > 0):
        raise ValueError("frequency grid must hold at least two positive frequencies")
    t = np.flatnonzero(s.mask).astype(float)
    y = s.values[s.mask]
    power = lomb_scargle_power(t, y, freq_grid)
    j = int(np.argmax(power))
    pmax = float(power[j])
    m_indep = max(1.0, freq_grid.size / oversample)
    fap = float(-np.expm1(m_indep * np.log1p(-np.exp(-pmax)))) if pmax > 0 else 1.0
    meta = {
        "false_alarm": fap,
        "normalization": "standard (variance)",
        "false_alarm_method": "classical exponential, M = grid/oversample",
        "frequency": float(freq_grid[j]),
    }
    period = 1.0 / freq_grid[j]
    if fap < alpha and period > 1:
        return BaselineResult("lomb", True, float(period), pmax, meta)
    return BaselineResult("lomb", False, None, pmax, meta)
