"""Autocorrelation of a series with missing samples.

For lag ``k`` the estimate averages ``x[t] * x[t+k]`` over the pairs where
both samples are observed, so gaps reduce the sample size per lag instead of
biasing the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import fft as sfft


@dataclass(frozen=True)
class RobustAcf:
    """Per-lag autocorrelation ``r`` and valid pair counts ``pair_count``.

    Lags with no valid pair hold NaN in ``r``.
    """

    r: np.ndarray
    pair_count: np.ndarray
    normalized: bool = False

    @property
    def valid(self) -> np.ndarray:
        return self.pair_count > 0

    @property
    def n_invalid(self) -> int:
        return int((~self.valid).sum())

    def normalize(self) -> "RobustAcf":
        """Divide by ``r[0]``; a zero or invalid ``r[0]`` leaves values unchanged."""
        if self.normalized:
            return self
        r0 = self.r[0]
        if self.pair_count[0] > 0 and np.isfinite(r0) and r0 != 0:
            return replace(self, r=self.r / r0, normalized=True)
        return replace(self, normalized=True)


def _as_inputs(x, mask) -> tuple[np.ndarray, np.ndarray]:
    mask = np.asarray(mask).astype(bool).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != mask.shape:
        raise ValueError("x and mask must have the same length")
    return np.where(mask, x, 0.0), mask


def acf_bruteforce(x, mask) -> RobustAcf:
    """Direct double loop over valid pairs; O(N^2) reference estimator."""
    h, mask = _as_inputs(x, mask)
    n = h.size
    r = np.full(n, np.nan)
    q = np.zeros(n, dtype=np.int64)
    for k in range(n):
        total = 0.0
        count = 0
        for t in range(n - k):
            if mask[t] and mask[t + k]:
                total += h[t + k] * h[t]
                count += 1
        q[k] = count
        if count:
            r[k] = total / count
    return RobustAcf(r=r, pair_count=q)


def _fft_size(n: int) -> int:
    return 1 << int(np.ceil(np.log2(max(2 * n, 2))))


def _autocorr_fft(a: np.ndarray, nfft: int) -> np.ndarray:
    spec = sfft.rfft(a, nfft)
    return sfft.irfft(spec.real**2 + spec.imag**2, nfft)


def pair_counts(mask, method: str = "fft") -> np.ndarray:
    """Number of lag-``k`` pairs with both samples observed, ``k = 0..N-1``."""
    mask = np.asarray(mask).astype(bool).reshape(-1)
    n = mask.size
    m = mask.astype(float)
    if method == "fft":
        counts = _autocorr_fft(m, _fft_size(n))[:n]
        return np.rint(counts).astype(np.int64)
    if method == "direct":
        full = np.correlate(m, m, mode="full")
        return np.rint(full[n - 1 :]).astype(np.int64)
    raise ValueError(f"unknown method {method!r}")


def acf_fft(x, mask) -> RobustAcf:
    """FFT evaluation of the missing-data estimator.

    Missing samples are zeroed, both the zeroed series and the mask are
    zero-padded to at least ``2N`` so circular correlation equals linear
    correlation, and the two autocorrelations are divided lag by lag.
    """
    h, mask = _as_inputs(x, mask)
    n = h.size
    nfft = _fft_size(n)
    num = _autocorr_fft(h, nfft)[:n]
    q = pair_counts(mask)
    return RobustAcf(r=_divide(num, q), pair_count=q)


def _divide(num: np.ndarray, q: np.ndarray) -> np.ndarray:
    r = np.full(num.shape, np.nan)
    ok = q > 0
    r[ok] = num[ok] / q[ok]
    return r


def block_masks(n: int, l: int) -> np.ndarray:
    """All single-block masks of length ``n`` with an interior gap of ``l``.

    Row ``i`` holds the gap starting at ``m = i + 1``; the first and last
    samples stay observed (``m > 0`` and ``m + l - 1 < n - 1``).
    """
    starts = np.arange(1, n - l)
    if starts.size == 0:
        return np.zeros((0, n), dtype=bool)
    idx = np.arange(n)
    gap = (idx[None, :] >= starts[:, None]) & (idx[None, :] < starts[:, None] + l)
    return ~gap


def batch_pair_counts(masks: np.ndarray) -> np.ndarray:
    """Pair counts for each row of a 2-D mask array."""
    masks = np.asarray(masks, dtype=float)
    n = masks.shape[1]
    nfft = _fft_size(n)
    spec = sfft.rfft(masks, nfft, axis=1)
    counts = sfft.irfft(spec.real**2 + spec.imag**2, nfft, axis=1)[:, :n]
    return np.rint(counts).astype(np.int64)


def zero_pair_placements(n: int, l: int) -> list[tuple[int, int]]:
    """Every (start, lag) with a single interior gap of ``l`` and no valid pair."""
    masks = block_masks(n, l)
    if masks.shape[0] == 0:
        return []
    q = batch_pair_counts(masks)
    rows, lags = np.nonzero(q[:, 1:] == 0)
    return [(int(r) + 1, int(k) + 1) for r, k in zip(rows, lags)]


def check_proposition(n: int, l: int) -> bool:
    """Exhaustively check that a single interior gap of length ``l`` leaves
    ``Q_k > 0`` for every lag ``1..n-1`` at every admissible placement."""
    if not 0 < l < n:
        raise ValueError(f"need 0 < l < n, got n={n}, l={l}")
    return not zero_pair_placements(n, l)
