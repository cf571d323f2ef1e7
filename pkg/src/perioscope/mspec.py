"""Huber M-periodogram and the outlier-resistant missing-data ACF built on it.

Each frequency bin of the zero-padded series is fitted by a two-parameter
harmonic regression under Huber loss (IRLS). The squared coefficient norm
replaces the squared DFT magnitude, and the inverse transform of that
spectrum gives the ACF numerator.

Scaling: a bin power is ``(N'^2 / 4) |beta|^2``, which equals ``|DFT_k|^2``
exactly when the fit is ordinary least squares (unnormalised DFT).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .racf import RobustAcf, _as_inputs, _divide, pair_counts

HUBER_EFFICIENCY = 1.345
MAD_TO_SIGMA = 1.4826


@dataclass(frozen=True)
class HuberConfig:
    """IRLS settings. ``delta=None`` selects an adaptive knee.

    ``scale`` picks the adaptive rule. ``"difference"`` fixes the knee at
    1.345 times a noise scale taken from first differences of neighbouring
    observed samples (MAD / sqrt(2)), shared by every bin. ``"residual"``
    recomputes 1.345 times the normalised MAD of the current residuals in
    each IRLS iteration. Per-bin residuals contain every periodic component
    except the fitted one, so the residual rule sets the knee near the signal
    amplitude and lets far more outlier energy through.
    """

    delta: float | None = None
    irls_max_iter: int = 50
    irls_tol: float = 1e-8
    chunk_size: int = 256
    scale: str = "difference"

    def __post_init__(self) -> None:
        if self.delta is not None and not (np.isfinite(self.delta) and self.delta > 0):
            raise ValueError(f"delta must be positive, got {self.delta!r}")
        if self.scale not in ("difference", "residual"):
            raise ValueError(f"scale must be 'difference' or 'residual', got {self.scale!r}")
        if int(self.irls_max_iter) != self.irls_max_iter or self.irls_max_iter < 1:
            raise ValueError("irls_max_iter must be a positive integer")
        if not self.irls_tol > 0:
            raise ValueError("irls_tol must be positive")
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be positive")

    @property
    def delta_mode(self) -> str:
        return "fixed" if self.delta is not None else f"adaptive ({self.scale})"


@dataclass(frozen=True)
class MPeriodogram:
    power: np.ndarray
    n_prime: int
    unconverged_bins: tuple[int, ...] = field(default=())


@dataclass(frozen=True)
class HarmonicFit:
    """Huber harmonic regression of one bin, with IRLS diagnostics.

    ``objective_trace`` holds pairs ``(before, after)`` of the Huber
    objective for each reweighting step, both evaluated at the knee used in
    that step.
    """

    beta: np.ndarray
    power: float
    iterations: int
    converged: bool
    objective_trace: list[tuple[float, float]]


def huber_loss(x, delta: float):
    if not delta > 0:
        raise ValueError("delta must be positive")
    a = np.abs(np.asarray(x, dtype=float))
    out = np.where(a <= delta, 0.5 * a * a, delta * a - 0.5 * delta * delta)
    return out if out.ndim else float(out)


def _knee(resid: np.ndarray, delta: float | None, support: np.ndarray | None = None) -> np.ndarray:
    """Per-row Huber knee; ``resid`` is (bins, samples).

    Only columns in ``support`` enter the scale estimate. Padded and missing
    positions carry no data, so their residuals are just the negated fit and
    would drag the MAD towards zero.
    """
    if delta is not None:
        return np.full(resid.shape[0], float(delta))
    if support is not None:
        resid = resid[:, support]
    med = np.median(resid, axis=1, keepdims=True)
    mad = np.median(np.abs(resid - med), axis=1)
    knee = HUBER_EFFICIENCY * MAD_TO_SIGMA * mad
    # more than half the residuals identical: fall back to mean absolute deviation
    flat = knee <= 0
    if flat.any():
        mean_abs = np.mean(np.abs(resid[flat] - med[flat]), axis=1)
        knee[flat] = HUBER_EFFICIENCY * np.sqrt(np.pi / 2) * mean_abs
    return knee


def difference_scale(h, support=None) -> float:
    """Robust noise scale from first differences of adjacent supported samples.

    For white noise ``x[t+1] - x[t]`` has standard deviation ``sqrt(2) sigma``;
    smooth periodic components contribute little to it.
    """
    h = np.asarray(h, dtype=float).reshape(-1)
    ok = np.ones(h.size, dtype=bool) if support is None else np.asarray(support, dtype=bool)
    pair = ok[:-1] & ok[1:]
    d = np.diff(h)[pair]
    if d.size == 0:
        return 0.0
    dev = np.abs(d - np.median(d))
    sigma = MAD_TO_SIGMA * np.median(dev)
    if not sigma > 0:
        sigma = np.sqrt(np.pi / 2) * dev.mean()
    return float(sigma / np.sqrt(2))


def resolve_delta(h, cfg: HuberConfig, support=None) -> float | None:
    """Knee to use for every bin, or ``None`` for the per-iteration residual rule."""
    if cfg.delta is not None:
        return float(cfg.delta)
    if cfg.scale == "residual":
        return None
    sigma = difference_scale(h, support)
    # a zero scale means the supported samples are constant
    return HUBER_EFFICIENCY * sigma if sigma > 0 else None


def _huber_rows(resid: np.ndarray, knee: np.ndarray) -> np.ndarray:
    a = np.abs(resid)
    k = knee[:, None]
    return np.where(a <= k, 0.5 * a * a, k * a - 0.5 * k * k).sum(axis=1)


def _weighted_fit(h: np.ndarray, design: list[np.ndarray], w: np.ndarray) -> np.ndarray:
    """Weighted least squares per row for a 1- or 2-column harmonic design."""
    if len(design) == 1:
        (c,) = design
        scc = (w * c * c).sum(axis=1)
        bc = (w * c * h).sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            beta = np.where(scc > 0, bc / scc, 0.0)
        return beta[:, None]
    c, s = design
    scc = (w * c * c).sum(axis=1)
    sss = (w * s * s).sum(axis=1)
    scs = (w * c * s).sum(axis=1)
    bc = (w * c * h).sum(axis=1)
    bs = (w * s * h).sum(axis=1)
    det = scc * sss - scs * scs
    scale = np.maximum(scc * sss, np.finfo(float).tiny)
    ok = det > 1e-12 * scale
    beta = np.zeros((h.shape[0], 2))
    with np.errstate(invalid="ignore", divide="ignore"):
        beta[:, 0] = np.where(ok, (sss * bc - scs * bs) / det, 0.0)
        beta[:, 1] = np.where(ok, (scc * bs - scs * bc) / det, 0.0)
    return beta


def _irls(
    h: np.ndarray,
    design: list[np.ndarray],
    cfg: HuberConfig,
    trace: bool = False,
    support: np.ndarray | None = None,
    delta: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, list]:
    """Huber regression of ``h`` on each row's design, all rows at once.

    ``delta`` fixes the knee; ``None`` recomputes it from the residuals in
    every iteration. Returns coefficients (rows, p), iteration counts,
    convergence flags and, when ``trace`` is set, per-iteration objective
    pairs for every row.
    """
    rows = design[0].shape[0]
    ones = np.ones_like(design[0])
    hb = np.broadcast_to(h, design[0].shape)
    beta = _weighted_fit(hb, design, ones)
    iters = np.zeros(rows, dtype=np.int64)
    done = np.zeros(rows, dtype=bool)
    traces: list[list[tuple[float, float]]] = [[] for _ in range(rows)]

    def fitted(b: np.ndarray, idx: np.ndarray) -> np.ndarray:
        out = b[:, 0:1] * design[0][idx]
        for j in range(1, len(design)):
            out = out + b[:, j : j + 1] * design[j][idx]
        return out

    for _ in range(cfg.irls_max_iter):
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        b_act = beta[active]
        resid = hb[active] - fitted(b_act, active)
        knee = _knee(resid, delta, support)
        absr = np.abs(resid)
        settled = knee <= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(absr <= knee[:, None], 1.0, knee[:, None] / absr)
        w[settled] = 1.0
        new = _weighted_fit(hb[active], [d[active] for d in design], w)
        new[settled] = b_act[settled]
        if trace:
            k_safe = np.where(settled, 1.0, knee)
            before = _huber_rows(resid, k_safe)
            after = _huber_rows(hb[active] - fitted(new, active), k_safe)
            for j, row in enumerate(active):
                traces[row].append((float(before[j]), float(after[j])))
        step = np.linalg.norm(new - b_act, axis=1)
        size = np.maximum(np.linalg.norm(new, axis=1), np.finfo(float).tiny)
        beta[active] = new
        iters[active] += 1
        finished = (step <= cfg.irls_tol * size) | settled | (step == 0)
        done[active[finished]] = True
    return beta, iters, done, traces


def _harmonic_design(ks: np.ndarray, n_prime: int) -> list[np.ndarray]:
    t = np.arange(n_prime)
    # reduce k*t modulo n' first so the phase stays exact for large n'
    phase = 2 * np.pi * ((ks[:, None] * t[None, :]) % n_prime) / n_prime
    return [np.cos(phase), np.sin(phase)]


def _support(support, n_prime: int) -> np.ndarray | None:
    if support is None:
        return None
    support = np.asarray(support, dtype=bool).reshape(-1)
    if support.size != n_prime:
        raise ValueError("support must match the length of h_bar")
    return support if support.any() else None


def huber_harmonic_fit(
    h_bar, k: int, cfg: HuberConfig | None = None, support=None
) -> HarmonicFit:
    """Huber regression of ``h_bar`` on ``[cos, sin](2 pi k t / N')``.

    ``support`` marks the positions holding real samples; when given, the
    adaptive knee is estimated from residuals there only.
    """
    cfg = cfg or HuberConfig()
    h = np.asarray(h_bar, dtype=float)
    n_prime = h.size
    if not 1 <= k <= n_prime // 2 - 1:
        raise ValueError(f"bin {k} outside 1..{n_prime // 2 - 1}")
    design = _harmonic_design(np.array([k]), n_prime)
    support = _support(support, n_prime)
    delta = resolve_delta(h, cfg, support)
    beta, iters, done, traces = _irls(h, design, cfg, trace=True, support=support, delta=delta)
    b = beta[0]
    return HarmonicFit(
        beta=b,
        power=float(n_prime**2 / 4 * (b @ b)),
        iterations=int(iters[0]),
        converged=bool(done[0]),
        objective_trace=traces[0],
    )


def m_periodogram_bin(h_bar, k: int, cfg: HuberConfig | None = None, support=None) -> float:
    return huber_harmonic_fit(h_bar, k, cfg, support).power


def _worker_count() -> int:
    raw = os.environ.get("PERIOSCOPE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return 1


def m_periodogram(h_bar, cfg: HuberConfig | None = None, support=None) -> MPeriodogram:
    """Huber periodogram over all ``N'`` bins, Hermitian-symmetric.

    Bins ``1..N'/2-1`` use the two-column harmonic regression; the DC bin
    uses a Huber location estimate and the Nyquist bin a one-column fit on
    the alternating-sign regressor.
    """
    cfg = cfg or HuberConfig()
    h = np.asarray(h_bar, dtype=float).reshape(-1)
    n_prime = h.size
    if n_prime < 4 or n_prime % 2:
        raise ValueError("h_bar length must be even and at least 4")
    half = n_prime // 2
    support = _support(support, n_prime)
    delta = resolve_delta(h, cfg, support)
    power = np.zeros(n_prime)
    unconverged: list[int] = []

    ks = np.arange(1, half)
    chunks = [ks[i : i + cfg.chunk_size] for i in range(0, ks.size, cfg.chunk_size)]

    def run(chunk: np.ndarray):
        beta, _, done, _ = _irls(h, _harmonic_design(chunk, n_prime), cfg, support=support, delta=delta)
        return chunk, (n_prime**2 / 4) * (beta**2).sum(axis=1), done

    workers = min(_worker_count(), len(chunks)) if chunks else 1
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    for chunk, pw, done in results:
        power[chunk] = pw
        unconverged.extend(int(k) for k in chunk[~done])

    t = np.arange(n_prime)
    dc, _, dc_done, _ = _irls(h, [np.ones((1, n_prime))], cfg, support=support, delta=delta)
    nyq, _, nyq_done, _ = _irls(h, [np.where(t % 2, -1.0, 1.0)[None, :]], cfg, support=support, delta=delta)
    power[0] = (n_prime * dc[0, 0]) ** 2
    power[half] = (n_prime * nyq[0, 0]) ** 2
    if not dc_done[0]:
        unconverged.append(0)
    if not nyq_done[0]:
        unconverged.append(half)
    power[half + 1 :] = power[1:half][::-1]
    return MPeriodogram(power=power, n_prime=n_prime, unconverged_bins=tuple(sorted(unconverged)))


def robust_acf_m(x, mask, cfg: HuberConfig | None = None, fast: bool = False) -> RobustAcf:
    """Missing-data ACF whose numerator comes from the Huber periodogram.

    With ``fast=True`` the plain squared DFT magnitude is used instead, which
    is cheaper and not outlier resistant.
    """
    h, mask = _as_inputs(x, mask)
    n = h.size
    h_bar = np.concatenate([h, np.zeros(n)])
    if fast:
        spec = sfft.fft(h_bar)
        power = spec.real**2 + spec.imag**2
    else:
        support = np.concatenate([mask, np.zeros(n, dtype=bool)])
        power = m_periodogram(h_bar, cfg, support).power
    num = sfft.ifft(power).real[:n]
    q = pair_counts(mask)
    return RobustAcf(r=_divide(num, q), pair_count=q)
