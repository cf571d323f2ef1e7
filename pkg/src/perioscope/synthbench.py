"""Synthetic corrupted series and the precision benchmark over (MR, OR) grids.

A series is trend + periodic waveform + Gaussian noise. Outliers of
``outlier_amp_sigmas`` times the clean series' standard deviation are then
added at observed positions, and samples are removed as one block, several
blocks or scattered points.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .baselines import acf_med, fisher_baseline, lomb_scargle
from .detector import DetectConfig, detect_period
from .series import ObservedSeries

WAVEFORMS = ("sine", "square", "triangle")
MISSING_MODES = ("single_block", "multi_block", "scattered")
TABLE_GRID = tuple((mr, o) for mr in (0.0, 0.05, 0.30) for o in (0.0, 0.01, 0.05))
ALGORITHMS = ("proposed", "acf_med", "fisher", "lomb")


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class Trend:
    """``kind`` is ``none``, ``linear`` or ``piecewise``.

    A piecewise trend has ``len(change_points) + 1`` segment slopes and one
    level jump per change point.
    """

    kind: str = "none"
    slope: float = 0.0
    change_points: tuple[int, ...] = ()
    slopes: tuple[float, ...] = ()
    jumps: tuple[float, ...] = ()

    def evaluate(self, n: int) -> np.ndarray:
        t = np.arange(n, dtype=float)
        if self.kind == "none":
            return np.zeros(n)
        if self.kind == "linear":
            return self.slope * t
        if self.kind != "piecewise":
            raise SpecError(f"unknown trend kind {self.kind!r}")
        cps = list(self.change_points)
        if len(self.slopes) != len(cps) + 1 or len(self.jumps) != len(cps):
            raise SpecError("piecewise trend needs len(cp)+1 slopes and len(cp) jumps")
        if any(not 0 < c < n for c in cps) or cps != sorted(cps):
            raise SpecError("change points must be increasing and inside the series")
        slope = np.empty(n)
        bounds = [0, *cps, n]
        for i, sl in enumerate(self.slopes):
            slope[bounds[i] : bounds[i + 1]] = sl
        # increments: value[t] - value[t-1] uses the slope of segment containing t
        inc = np.concatenate([[0.0], slope[1:]])
        out = np.cumsum(inc)
        for c, j in zip(cps, self.jumps):
            out[c:] += j
        return out


@dataclass(frozen=True)
class SynthSpec:
    n: int = 480
    period: int = 24
    waveform: str = "sine"
    trend: Trend = field(default_factory=Trend)
    noise_sigma: float = 0.1
    outlier_ratio: float = 0.0
    outlier_amp_sigmas: float = 5.0
    missing_ratio: float = 0.0
    missing_mode: str = "single_block"
    block_count: int = 1
    phase: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.period < 2:
            raise SpecError("period must be at least 2")
        if self.period > self.n / 4:
            raise SpecError("period must not exceed n/4 (four visible cycles)")
        if self.waveform not in WAVEFORMS:
            raise SpecError(f"waveform must be one of {WAVEFORMS}")
        if self.missing_mode not in MISSING_MODES:
            raise SpecError(f"missing_mode must be one of {MISSING_MODES}")
        if not 0 <= self.outlier_ratio < 0.5:
            raise SpecError("outlier_ratio must lie in [0, 0.5)")
        if not 0 <= self.missing_ratio < 0.5:
            raise SpecError("missing_ratio must lie in [0, 0.5)")
        if self.noise_sigma < 0:
            raise SpecError("noise_sigma must be nonnegative")
        if self.block_count < 1:
            raise SpecError("block_count must be positive")

    @property
    def n_missing(self) -> int:
        return int(round(self.missing_ratio * self.n))

    @property
    def n_outliers(self) -> int:
        return int(round(self.outlier_ratio * self.n))


def waveform(kind: str, n: int, period: int, phase: float = 0.0) -> np.ndarray:
    # position within the cycle from t mod period, so samples repeat bit for bit
    cycle = (np.arange(n) % period) / period + phase / (2 * np.pi)
    if kind == "sine":
        return np.sin(2 * np.pi * cycle)
    if kind == "square":
        # half-sample offset keeps samples off the zero crossings
        frac = np.mod(cycle + 0.5 / period, 1.0)
        return np.where(frac < 0.5, 1.0, -1.0)
    if kind == "triangle":
        return 2 / np.pi * np.arcsin(np.sin(2 * np.pi * cycle))
    raise SpecError(f"unknown waveform {kind!r}")


def _missing_mask(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    n, count = spec.n, spec.n_missing
    mask = np.ones(n, dtype=bool)
    if count == 0:
        return mask
    if spec.missing_mode == "scattered":
        mask[rng.choice(n, size=count, replace=False)] = False
        return mask
    blocks = 1 if spec.missing_mode == "single_block" else spec.block_count
    sizes = [count // blocks + (1 if i < count % blocks else 0) for i in range(blocks)]
    sizes = [s for s in sizes if s > 0]
    # interior placement with at least one observed sample around every block
    slack = n - sum(sizes) - (len(sizes) + 1)
    if slack < 0:
        raise SpecError("missing blocks do not fit inside the series")
    cuts = np.sort(rng.integers(0, slack + 1, size=len(sizes)))
    pos = 1
    prev = 0
    for size, cut in zip(sizes, cuts):
        pos += int(cut - prev)
        mask[pos : pos + size] = False
        pos += size + 1
        prev = cut
    return mask


def generate(spec: SynthSpec) -> tuple[ObservedSeries, int]:
    """Draw one corrupted series; identical specs give identical output."""
    if spec.missing_mode != "scattered" and spec.n_missing > spec.n - 2:
        raise SpecError("missing block longer than N - 2")
    rng = np.random.default_rng(spec.seed)
    clean = (
        spec.trend.evaluate(spec.n)
        + waveform(spec.waveform, spec.n, spec.period, spec.phase)
        + spec.noise_sigma * rng.standard_normal(spec.n)
    )
    mask = _missing_mask(spec, rng)
    values = clean.copy()
    k = spec.n_outliers
    if k:
        observed = np.flatnonzero(mask)
        if k > observed.size:
            raise SpecError("more outliers than observed samples")
        where = rng.choice(observed, size=k, replace=False)
        signs = rng.choice((-1.0, 1.0), size=k)
        values[where] += signs * spec.outlier_amp_sigmas * clean.std()
    return ObservedSeries(values, mask), spec.period


def random_spec(seed: int, n_range: tuple[int, int] = (192, 480)) -> SynthSpec:
    """A clean (uncorrupted) spec with randomly drawn shape, trend and noise."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    period = int(rng.integers(4, max(5, n // 8) + 1))
    shape = WAVEFORMS[int(rng.integers(len(WAVEFORMS)))]
    kind = ("none", "linear", "piecewise")[int(rng.integers(3))]
    if kind == "linear":
        trend = Trend("linear", slope=float(rng.uniform(-3, 3)) / n)
    elif kind == "piecewise":
        cp = int(rng.integers(int(0.3 * n), int(0.7 * n)))
        trend = Trend(
            "piecewise",
            change_points=(cp,),
            slopes=tuple(float(v) for v in rng.uniform(-3, 3, size=2) / n),
            jumps=(float(rng.choice((-1, 1)) * rng.uniform(1.0, 3.0)),),
        )
    else:
        trend = Trend()
    return SynthSpec(
        n=n,
        period=period,
        waveform=shape,
        trend=trend,
        noise_sigma=float(rng.uniform(0.1, 0.4)),
        phase=float(rng.uniform(0, 2 * np.pi)),
        seed=int(rng.integers(2**31)),
    )


def run_algorithm(name: str, s: ObservedSeries, cfg: DetectConfig | None = None) -> float | None:
    """Period estimate of one algorithm; ``None`` when it reports no period."""
    if name in ("proposed", "proposed_fast"):
        c = cfg or DetectConfig()
        if name == "proposed_fast":
            c = replace(c, use_m_periodogram=False)
        res = detect_period(s, c)
        return float(res.period) if res.periodic else None
    if name == "acf_med":
        res = acf_med(s)
    elif name == "fisher":
        res = fisher_baseline(s)
    elif name == "lomb":
        res = lomb_scargle(s)
    else:
        raise ValueError(f"unknown algorithm {name!r}")
    return res.period if res.periodic else None


@dataclass
class CellResult:
    algorithm: str
    missing_ratio: float
    outlier_ratio: float
    trials: int
    correct: int
    correct_within_one: int
    mean_runtime: float

    @property
    def precision(self) -> float:
        return self.correct / self.trials if self.trials else 0.0

    @property
    def precision_within_one(self) -> float:
        return self.correct_within_one / self.trials if self.trials else 0.0


@dataclass
class PrecisionReport:
    cells: list[CellResult]
    algorithms: list[str]
    grid: list[tuple[float, float]]
    trials: int
    base_seed: int

    def cell(self, algorithm: str, mr: float, or_: float) -> CellResult:
        for c in self.cells:
            if c.algorithm == algorithm and c.missing_ratio == mr and c.outlier_ratio == or_:
                return c
        raise KeyError((algorithm, mr, or_))

    def precision(self, algorithm: str, mr: float, or_: float) -> float:
        return self.cell(algorithm, mr, or_).precision

    def to_dict(self, include_runtime: bool = True) -> dict:
        """Serialisable form; drop runtimes to make repeated runs byte-identical."""
        cells = []
        for c in self.cells:
            row = {**asdict(c), "precision": c.precision, "precision_within_one": c.precision_within_one}
            if not include_runtime:
                del row["mean_runtime"]
            cells.append(row)
        return {
            "algorithms": list(self.algorithms),
            "grid": [list(g) for g in self.grid],
            "trials": self.trials,
            "base_seed": self.base_seed,
            "cells": cells,
        }

    def to_json(self, include_runtime: bool = True) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=2, sort_keys=True)

    def to_table(self, include_runtime: bool = False) -> str:
        """Plain-text table: one row per algorithm, one column per (MR, OR) cell.

        With ``include_runtime`` a second block lists mean seconds per series.
        """
        mrs = sorted({g[0] for g in self.grid})
        head1 = f"{'Algorithm':<16}"
        head2 = f"{'':<16}"
        cols = [(mr, o) for mr in mrs for o in sorted({g[1] for g in self.grid if g[0] == mr})]
        for mr, o in cols:
            head1 += f"| MR={mr:<5g}"
            head2 += f"| OR={o:<5g}"
        lines = [head1, head2, "-" * len(head1)]
        for alg in self.algorithms:
            row = f"{alg:<16}"
            for mr, o in cols:
                row += f"| {self.precision(alg, mr, o):<8.2f}"
            lines.append(row)
        if include_runtime:
            lines.append("")
            lines.append("mean runtime [s]")
            for alg in self.algorithms:
                row = f"{alg:<16}"
                for mr, o in cols:
                    row += f"| {self.cell(alg, mr, o).mean_runtime:<8.3f}"
                lines.append(row)
        return "\n".join(lines)


def _trial(args: tuple) -> list[tuple[str, float, float, bool, bool, float]]:
    trial, base_seed, grid, algorithms, spec_factory, cfg = args
    clean = spec_factory(base_seed + trial)
    rows = []
    for mr, o in grid:
        spec = replace(
            clean, missing_ratio=mr, outlier_ratio=o, seed=clean.seed + 7919 * trial + 1
        )
        series, truth = generate(spec)
        for alg in algorithms:
            t0 = time.perf_counter()
            est = run_algorithm(alg, series, cfg)
            dt = time.perf_counter() - t0
            exact = est is not None and int(round(est)) == truth
            near = est is not None and abs(int(round(est)) - truth) <= 1
            rows.append((alg, mr, o, exact, near, dt))
    return rows


def worker_count() -> int:
    cpus = os.cpu_count() or 1
    raw = os.environ.get("PERIOSCOPE_THREADS")
    if raw:
        try:
            return max(1, min(cpus, int(raw)))
        except ValueError:
            pass
    return cpus


def run_benchmark(
    grid: Sequence[tuple[float, float]] = TABLE_GRID,
    trials: int = 20,
    algorithms: Sequence[str] = ALGORITHMS,
    base_seed: int = 0,
    spec_factory: Callable[[int], SynthSpec] = random_spec,
    cfg: DetectConfig | None = None,
    workers: int | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> PrecisionReport:
    """Sweep every (MR, OR) cell with ``trials`` series per cell.

    Trial ``i`` draws one clean series from ``spec_factory(base_seed + i)``
    and corrupts it for every cell, so cells differ only in corruption.
    Algorithms receive only the corrupted series, never the SynthSpec. Results
    are aggregated in trial order regardless of worker scheduling.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    grid = [(float(a), float(b)) for a, b in grid]
    algorithms = list(algorithms)
    for alg in algorithms:
        if alg not in (*ALGORITHMS, "proposed_fast"):
            raise ValueError(f"unknown algorithm {alg!r}")
    jobs = [(i, base_seed, grid, algorithms, spec_factory, cfg) for i in range(trials)]
    workers = workers or worker_count()
    results: list = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, rows in enumerate(pool.map(_trial, jobs)):
                results.append(rows)
                if progress:
                    progress(i + 1, trials)
    else:
        for i, job in enumerate(jobs):
            results.append(_trial(job))
            if progress:
                progress(i + 1, trials)

    tally: dict[tuple[str, float, float], list] = {}
    for rows in results:
        for alg, mr, o, exact, near, dt in rows:
            acc = tally.setdefault((alg, mr, o), [0, 0, 0.0])
            acc[0] += exact
            acc[1] += near
            acc[2] += dt
    cells = []
    for mr, o in grid:
        for alg in algorithms:
            exact, near, total_time = tally[(alg, mr, o)]
            cells.append(CellResult(alg, mr, o, trials, exact, near, total_time / trials))
    return PrecisionReport(cells=cells, algorithms=algorithms, grid=grid, trials=trials, base_seed=base_seed)
