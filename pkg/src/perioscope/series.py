"""Masked univariate series: representation, ingestion and small helpers.

Missing samples are tracked with an explicit 0/1 mask. Values stored at
masked positions are placeholders and are never read by any routine in the
package.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MIN_LENGTH = 4
MISSING_MARKERS = frozenset({"", "nan", "null"})


class SeriesError(ValueError):
    """Raised for malformed or degenerate input series."""


@dataclass(frozen=True)
class ObservedSeries:
    """Values plus an observation mask (1 = observed, 0 = missing)."""

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float, copy=True).reshape(-1)
        mask = np.array(self.mask, copy=True).reshape(-1)
        if values.shape != mask.shape:
            raise SeriesError(
                f"values and mask differ in length ({values.size} != {mask.size})"
            )
        if mask.size and not np.isin(mask, (0, 1)).all():
            raise SeriesError("mask entries must be 0 or 1")
        mask = mask.astype(bool)
        if values.size < MIN_LENGTH:
            raise SeriesError(
                f"series too short: N={values.size}, need at least {MIN_LENGTH}"
            )
        if not mask.any():
            raise SeriesError("series has no observed values")
        # placeholders are zeroed so NaN payloads can never leak into arithmetic
        values[~mask] = 0.0
        if not np.isfinite(values[mask]).all():
            raise SeriesError("observed values must be finite")
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_values(cls, values: Iterable[float | None]) -> "ObservedSeries":
        """Build from a sequence where ``None`` or NaN marks a missing sample."""
        raw = [np.nan if v is None else float(v) for v in values]
        arr = np.asarray(raw, dtype=float)
        mask = np.isfinite(arr)
        return cls(np.where(mask, arr, 0.0), mask)

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())

    def with_values(self, values: np.ndarray) -> "ObservedSeries":
        return ObservedSeries(values, self.mask)

    def to_dict(self) -> dict:
        return {
            "values": [float(v) if m else None for v, m in zip(self.values, self.mask)],
            "mask": [int(m) for m in self.mask],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "ObservedSeries":
        try:
            raw_values = data["values"]
        except (KeyError, TypeError) as exc:
            raise SeriesError("JSON series needs a 'values' array") from exc
        values = np.array([0.0 if v is None else float(v) for v in raw_values])
        if "mask" in data:
            mask = np.asarray(data["mask"], dtype=int)
        else:
            mask = np.array([v is not None for v in raw_values], dtype=int)
        return cls(values, mask)

    @classmethod
    def from_json(cls, text: str) -> "ObservedSeries":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class MissingBlockReport:
    blocks: list[tuple[int, int]] = field(default_factory=list)
    max_block_len: int = 0
    missing_ratio: float = 0.0
    n: int = 0

    @property
    def within_safe_regime(self) -> bool:
        """True when the longest gap is shorter than floor(N/3)."""
        return self.max_block_len < self.n // 3

    def to_dict(self) -> dict:
        return {
            "blocks": [list(b) for b in self.blocks],
            "max_block_len": self.max_block_len,
            "missing_ratio": self.missing_ratio,
            "within_safe_regime": self.within_safe_regime,
        }


def scan_missing_blocks(s: ObservedSeries) -> MissingBlockReport:
    """Locate the maximal runs of missing samples as (start, length) pairs."""
    return scan_mask(s.mask)


def scan_mask(mask: np.ndarray) -> MissingBlockReport:
    missing = ~np.asarray(mask, dtype=bool)
    n = missing.size
    padded = np.concatenate(([False], missing, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    blocks = [(int(a), int(b - a)) for a, b in zip(starts, stops)]
    longest = max((length for _, length in blocks), default=0)
    ratio = float(missing.sum()) / n if n else 0.0
    return MissingBlockReport(blocks=blocks, max_block_len=longest, missing_ratio=ratio, n=n)


def mask_from_blocks(n: int, blocks: Sequence[tuple[int, int]]) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    for start, length in blocks:
        mask[start : start + length] = False
    return mask


def observed_mean(s: ObservedSeries) -> float:
    return float(s.values[s.mask].mean())


def linear_interpolate(s: ObservedSeries) -> ObservedSeries:
    """Fill gaps linearly between observed neighbours.

    Leading and trailing gaps take the nearest observed value; linear
    extrapolation would invent a trend that is not in the data.
    """
    if s.n_observed < 2:
        raise SeriesError("linear interpolation needs at least two observed values")
    if s.mask.all():
        return s
    idx = np.arange(len(s))
    filled = np.interp(idx, idx[s.mask], s.values[s.mask])
    return ObservedSeries(filled, np.ones(len(s), dtype=bool))


def _parse_cell(cell: str, row: int) -> float | None:
    text = cell.strip()
    if text.lower() in MISSING_MARKERS:
        return None
    try:
        value = float(text)
    except ValueError:
        raise SeriesError(f"row {row}: cannot parse {cell!r} as a number") from None
    if math.isnan(value):
        return None
    return value


def _looks_numeric(cell: str) -> bool:
    text = cell.strip()
    if text.lower() in MISSING_MARKERS:
        return True
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(path: str | Path, column: str | int | None = None) -> ObservedSeries:
    """Read one value column from a CSV file.

    Parameters
    ----------
    path : str or Path
        UTF-8 CSV file with an optional header row.
    column : str or int, optional
        Header name or zero-based index of the value column. Defaults to the
        first column.

    Empty cells and ``NaN``/``nan``/``null`` are read as missing. Any other
    cell that does not parse as a number raises :class:`SeriesError` naming
    the 1-based file row.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise SeriesError(f"cannot read {path}: {exc}") from exc

    # csv.reader yields [] for blank lines; keep them as empty cells
    rows = [r if r else [""] for r in rows]
    while rows and all(not c.strip() for c in rows[-1]):
        rows.pop()
    if not rows:
        raise SeriesError(f"{path}: no data rows")

    header: list[str] | None = None
    first = rows[0]
    has_header = isinstance(column, str) or not all(_looks_numeric(c) for c in first)
    if has_header:
        header = [c.strip() for c in first]
        body_start = 1
    else:
        body_start = 0

    if column is None:
        col = 0
    elif isinstance(column, int):
        col = column
    else:
        if header is None or column not in header:
            raise SeriesError(f"{path}: column {column!r} not found")
        col = header.index(column)

    parsed: list[float | None] = []
    for offset, row in enumerate(rows[body_start:]):
        line_no = body_start + offset + 1
        cell = row[col] if col < len(row) else ""
        parsed.append(_parse_cell(cell, line_no))
    return ObservedSeries.from_values(parsed)


def save_csv(s: ObservedSeries, path: str | Path, header: str | None = "value") -> None:
    """Write a one-column CSV; missing samples are written as ``NaN``.

    An explicit marker rather than an empty cell keeps trailing gaps intact,
    since trailing blank lines are ignored on reading.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header is not None:
            fh.write(header + "\n")
        for v, m in zip(s.values, s.mask):
            fh.write((repr(float(v)) if m else "NaN") + "\n")


def load_json(path: str | Path) -> ObservedSeries:
    try:
        text = Path(path).read_text(encoding="utf-8")
        return ObservedSeries.from_json(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise SeriesError(f"cannot read {path}: {exc}") from exc


def load_series(path: str | Path, column: str | int | None = None) -> ObservedSeries:
    """Dispatch on file suffix: ``.json`` or anything else as CSV."""
    if Path(path).suffix.lower() == ".json":
        return load_json(path)
    return load_csv(path, column)


def robust_scale(x: np.ndarray) -> float:
    """1.4826 * MAD, falling back to the standard deviation when MAD is 0."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0
    med = np.median(x)
    mad = 1.4826 * float(np.median(np.abs(x - med)))
    if mad > 0:
        return mad
    return float(np.std(x))
