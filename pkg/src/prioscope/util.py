"""Exact-arithmetic formatting, summary statistics, CSV and parallel helpers.

All report numbers are carried as integers or ``fractions.Fraction`` until the
moment they are written out; rounding is half-even and happens exactly once,
at emission.
"""

from __future__ import annotations

import csv
import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence, TypeVar

WEI_PER_GWEI = 10**9

T = TypeVar("T")
R = TypeVar("R")


def fmt_fixed(value: Fraction | int, digits: int) -> str:
    """Format a rational with exactly ``digits`` fractional digits, half-even."""
    q = round(Fraction(value), digits)  # Fraction.__round__ is exact banker's rounding
    scaled = int(q * 10**digits)
    sign = "-" if scaled < 0 else ""
    whole, frac = divmod(abs(scaled), 10**digits)
    if digits == 0:
        return f"{sign}{whole}"
    return f"{sign}{whole}.{frac:0{digits}d}"


def fmt_pct(value: Fraction | int) -> str:
    return fmt_fixed(value, 2)


def gwei(wei_value: Fraction | int) -> Fraction:
    """Exact wei -> gwei conversion."""
    return Fraction(wei_value) / WEI_PER_GWEI


def fmt_gwei(wei_value: Fraction | int) -> str:
    """Wei amount as a gwei decimal string with 9 fractional digits."""
    return fmt_fixed(gwei(wei_value), 9)


def quantile(sorted_values: Sequence[Fraction | int], p: Fraction) -> Fraction:
    """Linear-interpolation quantile (inclusive method) over pre-sorted values."""
    if not sorted_values:
        raise ValueError("quantile of empty sequence")
    pos = p * (len(sorted_values) - 1)
    i = int(pos)  # floor; p is in [0, 1] so pos >= 0
    lo = Fraction(sorted_values[i])
    if i + 1 == len(sorted_values):
        return lo
    hi = Fraction(sorted_values[i + 1])
    return lo + (hi - lo) * (pos - i)


@dataclass(frozen=True)
class SummaryStats:
    n: int
    minimum: Fraction
    p25: Fraction
    median: Fraction
    p75: Fraction
    maximum: Fraction
    mean: Fraction


def summarize(values: Iterable[Fraction | int]) -> SummaryStats:
    vals = sorted(Fraction(v) for v in values)
    if not vals:
        raise ValueError("summarize of empty sequence")
    return SummaryStats(
        n=len(vals),
        minimum=vals[0],
        p25=quantile(vals, Fraction(1, 4)),
        median=quantile(vals, Fraction(1, 2)),
        p75=quantile(vals, Fraction(3, 4)),
        maximum=vals[-1],
        mean=Fraction(sum(vals), len(vals)),
    )


def ecdf(values: Iterable[Fraction | int]) -> list[tuple[Fraction, Fraction]]:
    """Empirical CDF as (value, fraction of samples <= value) rows, one per distinct value."""
    vals = sorted(Fraction(v) for v in values)
    n = len(vals)
    rows: list[tuple[Fraction, Fraction]] = []
    for i, v in enumerate(vals, 1):
        if i == n or vals[i] != v:
            rows.append((v, Fraction(i, n)))
    return rows


def window_start_utc(timestamp: int, window: str) -> str:
    """ISO date of the UTC calendar window (day, ISO week, or month) containing ``timestamp``."""
    d = datetime.fromtimestamp(timestamp, tz=timezone.utc).date()
    if window == "day":
        start = d
    elif window == "week":
        start = d - timedelta(days=d.weekday())
    elif window == "month":
        start = d.replace(day=1)
    else:
        raise ValueError(f"unknown window {window!r}")
    return start.isoformat()


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    """Write a report CSV with a fixed header and ``\\n`` line endings."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def default_workers() -> int:
    return os.cpu_count() or 1


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: int) -> Iterator[R]:
    """Ordered map over ``items``, optionally fanned out to a process pool.

    Results arrive in input order regardless of worker count, so downstream
    emission is byte-identical for any ``workers`` value. The submission window
    is bounded, keeping memory independent of the input length.
    """
    if workers <= 1:
        yield from map(fn, items)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        pending: deque = deque()
        for item in items:
            pending.append(pool.submit(fn, item))
            if len(pending) >= workers * 4:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()
