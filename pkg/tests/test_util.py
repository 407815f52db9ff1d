from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from prioscope.util import (
    ecdf,
    fmt_fixed,
    fmt_gwei,
    fmt_pct,
    quantile,
    summarize,
    window_start_utc,
)


def test_fmt_fixed_basic():
    assert fmt_fixed(Fraction(1, 2), 2) == "0.50"
    assert fmt_fixed(Fraction(-1, 3), 2) == "-0.33"
    assert fmt_fixed(7, 0) == "7"
    assert fmt_pct(Fraction(200, 3)) == "66.67"


def test_fmt_fixed_half_even_ties():
    assert fmt_fixed(Fraction(5, 1000), 2) == "0.00"   # 0.005 -> even 0.00
    assert fmt_fixed(Fraction(15, 1000), 2) == "0.02"  # 0.015 -> even 0.02
    assert fmt_fixed(Fraction(25, 1000), 2) == "0.02"
    assert fmt_fixed(Fraction(-15, 1000), 2) == "-0.02"


@given(
    num=st.integers(min_value=-10**12, max_value=10**12),
    den=st.integers(min_value=1, max_value=10**6),
    digits=st.integers(min_value=0, max_value=9),
)
def test_fmt_fixed_matches_decimal(num, den, digits):
    value = Fraction(num, den)
    # Decimal with enough precision to hold the exact quotient of the test range
    dec = (Decimal(num) / Decimal(den)).quantize(
        Decimal(1).scaleb(-digits), rounding=ROUND_HALF_EVEN
    )
    if dec.is_zero():
        dec = abs(dec)  # Decimal keeps a sign on -0; our format never does
    assert fmt_fixed(value, digits) == f"{dec:.{digits}f}"


def test_fmt_gwei():
    assert fmt_gwei(90709195434) == "90.709195434"
    assert fmt_gwei(0) == "0.000000000"
    assert fmt_gwei(Fraction(3, 2)) == "0.000000002"  # 1.5 wei rounds to even 2


def test_quantile_linear_interpolation():
    data = sorted([1, 1, 1, 1, 2, 2, 2, 2, 3, 3])
    assert quantile(data, Fraction(1, 4)) == 1
    assert quantile(data, Fraction(1, 2)) == 2
    assert quantile(data, Fraction(3, 4)) == 2
    assert quantile([5], Fraction(1, 2)) == 5
    assert quantile([1, 2], Fraction(1, 2)) == Fraction(3, 2)


def test_summarize_exact_mean():
    s = summarize([2, 1, 2, 3, 1, 2, 1, 3, 2, 1])
    assert (s.minimum, s.p25, s.median, s.p75, s.maximum) == (1, 1, 2, 2, 3)
    assert s.mean == Fraction(9, 5)


def test_summarize_empty_rejected():
    with pytest.raises(ValueError):
        summarize([])


def test_ecdf_steps():
    rows = ecdf([3, 1, 3, 2])
    assert rows == [
        (Fraction(1), Fraction(1, 4)),
        (Fraction(2), Fraction(1, 2)),
        (Fraction(3), Fraction(1)),
    ]


def test_window_start_utc():
    ts = 1606780800  # 2020-12-01 00:00:00 UTC, a Tuesday
    assert window_start_utc(ts, "day") == "2020-12-01"
    assert window_start_utc(ts, "week") == "2020-11-30"   # Monday of that week
    assert window_start_utc(ts, "month") == "2020-12-01"
    assert window_start_utc(ts + 86400 * 40, "month") == "2021-01-01"
    with pytest.raises(ValueError):
        window_start_utc(ts, "year")
