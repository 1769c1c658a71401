"""Parameter-history ingestion tests: format tolerance, unit detection,
error reporting with line numbers, and idempotent normalization.
"""

from __future__ import annotations

import datetime as dt
import logging

import pytest

from almsim.ecb import (
    IngestError,
    ParamRow,
    daily_window,
    monthly_history,
    parse_params_csv,
    write_params_csv,
)
from almsim.termstructure import SvenssonParams


def params(b0=0.046, b1=-0.012, b2=-0.011, b3=0.009, t1=1.4, t2=9.0):
    return SvenssonParams(b0, b1, b2, b3, t1, t2)


def write_lines(tmp_path, lines, name="params.csv"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n")
    return str(path)


DECIMAL_HEADER = "DATE,BETA0,BETA1,BETA2,BETA3,TAU1,TAU2"


def test_parse_decimal_quotes(tmp_path):
    path = write_lines(tmp_path, [
        DECIMAL_HEADER,
        "2007-12-28,0.046,-0.012,-0.011,0.009,1.4,9.0",
        "2007-12-31,0.047,-0.013,-0.010,0.008,1.4,9.0",
    ])
    rows = parse_params_csv(path)
    assert len(rows) == 2
    assert rows[0].date == dt.date(2007, 12, 28)
    assert rows[0].params.beta0 == 0.046  # auto mode sees decimals
    assert rows[1].params.tau2 == 9.0


def test_parse_detects_percent_quotes(tmp_path):
    path = write_lines(tmp_path, [
        DECIMAL_HEADER,
        "2007-12-28,4.6,-1.2,-1.1,0.9,1.4,9.0",
        "2007-12-31,4.7,-1.3,-1.0,0.8,1.4,9.0",
    ])
    rows = parse_params_csv(path)
    assert rows[0].params.beta0 == pytest.approx(0.046)
    assert rows[0].params.beta1 == pytest.approx(-0.012)
    assert rows[0].params.tau1 == 1.4  # scale factors stay untouched

    forced = parse_params_csv(path, units="decimal")
    assert forced[0].params.beta0 == 4.6


def test_parse_forced_percent_on_small_levels(tmp_path):
    path = write_lines(tmp_path, [
        DECIMAL_HEADER,
        "2007-12-31,0.046,-0.012,-0.011,0.009,1.4,9.0",
    ])
    rows = parse_params_csv(path, units="percent")
    assert rows[0].params.beta0 == pytest.approx(0.00046)


def test_parse_unknown_units_mode(tmp_path):
    path = write_lines(tmp_path, [DECIMAL_HEADER, "2007-12-31,1,1,1,1,1,1"])
    with pytest.raises(IngestError, match="units"):
        parse_params_csv(path, units="bps")


def test_parse_header_aliases_and_semicolons(tmp_path):
    path = write_lines(tmp_path, [
        "TIME_PERIOD;BETA_0;BETA_1;BETA_2;BETA_3;TAU_1;TAU_2",
        "2007-12-31;4.6;-1.2;-1.1;0.9;1.4;9.0",
    ])
    rows = parse_params_csv(path)
    assert rows[0].params.beta0 == pytest.approx(0.046)


def test_parse_tab_delimited_and_alternate_dates(tmp_path):
    path = write_lines(tmp_path, [
        "observation_date\tbeta0\tbeta1\tbeta2\tbeta3\ttau1\ttau2",
        "31.12.2007\t4.6\t-1.2\t-1.1\t0.9\t1.4\t9.0",
    ])
    rows = parse_params_csv(path)
    assert rows[0].date == dt.date(2007, 12, 31)


def test_parse_sorts_by_date(tmp_path):
    path = write_lines(tmp_path, [
        DECIMAL_HEADER,
        "2007-12-31,0.047,-0.01,-0.01,0.01,1.4,9.0",
        "2007-12-28,0.046,-0.01,-0.01,0.01,1.4,9.0",
    ])
    rows = parse_params_csv(path)
    assert [r.date.day for r in rows] == [28, 31]


def test_parse_skips_blank_value_rows_with_warning(tmp_path, caplog):
    path = write_lines(tmp_path, [
        DECIMAL_HEADER,
        "2007-12-27,0.046,-0.01,-0.01,0.01,1.4,9.0",
        "2007-12-28,,,,,,",
        "2007-12-29,NA,-0.01,-0.01,0.01,1.4,9.0",
        "",
        "2007-12-31,0.047,-0.01,-0.01,0.01,1.4,9.0",
    ])
    with caplog.at_level(logging.WARNING):
        rows = parse_params_csv(path)
    assert [r.date.day for r in rows] == [27, 31]
    assert "skipped 2 row(s)" in caplog.text
    assert "lines 3, 4" in caplog.text


def test_parse_reports_garbage_with_line_numbers(tmp_path):
    path = write_lines(tmp_path, [
        DECIMAL_HEADER,
        "2007-12-28,0.046,-0.01,-0.01,0.01,1.4,9.0",
        "2007-12-29,zorp,-0.01,-0.01,0.01,1.4,9.0",
        "not-a-date,0.046,-0.01,-0.01,0.01,1.4,9.0",
    ])
    with pytest.raises(IngestError) as excinfo:
        parse_params_csv(path)
    message = str(excinfo.value)
    assert "2 malformed row(s)" in message
    assert "line 3" in message
    assert "line 4" in message


def test_parse_rejects_short_rows(tmp_path):
    path = write_lines(tmp_path, [
        DECIMAL_HEADER,
        "2007-12-28,0.046",
    ])
    with pytest.raises(IngestError, match="too few fields"):
        parse_params_csv(path)


def test_parse_rejects_duplicate_dates(tmp_path):
    path = write_lines(tmp_path, [
        DECIMAL_HEADER,
        "2007-12-31,0.046,-0.01,-0.01,0.01,1.4,9.0",
        "2007-12-31,0.047,-0.01,-0.01,0.01,1.4,9.0",
    ])
    with pytest.raises(IngestError, match="duplicate date 2007-12-31"):
        parse_params_csv(path)


def test_parse_rejects_missing_columns(tmp_path):
    path = write_lines(tmp_path, [
        "DATE,BETA0,BETA1,BETA2,BETA3,TAU1",
        "2007-12-31,0.046,-0.01,-0.01,0.01,1.4",
    ])
    with pytest.raises(IngestError, match="tau2"):
        parse_params_csv(path)


def test_parse_rejects_empty_and_all_blank_files(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(IngestError, match="empty"):
        parse_params_csv(str(empty))
    header_only = write_lines(tmp_path, [DECIMAL_HEADER], name="header.csv")
    with pytest.raises(IngestError, match="no usable"):
        parse_params_csv(header_only)


def test_normalized_store_round_trips_and_is_idempotent(tmp_path):
    original = write_lines(tmp_path, [
        DECIMAL_HEADER,
        "2007-12-28,4.612345,-1.23,-1.01,0.87,1.37,9.21",
        "2007-12-31,4.701,-1.31,-1.04,0.83,1.38,9.18",
    ])
    rows = parse_params_csv(original)
    store = str(tmp_path / "store.csv")
    write_params_csv(rows, store)

    again = parse_params_csv(store)  # normalized store reads back as decimals
    assert again == rows

    second_store = str(tmp_path / "store2.csv")
    write_params_csv(again, second_store)
    assert open(store, "rb").read() == open(second_store, "rb").read()


# --- history selection -------------------------------------------------------------


def daily_rows(start, days):
    """Consecutive calendar-day observations with drifting beta0."""
    rows = []
    for i in range(days):
        date = start + dt.timedelta(days=i)
        rows.append(ParamRow(date=date, params=params(b0=0.04 + 1e-5 * i)))
    return rows


def test_monthly_history_takes_last_observation_per_month():
    rows = daily_rows(dt.date(2007, 9, 1), 122)  # Sep 1 .. Dec 31
    anchor = dt.date(2007, 12, 31)
    monthly = monthly_history(rows, anchor, months=3)
    assert [r.date.isoformat() for r in monthly] == [
        "2007-10-31", "2007-11-30", "2007-12-31"
    ]
    assert monthly[-1].date == anchor


def test_monthly_history_requires_anchor_row():
    rows = daily_rows(dt.date(2007, 9, 1), 100)
    with pytest.raises(IngestError, match="2007-12-31"):
        monthly_history(rows, dt.date(2007, 12, 31), months=2)


def test_monthly_history_requires_enough_months():
    rows = daily_rows(dt.date(2007, 11, 1), 61)  # Nov 1 .. Dec 31
    with pytest.raises(IngestError, match="need 5"):
        monthly_history(rows, dt.date(2007, 12, 31), months=5)


def test_daily_window_is_inclusive_and_bounded():
    rows = daily_rows(dt.date(2005, 1, 1), 1096)  # through 2007-12-31
    anchor = dt.date(2007, 12, 31)
    window = daily_window(rows, anchor, years=1.0)
    start = anchor - dt.timedelta(days=365)  # round(365.25)
    assert window[0].date == start
    assert window[-1].date == anchor
    assert all(start <= r.date <= anchor for r in window)


def test_daily_window_needs_two_rows():
    rows = daily_rows(dt.date(2007, 12, 31), 1)
    with pytest.raises(IngestError, match="fewer than two"):
        daily_window(rows, dt.date(2007, 12, 31), years=0.001)
