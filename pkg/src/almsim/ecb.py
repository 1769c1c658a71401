"""Ingestion of published Svensson parameter histories.

Accepts delimited text with a header naming a date column and the six curve
parameters (any case, punctuation ignored, e.g. ``BETA0`` or ``beta_0``).
Values may be quoted in percent or decimals; by default the unit is
auto-detected from the typical magnitude of the level parameter and
normalized to decimals.  The normalized store written back out is itself a
valid input, and re-ingesting it is a no-op.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import re
from dataclasses import dataclass

from .termstructure import SvenssonParams

__all__ = [
    "IngestError",
    "ParamRow",
    "parse_params_csv",
    "write_params_csv",
    "monthly_history",
    "daily_window",
]

log = logging.getLogger(__name__)

#: Level parameters above this magnitude are taken to be percent quotes.
PERCENT_THRESHOLD = 0.5

_CANONICAL = ("beta0", "beta1", "beta2", "beta3", "tau1", "tau2")
_DATE_ALIASES = {"date", "timeperiod", "observationdate"}


class IngestError(ValueError):
    """Malformed parameter file; the message lists offending line numbers."""


@dataclass(frozen=True)
class ParamRow:
    """One dated Svensson parameter observation (decimals)."""

    date: dt.date
    params: SvenssonParams


def _normalize_header(name: str) -> str:
    return re.sub(r"[^a-z0-9]", "", name.lower())


def _sniff_delimiter(sample: str) -> str:
    counts = {d: sample.count(d) for d in (",", ";", "\t")}
    return max(counts, key=counts.get)


def _parse_date(text: str) -> dt.date:
    text = text.strip()
    for fmt in ("%Y-%m-%d", "%d.%m.%Y", "%d/%m/%Y", "%Y%m%d"):
        try:
            return dt.datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    raise ValueError(f"unrecognized date {text!r}")


def parse_params_csv(path: str, units: str = "auto") -> list[ParamRow]:
    """Parse a Svensson parameter history into decimal-quoted rows.

    Parameters
    ----------
    path : str
        Delimited text file with a header row.
    units : {"auto", "percent", "decimal"}
        Interpretation of the beta columns.  ``auto`` treats the file as
        percent-quoted when the median ``|beta0|`` exceeds 0.5 (yield levels
        above 50% being implausible, levels like 4.6 must mean 4.6%).

    Returns
    -------
    list of ParamRow, sorted by strictly increasing date.

    Raises
    ------
    IngestError
        On a missing/unknown header, unparseable numbers or dates (with line
        numbers), duplicate dates, or an empty file.  Rows with blank
        parameter fields are skipped with a warning instead.
    """
    if units not in ("auto", "percent", "decimal"):
        raise IngestError(f"unknown units mode {units!r}")
    with open(path, newline="") as handle:
        head = handle.readline()
        if not head.strip():
            raise IngestError(f"{path}: empty file")
        delimiter = _sniff_delimiter(head)
        header = [_normalize_header(h) for h in next(csv.reader([head], delimiter=delimiter))]
        columns: dict[str, int] = {}
        for i, name in enumerate(header):
            if name in _DATE_ALIASES:
                columns.setdefault("date", i)
            elif name in _CANONICAL:
                columns.setdefault(name, i)
        missing = [c for c in ("date", *_CANONICAL) if c not in columns]
        if missing:
            raise IngestError(f"{path}: header lacks columns {missing} (found {header})")

        raw: list[tuple[dt.date, list[float]]] = []
        bad_lines: list[str] = []
        skipped: list[int] = []
        for line_no, row in enumerate(csv.reader(handle, delimiter=delimiter), start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) <= max(columns.values()):
                bad_lines.append(f"line {line_no}: too few fields")
                continue
            cells = [row[columns[c]].strip() for c in _CANONICAL]
            if any(cell in ("", ".", "NA", "NaN", "-") for cell in cells):
                skipped.append(line_no)
                continue
            try:
                date = _parse_date(row[columns["date"]])
                values = [float(cell) for cell in cells]
            except ValueError as exc:
                bad_lines.append(f"line {line_no}: {exc}")
                continue
            raw.append((date, values))
        if bad_lines:
            preview = "; ".join(bad_lines[:10])
            raise IngestError(f"{path}: {len(bad_lines)} malformed row(s): {preview}")
        if skipped:
            log.warning("%s: skipped %d row(s) with missing values (lines %s%s)",
                        path, len(skipped), ", ".join(map(str, skipped[:10])),
                        ", ..." if len(skipped) > 10 else "")
        if not raw:
            raise IngestError(f"{path}: no usable parameter rows")

    if units == "auto":
        levels = sorted(abs(values[0]) for _, values in raw)
        percent = levels[len(levels) // 2] > PERCENT_THRESHOLD
    else:
        percent = units == "percent"
    scale = 0.01 if percent else 1.0

    raw.sort(key=lambda item: item[0])
    rows: list[ParamRow] = []
    last_date: dt.date | None = None
    for date, values in raw:
        if date == last_date:
            raise IngestError(f"{path}: duplicate date {date.isoformat()}")
        last_date = date
        b0, b1, b2, b3, t1, t2 = values
        rows.append(
            ParamRow(
                date=date,
                params=SvenssonParams(
                    beta0=b0 * scale, beta1=b1 * scale,
                    beta2=b2 * scale, beta3=b3 * scale,
                    tau1=t1, tau2=t2,
                ),
            )
        )
    return rows


def write_params_csv(rows: list[ParamRow], path: str) -> str:
    """Write the normalized (decimal, date-sorted) parameter store."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["date", "beta0", "beta1", "beta2", "beta3", "tau1", "tau2"])
        for row in rows:
            p = row.params
            writer.writerow(
                [row.date.isoformat()]
                + [repr(v) for v in (p.beta0, p.beta1, p.beta2, p.beta3, p.tau1, p.tau2)]
            )
    return path


def monthly_history(rows: list[ParamRow], anchor_date: dt.date, months: int) -> list[ParamRow]:
    """Last observation of each calendar month, ending at the anchor date.

    Returns exactly ``months`` rows, oldest first; the final row is the
    observation dated ``anchor_date`` (which must exist).
    """
    upto = [r for r in rows if r.date <= anchor_date]
    if not upto or upto[-1].date != anchor_date:
        raise IngestError(f"no parameter row dated {anchor_date.isoformat()}")
    by_month: dict[tuple[int, int], ParamRow] = {}
    for row in upto:
        by_month[(row.date.year, row.date.month)] = row
    ordered = [by_month[k] for k in sorted(by_month)]
    if len(ordered) < months:
        raise IngestError(
            f"history covers {len(ordered)} months, need {months} before "
            f"{anchor_date.isoformat()}"
        )
    return ordered[-months:]


def daily_window(rows: list[ParamRow], anchor_date: dt.date, years: float) -> list[ParamRow]:
    """Daily observations within ``years`` before the anchor, inclusive."""
    start = anchor_date - dt.timedelta(days=round(years * 365.25))
    window = [r for r in rows if start <= r.date <= anchor_date]
    if len(window) < 2:
        raise IngestError("daily calibration window holds fewer than two rows")
    return window
