"""Loss-record files to event lists and monthly interval panels.

Amounts above the threshold are log-transformed, smaller ones become 0
(no jump in that category), and records with no surviving category are
dropped.  Event times run on a month-uniform clock in years: noon of day
``d`` of a month with ``D`` days sits at ``(month_index + (d - 0.5) / D) / 12``.
Calendar months are therefore exactly the equal-length intervals of the
panel, so monthly bucketing and ``dt = 1/12`` agree by construction.
"""
from __future__ import annotations

import calendar
import csv
import datetime as _dt
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import InputError
from .simulate import Events, IntervalPanel, aggregate, marginal_jump_vectors

log = logging.getLogger(__name__)

DEFAULT_COLUMNS = {"date": "date", "building": "building", "contents": "contents",
                   "profit": "profit"}
# headers of the publicly distributed multivariate Danish fire file
DANISH_COLUMNS = {"date": "Date", "building": "Building", "contents": "Contents",
                  "profit": "Profits"}
MAX_BAD_FRACTION = 0.01


@dataclass(frozen=True)
class RawLossRecord:
    date: _dt.date
    building: float
    contents: float
    profit: float = 0.0

    def __post_init__(self):
        for name in ("building", "contents", "profit"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InputError(f"{name} must be a finite amount >= 0, got {v!r}")


@dataclass(frozen=True)
class Window:
    """Whole calendar months from ``start`` (first day) to ``end`` (last day)."""

    start: _dt.date
    end: _dt.date

    def __post_init__(self):
        if self.start.day != 1:
            raise InputError(f"window must start on the first of a month, got {self.start}")
        last = calendar.monthrange(self.end.year, self.end.month)[1]
        if self.end.day != last:
            raise InputError(f"window must end on the last day of a month, got {self.end}")
        if self.end < self.start:
            raise InputError("window end precedes its start")

    @classmethod
    def years(cls, first: int, last: int) -> "Window":
        return cls(_dt.date(first, 1, 1), _dt.date(last, 12, 31))

    @property
    def months(self) -> int:
        return (self.end.year - self.start.year) * 12 + self.end.month - self.start.month + 1

    @property
    def horizon(self) -> float:
        return self.months / 12.0

    def contains(self, d: _dt.date) -> bool:
        return self.start <= d <= self.end

    def time_of(self, d: _dt.date) -> float:
        idx = (d.year - self.start.year) * 12 + d.month - self.start.month
        days = calendar.monthrange(d.year, d.month)[1]
        return (idx + (d.day - 0.5) / days) / 12.0


def parse_window(text: str) -> Window:
    """``"1980-1990"`` (whole years) or ``"1980-01-01:1990-12-31"``."""
    text = text.strip()
    if ":" in text:
        a, b = text.split(":", 1)
        try:
            return Window(_dt.date.fromisoformat(a.strip()), _dt.date.fromisoformat(b.strip()))
        except ValueError as exc:
            raise InputError(f"bad window {text!r}: {exc}") from None
    parts = text.split("-")
    if len(parts) == 2 and all(p.strip().isdigit() for p in parts):
        return Window.years(int(parts[0]), int(parts[1]))
    raise InputError(f"bad window {text!r}; use YYYY-YYYY or YYYY-MM-DD:YYYY-MM-DD")


def _parse_date(text: str, fmt: Optional[str]) -> _dt.date:
    text = text.strip()
    if fmt:
        return _dt.datetime.strptime(text, fmt).date()
    return _dt.date.fromisoformat(text)


def _parse_amount(text: str) -> float:
    text = text.strip()
    return 0.0 if text == "" else float(text)


def read_loss_file(path, columns: Optional[dict] = None, date_format: Optional[str] = None,
                   delimiter: str = ",", max_bad_fraction: float = MAX_BAD_FRACTION):
    """Parse a delimited loss file into ``RawLossRecord`` objects.

    Unparseable rows are logged with their line number and skipped; more
    than ``max_bad_fraction`` of bad rows aborts with ``InputError``.
    """
    cols = dict(DEFAULT_COLUMNS)
    cols.update(columns or {})
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames or []
        if cols["date"] not in header and cols == DEFAULT_COLUMNS and DANISH_COLUMNS["date"] in header:
            cols = dict(DANISH_COLUMNS)
        required = [cols["date"], cols["building"], cols["contents"]]
        missing = [c for c in required if c not in header]
        if missing:
            raise InputError(f"{path}: missing columns {missing}; header is {header}")
        records, bad = [], []
        for row in reader:
            line = reader.line_num
            try:
                prof = row.get(cols["profit"]) if cols["profit"] in header else ""
                rec = RawLossRecord(_parse_date(row[cols["date"]], date_format),
                                    _parse_amount(row[cols["building"]]),
                                    _parse_amount(row[cols["contents"]]),
                                    _parse_amount(prof or ""))
            except (ValueError, TypeError, AttributeError) as exc:
                log.error("%s line %d: %s", path, line, exc)
                bad.append(line)
                continue
            records.append(rec)
    total = len(records) + len(bad)
    if total and len(bad) > max_bad_fraction * total:
        raise InputError(f"{path}: {len(bad)} of {total} rows unparseable (lines {bad[:10]})")
    return records


@dataclass
class IngestResult:
    events: Events
    s1: np.ndarray
    s2: np.ndarray
    window: Window
    threshold: float
    preprocessed: bool = True

    @property
    def horizon(self) -> float:
        return self.window.horizon


def _transform(a, threshold):
    return math.log(a) if a > threshold else 0.0


def preprocess(records: Iterable[RawLossRecord], window: Window,
               threshold: float = 1.0, outside: str = "error") -> IngestResult:
    """Threshold, log-transform and time-stamp raw records; drop the profit column.

    ``outside="drop"`` discards records dated outside ``window`` instead of
    raising, which selects a sub-period of a longer file.
    """
    if outside not in ("error", "drop"):
        raise InputError(f"outside must be 'error' or 'drop', got {outside!r}")
    if isinstance(records, IngestResult):
        raise InputError("records are already preprocessed; refusing to transform twice")
    if not threshold >= 0:
        raise InputError("threshold must be >= 0")
    times, a1, a2 = [], [], []
    for i, rec in enumerate(records):
        if not window.contains(rec.date):
            if outside == "drop":
                continue
            raise InputError(f"record {i} dated {rec.date} lies outside the window")
        x = _transform(rec.building, threshold)
        y = _transform(rec.contents, threshold)
        if x == 0.0 and y == 0.0:
            continue
        times.append(window.time_of(rec.date))
        a1.append(x)
        a2.append(y)
    t = np.asarray(times, dtype=float)
    order = np.argsort(t, kind="stable")
    ev = Events(t[order], np.asarray(a1, dtype=float)[order], np.asarray(a2, dtype=float)[order])
    s1, s2 = marginal_jump_vectors(ev)
    return IngestResult(ev, s1, s2, window, threshold)


def build_monthly_panel(events, window: Window) -> IntervalPanel:
    """One interval per calendar month of the window."""
    if not isinstance(window, Window):
        raise InputError("window must be a Window of whole months")
    if isinstance(events, IngestResult):
        events = events.events
    return aggregate(events, window.horizon, window.months)
