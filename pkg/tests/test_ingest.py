import csv
import datetime as dt
import logging
import math
from pathlib import Path

import numpy as np
import pytest

from levycop import InputError, RawLossRecord, build_monthly_panel, preprocess, read_loss_file
from levycop.formats import read_panel, write_panel
from levycop.ingest import Window, parse_window

FIXTURE = Path(__file__).parent / "data" / "danish_fixture.csv"
D = dt.date


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------


def test_window_years():
    w = Window.years(1980, 1990)
    assert w.months == 132 and w.horizon == 11.0
    assert parse_window("1980-1990") == w
    assert parse_window("1985-03-01:1985-05-31").months == 3


@pytest.mark.parametrize("text", ["1980", "1980-01-02:1990-12-31", "1980-01-01:1990-12-30",
                                  "1990-01-01:1980-12-31", "80-90x", "1980-13-01:1981-01-31"])
def test_window_errors(text):
    with pytest.raises(InputError):
        parse_window(text)


def test_event_clock_places_days_inside_their_month():
    w = Window.years(1980, 1981)
    # first and last day of every month land strictly inside interval (i/12, (i+1)/12]
    for i in range(24):
        y, mth = 1980 + i // 12, i % 12 + 1
        last = (D(y + (mth == 12), mth % 12 + 1, 1) - dt.timedelta(days=1)).day
        for day in (1, last):
            t = w.time_of(D(y, mth, day))
            assert i / 12 < t < (i + 1) / 12
    assert w.time_of(D(1980, 1, 1)) == pytest.approx(0.5 / 31 / 12)


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------


def test_threshold_and_log_transform():
    w = Window.years(1980, 1980)
    recs = [
        RawLossRecord(D(1980, 1, 5), 0.5, 0.5, 3.0),     # both below: dropped
        RawLossRecord(D(1980, 2, 5), 1.0, 2.0, 0.0),     # building exactly at threshold
        RawLossRecord(D(1980, 3, 5), math.e, 0.0, 0.0),
        RawLossRecord(D(1980, 3, 9), 1.0000001, 5.0, 9.0),
    ]
    res = preprocess(recs, w)
    assert len(res.events) == 3
    np.testing.assert_allclose(res.events.amount1, [0.0, 1.0, math.log(1.0000001)])
    np.testing.assert_allclose(res.events.amount2, [math.log(2.0), 0.0, math.log(5.0)])
    assert res.events.origin is None
    np.testing.assert_array_equal(res.s1, res.events.amount1[res.events.amount1 > 0])
    assert len(res.s1) == 2 and len(res.s2) == 2


def test_profit_is_ignored():
    w = Window.years(1980, 1980)
    res = preprocess([RawLossRecord(D(1980, 1, 5), 0.0, 0.0, 50.0)], w)
    assert len(res.events) == 0


def test_outside_window():
    w = Window.years(1981, 1981)
    recs = [RawLossRecord(D(1980, 12, 31), 3.0, 0.0), RawLossRecord(D(1981, 6, 1), 3.0, 0.0)]
    with pytest.raises(InputError):
        preprocess(recs, w)
    assert len(preprocess(recs, w, outside="drop").events) == 1
    with pytest.raises(InputError):
        preprocess(recs, w, outside="ignore")


def test_double_preprocessing_is_refused():
    w = Window.years(1980, 1980)
    res = preprocess([RawLossRecord(D(1980, 1, 5), 3.0, 0.0)], w)
    assert res.preprocessed
    with pytest.raises(InputError):
        preprocess(res, w)


def test_raw_record_validation():
    with pytest.raises(InputError):
        RawLossRecord(D(1980, 1, 1), -1.0, 0.0)
    with pytest.raises(InputError):
        RawLossRecord(D(1980, 1, 1), float("nan"), 0.0)


# ---------------------------------------------------------------------------
# panels
# ---------------------------------------------------------------------------


def test_monthly_panel_and_empty_months():
    w = Window.years(1980, 1980)
    recs = [RawLossRecord(D(1980, 1, 31), 3.0, 0.0), RawLossRecord(D(1980, 1, 1), 5.0, 2.0),
            RawLossRecord(D(1980, 3, 1), 0.0, 4.0), RawLossRecord(D(1980, 12, 31), 2.0, 2.0)]
    panel = build_monthly_panel(preprocess(recs, w), w)
    assert panel.M == 12 and panel.dt == pytest.approx(1 / 12)
    np.testing.assert_array_equal(panel.n[0], [2, 1])
    np.testing.assert_allclose(panel.z[0], [math.log(5.0), math.log(2.0)])
    np.testing.assert_array_equal(panel.n[1], [0, 0])
    np.testing.assert_array_equal(panel.z[1], [0.0, 0.0])
    np.testing.assert_array_equal(panel.n[2], [0, 1])
    np.testing.assert_array_equal(panel.n[11], [1, 1])
    with pytest.raises(InputError):
        build_monthly_panel(preprocess(recs, w), "1980-1980")


def test_panel_round_trip_is_bit_exact(tmp_path):
    w = Window.years(1980, 1990)
    res = preprocess(read_loss_file(FIXTURE), w, outside="drop")
    panel = build_monthly_panel(res, w)
    write_panel(tmp_path / "p.csv", panel)
    back, meta = read_panel(tmp_path / "p.csv")
    assert meta["intervals"] == "132"
    assert back == panel
    assert back.z.tobytes() == panel.z.tobytes()


def test_fixture_counts_by_independent_recount():
    w = Window.years(1980, 1990)
    res = preprocess(read_loss_file(FIXTURE), w, outside="drop")
    panel = build_monthly_panel(res, w)
    b = c = events = 0
    monthly = np.zeros((132, 2), dtype=int)
    with open(FIXTURE, newline="") as fh:
        for row in csv.DictReader(fh):
            day = D.fromisoformat(row["Date"])
            if not 1980 <= day.year <= 1990:
                continue
            hb, hc = float(row["Building"]) > 1, float(row["Contents"]) > 1
            idx = (day.year - 1980) * 12 + day.month - 1
            b += hb
            c += hc
            events += hb or hc
            monthly[idx] += [hb, hc]
    assert (len(res.events), len(res.s1), len(res.s2)) == (events, b, c)
    assert panel.z.shape == (132, 2)
    np.testing.assert_array_equal(panel.n, monthly)
    assert tuple(panel.n.sum(axis=0)) == (b, c)


# ---------------------------------------------------------------------------
# reading files
# ---------------------------------------------------------------------------


def test_default_and_mapped_columns(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["date", "building", "contents", "profit"],
                  [["1980-01-05", "2.0", "0", "0"], ["1980-02-05", "", "3.5", ""]])
    recs = read_loss_file(p)
    assert recs == [RawLossRecord(D(1980, 1, 5), 2.0, 0.0, 0.0), RawLossRecord(D(1980, 2, 5), 0.0, 3.5, 0.0)]
    p = write_csv(tmp_path / "b.csv", ["when", "bld", "cnt"], [["05/01/1980", "2.0", "1.5"]])
    recs = read_loss_file(p, columns={"date": "when", "building": "bld", "contents": "cnt"},
                          date_format="%d/%m/%Y")
    assert recs == [RawLossRecord(D(1980, 1, 5), 2.0, 1.5, 0.0)]
    p = write_csv(tmp_path / "c.csv", ["date", "building"], [["1980-01-05", "2.0"]])
    with pytest.raises(InputError):
        read_loss_file(p)


def test_danish_headers_are_detected():
    recs = read_loss_file(FIXTURE)
    assert len(recs) == 1087
    assert recs[0].date == D(1980, 1, 2)


def test_bad_rows_logged_and_tolerated(tmp_path, caplog):
    good = [[f"1980-01-{1 + i % 28:02d}", "2.0", "0.5", "0"] for i in range(200)]
    rows = good[:50] + [["not-a-date", "1", "1", "0"]] + good[50:]
    p = write_csv(tmp_path / "a.csv", ["date", "building", "contents", "profit"], rows)
    with caplog.at_level(logging.ERROR, logger="levycop.ingest"):
        recs = read_loss_file(p)
    assert len(recs) == 200
    assert "line 52" in caplog.text


def test_too_many_bad_rows_abort(tmp_path):
    rows = [["1980-01-01", "2.0", "0.5", "0"]] * 50 + [["1980-01-01", "abc", "0.5", "0"]]
    p = write_csv(tmp_path / "a.csv", ["date", "building", "contents", "profit"], rows)
    with pytest.raises(InputError, match="unparseable"):
        read_loss_file(p)
    rows = [["1980-01-01", "-2.0", "0.5", "0"]] + [["1980-01-01", "2.0", "0.5", "0"]] * 50
    p = write_csv(tmp_path / "b.csv", ["date", "building", "contents", "profit"], rows)
    with pytest.raises(InputError):
        read_loss_file(p)
