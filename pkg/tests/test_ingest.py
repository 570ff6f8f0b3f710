import gzip
from datetime import date, datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pvdecay.errors import DataError, ParseError
from pvdecay.ingest import (
    EXPOSURE_HOURS,
    HOUR,
    ArticleExposure,
    HourlySeries,
    PageViewRecord,
    PromotionSchedule,
    ScheduleEntry,
    build_exposure,
    dump_filename,
    filter_complete,
    format_pagecounts_line,
    hour_from_filename,
    ingest_dumps,
    load_hour_file,
    parse_pagecounts_line,
    read_schedule,
    scan_dump_dir,
)

T0 = datetime(2009, 3, 1, tzinfo=timezone.utc)


def write_hour(directory, hour, lines, compress=True):
    path = directory / dump_filename(hour, compress)
    text = "\n".join(lines) + "\n"
    if compress:
        with gzip.open(path, "wt", encoding="utf-8") as fh:
            fh.write(text)
    else:
        path.write_text(text, encoding="utf-8")
    return path


@pytest.mark.parametrize(
    "line, expected",
    [
        ("en Main_Page 242332 4737756", PageViewRecord("en", "Main_Page", 242332, 4737756)),
        ("en X 0 0", PageViewRecord("en", "X", 0, 0)),
        ("en Augustus%27_reign 5 100", PageViewRecord("en", "Augustus'_reign", 5, 100)),
        ("de K%C3%B6ln 3 10\n", PageViewRecord("de", "Köln", 3, 10)),
    ],
)
def test_parse_line(line, expected):
    assert parse_pagecounts_line(line) == expected


@pytest.mark.parametrize(
    "line",
    ["en Main_Page 12", "en A B 1 2", "en A x 2", "en A 1 -2", "en A%zz 1 1", "en A%C3 1 1", "en %41%ZZ 1 1", "en A ３ 1"],
)
def test_parse_line_errors_carry_line_number(line):
    with pytest.raises(ParseError) as info:
        parse_pagecounts_line(line, lineno=17)
    assert info.value.lineno == 17
    assert "line 17" in str(info.value)


titles = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc", "Zs", "Zl", "Zp")), min_size=1, max_size=30
)


@given(titles, st.integers(0, 10**9), st.integers(0, 10**12))
def test_format_parse_round_trip(title, views, nbytes):
    rec = PageViewRecord("en", title, views, nbytes)
    line = format_pagecounts_line(rec)
    assert parse_pagecounts_line(line) == rec
    assert format_pagecounts_line(parse_pagecounts_line(line)) == line


def test_load_hour_file_sums_duplicates(tmp_path):
    path = write_hour(tmp_path, T0, ["en A 3 10", "en B 1 1", "en A 4 20", "de A 100 1"])
    assert load_hour_file(path, {"A"}) == {"A": 7}
    assert load_hour_file(path, {"A"}, project="de") == {"A": 100}
    assert load_hour_file(path, {"C"}) == {}
    assert load_hour_file(path, set()) == {}


def test_load_hour_file_tallies_bad_lines(tmp_path):
    path = write_hour(tmp_path, T0, ["en A 3 10", "garbage", "en A%G1 1 1", "en A 2 2"], compress=False)
    errors = []
    assert load_hour_file(path, {"A"}, errors=errors) == {"A": 5}
    assert [e.lineno for e in errors] == [2, 3]


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=12), st.randoms())
def test_summation_is_order_invariant(counts, rnd):
    lines = [f"en A {c} 1" for c in counts]
    shuffled = lines[:]
    rnd.shuffle(shuffled)
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as d:
        a = write_hour(Path(d), T0, lines, compress=False)
        b = write_hour(Path(d), T0 + HOUR, shuffled, compress=False)
        assert load_hour_file(a, {"A"}) == load_hour_file(b, {"A"}) == {"A": sum(counts)}


def test_filename_timestamp(tmp_path):
    assert hour_from_filename("pagecounts-20081104-070000.gz") == datetime(2008, 11, 4, 7, tzinfo=timezone.utc)
    assert hour_from_filename(dump_filename(T0, False)) == T0
    with pytest.raises(DataError):
        hour_from_filename("pageviews-20081104-070000.gz")
    write_hour(tmp_path, T0, ["en A 1 1"])
    write_hour(tmp_path, T0, ["en A 1 1"], compress=False)
    with pytest.raises(DataError, match="two dump files"):
        scan_dump_dir(tmp_path)


def _maps(n=EXPOSURE_HOURS, value=5):
    return [{"A": value} for _ in range(n)]


def test_build_exposure_complete():
    entry = ScheduleEntry(date(2009, 3, 1), "A")
    e = build_exposure(entry, _maps())
    assert e.complete and e.v1 == 5 and e.promoted_at == T0


def test_build_exposure_missing_hour_file():
    maps = _maps()
    maps[39] = None
    e = build_exposure(ScheduleEntry(date(2009, 3, 1), "A"), maps)
    assert not e.complete
    assert np.flatnonzero(~e.present).tolist() == [39]


def test_build_exposure_title_absent_is_zero():
    maps = _maps()
    maps[10] = {"B": 3}
    e = build_exposure(ScheduleEntry(date(2009, 3, 1), "A"), maps)
    assert e.complete and e.v[10] == 0


def test_build_exposure_needs_96_maps():
    with pytest.raises(DataError):
        build_exposure(ScheduleEntry(date(2009, 3, 1), "A"), _maps(95))


def test_exposure_must_start_at_midnight():
    with pytest.raises(DataError):
        ArticleExposure("A", T0 + HOUR, np.ones(EXPOSURE_HOURS))


def test_filter_complete_drops_excluded_and_incomplete():
    start = date(2008, 1, 1)
    exposures = [
        ArticleExposure(f"T{i}", ScheduleEntry(start + timedelta(days=i), "x").promoted_at, np.ones(EXPOSURE_HOURS))
        for i in range(686)
    ]
    assert len(filter_complete(exposures, {"T10", "T11"})) == 684
    assert filter_complete([]) == []
    broken = ArticleExposure("B", T0, np.ones(EXPOSURE_HOURS), np.arange(EXPOSURE_HOURS) != 3)
    assert filter_complete([broken]) == []


def test_schedule_csv(tmp_path):
    path = tmp_path / "schedule.csv"
    path.write_text(
        "date,title,excluded\n"
        "2008-11-03,Some_article,\n"
        "2008-11-04,Barack_Obama,1\n"
        "2008-11-04,John_McCain,1\n"
        "2008-11-05,\"Comma, title\"\n"
    )
    schedule = read_schedule(path)
    assert [e.title for e in schedule] == ["Some_article", "Barack_Obama", "John_McCain", "Comma, title"]
    assert schedule.exclusions == {"Barack_Obama", "John_McCain"}
    assert schedule.entries[0].promoted_at == datetime(2008, 11, 3, tzinfo=timezone.utc)
    assert len(schedule.between(date(2008, 11, 4), None)) == 3


def test_schedule_rejects_two_promotions_per_day():
    with pytest.raises(DataError):
        PromotionSchedule((ScheduleEntry(date(2008, 1, 1), "A"), ScheduleEntry(date(2008, 1, 1), "B")))


def test_consecutive_windows_overlap_by_72_hours():
    a, b = ScheduleEntry(date(2008, 1, 1), "A"), ScheduleEntry(date(2008, 1, 2), "B")
    end_a = a.promoted_at + EXPOSURE_HOURS * HOUR
    assert (end_a - b.promoted_at) == 72 * HOUR and a.title != b.title


def test_hourly_series_optional_round_trip():
    s = HourlySeries.from_optional("Main_Page", T0, [3, None, 5])
    assert s.to_optional() == [3, None, 5]
    assert s.hours_of_day.tolist() == [0, 1, 2]


def test_ingest_dumps_end_to_end(tmp_path):
    entries = (ScheduleEntry(date(2009, 3, 1), "A"), ScheduleEntry(date(2009, 3, 2), "B"))
    schedule = PromotionSchedule(entries)
    for i in range(24 + EXPOSURE_HOURS):
        if i == 50:
            continue  # missing hour
        lines = ["en Main_Page 1000 1", f"en A {i + 1} 1", "en A 1 1"]
        if i >= 24:
            lines.append(f"en B {2 * i} 1")
        write_hour(tmp_path, T0 + i * HOUR, lines)
    res = ingest_dumps(tmp_path, schedule, threads=3)
    a, b = res.exposures
    assert a.v[0] == 2 and a.v[95] == 97
    assert not a.present[50] and not b.present[26]
    assert b.v[0] == 48
    assert res.missing_hours == [T0 + 50 * HOUR]
    assert res.front_page.to_optional()[49:52] == [1000, None, 1000]
