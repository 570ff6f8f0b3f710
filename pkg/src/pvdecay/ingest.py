"""Parsing of hourly pagecount dumps into per-article exposure windows.

A dump directory holds one file per UTC hour named
``pagecounts-YYYYMMDD-HHMMSS`` (optionally ``.gz``).  Every line is
``project title views bytes``.  Pages with no views in an hour are not
listed, so a title absent from a readable hour file counts as zero views;
only a missing or unreadable hour file yields a missing slot.

Redirects are not resolved: a title is matched exactly after
percent-decoding.
"""

from __future__ import annotations

import csv
import gzip
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence
from urllib.parse import quote

import numpy as np

from .errors import DataError, ParseError

log = logging.getLogger(__name__)

EXPOSURE_HOURS = 96
HOUR = timedelta(hours=1)

DUMP_NAME = re.compile(r"^pagecounts-(\d{8})-(\d{6})(\.gz)?$")
_BAD_ESCAPE = re.compile(r"%(?![0-9A-Fa-f]{2})")
_ESCAPE_RUN = re.compile(r"(?:%[0-9A-Fa-f]{2})+")
_COUNT = re.compile(r"[0-9]+")
# characters left literal when a title is re-encoded for a dump line
TITLE_SAFE = "_-.~:/(),!"


@dataclass(frozen=True)
class PageViewRecord:
    project: str
    title: str
    views: int
    bytes: int


def decode_title(raw: str) -> str:
    """Strict percent-decoding: malformed escapes or non UTF-8 bytes raise."""
    if _BAD_ESCAPE.search(raw):
        raise ValueError(f"invalid percent-escape in {raw!r}")

    def _decode(match):
        return bytes.fromhex(match.group(0).replace("%", "")).decode("utf-8")

    return _ESCAPE_RUN.sub(_decode, raw)


def encode_title(title: str) -> str:
    return quote(title, safe=TITLE_SAFE)


def parse_pagecounts_line(line: str, lineno: Optional[int] = None) -> PageViewRecord:
    fields = line.split()
    if len(fields) != 4:
        raise ParseError(f"expected 4 fields, got {len(fields)}", lineno)
    project, raw_title, views, nbytes = fields
    try:
        title = decode_title(raw_title)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ParseError(str(exc), lineno) from None
    if not title:
        raise ParseError("empty title", lineno)
    if not (_COUNT.fullmatch(views) and _COUNT.fullmatch(nbytes)):
        raise ParseError(f"non-numeric count field in {line.strip()!r}", lineno)
    return PageViewRecord(project, title, int(views), int(nbytes))


def format_pagecounts_line(record: PageViewRecord) -> str:
    return f"{record.project} {encode_title(record.title)} {record.views} {record.bytes}"


def hour_from_filename(path) -> datetime:
    """UTC timestamp encoded in a dump file name."""
    match = DUMP_NAME.match(Path(path).name)
    if match is None:
        raise DataError(f"not a pagecounts file name: {Path(path).name}")
    return datetime.strptime(match.group(1) + match.group(2), "%Y%m%d%H%M%S").replace(
        tzinfo=timezone.utc
    )


def dump_filename(hour: datetime, compress: bool = True) -> str:
    name = hour.strftime("pagecounts-%Y%m%d-%H0000")
    return name + ".gz" if compress else name


def _open_text(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8", errors="strict")
    return open(path, "r", encoding="utf-8", errors="strict")


def load_hour_file(
    path,
    titles: Iterable[str],
    project: Optional[str] = "en",
    errors: Optional[list] = None,
) -> dict[str, int]:
    """Summed views per requested title for one hour file.

    Titles listed more than once in the file contribute the sum of all
    their entries.  Malformed lines are skipped; their :class:`ParseError`
    is appended to ``errors`` when given.  A file that cannot be read to
    the end raises ``OSError``/``EOFError``/``UnicodeDecodeError``.
    """
    wanted = set(titles)
    views: dict[str, int] = {}
    if not wanted:
        return views
    n_bad = 0
    with _open_text(Path(path)) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = parse_pagecounts_line(line, lineno)
            except ParseError as exc:
                n_bad += 1
                if errors is not None:
                    errors.append(exc)
                continue
            if project is not None and rec.project != project:
                continue
            if rec.title in wanted:
                views[rec.title] = views.get(rec.title, 0) + rec.views
    if n_bad:
        log.warning("%s: %d malformed lines skipped", path, n_bad)
    return views


def scan_dump_dir(directory) -> dict[datetime, Path]:
    """Map of hour timestamp to file for every dump file in ``directory``."""
    files = {}
    for path in sorted(Path(directory).iterdir()):
        if DUMP_NAME.match(path.name) is None:
            continue
        hour = hour_from_filename(path)
        if hour in files:
            raise DataError(f"two dump files for {hour:%Y-%m-%d %H}h: {files[hour].name}, {path.name}")
        files[hour] = path
    return files


@dataclass(frozen=True)
class HourlySeries:
    """Views of one title on a contiguous run of UTC hours.

    ``present[i]`` is false where the hour is missing; ``counts[i]`` is
    then 0 and carries no information.
    """

    title: str
    start: datetime
    counts: np.ndarray
    present: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        present = np.asarray(self.present, dtype=bool)
        if counts.shape != present.shape or counts.ndim != 1:
            raise DataError("counts and presence mask must be 1-D and equally long")
        if np.any(counts[present] < 0):
            raise DataError("negative view count")
        object.__setattr__(self, "counts", np.where(present, counts, 0))
        object.__setattr__(self, "present", present)

    def __len__(self):
        return len(self.counts)

    @property
    def hours_of_day(self) -> np.ndarray:
        return (self.start.hour + np.arange(len(self.counts))) % 24

    @classmethod
    def from_optional(cls, title, start, values: Sequence[Optional[int]]):
        present = [v is not None for v in values]
        counts = [0 if v is None else v for v in values]
        return cls(title, start, np.array(counts, dtype=np.int64), np.array(present, dtype=bool))

    def to_optional(self) -> list[Optional[int]]:
        return [int(c) if p else None for c, p in zip(self.counts, self.present)]


@dataclass(frozen=True)
class ScheduleEntry:
    day: date
    title: str
    excluded: bool = False

    @property
    def promoted_at(self) -> datetime:
        return datetime(self.day.year, self.day.month, self.day.day, tzinfo=timezone.utc)


@dataclass(frozen=True)
class PromotionSchedule:
    """Promoted titles in date order.

    Excluded entries are kept so their exposures can be built and then
    dropped by :func:`filter_complete`; apart from them every calendar day
    holds one promotion.
    """

    entries: tuple[ScheduleEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        kept = [e for e in self.entries if not e.excluded]
        for a, b in zip(kept, kept[1:]):
            if b.day <= a.day:
                raise DataError(f"schedule dates not strictly increasing at {b.day} ({b.title})")
        days = [e.day for e in self.entries]
        if days != sorted(days):
            raise DataError("schedule is not in date order")

    @property
    def exclusions(self) -> frozenset[str]:
        return frozenset(e.title for e in self.entries if e.excluded)

    def between(self, start: Optional[date] = None, end: Optional[date] = None) -> "PromotionSchedule":
        return PromotionSchedule(
            tuple(
                e
                for e in self.entries
                if (start is None or e.day >= start) and (end is None or e.day <= end)
            )
        )

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


_TRUE = {"1", "true", "yes", "y", "excluded", "x"}


def read_schedule(path) -> PromotionSchedule:
    """Read a ``date,title[,excluded]`` CSV; a header row is optional."""
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].startswith("#"):
                continue
            if lineno == 1 and row[0].strip().lower() == "date":
                continue
            if len(row) not in (2, 3):
                raise DataError(f"{path}:{lineno}: expected date,title[,excluded]")
            try:
                day = date.fromisoformat(row[0].strip())
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad date {row[0]!r}") from None
            title = row[1].strip()
            if not title:
                raise DataError(f"{path}:{lineno}: empty title")
            excluded = len(row) == 3 and row[2].strip().lower() in _TRUE
            entries.append(ScheduleEntry(day, title, excluded))
    return PromotionSchedule(tuple(entries))


def write_schedule(schedule: PromotionSchedule, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "title", "excluded"])
        for e in schedule:
            writer.writerow([e.day.isoformat(), e.title, "1" if e.excluded else "0"])


@dataclass(frozen=True)
class ArticleExposure:
    """The 96 real hours a promoted article spends on the front page.

    ``v[0]`` is the first exposure hour (v_1).  ``v_star`` holds the
    redistributed-time series once it has been computed.
    """

    title: str
    promoted_at: datetime
    v: np.ndarray
    present: np.ndarray = None
    v_star: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.int64)
        if v.shape != (EXPOSURE_HOURS,):
            raise DataError(f"exposure needs {EXPOSURE_HOURS} hourly slots, got {v.shape}")
        present = (
            np.ones(EXPOSURE_HOURS, dtype=bool)
            if self.present is None
            else np.asarray(self.present, dtype=bool)
        )
        if np.any(v[present] < 0):
            raise DataError(f"{self.title}: negative view count")
        if (self.promoted_at.hour, self.promoted_at.minute, self.promoted_at.second) != (0, 0, 0):
            raise DataError(f"{self.title}: promotion must start at 00h UTC")
        object.__setattr__(self, "v", np.where(present, v, 0))
        object.__setattr__(self, "present", present)

    def __eq__(self, other):
        if not isinstance(other, ArticleExposure):
            return NotImplemented
        return (
            self.title == other.title
            and self.promoted_at == other.promoted_at
            and np.array_equal(self.v, other.v)
            and np.array_equal(self.present, other.present)
        )

    __hash__ = None

    @property
    def complete(self) -> bool:
        return bool(self.present.all())

    @property
    def v1(self) -> int:
        return int(self.v[0])

    @property
    def v25(self) -> int:
        return int(self.v[24])

    def with_v_star(self, v_star) -> "ArticleExposure":
        return ArticleExposure(self.title, self.promoted_at, self.v, self.present, np.asarray(v_star, dtype=float))


def build_exposure(
    entry: ScheduleEntry, hour_maps: Sequence[Optional[Mapping[str, int]]]
) -> ArticleExposure:
    """Fill the 96 slots of one exposure from per-hour view maps.

    ``hour_maps[i]`` covers real hour ``i + 1`` of the exposure; ``None``
    marks a missing or unreadable hour file.  A readable hour lacking the
    title counts zero views.
    """
    if len(hour_maps) != EXPOSURE_HOURS:
        raise DataError(f"need {EXPOSURE_HOURS} hour maps, got {len(hour_maps)}")
    v = np.zeros(EXPOSURE_HOURS, dtype=np.int64)
    present = np.zeros(EXPOSURE_HOURS, dtype=bool)
    for i, views in enumerate(hour_maps):
        if views is None:
            continue
        present[i] = True
        v[i] = views.get(entry.title, 0)
    return ArticleExposure(entry.title, entry.promoted_at, v, present)


def filter_complete(exposures: Iterable[ArticleExposure], exclusions: Iterable[str] = ()) -> list[ArticleExposure]:
    excluded = set(exclusions)
    return [e for e in exposures if e.complete and e.title not in excluded]


def _read_hour(path: Optional[Path], titles, project):
    if path is None:
        return None
    try:
        return load_hour_file(path, titles, project)
    except (OSError, EOFError, UnicodeDecodeError) as exc:
        log.warning("%s unreadable, hour marked missing: %s", path, exc)
        return None


def load_hours(
    files: Mapping[datetime, Path],
    hours: Sequence[datetime],
    titles: Iterable[str],
    project: Optional[str] = "en",
    threads: int = 1,
) -> dict[datetime, Optional[dict[str, int]]]:
    """Read the requested hours, in parallel when ``threads > 1``.

    The result is keyed by hour, so completion order has no effect.
    """
    titles = frozenset(titles)
    paths = [files.get(h) for h in hours]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            maps = list(pool.map(lambda p: _read_hour(p, titles, project), paths))
    else:
        maps = [_read_hour(p, titles, project) for p in paths]
    return dict(zip(hours, maps))


@dataclass
class IngestResult:
    exposures: list[ArticleExposure]
    front_page: Optional[HourlySeries]
    missing_hours: list[datetime]


def ingest_dumps(
    dump_dir,
    schedule: PromotionSchedule,
    front_page: Optional[str] = "Main_Page",
    project: Optional[str] = "en",
    threads: int = 1,
) -> IngestResult:
    """Build exposures for every schedule entry and the front-page series.

    The front-page series spans from the first promotion to the end of the
    last exposure window.
    """
    if not len(schedule):
        return IngestResult([], None, [])
    files = scan_dump_dir(dump_dir)
    start = schedule.entries[0].promoted_at
    end = schedule.entries[-1].promoted_at + EXPOSURE_HOURS * HOUR
    hours = [start + i * HOUR for i in range(int((end - start) / HOUR))]
    titles = {e.title for e in schedule}
    if front_page:
        titles.add(front_page)
    maps = load_hours(files, hours, titles, project, threads)

    exposures = []
    for entry in schedule:
        window = [maps[entry.promoted_at + i * HOUR] for i in range(EXPOSURE_HOURS)]
        exposures.append(build_exposure(entry, window))

    series = None
    if front_page:
        values = [None if maps[h] is None else maps[h].get(front_page, 0) for h in hours]
        series = HourlySeries.from_optional(front_page, start, values)
    missing = [h for h in hours if maps[h] is None]
    return IngestResult(exposures, series, missing)
