"""On-disk formats for cached series and versioned JSON artifacts.

Exposure cache (one file per article, ``exposure-YYYYMMDD.csv``)::

    #pvdecay-exposure,1
    title,<title>
    promoted_at,2008-01-01T00:00:00Z
    complete,1
    hour,views,present
    1,2087,1
    ...
    96,131,1

A missing hour has an empty ``views`` cell and ``present`` 0.  Hourly
series files (``#pvdecay-series,1``) carry ``title``, ``start`` and one
``hour,views`` row per slot with the same missing-slot convention.

JSON artifacts carry ``"schema": "pvdecay/<kind>"`` and ``"version"``;
readers refuse anything else.  Floats are written with ``repr`` so that
reruns are byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .ingest import EXPOSURE_HOURS, ArticleExposure, HourlySeries

EXPOSURE_MAGIC = "#pvdecay-exposure"
SERIES_MAGIC = "#pvdecay-series"
CACHE_VERSION = 1
JSON_VERSION = 1
TIME_FORMAT = "%Y-%m-%dT%H:%M:%SZ"


def format_time(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime(TIME_FORMAT)


def parse_time(text: str) -> datetime:
    return datetime.strptime(text, TIME_FORMAT).replace(tzinfo=timezone.utc)


def exposure_filename(exposure: ArticleExposure) -> str:
    return exposure.promoted_at.strftime("exposure-%Y%m%d.csv")


def _check_magic(row, magic, path):
    if not row or row[0] != magic:
        raise SchemaError(f"{path}: missing {magic} header")
    if len(row) < 2 or row[1] != str(CACHE_VERSION):
        raise SchemaError(f"{path}: unsupported cache version {row[1:]}, expected {CACHE_VERSION}")


def _write_rows(path, rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def write_exposure(exposure: ArticleExposure, path) -> None:
    rows = [
        [EXPOSURE_MAGIC, CACHE_VERSION],
        ["title", exposure.title],
        ["promoted_at", format_time(exposure.promoted_at)],
        ["complete", int(exposure.complete)],
        ["hour", "views", "present"],
    ]
    for i, (v, p) in enumerate(zip(exposure.v, exposure.present), start=1):
        rows.append([i, int(v) if p else "", int(p)])
    _write_rows(path, rows)


def read_exposure(path) -> ArticleExposure:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    _check_magic(rows[0] if rows else None, EXPOSURE_MAGIC, path)
    try:
        header = dict((r[0], r[1]) for r in rows[1:4])
        body = rows[5:]
        if len(body) != EXPOSURE_HOURS:
            raise ValueError(f"expected {EXPOSURE_HOURS} hour rows, got {len(body)}")
        present = np.array([r[2] == "1" for r in body])
        v = np.array([int(r[1]) if r[2] == "1" else 0 for r in body], dtype=np.int64)
        exposure = ArticleExposure(header["title"], parse_time(header["promoted_at"]), v, present)
    except (KeyError, IndexError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed exposure file: {exc}") from None
    if int(header["complete"]) != exposure.complete:
        raise SchemaError(f"{path}: completeness flag disagrees with presence bitmap")
    return exposure


def write_exposures(exposures, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for e in exposures:
        path = directory / exposure_filename(e)
        write_exposure(e, path)
        paths.append(path)
    return paths


def read_exposures(directory) -> list[ArticleExposure]:
    """All cached exposures in ``directory``, ordered by promotion date."""
    paths = sorted(Path(directory).glob("exposure-*.csv"))
    exposures = [read_exposure(p) for p in paths]
    return sorted(exposures, key=lambda e: e.promoted_at)


def write_series(series: HourlySeries, path) -> None:
    rows = [
        [SERIES_MAGIC, CACHE_VERSION],
        ["title", series.title],
        ["start", format_time(series.start)],
        ["hour", "views"],
    ]
    for i, (v, p) in enumerate(zip(series.counts, series.present)):
        rows.append([i, int(v) if p else ""])
    _write_rows(path, rows)


def read_series(path) -> HourlySeries:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    _check_magic(rows[0] if rows else None, SERIES_MAGIC, path)
    try:
        title = rows[1][1]
        start = parse_time(rows[2][1])
        values = [int(r[1]) if r[1] != "" else None for r in rows[4:]]
    except (IndexError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed series file: {exc}") from None
    return HourlySeries.from_optional(title, start, values)


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return [_plain(x) for x in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def dump_json(kind: str, payload: dict, path) -> None:
    doc = {"schema": f"pvdecay/{kind}", "version": JSON_VERSION}
    doc.update(_plain(payload))
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_json(kind: str, path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("schema") != f"pvdecay/{kind}":
        raise SchemaError(f"{path}: expected schema pvdecay/{kind}, found {doc.get('schema') if isinstance(doc, dict) else None!r}")
    if doc.get("version") != JSON_VERSION:
        raise SchemaError(f"{path}: schema version {doc.get('version')!r}, expected {JSON_VERSION}")
    return doc
