"""Command line entry point: ``pvdecay <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Failures print a one-line JSON summary to stderr.  Primary outputs are
deterministic; run timestamps go to ``*.meta.json`` sidecars.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import platform
import sys
from datetime import date, datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (
    dump_json,
    load_json,
    read_exposures,
    read_series,
    write_exposures,
    write_series,
)
from .circadian import (
    FIT_HOURS,
    CircadianProfile,
    RedistributionMap,
    compute_profile,
    fit_piecewise_trend,
    optimize_c,
    redistribute,
)
from .errors import DataError, NumericalError, PVDecayError
from .ingest import EXPOSURE_HOURS, filter_complete, ingest_dumps, read_schedule, write_schedule
from .model import GammaLaw, ModelParams, fit_corpus, model_curve
from .predict import evaluate, median_abs_normalized, predict_from_v1, predict_with_v25
from .simulate import SimConfig, simulate_corpus, write_dumps

log = logging.getLogger("pvdecay")

CACHE_ENV = "PVDECAY_CACHE"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)
HOURS_START = 25


class UsageError(PVDecayError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _fail(EXIT_USAGE, "usage", message)


def _fail(code, kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message), "exit": code}) + "\n")
    sys.exit(code)


def _fmt(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "" if np.isnan(x) else repr(x)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _write_meta(target: Path, args):
    meta = {
        "created": datetime.now(timezone.utc).isoformat(),
        "argv": sys.argv[1:],
        "command": args.command,
        "pvdecay": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }
    target = Path(target)
    path = target / "_meta.json" if target.is_dir() else target.with_name(target.name + ".meta.json")
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _existing(path, what="file"):
    p = Path(path)
    if what == "dir" and not p.is_dir():
        raise UsageError(f"not a directory: {path}")
    if what == "file" and not p.is_file():
        raise UsageError(f"no such file: {path}")
    return p


def _cache_dir(value, sub="exposures"):
    if value:
        return Path(value)
    root = os.environ.get(CACHE_ENV)
    if not root:
        raise UsageError(f"no directory given and ${CACHE_ENV} is unset")
    return Path(root) / sub


def _load_map(path) -> RedistributionMap:
    return RedistributionMap.from_dict(load_json("map", _existing(path)))


def _load_params(path):
    doc = load_json("params", _existing(path))
    law = doc["gamma_law"]
    return doc, ModelParams(doc["beta"], doc["gamma"]), GammaLaw(law["m"], law["C"], law["sigma"])


def _complete(directory):
    exposures = read_exposures(_existing(directory, "dir"))
    complete = filter_complete(exposures)
    if len(complete) < len(exposures):
        log.info("dropped %d incomplete exposures", len(exposures) - len(complete))
    return complete


def _mean_series(exposures):
    if not exposures:
        raise DataError("no complete exposures")
    return np.mean([e.v for e in exposures], axis=0)


def cmd_ingest(args):
    schedule = read_schedule(_existing(args.schedule))
    schedule = schedule.between(args.date_from, args.date_to)
    out = _cache_dir(args.out)
    result = ingest_dumps(_existing(args.dumps, "dir"), schedule, args.front_page, args.project, args.threads)
    kept = [e for e in result.exposures if e.title not in schedule.exclusions]
    out.mkdir(parents=True, exist_ok=True)
    write_exposures(kept, out)
    if result.front_page is not None:
        write_series(result.front_page, out / "front_page.csv")
    dump_json(
        "ingest",
        {
            "exposures": len(kept),
            "complete": sum(e.complete for e in kept),
            "excluded": sorted(schedule.exclusions),
            "missing_hours": [h.strftime("%Y-%m-%dT%H") for h in result.missing_hours],
        },
        out / "ingest.json",
    )
    _write_meta(out, args)


def cmd_profile(args):
    m = compute_profile(read_series(_existing(args.series)))
    dump_json("profile", CircadianProfile(m).to_dict(), args.out)
    _write_meta(Path(args.out), args)


def _read_mean_series(path):
    with open(_existing(path), newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        float(rows[0][-1])
    except (IndexError, ValueError):
        rows = rows[1:]  # header
    try:
        values = np.array([float(r[-1]) for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if values.shape != (EXPOSURE_HOURS,):
        raise DataError(f"{path}: expected {EXPOSURE_HOURS} values, got {values.size}")
    return values


def cmd_decycle(args):
    profile = CircadianProfile.from_dict(load_json("profile", _existing(args.profile)))
    if args.mean_series:
        mean = _read_mean_series(args.mean_series)
    else:
        mean = _mean_series(_complete(_cache_dir(args.exposures)))
    res = optimize_c(profile.m, mean, refit=not args.fixed_trend)
    doc = res.profile.to_dict()
    doc.update(res.rmap.to_dict())
    doc["objective"] = res.objective
    dump_json("map", doc, args.out)
    _write_meta(Path(args.out), args)


def cmd_fit(args):
    rmap = _load_map(args.map)
    exposures = _complete(_cache_dir(args.exposures))
    train = exposures[: args.first_n] if args.first_n else exposures
    fit = fit_corpus(train, rmap, trim=not args.no_outlier_trim)
    doc = fit.to_dict()
    doc["first_n"] = args.first_n
    doc["train_last_promoted"] = train[-1].promoted_at.strftime("%Y-%m-%d")
    dump_json("params", doc, args.out)
    _write_meta(Path(args.out), args)


def cmd_predict(args):
    _, params, law = _load_params(args.params)
    rmap = _load_map(args.map)
    pred = predict_from_v1(args.v1, params, law, rmap)
    header = ["hour", "v_hat", "band_low", "band_high"]
    cols = [pred.v_hat, pred.band_low, pred.band_high]
    if args.v25 is not None:
        header.append("v_hat_v25")
        cols.append(predict_with_v25(args.v1, args.v25, params, rmap).v_hat)
    rows = [[t + 1] + [_fmt(c[t]) for c in cols] for t in range(EXPOSURE_HOURS)]
    _write_csv(args.out, header, rows)
    _write_meta(Path(args.out), args)


def _select(exposures, doc, subset):
    n = doc.get("first_n") or 0
    if subset == "holdout":
        return exposures[n:] if n else exposures
    if subset == "train":
        return exposures[:n] if n else exposures
    return exposures


def cmd_evaluate(args):
    doc, params, law = _load_params(args.params)
    rmap = _load_map(args.map)
    exposures = _select(_complete(_cache_dir(args.exposures)), doc, args.subset)
    ev = evaluate(exposures, params, law, rmap)
    if not ev.titles:
        raise DataError("no exposures to evaluate")
    header = ["hour", "n"]
    for method in ("v1", "v1v25"):
        for kind in ("norm", "abs"):
            header += [f"{method}_{kind}_q{int(q * 100):02d}" for q in QUANTILES]
    header.append("coverage")
    rows = []
    for t in range(EXPOSURE_HOURS):
        row = [t + 1, len(ev.titles)]
        for reports in (ev.v1_only, ev.v1_v25):
            norm = np.array([r.normalized[t] for r in reports])
            norm = norm[~np.isnan(norm)]
            absolute = np.array([r.absolute[t] for r in reports])
            for arr in (norm, absolute):
                row += [_fmt(np.quantile(arr, q)) if arr.size else "" for q in QUANTILES]
        row.append(_fmt(np.mean([r.in_band[t] for r in ev.v1_only])))
        rows.append(row)
    _write_csv(args.out, header, rows)
    summary = {
        "subset": args.subset,
        "n_articles": len(ev.titles),
        "median_abs_normalized_error_25_95": {
            "v1": median_abs_normalized(ev.v1_only),
            "v1+v25": median_abs_normalized(ev.v1_v25),
        },
        "coverage_hour25": float(np.mean([r.in_band[24] for r in ev.v1_only])),
        "coverage_25_95": float(np.mean([r.coverage for r in ev.v1_only])),
    }
    dump_json("evaluation", summary, Path(args.out).with_suffix(".summary.json"))
    _write_meta(Path(args.out), args)


def cmd_simulate(args):
    doc = json.loads(_existing(args.config).read_text(encoding="utf-8")) if args.config else {}
    if not isinstance(doc, dict):
        raise DataError("simulation config must be a JSON object")
    config = SimConfig.from_dict(doc)
    if args.seed is not None:
        config = SimConfig.from_dict({**config.to_dict(), "seed": args.seed})
    if args.n is not None:
        config = SimConfig.from_dict({**config.to_dict(), "n_articles": args.n})
    corpus = simulate_corpus(config, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_exposures(corpus.exposures, out / "exposures")
    if corpus.front_page is not None:
        write_series(corpus.front_page, out / "exposures" / "front_page.csv")
    write_schedule(corpus.schedule, out / "schedule.csv")
    dump_json("truth", corpus.truth(), out / "truth.json")
    if args.emit_dumps:
        write_dumps(corpus, out / "dumps", duplicate_every=args.duplicate_every)
    _write_meta(out, args)


def _svg_lines(path, title, x, series):
    """Minimal line chart; ``series`` maps label to y values (log scale)."""
    w, h, pad = 640, 400, 40
    ys = [np.log10(np.clip(np.asarray(v, float), 1e-12, None)) for v in series.values()]
    lo = min(float(np.nanmin(y)) for y in ys)
    hi = max(float(np.nanmax(y)) for y in ys)
    span = hi - lo or 1.0
    x = np.asarray(x, float)
    sx = lambda v: pad + (v - x.min()) / (np.ptp(x) or 1.0) * (w - 2 * pad)
    sy = lambda v: h - pad - (v - lo) / span * (h - 2 * pad)
    colors = ["#000000", "#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
        f'<text x="{pad}" y="20" font-size="14">{title} (log10 scale)</text>',
    ]
    for i, (label, y) in enumerate(zip(series, ys)):
        pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(x, y) if np.isfinite(b))
        color = colors[i % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" points="{pts}"/>')
        parts.append(f'<text x="{w - 160}" y="{40 + 16 * i}" fill="{color}" font-size="12">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def cmd_report(args):
    doc, params, law = _load_params(args.params)
    rmap = _load_map(args.map)
    exposures = _complete(_cache_dir(args.exposures))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    mean = _mean_series(exposures)
    mean_star = redistribute(mean, rmap)
    trend = fit_piecewise_trend(np.log(mean))
    curve = model_curve(params, rmap, v1=mean[0])
    hours = np.arange(1, EXPOSURE_HOURS + 1)
    _write_csv(
        out / "mean_series.csv",
        ["hour", "mean_views", "mean_views_redistributed", "trend_log", "model_v_hat"],
        [[t, _fmt(a), _fmt(b), _fmt(g), _fmt(v)] for t, a, b, g, v in zip(hours, mean, mean_star, trend(hours), curve.v_hat)],
    )

    fit = fit_corpus(exposures[: doc.get("first_n") or None], rmap, trim=True)
    outliers = set(fit.outliers)
    _write_csv(
        out / "gamma_v1.csv",
        ["title", "log_v1", "log_gamma", "law_center", "law_low", "law_high", "outlier"],
        [
            [t, _fmt(np.log(v)), _fmt(np.log(g)), _fmt(law.h(v)), _fmt(law.h(v) - law.sigma), _fmt(law.h(v) + law.sigma), int(t in outliers)]
            for t, v, g in zip(fit.titles, fit.v1, fit.gammas)
        ],
    )
    v1 = np.array([e.v1 for e in exposures if e.v1 > 0], dtype=float)
    counts, edges = np.histogram(np.log(v1), bins=20)
    _write_csv(out / "v1_hist.csv", ["log_v1_low", "log_v1_high", "count"], [[_fmt(a), _fmt(b), int(c)] for a, b, c in zip(edges, edges[1:], counts)])

    held = _select(exposures, doc, "holdout")
    ev = evaluate(held, params, law, rmap)
    if ev.titles:
        cov = np.mean([r.in_band for r in ev.v1_only], axis=0)
        _write_csv(out / "coverage.csv", ["hour", "coverage"], [[t, _fmt(cov[t - 1])] for t in range(HOURS_START, FIT_HOURS + 1)])
    if args.svg:
        _svg_lines(out / "mean_series.svg", "mean views per hour", hours,
                   {"real time": mean, "redistributed": mean_star, "model": curve.v_hat})
    _write_meta(out, args)


def _date(text):
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text}") from None


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        value = 0
    if value < 1:
        raise argparse.ArgumentTypeError(f"need a positive integer: {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pvdecay", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pvdecay {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=1, help="worker threads (results do not depend on it)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="parse hourly dumps into exposure files")
    p.add_argument("--dumps", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--out", help=f"output directory (default ${CACHE_ENV}/exposures)")
    p.add_argument("--from", dest="date_from", type=_date)
    p.add_argument("--to", dest="date_to", type=_date)
    p.add_argument("--project", default="en")
    p.add_argument("--front-page", default="Main_Page")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("profile", parents=[common], help="hour-of-day profile of the front page")
    p.add_argument("--series", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("decycle", parents=[common], help="optimise the decycling fraction and build the time map")
    p.add_argument("--profile", required=True)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--mean-series")
    src.add_argument("--exposures")
    p.add_argument("--fixed-trend", action="store_true", help="hold the trend fitted in real time fixed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decycle)

    p = sub.add_parser("fit", parents=[common], help="estimate beta, gamma and the gamma law")
    p.add_argument("--exposures")
    p.add_argument("--map", required=True)
    p.add_argument("--first-n", type=_positive_int)
    p.add_argument("--no-outlier-trim", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", parents=[common], help="hourly forecast for one article")
    p.add_argument("--params", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--v1", type=float, required=True)
    p.add_argument("--v25", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="per-hour error quantiles and band coverage")
    p.add_argument("--params", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--exposures")
    p.add_argument("--subset", choices=("holdout", "train", "all"), default="holdout")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", parents=[common], help="synthetic corpus from the model")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--emit-dumps", action="store_true")
    p.add_argument("--duplicate-every", type=int, default=0, help="split every k-th dump line in two")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", parents=[common], help="figure data as CSV (optionally SVG)")
    p.add_argument("--params", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--exposures")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        _fail(EXIT_USAGE, "usage", exc)
    except NumericalError as exc:
        _fail(EXIT_NUMERIC, "numerical", exc)
    except (DataError, KeyError, OSError) as exc:
        _fail(EXIT_DATA, "data", exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
