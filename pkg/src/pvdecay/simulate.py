"""Synthetic promoted-article traffic from the first-visit Poisson model.

Every visitor of a promoted article comes once; their first-visit hour
is geometric with ``P(T = t) = beta**(t-1) * (1 - beta)`` and after the
first day a visit happens only with probability ``gamma/beta`` of that.
Superposing the visitors gives independent Poisson counts per
redistributed hour with means ``v*_1 * w*_t``.  Those counts are split
onto real hours multinomially, each redistributed hour in proportion to
its wall-clock overlap with each real hour.

Random streams come from ``numpy.random.SeedSequence(seed)``: child 0
drives v1 and the drop residuals, child ``i + 1`` drives article ``i``,
all with the PCG64 bit generator.  Output therefore does not depend on
thread count or completion order.
"""

from __future__ import annotations

import gzip
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .circadian import HOURS_PER_DAY, CircadianProfile, RedistributionMap, split_fractions
from .errors import DataError
from .ingest import (
    EXPOSURE_HOURS,
    HOUR,
    ArticleExposure,
    HourlySeries,
    PageViewRecord,
    PromotionSchedule,
    ScheduleEntry,
    dump_filename,
    format_pagecounts_line,
)
from .model import REFERENCE, GammaLaw, ModelParams, V1Distribution, curve_w_star

RNG_ALGORITHM = "numpy.random.PCG64 seeded via SeedSequence"
FRONT_PAGE = "Main_Page"
MAIN_PAGE_MEAN = 2.5e5


def default_profile_values(mean: float = MAIN_PAGE_MEAN, amplitude: float = 0.3) -> np.ndarray:
    """Sinusoidal front-page day with its trough at 08h UTC."""
    hours = np.arange(HOURS_PER_DAY)
    return mean * (1.0 + amplitude * np.cos(2 * np.pi * (hours - 20) / HOURS_PER_DAY))


@dataclass(frozen=True)
class SimConfig:
    n_articles: int = 200
    params: ModelParams = field(
        default_factory=lambda: ModelParams(REFERENCE["all"]["beta"], REFERENCE["all"]["gamma"])
    )
    law: GammaLaw = field(
        default_factory=lambda: GammaLaw(REFERENCE["first100"]["m"], REFERENCE["first100"]["C"], 0.2)
    )
    v1_dist: V1Distribution = field(
        default_factory=lambda: V1Distribution(REFERENCE["v1_mu"], REFERENCE["v1_sigma"])
    )
    profile: CircadianProfile = field(
        default_factory=lambda: CircadianProfile(default_profile_values(), REFERENCE["c"])
    )
    seed: int = 20080101
    start: date = date(2008, 1, 1)
    per_user: bool = False

    def __post_init__(self):
        if self.n_articles < 0:
            raise DataError("n_articles must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise DataError("seed must be a 64-bit unsigned integer")

    @property
    def rmap(self) -> RedistributionMap:
        return RedistributionMap.from_profile(self.profile)

    def to_dict(self) -> dict:
        return {
            "n_articles": self.n_articles,
            "beta": self.params.beta,
            "gamma": self.params.gamma,
            "gamma_law": {"m": self.law.m, "C": self.law.C, "sigma": self.law.sigma},
            "v1_distribution": {"mu": self.v1_dist.mu, "sigma": self.v1_dist.sigma_v},
            "profile": {"m": self.profile.m, "c": self.profile.c},
            "seed": self.seed,
            "start": self.start.isoformat(),
            "per_user": self.per_user,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        base = cls()
        kw = {}
        if "n_articles" in doc:
            kw["n_articles"] = int(doc["n_articles"])
        if "beta" in doc or "gamma" in doc:
            kw["params"] = ModelParams(float(doc.get("beta", base.params.beta)), float(doc.get("gamma", base.params.gamma)))
        if "gamma_law" in doc:
            g = doc["gamma_law"]
            kw["law"] = GammaLaw(float(g.get("m", base.law.m)), float(g.get("C", base.law.C)), float(g.get("sigma", base.law.sigma)))
        if "v1_distribution" in doc:
            d = doc["v1_distribution"]
            kw["v1_dist"] = V1Distribution(float(d.get("mu", base.v1_dist.mu)), float(d.get("sigma", base.v1_dist.sigma_v)))
        if "profile" in doc:
            p = doc["profile"]
            m = p.get("m")
            m = default_profile_values(amplitude=float(p.get("amplitude", 0.3))) if m is None else np.asarray(m, float)
            kw["profile"] = CircadianProfile(m, float(p.get("c", base.profile.c)))
        if "seed" in doc:
            kw["seed"] = int(doc["seed"])
        if "start" in doc:
            kw["start"] = date.fromisoformat(doc["start"])
        if "per_user" in doc:
            kw["per_user"] = bool(doc["per_user"])
        return replace(base, **kw)


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(n + 1)
    return [np.random.Generator(np.random.PCG64(s)) for s in children]


def sample_v1(dist: V1Distribution, count: int, rng: np.random.Generator) -> np.ndarray:
    """Log-normal first-hour views, rounded to the nearest positive integer."""
    if count < 1:
        raise DataError("count must be at least 1")
    draws = rng.lognormal(dist.mu, dist.sigma_v, size=count)
    return np.maximum(np.rint(draws), 1).astype(np.int64)


def anchor_scale(v1: float, w_star_full: np.ndarray, rmap: RedistributionMap) -> float:
    """``v*_1`` such that the expected real first-hour count equals ``v1``."""
    first_real = float(split_fractions(rmap)[:, 0] @ w_star_full)
    return v1 / first_real


def _per_user_counts(scale, beta, gamma, rng):
    # visitors whose geometric first-visit hour falls in the exposure window
    n_users = rng.poisson(scale / (1.0 - beta))
    hours = rng.geometric(1.0 - beta, size=n_users)
    hours = hours[hours <= EXPOSURE_HOURS]
    late = hours > HOURS_PER_DAY
    if gamma > beta and late.any():
        raise DataError("per-user mode needs gamma <= beta")
    keep = ~late | (rng.random(hours.size) < gamma / beta)
    return np.bincount(hours[keep] - 1, minlength=EXPOSURE_HOURS)


def simulate_article(
    v1: float,
    gamma_s: float,
    params: ModelParams,
    rmap: RedistributionMap,
    rng: np.random.Generator,
    title: str = "Synthetic",
    promoted_at: Optional[datetime] = None,
    per_user: bool = False,
) -> ArticleExposure:
    """One exposure window drawn from the model.

    ``per_user`` samples individual first visits instead of hourly
    Poisson counts; both have the same distribution.
    """
    if promoted_at is None:
        promoted_at = datetime(2008, 1, 1, tzinfo=timezone.utc)
    curve = curve_w_star(replace(params, gamma=1.0), EXPOSURE_HOURS)
    curve[HOURS_PER_DAY:] *= gamma_s
    scale = anchor_scale(v1, curve, rmap)
    if per_user:
        if params.beta >= 1.0:
            raise DataError("per-user mode needs beta < 1")
        red_counts = _per_user_counts(scale, params.beta, gamma_s, rng)
    else:
        red_counts = rng.poisson(scale * curve)
    fractions = split_fractions(rmap)
    real = np.zeros(EXPOSURE_HOURS, dtype=np.int64)
    for s in range(EXPOSURE_HOURS):
        if red_counts[s] == 0:
            continue
        cols = np.flatnonzero(fractions[s] > 0)
        if cols.size == 1:
            real[cols[0]] += red_counts[s]
        else:
            p = fractions[s, cols]
            real[cols] += rng.multinomial(red_counts[s], p / p.sum())
    return ArticleExposure(title, promoted_at, real)


def expected_counts(v1: float, gamma_s: float, params: ModelParams, rmap: RedistributionMap) -> np.ndarray:
    """Mean real-hour counts of :func:`simulate_article`."""
    curve = curve_w_star(replace(params, gamma=1.0), EXPOSURE_HOURS)
    curve[HOURS_PER_DAY:] *= gamma_s
    scale = anchor_scale(v1, curve, rmap)
    return scale * (split_fractions(rmap).T @ curve)


@dataclass
class SimulatedCorpus:
    config: SimConfig
    exposures: list[ArticleExposure]
    v1: np.ndarray
    gamma: np.ndarray
    schedule: PromotionSchedule
    front_page: Optional[HourlySeries]

    def truth(self) -> dict:
        return {
            "generator": self.config.to_dict(),
            "rng": RNG_ALGORITHM,
            "articles": [
                {"title": e.title, "promoted_at": e.promoted_at.strftime("%Y-%m-%d"), "v1": int(v), "gamma": float(g)}
                for e, v, g in zip(self.exposures, self.v1, self.gamma)
            ],
        }


def article_title(i: int) -> str:
    return f"Synthetic_article_{i + 1:04d}"


def simulate_front_page(config: SimConfig, hours: int, rng: np.random.Generator) -> HourlySeries:
    start = datetime(config.start.year, config.start.month, config.start.day, tzinfo=timezone.utc)
    hod = (start.hour + np.arange(hours)) % HOURS_PER_DAY
    return HourlySeries(FRONT_PAGE, start, rng.poisson(config.profile.m[hod]), np.ones(hours, dtype=bool))


def simulate_corpus(config: SimConfig, threads: int = 1) -> SimulatedCorpus:
    """``n_articles`` exposures promoted on consecutive days, plus truth."""
    n = config.n_articles
    streams = _streams(config.seed, n)
    if n == 0:
        return SimulatedCorpus(config, [], np.zeros(0, np.int64), np.zeros(0), PromotionSchedule(()), None)
    top = streams[0]
    v1 = sample_v1(config.v1_dist, n, top)
    residuals = top.normal(0.0, config.law.sigma, size=n) if config.law.sigma > 0 else np.zeros(n)
    gamma = np.exp(config.law.h(v1) + residuals)
    rmap = config.rmap
    entries = tuple(ScheduleEntry(config.start + timedelta(days=i), article_title(i)) for i in range(n))

    def one(i):
        return simulate_article(
            float(v1[i]), float(gamma[i]), config.params, rmap, streams[i + 1],
            title=entries[i].title, promoted_at=entries[i].promoted_at, per_user=config.per_user,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            exposures = list(pool.map(one, range(n)))
    else:
        exposures = [one(i) for i in range(n)]
    front = simulate_front_page(config, (n - 1) * HOURS_PER_DAY + EXPOSURE_HOURS, top)
    return SimulatedCorpus(config, exposures, v1, gamma, PromotionSchedule(entries), front)


def hourly_views(corpus: SimulatedCorpus) -> dict[datetime, dict[str, int]]:
    """Views of every title for every hour covered by the corpus."""
    hours: dict[datetime, dict[str, int]] = {}
    for e in corpus.exposures:
        for i, v in enumerate(e.v):
            hours.setdefault(e.promoted_at + i * HOUR, {})[e.title] = int(v)
    if corpus.front_page is not None:
        fp = corpus.front_page
        for i, v in enumerate(fp.counts):
            hours.setdefault(fp.start + i * HOUR, {})[fp.title] = int(v)
    return hours


def write_dumps(
    corpus: SimulatedCorpus,
    directory,
    project: str = "en",
    duplicate_every: int = 0,
    compress: bool = True,
) -> list[Path]:
    """Write pagecounts-style hour files for the corpus.

    Zero-view titles are omitted as in the real dumps.  With
    ``duplicate_every = k > 0`` every k-th line is split into two entries
    whose counts add up to the original.  A line for another project is
    added to every file so project filtering is exercised.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    line_no = 0
    for hour, views in sorted(hourly_views(corpus).items()):
        lines = [format_pagecounts_line(PageViewRecord("de", FRONT_PAGE, 1000, 1000))]
        for title in sorted(views):
            count = views[title]
            if count == 0:
                continue
            line_no += 1
            if duplicate_every and line_no % duplicate_every == 0 and count > 1:
                half = count // 2
                lines.append(format_pagecounts_line(PageViewRecord(project, title, half, 100 * half)))
                count -= half
            lines.append(format_pagecounts_line(PageViewRecord(project, title, count, 100 * count)))
        text = "\n".join(lines) + "\n"
        path = directory / dump_filename(hour, compress)
        if compress:
            # mtime pinned so reruns are byte-identical
            with open(path, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
                gz.write(text.encode("utf-8"))
        else:
            path.write_text(text, encoding="utf-8")
        paths.append(path)
    return paths
