"""Circadian profile, decycling and the redistributed time scale.

The front page accumulates views unevenly over the day.  Removing a
constant share ``c * min(m)`` from the hourly profile ``m`` and then
measuring time in accumulated front-page views gives the redistributed
clock: each redistributed hour is the wall-clock interval over which the
decycled profile collects ``T*/24`` views.  Exposures start at 00h UTC, so
a redistributed day coincides exactly with a real day.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DataError, NumericalError
from .ingest import EXPOSURE_HOURS, ArticleExposure, HourlySeries

HOURS_PER_DAY = 24
FIT_HOURS = 95
C_MAX = 0.999


def compute_profile(series: HourlySeries) -> np.ndarray:
    """Mean views per UTC hour-of-day; slot ``i`` is hour ``i``h.

    Missing slots are left out of their hour's mean.
    """
    present = series.present
    if present.sum() < HOURS_PER_DAY:
        raise DataError(f"profile needs at least {HOURS_PER_DAY} present hours, got {present.sum()}")
    hod = series.hours_of_day[present]
    counts = series.counts[present].astype(float)
    n = np.bincount(hod, minlength=HOURS_PER_DAY)
    if np.any(n == 0):
        raise DataError(f"no samples for hour(s) of day {np.flatnonzero(n == 0).tolist()}")
    return np.bincount(hod, weights=counts, minlength=HOURS_PER_DAY) / n


@dataclass(frozen=True)
class CircadianProfile:
    """Hourly front-page profile ``m`` together with a decycling fraction."""

    m: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        if m.shape != (HOURS_PER_DAY,):
            raise DataError(f"profile needs {HOURS_PER_DAY} values, got shape {m.shape}")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise DataError("profile values must be finite and strictly positive")
        if not 0.0 <= self.c < 1.0:
            raise DataError(f"decycling fraction must lie in [0, 1), got {self.c}")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "c", float(self.c))

    @property
    def m_star(self) -> np.ndarray:
        return self.m - self.c * self.m.min()

    @property
    def t_star(self) -> float:
        return float(self.m_star.sum())

    @property
    def is_flat(self) -> bool:
        return bool(np.all(self.m == self.m[0]))

    def with_c(self, c: float) -> "CircadianProfile":
        return CircadianProfile(self.m, c)

    def to_dict(self) -> dict:
        return {"m": self.m, "c": self.c, "m_star": self.m_star, "t_star": self.t_star}

    @classmethod
    def from_dict(cls, doc: dict) -> "CircadianProfile":
        return cls(np.asarray(doc["m"], dtype=float), float(doc.get("c", 0.0)))


@dataclass(frozen=True)
class RedistributionMap:
    """Wall-clock positions (in real hours) of the redistributed hour edges.

    ``boundaries[k]`` is where the decycled front-page mass, accumulated
    from the start of the exposure, reaches ``k * T*/24``.
    """

    boundaries: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        if b.shape != (EXPOSURE_HOURS + 1,):
            raise DataError(f"map needs {EXPOSURE_HOURS + 1} boundaries, got shape {b.shape}")
        if b[0] != 0.0 or b[-1] != float(EXPOSURE_HOURS) or np.any(np.diff(b) <= 0):
            raise DataError("map boundaries must increase strictly from 0 to 96")
        object.__setattr__(self, "boundaries", b)

    @classmethod
    def identity(cls) -> "RedistributionMap":
        return cls(np.arange(EXPOSURE_HOURS + 1, dtype=float))

    @classmethod
    def from_profile(cls, profile: CircadianProfile) -> "RedistributionMap":
        if profile.is_flat:
            return cls.identity()
        days = EXPOSURE_HOURS // HOURS_PER_DAY
        density = np.tile(profile.m_star, days)
        mass = np.concatenate([[0.0], np.cumsum(density)])
        hours = np.arange(EXPOSURE_HOURS + 1, dtype=float)
        # k-th edge of a day sits at mass (day + k/24) * T*; day edges are exact
        per_day = []
        for day in range(days):
            lo = day * HOURS_PER_DAY
            day_mass = mass[lo : lo + HOURS_PER_DAY + 1] - mass[lo]
            targets = np.arange(HOURS_PER_DAY) * (day_mass[-1] / HOURS_PER_DAY)
            per_day.append(lo + np.interp(targets, day_mass, hours[: HOURS_PER_DAY + 1]))
        b = np.concatenate(per_day + [[float(EXPOSURE_HOURS)]])
        return cls(b)

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    @property
    def is_identity(self) -> bool:
        return bool(np.array_equal(self.boundaries, np.arange(EXPOSURE_HOURS + 1)))

    def to_dict(self) -> dict:
        return {"boundaries": self.boundaries}

    @classmethod
    def from_dict(cls, doc: dict) -> "RedistributionMap":
        return cls(np.asarray(doc["boundaries"], dtype=float))


def _as_series(values) -> np.ndarray:
    if isinstance(values, ArticleExposure):
        if not values.complete:
            raise DataError(f"{values.title}: cannot redistribute an incomplete exposure")
        values = values.v
    arr = np.asarray(values, dtype=float)
    if arr.shape != (EXPOSURE_HOURS,):
        raise DataError(f"expected {EXPOSURE_HOURS} hourly values, got shape {arr.shape}")
    return arr


def redistribute(v, rmap: RedistributionMap) -> np.ndarray:
    """Real-hour counts to redistributed-hour counts.

    Views are spread uniformly over each real hour and collected between
    consecutive map boundaries, so the total is preserved.
    """
    v = _as_series(v)
    if rmap.is_identity:
        return v.copy()
    cumulative = np.concatenate([[0.0], np.cumsum(v)])
    hours = np.arange(EXPOSURE_HOURS + 1, dtype=float)
    return np.diff(np.interp(rmap.boundaries, hours, cumulative))


def reverse_redistribute(w_star, rmap: RedistributionMap) -> np.ndarray:
    """Redistributed-hour values back onto real hours.

    Each redistributed value is spread uniformly over its wall-clock
    interval and re-binned on the integer hour grid.
    """
    w_star = np.asarray(w_star, dtype=float)
    if w_star.shape != (EXPOSURE_HOURS,):
        raise DataError(f"expected {EXPOSURE_HOURS} redistributed values, got shape {w_star.shape}")
    if rmap.is_identity:
        return w_star.copy()
    cumulative = np.concatenate([[0.0], np.cumsum(w_star)])
    hours = np.arange(EXPOSURE_HOURS + 1, dtype=float)
    return np.diff(np.interp(hours, rmap.boundaries, cumulative))


def split_fractions(rmap: RedistributionMap) -> np.ndarray:
    """``F[s, t]``: share of redistributed hour ``s`` lying in real hour ``t``.

    Rows sum to one; ``reverse_redistribute(w) == F.T @ w``.
    """
    b = rmap.boundaries
    lo = np.maximum(b[:-1, None], np.arange(EXPOSURE_HOURS)[None, :])
    hi = np.minimum(b[1:, None], np.arange(1, EXPOSURE_HOURS + 1)[None, :])
    overlap = np.clip(hi - lo, 0.0, None)
    return overlap / rmap.lengths[:, None]


def _ols(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise DataError("a trend segment needs at least 2 points")
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    return slope, float(y.mean() - slope * x.mean())


@dataclass(frozen=True)
class PiecewiseTrend:
    """Piecewise-linear approximation of log views over the exposure.

    Hour 1 is a point value, hours 2-24 and 25-96 are straight lines; the
    drop at hour 25 is the gap between the two lines.
    """

    first: float
    day1_slope: float
    day1_intercept: float
    tail_slope: float
    tail_intercept: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(
            t < 1.5,
            self.first,
            np.where(
                t < HOURS_PER_DAY + 0.5,
                self.day1_intercept + self.day1_slope * t,
                self.tail_intercept + self.tail_slope * t,
            ),
        )

    @property
    def jump(self) -> float:
        """Log-drop between the two lines at hour 25."""
        t = HOURS_PER_DAY + 1
        return (self.tail_intercept + self.tail_slope * t) - (self.day1_intercept + self.day1_slope * t)


def fit_piecewise_trend(mean_log_views) -> PiecewiseTrend:
    """OLS fit of the staged trend; stage 4 uses hours 25-95."""
    y = np.asarray(mean_log_views, dtype=float)
    if y.ndim != 1 or len(y) < FIT_HOURS:
        raise DataError(f"need at least {FIT_HOURS} hourly values, got {len(y)}")
    if not np.all(np.isfinite(y[:FIT_HOURS])):
        raise NumericalError("trend input must be finite")
    t = np.arange(1, len(y) + 1)
    day1 = slice(1, HOURS_PER_DAY)
    tail = slice(HOURS_PER_DAY, FIT_HOURS)
    s2, i2 = _ols(t[day1], y[day1])
    s4, i4 = _ols(t[tail], y[tail])
    return PiecewiseTrend(float(y[0]), s2, i2, s4, i4)


def stage_r_squared(log_values) -> tuple[float, float]:
    """R^2 of straight-line fits on hours 2-24 and 25-95."""
    y = np.asarray(log_values, dtype=float)[:FIT_HOURS]
    t = np.arange(1, FIT_HOURS + 1)
    out = []
    for seg in (slice(1, HOURS_PER_DAY), slice(HOURS_PER_DAY, FIT_HOURS)):
        slope, icpt = _ols(t[seg], y[seg])
        resid = y[seg] - (icpt + slope * t[seg])
        total = y[seg] - y[seg].mean()
        out.append(1.0 - float(np.dot(resid, resid) / np.dot(total, total)))
    return out[0], out[1]


def decycling_objective(c: float, m, mean_series, trend: Optional[PiecewiseTrend] = None) -> float:
    """Squared log-deviation of the redistributed mean series from a trend.

    Without ``trend`` the staged trend is refitted to the redistributed
    series itself, so the objective measures how far each stage is from a
    straight line in log space.  A fixed ``trend`` (for instance one fitted
    in real time) is used as given.
    """
    rmap = RedistributionMap.from_profile(CircadianProfile(m, c))
    v_star = redistribute(mean_series, rmap)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_v = np.log(v_star)
    if not np.all(np.isfinite(log_v[:FIT_HOURS])):
        return float("nan")
    if trend is None:
        trend = fit_piecewise_trend(log_v)
    resid = log_v[:FIT_HOURS] - trend(np.arange(1, FIT_HOURS + 1))
    return float(np.dot(resid, resid))


@dataclass(frozen=True)
class DecyclingResult:
    c: float
    profile: CircadianProfile
    rmap: RedistributionMap
    objective: float


def optimize_c(
    m, mean_series, refit: bool = True, grid_points: int = 101, xtol: float = 1e-4
) -> DecyclingResult:
    """Find the decycling fraction that best straightens the mean series.

    The objective is scanned on an even grid over ``[0, 0.999]`` and then
    refined by a bounded golden-section/parabolic search around the best
    grid point.  A flat objective (flat profile) resolves to ``c = 0``.
    With ``refit=False`` the trend is fitted once on the real-time series
    and held fixed.
    """
    profile = CircadianProfile(m)
    mean_series = _as_series(mean_series)
    if np.any(mean_series <= 0):
        raise DataError("mean exposure series must be strictly positive")
    trend = None if refit else fit_piecewise_trend(np.log(mean_series))

    grid = np.linspace(0.0, C_MAX, grid_points)
    values = np.array([decycling_objective(c, profile.m, mean_series, trend) for c in grid])
    if not np.all(np.isfinite(values)):
        bad = grid[~np.isfinite(values)]
        raise NumericalError(f"non-finite decycling objective at c = {bad[:5].tolist()}")

    best = int(np.argmin(values))
    if np.ptp(values) <= 1e-12 * max(1.0, abs(values[best])):
        c = 0.0
        objective = float(values[0])
    else:
        lo = grid[max(best - 1, 0)]
        hi = grid[min(best + 1, grid_points - 1)]
        res = minimize_scalar(
            decycling_objective,
            bounds=(lo, hi),
            args=(profile.m, mean_series, trend),
            method="bounded",
            options={"xatol": xtol},
        )
        c, objective = float(res.x), float(res.fun)
        if values[best] < objective:
            c, objective = float(grid[best]), float(values[best])
    fitted = profile.with_c(c)
    return DecyclingResult(c, fitted, RedistributionMap.from_profile(fitted), objective)
