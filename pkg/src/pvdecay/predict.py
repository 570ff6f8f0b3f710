"""Hourly forecasts for a promoted article from its first-hour views.

Two predictors share the first day.  The v1 predictor takes the drop from
the gamma law, ``gamma = C * v1**m``, and brackets it with the one-sigma
band on ``log(gamma)``.  The v1+v25 predictor re-anchors the second to
fourth days on the views seen in hour 25 and needs no drop at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .circadian import FIT_HOURS, HOURS_PER_DAY, RedistributionMap, reverse_redistribute
from .errors import DataError
from .ingest import EXPOSURE_HOURS, ArticleExposure
from .model import GammaLaw, ModelParams, curve_w_star, gamma_interval

V1_ONLY = "v1"
V1_V25 = "v1+v25"
# real hours 25..95, as 0-based slice
TAIL = slice(HOURS_PER_DAY, FIT_HOURS)


@dataclass(frozen=True)
class PredictionResult:
    v_hat: np.ndarray
    method: str
    v1: float
    v25: Optional[float] = None
    band_low: Optional[np.ndarray] = None
    band_high: Optional[np.ndarray] = None

    @property
    def has_band(self) -> bool:
        return self.band_low is not None


def _real_curve(beta: float, gamma: float, rmap: RedistributionMap) -> np.ndarray:
    w_star = curve_w_star(ModelParams(beta, 1.0), EXPOSURE_HOURS)
    w_star[HOURS_PER_DAY:] *= gamma
    return reverse_redistribute(w_star, rmap)


def _check_positive(**values):
    for name, value in values.items():
        if not (value > 0 and math.isfinite(value)):
            raise DataError(f"{name} must be positive, got {value}")


def predict_from_v1(v1: float, params: ModelParams, law: GammaLaw, rmap: RedistributionMap) -> PredictionResult:
    """Forecast anchored on the first hour, drop taken from the gamma law.

    Band edges are whole forecasts rerun with ``gamma`` at the ends of the
    one-sigma interval, so they follow the time redistribution too.
    """
    _check_positive(v1=v1)

    def run(log_gamma):
        # gamma may exceed 1 at the upper band edge; the curve does not care
        w = _real_curve(params.beta, math.exp(log_gamma), rmap)
        return (v1 / w[0]) * w

    lo, hi = gamma_interval(law, v1)
    return PredictionResult(
        v_hat=run(law.h(v1)),
        method=V1_ONLY,
        v1=float(v1),
        band_low=run(lo),
        band_high=run(hi),
    )


def predict_with_v25(v1: float, v25: float, params: ModelParams, rmap: RedistributionMap) -> PredictionResult:
    """Forecast re-anchored on hour 25 for the second to fourth days."""
    _check_positive(v1=v1, v25=v25)
    t = np.arange(1, EXPOSURE_HOURS + 1, dtype=float)
    w_star = np.where(t <= HOURS_PER_DAY, params.beta ** (t - 1), params.beta ** (t - 25))
    w = reverse_redistribute(w_star, rmap)
    v_hat = np.empty(EXPOSURE_HOURS)
    v_hat[:HOURS_PER_DAY] = (v1 / w[0]) * w[:HOURS_PER_DAY]
    v_hat[HOURS_PER_DAY:] = (v25 / w[HOURS_PER_DAY]) * w[HOURS_PER_DAY:]
    return PredictionResult(v_hat=v_hat, method=V1_V25, v1=float(v1), v25=float(v25))


@dataclass(frozen=True)
class ErrorReport:
    """Per-hour errors of one forecast against one observed exposure.

    ``normalized`` is NaN where the observation is zero.
    """

    normalized: np.ndarray
    absolute: np.ndarray
    in_band: Optional[np.ndarray]

    @property
    def coverage(self) -> Optional[float]:
        """Share of hours 25..95 whose observation lies inside the band."""
        if self.in_band is None:
            return None
        return float(self.in_band[TAIL].mean())

    @property
    def undefined_hours(self) -> np.ndarray:
        return np.flatnonzero(np.isnan(self.normalized)) + 1


def error_report(prediction: PredictionResult, observed) -> ErrorReport:
    if isinstance(observed, ArticleExposure):
        if not observed.complete:
            raise DataError(f"{observed.title}: observed exposure is incomplete")
        observed = observed.v
    v = np.asarray(observed, dtype=float)
    if v.shape != prediction.v_hat.shape:
        raise DataError("prediction and observation lengths differ")
    absolute = prediction.v_hat - v
    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = np.where(v > 0, absolute / v, np.nan)
    in_band = None
    if prediction.has_band:
        in_band = (v >= prediction.band_low) & (v <= prediction.band_high)
    return ErrorReport(normalized, absolute, in_band)


def median_abs_normalized(reports: Sequence[ErrorReport], hours: slice = TAIL) -> float:
    """Median of defined ``|normalized error|`` entries pooled over articles."""
    pooled = np.concatenate([np.abs(r.normalized[hours]) for r in reports])
    pooled = pooled[~np.isnan(pooled)]
    if pooled.size == 0:
        return float("nan")
    return float(np.median(pooled))


def hourly_coverage(reports: Sequence[ErrorReport]) -> np.ndarray:
    """Per-hour share of articles inside the band (all 96 hours)."""
    stacked = np.array([r.in_band for r in reports if r.in_band is not None], dtype=float)
    return stacked.mean(axis=0)


@dataclass(frozen=True)
class Evaluation:
    v1_only: list[ErrorReport]
    v1_v25: list[ErrorReport]
    titles: list[str]


def evaluate(
    exposures: Sequence[ArticleExposure], params: ModelParams, law: GammaLaw, rmap: RedistributionMap
) -> Evaluation:
    """Run both predictors on every exposure with positive v1 and v25."""
    a, b, titles = [], [], []
    for e in exposures:
        if e.v1 <= 0 or e.v25 <= 0:
            continue
        a.append(error_report(predict_from_v1(e.v1, params, law, rmap), e))
        b.append(error_report(predict_with_v25(e.v1, e.v25, params, rmap), e))
        titles.append(e.title)
    return Evaluation(a, b, titles)
