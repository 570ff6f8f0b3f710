"""Exponential decay model with a single drop, and its estimators.

In redistributed time the normalised views of a promoted article are

    w*_1 = 1
    w*_t = beta ** (t - 1)            for 2 <= t <= 24
    w*_t = gamma * beta ** (t - 2)    for 25 <= t <= 95

``beta`` is the hourly decay and ``gamma`` the drop when the article
leaves the top slot of the front page.  Reading each visitor's first
visit as the first arrival of a Poisson process with rate
``lambda = -ln(beta)`` gives the same decay.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .circadian import FIT_HOURS, HOURS_PER_DAY, RedistributionMap, redistribute, reverse_redistribute
from .errors import DataError, NumericalError
from .ingest import EXPOSURE_HOURS, ArticleExposure

log = logging.getLogger(__name__)

# values reported for the 2008-2010 English Wikipedia corpus
REFERENCE = {
    "all": {"beta": 0.9874, "gamma": 0.2319, "m": -0.138, "C": 0.863, "corr": -0.29},
    "first100": {"beta": 0.9877, "gamma": 0.2618, "m": -0.132, "C": 0.862, "corr": -0.25},
    "c": 0.162,
    "v1_mu": 7.63,
    "v1_sigma": 0.71,
}


@dataclass(frozen=True)
class ModelParams:
    beta: float
    gamma: float

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise DataError(f"beta must lie in (0, 1], got {self.beta}")
        if not 0.0 < self.gamma <= 1.0:
            raise DataError(f"gamma must lie in (0, 1], got {self.gamma}")

    @property
    def lam(self) -> float:
        """Poisson rate of the first-visit process."""
        return -math.log(self.beta)

    @classmethod
    def from_rate(cls, lam: float, gamma: float) -> "ModelParams":
        return cls(math.exp(-lam), gamma)


@dataclass(frozen=True)
class GammaLaw:
    """``log(gamma) = m * log(v1) + log(C)`` with residual spread ``sigma``."""

    m: float
    C: float
    sigma: float = 0.0

    def __post_init__(self):
        if not self.C > 0:
            raise DataError(f"C must be positive, got {self.C}")
        if not self.sigma >= 0:
            raise DataError(f"sigma must be non-negative, got {self.sigma}")

    def h(self, v1) -> np.ndarray | float:
        v1 = np.asarray(v1, dtype=float)
        if np.any(v1 <= 0):
            raise DataError("v1 must be positive")
        out = self.m * np.log(v1) + math.log(self.C)
        return float(out) if out.ndim == 0 else out

    def gamma(self, v1):
        return np.exp(self.h(v1))


@dataclass(frozen=True)
class V1Distribution:
    """Log-normal law of the first-hour views."""

    mu: float
    sigma_v: float

    def __post_init__(self):
        if not self.sigma_v > 0:
            raise DataError(f"log-standard-deviation must be positive, got {self.sigma_v}")


def curve_w_star(params: ModelParams, hours: int = FIT_HOURS) -> np.ndarray:
    """Normalised model curve at redistributed hours ``1..hours``.

    ``hours=96`` extends the tail formula by one hour so the curve can be
    mapped back onto a full exposure window.
    """
    t = np.arange(1, hours + 1, dtype=float)
    return np.where(
        t <= HOURS_PER_DAY,
        params.beta ** (t - 1),
        params.gamma * params.beta ** (t - 2),
    )


@dataclass(frozen=True)
class ModelCurve:
    w_star: np.ndarray
    w: np.ndarray
    v_hat: Optional[np.ndarray] = None


def model_curve(params: ModelParams, rmap: RedistributionMap, v1: Optional[float] = None) -> ModelCurve:
    """Model curve in both time scales, optionally anchored at ``v1``."""
    w_full = curve_w_star(params, EXPOSURE_HOURS)
    w = reverse_redistribute(w_full, rmap)
    v_hat = None if v1 is None else (v1 / w[0]) * w
    return ModelCurve(w_full[:FIT_HOURS], w, v_hat)


def _log_targets(v_star):
    """``log v*_t - log v*_1`` on hours 1..95 with a mask of usable terms."""
    v_star = np.asarray(v_star, dtype=float)[:FIT_HOURS]
    ok = v_star > 0
    y = np.full(FIT_HOURS, np.nan)
    if not ok[0]:
        return y, np.zeros(FIT_HOURS, dtype=bool)
    y[ok] = np.log(v_star[ok]) - math.log(v_star[0])
    return y, ok


@dataclass(frozen=True)
class FitResult:
    params: ModelParams
    skipped: int
    n_articles: int
    loss: float = field(default=float("nan"))


def _design():
    t = np.arange(1, FIT_HOURS + 1, dtype=float)
    # columns: log(beta), log(gamma); residual = X @ theta - y
    x_beta = np.where(t <= HOURS_PER_DAY, t - 1, t - 2)
    x_gamma = (t > HOURS_PER_DAY).astype(float)
    return np.column_stack([x_beta, x_gamma])


def _stack(corpus):
    rows = []
    skipped = 0
    for v_star in corpus:
        y, ok = _log_targets(v_star)
        # the anchored first term is identically zero and never counted as skipped
        skipped += int((~ok[1:]).sum())
        rows.append((y, ok))
    if not rows:
        raise DataError("cannot estimate parameters from an empty corpus")
    return rows, skipped


def beta_gamma_loss(log_beta: float, log_gamma: float, corpus) -> float:
    """Summed squared log error of the anchored model over a corpus."""
    rows, _ = _stack(corpus)
    theta = np.array([log_beta, log_gamma])
    X = _design()
    total = 0.0
    for y, ok in rows:
        r = X[ok] @ theta - y[ok]
        total += float(r @ r)
    return total


def estimate_beta_gamma(corpus: Iterable, method: str = "normal") -> FitResult:
    """Least-squares ``(beta, gamma)`` in log space.

    ``corpus`` yields redistributed series (or exposures carrying
    ``v_star``).  Each article's model is anchored at its own ``v*_1``.
    Terms with a zero count are skipped and tallied.  ``method="normal"``
    solves the 2x2 normal equations; ``method="search"`` runs a bounded
    quasi-Newton search.  Both respect ``beta, gamma <= 1``.
    """
    series = [e.v_star if isinstance(e, ArticleExposure) else e for e in corpus]
    if any(s is None for s in series):
        raise DataError("exposure has not been redistributed")
    rows, skipped = _stack(series)
    X = _design()
    A = np.zeros((2, 2))
    b = np.zeros(2)
    for y, ok in rows:
        A += X[ok].T @ X[ok]
        b += X[ok].T @ y[ok]
    if np.linalg.matrix_rank(A) < 2:
        raise NumericalError("corpus does not identify both beta and gamma")

    if method == "normal":
        theta = _bounded_quadratic_min(A, b)
    elif method == "search":
        res = minimize(
            lambda th: float(th @ A @ th - 2 * b @ th),
            x0=np.array([-0.01, -1.0]),
            jac=lambda th: 2 * (A @ th - b),
            bounds=[(None, 0.0), (None, 0.0)],
            method="L-BFGS-B",
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10_000},
        )
        if not res.success:
            raise NumericalError(f"beta/gamma search failed: {res.message}")
        theta = res.x
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(theta)):
        raise NumericalError("non-finite beta/gamma estimate")
    params = ModelParams(math.exp(theta[0]), math.exp(theta[1]))
    loss = sum(float((X[ok] @ theta - y[ok]) @ (X[ok] @ theta - y[ok])) for y, ok in rows)
    if skipped:
        log.info("skipped %d zero-count terms", skipped)
    return FitResult(params, skipped, len(rows), loss)


def _bounded_quadratic_min(A, b):
    """Minimise ``th A th - 2 b th`` subject to ``th <= 0``, for 2 unknowns."""
    theta = np.linalg.solve(A, b)
    if np.all(theta <= 0):
        return theta
    candidates = [np.zeros(2)]
    for i in range(2):
        # fix coordinate i at its bound 0, free the other
        j = 1 - i
        th = np.zeros(2)
        th[j] = min(b[j] / A[j, j], 0.0)
        candidates.append(th)
    return min(candidates, key=lambda th: th @ A @ th - 2 * b @ th)


def per_article_gamma(v_star, beta: float) -> float:
    """The article's own drop given a shared ``beta``.

    Closed-form log least squares over redistributed hours 25..95.
    """
    if isinstance(v_star, ArticleExposure):
        v_star = v_star.v_star
    y, ok = _log_targets(v_star)
    if not ok[0]:
        raise DataError("first redistributed hour has no views")
    t = np.arange(1, FIT_HOURS + 1)
    tail = ok & (t > HOURS_PER_DAY)
    if not tail.any():
        raise DataError("no views after the first day")
    return math.exp(float(np.mean(y[tail] - (t[tail] - 2) * math.log(beta))))


def corr_log_v1_log_gamma(v1, gamma) -> float:
    x = np.log(np.asarray(v1, dtype=float))
    y = np.log(np.asarray(gamma, dtype=float))
    if len(x) < 2 or len(x) != len(y):
        raise DataError("need at least 2 paired values")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise NumericalError("correlation undefined for constant input")
    return float(np.corrcoef(x, y)[0, 1])


@dataclass(frozen=True)
class GammaLawFit:
    law: GammaLaw
    outliers: tuple[int, ...]
    n_used: int


def _ols_law(x, y):
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 1e-300:
        raise NumericalError("all v1 values are equal; gamma law is not identified")
    slope = float(xc @ (y - y.mean())) / sxx
    icpt = float(y.mean() - slope * x.mean())
    return slope, icpt, y - (icpt + slope * x)


def fit_gamma_law(
    v1, gamma, trim: bool = True, threshold: float = 3.0, max_rounds: int = 2
) -> GammaLawFit:
    """OLS of ``log(gamma)`` on ``log(v1)``.

    With ``trim``, points whose residual exceeds ``threshold`` residual
    standard deviations are dropped and the line refitted, at most
    ``max_rounds`` times.  ``sigma`` is the sample standard deviation of the
    final residuals.
    """
    x = np.log(np.asarray(v1, dtype=float))
    y = np.log(np.asarray(gamma, dtype=float))
    if x.shape != y.shape:
        raise DataError("v1 and gamma must pair up")
    keep = np.ones(len(x), dtype=bool)
    if keep.sum() < 3:
        raise DataError("need at least 3 (v1, gamma) pairs")
    slope, icpt, resid = _ols_law(x, y)
    for _ in range(max_rounds if trim else 0):
        sd = float(np.std(resid, ddof=1))
        full_resid = y - (icpt + slope * x)
        drop = keep & (np.abs(full_resid) > threshold * sd)
        if not drop.any():
            break
        keep &= ~drop
        if keep.sum() < 3:
            raise DataError("fewer than 3 pairs left after outlier removal")
        slope, icpt, resid = _ols_law(x[keep], y[keep])
    sigma = float(np.std(resid, ddof=1))
    law = GammaLaw(slope, math.exp(icpt), sigma)
    return GammaLawFit(law, tuple(int(i) for i in np.flatnonzero(~keep)), int(keep.sum()))


def gamma_interval(law: GammaLaw, v1: float) -> tuple[float, float]:
    """One-sigma interval on ``log(gamma)`` around the law."""
    center = law.h(v1)
    return center - law.sigma, center + law.sigma


def fit_v1_distribution(v1: Sequence[float]) -> V1Distribution:
    logs = np.log(np.asarray(v1, dtype=float))
    if logs.size == 0 or not np.all(np.isfinite(logs)):
        raise DataError("v1 values must be positive")
    sd = float(np.std(logs))
    if sd == 0:
        raise NumericalError("v1 values are all equal; log-normal spread is zero")
    return V1Distribution(float(np.mean(logs)), sd)


def redistribute_corpus(exposures: Iterable[ArticleExposure], rmap: RedistributionMap) -> list[ArticleExposure]:
    return [e.with_v_star(redistribute(e, rmap)) for e in exposures]


@dataclass(frozen=True)
class CorpusFit:
    """Everything estimated from one training corpus."""

    params: ModelParams
    law: GammaLaw
    v1_dist: V1Distribution
    skipped: int
    gammas: np.ndarray
    v1: np.ndarray
    outliers: tuple[str, ...]
    titles: tuple[str, ...]
    correlation: float

    def to_dict(self) -> dict:
        return {
            "beta": self.params.beta,
            "gamma": self.params.gamma,
            "lambda": self.params.lam,
            "gamma_law": {"m": self.law.m, "C": self.law.C, "sigma": self.law.sigma},
            "v1_distribution": {"mu": self.v1_dist.mu, "sigma": self.v1_dist.sigma_v},
            "skipped_terms": self.skipped,
            "outliers": list(self.outliers),
            "correlation_log_v1_log_gamma": self.correlation,
            "n_articles": len(self.titles),
        }


def fit_corpus(exposures: Sequence[ArticleExposure], rmap: RedistributionMap, trim: bool = True) -> CorpusFit:
    """Fit decay, drop, drop-law and v1 distribution on complete exposures."""
    if not exposures:
        raise DataError("empty training corpus")
    red = redistribute_corpus(exposures, rmap)
    fit = estimate_beta_gamma(red)
    beta = fit.params.beta
    v1 = np.array([e.v1 for e in red], dtype=float)
    usable = [i for i, e in enumerate(red) if e.v1 > 0 and e.v_star[0] > 0]
    gammas = np.array([per_article_gamma(red[i], beta) for i in usable])
    law_fit = fit_gamma_law(v1[usable], gammas, trim=trim)
    titles = tuple(red[i].title for i in usable)
    return CorpusFit(
        params=fit.params,
        law=law_fit.law,
        v1_dist=fit_v1_distribution(v1[v1 > 0]),
        skipped=fit.skipped,
        gammas=gammas,
        v1=v1[usable],
        outliers=tuple(titles[i] for i in law_fit.outliers),
        titles=titles,
        correlation=corr_log_v1_log_gamma(v1[usable], gammas),
    )
