"""Wald inference for linear combinations of de-biased coefficients.

For a contrast vector ``alpha`` the interval is

    alpha' b_hat  +/-  z_{r/2} * sqrt(alpha' Theta alpha / n)

with ``Theta`` the fit's plug-in covariance and ``z_{r/2}`` the upper
r/2 normal quantile at confidence level 1 - r. Joint regions for
``A b_hat`` are ellipsoids thresholded at the upper-r chi-square quantile
with m degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import stats

from .debias import DebiasedFit
from .errors import DomainError, NumericalDegeneracyError


@dataclass(frozen=True)
class CiResult:
    estimate: float
    se: float
    lower: float
    upper: float
    level: float
    alpha_n: np.ndarray


@dataclass(frozen=True)
class RegionResult:
    """Ellipsoidal confidence region {a : (c-a)' shape (c-a) <= threshold}."""

    center: np.ndarray
    shape: np.ndarray
    threshold: float
    level: float

    def contains(self, a) -> bool:
        diff = self.center - np.asarray(a, dtype=float)
        return bool(diff @ self.shape @ diff <= self.threshold)


def _check_level(level: float) -> None:
    if not (0.0 < level < 1.0):
        raise DomainError(f"confidence level must lie in (0, 1); got {level!r}")


def _contrast_variance(fit: DebiasedFit, alpha: np.ndarray) -> float:
    var = float(alpha @ fit.covariance @ alpha) / fit.n
    if var <= 0.0:
        raise NumericalDegeneracyError(
            f"contrast variance {var:.3e} is not positive; the covariance "
            "estimate is numerically degenerate for this contrast"
        )
    return var


def wald_ci(fit: DebiasedFit, alpha_n, level: float = 0.95) -> CiResult:
    """Two-sided confidence interval for ``alpha_n' xi0``."""
    _check_level(level)
    alpha = np.asarray(alpha_n, dtype=float)
    if alpha.shape != fit.b_hat.shape:
        raise DomainError(f"contrast has shape {alpha.shape}, need {fit.b_hat.shape}")
    if not np.any(alpha != 0.0):
        raise DomainError("contrast vector must be nonzero")
    estimate = float(alpha @ fit.b_hat)
    se = float(np.sqrt(_contrast_variance(fit, alpha)))
    z = float(stats.norm.ppf(0.5 * (1.0 + level)))
    return CiResult(estimate=estimate, se=se, lower=estimate - z * se,
                    upper=estimate + z * se, level=level, alpha_n=alpha)


def confidence_region(fit: DebiasedFit, a_n, level: float = 0.95) -> RegionResult:
    """Joint confidence region for ``A_n xi0`` with fixed small row count."""
    _check_level(level)
    a_n = np.atleast_2d(np.asarray(a_n, dtype=float))
    m, k = a_n.shape
    if k != fit.b_hat.shape[0]:
        raise DomainError(f"A_n has {k} columns, need {fit.b_hat.shape[0]}")
    if m > k:
        raise DomainError(f"A_n has more rows ({m}) than columns ({k})")
    if np.linalg.matrix_rank(a_n) < m:
        raise DomainError("rows of A_n must be linearly independent")
    inner = a_n @ fit.covariance @ a_n.T
    inner = 0.5 * (inner + inner.T)
    try:
        cho = scipy.linalg.cho_factor(inner)
    except np.linalg.LinAlgError:
        raise NumericalDegeneracyError(
            "A_n Theta A_n' is not positive definite; the region is degenerate"
        ) from None
    shape = scipy.linalg.cho_solve(cho, np.eye(m)) * fit.n
    shape = 0.5 * (shape + shape.T)
    threshold = float(stats.chi2.ppf(level, df=m))
    return RegionResult(center=a_n @ fit.b_hat, shape=shape,
                        threshold=threshold, level=level)


def wald_test(fit: DebiasedFit, alpha_n, null_value: float = 0.0) -> tuple[float, float]:
    """Two-sided z-test of ``alpha_n' xi0 = null_value``; returns (z, p)."""
    alpha = np.asarray(alpha_n, dtype=float)
    if alpha.shape != fit.b_hat.shape:
        raise DomainError(f"contrast has shape {alpha.shape}, need {fit.b_hat.shape}")
    if not np.any(alpha != 0.0):
        raise DomainError("contrast vector must be nonzero")
    estimate = float(alpha @ fit.b_hat)
    se = float(np.sqrt(_contrast_variance(fit, alpha)))
    z = (estimate - null_value) / se
    p = 2.0 * float(stats.norm.sf(abs(z)))
    return z, p
