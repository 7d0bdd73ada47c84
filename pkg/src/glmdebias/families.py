"""Exponential-family losses for canonical-link GLMs.

The per-observation negative log-likelihood, up to an additive constant, is

    rho(y, a) = -y * a + b(a),        a = x' xi  (the linear predictor)

with cumulant function ``b``. Its derivatives in ``a`` are the building
blocks for every solver here: ``rho_dot = -y + b_dot(a)`` (score kernel)
and ``rho_ddot = b_ddot(a)`` (curvature; free of y for canonical links).

For the binomial and poisson families the predictor is clamped to
``[-PREDICTOR_CLAMP, PREDICTOR_CLAMP]`` before evaluation: beyond +-30 the
binomial probability saturates below machine epsilon and the poisson mean
overflows. The clamp is applied to the whole loss expression (including
the ``-y*a`` term) so algebraic identities such as the binomial label-flip
symmetry hold exactly on the clamped scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateResponseError, DomainError

PREDICTOR_CLAMP = 30.0


def _gaussian_b(a):
    return 0.5 * a * a


def _gaussian_b_dot(a):
    return np.asarray(a, dtype=float) + 0.0


def _gaussian_b_ddot(a):
    return np.ones_like(np.asarray(a, dtype=float))


def _binomial_b(a):
    # log(1 + e^a) = max(a, 0) + log1p(e^-|a|): the exponent is never positive,
    # so this evaluates without overflow on either side of zero.
    a = np.asarray(a, dtype=float)
    return np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))


def _binomial_b_dot(a):
    a = np.asarray(a, dtype=float)
    ena = np.exp(-np.abs(a))
    return np.where(a >= 0.0, 1.0 / (1.0 + ena), ena / (1.0 + ena))


def _binomial_b_ddot(a):
    p = _binomial_b_dot(a)
    return p * (1.0 - p)


def _poisson_b(a):
    return np.exp(np.asarray(a, dtype=float))


@dataclass(frozen=True)
class GlmFamily:
    """A canonical-link exponential family: cumulant ``b`` and derivatives.

    ``clamp`` is the half-width of the predictor interval on which the
    functions are evaluated (None for gaussian, where no clamp is needed).
    """

    kind: str
    b: Callable[[np.ndarray], np.ndarray]
    b_dot: Callable[[np.ndarray], np.ndarray]
    b_ddot: Callable[[np.ndarray], np.ndarray]
    clamp: float | None = PREDICTOR_CLAMP

    def clip_predictor(self, a):
        if self.clamp is None:
            return np.asarray(a, dtype=float)
        return np.clip(a, -self.clamp, self.clamp)


GAUSSIAN = GlmFamily("gaussian", _gaussian_b, _gaussian_b_dot, _gaussian_b_ddot, clamp=None)
BINOMIAL = GlmFamily("binomial", _binomial_b, _binomial_b_dot, _binomial_b_ddot)
POISSON = GlmFamily("poisson", _poisson_b, _poisson_b, _poisson_b)

FAMILIES = {f.kind: f for f in (GAUSSIAN, BINOMIAL, POISSON)}


def get_family(name: str) -> GlmFamily:
    try:
        return FAMILIES[name]
    except KeyError:
        raise DomainError(
            f"unknown family {name!r}; expected one of {sorted(FAMILIES)}"
        ) from None


def _check_finite(name, value):
    if not np.all(np.isfinite(value)):
        raise DomainError(f"non-finite value in argument {name!r}")


def loss(family: GlmFamily, y, a):
    """Negative log-likelihood kernel ``-y*a + b(a)`` (additive constant dropped)."""
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    _check_finite("y", y)
    _check_finite("a", a)
    ac = family.clip_predictor(a)
    out = -y * ac + family.b(ac)
    return float(out) if out.ndim == 0 else out


def dloss(family: GlmFamily, y, a):
    """Score kernel ``-y + b_dot(a)``; mean zero at the true predictor."""
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    _check_finite("y", y)
    _check_finite("a", a)
    out = -y + family.b_dot(family.clip_predictor(a))
    return float(out) if out.ndim == 0 else out


def d2loss(family: GlmFamily, a):
    """Curvature kernel ``b_ddot(a)``, strictly positive on the clamped range."""
    a = np.asarray(a, dtype=float)
    _check_finite("a", a)
    out = family.b_ddot(family.clip_predictor(a))
    return float(out) if out.ndim == 0 else out


def validate_response(family: GlmFamily, y: np.ndarray) -> None:
    """Check that a response vector lies in the family's support."""
    y = np.asarray(y, dtype=float)
    _check_finite("y", y)
    if family.kind == "binomial":
        if not np.all((y == 0.0) | (y == 1.0)):
            bad = y[(y != 0.0) & (y != 1.0)][0]
            raise DomainError(f"binomial response must be in {{0, 1}}; found {bad!r}")
    elif family.kind == "poisson":
        if np.any(y < 0.0):
            raise DomainError("poisson response must be nonnegative")


def intercept_only_mle(family: GlmFamily, y: np.ndarray) -> float:
    """MLE of the intercept in the covariate-free model: b_dot(beta0) = mean(y)."""
    ybar = float(np.mean(y))
    if family.kind == "gaussian":
        return ybar
    if family.kind == "binomial":
        if ybar <= 0.0 or ybar >= 1.0:
            raise DegenerateResponseError(
                "binomial response is constant; the intercept-only MLE diverges"
            )
        return float(np.log(ybar / (1.0 - ybar)))
    if family.kind == "poisson":
        if ybar <= 0.0:
            raise DegenerateResponseError(
                "poisson response is identically zero; the intercept-only MLE diverges"
            )
        return float(np.log(ybar))
    raise DomainError(f"unknown family kind {family.kind!r}")
