"""One-step de-biased estimators built on a penalized GLM fit.

All three estimators share the form ``b = xi_hat - M @ g`` where ``g`` is
the empirical score at the initial fit and ``M`` approximates the inverse
of the sample Hessian ``sigma_hat = (1/n) sum_i b_ddot(a_i) x_i x_i'``:

* REF-DS inverts ``sigma_hat`` exactly (Cholesky, two triangular solves
  per column) and uses ``theta`` itself as the plug-in covariance.
* QP(mu) solves, row by row, ``min zeta' sigma zeta`` subject to
  ``||sigma zeta - e_j||_inf <= mu``; at ``mu = 0`` the rows coincide with
  the exact inverse.
* ORIG-DS assembles a row-sparse inverse estimate from node-wise lasso
  regressions on the weighted design; because that matrix is asymmetric
  its plug-in covariance is the sandwich ``theta sigma theta'`` (the same
  convention is applied to QP rows at ``mu > 0``).

Singularity is surfaced, never papered over: no ridge jitter is added to
an ill-conditioned Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from ._kernels import nodewise_path_cd, qp_dual_cd
from .data import CoefMap, Dataset
from .errors import (
    ConvergenceError,
    DegenerateColumnError,
    DomainError,
    SingularHessianError,
)
from .families import GlmFamily
from .lasso import LassoFit, lambda_path, make_folds, score_vector

CONDITION_LIMIT = 1e12
QP_TOL = 1e-8
QP_MAX_SWEEPS = 50_000
NODEWISE_TOL = 1e-10
NODEWISE_CV_TOL = 1e-6  # fold fits only rank penalties; the final fit is tight
NODEWISE_MAX_SWEEPS = 10_000
DEFAULT_NODEWISE_N_LAMBDA = 30
DEFAULT_NODEWISE_RATIO = 1e-2

METHOD_REF = "REF-DS"
METHOD_ORIG = "ORIG-DS"


def method_qp(mu: float) -> str:
    return f"QP(mu={mu:g})"


@dataclass(frozen=True)
class HessianModel:
    """Sample Hessian at a coefficient vector, with its Cholesky factor.

    ``weights`` holds the square-root curvatures b_ddot(a_i)^(1/2), so
    ``sigma_hat`` equals (W X)'(W X)/n. ``chol`` is the lower factor when
    sigma_hat is numerically positive definite, else None.
    """

    sigma_hat: np.ndarray
    weights: np.ndarray
    chol: np.ndarray | None
    xi_at: np.ndarray


@dataclass(frozen=True)
class DebiasedFit:
    """De-biased coefficients plus the matrices needed for Wald inference.

    ``theta_hat`` is the inverse-Hessian estimate used in the correction;
    ``covariance`` is the plug-in asymptotic covariance of sqrt(n) (b-xi0)
    (equal to theta_hat for REF-DS, the sandwich otherwise).
    """

    b_hat: np.ndarray
    theta_hat: np.ndarray
    covariance: np.ndarray
    method: str
    n: int
    xi_init: np.ndarray
    hessian_condition: float | None = None

    @property
    def se(self) -> np.ndarray:
        """Model-based standard errors sqrt(diag(covariance)/n)."""
        return np.sqrt(np.diag(self.covariance) / self.n)

    def destandardize(self, coef_map: CoefMap) -> "DebiasedFit":
        """Map the fit back to the covariate scale described by ``coef_map``."""
        a = coef_map.transform
        return replace(
            self,
            b_hat=a @ self.b_hat,
            theta_hat=a @ self.theta_hat @ a.T,
            covariance=a @ self.covariance @ a.T,
            xi_init=a @ self.xi_init,
        )


@dataclass(frozen=True)
class NodewiseResult:
    """Node-wise inverse estimate with its per-column tuning diagnostics."""

    theta: np.ndarray
    lambdas: np.ndarray
    tau_sq: np.ndarray


def hessian(d: Dataset, family: GlmFamily, xi: np.ndarray) -> HessianModel:
    """Sample Hessian (1/n) sum_i b_ddot(x_i' xi) x_i x_i' at ``xi``."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (d.p + 1,):
        raise DomainError(f"xi has shape {xi.shape}, need ({d.p + 1},)")
    if not np.all(np.isfinite(xi)):
        raise DomainError("xi contains non-finite values")
    curv = family.b_ddot(family.clip_predictor(d.X @ xi))
    xw = np.sqrt(curv)[:, None] * d.X
    sigma = xw.T @ xw / d.n
    sigma = 0.5 * (sigma + sigma.T)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        chol = None
    return HessianModel(sigma_hat=sigma, weights=np.sqrt(curv), chol=chol, xi_at=xi)


def condition_estimate(h: HessianModel) -> float:
    """Spectral condition number of sigma_hat (inf when not positive definite)."""
    eig = np.linalg.eigvalsh(h.sigma_hat)
    if eig[0] <= 0.0:
        return float("inf")
    return float(eig[-1] / eig[0])


def invert_hessian(h: HessianModel, cond_limit: float = CONDITION_LIMIT) -> np.ndarray:
    """Exact inverse of the sample Hessian, symmetrized on return."""
    if h.chol is None:
        raise SingularHessianError(
            "sample Hessian is not positive definite; consider fewer covariates "
            "(smaller p) or check the data for separation"
        )
    cond = condition_estimate(h)
    if cond > cond_limit:
        raise SingularHessianError(
            f"sample Hessian condition estimate {cond:.3e} exceeds {cond_limit:.0e}; "
            "consider fewer covariates (smaller p) or check the data for separation"
        )
    k = h.sigma_hat.shape[0]
    theta = scipy.linalg.cho_solve((h.chol, True), np.eye(k))
    return 0.5 * (theta + theta.T)


def _check_initial_fit(fit: LassoFit) -> None:
    if not fit.converged:
        raise DomainError("initial lasso fit did not converge; refusing to de-bias")


def refine_debias(d: Dataset, family: GlmFamily, fit: LassoFit) -> DebiasedFit:
    """De-biased estimate using the exact inverse Hessian (method REF-DS)."""
    _check_initial_fit(fit)
    h = hessian(d, family, fit.xi_hat)
    theta = invert_hessian(h)
    g = score_vector(d, family, fit.xi_hat)
    b = fit.xi_hat - theta @ g
    return DebiasedFit(b_hat=b, theta_hat=theta, covariance=theta,
                       method=METHOD_REF, n=d.n, xi_init=fit.xi_hat,
                       hessian_condition=condition_estimate(h))


def qp_debias(h: HessianModel, j: int, mu_n: float) -> np.ndarray:
    """Row j of the constrained inverse-row program at slack ``mu_n``.

    ``mu_n = 0`` returns row j of the exact inverse. For ``mu_n > 0`` the
    row solves ``min zeta' sigma zeta : ||sigma zeta - e_j||_inf <= mu_n``
    via coordinate descent on the box-dual; the dual optimum ``w`` maps to
    the primal row as ``zeta = -w``.
    """
    k = h.sigma_hat.shape[0]
    if not 0 <= j < k:
        raise DomainError(f"column index {j} outside 0..{k - 1}")
    if not np.isfinite(mu_n) or mu_n < 0.0:
        raise DomainError(f"mu_n must be finite and >= 0; got {mu_n!r}")
    if mu_n == 0.0:
        if h.chol is None:
            raise SingularHessianError(
                "sample Hessian is not positive definite; the exact inverse row "
                "does not exist at mu_n = 0"
            )
        e = np.zeros(k)
        e[j] = 1.0
        return scipy.linalg.cho_solve((h.chol, True), e)
    w = np.zeros(k)
    s = np.zeros(k)
    _, ok = qp_dual_cd(h.sigma_hat, j, mu_n, w, s, QP_TOL, QP_MAX_SWEEPS)
    if not ok:
        raise ConvergenceError(
            f"inverse-row program for column {j} did not converge within "
            f"{QP_MAX_SWEEPS} sweeps at mu_n={mu_n:g}",
            last_iterate=-w,
        )
    return -w


def qp_theta(h: HessianModel, mu_n: float) -> np.ndarray:
    """Stack all rows of the constrained inverse-row program into M.

    At ``mu_n = 0`` this is exactly :func:`invert_hessian`, so downstream
    results coincide with REF-DS bit for bit.
    """
    if mu_n == 0.0:
        return invert_hessian(h)
    k = h.sigma_hat.shape[0]
    m = np.empty((k, k))
    for j in range(k):
        m[j] = qp_debias(h, j, mu_n)
    return m


def qp_full_debias(d: Dataset, family: GlmFamily, fit: LassoFit,
                   mu_n: float) -> DebiasedFit:
    """De-biased estimate using constrained inverse rows (method QP(mu))."""
    _check_initial_fit(fit)
    h = hessian(d, family, fit.xi_hat)
    m = qp_theta(h, mu_n)
    g = score_vector(d, family, fit.xi_hat)
    b = fit.xi_hat - m @ g
    cov = m if mu_n == 0.0 else m @ h.sigma_hat @ m.T
    return DebiasedFit(b_hat=b, theta_hat=m, covariance=cov,
                       method=method_qp(mu_n), n=d.n, xi_init=fit.xi_hat,
                       hessian_condition=condition_estimate(h))


def nodewise_theta(d: Dataset, family: GlmFamily, fit: LassoFit, seed: int,
                   n_folds: int = 5,
                   n_lambda: int = DEFAULT_NODEWISE_N_LAMBDA,
                   lambda_min_ratio: float = DEFAULT_NODEWISE_RATIO,
                   lambdas: np.ndarray | None = None) -> NodewiseResult:
    """Node-wise lasso estimate of the inverse Hessian on the weighted design.

    Each row j comes from an L1-penalized regression of weighted column j
    on the remaining weighted columns (no intercept, everything
    penalized), with the penalty picked by K-fold cross-validation on
    out-of-fold prediction error unless ``lambdas`` pins it per column.
    Row j is (1/tau_j^2) * (e_j - gamma_j interleaved), with
    tau_j^2 = ||residual||^2/n + lambda_j ||gamma_j||_1. The result is
    generally asymmetric.
    """
    _check_initial_fit(fit)
    curv = family.b_ddot(family.clip_predictor(d.X @ fit.xi_hat))
    xw = np.sqrt(curv)[:, None] * d.X
    n, k = xw.shape
    gram = xw.T @ xw / n
    gram = 0.5 * (gram + gram.T)

    if lambdas is not None:
        lambdas = np.asarray(lambdas, dtype=float)
        if lambdas.shape != (k,):
            raise DomainError(f"lambdas must have shape ({k},)")

    if lambdas is None:
        folds = make_folds(n, n_folds, seed)
        grams_tr = []
        grams_te = []
        for f in range(n_folds):
            test = folds == f
            xw_tr = xw[~test]
            xw_te = xw[test]
            grams_tr.append(xw_tr.T @ xw_tr / xw_tr.shape[0])
            grams_te.append(xw_te.T @ xw_te / xw_te.shape[0])

    theta = np.zeros((k, k))
    chosen = np.empty(k)
    tau_sq = np.empty(k)
    gamma_buf = np.empty((1, k))
    for j in range(k):
        if lambdas is not None:
            lam_j = float(lambdas[j])
        else:
            off = np.abs(gram[:, j]).copy()
            off[j] = 0.0
            lmax = float(off.max())
            if lmax <= 0.0:
                lam_j = 0.0  # column already orthogonal to the rest
            else:
                grid = lambda_path(lmax, n_lambda, lambda_min_ratio)
                errs = np.zeros(grid.size)
                gammas = np.empty((grid.size, k))
                for f in range(n_folds):
                    nodewise_path_cd(grams_tr[f], j, grid, gammas,
                                     NODEWISE_CV_TOL, NODEWISE_MAX_SWEEPS)
                    gte = grams_te[f]
                    cross = gammas @ gte[:, j]
                    quad = np.einsum("lk,lk->l", gammas @ gte, gammas)
                    errs += gte[j, j] - 2.0 * cross + quad
                lam_j = float(grid[int(np.argmin(errs))])
        nodewise_path_cd(gram, j, np.array([lam_j]), gamma_buf,
                         NODEWISE_TOL, NODEWISE_MAX_SWEEPS)
        gamma = gamma_buf[0]
        s = gram @ gamma
        t2 = float(gram[j, j] - 2.0 * s[j] + gamma @ s
                   + lam_j * np.sum(np.abs(gamma)))
        if t2 < 1e-12:
            raise DegenerateColumnError(
                f"node-wise residual variance for column {d.col_names[j]!r} "
                f"is {t2:.3e}; the inverse row is degenerate"
            )
        theta[j] = -gamma / t2
        theta[j, j] = 1.0 / t2
        chosen[j] = lam_j
        tau_sq[j] = t2
    return NodewiseResult(theta=theta, lambdas=chosen, tau_sq=tau_sq)


def orig_debias(d: Dataset, family: GlmFamily, fit: LassoFit,
                theta_tilde) -> DebiasedFit:
    """De-biased estimate using a node-wise inverse estimate (method ORIG-DS).

    ``theta_tilde`` may be the matrix itself or a :class:`NodewiseResult`.
    The plug-in covariance is the sandwich theta sigma theta' because the
    node-wise matrix is asymmetric.
    """
    _check_initial_fit(fit)
    if isinstance(theta_tilde, NodewiseResult):
        theta_tilde = theta_tilde.theta
    theta_tilde = np.asarray(theta_tilde, dtype=float)
    k = d.p + 1
    if theta_tilde.shape != (k, k):
        raise DomainError(f"theta has shape {theta_tilde.shape}, need ({k}, {k})")
    h = hessian(d, family, fit.xi_hat)
    g = score_vector(d, family, fit.xi_hat)
    b = fit.xi_hat - theta_tilde @ g
    cov = theta_tilde @ h.sigma_hat @ theta_tilde.T
    return DebiasedFit(b_hat=b, theta_hat=theta_tilde, covariance=cov,
                       method=METHOD_ORIG, n=d.n, xi_init=fit.xi_hat,
                       hessian_condition=condition_estimate(h))
