"""Monte-Carlo harness for coverage and bias studies.

A study draws, for every point on a signal grid and every replicate,
fresh truncated-Gaussian covariates with a chosen correlation structure,
simulates a GLM response at the true coefficients, runs the configured
estimators, and aggregates per-method bias, empirical coverage of the
confidence interval for the moving coefficient, empirical SD of the
estimates, and the mean model-based standard error.

True coefficients: the intercept and a moving first coefficient beta1,
plus a fixed sparse pattern of nonzero entries (defaults to two entries
at 1.0 and two at 0.5, frozen at positions 2..5 for reproducibility).

Randomness is counter-based (one Philox stream per scenario, replicate
and purpose), replicates standardize their design before fitting, and
estimator failures are recorded per replicate rather than aborting the
sweep, so results are bitwise reproducible for a given seed no matter
how many worker processes run the replicates.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import rng as rngmod
from .data import CoefMap, Dataset, from_arrays, standardize
from .debias import (
    DebiasedFit,
    hessian,
    invert_hessian,
    nodewise_theta,
    orig_debias,
    qp_full_debias,
    refine_debias,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataValidationError,
    GlmDebiasError,
    NumericalError,
    ValidationError,
)
from .families import GlmFamily, get_family, intercept_only_mle
from .lasso import (
    cross_validate,
    fit_path,
    lambda_max,
    lambda_path,
    objective,
    score_vector,
)

STRUCTURES = ("identity", "ar1", "cs")
METHOD_KEYS = ("ref", "orig", "mle", "qp")

MLE_MAX_ITER = 200
MLE_SUP_LIMIT = 1e3


@dataclass(frozen=True)
class SimConfig:
    """Full description of one simulation study (one covariance structure)."""

    n: int
    p: int
    family: str
    beta1_grid: tuple[float, ...]
    n_replicates: int
    seed: int
    structure: str = "identity"
    rho: float = 0.0
    truncation: float = 6.0
    intercept: float = 0.0
    nonzero_pattern: tuple[tuple[int, float], ...] = ((2, 1.0), (3, 1.0), (4, 0.5), (5, 0.5))
    methods: tuple[str, ...] = ("ref",)
    mu_grid: tuple[float, ...] = ()
    level: float = 0.95
    cv_folds: int = 10
    nodewise_folds: int = 5
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-4
    nodewise_n_lambda: int = 30
    nodewise_lambda_min_ratio: float = 1e-2
    standardize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "beta1_grid", tuple(float(b) for b in self.beta1_grid))
        object.__setattr__(self, "methods", tuple(_canon_method(m) for m in self.methods))
        object.__setattr__(self, "mu_grid", tuple(float(m) for m in self.mu_grid))
        object.__setattr__(
            self, "nonzero_pattern",
            tuple((int(i), float(v)) for i, v in self.nonzero_pattern),
        )
        self._validate()

    def _validate(self):
        if self.n < 2 or self.p < 1:
            raise ConfigError(f"need n >= 2 and p >= 1; got n={self.n}, p={self.p}")
        if not self.beta1_grid:
            raise ConfigError("beta1_grid must be nonempty")
        if self.n_replicates < 1:
            raise ConfigError("n_replicates must be >= 1")
        if self.structure not in STRUCTURES:
            raise ConfigError(f"structure must be one of {STRUCTURES}; got {self.structure!r}")
        if self.structure != "identity" and not (-1.0 < self.rho < 1.0):
            raise ConfigError(f"rho must lie in (-1, 1); got {self.rho!r}")
        if not (0.0 < self.level < 1.0):
            raise ConfigError(f"level must lie in (0, 1); got {self.level!r}")
        get_family(self.family)
        for m in self.methods:
            if m not in METHOD_KEYS:
                raise ConfigError(f"unknown method {m!r}; expected subset of {METHOD_KEYS}")
        if not self.methods:
            raise ConfigError("methods must be nonempty")
        if "qp" in self.methods and not self.mu_grid:
            raise ConfigError("method 'qp' requires a nonempty mu_grid")
        for idx, _ in self.nonzero_pattern:
            if not (2 <= idx <= self.p):
                raise ConfigError(
                    f"nonzero_pattern index {idx} outside 2..{self.p} "
                    "(0 is the intercept, 1 the moving coefficient)"
                )
        if self.truncation <= 0.0:
            raise ConfigError("truncation must be positive")

    def method_tags(self) -> tuple[str, ...]:
        """Output row labels, mu grid expanded, in configured order."""
        tags = []
        for m in self.methods:
            if m == "qp":
                tags.extend(f"QP(mu={mu:g})" for mu in self.mu_grid)
            else:
                tags.append({"ref": "REF-DS", "orig": "ORIG-DS", "mle": "MLE"}[m])
        return tuple(tags)

    def to_dict(self) -> dict:
        return {
            "n": self.n, "p": self.p, "family": self.family,
            "structure": self.structure, "rho": self.rho,
            "truncation": self.truncation, "intercept": self.intercept,
            "beta1_grid": list(self.beta1_grid),
            "nonzero_pattern": [list(x) for x in self.nonzero_pattern],
            "n_replicates": self.n_replicates, "methods": list(self.methods),
            "mu_grid": list(self.mu_grid), "level": self.level,
            "seed": self.seed, "cv_folds": self.cv_folds,
            "nodewise_folds": self.nodewise_folds, "n_lambda": self.n_lambda,
            "lambda_min_ratio": self.lambda_min_ratio,
            "nodewise_n_lambda": self.nodewise_n_lambda,
            "nodewise_lambda_min_ratio": self.nodewise_lambda_min_ratio,
            "standardize": self.standardize,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SimConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        required = {"n", "p", "family", "beta1_grid", "n_replicates", "seed"}
        missing = required - set(raw)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        kwargs = dict(raw)
        if "nonzero_pattern" in kwargs:
            kwargs["nonzero_pattern"] = tuple(tuple(x) for x in kwargs["nonzero_pattern"])
        return cls(**kwargs)


def _canon_method(name: str) -> str:
    aliases = {
        "ref": "ref", "ref-ds": "ref", "refds": "ref",
        "orig": "orig", "orig-ds": "orig", "origds": "orig", "nodewise": "orig",
        "mle": "mle",
        "qp": "qp", "tuning": "qp",
    }
    key = str(name).strip().lower()
    if key not in aliases:
        raise ConfigError(f"unknown method {name!r}")
    return aliases[key]


@dataclass(frozen=True)
class ReplicateRecord:
    """One estimator's result on one replicate (original covariate scale)."""

    beta1: float
    replicate: int
    method: str
    estimate: float
    model_se: float
    lower: float
    upper: float
    covered: bool
    failed: bool


@dataclass(frozen=True)
class SummaryRow:
    """Aggregates for one (signal value, method) cell of the study."""

    beta1: float
    method: str
    mean_bias: float | None
    coverage: float | None
    empirical_se: float | None
    model_se: float | None
    n_failed: int

    @property
    def se_ratio(self) -> float | None:
        if self.model_se is None or not self.empirical_se:
            return None
        return self.model_se / self.empirical_se


@dataclass(frozen=True)
class SimSummary:
    """Per-scenario aggregates, plus per-replicate detail when retained."""

    config: SimConfig
    rows: tuple[SummaryRow, ...]
    details: tuple[ReplicateRecord, ...] = field(default=())

    def row(self, beta1: float, method: str) -> SummaryRow:
        for r in self.rows:
            if r.beta1 == beta1 and r.method == method:
                return r
        raise KeyError(f"no summary row for beta1={beta1!r}, method={method!r}")


def covariance_matrix(p: int, structure: str, rho: float) -> np.ndarray:
    """Covariate covariance: identity, AR(1) rho^|i-j|, or compound symmetry."""
    if structure == "identity":
        return np.eye(p)
    if structure == "ar1":
        idx = np.arange(p)
        return rho ** np.abs(idx[:, None] - idx[None, :])
    if structure == "cs":
        if p > 1 and rho <= -1.0 / (p - 1):
            raise ConfigError(
                f"compound symmetry with rho={rho:g} is not positive definite "
                f"for p={p} (needs rho > {-1.0 / (p - 1):.4f})"
            )
        return np.full((p, p), rho) + (1.0 - rho) * np.eye(p)
    raise ConfigError(f"unknown structure {structure!r}")


def gen_covariates(n: int, p: int, structure: str, rho: float,
                   truncation: float, rng_stream: np.random.Generator) -> np.ndarray:
    """Draw n rows of N_p(0, Sigma_x), then clip every entry to +-truncation."""
    sigma = covariance_matrix(p, structure, rho)
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise ConfigError(
            f"covariance for structure={structure!r}, rho={rho:g} is not "
            "positive definite"
        ) from None
    z = rng_stream.standard_normal((n, p))
    return np.clip(z @ chol.T, -truncation, truncation)


def gen_response(x_with_intercept: np.ndarray, xi0: np.ndarray, family: GlmFamily,
                 rng_stream: np.random.Generator) -> np.ndarray:
    """Simulate the response at linear predictor X xi0 for the given family."""
    x_with_intercept = np.asarray(x_with_intercept, dtype=float)
    xi0 = np.asarray(xi0, dtype=float)
    if x_with_intercept.shape[1] != xi0.shape[0]:
        raise ConfigError(
            f"xi0 has length {xi0.shape[0]}, design has {x_with_intercept.shape[1]} columns"
        )
    a = x_with_intercept @ xi0
    if family.kind == "gaussian":
        return a + rng_stream.standard_normal(a.shape[0])
    if family.kind == "binomial":
        prob = family.b_dot(family.clip_predictor(a))
        return (rng_stream.random(a.shape[0]) < prob).astype(float)
    if family.kind == "poisson":
        return rng_stream.poisson(np.exp(family.clip_predictor(a))).astype(float)
    raise ConfigError(f"unknown family kind {family.kind!r}")


def default_xi0(p: int, beta1: float) -> np.ndarray:
    """Zero intercept, moving beta1, then 1.0 at positions 2-3 and 0.5 at 4-5."""
    if p < 5:
        raise ConfigError(f"default coefficient pattern needs p >= 5; got p={p}")
    return build_xi0(p, beta1, 0.0, ((2, 1.0), (3, 1.0), (4, 0.5), (5, 0.5)))


def build_xi0(p: int, beta1: float, intercept: float,
              pattern: tuple[tuple[int, float], ...]) -> np.ndarray:
    xi0 = np.zeros(p + 1)
    xi0[0] = intercept
    xi0[1] = beta1
    for idx, value in pattern:
        if not (2 <= idx <= p):
            raise ConfigError(f"pattern index {idx} outside 2..{p}")
        xi0[idx] = value
    return xi0


def _identity_coef_map(k: int) -> CoefMap:
    return CoefMap(centers=np.zeros(k), scales=np.ones(k))


def _newton_mle(d: Dataset, family: GlmFamily):
    """Newton-Raphson MLE with step halving.

    Declared failed (ConvergenceError) after MLE_MAX_ITER iterations or
    as soon as the sup-norm of the iterate exceeds MLE_SUP_LIMIT, the
    operational stand-in for a diverging likelihood.
    """
    xi = np.zeros(d.p + 1)
    xi[0] = intercept_only_mle(family, d.y)
    current = objective(d, family, xi, 0.0)
    for _ in range(MLE_MAX_ITER):
        h = hessian(d, family, xi)
        g = score_vector(d, family, xi)
        try:
            step = np.linalg.solve(h.sigma_hat, g)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Hessian in Newton iteration",
                                   last_iterate=xi) from None
        t = 1.0
        cand = xi - step
        cand_obj = objective(d, family, cand, 0.0)
        halvings = 0
        while cand_obj > current + 1e-12 * (1.0 + abs(current)) and halvings < 20:
            halvings += 1
            t *= 0.5
            cand = xi - t * step
            cand_obj = objective(d, family, cand, 0.0)
        if cand_obj > current + 1e-12 * (1.0 + abs(current)):
            break  # no descent left; fall through to the iteration-cap error
        xi = cand
        current = cand_obj
        if float(np.max(np.abs(xi))) > MLE_SUP_LIMIT:
            raise ConvergenceError(
                f"MLE iterate exceeded sup-norm {MLE_SUP_LIMIT:g}; likelihood "
                "is diverging", last_iterate=xi)
        if float(np.max(np.abs(t * step))) < 1e-10:
            theta = invert_hessian(hessian(d, family, xi))
            return xi, theta
    raise ConvergenceError(
        f"Newton-Raphson did not converge within {MLE_MAX_ITER} iterations",
        last_iterate=xi)


def _record(beta1, rep, tag, fit_orig: DebiasedFit, level: float) -> ReplicateRecord:
    est = float(fit_orig.b_hat[1])
    se = float(fit_orig.se[1])
    z = float(stats.norm.ppf(0.5 * (1.0 + level)))
    lower, upper = est - z * se, est + z * se
    return ReplicateRecord(beta1=beta1, replicate=rep, method=tag, estimate=est,
                           model_se=se, lower=lower, upper=upper,
                           covered=bool(lower <= beta1 <= upper), failed=False)


def _failure(beta1, rep, tag) -> ReplicateRecord:
    nan = float("nan")
    return ReplicateRecord(beta1=beta1, replicate=rep, method=tag, estimate=nan,
                           model_se=nan, lower=nan, upper=nan,
                           covered=False, failed=True)


def run_replicate(cfg: SimConfig, scenario: int, rep: int) -> list[ReplicateRecord]:
    """All configured estimators on one freshly simulated replicate."""
    family = get_family(cfg.family)
    beta1 = cfg.beta1_grid[scenario]
    xi0 = build_xi0(cfg.p, beta1, cfg.intercept, cfg.nonzero_pattern)
    covs = gen_covariates(cfg.n, cfg.p, cfg.structure, cfg.rho, cfg.truncation,
                          rngmod.stream(cfg.seed, scenario, rep, rngmod.PURPOSE_COVARIATES))
    x_int = np.empty((cfg.n, cfg.p + 1))
    x_int[:, 0] = 1.0
    x_int[:, 1:] = covs
    y = gen_response(x_int, xi0, family,
                     rngmod.stream(cfg.seed, scenario, rep, rngmod.PURPOSE_RESPONSE))

    records: list[ReplicateRecord] = []
    tags = cfg.method_tags()
    try:
        d = from_arrays(y, covs)
        if cfg.standardize:
            d_fit, cmap = standardize(d)
        else:
            d_fit, cmap = d, _identity_coef_map(cfg.p + 1)
    except (ValidationError, DataValidationError):
        return [_failure(beta1, rep, t) for t in tags]

    needs_lasso = any(m in cfg.methods for m in ("ref", "orig", "qp"))
    fit = None
    lasso_error = False
    if needs_lasso:
        try:
            lmax = lambda_max(d_fit, family)
            grid = lambda_path(lmax, cfg.n_lambda, cfg.lambda_min_ratio)
            cv_seed = rngmod.derive_seed(cfg.seed, scenario, rep, rngmod.PURPOSE_CV)
            cv = cross_validate(d_fit, family, cfg.cv_folds, grid, cv_seed)
            stop = int(np.flatnonzero(grid == cv.lambda_min)[0])
            fit = fit_path(d_fit, family, grid[: stop + 1])[-1]
        except GlmDebiasError:
            lasso_error = True

    for m in cfg.methods:
        if m == "mle":
            try:
                xi_mle, theta = _newton_mle(d_fit, family)
                f = DebiasedFit(b_hat=xi_mle, theta_hat=theta, covariance=theta,
                                method="MLE", n=d_fit.n, xi_init=xi_mle)
                records.append(_record(beta1, rep, "MLE",
                                       f.destandardize(cmap), cfg.level))
            except (NumericalError, ValidationError):
                records.append(_failure(beta1, rep, "MLE"))
            continue
        if lasso_error or fit is None:
            if m == "qp":
                records.extend(_failure(beta1, rep, f"QP(mu={mu:g})")
                               for mu in cfg.mu_grid)
            else:
                records.append(_failure(beta1, rep,
                                        "REF-DS" if m == "ref" else "ORIG-DS"))
            continue
        if m == "ref":
            try:
                f = refine_debias(d_fit, family, fit)
                records.append(_record(beta1, rep, "REF-DS",
                                       f.destandardize(cmap), cfg.level))
            except NumericalError:
                records.append(_failure(beta1, rep, "REF-DS"))
        elif m == "orig":
            try:
                nw_seed = rngmod.derive_seed(cfg.seed, scenario, rep,
                                             rngmod.PURPOSE_NODEWISE)
                nw = nodewise_theta(d_fit, family, fit, nw_seed,
                                    n_folds=cfg.nodewise_folds,
                                    n_lambda=cfg.nodewise_n_lambda,
                                    lambda_min_ratio=cfg.nodewise_lambda_min_ratio)
                f = orig_debias(d_fit, family, fit, nw)
                records.append(_record(beta1, rep, "ORIG-DS",
                                       f.destandardize(cmap), cfg.level))
            except NumericalError:
                records.append(_failure(beta1, rep, "ORIG-DS"))
        elif m == "qp":
            for mu in cfg.mu_grid:
                tag = f"QP(mu={mu:g})"
                try:
                    f = qp_full_debias(d_fit, family, fit, mu)
                    records.append(_record(beta1, rep, tag,
                                           f.destandardize(cmap), cfg.level))
                except NumericalError:
                    records.append(_failure(beta1, rep, tag))
    return records


def _worker(args):
    cfg, scenario, rep = args
    return scenario, rep, run_replicate(cfg, scenario, rep)


def run_replicates(cfg: SimConfig, workers: int | None = None,
                   keep_details: bool = False) -> SimSummary:
    """Run the full grid-by-replicate study and aggregate.

    Replicates may run in parallel worker processes; every replicate
    writes into a preassigned slot and the reduction walks slots in a
    fixed order, so the summary is identical for any worker count.
    """
    n_scen = len(cfg.beta1_grid)
    slots: list[list[list[ReplicateRecord] | None]] = [
        [None] * cfg.n_replicates for _ in range(n_scen)
    ]
    tasks = [(cfg, s, r) for s in range(n_scen) for r in range(cfg.n_replicates)]
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(tasks) == 1:
        for t in tasks:
            s, r, recs = _worker(t)
            slots[s][r] = recs
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for s, r, recs in pool.map(_worker, tasks, chunksize=1):
                slots[s][r] = recs

    rows: list[SummaryRow] = []
    details: list[ReplicateRecord] = []
    tags = cfg.method_tags()
    for s in range(n_scen):
        beta1 = cfg.beta1_grid[s]
        per_method: dict[str, list[ReplicateRecord]] = {t: [] for t in tags}
        for r in range(cfg.n_replicates):
            recs = slots[s][r]
            for rec in recs:
                per_method[rec.method].append(rec)
                if keep_details:
                    details.append(rec)
        for tag in tags:
            rows.append(_aggregate(beta1, tag, per_method[tag]))
    return SimSummary(config=cfg, rows=tuple(rows),
                      details=tuple(details) if keep_details else ())


def _aggregate(beta1: float, tag: str, recs: list[ReplicateRecord]) -> SummaryRow:
    ok = [r for r in recs if not r.failed]
    n_failed = len(recs) - len(ok)
    if not ok:
        return SummaryRow(beta1=beta1, method=tag, mean_bias=None, coverage=None,
                          empirical_se=None, model_se=None, n_failed=n_failed)
    est = np.array([r.estimate for r in ok])
    ses = np.array([r.model_se for r in ok])
    cov = np.array([r.covered for r in ok], dtype=float)
    emp = float(np.std(est, ddof=1)) if est.size >= 2 else None
    return SummaryRow(
        beta1=beta1, method=tag,
        mean_bias=float(np.mean(est) - beta1),
        coverage=float(np.mean(cov)),
        empirical_se=emp,
        model_se=float(np.mean(ses)),
        n_failed=n_failed,
    )


def mu_sweep(cfg: SimConfig, mu_grid, workers: int | None = None,
             keep_details: bool = False) -> SimSummary:
    """Sweep the inverse-row slack mu over a grid that must include 0.

    Runs REF-DS alongside the QP estimator at every mu; the mu = 0 rows
    reproduce REF-DS exactly (same inverse, same covariance).
    """
    mu_grid = tuple(float(m) for m in mu_grid)
    if not mu_grid:
        raise ConfigError("mu_grid must be nonempty")
    if 0.0 not in mu_grid:
        raise ConfigError("mu_grid must include 0")
    sweep_cfg = replace(cfg, methods=("ref", "qp"), mu_grid=mu_grid)
    return run_replicates(sweep_cfg, workers=workers, keep_details=keep_details)


def format_float(x) -> str:
    """17-significant-digit decimal text (lossless float64 round trip)."""
    if x is None:
        return ""
    return format(float(x), ".17g")


def summary_csv_lines(summary: SimSummary) -> list[str]:
    lines = ["beta1,method,bias,coverage,emp_se,model_se,n_failed"]
    for row in summary.rows:
        lines.append(",".join([
            format_float(row.beta1),
            row.method,
            format_float(row.mean_bias),
            format_float(row.coverage),
            format_float(row.empirical_se),
            format_float(row.model_se),
            str(row.n_failed),
        ]))
    return lines


def write_summary_csv(summary: SimSummary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(summary_csv_lines(summary)) + "\n")
