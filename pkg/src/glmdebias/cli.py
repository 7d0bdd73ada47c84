"""Command line interface: fit, debias, ci, and simulate subcommands.

Exit codes: 0 on success, 2 on configuration or validation errors, 3 on
numerical failures (singular Hessian, solver non-convergence). Failures
raised by the library are reported as one JSON object on stderr so
harnesses can count them programmatically.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, families
from .data import CoefMap, load_csv, standardize
from .debias import nodewise_theta, orig_debias, qp_full_debias, refine_debias
from .errors import ConfigError, NumericalError, ValidationError
from .inference import wald_ci, wald_test
from .lasso import cross_validate, fit_lasso, fit_path, lambda_max, lambda_path
from .simulate import SimConfig, format_float, run_replicates, write_summary_csv


def _error_json(exc: Exception) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc)})


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(subcommand: str, config: dict, seed, input_path, started: float) -> dict:
    return {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "tool_version": __version__,
        "input_sha256": _sha256(input_path) if input_path else None,
        "duration_seconds": time.monotonic() - started,
    }


def _add_data_options(sub):
    sub.add_argument("--data", required=True, help="input CSV path")
    sub.add_argument("--response", required=True, help="response column name")
    sub.add_argument("--drop", default="", help="comma-separated columns to drop")
    sub.add_argument("--no-standardize", action="store_true",
                     help="fit on the raw covariate scale")
    sub.add_argument("--standardized", action="store_true",
                     help="report coefficients on the standardized scale")


def _add_fit_options(sub):
    sub.add_argument("--family", required=True,
                     choices=sorted(families.FAMILIES))
    sub.add_argument("--lambda", dest="lam", type=float, default=None,
                     help="penalty level (standardized scale)")
    sub.add_argument("--cv", type=int, default=None, metavar="K",
                     help="pick the penalty by K-fold cross-validation")
    sub.add_argument("--n-lambda", type=int, default=100)
    sub.add_argument("--lambda-min-ratio", type=float, default=1e-4)
    sub.add_argument("--seed", type=int, default=0)


def _load_dataset(args):
    drop = [c for c in args.drop.split(",") if c] if args.drop else []
    d = load_csv(args.data, args.response, drop)
    if args.no_standardize:
        k = d.p + 1
        return d, CoefMap(centers=np.zeros(k), scales=np.ones(k))
    return standardize(d)


def _resolve_fit(args, d, family):
    """Fit at --lambda, or run CV and refit down the path to lambda_min."""
    if (args.lam is None) == (args.cv is None):
        raise ConfigError("exactly one of --lambda or --cv is required")
    cv = None
    if args.lam is not None:
        fit = fit_lasso(d, family, args.lam)
    else:
        grid = lambda_path(lambda_max(d, family), args.n_lambda,
                           args.lambda_min_ratio)
        cv = cross_validate(d, family, args.cv, grid, args.seed)
        stop = int(np.flatnonzero(grid == cv.lambda_min)[0])
        fit = fit_path(d, family, grid[: stop + 1])[-1]
    return fit, cv


def _cv_block(cv):
    if cv is None:
        return None
    return {
        "lambda_grid": cv.lambda_grid.tolist(),
        "mean_deviance": cv.mean_deviance.tolist(),
        "se_deviance": cv.se_deviance.tolist(),
        "lambda_min": cv.lambda_min,
    }


def _cmd_fit(args) -> int:
    started = time.monotonic()
    d, cmap = _load_dataset(args)
    family = families.get_family(args.family)
    fit, cv = _resolve_fit(args, d, family)
    xi = fit.xi_hat if args.standardized else cmap.to_original_coefs(fit.xi_hat)
    out = {
        "schema": "glmdebias.fit.v1",
        "family": family.kind,
        "scale": "standardized" if args.standardized else "original",
        "col_names": list(d.col_names),
        "lambda": fit.lam,
        "xi_hat": xi.tolist(),
        "kkt_residual": fit.kkt_residual,
        "n_iter": fit.n_iter,
        "converged": fit.converged,
        "n": d.n,
        "cv": _cv_block(cv),
        "manifest": _manifest("fit", _args_config(args), args.seed,
                              args.data, started),
    }
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
    return 0


def _cmd_debias(args) -> int:
    started = time.monotonic()
    d, cmap = _load_dataset(args)
    family = families.get_family(args.family)
    fit, cv = _resolve_fit(args, d, family)
    if args.method == "ref":
        deb = refine_debias(d, family, fit)
        nodewise_lambdas = None
    elif args.method == "orig":
        nw = nodewise_theta(d, family, fit, args.seed, n_folds=args.nodewise_cv)
        deb = orig_debias(d, family, fit, nw)
        nodewise_lambdas = nw.lambdas.tolist()
    else:
        deb = qp_full_debias(d, family, fit, args.mu)
        nodewise_lambdas = None
    if not args.standardized:
        deb = deb.destandardize(cmap)
    out = {
        "schema": "glmdebias.debias_fit.v1",
        "family": family.kind,
        "method": deb.method,
        "scale": "standardized" if args.standardized else "original",
        "col_names": list(d.col_names),
        "n": deb.n,
        "lambda": fit.lam,
        "b_hat": deb.b_hat.tolist(),
        "se": deb.se.tolist(),
        "covariance": deb.covariance.tolist(),
        "xi_init": deb.xi_init.tolist(),
        "diagnostics": {
            "kkt_residual": fit.kkt_residual,
            "hessian_condition": deb.hessian_condition,
            "n_iter": fit.n_iter,
            "converged": fit.converged,
            "nodewise_lambdas": nodewise_lambdas,
        },
        "cv": _cv_block(cv),
        "manifest": _manifest("debias", _args_config(args), args.seed,
                              args.data, started),
    }
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
    return 0


def _fit_from_json(path):
    from .debias import DebiasedFit

    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if raw.get("schema") != "glmdebias.debias_fit.v1":
        raise ConfigError(
            f"{path}: expected a debias fit JSON (schema glmdebias.debias_fit.v1)"
        )
    fit = DebiasedFit(
        b_hat=np.asarray(raw["b_hat"], dtype=float),
        theta_hat=np.asarray(raw["covariance"], dtype=float),
        covariance=np.asarray(raw["covariance"], dtype=float),
        method=raw["method"],
        n=int(raw["n"]),
        xi_init=np.asarray(raw["xi_init"], dtype=float),
        hessian_condition=raw["diagnostics"].get("hessian_condition"),
    )
    return fit, list(raw["col_names"])


def _parse_contrast(text: str, k: int) -> np.ndarray:
    parts = [p for p in text.replace(";", ",").split(",") if p.strip() != ""]
    if len(parts) != k:
        raise ConfigError(f"contrast has {len(parts)} entries, the fit has {k}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise ConfigError(f"contrast is not numeric: {exc}") from None


def _cmd_ci(args) -> int:
    fit, names = _fit_from_json(args.fit)
    k = fit.b_hat.shape[0]
    if args.contrast is not None and args.coef is not None:
        raise ConfigError("give at most one of --contrast and --coef")
    if args.contrast is not None:
        alpha = _parse_contrast(args.contrast, k)
        targets = [("contrast", alpha)]
    elif args.coef is not None:
        try:
            j = int(args.coef)
        except ValueError:
            if args.coef not in names:
                raise ConfigError(f"unknown coefficient {args.coef!r}") from None
            j = names.index(args.coef)
        if not 0 <= j < k:
            raise ConfigError(f"coefficient index {j} outside 0..{k - 1}")
        alpha = np.zeros(k)
        alpha[j] = 1.0
        targets = [(names[j], alpha)]
    else:
        targets = []
        for j in range(k):
            alpha = np.zeros(k)
            alpha[j] = 1.0
            targets.append((names[j], alpha))

    lines = ["coef,est,se,lower,upper,p"]
    for label, alpha in targets:
        ci = wald_ci(fit, alpha, args.level)
        _, p = wald_test(fit, alpha, args.null)
        lines.append(",".join([
            label,
            format_float(ci.estimate), format_float(ci.se),
            format_float(ci.lower), format_float(ci.upper),
            format_float(p),
        ]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_simulate(args) -> int:
    started = time.monotonic()
    cfg_raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    cfg = SimConfig.from_dict(cfg_raw)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = run_replicates(cfg, workers=args.workers)
    write_summary_csv(summary, out_dir / "summary.csv")
    manifest = _manifest("simulate", cfg.to_dict(), cfg.seed, args.config, started)
    manifest["xi0_nonzero_positions"] = [list(x) for x in cfg.nonzero_pattern]
    manifest["workers"] = args.workers
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return 0


def _args_config(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glmdebias",
        description="Penalized GLM fitting and de-biased Wald inference",
    )
    parser.add_argument("--version", action="version",
                        version=f"glmdebias {__version__}")
    subs = parser.add_subparsers(dest="subcommand", required=True)

    p_fit = subs.add_parser("fit", help="penalized GLM fit")
    _add_data_options(p_fit)
    _add_fit_options(p_fit)
    p_fit.add_argument("--out", required=True, help="output JSON path")
    p_fit.set_defaults(func=_cmd_fit)

    p_deb = subs.add_parser("debias", help="de-biased fit with standard errors")
    _add_data_options(p_deb)
    _add_fit_options(p_deb)
    p_deb.add_argument("--method", required=True, choices=["ref", "orig", "qp"])
    p_deb.add_argument("--mu", type=float, default=0.0,
                       help="slack for the qp method")
    p_deb.add_argument("--nodewise-cv", type=int, default=5, metavar="K",
                       help="folds for the per-column node-wise penalties")
    p_deb.add_argument("--out", required=True, help="output JSON path")
    p_deb.set_defaults(func=_cmd_debias)

    p_ci = subs.add_parser("ci", help="confidence intervals from a debias fit")
    p_ci.add_argument("--fit", required=True, help="debias output JSON")
    p_ci.add_argument("--contrast", default=None,
                      help="comma-separated contrast vector (original scale)")
    p_ci.add_argument("--coef", default=None,
                      help="coefficient index or name (identity contrast)")
    p_ci.add_argument("--level", type=float, default=0.95)
    p_ci.add_argument("--null", type=float, default=0.0,
                      help="null value for the reported p-value")
    p_ci.add_argument("--out", default=None, help="output CSV path (default stdout)")
    p_ci.set_defaults(func=_cmd_ci)

    p_sim = subs.add_parser("simulate", help="Monte-Carlo coverage study")
    p_sim.add_argument("--config", required=True, help="study config JSON")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: logical cores)")
    p_sim.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValidationError as exc:
        sys.stderr.write(_error_json(exc) + "\n")
        return 2
    except NumericalError as exc:
        sys.stderr.write(_error_json(exc) + "\n")
        return 3
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        sys.stderr.write(_error_json(exc) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
