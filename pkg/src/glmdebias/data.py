"""Dataset construction: CSV ingestion, dummy coding, centering and scaling.

A :class:`Dataset` holds the response and the full design matrix whose
first column is the intercept. Categorical CSV columns are expanded into
k-1 indicator columns against the first level observed in the file, so a
k-level factor is represented without redundancy. Standardization centers
every non-intercept column and scales it to unit standard deviation using
the population convention (denominator n); the :class:`CoefMap` returned
alongside carries the affine map back to the input scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataValidationError

INTERCEPT_NAME = "(intercept)"

# Tolerances used to certify a standardized design (population-SD convention).
_MEAN_TOL = 1e-10
_SD_TOL = 1e-8


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Response vector and intercept-first design matrix.

    ``centers``/``scales`` record the affine transform applied to each
    column relative to the data the dataset was built from (identity for
    a freshly constructed dataset, and always identity for the intercept).
    """

    y: np.ndarray
    X: np.ndarray
    col_names: tuple[str, ...]
    centers: np.ndarray = None
    scales: np.ndarray = None

    def __post_init__(self):
        y = _readonly(np.asarray(self.y, dtype=float).ravel())
        X = _readonly(np.asarray(self.X, dtype=float))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        k = X.shape[1] if X.ndim == 2 else 0
        centers = np.zeros(k) if self.centers is None else np.asarray(self.centers, dtype=float)
        scales = np.ones(k) if self.scales is None else np.asarray(self.scales, dtype=float)
        object.__setattr__(self, "centers", _readonly(centers))
        object.__setattr__(self, "scales", _readonly(scales))
        object.__setattr__(self, "col_names", tuple(self.col_names))
        self._validate()

    def _validate(self):
        if self.X.ndim != 2:
            raise DataValidationError(f"design matrix must be 2-d; got shape {self.X.shape}")
        n, k = self.X.shape
        if self.y.shape[0] != n:
            raise DataValidationError(
                f"response length {self.y.shape[0]} does not match {n} design rows"
            )
        if n < 2 or k < 2:
            raise DataValidationError(f"need n >= 2 and p >= 1; got n={n}, p={k - 1}")
        if len(self.col_names) != k:
            raise DataValidationError(
                f"{len(self.col_names)} column names for {k} columns"
            )
        if not np.all(np.isfinite(self.y)):
            raise DataValidationError("response contains non-finite values")
        if not np.all(np.isfinite(self.X)):
            raise DataValidationError("design matrix contains non-finite values")
        if not np.all(self.X[:, 0] == 1.0):
            raise DataValidationError("first design column must be the all-ones intercept")
        spans = np.ptp(self.X[:, 1:], axis=0)
        if np.any(spans == 0.0):
            j = int(np.argmax(spans == 0.0)) + 1
            raise DataValidationError(f"column {self.col_names[j]!r} is constant")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1] - 1

    @property
    def standardization(self) -> tuple[tuple[float, float], ...]:
        """Per-column (center, scale) records; (0, 1) for the intercept."""
        return tuple(zip(self.centers.tolist(), self.scales.tolist()))


@dataclass(frozen=True)
class CoefMap:
    """Affine back-transform from standardized-scale fits to the input scale.

    If ``A`` denotes :attr:`transform`, coefficients map as
    ``xi_orig = A @ xi_std``, covariance-type matrices as ``A @ C @ A.T``,
    and contrast vectors stated on the original scale map into the
    standardized coordinates as ``A.T @ alpha``.
    """

    centers: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "centers", _readonly(self.centers))
        object.__setattr__(self, "scales", _readonly(self.scales))

    @property
    def transform(self) -> np.ndarray:
        k = self.centers.shape[0]
        a = np.zeros((k, k))
        a[0, 0] = 1.0
        for j in range(1, k):
            a[j, j] = 1.0 / self.scales[j]
            a[0, j] = -self.centers[j] / self.scales[j]
        return a

    def to_original_coefs(self, xi: np.ndarray) -> np.ndarray:
        return self.transform @ np.asarray(xi, dtype=float)

    def to_original_cov(self, cov: np.ndarray) -> np.ndarray:
        a = self.transform
        return a @ np.asarray(cov, dtype=float) @ a.T

    def to_standardized_contrast(self, alpha: np.ndarray) -> np.ndarray:
        return self.transform.T @ np.asarray(alpha, dtype=float)


def from_arrays(y, covariates, names=None) -> Dataset:
    """Build a Dataset from a response and a covariate matrix (no intercept)."""
    covariates = np.asarray(covariates, dtype=float)
    if covariates.ndim != 2:
        raise DataValidationError(f"covariates must be 2-d; got shape {covariates.shape}")
    n, p = covariates.shape
    if names is None:
        names = [f"x{j + 1}" for j in range(p)]
    X = np.empty((n, p + 1))
    X[:, 0] = 1.0
    X[:, 1:] = covariates
    return Dataset(y=np.asarray(y, dtype=float), X=X,
                   col_names=(INTERCEPT_NAME, *names))


def _parse_float(text: str) -> float | None:
    try:
        v = float(text)
    except ValueError:
        return None
    return v


def load_csv(path, response_col: str, drop_cols=()) -> Dataset:
    """Load an RFC-4180 CSV (UTF-8, header row required) into a Dataset.

    Non-numeric columns are expanded into k-1 indicator columns named
    ``col=level`` against the first level observed in file order. Missing
    cells (empty, or numeric text that parses non-finite) raise an error
    naming the data row and column.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataValidationError(f"{path}: empty file; a header row is required")
        rows = [row for row in reader if row]
    header = [h.strip() for h in header]
    if response_col not in header:
        raise DataValidationError(f"response column {response_col!r} not in header {header}")
    drop = set(drop_cols)
    unknown = drop - set(header)
    if unknown:
        raise DataValidationError(f"--drop names absent from header: {sorted(unknown)}")
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataValidationError(
                f"{path}: data row {i + 1} has {len(row)} fields, header has {len(header)}"
            )
    if not rows:
        raise DataValidationError(f"{path}: no data rows")

    columns = {name: [row[j].strip() for row in rows] for j, name in enumerate(header)}

    def parse_numeric(name, required):
        values = columns[name]
        out = np.empty(len(values))
        for i, cell in enumerate(values):
            if cell == "":
                raise DataValidationError(
                    f"missing value at data row {i + 1}, column {name!r}"
                )
            v = _parse_float(cell)
            if v is None:
                if required:
                    raise DataValidationError(
                        f"column {name!r} must be numeric; data row {i + 1} "
                        f"holds {cell!r}"
                    )
                return None
            if not np.isfinite(v):
                raise DataValidationError(
                    f"non-finite value at data row {i + 1}, column {name!r}"
                )
            out[i] = v
        return out

    y = parse_numeric(response_col, required=True)

    cov_cols: list[np.ndarray] = []
    cov_names: list[str] = []
    for name in header:
        if name == response_col or name in drop:
            continue
        numeric = parse_numeric(name, required=False)
        if numeric is not None:
            cov_cols.append(numeric)
            cov_names.append(name)
            continue
        # Categorical: k-1 dummies against the first-observed level.
        values = columns[name]
        levels: list[str] = []
        for i, cell in enumerate(values):
            if cell == "":
                raise DataValidationError(
                    f"missing value at data row {i + 1}, column {name!r}"
                )
            if cell not in levels:
                levels.append(cell)
        if len(levels) < 2:
            raise DataValidationError(
                f"categorical column {name!r} has a single level {levels[0]!r}"
            )
        for level in levels[1:]:
            cov_cols.append(np.array([1.0 if c == level else 0.0 for c in values]))
            cov_names.append(f"{name}={level}")

    if not cov_cols:
        raise DataValidationError("no covariate columns remain after drops")
    return from_arrays(y, np.column_stack(cov_cols), cov_names)


def standardize(d: Dataset) -> tuple[Dataset, CoefMap]:
    """Center and scale every non-intercept column to mean 0, population SD 1.

    Returns the standardized dataset and the CoefMap back to the scale of
    ``d``. The dataset's cumulative center/scale records are composed so
    they always refer to the data the original dataset was built from.
    """
    X = np.array(d.X, copy=True)
    k = X.shape[1]
    centers = np.zeros(k)
    scales = np.ones(k)
    for j in range(1, k):
        c = float(np.mean(X[:, j]))
        s = float(np.std(X[:, j]))  # population convention, denominator n
        if s == 0.0:
            raise DataValidationError(f"column {d.col_names[j]!r} has zero variance")
        X[:, j] = (X[:, j] - c) / s
        centers[j] = c
        scales[j] = s

    mean_err = np.max(np.abs(X[:, 1:].mean(axis=0)))
    sd_err = np.max(np.abs(X[:, 1:].std(axis=0) - 1.0))
    if mean_err >= _MEAN_TOL or sd_err >= _SD_TOL:
        raise DataValidationError(
            f"standardization failed to certify: |mean| {mean_err:.2e}, "
            f"|sd-1| {sd_err:.2e}"
        )

    # Compose with any transform already recorded on d: x_new = (x_root - C)/S.
    composed_centers = d.centers + centers * d.scales
    composed_scales = d.scales * scales
    out = Dataset(y=d.y, X=X, col_names=d.col_names,
                  centers=composed_centers, scales=composed_scales)
    return out, CoefMap(centers=centers, scales=scales)
