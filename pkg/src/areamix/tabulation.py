"""Tabulation ingest and the log-scale / count-scale bridge.

A tabulation is a complete rectangle of (area, cell) direct estimates with
design-based standard errors.  Rows are normalised to area-major order:
areas sorted lexicographically, cells 1..L within each area, so the flat
index of (area i, cell s) is i * L + (s - 1).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DomainError,
    DuplicateKeyError,
    InsufficientDataError,
    SchemaError,
    ShapeError,
)
from .loess import LoessSmoother, loess_fit

DEFAULT_COLUMNS = {
    "state": "state",
    "county": "county",
    "order": "order",
    "count": "count",
    "std_err": "std_err",
    "sample_size": "sample_size",
}

# Smoothed variances are clipped away from zero so every entry stays usable
# as a Gaussian sampling variance.
IMPUTATION_FLOOR = 1e-6


@dataclass(frozen=True)
class TabulationTable:
    """Direct estimates for every (area, cell) pair, area-major."""

    areas: tuple[str, ...]
    n_cells: int
    estimates: np.ndarray
    std_errors: np.ndarray
    sample_sizes: np.ndarray | None = None

    @property
    def n_rows(self) -> int:
        return len(self.areas) * self.n_cells

    def index_of(self, area: str, cell: int) -> int:
        try:
            i = self.areas.index(area)
        except ValueError:
            raise KeyError(f"unknown area {area!r}") from None
        if not 1 <= cell <= self.n_cells:
            raise KeyError(f"cell {cell} outside 1..{self.n_cells}")
        return i * self.n_cells + (cell - 1)

    def keys(self) -> list[tuple[str, int]]:
        return [(a, s) for a in self.areas for s in range(1, self.n_cells + 1)]


@dataclass(frozen=True)
class LogTable:
    """Log-scale working data: z = log(estimate + 1) with variances d.

    Entries of ``d`` are NaN where no usable sampling variance exists; they
    must be imputed (see gvf_impute) before model fitting.
    """

    areas: tuple[str, ...]
    n_cells: int
    z: np.ndarray
    d: np.ndarray
    estimates: np.ndarray
    std_errors: np.ndarray
    sample_sizes: np.ndarray | None = None
    imputed: np.ndarray | None = None

    @property
    def n_rows(self) -> int:
        return len(self.areas) * self.n_cells

    def index_of(self, area: str, cell: int) -> int:
        return TabulationTable.index_of(self, area, cell)  # type: ignore[arg-type]

    def keys(self) -> list[tuple[str, int]]:
        return [(a, s) for a in self.areas for s in range(1, self.n_cells + 1)]


def load_tabulation(
    path: str | Path, columns: Mapping[str, str] | None = None
) -> TabulationTable:
    """Read a tabulation CSV.

    Parameters
    ----------
    path : str or Path
        CSV with one row per (area, cell).  Required columns: state,
        county, order (the 1-based cell index), count, std_err.  A
        sample_size column is picked up when present.
    columns : mapping, optional
        Overrides for the physical column names, keyed by the logical
        names above.

    The area identifier is the concatenation of the state and county
    codes, kept as strings so leading zeros survive.
    """
    names = dict(DEFAULT_COLUMNS)
    if columns:
        unknown = set(columns) - set(DEFAULT_COLUMNS)
        if unknown:
            raise SchemaError(f"unknown column roles: {sorted(unknown)}")
        names.update(columns)

    rows: dict[tuple[str, int], tuple[float, float, float | None]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        header = [h.strip() for h in reader.fieldnames]
        required = ["state", "county", "order", "count", "std_err"]
        for role in required:
            if names[role] not in header:
                raise SchemaError(f"{path}: missing column {names[role]!r}")
        has_n = names["sample_size"] in header
        for lineno, raw in enumerate(reader, start=2):
            rec = {k.strip(): (v.strip() if v is not None else "") for k, v in raw.items()}
            state = rec[names["state"]]
            county = rec[names["county"]]
            if not state or not county:
                raise SchemaError(f"{path}:{lineno}: blank state or county code")
            area = state + county
            try:
                cell = int(rec[names["order"]])
            except ValueError:
                raise SchemaError(
                    f"{path}:{lineno}: cell index {rec[names['order']]!r} is not an integer"
                ) from None
            if cell < 1:
                raise SchemaError(f"{path}:{lineno}: cell index must be >= 1")
            try:
                est = float(rec[names["count"]])
                se = float(rec[names["std_err"]])
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: non-numeric count or std_err") from None
            if not (np.isfinite(est) and np.isfinite(se)):
                raise DomainError(f"{path}:{lineno}: count and std_err must be finite")
            if est < 0 or se < 0:
                raise DomainError(f"{path}:{lineno}: negative count or std_err")
            nsz: float | None = None
            if has_n:
                try:
                    nsz = float(rec[names["sample_size"]])
                except ValueError:
                    raise SchemaError(f"{path}:{lineno}: non-numeric sample_size") from None
                if not np.isfinite(nsz) or nsz <= 0:
                    raise DomainError(f"{path}:{lineno}: sample_size must be positive")
            key = (area, cell)
            if key in rows:
                raise DuplicateKeyError(f"{path}: duplicate entry for area {area}, cell {cell}")
            rows[key] = (est, se, nsz)

    if not rows:
        raise SchemaError(f"{path}: no data rows")

    areas = tuple(sorted({a for a, _ in rows}))
    n_cells = max(c for _, c in rows)
    for a in areas:
        cells = {c for (aa, c) in rows if aa == a}
        if cells != set(range(1, n_cells + 1)):
            missing = sorted(set(range(1, n_cells + 1)) - cells)
            raise SchemaError(f"{path}: area {a} lacks cells {missing}")

    n = len(areas) * n_cells
    est = np.empty(n)
    se = np.empty(n)
    nsz_arr = np.empty(n) if has_n else None
    for i, a in enumerate(areas):
        for s in range(1, n_cells + 1):
            e, sdev, ns = rows[(a, s)]
            flat = i * n_cells + (s - 1)
            est[flat] = e
            se[flat] = sdev
            if nsz_arr is not None:
                nsz_arr[flat] = ns
    return TabulationTable(
        areas=areas,
        n_cells=n_cells,
        estimates=est,
        std_errors=se,
        sample_sizes=nsz_arr,
    )


def delta_method_variance(estimate, std_err):
    """Log-scale sampling variance se^2 / (estimate + 1)^2.

    A result of exactly 0 (which happens when std_err is 0) carries no
    usable information and is treated as undefined downstream.
    """
    est = np.asarray(estimate, dtype=float)
    se = np.asarray(std_err, dtype=float)
    if np.any(est < 0) or np.any(se < 0):
        raise DomainError("estimates and standard errors must be nonnegative")
    out = (se / (est + 1.0)) ** 2
    if out.ndim == 0:
        return float(out)
    return out


def log_transform(table: TabulationTable) -> LogTable:
    """Move a tabulation to the log scale: z = log(estimate + 1).

    Variances come from the delta method.  Entries are left undefined
    (NaN) wherever the direct estimate is zero or the delta-method value
    collapses to zero; those positions need gvf_impute before modelling.
    """
    est = table.estimates
    z = np.log1p(est)
    d = delta_method_variance(est, table.std_errors)
    d = np.where((est > 0) & (d > 0), d, np.nan)
    return LogTable(
        areas=table.areas,
        n_cells=table.n_cells,
        z=z,
        d=d,
        estimates=est.copy(),
        std_errors=table.std_errors.copy(),
        sample_sizes=None if table.sample_sizes is None else table.sample_sizes.copy(),
    )


def gvf_impute(
    log_table: LogTable,
    predictor: np.ndarray | None = None,
    span: float = 0.75,
) -> LogTable:
    """Fill undefined log-scale variances by smoothing the defined ones.

    A local-linear tricube smoother of variance on a size predictor plays
    the role of a generalised variance function.  The predictor defaults
    to log sample size when the table has one, otherwise to z itself.
    Smoothed values are clipped below at IMPUTATION_FLOOR.
    """
    d = log_table.d
    defined = np.isfinite(d)
    n_defined = int(defined.sum())
    if n_defined == 0:
        raise InsufficientDataError("all variances are undefined; nothing to smooth on")
    if predictor is None:
        if log_table.sample_sizes is not None:
            predictor = np.log(log_table.sample_sizes)
        else:
            predictor = log_table.z
    predictor = np.asarray(predictor, dtype=float).ravel()
    if predictor.shape != d.shape:
        raise ShapeError("predictor must have one value per table row")
    if n_defined < 5:
        raise InsufficientDataError(
            f"need at least 5 defined variances to smooth, got {n_defined}"
        )
    smoother = loess_fit(predictor[defined], d[defined], span=span)
    filled = d.copy()
    if not defined.all():
        pred = smoother(predictor[~defined])
        filled[~defined] = np.maximum(np.atleast_1d(pred), IMPUTATION_FLOOR)
    return LogTable(
        areas=log_table.areas,
        n_cells=log_table.n_cells,
        z=log_table.z.copy(),
        d=filled,
        estimates=log_table.estimates.copy(),
        std_errors=log_table.std_errors.copy(),
        sample_sizes=None
        if log_table.sample_sizes is None
        else log_table.sample_sizes.copy(),
        imputed=~defined,
    )


def gvf_smoother(
    log_table: LogTable,
    predictor: np.ndarray | None = None,
    span: float = 0.75,
) -> LoessSmoother:
    """The smoother gvf_impute would use, exposed for inspection."""
    d = log_table.d
    defined = np.isfinite(d)
    if int(defined.sum()) < 5:
        raise InsufficientDataError("need at least 5 defined variances to smooth")
    if predictor is None:
        if log_table.sample_sizes is not None:
            predictor = np.log(log_table.sample_sizes)
        else:
            predictor = log_table.z
    predictor = np.asarray(predictor, dtype=float).ravel()
    return loess_fit(predictor[defined], d[defined], span=span)


@dataclass(frozen=True)
class CountSummary:
    """Count-scale posterior summaries derived from log-scale draws."""

    mean: np.ndarray
    sd: np.ndarray
    cv: np.ndarray


def back_transform(draws) -> CountSummary:
    """Summarise log-scale draws on the count scale via y* = exp(y) - 1.

    ``draws`` is (T, n): T retained draws for n entries; a 1-D vector is
    treated as a single draw.  The inverse decodes exactly on encoded
    integer counts: a draw that is bit-for-bit log(k + 1) for a
    nonnegative integer k maps back to k with no rounding residue.
    Standard deviations use the n-1 denominator (a single draw gives 0),
    and CV = sd / mean is left undefined where the mean is 0.
    """
    arr = np.asarray(draws, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError("draws must be a nonempty (T, n) matrix")
    if not np.all(np.isfinite(arr)):
        raise DomainError("draws must be finite")
    counts = np.expm1(arr)
    nearest = np.rint(counts)
    snap = (nearest >= 0) & (np.log1p(np.abs(nearest)) == arr)
    counts = np.where(snap, nearest, counts)
    mean = counts.mean(axis=0)
    if counts.shape[0] == 1:
        sd = np.zeros_like(mean)
    else:
        sd = counts.std(axis=0, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.where(mean != 0.0, sd / mean, np.nan)
    return CountSummary(mean=mean, sd=sd, cv=cv)


@dataclass(frozen=True)
class PredictionSummary:
    """Per-entry posterior summaries on both scales."""

    log_mean: np.ndarray
    log_sd: np.ndarray
    count: CountSummary


def predict_summaries(draws) -> PredictionSummary:
    """Posterior mean/sd of log-scale predictions plus count-scale summaries.

    Accepts either a (T, n) array of retained y draws or any fit result
    exposing a ``.y`` attribute.
    """
    arr = getattr(draws, "y", draws)
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.size == 0:
        raise ShapeError("no retained draws to summarise")
    log_mean = arr.mean(axis=0)
    if arr.shape[0] == 1:
        log_sd = np.zeros_like(log_mean)
    else:
        log_sd = arr.std(axis=0, ddof=1)
    return PredictionSummary(log_mean=log_mean, log_sd=log_sd, count=back_transform(arr))


PREDICTION_COLUMNS = [
    "area_id",
    "cell_index",
    "pred_log_mean",
    "pred_log_sd",
    "pred_count_mean",
    "pred_count_sd",
    "cv",
    "direct_count",
    "direct_se",
]


def write_prediction_csv(path: str | Path, log_table: LogTable, summary: PredictionSummary) -> None:
    """Write per-entry predictions next to the direct estimates."""
    from .util import format_value

    n = log_table.n_rows
    for name, arr in (
        ("log_mean", summary.log_mean),
        ("count mean", summary.count.mean),
    ):
        if arr.shape != (n,):
            raise ShapeError(f"summary {name} has {arr.shape}, table has {n} rows")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTION_COLUMNS)
        for flat, (area, cell) in enumerate(log_table.keys()):
            writer.writerow(
                [
                    area,
                    cell,
                    format_value(summary.log_mean[flat]),
                    format_value(summary.log_sd[flat]),
                    format_value(summary.count.mean[flat]),
                    format_value(summary.count.sd[flat]),
                    format_value(summary.count.cv[flat]),
                    format_value(log_table.estimates[flat]),
                    format_value(log_table.std_errors[flat]),
                ]
            )
