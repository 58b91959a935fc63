"""Forecast accuracy metrics and prediction-stream parity reports."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields

import numpy as np

from edgeboost.errors import DataError, DimensionError, ParameterError


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise DimensionError("empty input")
    return a, b


def r_squared(actual, predicted) -> float:
    """Coefficient of determination. Negative when worse than the mean."""
    y, yhat = _pair(actual, predicted)
    if y.size < 2:
        raise DimensionError("r_squared needs at least two samples")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yhat))):
        raise DataError("r_squared inputs must be finite")
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        raise DataError("actual values have zero variance; R^2 is undefined")
    return float(1.0 - np.sum((y - yhat) ** 2) / ss_tot)


def capacity_mape(actual, predicted, capacity: float) -> float:
    """Root-mean-square error divided by ``capacity``, in percent (0 is perfect)."""
    if not capacity > 0:
        raise ParameterError(f"capacity must be positive, got {capacity!r}")
    y, yhat = _pair(actual, predicted)
    return float(np.sqrt(np.mean(((y - yhat) / capacity) ** 2)) * 100.0)


def rmse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


@dataclass(frozen=True)
class MetricsReport:
    r2: float | None
    cap_mape_pct: float
    rmse: float
    max_abs_err: float
    n: int
    capacity: float

    def as_text(self) -> str:
        r2 = "n/a" if self.r2 is None else f"{self.r2:.6f}"
        rows = [
            ("n", str(self.n)),
            ("capacity", f"{self.capacity:g}"),
            ("R2", r2),
            ("cap_MAPE_%", f"{self.cap_mape_pct:.10f}"),
            ("RMSE", f"{self.rmse:.15f}"),
            ("max_abs_err", f"{self.max_abs_err:.15f}"),
        ]
        return "\n".join(f"{k:<12} {v}" for k, v in rows) + "\n"

    def as_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = [f.name for f in fields(self)]
        w.writerow(names)
        values = asdict(self)
        w.writerow(["" if values[k] is None else repr(values[k]) for k in names])
        return buf.getvalue()


def evaluate(actual, predicted, capacity: float) -> MetricsReport:
    """Accuracy report of forecasts against measurements."""
    y, yhat = _pair(actual, predicted)
    return MetricsReport(
        r2=r_squared(y, yhat),
        cap_mape_pct=capacity_mape(y, yhat, capacity),
        rmse=rmse(y, yhat),
        max_abs_err=float(np.max(np.abs(y - yhat))),
        n=int(y.size),
        capacity=float(capacity),
    )


def parity_report(reference, candidate, capacity: float) -> MetricsReport:
    """Compare two prediction streams of the same model, e.g. PC vs. device.

    ``r2`` is left as ``None`` when the reference stream is constant.
    """
    ref, cand = _pair(reference, candidate)
    try:
        r2 = r_squared(ref, cand)
    except (DataError, DimensionError):
        r2 = None
    return MetricsReport(
        r2=r2,
        cap_mape_pct=capacity_mape(ref, cand, capacity),
        rmse=rmse(ref, cand),
        max_abs_err=float(np.max(np.abs(ref - cand))),
        n=int(ref.size),
        capacity=float(capacity),
    )


def read_stream(path) -> np.ndarray:
    """One-column CSV with a header row; returns the values as float64."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != 1:
            raise DataError(f"{path}:{lineno}: expected one column, got {len(row)}")
        try:
            values.append(float(row[0]))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return np.array(values, dtype=np.float64)


def write_stream(values, path, header: str = "prediction") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for v in np.asarray(values, dtype=np.float64).tolist():
            fh.write(repr(v) + "\n")


__all__ = [
    "MetricsReport",
    "capacity_mape",
    "evaluate",
    "parity_report",
    "r_squared",
    "read_stream",
    "rmse",
    "write_stream",
]
