"""Smart-meter CSV ingestion, cleaning, gap imputation and chronological split."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from edgeboost.errors import DataError

TARGETS = ("active", "reactive")
INTERVAL_OF_DAY = "interval_of_day"
INTERVAL_MINUTES = 15

DEFAULT_FEATURES = ("va", "vb", "vc", "ia", "ib", "ic", "pf",
                    "p_set_prev", "q_set_prev", INTERVAL_OF_DAY)


@dataclass(frozen=True)
class Schema:
    """Maps CSV columns to roles and carries the inverter's rating."""

    capacity: float
    features: tuple[str, ...] = DEFAULT_FEATURES
    timestamp: str = "timestamp"
    active: str = "p"
    reactive: str = "q"
    inverter: str = ""
    nominal_voltage: float = 220.0
    voltage_columns: tuple[str, ...] = ("va", "vb", "vc")
    power_factor_column: str | None = "pf"

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        object.__setattr__(self, "voltage_columns", tuple(self.voltage_columns))
        if not self.features:
            raise DataError("schema declares no feature columns")
        if len(set(self.features)) != len(self.features):
            raise DataError("schema lists a feature column twice")
        leaked = {self.active, self.reactive} & set(self.features)
        if leaked:
            raise DataError(f"target columns {sorted(leaked)} cannot be features")
        if not (isinstance(self.capacity, (int, float)) and self.capacity > 0):
            raise DataError(f"capacity must be a positive number, got {self.capacity!r}")

    def target_column(self, target: str) -> str:
        if target not in TARGETS:
            raise DataError(f"target must be one of {TARGETS}, got {target!r}")
        return self.active if target == "active" else self.reactive

    @classmethod
    def from_dict(cls, doc: dict) -> "Schema":
        """Build from the JSON layout::

            {"timestamp": "timestamp",
             "columns": {"va": "feature", ..., "p": "active", "q": "reactive",
                         "note": "ignore"},
             "capacity": 15.0, "inverter": "inv1"}

        Feature order follows the ``columns`` mapping.
        """
        try:
            roles = doc["columns"]
            capacity = float(doc["capacity"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"schema needs 'columns' and a numeric 'capacity': {exc}") from exc
        features, active, reactive = [], None, None
        for name, role in roles.items():
            if role == "feature":
                features.append(name)
            elif role == "active":
                active = name
            elif role == "reactive":
                reactive = name
            elif role != "ignore":
                raise DataError(f"column {name!r}: unknown role {role!r}")
        if active is None or reactive is None:
            raise DataError("schema must assign both the 'active' and 'reactive' roles")
        kwargs = {}
        for key in ("timestamp", "inverter", "nominal_voltage", "voltage_columns",
                    "power_factor_column"):
            if key in doc:
                kwargs[key] = doc[key]
        return cls(capacity=capacity, features=tuple(features), active=active,
                   reactive=reactive, **kwargs)

    def to_dict(self) -> dict:
        columns = {name: "feature" for name in self.features}
        columns[self.active] = "active"
        columns[self.reactive] = "reactive"
        return {
            "timestamp": self.timestamp,
            "columns": columns,
            "capacity": self.capacity,
            "inverter": self.inverter,
            "nominal_voltage": self.nominal_voltage,
            "voltage_columns": list(self.voltage_columns),
            "power_factor_column": self.power_factor_column,
        }


def load_schema(path) -> Schema:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON: {exc}") from exc
    return Schema.from_dict(doc)


def save_schema(schema: Schema, path) -> None:
    with open(path, "w") as fh:
        json.dump(schema.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class MeasurementRecord:
    timestamp: datetime
    va: float
    vb: float
    vc: float
    ia: float
    ib: float
    ic: float
    pf: float
    p_set_prev: float
    q_set_prev: float
    p: float
    q: float
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Dataset:
    """Column-oriented measurements of one inverter, ordered by time.

    Missing cells are NaN. ``lines`` holds the source CSV line of each row.
    """

    schema: Schema
    timestamps: np.ndarray  # datetime64[s]
    columns: dict
    lines: np.ndarray
    target: str = "active"

    def __post_init__(self):
        self.schema.target_column(self.target)
        n = self.timestamps.shape[0]
        for name, col in self.columns.items():
            if col.shape != (n,):
                raise DataError(f"column {name!r} has {col.shape[0]} rows, expected {n}")

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    @property
    def capacity(self) -> float:
        return self.schema.capacity

    @property
    def feature_columns(self) -> tuple[str, ...]:
        return self.schema.features

    @property
    def target_column(self) -> str:
        return self.schema.target_column(self.target)

    @property
    def data_columns(self) -> tuple[str, ...]:
        """Columns read from the file (everything except derived features)."""
        return tuple(c for c in self.columns if c != INTERVAL_OF_DAY)

    def with_target(self, target: str) -> "Dataset":
        return replace(self, target=target)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(self, timestamps=self.timestamps[idx],
                       columns={k: v[idx] for k, v in self.columns.items()},
                       lines=self.lines[idx])

    def feature_matrix(self) -> np.ndarray:
        return np.column_stack([self.columns[c] for c in self.feature_columns]).astype(np.float64)

    def target_vector(self) -> np.ndarray:
        return self.columns[self.target_column].copy()

    def usable_mask(self) -> np.ndarray:
        X = self.feature_matrix()
        return np.all(np.isfinite(X), axis=1) & np.isfinite(self.columns[self.target_column])

    def matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Feature matrix and target vector restricted to complete rows."""
        mask = self.usable_mask()
        return self.feature_matrix()[mask], self.target_vector()[mask]

    def record(self, i: int) -> MeasurementRecord:
        named = MeasurementRecord.__dataclass_fields__
        base = {}
        extra = {}
        for name, col in self.columns.items():
            value = float(col[i])
            if name in named:
                base[name] = value
            else:
                extra[name] = value
        for name in ("va", "vb", "vc", "ia", "ib", "ic", "pf", "p_set_prev", "q_set_prev"):
            base.setdefault(name, math.nan)
        base["p"] = float(self.columns[self.schema.active][i])
        base["q"] = float(self.columns[self.schema.reactive][i])
        ts = self.timestamps[i].astype("datetime64[s]").item()
        return MeasurementRecord(timestamp=ts, extra=extra, **base)


def _parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return ts


def _interval_of_day(ts: np.ndarray) -> np.ndarray:
    seconds = (ts - ts.astype("datetime64[D]")).astype("timedelta64[s]").astype(np.int64)
    return (seconds // (60 * INTERVAL_MINUTES)).astype(np.float64)


def load_csv(path, schema: Schema, target: str = "active") -> Dataset:
    """Parse a measurement CSV into a time-sorted :class:`Dataset`.

    Blank cells become NaN. Rows that fail to parse and duplicate timestamps
    raise :class:`DataError` naming the offending lines.
    """
    wanted = [c for c in schema.features if c != INTERVAL_OF_DAY]
    wanted += [schema.active, schema.reactive]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [c for c in [schema.timestamp] + wanted if c not in header]
        if missing:
            raise DataError(f"{path}: missing mandatory columns {missing}")
        pos = {name: header.index(name) for name in [schema.timestamp] + wanted}

        stamps, lines, errors = [], [], []
        values = {c: [] for c in wanted}
        for row in reader:
            lineno = reader.line_num
            if not row or not "".join(row).strip():
                continue
            if len(row) != len(header):
                errors.append(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
                continue
            try:
                ts = _parse_timestamp(row[pos[schema.timestamp]])
                parsed = {}
                for c in wanted:
                    cell = row[pos[c]].strip()
                    parsed[c] = float(cell) if cell else math.nan
            except ValueError as exc:
                errors.append(f"line {lineno}: {exc}")
                continue
            stamps.append(ts)
            lines.append(lineno)
            for c in wanted:
                values[c].append(parsed[c])
    if errors:
        shown = "; ".join(errors[:10])
        more = f" (and {len(errors) - 10} more)" if len(errors) > 10 else ""
        raise DataError(f"{path}: {len(errors)} unparseable rows: {shown}{more}")
    if not stamps:
        raise DataError(f"{path}: no data rows")

    ts = np.array(stamps, dtype="datetime64[s]")
    line_arr = np.array(lines, dtype=np.int64)
    order = np.argsort(ts, kind="stable")
    ts, line_arr = ts[order], line_arr[order]
    dup = np.flatnonzero(ts[1:] == ts[:-1])
    if dup.size:
        i = dup[0]
        raise DataError(f"{path}: duplicate timestamp {ts[i + 1]} on line {line_arr[i + 1]} "
                        f"(first seen on line {line_arr[i]})")
    columns = {c: np.array(values[c], dtype=np.float64)[order] for c in wanted}
    if INTERVAL_OF_DAY in schema.features:
        columns[INTERVAL_OF_DAY] = _interval_of_day(ts)
    return Dataset(schema, ts, columns, line_arr, target)


def write_csv(dataset: Dataset, path) -> None:
    names = list(dataset.data_columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([dataset.schema.timestamp] + names)
        for i in range(len(dataset)):
            ts = dataset.timestamps[i].astype("datetime64[s]").item().isoformat()
            cells = [dataset.columns[c][i] for c in names]
            w.writerow([ts] + ["" if math.isnan(v) else repr(float(v)) for v in cells])


@dataclass(frozen=True)
class CleaningRules:
    """Inclusive plausibility bounds per column; unlisted columns only need to be finite."""

    bounds: dict

    @classmethod
    def defaults(cls, schema: Schema) -> "CleaningRules":
        bounds = {c: (0.0, 1.5 * schema.nominal_voltage) for c in schema.voltage_columns}
        bounds[schema.active] = (-schema.capacity, schema.capacity)
        bounds[schema.reactive] = (-schema.capacity, schema.capacity)
        if schema.power_factor_column:
            bounds[schema.power_factor_column] = (-1.0, 1.0)
        return cls(bounds)


@dataclass(frozen=True)
class CleanAction:
    line: int
    timestamp: str
    column: str | None
    value: float | None
    action: str

    def __str__(self):
        where = f"line {self.line} ({self.timestamp})"
        if self.column is None:
            return f"{where}: {self.action}"
        return f"{where}: {self.column}={self.value!r} {self.action}"


def clean(dataset: Dataset, rules: CleaningRules | None = None
          ) -> tuple[Dataset, list[CleanAction]]:
    """Blank out implausible cells and drop rows left without any data."""
    rules = rules or CleaningRules.defaults(dataset.schema)
    log: list[CleanAction] = []
    columns = {k: v.copy() for k, v in dataset.columns.items()}
    stamp = lambda i: str(dataset.timestamps[i])  # noqa: E731
    for name in dataset.data_columns:
        col = columns[name]
        bad = np.isinf(col)
        reason = {int(i): "non-finite, set missing" for i in np.flatnonzero(bad)}
        if name in rules.bounds:
            lo, hi = rules.bounds[name]
            out = np.isfinite(col) & ((col < lo) | (col > hi))
            for i in np.flatnonzero(out):
                reason[int(i)] = f"outside [{lo:g}, {hi:g}], set missing"
            bad |= out
        for i in sorted(reason):
            log.append(CleanAction(int(dataset.lines[i]), stamp(i), name, float(col[i]),
                                   reason[i]))
        col[bad] = np.nan

    data = np.column_stack([columns[c] for c in dataset.data_columns])
    empty = np.all(np.isnan(data), axis=1)
    for i in np.flatnonzero(empty):
        log.append(CleanAction(int(dataset.lines[i]), stamp(i), None, None,
                               "row has no valid cells, dropped"))
    log.sort(key=lambda a: a.line)
    cleaned = replace(dataset, columns=columns).take(np.flatnonzero(~empty))
    return cleaned, log


def impute(dataset: Dataset, max_gap: int = 4) -> Dataset:
    """Linearly interpolate interior runs of at most ``max_gap`` missing values.

    Runs touching either end of the series, or longer than ``max_gap``, stay
    missing. Interpolation is in time, so uneven spacing is respected.
    """
    if max_gap < 1:
        raise DataError(f"max_gap must be >= 1, got {max_gap}")
    t = dataset.timestamps.astype(np.int64).astype(np.float64)
    columns = dict(dataset.columns)
    for name in dataset.data_columns:
        col = columns[name]
        miss = np.isnan(col)
        if not miss.any() or miss.all():
            continue
        filled = col.copy()
        # run boundaries of the missing mask
        edges = np.diff(np.concatenate(([0], miss.astype(np.int8), [0])))
        starts = np.flatnonzero(edges == 1)
        stops = np.flatnonzero(edges == -1)
        for a, b in zip(starts, stops):
            if a == 0 or b == col.size or b - a > max_gap:
                continue
            filled[a:b] = np.interp(t[a:b], [t[a - 1], t[b]], [col[a - 1], col[b]])
        columns[name] = filled
    return replace(dataset, columns=columns)


def split(dataset: Dataset, train_fraction: float = 0.8) -> tuple[Dataset, Dataset]:
    """Chronological split: the first ``round(train_fraction * n)`` rows train."""
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    if n < 2:
        raise DataError(f"need at least 2 rows to split, got {n}")
    n_train = min(max(math.floor(train_fraction * n + 0.5), 1), n - 1)
    idx = np.arange(n)
    return dataset.take(idx[:n_train]), dataset.take(idx[n_train:])
