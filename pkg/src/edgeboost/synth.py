"""Synthetic smart-meter months with the same columns as the field data.

The generator is a stand-in for a private dataset: a clear-sky PV profile
modulated by AR(1) cloud cover, bus voltage that rises with PV output, and
reactive power following a V-Q droop law.
"""

from __future__ import annotations

import math

import numpy as np

from edgeboost.dataio import DEFAULT_FEATURES, INTERVAL_MINUTES, Dataset, Schema, _interval_of_day
from edgeboost.droop import DroopParams, droop_setpoints

EXTRA_FEATURES = ("freq", "temp_inv")
TWELVE_FEATURES = DEFAULT_FEATURES + EXTRA_FEATURES  # 12 inputs


def make_schema(capacity: float = 15.0, n_features: int = 10, inverter: str = "inv1") -> Schema:
    if n_features not in (10, 12):
        raise ValueError("n_features must be 10 or 12")
    features = DEFAULT_FEATURES if n_features == 10 else TWELVE_FEATURES
    return Schema(capacity=capacity, features=features, inverter=inverter)


def generate(days: int = 30, capacity: float = 15.0, seed: int = 0,
             start: str = "2024-05-15T00:00:00", n_features: int = 10,
             inverter: str = "inv1") -> Dataset:
    """``days * 96`` rows on a 15-minute grid."""
    rng = np.random.default_rng(seed)
    per_day = 24 * 60 // INTERVAL_MINUTES
    n = days * per_day
    ts = np.datetime64(start, "s") + np.arange(n) * np.timedelta64(INTERVAL_MINUTES * 60, "s")
    hour = _interval_of_day(ts) * INTERVAL_MINUTES / 60.0

    clear = np.clip(np.sin(np.pi * (hour - 6.0) / 12.0), 0.0, None) ** 1.5
    cloud = np.empty(n)
    c = 0.8
    for i in range(n):
        c = 0.9 * c + 0.1 * rng.uniform(0.3, 1.0) + rng.normal(0, 0.03)
        c = min(max(c, 0.2), 1.0)
        cloud[i] = c
    sun = clear * cloud

    p = np.clip(0.92 * capacity * sun + rng.normal(0, 0.01 * capacity, n), 0.0, capacity)
    p[clear == 0] = 0.0
    evening_load = np.exp(-0.5 * ((hour - 19.5) / 1.5) ** 2)
    v_mean = 221.0 + 9.0 * sun - 6.0 * evening_load + rng.normal(0, 1.0, n)
    phases = [v_mean + rng.normal(0, 0.8, n) for _ in range(3)]

    droop = DroopParams.from_power_factor(capacity, 0.85)
    q = np.array([droop_setpoints(droop, float(v)).q_ref for v in v_mean])
    q = q * np.where(sun > 0.02, 1.0, 0.15) + rng.normal(0, 0.005 * capacity, n)
    # keep the apparent power inside the rating
    s = np.hypot(p, q)
    over = s > capacity
    p[over] *= capacity / s[over]
    q[over] *= capacity / s[over]

    s = np.hypot(p, q)
    pf = np.where(s > 1e-6, p / np.maximum(s, 1e-12), 1.0)
    currents = [s * 1000.0 / (3.0 * v) * (1 + rng.normal(0, 0.01, n)) for v in phases]
    p_prev = np.concatenate(([p[0]], p[:-1])) + rng.normal(0, 0.002 * capacity, n)
    q_prev = np.concatenate(([q[0]], q[:-1])) + rng.normal(0, 0.002 * capacity, n)

    columns = {
        "va": phases[0], "vb": phases[1], "vc": phases[2],
        "ia": currents[0], "ib": currents[1], "ic": currents[2],
        "pf": pf, "p_set_prev": p_prev, "q_set_prev": q_prev,
        "p": p, "q": q,
    }
    schema = make_schema(capacity, n_features, inverter)
    if n_features == 12:
        columns["freq"] = 50.0 + rng.normal(0, 0.02, n)
        columns["temp_inv"] = 25.0 + 20.0 * sun + rng.normal(0, 0.5, n)
    columns[DEFAULT_FEATURES[-1]] = _interval_of_day(ts)
    columns = {k: np.round(v, 6) if k != DEFAULT_FEATURES[-1] else v
               for k, v in columns.items()}
    return Dataset(schema, ts, columns, np.arange(2, n + 2), "active")


def corrupt(dataset: Dataset, fraction: float = 0.05, seed: int = 0) -> Dataset:
    """Overwrite ``fraction`` of the file cells with implausible values."""
    rng = np.random.default_rng(seed)
    cols = list(dataset.data_columns)
    columns = {k: v.copy() for k, v in dataset.columns.items()}
    n = len(dataset)
    n_bad = int(math.ceil(fraction * n * len(cols)))
    cells = rng.choice(n * len(cols), size=n_bad, replace=False)
    junk = np.array([999.0, -999.0, 1e9, np.inf, -np.inf, 5.0 * dataset.capacity])
    for cell in cells:
        row, k = divmod(int(cell), len(cols))
        columns[cols[k]][row] = rng.choice(junk)
    return Dataset(dataset.schema, dataset.timestamps, columns, dataset.lines, dataset.target)
