"""Single-sample inference latency measurement."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from edgeboost.model import GBTEnsemble, predict_ensemble

WARMUP = 100
MIN_PREDICTIONS = 1000


@dataclass(frozen=True)
class BenchReport:
    samples: int
    repetitions: int
    warmup: int
    mean_us: float
    p50_us: float
    p95_us: float
    checksum: float

    def as_text(self) -> str:
        return (
            "timing: pure model evaluation, one predict call per sample, "
            "features preloaded (no I/O)\n"
            f"samples      {self.samples}\n"
            f"repetitions  {self.repetitions}\n"
            f"warmup       {self.warmup}\n"
            f"mean_us      {self.mean_us:.3f}\n"
            f"p50_us       {self.p50_us:.3f}\n"
            f"p95_us       {self.p95_us:.3f}\n"
            f"checksum     {self.checksum!r}\n"
        )


def default_repetitions(n_samples: int) -> int:
    return max(1, math.ceil(MIN_PREDICTIONS / n_samples))


def run_benchmark(model: GBTEnsemble, X, repetitions: int | None = None,
                  warmup: int = WARMUP) -> BenchReport:
    """Time ``predict_ensemble`` on every row, ``repetitions`` full passes.

    The sum of all outputs is kept as a checksum so the calls cannot be
    optimised away and two runs can be checked for identical results.
    """
    rows = [list(map(float, r)) for r in np.asarray(X, dtype=np.float64)]
    if not rows:
        raise ValueError("benchmark needs at least one sample")
    if repetitions is None:
        repetitions = default_repetitions(len(rows))
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")

    for i in range(warmup):
        predict_ensemble(model, rows[i % len(rows)])

    clock = time.perf_counter_ns
    timings = []
    checksum = 0.0
    for _ in range(repetitions):
        for x in rows:
            t0 = clock()
            y = predict_ensemble(model, x)
            timings.append(clock() - t0)
            checksum += y
    us = np.maximum(np.array(timings, dtype=np.float64), 1.0) / 1e3
    return BenchReport(
        samples=len(rows),
        repetitions=repetitions,
        warmup=warmup,
        mean_us=float(us.mean()),
        p50_us=float(np.percentile(us, 50)),
        p95_us=float(np.percentile(us, 95)),
        checksum=checksum,
    )
