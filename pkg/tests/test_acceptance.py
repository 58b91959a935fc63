"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line (shown even
under output capture) before asserting.
"""

import math
import re
import time
from pathlib import Path

import numpy as np
import pytest

from edgeboost.cli import main, write_features
from edgeboost.droop import DroopParams, droop_setpoints, read_droop_params, recover_voltage
from edgeboost.metrics import capacity_mape, parity_report, r_squared, write_stream
from edgeboost.model import (
    deserialize_model,
    predict_ensemble_batch,
    save_model,
    serialize_model,
)
from edgeboost.trainer import TrainConfig, fit_lsboost, fit_lsboost_traced, fit_tree

from test_trainer import assert_same_tree, nested, oracle_tree, random_small_problem

PARAMS = Path(__file__).resolve().parents[1] / "data" / "inverters.csv"

# published device output (P, Q) and droop gains for the four inverters
PRINTED = [(15.00000, 0.00000), (21.93171, -12.00000),
           (18.72832, -9.50000), (14.77921, 6.12983)]
GAINS = [0.3592, 0.5986, 0.5028, 0.3831]


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def test_criterion_1_droop_reproduction(verdict, capsys, tmp_path):
    t0 = time.perf_counter()
    params = read_droop_params(PARAMS)
    volts = [recover_voltage(p, q) for p, (_, q) in zip(params, PRINTED)]
    out_csv = tmp_path / "sp.csv"
    code = main(["droop", "--params", str(PARAMS), "--voltages", ",".join(map(repr, volts)),
                 "--csv", str(out_csv)])
    elapsed = time.perf_counter() - t0
    table = capsys.readouterr().out.strip().splitlines()[1:]
    got = [tuple(map(float, ln.split())) for ln in table]
    rows = [r.split(",") for r in out_csv.read_text().splitlines()[1:]]
    exact = [(float(r[2]), float(r[3])) for r in rows]
    gains = [round(float(r[4]), 4) for r in rows]
    err = max(abs(a - b) for g, w in zip(exact, PRINTED) for a, b in zip(g, w))
    ok = (code == 0 and len(got) == 4 and err <= 1e-4 and gains == GAINS
          and all(g == w for g, w in zip(got, PRINTED)) and elapsed < 1.0)
    verdict(1, ok, f"max |setpoint error| {err:.2e}, k_q {gains}, {elapsed * 1e3:.1f} ms")


def test_criterion_2_setpoint_circle(verdict):
    rng = np.random.default_rng(2024)
    cases = [(p, recover_voltage(p, q)) for p, (_, q) in
             zip(read_droop_params(PARAMS), PRINTED)]
    while len(cases) < 1004:
        s = rng.uniform(0.5, 500.0)
        q_lo, q_hi = np.sort(rng.uniform(-s, s, 2))
        u_min = rng.uniform(100.0, 300.0)
        u_max = u_min + rng.uniform(1.0, 100.0)
        if q_lo < q_hi:
            cases.append((DroopParams(s, q_lo, q_hi, u_min, u_max),
                          rng.uniform(u_min - 20, u_max + 20)))
    worst = 0.0
    for params, u in cases:
        sp = droop_setpoints(params, u)
        s2 = params.s_rate ** 2
        worst = max(worst, abs(sp.p_ref ** 2 + sp.q_ref ** 2 - s2) / np.spacing(s2))
    anchor = f"{math.sqrt(625 - 144):.5f}"
    verdict(2, worst <= 8 and anchor == "21.93171",
            f"{len(cases)} cases, worst residual {worst:.1f} ULP, sqrt(625-144) = {anchor}")


def _quadratic(seed=0, n=500):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, 3))
    return X, 3 * X[:, 0] - 2 * X[:, 1] + X[:, 2] ** 2


def test_criterion_3_training_properties(verdict, synthetic_month):
    details, ok = [], True

    # (a) monotone training RMSE on every fixture
    fixtures = {}
    for target in ("active", "reactive"):
        fixtures[f"month-{target}"] = synthetic_month.with_target(target).matrices()
    fixtures["quadratic"] = _quadratic()
    rng = np.random.default_rng(5)
    noise_X = rng.normal(size=(300, 4))
    fixtures["noise"] = (noise_X, rng.normal(size=300))
    cfg = TrainConfig(n_trees=100, learn_rate=0.1, max_depth=4)
    for name, (X, y) in fixtures.items():
        t0 = time.perf_counter()
        _, trace = fit_lsboost_traced(X, y, cfg)
        dt = time.perf_counter() - t0
        rmse = trace.train_rmse
        mono = all(b <= a for a, b in zip(rmse, rmse[1:]))
        ok &= mono and dt < 30
        details.append(f"(a) {name}: monotone={mono} {dt:.1f}s")

    # (b) held-out accuracy on the noiseless quadratic, chronological 80/20 split
    X, y = _quadratic()
    t0 = time.perf_counter()
    model = fit_lsboost(X[:400], y[:400], cfg)
    pred = predict_ensemble_batch(model, X[400:])
    dt = time.perf_counter() - t0
    r2 = r_squared(y[400:], pred)
    mape = capacity_mape(y[400:], pred, float(np.max(np.abs(y))))
    ok &= r2 >= 0.95 and mape <= 5.0 and dt < 30
    details.append(f"(b) R2 {r2:.4f}, cap-MAPE {mape:.2f}% {dt:.1f}s")

    # (c) one unshrunk, unlimited-depth tree memorises distinct rows
    rng = np.random.default_rng(9)
    X = rng.normal(size=(200, 3))
    y = rng.normal(size=200)
    t0 = time.perf_counter()
    model = fit_lsboost(X, y, TrainConfig(n_trees=1, learn_rate=1.0, max_depth=10_000,
                                          min_leaf=1))
    r2_train = r_squared(y, predict_ensemble_batch(model, X))
    dt = time.perf_counter() - t0
    ok &= r2_train == 1.0 and dt < 30
    details.append(f"(c) train R2 {r2_train!r} {dt:.1f}s")
    verdict(3, ok, "; ".join(details))


def test_criterion_4_parity(verdict, tmp_path):
    rng = np.random.default_rng(4)
    X = rng.normal(size=(600, 12))
    y = X[:, 0] - X[:, 3] ** 2 + 0.5 * X[:, 7] * X[:, 1]
    model = fit_lsboost(X, y, TrainConfig(n_trees=30, max_depth=5))
    Xq = rng.normal(size=(1000, 12))
    Xq[rng.random(Xq.shape) < 0.02] = np.nan
    ref = predict_ensemble_batch(model, Xq)
    again = predict_ensemble_batch(deserialize_model(serialize_model(model)), Xq)
    rt = parity_report(ref, again, capacity=15.0)
    rounded = parity_report(ref, np.round(ref, 6), capacity=15.0)
    write_stream(ref, tmp_path / "pc.csv")
    write_stream(np.round(ref, 6), tmp_path / "device.csv")
    code = main(["compare", "--ref", str(tmp_path / "pc.csv"), "--cand",
                 str(tmp_path / "device.csv"), "--capacity", "15"])
    ok = rt.rmse == 0.0 and rounded.rmse <= 5e-7 and code == 0
    verdict(4, ok, f"round-trip RMSE {rt.rmse!r}, 6-decimal RMSE {rounded.rmse:.2e}, "
                   f"compare exit {code}")


def test_criterion_5_latency(verdict, capsys, tmp_path):
    rng = np.random.default_rng(5)
    X = rng.normal(size=(2000, 12))
    y = np.sin(X[:, 0]) + X[:, 1] * X[:, 2] - X[:, 5] ** 2
    model = fit_lsboost(X, y, TrainConfig(n_trees=30, max_depth=5, min_leaf=5))
    depth = max(t.depth() for t in model.trees)
    save_model(model, tmp_path / "m.gbt")
    write_features(X[:200], [f"f{i}" for i in range(12)], tmp_path / "x.csv")

    t0 = time.perf_counter()
    means = []
    for _ in range(2):
        code = main(["bench", "--model", str(tmp_path / "m.gbt"), "--data", str(tmp_path / "x.csv")])
        out = capsys.readouterr().out
        means.append(float(re.search(r"mean_us\s+(\S+)", out).group(1)))
        assert code == 0
    total = time.perf_counter() - t0
    agree = max(means) <= 1.5 * min(means)
    ok = depth == 5 and max(means) < 1000.0 and agree and total < 60
    verdict(5, ok, f"30 trees depth {depth}, mean {means[0]:.1f} / {means[1]:.1f} us, "
                   f"total {total:.1f} s")


def test_criterion_6_metric_anchors(verdict):
    y = np.array([1.0, 4.0, 2.0, 8.0])
    checks = {
        "r2(y,y)=1": r_squared(y, y) == 1.0,
        "r2(y,mean)=0": r_squared(y, np.full(4, y.mean())) == 0.0,
        "r2 hand=0.5": r_squared([1, 2, 3], [1, 2, 4]) == 0.5,
        "mape 0%": capacity_mape(y, y, 10.0) == 0.0,
        "mape 100%": capacity_mape([0.0, 10.0], [10.0, 0.0], 10.0) == 100.0,
        "negative r2": r_squared(y, np.full(4, y.mean()) + [0.1, -0.1, 0.1, -0.1]) < 0,
    }
    failed = [k for k, v in checks.items() if not v]
    verdict(6, not failed, "all anchors hold" if not failed else f"failed: {failed}")


def test_criterion_7_tree_oracle(verdict):
    rng = np.random.default_rng(77)
    mismatches = []
    for k in range(50):
        X, y = random_small_problem(rng)
        max_depth = int(rng.integers(1, 3))
        min_leaf = int(rng.integers(1, 4))
        cfg = TrainConfig(max_depth=max_depth, min_leaf=min_leaf)
        want = oracle_tree(X, y, 0, max_depth, min_leaf)
        try:
            assert_same_tree(nested(fit_tree(X, y, cfg)), want)
        except AssertionError as exc:
            mismatches.append(f"dataset {k}: {exc}")
    verdict(7, not mismatches, f"{50 - len(mismatches)}/50 datasets match exhaustive search"
            + (f"; {mismatches[:3]}" if mismatches else ""))
