"""Least-squares boosting with greedy CART regression trees."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from edgeboost.errors import DataError, ParameterError
from edgeboost.model import CompactRegressionTree, GBTEnsemble, predict_tree_batch

logger = logging.getLogger(__name__)

# Relative size below which a split's SSE reduction is treated as zero.
_GAIN_RTOL = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 100
    learn_rate: float = 0.1
    max_depth: int = 5
    min_leaf: int = 5
    seed: int = 0
    # fraction of rows drawn (without replacement) per round; 1.0 disables
    subsample: float = 1.0

    def __post_init__(self):
        if not (isinstance(self.n_trees, (int, np.integer)) and self.n_trees >= 1):
            raise ParameterError(f"n_trees must be a positive integer, got {self.n_trees!r}")
        if not 0.0 < self.learn_rate <= 1.0:
            raise ParameterError(f"learn_rate must lie in (0, 1], got {self.learn_rate!r}")
        if self.max_depth < 1:
            raise ParameterError(f"max_depth must be >= 1, got {self.max_depth!r}")
        if self.min_leaf < 1:
            raise ParameterError(f"min_leaf must be >= 1, got {self.min_leaf!r}")
        if not 0.0 < self.subsample <= 1.0:
            raise ParameterError(f"subsample must lie in (0, 1], got {self.subsample!r}")


@dataclass
class FitTrace:
    """Per-round training history of :func:`fit_lsboost_traced`.

    ``train_rmse[0]`` is the RMSE of the bias-only model, ``train_rmse[k]``
    the RMSE after round ``k``.
    """

    train_rmse: list[float] = field(default_factory=list)
    residuals: np.ndarray | None = None
    null_rounds: list[int] = field(default_factory=list)

    def log_lines(self) -> list[str]:
        lines = ["round\ttrain_rmse"]
        lines += [f"{k}\t{v!r}" for k, v in enumerate(self.train_rmse) if k > 0]
        return lines


def _mean(values: np.ndarray) -> float:
    # exact for constant inputs, order-independent otherwise
    first = values[0]
    if np.all(values == first):
        return float(first)
    return math.fsum(values.tolist()) / values.size


def _midpoint(lo: float, hi: float) -> float:
    mid = (lo + hi) / 2.0
    # adjacent floats: the midpoint rounds onto lo and would not separate them
    return mid if lo < mid <= hi else hi


@dataclass
class _Split:
    feature: int  # 0-based
    threshold: float
    sse: float


def best_split(X: np.ndarray, y: np.ndarray, min_leaf: int) -> _Split | None:
    """Exhaustive search over features and midpoint thresholds.

    Rows whose feature value is NaN always go right. Among splits with equal
    SSE the lowest feature index wins, then the smallest threshold.
    """
    n, p = X.shape
    if n < 2 * min_leaf:
        return None
    yc = y - y.mean()
    # SSE values this close to each other count as ties, so the declared
    # tie-break is not decided by rounding noise
    tol = _GAIN_RTOL * float(np.dot(yc, yc))
    best: _Split | None = None
    for f in range(p):
        col = X[:, f]
        finite = ~np.isnan(col)
        order = np.argsort(col[finite], kind="stable")
        xs = col[finite][order]
        ys = yc[finite][order]
        y_nan = yc[~finite]
        m = xs.size
        if m < 2:
            continue
        # candidate split after sorted position i: left = xs[:i+1]
        cs = np.cumsum(ys)
        cs2 = np.cumsum(ys * ys)
        tot = cs[-1] + y_nan.sum()
        tot2 = cs2[-1] + (y_nan * y_nan).sum()
        n_left = np.arange(1, m + 1)
        n_right = n - n_left
        valid = (xs[:-1] < xs[1:]) & (n_left[:-1] >= min_leaf) & (n_right[:-1] >= min_leaf)
        if not valid.any():
            continue
        idx = np.flatnonzero(valid)
        nl = n_left[idx]
        nr = n_right[idx]
        sl = cs[idx]
        sr = tot - sl
        sse_left = cs2[idx] - sl * sl / nl
        sse_right = (tot2 - cs2[idx]) - sr * sr / nr
        sse = np.maximum(sse_left, 0.0) + np.maximum(sse_right, 0.0)
        k = int(np.flatnonzero(sse <= sse.min() + tol)[0])  # smallest threshold
        if best is None or sse[k] < best.sse - tol:
            i = idx[k]
            best = _Split(f, _midpoint(float(xs[i]), float(xs[i + 1])), float(sse[k]))
    return best


def fit_tree(features, residuals, config: TrainConfig) -> CompactRegressionTree:
    """Greedy top-down CART regression tree on ``residuals``.

    Nodes are numbered breadth-first so every child follows its parent.
    Leaves hold the mean residual of their training rows; internal nodes keep
    the mean of all rows reaching them. ``nan_cut_points`` is always false.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(residuals, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DataError(f"shape mismatch: features {X.shape}, residuals {y.shape}")
    if y.size == 0:
        raise DataError("cannot fit a tree on empty input")
    if not np.all(np.isfinite(y)):
        raise DataError("residuals contain non-finite values")

    cpi: list[int] = []
    children: list[list[int]] = []
    cut: list[float] = []
    mean: list[float] = []

    def new_node(rows):
        cpi.append(0)
        children.append([0, 0])
        cut.append(0.0)
        mean.append(_mean(y[rows]))
        return len(cpi)  # 1-based

    queue = deque([(new_node(np.arange(y.size)), np.arange(y.size), 0)])
    while queue:
        node, rows, depth = queue.popleft()
        if depth >= config.max_depth:
            continue
        yr = y[rows]
        if yr.size < 2 * config.min_leaf or np.all(yr == yr[0]):
            continue
        split = best_split(X[rows], yr, config.min_leaf)
        if split is None:
            continue
        parent_sse = float(np.sum((yr - yr.mean()) ** 2))
        if parent_sse - split.sse <= _GAIN_RTOL * parent_sse:
            continue
        go_left = X[rows, split.feature] < split.threshold
        left_rows, right_rows = rows[go_left], rows[~go_left]
        cpi[node - 1] = split.feature + 1
        cut[node - 1] = split.threshold
        left = new_node(left_rows)
        right = new_node(right_rows)
        children[node - 1] = [left, right]
        queue.append((left, left_rows, depth + 1))
        queue.append((right, right_rows, depth + 1))

    return CompactRegressionTree(cpi, children, cut, [False] * len(cpi), mean)


def _sse(r: np.ndarray) -> float:
    return math.fsum((r * r).tolist())


def fit_lsboost_traced(features, targets, config: TrainConfig | None = None
                       ) -> tuple[GBTEnsemble, FitTrace]:
    config = config or TrainConfig()
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise DataError(f"features must be a non-empty 2-D matrix, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise DataError(f"targets shape {y.shape} does not match {X.shape[0]} rows")
    if not np.all(np.isfinite(y)):
        raise DataError("targets contain non-finite values")

    n = y.size
    rng = np.random.default_rng(config.seed)
    bias = _mean(y)
    r = y - bias
    trace = FitTrace([math.sqrt(_sse(r) / n)])
    eta = config.learn_rate
    trees = []
    for k in range(1, config.n_trees + 1):
        if config.subsample < 1.0:
            m = max(1, int(round(config.subsample * n)))
            rows = np.sort(rng.choice(n, size=m, replace=False))
            tree = fit_tree(X[rows], r[rows], config)
        else:
            tree = fit_tree(X, r, config)
        r_new = r - eta * predict_tree_batch(tree, X)
        if _sse(r_new) > _sse(r):
            # only reachable through rounding at the noise floor (or subsampling);
            # a zero tree keeps the training loss monotone
            tree = CompactRegressionTree.leaf(0.0)
            r_new = r - eta * predict_tree_batch(tree, X)
            trace.null_rounds.append(k)
        r = r_new
        trees.append(tree)
        trace.train_rmse.append(math.sqrt(_sse(r) / n))
        logger.debug("round %d train rmse %.6g", k, trace.train_rmse[-1])
    trace.residuals = r
    model = GBTEnsemble(X.shape[1], bias, trees, [eta] * len(trees))
    return model, trace


def fit_lsboost(features, targets, config: TrainConfig | None = None) -> GBTEnsemble:
    """Fit ``bias + sum(eta * tree_k)`` by least-squares boosting.

    ``bias`` is the target mean; each round fits a tree to the current
    residuals and subtracts ``eta`` times its prediction.
    """
    return fit_lsboost_traced(features, targets, config)[0]
