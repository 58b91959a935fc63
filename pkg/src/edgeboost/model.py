"""Compact regression trees, boosted ensembles and the GBTM model file format.

A tree is stored as five parallel arrays indexed by node (1-based in the
stored values, node 1 is the root)::

    cut_predictor_index  feature used at the node (1-based), 0 for a leaf
    children             (left, right) node indices, (0, 0) for a leaf
    cut_point            split threshold, go left iff x[feature] < threshold
    nan_cut_points       stop descending when this node is reached
    node_mean            response returned when descent stops at the node

Every child index is strictly greater than its parent's, so descent always
terminates within ``n_nodes`` steps.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from edgeboost.errors import DimensionError, FormatError, ModelCorruptionError

MAGIC = b"GBTM"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHHIdI")
_TREE_HEADER = struct.Struct("<dI")


@dataclass(frozen=True)
class CompactRegressionTree:
    cut_predictor_index: tuple[int, ...]
    children: tuple[tuple[int, int], ...]
    cut_point: tuple[float, ...]
    nan_cut_points: tuple[bool, ...]
    node_mean: tuple[float, ...]

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "cut_predictor_index", tuple(int(v) for v in self.cut_predictor_index))
        set_(self, "children", tuple((int(a), int(b)) for a, b in self.children))
        set_(self, "cut_point", tuple(float(v) for v in self.cut_point))
        set_(self, "nan_cut_points", tuple(bool(v) for v in self.nan_cut_points))
        set_(self, "node_mean", tuple(float(v) for v in self.node_mean))

    @classmethod
    def leaf(cls, value: float) -> "CompactRegressionTree":
        return cls((0,), ((0, 0),), (0.0,), (False,), (value,))

    @classmethod
    def stump(cls, feature: int, threshold: float, left: float, right: float,
              root_mean: float | None = None) -> "CompactRegressionTree":
        """Depth-1 tree splitting 1-based ``feature`` at ``threshold``."""
        if root_mean is None:
            root_mean = 0.5 * (left + right)
        return cls(
            (feature, 0, 0),
            ((2, 3), (0, 0), (0, 0)),
            (threshold, 0.0, 0.0),
            (False, False, False),
            (root_mean, left, right),
        )

    @property
    def n_nodes(self) -> int:
        return len(self.cut_predictor_index)

    @property
    def n_leaves(self) -> int:
        return sum(1 for j in self.cut_predictor_index if j == 0)

    def depth(self) -> int:
        depths = [0] * self.n_nodes
        for i, j in enumerate(self.cut_predictor_index):
            if j != 0:
                for c in self.children[i]:
                    depths[c - 1] = depths[i] + 1
        return max(depths)

    # Split columns used on the predict fast path. cached_property writes to
    # __dict__ directly, which a frozen dataclass allows.
    @cached_property
    def _left(self) -> tuple[int, ...]:
        return tuple(c[0] for c in self.children)

    @cached_property
    def _right(self) -> tuple[int, ...]:
        return tuple(c[1] for c in self.children)

    @cached_property
    def _arrays(self):
        ch = np.array(self.children, dtype=np.intp).reshape(-1, 2)
        return (
            np.array(self.cut_predictor_index, dtype=np.intp),
            ch[:, 0].copy(),
            ch[:, 1].copy(),
            np.array(self.cut_point, dtype=np.float64),
            np.array(self.nan_cut_points, dtype=bool),
            np.array(self.node_mean, dtype=np.float64),
        )


@dataclass(frozen=True)
class GBTEnsemble:
    """``bias + sum(weights[k] * tree_k(x))``."""

    n_features: int
    bias: float
    trees: tuple[CompactRegressionTree, ...]
    weights: tuple[float, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "n_features", int(self.n_features))
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "trees", tuple(self.trees))
        weights = self.weights if len(self.weights) or not self.trees else [1.0] * len(self.trees)
        object.__setattr__(self, "weights", tuple(float(w) for w in weights))

    @property
    def n_trees(self) -> int:
        return len(self.trees)


@dataclass(frozen=True)
class Violation:
    message: str
    tree: int | None = None
    node: int | None = None

    def __str__(self):
        where = []
        if self.tree is not None:
            where.append(f"tree {self.tree}")
        if self.node is not None:
            where.append(f"node {self.node}")
        return f"{', '.join(where)}: {self.message}" if where else self.message


def predict_tree(tree: CompactRegressionTree, x: Sequence[float]) -> float:
    """Descend from the root and return the mean of the node where descent stops.

    Descent stops at a leaf, at a NaN feature value, or at a node whose
    ``nan_cut_points`` flag is set. Ties (``x == cut_point``) go right.
    """
    cpi = tree.cut_predictor_index
    cut = tree.cut_point
    stop = tree.nan_cut_points
    left = tree._left
    right = tree._right
    m = 0
    try:
        for _ in range(len(cpi)):
            j = cpi[m]
            if j == 0:
                return tree.node_mean[m]
            if j < 0:
                raise IndexError(j)
            d = x[j - 1]
            if d != d or stop[m]:
                return tree.node_mean[m]
            nxt = (left[m] if d < cut[m] else right[m]) - 1
            if nxt <= m:
                raise ModelCorruptionError(f"node {m + 1}: child index not greater than parent")
            m = nxt
    except IndexError as exc:
        raise ModelCorruptionError(f"node {m + 1}: index out of range during descent") from exc
    raise ModelCorruptionError("descent did not reach a stopping node")


def _as_vector(x) -> list:
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def predict_ensemble(model: GBTEnsemble, x: Sequence[float]) -> float:
    x = _as_vector(x)
    if len(x) != model.n_features:
        raise DimensionError(f"expected {model.n_features} features, got {len(x)}")
    total = model.bias
    for w, tree in zip(model.weights, model.trees):
        total += w * predict_tree(tree, x)
    return total


def apply_tree(tree: CompactRegressionTree, X: np.ndarray) -> np.ndarray:
    """Vectorised descent; returns the 1-based stopping node for each row."""
    X = np.asarray(X, dtype=np.float64)
    cpi, left, right, cut, nanflag, _ = tree._arrays
    n = X.shape[0]
    node = np.zeros(n, dtype=np.intp)
    active = np.arange(n)
    for _ in range(tree.n_nodes):
        if active.size == 0:
            break
        cur = node[active]
        j = cpi[cur]
        inner = j > 0
        if not inner.any():
            active = active[:0]
            break
        rows, cur, j = active[inner], cur[inner], j[inner]
        if j.max() > X.shape[1]:
            raise ModelCorruptionError("feature index out of range during descent")
        d = X[rows, j - 1]
        go = ~(np.isnan(d) | nanflag[cur])
        rows, cur, d = rows[go], cur[go], d[go]
        nxt = np.where(d < cut[cur], left[cur], right[cur]) - 1
        if np.any(nxt <= cur):
            raise ModelCorruptionError("child index not greater than parent")
        node[rows] = nxt
        active = rows
    if active.size:
        raise ModelCorruptionError("descent did not reach a stopping node")
    return node + 1


def predict_tree_batch(tree: CompactRegressionTree, X: np.ndarray) -> np.ndarray:
    return tree._arrays[5][apply_tree(tree, X) - 1]


def predict_ensemble_batch(model: GBTEnsemble, X: np.ndarray) -> np.ndarray:
    """Row-wise :func:`predict_ensemble`; bit-identical to the scalar path."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionError(f"expected an (n, {model.n_features}) matrix, got shape {X.shape}")
    out = np.full(X.shape[0], model.bias)
    for w, tree in zip(model.weights, model.trees):
        out += w * predict_tree_batch(tree, X)
    return out


def validate_tree(tree: CompactRegressionTree, n_features: int,
                  tree_no: int | None = None) -> list[Violation]:
    out: list[Violation] = []

    def bad(msg, node=None):
        out.append(Violation(msg, tree_no, node))

    n = tree.n_nodes
    lengths = {len(tree.cut_predictor_index), len(tree.children), len(tree.cut_point),
               len(tree.nan_cut_points), len(tree.node_mean)}
    if len(lengths) != 1:
        bad(f"array lengths differ: {sorted(lengths)}")
        return out
    if n < 1:
        bad("tree has no nodes")
        return out

    parents = [0] * (n + 1)
    for i in range(1, n + 1):
        j = tree.cut_predictor_index[i - 1]
        left, right = tree.children[i - 1]
        if not math.isfinite(tree.node_mean[i - 1]):
            bad("non-finite node mean", i)
        if j == 0:
            if (left, right) != (0, 0):
                bad("leaf has children", i)
            continue
        if not 1 <= j <= n_features:
            bad(f"feature index out of range ({j} not in 1..{n_features})", i)
        if not tree.nan_cut_points[i - 1] and not math.isfinite(tree.cut_point[i - 1]):
            bad("non-finite cut point", i)
        if left == right:
            bad("left and right child are the same node", i)
        for c in (left, right):
            if c <= i:
                bad("child index not greater than parent", i)
            elif c > n:
                bad(f"child index {c} out of range", i)
            else:
                parents[c] += 1

    for c in range(2, n + 1):
        if parents[c] == 0:
            bad("unreachable node", c)
        elif parents[c] > 1:
            bad("node has more than one parent", c)
    return out


def validate_model(model: GBTEnsemble) -> list[Violation]:
    """Every invariant violation in ``model``; an empty list means valid."""
    out: list[Violation] = []
    if model.n_features < 1:
        out.append(Violation("n_features must be positive"))
    if not math.isfinite(model.bias):
        out.append(Violation("non-finite bias"))
    if len(model.weights) != len(model.trees):
        out.append(Violation(f"{len(model.weights)} weights for {len(model.trees)} trees"))
    for k, w in enumerate(model.weights, start=1):
        if not (math.isfinite(w) and w > 0):
            out.append(Violation(f"weight {w!r} is not a positive finite number", k))
    for k, tree in enumerate(model.trees, start=1):
        out.extend(validate_tree(tree, model.n_features, k))
    return out


def check_model(model: GBTEnsemble) -> GBTEnsemble:
    violations = validate_model(model)
    if violations:
        raise ModelCorruptionError(
            f"model failed validation ({len(violations)} violations): {violations[0]}",
            violations)
    return model


def serialize_model(model: GBTEnsemble) -> bytes:
    check_model(model)
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, 0, model.n_features, model.bias,
                          model.n_trees)]
    for w, tree in zip(model.weights, model.trees):
        parts.append(_TREE_HEADER.pack(w, tree.n_nodes))
        parts.append(np.asarray(tree.cut_predictor_index, dtype="<u4").tobytes())
        parts.append(np.asarray(tree.children, dtype="<u4").reshape(-1).tobytes())
        parts.append(np.asarray(tree.cut_point, dtype="<f8").tobytes())
        parts.append(np.asarray(tree.nan_cut_points, dtype="u1").tobytes())
        parts.append(np.asarray(tree.node_mean, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int, what: str) -> memoryview:
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated payload while reading {what} at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def array(self, dtype: str, count: int, what: str) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count, what), dtype=dt)


def deserialize_model(data: bytes) -> GBTEnsemble:
    r = _Reader(data)
    magic, version, reserved, n_features, bias, n_trees = _HEADER.unpack(
        r.take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {bytes(magic)!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    if reserved != 0:
        raise FormatError(f"reserved header field is {reserved}, expected 0")

    trees, weights = [], []
    for k in range(1, n_trees + 1):
        w, n = _TREE_HEADER.unpack(r.take(_TREE_HEADER.size, f"tree {k} header"))
        cpi = r.array("<u4", n, f"tree {k} cut_predictor_index")
        ch = r.array("<u4", 2 * n, f"tree {k} children")
        cut = r.array("<f8", n, f"tree {k} cut_point")
        nan = r.array("u1", n, f"tree {k} nan_cut_points")
        mean = r.array("<f8", n, f"tree {k} node_mean")
        if np.any(nan > 1):
            raise FormatError(f"tree {k}: nan_cut_points must be 0 or 1")
        trees.append(CompactRegressionTree(
            cpi.tolist(), ch.reshape(-1, 2).tolist(), cut.tolist(),
            nan.astype(bool).tolist(), mean.tolist()))
        weights.append(w)
    if r.pos != len(r.data):
        raise FormatError(f"{len(r.data) - r.pos} trailing bytes after last tree")
    return check_model(GBTEnsemble(n_features, bias, trees, weights))


def model_to_json(model: GBTEnsemble, indent: int | None = 1) -> str:
    doc = {
        "magic": MAGIC.decode(),
        "version": FORMAT_VERSION,
        "n_features": model.n_features,
        "bias": model.bias,
        "trees": [
            {
                "weight": w,
                "cut_predictor_index": list(t.cut_predictor_index),
                "children": [list(c) for c in t.children],
                "cut_point": list(t.cut_point),
                "nan_cut_points": list(t.nan_cut_points),
                "node_mean": list(t.node_mean),
            }
            for w, t in zip(model.weights, model.trees)
        ],
    }
    # json writes floats with repr(), the shortest round-tripping decimal
    return json.dumps(doc, indent=indent)


def model_from_json(text: str) -> GBTEnsemble:
    try:
        doc = json.loads(text)
        if doc.get("magic") != MAGIC.decode():
            raise FormatError("JSON document is not a GBTM model mirror")
        if doc.get("version") != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {doc.get('version')}")
        trees = [
            CompactRegressionTree(t["cut_predictor_index"], t["children"], t["cut_point"],
                                  t["nan_cut_points"], t["node_mean"])
            for t in doc["trees"]
        ]
        model = GBTEnsemble(doc["n_features"], doc["bias"], trees,
                            [t["weight"] for t in doc["trees"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed JSON model: {exc}") from exc
    return check_model(model)


def load_model(path) -> GBTEnsemble:
    """Read a model from a binary GBTM file or its JSON mirror."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:1] == b"{":
        return model_from_json(data.decode("utf-8"))
    return deserialize_model(data)


def save_model(model: GBTEnsemble, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_model(model))
