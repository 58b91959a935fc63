import numpy as np
import pytest

from edgeboost import dataio, synth
from edgeboost.model import CompactRegressionTree, GBTEnsemble


def random_tree(rng, n_features, max_depth=4, p_split=0.7, nan_flags=False):
    """Random valid tree laid out breadth-first (children after parents)."""
    cpi, children, cut, nan, mean = [0], [[0, 0]], [0.0], [False], [rng.normal()]
    queue = [(0, 0)]
    while queue:
        node, depth = queue.pop(0)
        if depth >= max_depth or rng.random() > p_split:
            continue
        cpi[node] = int(rng.integers(1, n_features + 1))
        cut[node] = float(rng.normal())
        nan[node] = bool(nan_flags and rng.random() < 0.1)
        kids = []
        for _ in range(2):
            cpi.append(0)
            children.append([0, 0])
            cut.append(0.0)
            nan.append(False)
            mean.append(float(rng.normal()))
            kids.append(len(cpi))
            queue.append((len(cpi) - 1, depth + 1))
        children[node] = kids
    return CompactRegressionTree(cpi, children, cut, nan, mean)


def random_model(rng, n_features=12, n_trees=5, max_depth=4, nan_flags=False):
    trees = [random_tree(rng, n_features, max_depth, nan_flags=nan_flags)
             for _ in range(n_trees)]
    weights = rng.uniform(0.05, 1.5, n_trees)
    return GBTEnsemble(n_features, float(rng.normal()), trees, weights)


def random_inputs(rng, n, n_features, nan_fraction=0.0):
    X = rng.normal(size=(n, n_features))
    if nan_fraction:
        X[rng.random(X.shape) < nan_fraction] = np.nan
    return X


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic_month():
    return synth.generate(days=30, capacity=15.0, seed=7, n_features=10)


@pytest.fixture
def month_files(tmp_path, synthetic_month):
    data = tmp_path / "month.csv"
    schema = tmp_path / "schema.json"
    dataio.write_csv(synthetic_month, data)
    dataio.save_schema(synthetic_month.schema, schema)
    return data, schema
