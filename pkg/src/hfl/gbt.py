"""Gradient-boosted regression trees with squared loss.

Each round fits an axis-aligned regression tree to the current residuals
using exhaustive variance-reduction splits; prediction is the training mean
plus shrinkage times the sum of tree outputs. Split ties break to the
lowest feature index, then the lowest threshold, so fits are deterministic.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class GbtConfig:
    n_trees: int = 200
    max_depth: int = 3
    shrinkage: float = 0.1
    min_leaf: int = 1


@dataclass
class GbtModel:
    init_prediction: float
    shrinkage: float
    trees: list  # each tree is a dict node: {feature, threshold, left, right} | {value}

    @property
    def n_trees(self):
        return len(self.trees)


def _best_split(x, y, min_leaf):
    """Exhaustive best split by variance reduction. Returns (gain, feature, threshold)."""
    n, p = x.shape
    s_all = y.sum()
    sq_all = float(y @ y)
    sse_parent = sq_all - s_all * s_all / n
    best = None
    for j in range(p):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        ys = y[order]
        cs = np.cumsum(ys)
        cq = np.cumsum(ys * ys)
        # candidate split after position i (left gets i samples)
        i = np.arange(min_leaf, n - min_leaf + 1)
        if i.size == 0:
            continue
        valid = xs[i - 1] < xs[i] if i.size else np.zeros(0, bool)
        if not valid.any():
            continue
        i = i[valid]
        sse_l = cq[i - 1] - cs[i - 1] ** 2 / i
        sse_r = (sq_all - cq[i - 1]) - (s_all - cs[i - 1]) ** 2 / (n - i)
        gains = sse_parent - (sse_l + sse_r)
        k = int(np.argmax(gains))  # first max = lowest threshold within feature
        gain = float(gains[k])
        if gain > 1e-12 and (best is None or gain > best[0]):
            threshold = 0.5 * (xs[i[k] - 1] + xs[i[k]])
            best = (gain, j, float(threshold))
    return best


def _build_tree(x, y, depth, max_depth, min_leaf):
    if depth >= max_depth or len(y) < 2 * min_leaf:
        return {"value": float(y.mean())}
    split = _best_split(x, y, min_leaf)
    if split is None:
        return {"value": float(y.mean())}
    _, j, thr = split
    mask = x[:, j] <= thr
    return {
        "feature": j,
        "threshold": thr,
        "left": _build_tree(x[mask], y[mask], depth + 1, max_depth, min_leaf),
        "right": _build_tree(x[~mask], y[~mask], depth + 1, max_depth, min_leaf),
    }


def _tree_predict(node, x):
    if "value" in node:
        return np.full(len(x), node["value"])
    mask = x[:, node["feature"]] <= node["threshold"]
    out = np.empty(len(x))
    out[mask] = _tree_predict(node["left"], x[mask])
    out[~mask] = _tree_predict(node["right"], x[~mask])
    return out


def gbt_fit(matrix, targets, config=None):
    """Fit the boosted ensemble; returns (model, per-round training MSE)."""
    config = config or GbtConfig()
    x = np.asarray(matrix, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if len(y) < 2:
        raise ValueError("need at least 2 samples")
    init = float(y.mean())
    pred = np.full(len(y), init)
    trees = []
    history = []
    for _ in range(config.n_trees):
        resid = y - pred
        tree = _build_tree(x, resid, 0, config.max_depth, config.min_leaf)
        trees.append(tree)
        pred = pred + config.shrinkage * _tree_predict(tree, x)
        history.append(float(np.mean((y - pred) ** 2)))
    return GbtModel(init, config.shrinkage, trees), history


def gbt_predict(model, matrix):
    x = np.asarray(matrix, dtype=np.float64)
    pred = np.full(len(x), model.init_prediction)
    for tree in model.trees:
        pred += model.shrinkage * _tree_predict(tree, x)
    return pred
