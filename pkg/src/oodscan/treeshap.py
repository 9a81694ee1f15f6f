"""Exact Shapley attributions for the forest's OOD probability.

Path-dependent formulation: the value of a feature coalition S is the
expectation of a tree's leaf value when split decisions on features in S
follow the input and decisions on absent features average the children by
their cover fractions (cover_child / cover_parent). Shapley values of this
game are computed exactly in polynomial time by carrying, along each
root-to-leaf path, the weighted proportions of all subset sizes (the
extend/unwind recursion over unique path features).

Per-forest attributions are the per-tree attributions averaged over trees;
the base value is the empty-coalition expectation averaged the same way.
Efficiency (base + sum(phi) = P(OOD)) is checked on every call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InternalError
from .forest import Forest, TreeNode, predict_proba

_EFFICIENCY_GUARD = 1e-6


@dataclass(frozen=True)
class ShapExplanation:
    base_value: float
    contributions: np.ndarray  # one value per feature
    prediction: float  # P(OOD) for the explained input


@dataclass
class _PathElement:
    feature: int
    zero_fraction: float  # proportion of paths flowing through when absent
    one_fraction: float  # 1 if the input follows this split, else 0
    pweight: float


def _extend(path: list[_PathElement], zero_fraction: float, one_fraction: float,
            feature: int) -> list[_PathElement]:
    path = [
        _PathElement(p.feature, p.zero_fraction, p.one_fraction, p.pweight)
        for p in path
    ]
    depth = len(path)
    path.append(_PathElement(feature, zero_fraction, one_fraction,
                             1.0 if depth == 0 else 0.0))
    for i in range(depth - 1, -1, -1):
        path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / (depth + 1)
        path[i].pweight = zero_fraction * path[i].pweight * (depth - i) / (depth + 1)
    return path


def _unwind(path: list[_PathElement], index: int) -> list[_PathElement]:
    depth = len(path) - 1
    one = path[index].one_fraction
    zero = path[index].zero_fraction
    out = [_PathElement(p.feature, p.zero_fraction, p.one_fraction, p.pweight)
           for p in path]
    next_one = out[depth].pweight
    for i in range(depth - 1, -1, -1):
        if one != 0.0:
            tmp = out[i].pweight
            out[i].pweight = next_one * (depth + 1) / ((i + 1) * one)
            next_one = tmp - out[i].pweight * zero * (depth - i) / (depth + 1)
        else:
            out[i].pweight = out[i].pweight * (depth + 1) / (zero * (depth - i))
    for i in range(index, depth):
        out[i].feature = out[i + 1].feature
        out[i].zero_fraction = out[i + 1].zero_fraction
        out[i].one_fraction = out[i + 1].one_fraction
    return out[:-1]


def _unwound_sum(path: list[_PathElement], index: int) -> float:
    depth = len(path) - 1
    one = path[index].one_fraction
    zero = path[index].zero_fraction
    total = 0.0
    if one != 0.0:
        next_one = path[depth].pweight
        for i in range(depth - 1, -1, -1):
            tmp = next_one * (depth + 1) / ((i + 1) * one)
            total += tmp
            next_one = path[i].pweight - tmp * zero * (depth - i) / (depth + 1)
    else:
        for i in range(depth - 1, -1, -1):
            total += path[i].pweight * (depth + 1) / (zero * (depth - i))
    return total


def _tree_shap(node: TreeNode, x: np.ndarray, phi: np.ndarray,
               path: list[_PathElement], parent_zero: float, parent_one: float,
               parent_feature: int) -> None:
    path = _extend(path, parent_zero, parent_one, parent_feature)
    if node.is_leaf():
        for i in range(1, len(path)):
            w = _unwound_sum(path, i)
            el = path[i]
            phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * node.dist[1]
        return

    hot, cold = (node.left, node.right) if x[node.feature] <= node.threshold \
        else (node.right, node.left)
    incoming_zero = 1.0
    incoming_one = 1.0
    for k in range(1, len(path)):  # index 0 is the dummy root element
        if path[k].feature == node.feature:
            incoming_zero = path[k].zero_fraction
            incoming_one = path[k].one_fraction
            path = _unwind(path, k)
            break
    hot_frac = hot.cover / node.cover
    cold_frac = cold.cover / node.cover
    _tree_shap(hot, x, phi, path, incoming_zero * hot_frac, incoming_one, node.feature)
    _tree_shap(cold, x, phi, path, incoming_zero * cold_frac, 0.0, node.feature)


def tree_expectation(node: TreeNode) -> float:
    """Empty-coalition value: cover-weighted mean leaf P(OOD)."""
    if node.is_leaf():
        return node.dist[1]
    lf = node.left.cover / node.cover
    rf = node.right.cover / node.cover
    return lf * tree_expectation(node.left) + rf * tree_expectation(node.right)


def tree_shap(forest: Forest, x: np.ndarray) -> ShapExplanation:
    """Exact per-feature Shapley attribution of the forest's P(OOD) at x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (forest.n_features,):
        raise ValueError(f"expected {forest.n_features} feature values, got {x.shape}")
    phi = np.zeros(forest.n_features)
    base = 0.0
    for tree in forest.trees:
        _tree_shap(tree, x, phi, [], 1.0, 1.0, -1)
        base += tree_expectation(tree)
    phi /= len(forest.trees)
    base /= len(forest.trees)
    prediction = predict_proba(forest, x)[1]
    if abs(base + phi.sum() - prediction) > _EFFICIENCY_GUARD:
        raise InternalError(
            f"shap efficiency violated: base {base} + sum(phi) {phi.sum()} "
            f"!= prediction {prediction}"
        )
    return ShapExplanation(base_value=base, contributions=phi, prediction=prediction)
