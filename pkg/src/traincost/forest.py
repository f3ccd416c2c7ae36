"""Random-forest regression: bagged CART trees with variance-reduction splits.

Training is fully deterministic: per-tree randomness derives only from
(config.seed + tree index), split search is exhaustive over midpoint
thresholds with ties broken by lowest feature index then lowest threshold,
and serialization is canonical, so identical inputs produce bit-identical
model files.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ChecksumError, FitError, IoError, ShapeError, VersionError

FORMAT_MARKER = "traincost-forest"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class LeafNode:
    prediction: float  # mean of training targets reaching the leaf
    count: int

    def predict(self, row) -> float:
        return self.prediction


@dataclass(frozen=True)
class InternalNode:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"
    count: int
    gain: float  # total squared-error decrease achieved by this split

    def predict(self, row) -> float:
        node = self
        while isinstance(node, InternalNode):
            node = node.left if row[node.feature_index] <= node.threshold else node.right
        return node.prediction


TreeNode = LeafNode | InternalNode


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None          # None = unlimited
    min_samples_leaf: int = 1
    features_per_split: str | float = "all"   # "all" | "sqrt" | fraction in (0, 1]
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise FitError("n_trees must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise FitError("max_depth must be >= 1 or None")
        if self.min_samples_leaf < 1:
            raise FitError("min_samples_leaf must be >= 1")
        f = self.features_per_split
        if isinstance(f, str):
            if f not in ("all", "sqrt"):
                raise FitError(f"features_per_split must be 'all', 'sqrt' or a fraction, got {f!r}")
        elif not 0 < f <= 1:
            raise FitError(f"features_per_split fraction must be in (0, 1], got {f}")

    def n_candidates(self, n_features: int) -> int:
        if self.features_per_split == "all":
            return n_features
        if self.features_per_split == "sqrt":
            return max(1, math.isqrt(n_features))
        return max(1, math.ceil(self.features_per_split * n_features))


@dataclass(frozen=True)
class Forest:
    trees: tuple[TreeNode, ...]
    config: ForestConfig
    feature_names: tuple[str, ...]
    target_name: str
    target_range: tuple[float, float]
    extractor_version: str = ""


def fit(x, y, config: ForestConfig = ForestConfig(), feature_names=None,
        target_name: str = "target", extractor_version: str = "",
        feature_priority=None) -> Forest:
    """Train a forest on (x, y); each tree sees a bootstrap resample.

    `feature_priority` is the order in which equally-good splits are broken
    (default: column order).  Passing a permuted priority re-maps tie-breaking
    so that training commutes with a column permutation.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise FitError("training matrix must be non-empty and 2-dimensional")
    if y.shape != (x.shape[0],):
        raise FitError(f"targets shape {y.shape} does not match {x.shape[0]} rows")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise FitError("training data contains non-finite values")
    if x.shape[0] < config.min_samples_leaf:
        raise FitError(f"{x.shape[0]} samples < min_samples_leaf={config.min_samples_leaf}")
    if feature_names is None:
        feature_names = tuple(f"f{i}" for i in range(x.shape[1]))
    if len(feature_names) != x.shape[1]:
        raise FitError("feature_names length does not match matrix width")
    if feature_priority is None:
        feature_priority = tuple(range(x.shape[1]))
    elif sorted(feature_priority) != list(range(x.shape[1])):
        raise FitError("feature_priority must be a permutation of the column indices")

    trees = []
    for i in range(config.n_trees):
        # per-tree randomness derives only from (seed, tree index)
        rng = np.random.default_rng((config.seed + i) & 0xFFFFFFFFFFFFFFFF)
        if config.bootstrap:
            idx = rng.integers(0, x.shape[0], x.shape[0])
            xt, yt = x[idx], y[idx]
        else:
            xt, yt = x, y
        trees.append(_grow(xt, yt, config, rng, tuple(feature_priority), depth=0))
    return Forest(trees=tuple(trees), config=config, feature_names=tuple(feature_names),
                  target_name=target_name,
                  target_range=(float(y.min()), float(y.max())),
                  extractor_version=extractor_version)


def _sse(y) -> float:
    return float(((y - y.mean()) ** 2).sum()) if len(y) else 0.0


def _grow(x, y, config: ForestConfig, rng, priority, depth: int) -> TreeNode:
    n = len(y)
    leaf = LeafNode(prediction=float(y.mean()), count=n)
    if (n < 2 * config.min_samples_leaf
            or (config.max_depth is not None and depth >= config.max_depth)
            or np.all(y == y[0])):
        return leaf

    n_features = x.shape[1]
    k = config.n_candidates(n_features)
    if k == n_features:
        candidates = priority
    else:
        chosen = set(rng.choice(n_features, size=k, replace=False).tolist())
        candidates = [j for j in priority if j in chosen]

    parent_sse = _sse(y)
    best = None  # (children_sse, feature, threshold); first in priority wins ties
    for j in candidates:
        found = _best_threshold(x[:, j], y, config.min_samples_leaf)
        if found is None:
            continue
        children_sse, threshold = found
        if best is None or children_sse < best[0]:
            best = (children_sse, j, threshold)

    if best is None:
        return leaf
    children_sse, j, threshold = best
    # a split must never increase the total weighted variance
    assert children_sse <= parent_sse + 1e-9 * max(1.0, parent_sse)

    mask = x[:, j] <= threshold
    left = _grow(x[mask], y[mask], config, rng, priority, depth + 1)
    right = _grow(x[~mask], y[~mask], config, rng, priority, depth + 1)
    return InternalNode(feature_index=int(j), threshold=float(threshold),
                        left=left, right=right, count=n,
                        gain=max(0.0, parent_sse - children_sse))


def _best_threshold(col, y, min_leaf):
    """Lowest-SSE midpoint threshold for one feature, or None."""
    order = np.argsort(col, kind="stable")
    xs, ys = col[order], y[order]
    n = len(ys)
    c1 = np.cumsum(ys)
    c2 = np.cumsum(ys * ys)
    # split after position i (left gets i samples), i in [min_leaf, n-min_leaf],
    # allowed only between strictly different feature values
    i = np.arange(min_leaf, n - min_leaf + 1)
    valid = xs[i - 1] < xs[i]
    i = i[valid]
    if len(i) == 0:
        return None
    left_sum, left_sq = c1[i - 1], c2[i - 1]
    sse_left = left_sq - left_sum ** 2 / i
    sse_right = (c2[-1] - left_sq) - (c1[-1] - left_sum) ** 2 / (n - i)
    total = np.maximum(sse_left, 0.0) + np.maximum(sse_right, 0.0)
    pos = int(np.argmin(total))  # first minimum = lowest threshold
    split_at = int(i[pos])
    threshold = (xs[split_at - 1] + xs[split_at]) / 2.0
    return float(total[pos]), float(threshold)


def predict(forest: Forest, row) -> float:
    """Mean over trees of the leaf each tree routes the row to."""
    row = np.asarray(row, dtype=np.float64)
    if row.shape != (len(forest.feature_names),):
        raise ShapeError(
            f"row has {row.shape} values, model expects {len(forest.feature_names)}")
    votes = [t.predict(row) for t in forest.trees]
    first = votes[0]
    if all(v == first for v in votes):
        return first
    return math.fsum(votes) / len(votes)


def predict_many(forest: Forest, rows) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    return np.array([predict(forest, r) for r in rows])


def feature_importance(forest: Forest) -> dict[str, float]:
    """Impurity-decrease importances, normalized to sum to 1 when any split exists."""
    totals = np.zeros(len(forest.feature_names))

    def walk(node):
        if isinstance(node, InternalNode):
            totals[node.feature_index] += node.gain
            walk(node.left)
            walk(node.right)

    for tree in forest.trees:
        walk(tree)
    s = totals.sum()
    if s > 0:
        totals /= s
    return dict(zip(forest.feature_names, totals.tolist()))


# -- serialization ----------------------------------------------------------


def _node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, LeafNode):
        return {"kind": "leaf", "prediction": node.prediction, "count": node.count}
    return {"kind": "split", "feature": node.feature_index, "threshold": node.threshold,
            "count": node.count, "gain": node.gain,
            "left": _node_to_dict(node.left), "right": _node_to_dict(node.right)}


def _node_from_dict(doc: dict) -> TreeNode:
    if doc["kind"] == "leaf":
        return LeafNode(prediction=float(doc["prediction"]), count=int(doc["count"]))
    return InternalNode(feature_index=int(doc["feature"]), threshold=float(doc["threshold"]),
                        count=int(doc["count"]), gain=float(doc["gain"]),
                        left=_node_from_dict(doc["left"]), right=_node_from_dict(doc["right"]))


def _forest_to_dict(forest: Forest) -> dict:
    cfg = forest.config
    return {
        "format": FORMAT_MARKER,
        "version": FORMAT_VERSION,
        "config": {"n_trees": cfg.n_trees, "max_depth": cfg.max_depth,
                   "min_samples_leaf": cfg.min_samples_leaf,
                   "features_per_split": cfg.features_per_split,
                   "bootstrap": cfg.bootstrap, "seed": cfg.seed},
        "feature_names": list(forest.feature_names),
        "target_name": forest.target_name,
        "target_range": [forest.target_range[0], forest.target_range[1]],
        "extractor_version": forest.extractor_version,
        "trees": [_node_to_dict(t) for t in forest.trees],
    }


def _canonical(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def save(forest: Forest, path) -> None:
    doc = _forest_to_dict(forest)
    doc["checksum"] = hashlib.sha256(_canonical(doc).encode()).hexdigest()
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(_canonical(doc) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write model file {path}: {exc}") from exc


def load(path) -> Forest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read model file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ChecksumError(f"model file is corrupt or truncated: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_MARKER:
        raise VersionError(f"not a {FORMAT_MARKER} file")
    if doc.get("version") != FORMAT_VERSION:
        raise VersionError(f"unsupported model version {doc.get('version')!r}")
    stored = doc.pop("checksum", None)
    if stored != hashlib.sha256(_canonical(doc).encode()).hexdigest():
        raise ChecksumError("model file failed its checksum")
    cfg_doc = doc["config"]
    fps = cfg_doc["features_per_split"]
    config = ForestConfig(n_trees=cfg_doc["n_trees"], max_depth=cfg_doc["max_depth"],
                          min_samples_leaf=cfg_doc["min_samples_leaf"],
                          features_per_split=fps, bootstrap=cfg_doc["bootstrap"],
                          seed=cfg_doc["seed"])
    return Forest(trees=tuple(_node_from_dict(t) for t in doc["trees"]),
                  config=config, feature_names=tuple(doc["feature_names"]),
                  target_name=doc["target_name"],
                  target_range=(float(doc["target_range"][0]), float(doc["target_range"][1])),
                  extractor_version=doc.get("extractor_version", ""))
