"""From-scratch Random Forest for instant leak detection on 4-channel readings.

Trees split on class-weighted Gini with midpoint thresholds; ties resolve to
the lower feature index, then the lower threshold, so two correct
implementations of this contract produce identical forests from the same
seed. Bootstrap sampling is stratified per class, which guarantees every
tree trains on at least one leak sample even at 5% prevalence.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels as K
from .model import CHANNELS, DetectionResult, SensorReading

MODEL_VERSION = 1
N_CHANNELS = len(CHANNELS)


@dataclass(frozen=True)
class _Tree:
    feature: np.ndarray    # int16, -1 marks a leaf
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    vote: np.ndarray       # int8, meaningful at leaves

    def depth(self) -> int:
        def walk(node: int) -> int:
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(int(self.left[node])), walk(int(self.right[node])))

        return walk(0)


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[_Tree, ...]
    n_features: int
    class_weights: tuple[float, float]
    importances: tuple[float, ...]
    train_f1: float
    seed: int
    max_depth: int

    def vote_score(self, x: np.ndarray) -> np.ndarray | float:
        """Fraction of trees voting leak, for x shaped (d,) or (n, d)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[np.newaxis, :]
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {x.shape}")
        if not np.isfinite(x).all():
            raise ValueError("non-finite feature value")
        rows = np.arange(x.shape[0])
        votes = np.zeros(x.shape[0])
        for tree in self.trees:
            node = np.zeros(x.shape[0], dtype=np.int32)
            # Every path hits a leaf within max_depth steps by construction.
            for _ in range(self.max_depth + 1):
                feat = tree.feature[node]
                active = feat >= 0
                if not active.any():
                    break
                nxt = node.copy()
                act_rows = rows[active]
                go_left = x[act_rows, feat[active]] <= tree.threshold[node[active]]
                nxt[act_rows] = np.where(
                    go_left, tree.left[node[active]], tree.right[node[active]]
                )
                node = nxt
            votes += tree.vote[node]
        score = votes / len(self.trees)
        return float(score[0]) if single else score


class _TreeBuilder:
    def __init__(self, x: np.ndarray, y: np.ndarray, w0: float, w1: float,
                 max_depth: int, mtry: int, rng: np.random.Generator,
                 importance_acc: np.ndarray):
        self.x = x
        self.y = y
        self.w0 = w0
        self.w1 = w1
        self.max_depth = max_depth
        self.mtry = mtry
        self.rng = rng
        self.importance_acc = importance_acc
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.vote: list[int] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.vote.append(0)
        return len(self.feature) - 1

    def _leaf(self, node: int, n0: int, n1: int) -> None:
        # Weighted majority; exact tie goes to the leak class (failing loud
        # beats failing silent for a safety alarm).
        self.vote[node] = 1 if self.w1 * n1 >= self.w0 * n0 else 0

    def build(self, idx: np.ndarray, depth: int) -> int:
        node = self._new_node()
        n1 = int(self.y[idx].sum())
        n0 = idx.size - n1
        if n1 == 0 or n0 == 0 or depth >= self.max_depth:
            self._leaf(node, n0, n1)
            return node

        n_feats = self.x.shape[1]
        feats = np.sort(self.rng.choice(n_feats, size=min(self.mtry, n_feats), replace=False))
        best = (np.inf, -1, -1)  # impurity, feature, left-partition size
        best_order = None
        for f in feats:
            order = idx[np.argsort(self.x[idx, f], kind="stable")]
            vals = np.ascontiguousarray(self.x[order, f])
            labs = np.ascontiguousarray(self.y[order].astype(np.int64))
            imp, pos = K.best_split_scan(vals, labs, self.w0, self.w1)
            if pos >= 0 and imp < best[0] - 1e-12:
                best = (imp, int(f), pos)
                best_order = order
        if best[1] < 0:
            self._leaf(node, n0, n1)
            return node

        imp, f, pos = best
        vals = self.x[best_order, f]
        wl1 = self.w1 * n1
        wl0 = self.w0 * n0
        node_w = wl1 + wl0
        p1 = wl1 / node_w
        gini_parent = 2.0 * p1 * (1.0 - p1)
        self.importance_acc[f] += node_w * (gini_parent - imp)

        self.feature[node] = f
        self.threshold[node] = float(0.5 * (vals[pos - 1] + vals[pos]))
        self.left[node] = self.build(best_order[:pos], depth + 1)
        self.right[node] = self.build(best_order[pos:], depth + 1)
        return node

    def freeze(self) -> _Tree:
        return _Tree(
            feature=np.array(self.feature, dtype=np.int16),
            threshold=np.array(self.threshold, dtype=np.float64),
            left=np.array(self.left, dtype=np.int32),
            right=np.array(self.right, dtype=np.int32),
            vote=np.array(self.vote, dtype=np.int8),
        )


def f1_score(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """F1 for the positive (leak) class; 0 when no true positive exists."""
    y_true = np.asarray(y_true, dtype=bool)
    y_pred = np.asarray(y_pred, dtype=bool)
    tp = int((y_true & y_pred).sum())
    fp = int((~y_true & y_pred).sum())
    fn = int((y_true & ~y_pred).sum())
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def fit(x: np.ndarray, y: np.ndarray, n_trees: int = 100, max_depth: int = 15,
        seed: int = 1234) -> ForestModel:
    """Train the forest; deterministic for a fixed seed.

    mtry is ceil(sqrt(d)) features per split: 2 for the standard 4-channel
    detector, scaled accordingly for ablation subsets.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=bool)
    if x.ndim != 2:
        raise ValueError("feature matrix must be 2-D")
    n, d = x.shape
    n1 = int(y.sum())
    n0 = n - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("training data must contain both classes")
    w0 = n / (2.0 * n0)
    w1 = n / (2.0 * n1)
    mtry = math.ceil(math.sqrt(d))

    idx0 = np.flatnonzero(~y)
    idx1 = np.flatnonzero(y)
    importance_acc = np.zeros(d)
    trees: list[_Tree] = []
    for t in range(n_trees):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, t))))
        boot = np.concatenate(
            (rng.choice(idx0, size=n0, replace=True), rng.choice(idx1, size=n1, replace=True))
        )
        builder = _TreeBuilder(x, y, w0, w1, max_depth, mtry, rng, importance_acc)
        builder.build(boot, 0)
        trees.append(builder.freeze())

    total = importance_acc.sum()
    importances = importance_acc / total if total > 0 else np.full(d, 1.0 / d)
    model = ForestModel(
        trees=tuple(trees),
        n_features=d,
        class_weights=(w0, w1),
        importances=tuple(float(v) for v in importances),
        train_f1=0.0,
        seed=seed,
        max_depth=max_depth,
    )
    return dataclasses.replace(model, train_f1=f1_score(y, model.vote_score(x) >= 0.5))


def predict(model: ForestModel, reading) -> DetectionResult:
    """Classify one reading; accepts a SensorReading or a bare 4-vector."""
    if isinstance(reading, SensorReading):
        vec = np.array(reading.channel_values(), dtype=np.float64)
        issued_at, rack_id = reading.timestamp, reading.rack_id
    else:
        vec = np.asarray(reading, dtype=np.float64)
        issued_at, rack_id = 0, ""
    if vec.shape != (model.n_features,):
        raise ValueError(f"expected a {model.n_features}-channel reading, got shape {vec.shape}")
    score = float(model.vote_score(vec))
    return DetectionResult(
        issued_at=issued_at, rack_id=rack_id, is_leak=score >= 0.5, vote_score=score
    )


def feature_importance(model: ForestModel) -> dict[str, float]:
    """Normalized mean decrease in weighted Gini impurity per channel."""
    if model.n_features != N_CHANNELS:
        raise ValueError("per-channel importances need the full 4-channel model")
    return dict(zip(CHANNELS, model.importances))


def cross_val_f1(x: np.ndarray, y: np.ndarray, folds: int = 5, n_trees: int = 100,
                 max_depth: int = 15, seed: int = 1234) -> float:
    """Stratified k-fold CV; returns pooled F1 for the leak class."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=bool)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0xF01D))))
    assignment = np.empty(y.size, dtype=np.int32)
    for cls in (False, True):
        members = rng.permutation(np.flatnonzero(y == cls))
        assignment[members] = np.arange(members.size) % folds
    y_pred = np.zeros(y.size, dtype=bool)
    for k in range(folds):
        test = assignment == k
        model = fit(x[~test], y[~test], n_trees=n_trees, max_depth=max_depth,
                    seed=seed + 1 + k)
        y_pred[test] = model.vote_score(x[test]) >= 0.5
    return f1_score(y, y_pred)


def ablate(features: Sequence[str], x: np.ndarray, y: np.ndarray,
           folds: int = 5, n_trees: int = 100, max_depth: int = 15,
           seed: int = 1234) -> float:
    """CV F1 using only the named channels (columns of x in CHANNELS order)."""
    if not features:
        raise ValueError("feature subset must be non-empty")
    cols = [CHANNELS.index(f) for f in features]
    sub = np.ascontiguousarray(np.asarray(x, dtype=np.float64)[:, cols])
    return cross_val_f1(sub, y, folds=folds, n_trees=n_trees, max_depth=max_depth, seed=seed)


def dump(model: ForestModel, path: str | Path) -> None:
    """Versioned JSON dump of every tree's node arrays."""
    doc = {
        "version": MODEL_VERSION,
        "seed": model.seed,
        "n_features": model.n_features,
        "max_depth": model.max_depth,
        "class_weights": list(model.class_weights),
        "importances": list(model.importances),
        "train_f1": model.train_f1,
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "vote": t.vote.tolist(),
            }
            for t in model.trees
        ],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load(path: str | Path) -> ForestModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc["version"] != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc['version']}")
    trees = tuple(
        _Tree(
            feature=np.array(t["feature"], dtype=np.int16),
            threshold=np.array(t["threshold"], dtype=np.float64),
            left=np.array(t["left"], dtype=np.int32),
            right=np.array(t["right"], dtype=np.int32),
            vote=np.array(t["vote"], dtype=np.int8),
        )
        for t in doc["trees"]
    )
    return ForestModel(
        trees=trees,
        n_features=doc["n_features"],
        class_weights=tuple(doc["class_weights"]),
        importances=tuple(doc["importances"]),
        train_f1=doc["train_f1"],
        seed=doc["seed"],
        max_depth=doc["max_depth"],
    )
