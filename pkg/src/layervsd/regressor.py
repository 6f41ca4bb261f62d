"""Gradient-boosted regression trees mapping S-VSD vectors to VSD.

Second-order boosting with squared-error loss: per round one tree is fitted
to the gradient ``g = 2(pred - y)`` and hessian ``h = 2``; leaves get
``-G / (H + lambda)`` and a split is kept only if its gain beats ``gamma``.
Splits are exact greedy over sorted unique feature values.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptModel, DimensionMismatch, EmptyDataset, InvariantViolation
from .media_io import write_atomic

logger = logging.getLogger(__name__)

MODEL_VERSION = 1


@dataclass(frozen=True)
class HyperParams:
    rounds: int = 300
    eta: float = 0.1
    max_depth: int = 16
    reg_lambda: float = 3.0
    gamma: float = 0.1
    subsample: float = 0.7
    colsample: float = 0.7
    min_child_weight: float = 3.0
    seed: int = 1000
    early_stopping: int = 30  # patience in rounds; 0 disables
    validation_fraction: float = 0.1

    def __post_init__(self):
        checks = [
            (self.rounds >= 0, "rounds must be >= 0"),
            (0 < self.eta <= 1, "eta must lie in (0, 1]"),
            (self.max_depth >= 0, "max_depth must be >= 0"),
            (self.reg_lambda >= 0, "lambda must be >= 0"),
            (self.gamma >= 0, "gamma must be >= 0"),
            (0 < self.subsample <= 1, "subsample must lie in (0, 1]"),
            (0 < self.colsample <= 1, "colsample must lie in (0, 1]"),
            (self.min_child_weight >= 0, "min_child_weight must be >= 0"),
            (self.early_stopping >= 0, "early_stopping must be >= 0"),
            (0 <= self.validation_fraction < 1, "validation_fraction must lie in [0, 1)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvariantViolation(msg)


@dataclass
class Tree:
    """Flat binary tree; node 0 is the root, ``feature == -1`` marks a leaf.

    A sample goes left when ``x[feature] < threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            inner = self.feature[node] >= 0
            if not inner.any():
                return node
            f = np.where(inner, self.feature[node], 0)
            go_left = X[rows, f] < self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                nodes.append({"id": i, "leaf": float(self.value[i])})
            else:
                nodes.append({
                    "id": i,
                    "feature": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                })
        return {"nodes": nodes}

    @classmethod
    def from_dict(cls, doc: dict) -> "Tree":
        nodes = doc["nodes"]
        n = len(nodes)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        value = np.zeros(n)
        for i, node in enumerate(nodes):
            if node["id"] != i:
                raise CorruptModel(f"node ids out of order at {i}")
            if "leaf" in node:
                value[i] = float(node["leaf"])
            else:
                feature[i] = int(node["feature"])
                threshold[i] = float(node["threshold"])
                left[i], right[i] = int(node["left"]), int(node["right"])
                if not (i < left[i] < n and i < right[i] < n):
                    raise CorruptModel(f"node {i} has invalid children")
        return cls(feature, threshold, left, right, value)


@dataclass
class GbtModel:
    trees: list[Tree]
    base_score: float
    n_features: int
    hyper: HyperParams = field(default_factory=HyperParams)
    train_loss: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        """Predicted VSD per row, clamped at zero."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        pred = self.raw_predict(X)
        pred = np.maximum(pred, 0.0)
        return pred[0] if single else pred

    def raw_predict(self, X: np.ndarray, n_trees: int | None = None) -> np.ndarray:
        pred = np.full(X.shape[0], self.base_score)
        for tree in self.trees[:n_trees]:
            pred += self.hyper.eta * tree.predict(X)
        return pred


def predict(model: GbtModel, x) -> float | np.ndarray:
    return model.predict(x)


def squared_loss_derivatives(pred, y) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivative of ``(pred - y)**2`` with respect to ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    return 2.0 * (pred - np.asarray(y, dtype=np.float64)), np.full(pred.shape, 2.0)


def split_gain(G_left, H_left, G_right, H_right, reg_lambda, gamma):
    G, H = G_left + G_right, H_left + H_right
    return 0.5 * (G_left**2 / (H_left + reg_lambda) + G_right**2 / (H_right + reg_lambda)
                  - G**2 / (H + reg_lambda)) - gamma


def _best_split(Xn: np.ndarray, g: np.ndarray, h: np.ndarray, hp: HyperParams):
    """Best (column, threshold, gain) over the node's samples, or None.

    Ties resolve to the lowest column, then the lowest threshold.
    """
    n = Xn.shape[0]
    if n < 2:
        return None
    order = np.argsort(Xn, axis=0, kind="stable")
    vals = np.take_along_axis(Xn, order, axis=0)
    GL = np.cumsum(g[order], axis=0)[:-1]
    HL = np.cumsum(h[order], axis=0)[:-1]
    G, H = g.sum(), h.sum()
    GR, HR = G - GL, H - HL
    gain = split_gain(GL, HL, GR, HR, hp.reg_lambda, hp.gamma)
    ok = (vals[1:] > vals[:-1]) & (HL >= hp.min_child_weight) & (HR >= hp.min_child_weight)
    gain = np.where(ok, gain, -np.inf)
    flat = gain.T.ravel()
    best = int(np.argmax(flat))
    if not flat[best] > 0:
        return None
    col, pos = divmod(best, n - 1)
    lo, hi = vals[pos, col], vals[pos + 1, col]
    thr = lo + (hi - lo) / 2
    if not lo < thr <= hi:
        thr = hi
    return col, float(thr), float(flat[best])


def _grow_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, cols: np.ndarray, hp: HyperParams) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        gi, hi = g[idx], h[idx]
        split = None
        if depth < hp.max_depth:
            split = _best_split(X[np.ix_(idx, cols)], gi, hi, hp)
        if split is None:
            value[node] = -gi.sum() / (hi.sum() + hp.reg_lambda)
            continue
        col, thr, _ = split
        f = int(cols[col])
        go_left = X[idx, f] < thr
        feature[node], threshold[node] = f, thr
        left[node], right[node] = new_node(), new_node()
        stack.append((right[node], idx[~go_left], depth + 1))
        stack.append((left[node], idx[go_left], depth + 1))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                np.array(right, dtype=np.int64), np.array(value))


def _sample(rng: np.random.Generator, n: int, fraction: float) -> np.ndarray:
    if fraction >= 1:
        return np.arange(n)
    k = max(1, int(round(n * fraction)))
    return np.sort(rng.choice(n, size=k, replace=False))


def train(X, y, hyper: HyperParams | None = None) -> GbtModel:
    """Fit the boosted ensemble.

    With ``hyper.early_stopping > 0`` and at least 20 rows, a seeded
    ``validation_fraction`` of the rows is held out and the ensemble is cut
    back to the round with the lowest validation error once it has not
    improved for ``early_stopping`` rounds.
    """
    hp = hyper or HyperParams()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyDataset("no training records")
    if X.shape[0] < 2:
        raise EmptyDataset("need at least 2 training records")
    if y.shape != (X.shape[0],):
        raise DimensionMismatch(f"{X.shape[0]} feature rows but {y.size} targets")
    if (y < 0).any():
        raise InvariantViolation("VSD targets must be non-negative")
    n, d = X.shape
    rng = np.random.default_rng(np.random.SeedSequence([hp.seed, 0]))

    fit_idx, val_idx = np.arange(n), np.array([], dtype=int)
    if hp.early_stopping and hp.validation_fraction > 0 and n >= 20:
        perm = rng.permutation(n)
        n_val = max(1, int(round(n * hp.validation_fraction)))
        val_idx, fit_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    Xf, yf = X[fit_idx], y[fit_idx]
    Xv, yv = X[val_idx], y[val_idx]

    base = float(yf.mean())
    model = GbtModel([], base, d, hp)
    if np.all(Xf.max(axis=0) == Xf.min(axis=0)):
        logger.info("all features constant; model reduces to the base score")
        return model

    pred = np.full(yf.size, base)
    pred_v = np.full(yv.size, base)
    best_round, best_val = 0, np.inf
    if yv.size:
        best_val = float(np.mean((pred_v - yv) ** 2))
    n_cols = max(1, int(round(d * hp.colsample)))
    for m in range(hp.rounds):
        rows = _sample(rng, yf.size, hp.subsample)
        cols = np.sort(rng.choice(d, size=n_cols, replace=False)) if n_cols < d else np.arange(d)
        g, h = squared_loss_derivatives(pred[rows], yf[rows])
        tree = _grow_tree(Xf[rows], g, h, cols, hp)
        model.trees.append(tree)
        pred += hp.eta * tree.predict(Xf)
        model.train_loss.append(float(np.mean((pred - yf) ** 2)))
        if yv.size:
            pred_v += hp.eta * tree.predict(Xv)
            val = float(np.mean((pred_v - yv) ** 2))
            model.valid_loss.append(val)
            if val < best_val:
                best_round, best_val = m + 1, val
            elif m + 1 - best_round >= hp.early_stopping:
                logger.info("early stop at round %d (best %d)", m + 1, best_round)
                break
    if yv.size:
        del model.trees[best_round:]
        del model.train_loss[best_round:]
    return model


@dataclass
class LinearModel:
    weights: np.ndarray
    intercept: float

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.weights.size:
            raise DimensionMismatch(f"linear model expects {self.weights.size} features")
        return X @ self.weights + self.intercept

    def to_dict(self) -> dict:
        return {"kind": "linear", "weights": [float(w) for w in self.weights], "intercept": float(self.intercept)}

    @classmethod
    def from_dict(cls, doc: dict) -> "LinearModel":
        return cls(np.array(doc["weights"], dtype=np.float64), float(doc["intercept"]))


def train_linear(X, y, ridge: float = 1e-8) -> LinearModel:
    """Least squares via the normal equations on centred data."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyDataset("no training records")
    n, d = X.shape
    if n < d + 1:
        raise EmptyDataset(f"need at least {d + 1} records for {d} features, got {n}")
    mu, ybar = X.mean(axis=0), y.mean()
    Xc = X - mu
    A = Xc.T @ Xc + ridge * np.eye(d)
    w = np.linalg.solve(A, Xc.T @ (y - ybar))
    return LinearModel(w, float(ybar - mu @ w))


def model_to_dict(model: GbtModel) -> dict:
    return {
        "version": MODEL_VERSION,
        "kind": "gbt",
        "n_features": model.n_features,
        "base_score": model.base_score,
        "hyper": asdict(model.hyper),
        "train_loss": model.train_loss,
        "trees": [t.to_dict() for t in model.trees],
    }


def model_from_dict(doc: dict) -> GbtModel:
    try:
        if doc.get("version") != MODEL_VERSION:
            raise CorruptModel(f"unsupported model version {doc.get('version')!r}")
        model = GbtModel(
            trees=[Tree.from_dict(t) for t in doc["trees"]],
            base_score=float(doc["base_score"]),
            n_features=int(doc["n_features"]),
            hyper=HyperParams(**doc["hyper"]),
            train_loss=[float(v) for v in doc.get("train_loss", [])],
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CorruptModel):
            raise
        raise CorruptModel(f"malformed model document: {exc}") from exc
    for tree in model.trees:
        if (tree.feature >= model.n_features).any():
            raise CorruptModel("split feature index exceeds the feature dimension")
    return model


def save_model(path, model: GbtModel | LinearModel) -> None:
    doc = model.to_dict() if isinstance(model, LinearModel) else model_to_dict(model)
    write_atomic(path, json.dumps(doc) + "\n")


def load_model(path) -> GbtModel | LinearModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptModel(f"{path}: cannot read model ({exc})") from exc
    if not isinstance(doc, dict):
        raise CorruptModel(f"{path}: not a model document")
    if doc.get("kind") == "linear":
        try:
            return LinearModel.from_dict(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptModel(f"{path}: malformed linear model ({exc})") from exc
    return model_from_dict(doc)
