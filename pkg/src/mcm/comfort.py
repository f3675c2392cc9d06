"""Per-passenger comfort model.

A boosted ensemble of regression trees fitted to the weighted logistic loss
with Newton (gradient/hessian) leaf weights and L2 leaf regularization. The
comfort zone is the sublevel set ``{x : score(x) < epsilon}``; since every
tree splits on ``x[d] < threshold``, the score is constant on the grid cells
cut out by all thresholds, which lets ``extract_region`` return that set
exactly as a union of disjoint boxes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional, Union

import numpy as np

from .features import FEATURE_NAMES, LabeledDataset, class_weights as _class_weights
from .geometry import (
    BoundingDomain,
    DimensionMismatch,
    HyperRect,
    RegionUnion,
    mc_region_intersect_volume,
    union_intersect_volume,
    volume,
)

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
DEFAULT_CELL_BUDGET = 2_000_000
MAX_BACKTRACK = 40


class CellBudgetExceeded(RuntimeError):
    def __init__(self, cells: int, budget: int):
        super().__init__(f"threshold grid has {cells} cells, budget is {budget}")
        self.cells = cells
        self.budget = budget


@dataclass
class SplitNode:
    """Hand-buildable tree node. Internal nodes send ``x[feature] < threshold`` left."""

    feature: int = -1
    threshold: float = 0.0
    left: Optional["SplitNode"] = None
    right: Optional["SplitNode"] = None
    leaf_value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(frozen=True, eq=False)
class Tree:
    """Flattened tree. ``feature[k] == -1`` marks a leaf; node 0 is the root."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        for name, dtype in (("feature", int), ("threshold", float), ("left", int), ("right", int), ("value", float)):
            arr = np.asarray(getattr(self, name), dtype=dtype).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not np.all(np.isfinite(self.value)):
            raise ValueError("leaf values must be finite")

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @classmethod
    def from_node(cls, root: SplitNode) -> "Tree":
        feature, threshold, left, right, value = [], [], [], [], []

        def visit(node: SplitNode) -> int:
            k = len(feature)
            feature.append(-1 if node.is_leaf else node.feature)
            threshold.append(0.0 if node.is_leaf else node.threshold)
            value.append(node.leaf_value if node.is_leaf else 0.0)
            left.append(-1)
            right.append(-1)
            if not node.is_leaf:
                left[k] = visit(node.left)
                right[k] = visit(node.right)
            return k

        visit(root)
        return cls(feature, threshold, left, right, value)

    @classmethod
    def leaf(cls, value: float) -> "Tree":
        return cls([-1], [0.0], [-1], [-1], [value])

    @classmethod
    def stump(cls, feature: int, threshold: float, left_value: float, right_value: float) -> "Tree":
        return cls.from_node(SplitNode(feature, threshold, SplitNode(leaf_value=left_value), SplitNode(leaf_value=right_value)))

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        node = np.zeros(len(X), dtype=int)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            inner = feat >= 0
            if not inner.any():
                break
            go_left = X[rows[inner], feat[inner]] < self.threshold[node[inner]]
            node[inner] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])
        return self.value[node]

    def scaled(self, factor: float) -> "Tree":
        return Tree(self.feature, self.threshold, self.left, self.right, self.value * factor)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["value"])


@dataclass(frozen=True)
class Hyperparameters:
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    min_child_weight: float = 1.0
    min_split_gain: float = 0.0

    def __post_init__(self):
        if self.n_trees < 0 or self.max_depth < 0:
            raise ValueError("n_trees and max_depth must be non-negative")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.reg_lambda < 0 or self.min_child_weight < 0:
            raise ValueError("reg_lambda and min_child_weight must be non-negative")


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


@dataclass(frozen=True)
class BoostedModel:
    trees: tuple[Tree, ...]
    feature_count: int
    epsilon: float = 0.5
    learning_rate: float = 0.1
    base_score: float = 0.0
    class_weights: tuple[float, float] = (1.0, 1.0)
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must be in (0, 1)")
        for t in self.trees:
            if np.any(t.feature >= self.feature_count):
                raise ValueError("tree references a feature index >= feature_count")
        if not self.feature_names:
            names = FEATURE_NAMES if self.feature_count == len(FEATURE_NAMES) else tuple(f"x{d}" for d in range(self.feature_count))
            object.__setattr__(self, "feature_names", names)

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X)
        total = np.zeros(len(X))
        for t in self.trees:
            total += t.predict(X)
        return self.base_score + self.learning_rate * total

    def score(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.margin(X))

    def classify(self, X: np.ndarray) -> np.ndarray:
        return (self.score(X) >= self.epsilon).astype(int)

    def comfortable(self, X: np.ndarray) -> np.ndarray:
        return self.score(X) < self.epsilon

    def with_epsilon(self, epsilon: float) -> "BoostedModel":
        return BoostedModel(self.trees, self.feature_count, epsilon, self.learning_rate, self.base_score,
                            self.class_weights, self.hyper, self.feature_names)

    def thresholds(self) -> list[np.ndarray]:
        """Sorted distinct split thresholds per feature."""
        per_dim: list[list[np.ndarray]] = [[] for _ in range(self.feature_count)]
        for t in self.trees:
            inner = t.feature >= 0
            for d, th in zip(t.feature[inner], t.threshold[inner]):
                per_dim[d].append(th)
        return [np.unique(np.asarray(v, dtype=float)) for v in per_dim]

    def _check(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.feature_count:
            raise DimensionMismatch(f"expected {self.feature_count} features, got {X.shape[1]}")
        return X

    def to_dict(self) -> dict:
        return {
            "format": "mcm-boosted-model",
            "version": MODEL_FORMAT_VERSION,
            "feature_names": list(self.feature_names),
            "feature_count": self.feature_count,
            "epsilon": self.epsilon,
            "learning_rate": self.learning_rate,
            "base_score": self.base_score,
            "class_weights": list(self.class_weights),
            "hyperparameters": asdict(self.hyper),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedModel":
        if d.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        return cls(
            trees=tuple(Tree.from_dict(t) for t in d["trees"]),
            feature_count=int(d["feature_count"]),
            epsilon=float(d["epsilon"]),
            learning_rate=float(d["learning_rate"]),
            base_score=float(d["base_score"]),
            class_weights=tuple(d["class_weights"]),
            hyper=Hyperparameters(**d["hyperparameters"]),
            feature_names=tuple(d["feature_names"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "BoostedModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def score(model: BoostedModel, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("score takes a single feature vector; use model.score for batches")
    return float(model.score(x)[0])


def classify(model: BoostedModel, x) -> int:
    return int(score(model, x) >= model.epsilon)


# --- training -------------------------------------------------------------


def weighted_logloss(margin: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    # softplus(m) - y*m, stable for large |m|
    return float(np.sum(w * (np.logaddexp(0.0, margin) - y * margin)))


def _best_split(X: np.ndarray, g: np.ndarray, h: np.ndarray, hp: Hyperparameters):
    """Exact greedy search over all features. Returns ``(gain, feature, threshold)`` or None."""
    n, N = X.shape
    if n < 2:
        return None
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    GL = np.cumsum(g[order], axis=0)[:-1]
    HL = np.cumsum(h[order], axis=0)[:-1]
    G, H = g.sum(), h.sum()
    GR, HR = G - GL, H - HL
    lam = hp.reg_lambda
    gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam))
    valid = (xs[1:] > xs[:-1]) & (HL >= hp.min_child_weight) & (HR >= hp.min_child_weight)
    gain = np.where(valid, gain, -np.inf)
    # column-major argmax: lowest feature index wins ties, then lowest position
    flat = int(np.argmax(gain.T))
    d, k = divmod(flat, n - 1)
    best = gain[k, d]
    if not np.isfinite(best) or best <= hp.min_split_gain:
        return None
    lo, hi = xs[k, d], xs[k + 1, d]
    thr = 0.5 * (lo + hi)
    if not lo < thr <= hi:
        thr = hi
    return float(best), int(d), float(thr)


def _grow_tree(X: np.ndarray, g: np.ndarray, h: np.ndarray, hp: Hyperparameters) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def build(idx: np.ndarray, depth: int) -> int:
        k = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        G, H = g[idx].sum(), h[idx].sum()
        value.append(float(-G / (H + hp.reg_lambda)) if H + hp.reg_lambda > 0 else 0.0)
        if depth >= hp.max_depth:
            return k
        split = _best_split(X[idx], g[idx], h[idx], hp)
        if split is None:
            return k
        _, d, thr = split
        mask = X[idx, d] < thr
        feature[k], threshold[k], value[k] = d, thr, 0.0
        left[k] = build(idx[mask], depth + 1)
        right[k] = build(idx[~mask], depth + 1)
        return k

    build(np.arange(len(X)), 0)
    return Tree(feature, threshold, left, right, value)


def _xy(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, LabeledDataset):
        return data.X, data.y.astype(float)
    X, y = data
    return np.atleast_2d(np.asarray(X, dtype=float)), np.asarray(y, dtype=float).reshape(-1)


def train(
    data: Union[LabeledDataset, tuple[np.ndarray, np.ndarray]],
    hyper: Optional[Hyperparameters] = None,
    weights: Optional[tuple[float, float]] = None,
    epsilon: float = 0.5,
) -> BoostedModel:
    """Fit a boosted ensemble to ``data`` (a LabeledDataset or an ``(X, y)`` pair).

    ``weights`` are per-class multipliers on gradients and hessians; None
    means inverse-frequency class weights. A tree that would raise the
    training loss has its leaves halved until it does not, so the weighted
    training loss never increases as trees are added.
    """
    hp = hyper or Hyperparameters()
    X, y = _xy(data)
    if X.size == 0 or len(X) != len(y) or np.all(y == y[0]):
        raise ValueError("training data needs at least one row of each class")
    if not np.all(np.isfinite(X)):
        raise ValueError("training features must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    w0, w1 = weights if weights is not None else _class_weights(y.astype(int))
    w = np.where(y == 1, w1, w0)

    base = float(np.log(np.sum(w * y) / np.sum(w * (1 - y))))
    margin = np.full(len(y), base)
    loss = weighted_logloss(margin, y, w)
    trees = []
    for t in range(hp.n_trees):
        p = sigmoid(margin)
        g = w * (p - y)
        h = w * p * (1 - p)
        tree = _grow_tree(X, g, h, hp)
        step = hp.learning_rate * tree.predict(X)
        new_loss = weighted_logloss(margin + step, y, w)
        halvings = 0
        while new_loss > loss and halvings < MAX_BACKTRACK:
            tree = tree.scaled(0.5)
            step = hp.learning_rate * tree.predict(X)
            new_loss = weighted_logloss(margin + step, y, w)
            halvings += 1
        if new_loss > loss:
            tree, step, new_loss = tree.scaled(0.0), np.zeros_like(step), loss
        if halvings:
            log.debug("tree %d: leaf values halved %d times", t, halvings)
        trees.append(tree)
        margin = margin + step
        loss = new_loss

    return BoostedModel(
        trees=tuple(trees),
        feature_count=X.shape[1],
        epsilon=epsilon,
        learning_rate=hp.learning_rate,
        base_score=base,
        class_weights=(float(w0), float(w1)),
        hyper=hp,
    )


def training_loss_curve(model: BoostedModel, data) -> np.ndarray:
    """Weighted training loss after 0, 1, ..., T trees (accumulated in training order)."""
    X, y = _xy(data)
    w = np.where(y == 1, model.class_weights[1], model.class_weights[0])
    margin = np.full(len(y), model.base_score)
    out = [weighted_logloss(margin, y, w)]
    for t in model.trees:
        margin = margin + model.learning_rate * t.predict(X)
        out.append(weighted_logloss(margin, y, w))
    return np.array(out)


# --- comfort region -------------------------------------------------------


@dataclass(frozen=True)
class ComfortRegion:
    region: RegionUnion
    epsilon_used: float
    domain: BoundingDomain

    def contains(self, X: np.ndarray) -> np.ndarray:
        return self.region.contains(X)

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon_used, "domain": self.domain.to_dict(), "region": self.region.to_dict()}


def grid_edges(model: BoostedModel, domain: BoundingDomain) -> list[np.ndarray]:
    if domain.dim != model.feature_count:
        raise DimensionMismatch(f"domain has {domain.dim} dimensions, model {model.feature_count}")
    lo, hi = domain.bounds.lo, domain.bounds.hi
    edges = []
    for d, th in enumerate(model.thresholds()):
        inner = th[(th > lo[d]) & (th < hi[d])]
        edges.append(np.concatenate([[lo[d]], inner, [hi[d]]]))
    return edges


def cell_count(model: BoostedModel, domain: BoundingDomain) -> int:
    n = 1
    for e in grid_edges(model, domain):
        n *= len(e) - 1
    return n


def _merge_cells(keep: np.ndarray) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Greedy cover of the True cells by disjoint index boxes ``[start, stop)``.

    Each box starts at the first uncovered cell in C order and grows along
    axis 0, then 1, ..., as long as the whole slab stays kept and uncovered.
    """
    free = keep.copy()
    boxes = []
    shape = keep.shape
    for flat in np.flatnonzero(keep):
        start = np.unravel_index(flat, shape)
        if not free[start]:
            continue
        stop = [s + 1 for s in start]
        for ax in range(keep.ndim):
            while stop[ax] < shape[ax]:
                slab = tuple(
                    slice(stop[ax], stop[ax] + 1) if a == ax else slice(start[a], stop[a]) for a in range(keep.ndim)
                )
                if not free[slab].all():
                    break
                stop[ax] += 1
        free[tuple(slice(a, b) for a, b in zip(start, stop))] = False
        boxes.append((tuple(int(s) for s in start), tuple(stop)))
    return boxes


def extract_region(
    model: BoostedModel,
    domain: BoundingDomain,
    cell_budget: int = DEFAULT_CELL_BUDGET,
    epsilon: Optional[float] = None,
    chunk: int = 262144,
) -> ComfortRegion:
    """The comfort set ``{x in domain : score(x) < epsilon}`` as disjoint boxes.

    Raises CellBudgetExceeded when the threshold grid has more than
    ``cell_budget`` cells.
    """
    eps = model.epsilon if epsilon is None else epsilon
    edges = grid_edges(model, domain)
    shape = tuple(len(e) - 1 for e in edges)
    n_cells = 1
    for s in shape:
        n_cells *= s
    if n_cells > cell_budget:
        raise CellBudgetExceeded(n_cells, cell_budget)

    centers = [0.5 * (e[:-1] + e[1:]) for e in edges]
    keep = np.empty(n_cells, dtype=bool)
    for start in range(0, n_cells, chunk):
        idx = np.unravel_index(np.arange(start, min(start + chunk, n_cells)), shape)
        pts = np.stack([c[i] for c, i in zip(centers, idx)], axis=1)
        keep[start : start + len(pts)] = model.score(pts) < eps
    keep = keep.reshape(shape)

    boxes = [
        HyperRect([e[a] for e, a in zip(edges, start)], [e[b] for e, b in zip(edges, stop)])
        for start, stop in _merge_cells(keep)
    ]
    return ComfortRegion(RegionUnion(model.feature_count, tuple(boxes)), eps, domain)


class CompatScore(NamedTuple):
    value: float
    std_error: float
    mode: str


def compatibility(
    source: Union[BoostedModel, ComfortRegion],
    zone: HyperRect,
    domain: BoundingDomain,
    mode: str = "exact",
    mc_samples: int = 100_000,
    seed: int = 0,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> CompatScore:
    """Fraction of the driver zone (clipped to ``domain``) that lies in the comfort set.

    ``mode`` is ``"exact"``, ``"mc"`` or ``"auto"`` (exact when the threshold
    grid fits in ``cell_budget``, Monte Carlo otherwise). Monte Carlo needs a
    model, not a pre-extracted region.
    """
    if mode not in ("exact", "mc", "auto"):
        raise ValueError(f"unknown compatibility mode {mode!r}")
    dim = source.feature_count if isinstance(source, BoostedModel) else source.region.dimension
    if zone.dim != dim or domain.dim != dim:
        raise DimensionMismatch(f"zone/domain dimensions {zone.dim}/{domain.dim} vs model {dim}")
    clipped = zone.clip(domain.bounds)
    vol = volume(clipped)
    if vol <= 0.0:
        return CompatScore(0.0, 0.0, "exact" if mode == "auto" else mode)

    if mode == "auto":
        region_model = source if isinstance(source, BoostedModel) else None
        mode = "exact" if region_model is None or cell_count(region_model, domain) <= cell_budget else "mc"

    if mode == "exact":
        region = source if isinstance(source, ComfortRegion) else extract_region(source, domain, cell_budget)
        raw = union_intersect_volume(region.region, clipped)
        return CompatScore(min(max(raw / vol, 0.0), 1.0), 0.0, "exact")

    if not isinstance(source, BoostedModel):
        raise TypeError("Monte Carlo compatibility needs the model's membership test")
    est, se = mc_region_intersect_volume(source.comfortable, clipped, domain, mc_samples, seed)
    return CompatScore(est / vol, se / vol, "mc")
