"""Privacy-aware tree minimizer.

Grows a decision tree best-first under a criterion that mixes label Gini
impurity (minimized) with the Gini impurity of personal attributes
(maximized), then collapses the tree's split thresholds into a strict
per-attribute generalization that preserves the tree's predictions.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from vdm.dataset import DatasetView
from vdm.generalize import AttrMap, Generalization

REDUCTION_EPS = 1e-12  # guards against fp noise counting as an improving split


@dataclass(frozen=True)
class PatConfig:
    alpha: float
    max_leaves: int
    min_samples_leaf: int = 100
    # candidate orderings for discrete attribute values, tried at the root
    orderings: tuple[str, ...] = ("label_rate", "frequency", "natural")

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.max_leaves < 1 or self.min_samples_leaf < 1:
            raise ValueError("max_leaves and min_samples_leaf must be positive")


def _gini_term(counts: np.ndarray, total, cardinality: int):
    """Normalized multi-class Gini V/(V-1) * (1 - sum p^2); vectorizable."""
    p = counts / total
    base = 1.0 - (p * p).sum(axis=-1)
    return cardinality / (cardinality - 1.0) * base


def pgini(label_counts: np.ndarray, personal_counts: list[np.ndarray],
          alpha: float) -> float:
    """Privacy-aware Gini of a sample set given class-count vectors.

    ``label_counts`` has one entry per target class; ``personal_counts`` one
    count vector per personal attribute (full declared cardinality each).
    A personal attribute of cardinality 1 contributes 0 (with a warning).
    """
    n = label_counts.sum()
    if n <= 0:
        raise ValueError("empty sample set")
    utility = _gini_term(np.asarray(label_counts, dtype=float), n, len(label_counts))
    if personal_counts:
        acc = 0.0
        for counts in personal_counts:
            if len(counts) < 2:
                warnings.warn("personal attribute with a single class contributes no "
                              "privacy signal", stacklevel=2)
                continue
            acc += _gini_term(np.asarray(counts, dtype=float), n, len(counts))
        privacy = 1.0 - acc / len(personal_counts)
    else:
        privacy = 0.0
    return float((1.0 - alpha) * utility + alpha * privacy)


@dataclass
class Node:
    node_id: int
    size: int
    majority: int  # 0-based majority label
    attr: int | None = None  # schema column index of the split attribute
    threshold: float | None = None  # continuous split: x <= threshold goes left
    cut: int | None = None  # discrete split: ordering position <= cut goes left
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.attr is None


@dataclass
class PatTree:
    root: Node
    config: PatConfig
    schema: list
    orderings: dict[int, tuple[int, ...]]  # attr column -> value order (1-based values)

    def n_leaves(self) -> int:
        def count(node):
            return 1 if node.is_leaf else count(node.left) + count(node.right)

        return count(self.root)

    def predict_row(self, row: np.ndarray) -> int:
        node = self.root
        while not node.is_leaf:
            if node.threshold is not None:
                go_left = row[node.attr] <= node.threshold
            else:
                pos = self.orderings[node.attr].index(int(row[node.attr])) + 1
                go_left = pos <= node.cut
            node = node.left if go_left else node.right
        return node.majority

    def predict(self, values: np.ndarray) -> np.ndarray:
        return np.array([self.predict_row(values[i]) for i in range(values.shape[0])])

    def to_json(self) -> dict:
        def encode(node):
            if node.is_leaf:
                return {"size": node.size, "majority": node.majority}
            return {
                "attr": self.schema[node.attr].name,
                "threshold": node.threshold,
                "cut": node.cut,
                "left": encode(node.left),
                "right": encode(node.right),
            }

        return {
            "alpha": self.config.alpha,
            "max_leaves": self.config.max_leaves,
            "orderings": {self.schema[j].name: list(o) for j, o in self.orderings.items()},
            "root": encode(self.root),
        }


class _LeafData:
    """Working state of one growable leaf during best-first construction."""

    __slots__ = ("node", "rows", "best")

    def __init__(self, node: Node, rows: np.ndarray):
        self.node = node
        self.rows = rows
        self.best = None  # (weighted_child, attr, cut_or_threshold, reduction)


class _FitContext:
    def __init__(self, view: DatasetView, config: PatConfig):
        self.config = config
        rows = view.rows("train")
        if len(rows) == 0:
            raise ValueError("empty training set")
        self.X = view.values[rows]
        self.y = view.targets(rows)
        self.schema = view.schema
        self.n_classes = view.schema[view.target_index].cardinality
        self.feature_cols = view.feature_indices
        self.personal = [
            (j, view.schema[j].cardinality)
            for j in view.personal_indices
            if view.schema[j].kind == "discrete"
        ]
        self.y_onehot = np.zeros((len(rows), self.n_classes))
        self.y_onehot[np.arange(len(rows)), self.y] = 1.0
        self.p_onehot = {}
        for j, card in self.personal:
            oh = np.zeros((len(rows), card))
            oh[np.arange(len(rows)), self.X[:, j].astype(int) - 1] = 1.0
            self.p_onehot[j] = oh

    def leaf_pgini(self, rows: np.ndarray) -> float:
        label_counts = self.y_onehot[rows].sum(axis=0)
        personal_counts = [self.p_onehot[j][rows].sum(axis=0) for j, _ in self.personal]
        return pgini(label_counts, personal_counts, self.config.alpha)

    def _score_cuts(self, rows, left_label, left_personal, n_left):
        """Weighted child PGini for every candidate cut, vectorized.

        left_label: (n_cuts, n_classes) counts; left_personal: list of
        (n_cuts, card); n_left: (n_cuts,). Returns (scores, admissible).
        """
        alpha = self.config.alpha
        m = self.config.min_samples_leaf
        n = len(rows)
        total_label = self.y_onehot[rows].sum(axis=0)
        n_right = n - n_left
        admissible = (n_left >= m) & (n_right >= m)
        safe_left = np.where(n_left > 0, n_left, 1)[:, None]
        safe_right = np.where(n_right > 0, n_right, 1)[:, None]

        util_l = _gini_term(left_label, safe_left, self.n_classes)
        util_r = _gini_term(total_label[None, :] - left_label, safe_right, self.n_classes)
        if self.personal:
            acc_l = np.zeros(len(n_left))
            acc_r = np.zeros(len(n_left))
            for (j, card), left_cnt in zip(self.personal, left_personal):
                if card < 2:
                    continue
                total_cnt = self.p_onehot[j][rows].sum(axis=0)
                acc_l += _gini_term(left_cnt, safe_left, card)
                acc_r += _gini_term(total_cnt[None, :] - left_cnt, safe_right, card)
            priv_l = 1.0 - acc_l / len(self.personal)
            priv_r = 1.0 - acc_r / len(self.personal)
        else:
            priv_l = priv_r = np.zeros(len(n_left))
        pg_l = (1.0 - alpha) * util_l + alpha * priv_l
        pg_r = (1.0 - alpha) * util_r + alpha * priv_r
        scores = (n_left * pg_l + n_right * pg_r) / n
        return scores, admissible

    def candidates_continuous(self, rows: np.ndarray, j: int):
        vals = self.X[rows, j]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        boundary = np.flatnonzero(sv[1:] > sv[:-1]) + 1  # split before this index
        if len(boundary) == 0:
            return None
        left_label = np.cumsum(self.y_onehot[rows][order], axis=0)[boundary - 1]
        left_personal = [
            np.cumsum(self.p_onehot[jj][rows][order], axis=0)[boundary - 1]
            for jj, _ in self.personal
        ]
        thresholds = (sv[boundary - 1] + sv[boundary]) / 2.0
        scores, admissible = self._score_cuts(rows, left_label, left_personal,
                                              boundary.astype(float))
        return thresholds, scores, admissible

    def candidates_discrete(self, rows: np.ndarray, j: int, ordering):
        card = self.schema[j].cardinality
        if card < 2:
            return None
        pos_of = np.zeros(card + 1, dtype=int)
        for p, v in enumerate(ordering, start=1):
            pos_of[v] = p
        pos = pos_of[self.X[rows, j].astype(int)]
        per_pos_label = np.zeros((card, self.n_classes))
        np.add.at(per_pos_label, pos - 1, self.y_onehot[rows])
        left_label = np.cumsum(per_pos_label, axis=0)[:-1]
        left_personal = []
        for jj, c2 in self.personal:
            per_pos = np.zeros((card, c2))
            np.add.at(per_pos, pos - 1, self.p_onehot[jj][rows])
            left_personal.append(np.cumsum(per_pos, axis=0)[:-1])
        per_pos_n = np.bincount(pos - 1, minlength=card).astype(float)
        n_left = np.cumsum(per_pos_n)[:-1]
        cuts = np.arange(1, card)  # prefix length in the frozen ordering
        scores, admissible = self._score_cuts(rows, left_label, left_personal, n_left)
        return cuts, scores, admissible

    def best_split(self, rows: np.ndarray, orderings: dict[int, tuple[int, ...]]):
        """Best admissible strictly-improving split of a leaf, or None.

        Ties broken by (score, attribute index, cut position).
        """
        if len(rows) < 2 * self.config.min_samples_leaf:
            return None
        parent = self.leaf_pgini(rows)
        best = None
        for j in self.feature_cols:
            if self.schema[j].kind == "continuous":
                cand = self.candidates_continuous(rows, j)
            else:
                cand = self.candidates_discrete(rows, j, orderings[j])
            if cand is None:
                continue
            positions, scores, admissible = cand
            ok = admissible & (parent - scores > REDUCTION_EPS)
            for i in np.flatnonzero(ok):
                key = (scores[i], j, positions[i])
                if best is None or key < best:
                    best = key
        if best is None:
            return None
        score, attr, position = best
        return attr, position, float(score), float(parent - score)


def _choose_orderings(ctx: _FitContext, rows: np.ndarray) -> dict[int, tuple[int, ...]]:
    """Freeze one value ordering per discrete attribute, picked at the root."""
    orderings = {}
    for j in ctx.feature_cols:
        attr = ctx.schema[j]
        if attr.kind != "discrete":
            continue
        card = attr.cardinality
        values = np.arange(1, card + 1)
        codes = ctx.X[rows, j].astype(int)
        counts = np.bincount(codes, minlength=card + 1)[1:]
        pos_label = np.zeros(card)
        np.add.at(pos_label, codes - 1, (ctx.y == ctx.n_classes - 1).astype(float))
        rate = np.where(counts > 0, pos_label / np.maximum(counts, 1), 0.0)

        candidates = []
        for strategy in ctx.config.orderings:
            if strategy == "label_rate":
                order = values[np.lexsort((values, rate))]
            elif strategy == "frequency":
                order = values[np.lexsort((values, counts))]
            else:
                order = values
            cand = ctx.candidates_discrete(rows, j, tuple(int(v) for v in order))
            if cand is None:
                score = np.inf
            else:
                _, scores, admissible = cand
                score = scores[admissible].min() if admissible.any() else np.inf
            candidates.append((score, tuple(int(v) for v in order)))
        orderings[j] = min(candidates, key=lambda c: c[0])[1]
    return orderings


def fit(view: DatasetView, config: PatConfig) -> PatTree:
    """Grow a tree best-first by weighted-PGini reduction up to max_leaves."""
    ctx = _FitContext(view, config)
    all_rows = np.arange(len(ctx.y))
    orderings = _choose_orderings(ctx, all_rows)

    next_id = [0]

    def make_node(rows):
        counts = np.bincount(ctx.y[rows], minlength=ctx.n_classes)
        node = Node(node_id=next_id[0], size=len(rows), majority=int(counts.argmax()))
        next_id[0] += 1
        return node

    root_leaf = _LeafData(make_node(all_rows), all_rows)
    root_leaf.best = ctx.best_split(all_rows, orderings)
    leaves = [root_leaf]

    while len(leaves) < config.max_leaves:
        growable = [lf for lf in leaves if lf.best is not None]
        if not growable:
            break
        target = min(growable, key=lambda lf: (-lf.best[3], lf.node.node_id))
        attr, position, _, _ = target.best
        rows = target.rows
        if ctx.schema[attr].kind == "continuous":
            mask = ctx.X[rows, attr] <= position
            target.node.threshold = float(position)
        else:
            pos_of = {v: p for p, v in enumerate(orderings[attr], start=1)}
            mask = np.array([pos_of[int(v)] <= position for v in ctx.X[rows, attr]])
            target.node.cut = int(position)
        target.node.attr = attr
        left = _LeafData(make_node(rows[mask]), rows[mask])
        right = _LeafData(make_node(rows[~mask]), rows[~mask])
        target.node.left, target.node.right = left.node, right.node
        left.best = ctx.best_split(left.rows, orderings)
        right.best = ctx.best_split(right.rows, orderings)
        leaves.remove(target)
        leaves.extend([left, right])

    return PatTree(root_leaf.node, config, ctx.schema, orderings)


def extract_generalization(tree: PatTree) -> Generalization:
    """Union of all split boundaries per attribute, as a strict generalization."""
    thresholds: dict[int, set[float]] = {}
    cuts: dict[int, set[int]] = {}

    def walk(node):
        if node.is_leaf:
            return
        if node.threshold is not None:
            thresholds.setdefault(node.attr, set()).add(node.threshold)
        else:
            cuts.setdefault(node.attr, set()).add(node.cut)
        walk(node.left)
        walk(node.right)

    walk(tree.root)

    maps = {}
    for j, attr in enumerate(tree.schema):
        if attr.role != "feature":
            continue
        if attr.kind == "continuous":
            ts = tuple(sorted(thresholds.get(j, ())))
            maps[attr.name] = AttrMap(attr.name, "continuous", len(ts) + 1, thresholds=ts)
        else:
            ordering = tree.orderings.get(j, tuple(range(1, attr.cardinality + 1)))
            cut_set = sorted(cuts.get(j, ()))
            bucket_of_pos = np.zeros(attr.cardinality + 1, dtype=int)
            b = 1
            for p in range(1, attr.cardinality + 1):
                bucket_of_pos[p] = b
                if p in cut_set:
                    b += 1
            value_map = [0] * attr.cardinality
            for p, v in enumerate(ordering, start=1):
                value_map[v - 1] = int(bucket_of_pos[p])
            maps[attr.name] = AttrMap(attr.name, "discrete", len(cut_set) + 1,
                                      value_map=tuple(value_map))
    return Generalization.build(tree.schema, maps)


def representative_row(g: Generalization, schema, gen_row: np.ndarray) -> np.ndarray:
    """Expand a generalized record back to one representative original record."""
    row = gen_row.astype(float).copy()
    by_name = {m.name: m for m in g.attrs}
    for j, attr in enumerate(schema):
        if attr.role != "feature":
            continue
        m = by_name[attr.name]
        if m.identity:
            continue
        z = int(gen_row[j])
        if m.kind == "discrete":
            row[j] = min(v for v, b in enumerate(m.value_map, start=1) if b == z)
        else:
            lo, hi = m.interval(z)
            row[j] = (lo + hi) / 2.0
    return row


def save_tree(tree: PatTree, path: str) -> None:
    with open(path, "w") as f:
        json.dump(tree.to_json(), f, indent=2)
