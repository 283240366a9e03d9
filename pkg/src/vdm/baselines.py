"""Non-neural baseline minimizers: uniform bucketing, ANOVA feature
selection, and the iterative variance-grouping minimizer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from vdm.dataset import DatasetView, encode_onehot, onehot_layout
from vdm.generalize import AttrMap, Generalization
from vdm.nn import TrainSchedule, train_classifier, classification_error


def uniform_minimize(view: DatasetView, k: int, seed: int = 0) -> Generalization:
    """k equal-width intervals for continuous attributes (bucket = ceil(k*x),
    clamped to 1), seeded random surjective k-bucket maps for discrete ones."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    maps = {}
    for attr in view.schema:
        if attr.role != "feature":
            continue
        if attr.kind == "continuous":
            ts = tuple(i / k for i in range(1, k))
            maps[attr.name] = AttrMap(attr.name, "continuous", k, thresholds=ts)
        else:
            c = attr.cardinality
            if c <= k:
                vm = tuple(range(1, c + 1))
                maps[attr.name] = AttrMap(attr.name, "discrete", c, value_map=vm)
            else:
                perm = rng.permutation(c)
                vm = np.empty(c, dtype=int)
                vm[perm[:k]] = np.arange(1, k + 1)  # one value per bucket: surjective
                vm[perm[k:]] = rng.integers(1, k + 1, size=c - k)
                maps[attr.name] = AttrMap(attr.name, "discrete", k,
                                          value_map=tuple(int(v) for v in vm))
    return Generalization.build(view.schema, maps)


def anova_f_values(view: DatasetView) -> np.ndarray:
    """One-way ANOVA F statistic per feature attribute, grouped by target.

    Discrete features are scored on their one-hot columns (max F over the
    attribute's columns). Zero within-class variance maps to +inf, constant
    columns to 0.
    """
    rows = view.rows("train")
    x = encode_onehot(view, rows)
    y = view.targets(rows)
    classes = np.unique(y)
    n = len(rows)
    grand = x.mean(axis=0)
    ssb = np.zeros(x.shape[1])
    ssw = np.zeros(x.shape[1])
    for c in classes:
        grp = x[y == c]
        mean_g = grp.mean(axis=0)
        ssb += len(grp) * (mean_g - grand) ** 2
        ssw += ((grp - mean_g) ** 2).sum(axis=0)
    df_b = len(classes) - 1
    df_w = n - len(classes)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (ssb / df_b) / (ssw / df_w)
    f = np.where(ssw <= 0, np.where(ssb > 0, np.inf, 0.0), f)

    per_attr = []
    for _, start, width in onehot_layout(view.schema):
        per_attr.append(f[start:start + width].max())
    return np.array(per_attr)


def anova_feature_select(view: DatasetView, k: int) -> Generalization:
    """Keep the k features with largest F as identity maps, suppress the rest."""
    feats = view.feature_indices
    if not 1 <= k <= len(feats):
        raise ValueError(f"k must lie in 1..{len(feats)}")
    f = anova_f_values(view)
    order = np.lexsort((np.arange(len(feats)), -f))  # ties by attribute index
    keep = set(order[:k])
    maps = {}
    for pos, j in enumerate(feats):
        attr = view.schema[j]
        if pos in keep:
            if attr.kind == "discrete":
                maps[attr.name] = AttrMap(attr.name, "discrete", attr.cardinality,
                                          value_map=tuple(range(1, attr.cardinality + 1)))
            else:
                maps[attr.name] = AttrMap(attr.name, "continuous", None, identity=True)
        else:
            if attr.kind == "discrete":
                maps[attr.name] = AttrMap(attr.name, "discrete", 1,
                                          value_map=(1,) * attr.cardinality)
            else:
                maps[attr.name] = AttrMap(attr.name, "continuous", 1, thresholds=())
    return Generalization.build(view.schema, maps)


def dp_group(scores: np.ndarray, k: int):
    """Optimal contiguous grouping of ordered scores into k non-empty groups,
    minimizing the mean of per-group population variances.

    Returns (group id per position, objective value).
    """
    n = len(scores)
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= len(scores)")
    s1 = np.concatenate([[0.0], np.cumsum(scores)])
    s2 = np.concatenate([[0.0], np.cumsum(np.asarray(scores, dtype=float) ** 2)])

    def seg_var(lo, hi):  # population variance of scores[lo:hi]
        m = hi - lo
        mean = (s1[hi] - s1[lo]) / m
        return max((s2[hi] - s2[lo]) / m - mean * mean, 0.0)

    INF = np.inf
    cost = np.full((n + 1, k + 1), INF)
    back = np.zeros((n + 1, k + 1), dtype=int)
    cost[0, 0] = 0.0
    for a in range(1, n + 1):
        for kk in range(1, min(k, a) + 1):
            for b in range(kk, a + 1):  # last group is scores[b-1:a]
                c = cost[b - 1, kk - 1] + seg_var(b - 1, a)
                if c < cost[a, kk]:
                    cost[a, kk] = c
                    back[a, kk] = b
    groups = np.zeros(n, dtype=int)
    a, kk = n, k
    while kk > 0:
        b = back[a, kk]
        groups[b - 1:a] = kk
        a, kk = b - 1, kk - 1
    return groups, cost[n, k] / k


def _quantile_thresholds(col: np.ndarray, k: int) -> tuple[float, ...]:
    """k-quantile interval edges inside (0,1); duplicate edges merged."""
    qs = np.quantile(col, [i / k for i in range(1, k)])
    ts = sorted({float(q) for q in qs if 0.0 < q < 1.0})
    return tuple(ts)


def _logistic_scores(view: DatasetView, epochs=200, lr=0.1, l2=1e-4):
    """Per-one-hot-column weight scores from a softmax regression fit."""
    rows = view.rows("train")
    x = encode_onehot(view, rows)
    y = view.targets(rows)
    n_classes = view.schema[view.target_index].cardinality
    w = np.zeros((x.shape[1], n_classes))
    b = np.zeros(n_classes)
    onehot_y = np.zeros((len(y), n_classes))
    onehot_y[np.arange(len(y)), y] = 1.0
    for _ in range(epochs):
        logits = x @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        grad = (p - onehot_y) / len(y)
        w -= lr * (x.T @ grad + l2 * w)
        b -= lr * grad.sum(axis=0)
    return w[:, -1] - w[:, 0]


def _attr_map_at_k(view, attr, j, k, scores_by_attr):
    if attr.kind == "continuous":
        if k == 1:
            return AttrMap(attr.name, "continuous", 1, thresholds=())
        ts = _quantile_thresholds(view.values[view.rows("train"), j], k)
        return AttrMap(attr.name, "continuous", len(ts) + 1, thresholds=ts)
    c = attr.cardinality
    k = min(k, c)
    scores = scores_by_attr[j]
    order = np.lexsort((np.arange(c), scores))  # values sorted by score
    groups, _ = dp_group(scores[order], k)
    vm = np.empty(c, dtype=int)
    vm[order] = groups
    return AttrMap(attr.name, "discrete", k, value_map=tuple(int(v) for v in vm))


@dataclass
class IterativeResult:
    generalization: Generalization
    budget_exhausted: bool
    trainings_used: int


def iterative_minimize(view: DatasetView, k_init: int, target_error: float,
                       eval_budget: int = 200,
                       schedule: TrainSchedule | None = None) -> IterativeResult:
    """Iterative minimizer: heuristic k-bucket start, then greedy per-attribute
    bucket reduction while validation classifier error stays below the target.

    Attribute order follows the estimated impact gap (classification error
    increase minus adversary error increase when the attribute is dropped),
    ascending. ``eval_budget`` caps the number of model trainings.
    """
    schedule = schedule or TrainSchedule()
    used = [0]

    def budget_left():
        return used[0] < eval_budget

    def spend():
        used[0] += 1

    rows_tr = view.rows("train")
    rows_val = view.rows("val")
    n_classes = view.schema[view.target_index].cardinality

    scores_by_attr = {}
    col_scores = _logistic_scores(view)
    for j, start, width in onehot_layout(view.schema):
        if view.schema[j].kind == "discrete":
            scores_by_attr[j] = col_scores[start:start + width]

    feats = view.feature_indices
    maps = {view.schema[j].name: _attr_map_at_k(view, view.schema[j], j, k_init,
                                                scores_by_attr)
            for j in feats}

    def val_error_of(g: Generalization) -> float:
        gen = g.apply(view)
        x_tr = encode_onehot(gen, rows_tr)
        x_val = encode_onehot(gen, rows_val)
        _, err = train_classifier(x_tr, gen.targets(rows_tr), x_val,
                                  gen.targets(rows_val), n_classes, schedule)
        return err

    # delta estimation: drop each attribute in turn and compare errors
    layout = {j: (start, width) for j, start, width in onehot_layout(view.schema)}
    x_tr_full = encode_onehot(view, rows_tr)
    x_val_full = encode_onehot(view, rows_val)
    y_tr, y_val = view.targets(rows_tr), view.targets(rows_val)
    personal = [j for j in view.personal_indices if view.schema[j].kind == "discrete"]

    def errors_without(drop: int | None):
        cols = np.ones(x_tr_full.shape[1], dtype=bool)
        if drop is not None:
            start, width = layout[drop]
            cols[start:start + width] = False
        spend()
        _, clf_err = train_classifier(x_tr_full[:, cols], y_tr, x_val_full[:, cols],
                                      y_val, n_classes, schedule)
        adv_errs = []
        for p in personal:
            tgt_tr = view.values[rows_tr, p].astype(int) - 1
            tgt_val = view.values[rows_val, p].astype(int) - 1
            spend()
            _, e = train_classifier(x_tr_full[:, cols], tgt_tr, x_val_full[:, cols],
                                    tgt_val, view.schema[p].cardinality, schedule)
            adv_errs.append(e)
        return clf_err, float(np.mean(adv_errs)) if adv_errs else 0.0

    base_clf, base_adv = errors_without(None)
    gaps = []
    for j in feats:
        if not budget_left():
            gaps.append((0.0, j))
            continue
        clf_err, adv_err = errors_without(j)
        gaps.append(((clf_err - base_clf) - (adv_err - base_adv), j))
    order = [j for _, j in sorted(gaps, key=lambda t: (t[0], t[1]))]

    exhausted = not budget_left()
    for j in order:
        attr = view.schema[j]
        k_now = maps[attr.name].k or k_init
        while k_now > 1:
            if not budget_left():
                exhausted = True
                break
            trial = dict(maps)
            trial[attr.name] = _attr_map_at_k(view, attr, j, k_now - 1, scores_by_attr)
            g_trial = Generalization.build(view.schema, trial)
            spend()
            if val_error_of(g_trial) < target_error:
                maps = trial
                k_now -= 1
            else:
                break
        if exhausted:
            break

    return IterativeResult(Generalization.build(view.schema, maps), exhausted, used[0])
