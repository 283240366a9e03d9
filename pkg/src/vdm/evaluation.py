"""Utility-privacy evaluation: classifier error under a generalization,
reconstruction risk, hyperparameter sweeps, validation-based Pareto fronts,
the two generalization limit points, and per-attribute bucket reporting."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from vdm.adversaries import BreachScenario, a1_reconstruct
from vdm.baselines import anova_feature_select, uniform_minimize
from vdm.dataset import DatasetView, encode_onehot
from vdm.generalize import Generalization
from vdm.neural_min import NeuralGenConfig, advtrain_fit, mutualinf_fit
from vdm.nn import TrainSchedule, classification_error, train_classifier
from vdm.pat import PatConfig, extract_generalization, fit as pat_fit

log = logging.getLogger(__name__)

DEFAULT_GRIDS = {
    "uniform": {"k": [1, 2, 3, 4, 5]},
    "featsel": {"k": [2, 4, 8, 10, 20, "all"]},
    "pat": {
        "max_leaves": [2, 4, 6, 8, 10, 20, 50, 100, 200],
        "alpha": [round(a, 4) for a in np.linspace(0.0, 1.0, 12)],
    },
    "advtrain": {"lam": [round(a, 4) for a in np.linspace(0.1, 0.9, 9)]},
    "mutualinf": {"lam": [round(a, 4) for a in np.linspace(0.1, 0.9, 9)]},
}


@dataclass
class ParetoPoint:
    """One evaluated generalization: selection metrics on validation,
    reported metrics on test."""

    minimizer: str
    params: dict
    generalization: Generalization | None
    clf_err_val: float = float("nan")
    clf_err_test: float = float("nan")
    adv_err_val: dict = field(default_factory=dict)  # per personal attribute
    adv_err_test: dict = field(default_factory=dict)
    total_buckets: int | None = None
    failed: str | None = None

    @property
    def adv_mean_val(self) -> float:
        return float(np.mean(list(self.adv_err_val.values()))) if self.adv_err_val else float("nan")

    @property
    def adv_mean_test(self) -> float:
        return float(np.mean(list(self.adv_err_test.values()))) if self.adv_err_test else float("nan")


def utility_risk(g: Generalization, view: DatasetView,
                 schedule: TrainSchedule | None = None):
    """Train the reference classifier on generalized train rows, tune L2 on
    generalized validation rows, report (validation error, test error)."""
    schedule = schedule or TrainSchedule()
    gen = g.apply(view)
    tr, va, te = gen.rows("train"), gen.rows("val"), gen.rows("test")
    n_classes = view.schema[view.target_index].cardinality
    net, val_err = train_classifier(
        encode_onehot(gen, tr), gen.targets(tr),
        encode_onehot(gen, va), gen.targets(va), n_classes, schedule)
    test_err = classification_error(net, encode_onehot(gen, te), gen.targets(te))
    return val_err, test_err


def privacy_risk(g: Generalization, view: DatasetView, breach_split: str,
                 schedule: TrainSchedule | None = None) -> dict:
    """A1 reconstruction error per personal attribute on one breached split;
    the adversary's prior sample is the train split at full granularity."""
    prior = view.take(view.rows("train"), split_tag="train")
    victim = view.take(view.rows(breach_split))
    rep = a1_reconstruct(BreachScenario.from_views(g, prior, victim),
                         schedule or TrainSchedule())
    return dict(rep.errors)


def evaluate_point(minimizer: str, params: dict, g: Generalization,
                   view: DatasetView,
                   schedule: TrainSchedule | None = None) -> ParetoPoint:
    point = ParetoPoint(minimizer, dict(params), g)
    point.clf_err_val, point.clf_err_test = utility_risk(g, view, schedule)
    if view.personal_indices:
        point.adv_err_val = privacy_risk(g, view, "val", schedule)
        point.adv_err_test = privacy_risk(g, view, "test", schedule)
    point.total_buckets = g.total_buckets() if all(
        not m.identity for m in g.attrs) else None
    return point


def _fit_minimizer(minimizer: str, view: DatasetView, params: dict,
                   seed: int) -> Generalization:
    if minimizer == "uniform":
        return uniform_minimize(view, params["k"], seed=seed)
    if minimizer == "featsel":
        k = params["k"]
        k = len(view.feature_indices) if k == "all" else min(k, len(view.feature_indices))
        return anova_feature_select(view, k)
    if minimizer == "pat":
        cfg = PatConfig(alpha=params["alpha"], max_leaves=params["max_leaves"],
                        min_samples_leaf=params.get("min_samples_leaf", 100))
        return extract_generalization(pat_fit(view, cfg))
    if minimizer in ("advtrain", "mutualinf"):
        cfg = NeuralGenConfig(seed=seed, k=params.get("k", 5))
        fitter = advtrain_fit if minimizer == "advtrain" else mutualinf_fit
        return fitter(view, params["lam"], cfg)
    raise ValueError(f"unknown minimizer {minimizer!r}")


def _grid_points(grid: dict) -> list[dict]:
    keys = sorted(grid)
    combos = [{}]
    for key in keys:
        combos = [{**c, key: v} for c in combos for v in grid[key]]
    return combos


def sweep(view: DatasetView, minimizer: str, grid: dict | None = None,
          schedule: TrainSchedule | None = None, seed: int = 0) -> list[ParetoPoint]:
    """Evaluate one ParetoPoint per hyperparameter combination. Failures of
    individual runs are recorded on the point and the sweep continues."""
    grid = grid if grid is not None else DEFAULT_GRIDS[minimizer]
    points = []
    for params in _grid_points(grid):
        try:
            g = _fit_minimizer(minimizer, view, params, seed)
            points.append(evaluate_point(minimizer, params, g, view, schedule))
        except Exception as e:  # noqa: BLE001 - sweep must survive bad configs
            log.warning("sweep point %s %s failed: %s", minimizer, params, e)
            points.append(ParetoPoint(minimizer, dict(params), None, failed=str(e)))
    return points


def pareto_front(points: list[ParetoPoint]) -> list[ParetoPoint]:
    """Points not dominated on validation metrics (classifier error lower is
    better, mean adversary error higher is better). Exact ties are kept."""
    if not points:
        raise ValueError("no points to select from")
    ok = [p for p in points if p.failed is None and np.isfinite(p.clf_err_val)]
    front = []
    for p in ok:
        dominated = any(
            q.clf_err_val <= p.clf_err_val and q.adv_mean_val >= p.adv_mean_val
            and (q.clf_err_val < p.clf_err_val or q.adv_mean_val > p.adv_mean_val)
            for q in ok
        )
        if not dominated:
            front.append(p)
    return front


def limit_points(view: DatasetView,
                 schedule: TrainSchedule | None = None) -> list[ParetoPoint]:
    """The two generalization extremes bounding every front.

    Fully generalized: classifier and adversary can only use training
    frequencies. Identity: trained classifier error, adversary error 0 by
    masking.
    """
    tr = view.rows("train")
    y_tr = view.targets(tr)
    majority = np.bincount(y_tr).argmax()

    full = ParetoPoint("limit", {"which": "full"}, Generalization.full(view.schema))
    for split, attr_name in (("val", "clf_err_val"), ("test", "clf_err_test")):
        y = view.targets(view.rows(split))
        setattr(full, attr_name, float(np.mean(y != majority)))
    for split, d in (("val", full.adv_err_val), ("test", full.adv_err_test)):
        rows = view.rows(split)
        for j in view.personal_indices:
            a = view.schema[j]
            codes_tr = view.values[tr, j].astype(int)
            top = np.bincount(codes_tr, minlength=a.cardinality + 1).argmax()
            d[a.name] = float(np.mean(view.values[rows, j].astype(int) != top))
    full.total_buckets = full.generalization.total_buckets()

    ident_g = Generalization.identity(view.schema)
    ident = ParetoPoint("limit", {"which": "identity"}, ident_g)
    ident.clf_err_val, ident.clf_err_test = utility_risk(ident_g, view, schedule)
    for d in (ident.adv_err_val, ident.adv_err_test):
        for j in view.personal_indices:
            d[view.schema[j].name] = 0.0  # singleton pre-images
    return [full, ident]


def bucket_report(g: Generalization, schema) -> list[dict]:
    """Per attribute: bucket count, original cardinality, relative reduction,
    and whether the attribute is fully suppressed (need not be collected)."""
    out = []
    by_name = {a.name: a for a in schema}
    for m in g.attrs:
        a = by_name[m.name]
        entry = {"name": m.name, "k": m.k,
                 "cardinality": a.cardinality, "suppressed": m.k == 1}
        if m.identity:
            entry.update(k=None, suppressed=False, reduction=0.0)
        elif a.kind == "discrete":
            entry["reduction"] = 1.0 - m.k / a.cardinality
        else:
            entry["reduction"] = None  # continuous domain has no finite size
        out.append(entry)
    return out
