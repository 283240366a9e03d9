"""Empirical privacy-risk adversaries.

A1 reconstructs personal attributes from breached generalized records with
pre-image masked predictions; A2 restricts A1 to its most confident
predictions; A3/A4/A5 add side information of increasing strength; A6 fuses
two breaches of the same individuals; A7 links partial records by relative
sampling frequencies; A8 measures singling-out via record utilization.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from vdm.dataset import DatasetView, encode_onehot, schema_fingerprint
from vdm.generalize import Generalization
from vdm.nn import TrainSchedule, temperature_softmax, train_classifier

log = logging.getLogger(__name__)

# continuous personal attributes are reconstructed at this grid granularity
GRID = 100


class AdversaryError(ValueError):
    pass


@dataclass(frozen=True)
class BreachScenario:
    """What the adversary sees: a full-granularity prior sample, the public
    generalization, and a set of breached generalized records. ``truth``
    holds the aligned original rows when ground truth is available."""

    g: Generalization
    prior: DatasetView
    breach: DatasetView
    truth: DatasetView | None = None

    def __post_init__(self):
        self.g.check_schema(self.prior.schema)
        gen_schema = self.g.generalized_schema(self.prior.schema)
        if schema_fingerprint(self.breach.schema) != schema_fingerprint(gen_schema):
            raise AdversaryError("breached rows do not conform to the generalization")
        if self.truth is not None:
            if schema_fingerprint(self.truth.schema) != schema_fingerprint(self.prior.schema):
                raise AdversaryError("ground truth schema differs from the prior's")
            if self.truth.n != self.breach.n:
                raise AdversaryError("ground truth must align row-wise with the breach")

    @staticmethod
    def from_views(g: Generalization, prior: DatasetView,
                   victim: DatasetView) -> "BreachScenario":
        return BreachScenario(g, prior, g.apply(victim), victim)

    @property
    def personal(self) -> list[int]:
        idx = self.prior.personal_indices
        if not idx:
            raise AdversaryError("schema declares no personal attributes")
        return idx


@dataclass
class ReconstructionReport:
    """Per-personal-attribute reconstruction outcome; the headline risk is
    the arithmetic mean of the per-attribute errors."""

    attributes: tuple[str, ...]
    errors: dict[str, float]
    baselines: dict[str, float]  # 1 - majority frequency per attribute
    predictions: dict[str, np.ndarray]  # 1-based codes per breach row
    confidences: dict[str, np.ndarray]
    retained: dict[str, np.ndarray] | None = None  # A2: kept row indices
    fallbacks: dict[str, np.ndarray] | None = None  # A6: empty-intersection rows

    @property
    def mean_error(self) -> float:
        return float(np.mean([self.errors[a] for a in self.attributes]))


def _codes(view: DatasetView, j: int) -> tuple[np.ndarray, int]:
    """1-based reconstruction targets: discrete codes, or grid cells for a
    continuous attribute."""
    a = view.schema[j]
    col = view.values[:, j]
    if a.kind == "discrete":
        return col.astype(int), a.cardinality
    return np.minimum((col * GRID).astype(int) + 1, GRID), GRID


def _allowed_matrix(scenario: BreachScenario, j: int) -> np.ndarray:
    """(n_breach, n_codes) boolean pre-image mask for personal attribute j."""
    attr = scenario.prior.schema[j]
    m = scenario.g.attr(attr.name)
    jb = next(i for i, a in enumerate(scenario.breach.schema) if a.name == attr.name)
    col = scenario.breach.values[:, jb]
    n = scenario.breach.n
    if attr.kind == "discrete":
        lut = np.zeros((m.k + 1, attr.cardinality), dtype=bool)
        for v, b in enumerate(m.value_map, start=1):
            lut[b, v - 1] = True
        return lut[col.astype(int)]
    if m.identity:
        cells = np.minimum((col * GRID).astype(int) + 1, GRID)
        allowed = np.zeros((n, GRID), dtype=bool)
        allowed[np.arange(n), cells - 1] = True
        return allowed
    i = np.arange(1, GRID + 1)
    lut = np.zeros((m.k + 1, GRID), dtype=bool)
    for b in range(1, m.k + 1):
        lo, hi = m.interval(b)
        lut[b] = ((i - 1) / GRID < hi) & (i / GRID > lo)
    return lut[col.astype(int)]


def _train_val_rows(view: DatasetView):
    tr = view.rows("train")
    if len(tr) == 0:
        tr = view.rows()
    va = view.rows("val")
    return tr, (va if len(va) else tr)


def _fit_head(x_all, codes, n_codes, tr, va, schedule):
    y = codes - 1
    net, _ = train_classifier(x_all[tr], y[tr], x_all[va], y[va], n_codes, schedule)
    return net


def _baseline_error(codes_train: np.ndarray, n_codes: int) -> float:
    counts = np.bincount(codes_train, minlength=n_codes + 1)[1:]
    return 1.0 - counts.max() / counts.sum()


def _score(pred, truth_codes):
    if truth_codes is None:
        return float("nan")
    return float(np.mean(pred != truth_codes))


def _reconstruct(scenario: BreachScenario, x_prior, x_breach, targets,
                 schedule) -> ReconstructionReport:
    """Shared A1/A3/A4/A5 head training and masked prediction.

    ``targets`` maps each personal attribute index to the (x_prior, x_breach)
    input pair used for its head; inputs differ across adversaries only by
    the appended side information.
    """
    tr, va = _train_val_rows(scenario.prior)
    names, errors, baselines, preds, confs = [], {}, {}, {}, {}
    for j in targets:
        attr = scenario.prior.schema[j]
        codes, n_codes = _codes(scenario.prior, j)
        xp, xb = (x_prior[j], x_breach[j]) if isinstance(x_prior, dict) else (x_prior, x_breach)
        net = _fit_head(xp, codes, n_codes, tr, va, schedule)
        logits = net.forward(xb)
        allowed = _allowed_matrix(scenario, j)
        masked = np.where(allowed, logits, -np.inf)
        pred = masked.argmax(axis=1) + 1
        truth_codes = _codes(scenario.truth, j)[0] if scenario.truth is not None else None
        names.append(attr.name)
        errors[attr.name] = _score(pred, truth_codes)
        baselines[attr.name] = _baseline_error(codes[tr], n_codes)
        preds[attr.name] = pred
        confs[attr.name] = masked.max(axis=1)
    return ReconstructionReport(tuple(names), errors, baselines, preds, confs)


def a1_reconstruct(scenario: BreachScenario,
                   schedule: TrainSchedule | None = None) -> ReconstructionReport:
    """One masked MLP head per personal attribute, trained on the adversary's
    generalized prior sample."""
    schedule = schedule or TrainSchedule()
    gen_prior = scenario.g.apply(scenario.prior)
    x_prior = encode_onehot(gen_prior)
    x_breach = encode_onehot(scenario.breach)
    return _reconstruct(scenario, x_prior, x_breach, scenario.personal, schedule)


def a2_highcertainty(scenario: BreachScenario, k_percent: float,
                     schedule: TrainSchedule | None = None) -> ReconstructionReport:
    """A1 restricted, per attribute, to the top k percent most confident
    predictions (post-mask max logit); errors are over the kept rows only."""
    if not 0 < k_percent <= 100:
        raise AdversaryError("k_percent must lie in (0, 100]")
    rep = a1_reconstruct(scenario, schedule)
    n = scenario.breach.n
    keep_n = int(np.ceil(k_percent / 100.0 * n))
    if keep_n == 0:
        raise AdversaryError("no predictions survive the confidence cutoff")
    retained = {}
    for name in rep.attributes:
        kept = np.argsort(-rep.confidences[name], kind="stable")[:keep_n]
        retained[name] = np.sort(kept)
        if scenario.truth is not None:
            j = next(i for i, a in enumerate(scenario.prior.schema) if a.name == name)
            truth_codes = _codes(scenario.truth, j)[0]
            rep.errors[name] = float(np.mean(rep.predictions[name][kept]
                                             != truth_codes[kept]))
    rep.retained = retained
    return rep


def _attr_onehot(view: DatasetView, j: int) -> np.ndarray:
    a = view.schema[j]
    col = view.values[:, j]
    if a.kind == "continuous":
        return col[:, None]
    out = np.zeros((view.n, a.cardinality))
    out[np.arange(view.n), col.astype(int) - 1] = 1.0
    return out


def _sideinfo_inputs(scenario: BreachScenario, known: list[int]):
    """Generalized record one-hot plus full-granularity non-personal
    attributes plus the known personal attributes."""
    if scenario.truth is None:
        raise AdversaryError("side-information adversaries need aligned ground truth")
    gen_prior = scenario.g.apply(scenario.prior)
    nonpersonal = [j for j in scenario.prior.feature_indices
                   if not scenario.prior.schema[j].personal]
    cols_p = [encode_onehot(gen_prior)]
    cols_b = [encode_onehot(scenario.breach)]
    for j in nonpersonal + list(known):
        cols_p.append(_attr_onehot(scenario.prior, j))
        cols_b.append(_attr_onehot(scenario.truth, j))
    return np.hstack(cols_p), np.hstack(cols_b)


def _resolve_ordering(scenario: BreachScenario, ordering) -> list[int]:
    personal = scenario.personal
    if ordering is None:
        return personal
    by_name = {scenario.prior.schema[j].name: j for j in personal}
    if sorted(ordering) != sorted(by_name):
        raise AdversaryError("ordering must list every personal attribute exactly once")
    return [by_name[name] for name in ordering]


def a3_a5_sideinfo(scenario: BreachScenario, known_prefix_size: int,
                   ordering=None,
                   schedule: TrainSchedule | None = None) -> ReconstructionReport:
    """Predict the personal attribute at position ``known_prefix_size`` of the
    ordering, knowing all non-personal attributes and the preceding personal
    ones at full granularity."""
    order = _resolve_ordering(scenario, ordering)
    if not 0 <= known_prefix_size < len(order):
        raise AdversaryError(f"known_prefix_size must lie in 0..{len(order) - 1}")
    schedule = schedule or TrainSchedule()
    known = order[:known_prefix_size]
    target = order[known_prefix_size]
    xp, xb = _sideinfo_inputs(scenario, known)
    return _reconstruct(scenario, xp, xb, [target], schedule)


def a3_reconstruct(scenario: BreachScenario,
                   schedule: TrainSchedule | None = None) -> ReconstructionReport:
    """Adversary knowing all non-personal attributes: every personal
    attribute predicted with empty personal side information."""
    schedule = schedule or TrainSchedule()
    xp, xb = _sideinfo_inputs(scenario, [])
    return _reconstruct(scenario, xp, xb, scenario.personal, schedule)


def a4_reconstruct(scenario: BreachScenario,
                   schedule: TrainSchedule | None = None) -> ReconstructionReport:
    """Worst case: each personal attribute predicted knowing all other
    personal attributes (and all non-personal ones)."""
    schedule = schedule or TrainSchedule()
    personal = scenario.personal
    x_prior, x_breach = {}, {}
    for j in personal:
        xp, xb = _sideinfo_inputs(scenario, [p for p in personal if p != j])
        x_prior[j], x_breach[j] = xp, xb
    return _reconstruct(scenario, x_prior, x_breach, personal, schedule)


def a5_reconstruct(scenario: BreachScenario, ordering=None,
                   schedule: TrainSchedule | None = None) -> ReconstructionReport:
    """Intermediate adversary: mean over all prefix sizes, each attribute
    predicted from the preceding personal attributes in the ordering."""
    order = _resolve_ordering(scenario, ordering)
    reports = [a3_a5_sideinfo(scenario, k, ordering=ordering, schedule=schedule)
               for k in range(len(order))]
    names = tuple(r.attributes[0] for r in reports)
    return ReconstructionReport(
        names,
        {r.attributes[0]: r.errors[r.attributes[0]] for r in reports},
        {r.attributes[0]: r.baselines[r.attributes[0]] for r in reports},
        {r.attributes[0]: r.predictions[r.attributes[0]] for r in reports},
        {r.attributes[0]: r.confidences[r.attributes[0]] for r in reports},
    )


def a6_multibreach(s1: BreachScenario, s2: BreachScenario,
                   schedule: TrainSchedule | None = None) -> ReconstructionReport:
    """Fuse two breaches of the same individuals: average the two A1 heads'
    post-softmax probabilities and predict within the intersection of the two
    pre-image masks. Empty intersections fall back to the first mask and are
    flagged per record."""
    schedule = schedule or TrainSchedule()
    if s1.breach.n != s2.breach.n:
        raise AdversaryError("breaches must cover the same individuals row-aligned")
    personal = s1.personal
    names1 = [s1.prior.schema[j].name for j in personal]
    if names1 != [s2.prior.schema[j].name for j in s2.personal]:
        raise AdversaryError("breaches disagree on the personal attributes")

    sched2 = TrainSchedule(**{**schedule.__dict__, "seed": schedule.seed + 1})
    tr1, va1 = _train_val_rows(s1.prior)
    tr2, va2 = _train_val_rows(s2.prior)
    x1 = encode_onehot(s1.g.apply(s1.prior))
    x2 = encode_onehot(s2.g.apply(s2.prior))
    xb1 = encode_onehot(s1.breach)
    xb2 = encode_onehot(s2.breach)

    names, errors, baselines, preds, confs, fallbacks = [], {}, {}, {}, {}, {}
    for j1, j2 in zip(personal, s2.personal):
        attr = s1.prior.schema[j1]
        codes1, n_codes = _codes(s1.prior, j1)
        codes2, n2 = _codes(s2.prior, j2)
        if n2 != n_codes:
            raise AdversaryError(f"{attr.name}: cardinality differs between breaches")
        net1 = _fit_head(x1, codes1, n_codes, tr1, va1, schedule)
        net2 = _fit_head(x2, codes2, n_codes, tr2, va2, sched2)
        p_avg = 0.5 * (temperature_softmax(net1.forward(xb1), 1.0)
                       + temperature_softmax(net2.forward(xb2), 1.0))
        m1 = _allowed_matrix(s1, j1)
        m2 = _allowed_matrix(s2, j2)
        inter = m1 & m2
        empty = ~inter.any(axis=1)
        allowed = np.where(empty[:, None], m1, inter)
        masked = np.where(allowed, p_avg, -1.0)
        pred = masked.argmax(axis=1) + 1
        truth_codes = _codes(s1.truth, j1)[0] if s1.truth is not None else None
        names.append(attr.name)
        errors[attr.name] = _score(pred, truth_codes)
        baselines[attr.name] = _baseline_error(codes1[tr1], n_codes)
        preds[attr.name] = pred
        confs[attr.name] = masked.max(axis=1)
        fallbacks[attr.name] = np.flatnonzero(empty)
        if empty.any():
            log.warning("a6: %d records with inconsistent breaches for %s",
                        int(empty.sum()), attr.name)
    return ReconstructionReport(tuple(names), errors, baselines, preds, confs,
                                fallbacks=fallbacks)


@dataclass
class LinkabilityReport:
    match_rate: float
    baseline_rate: float
    assignments: np.ndarray  # chosen B-side row per A-side row, -1 when skipped
    skipped: np.ndarray  # A-side rows with no scorable candidate


def a7_linkability(breach: DatasetView, g: Generalization,
                   a_values: np.ndarray, b_values: np.ndarray,
                   attrs_a, attrs_b, orig_schema, seed: int = 0) -> LinkabilityReport:
    """Link partial records of the same individuals through relative sampling
    frequencies in the breached set: score each (a, b) pair by the estimated
    conditional p(x_A = a | x_B = b) and take the best-scoring B-side record.

    ``a_values``/``b_values`` are row-aligned full-granularity columns for
    ``attrs_a``/``attrs_b`` (row i of both sides is the same individual).
    ``orig_schema`` is the schema the generalization was built for.
    """
    attrs_a, attrs_b = list(attrs_a), list(attrs_b)
    feat_names = {a.name for a in orig_schema if a.role == "feature"}
    if not set(attrs_a) <= feat_names or not set(attrs_b) <= feat_names:
        raise AdversaryError("linkage attributes must be feature attributes")
    if len(a_values) != len(b_values):
        raise AdversaryError("partial record sides must align row-wise")

    score_matrix, gb, count_b = linkage_scores(breach, g, a_values, b_values,
                                               attrs_a, attrs_b)

    rng = np.random.default_rng(seed)
    n = len(a_values)
    assignments = np.full(n, -1, dtype=int)
    matched = 0
    for i in range(n):
        scores = score_matrix[i]
        if scores.max() < 0:
            log.warning("a7: record %d has no scorable candidate, left unlinked", i)
            continue
        best = np.flatnonzero(scores == scores.max())
        assignments[i] = int(rng.choice(best))
        matched += assignments[i] == i

    base_scores = np.array([count_b.get(gb[j], 0) for j in range(n)], dtype=float)
    base_matched = 0
    if base_scores.max() > 0:
        best = np.flatnonzero(base_scores == base_scores.max())
        for i in range(n):
            base_matched += int(rng.choice(best)) == i
    return LinkabilityReport(matched / n, base_matched / n, assignments,
                             np.flatnonzero(assignments == -1))


def _partial_keys(g: Generalization, values: np.ndarray, attr_names) -> list[tuple]:
    """Generalize side columns given in attr order (not schema order)."""
    cols = []
    for t, name in enumerate(attr_names):
        m = g.attr(name)
        col = np.asarray(values)[:, t]
        cols.append(col if m.identity else m.buckets(col))
    return [tuple(row) for row in np.column_stack(cols)]


def linkage_scores(breach: DatasetView, g: Generalization,
                   a_values: np.ndarray, b_values: np.ndarray,
                   attrs_a, attrs_b):
    """Estimated conditionals p(x_A = a_i | x_B = b_j) from breach counts.

    Returns (score matrix with -1 where the B-side bucket is unobserved,
    the generalized B-side keys, and the B-side marginal counts).
    """
    attrs_a, attrs_b = list(attrs_a), list(attrs_b)
    by_index = {a.name: i for i, a in enumerate(breach.schema)}
    zab = [tuple(row) for row in np.column_stack(
        [breach.values[:, by_index[n]] for n in attrs_a + attrs_b])]
    zb = [t[len(attrs_a):] for t in zab]
    count_ab = Counter(zab)
    count_b = Counter(zb)

    ga = _partial_keys(g, a_values, attrs_a)
    gb = _partial_keys(g, b_values, attrs_b)
    n = len(ga)
    scores = np.full((n, n), -1.0)
    for i in range(n):
        for j in range(n):
            den = count_b.get(gb[j], 0)
            if den > 0:
                scores[i, j] = count_ab.get(ga[i] + gb[j], 0) / den
    return scores, gb, count_b


@dataclass
class SinglingOutReport:
    min_utilization: int
    rarest_count: int  # distinct generalized records attaining the minimum
    utilization: dict[tuple, int]
    predicates: list[dict]  # one per utilization-1 record


def a8_singling_out(breach: DatasetView, g: Generalization) -> SinglingOutReport:
    """Utilization counts per distinct generalized record; any record with
    utilization 1 singles out one individual, and its bucket ranges form an
    isolating predicate."""
    feats = breach.feature_indices
    keys = [tuple(row) for row in breach.values[:, feats]]
    counts = Counter(keys)
    min_util = min(counts.values())
    rarest = sum(1 for c in counts.values() if c == min_util)

    predicates = []
    for key, c in counts.items():
        if c != 1:
            continue
        pred = {}
        for j, z in zip(feats, key):
            attr = breach.schema[j]
            m = g.attr(attr.name)
            if m.identity:
                pred[attr.name] = {"value": float(z)}
            elif m.kind == "discrete":
                values = [v for v, b in enumerate(m.value_map, start=1) if b == int(z)]
                pred[attr.name] = {"values": values}
            else:
                lo, hi = m.interval(int(z))
                pred[attr.name] = {"interval": [lo, hi]}
        predicates.append(pred)
    return SinglingOutReport(min_util, rarest, dict(counts), predicates)
