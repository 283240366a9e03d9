import itertools

import numpy as np
import pytest

from vdm.baselines import (
    IterativeResult,
    anova_f_values,
    anova_feature_select,
    dp_group,
    iterative_minimize,
    uniform_minimize,
    _quantile_thresholds,
)
from vdm.dataset import AttributeSchema, DatasetView, split_view
from vdm.nn import TrainSchedule


def mixed_view(n=200, seed=0):
    rng = np.random.default_rng(seed)
    schema = [
        AttributeSchema("x", "continuous"),
        AttributeSchema("c", "discrete", 6, personal=True),
        AttributeSchema("d", "discrete", 3),
        AttributeSchema("y", "discrete", 2, role="target"),
    ]
    values = np.column_stack([
        rng.uniform(0, 1, n),
        rng.integers(1, 7, n).astype(float),
        rng.integers(1, 4, n).astype(float),
        rng.integers(1, 3, n).astype(float),
    ])
    return split_view(DatasetView(schema, values, np.zeros(n, dtype=np.int8)),
                      seed=seed)


class TestUniform:
    def test_continuous_equal_width(self):
        g = uniform_minimize(mixed_view(), 4)
        m = g.attr("x")
        assert m.thresholds == (0.25, 0.5, 0.75)
        # boundary values fall in the lower interval
        assert m.bucket(0.25) == 1 and m.bucket(0.26) == 2

    def test_discrete_surjective(self):
        for seed in range(10):
            g = uniform_minimize(mixed_view(), 3, seed=seed)
            vm = g.attr("c").value_map
            assert set(vm) == {1, 2, 3}
            assert len(vm) == 6

    def test_small_cardinality_stays_identity(self):
        g = uniform_minimize(mixed_view(), 4)
        assert g.attr("d").value_map == (1, 2, 3)

    def test_deterministic_in_seed(self):
        a = uniform_minimize(mixed_view(), 2, seed=5)
        b = uniform_minimize(mixed_view(), 2, seed=5)
        assert a == b

    def test_k_one_is_full_suppression(self):
        g = uniform_minimize(mixed_view(), 1)
        assert all(m.k == 1 for m in g.attrs)

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            uniform_minimize(mixed_view(), 0)


def oracle_f(groups, n_classes):
    """Plain one-way ANOVA on a single column, grouped by class labels."""
    all_vals = np.concatenate(groups)
    grand = all_vals.mean()
    ssb = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    ssw = sum(((g - g.mean()) ** 2).sum() for g in groups)
    df_b = n_classes - 1
    df_w = len(all_vals) - n_classes
    if ssw <= 0:
        return np.inf if ssb > 0 else 0.0
    return (ssb / df_b) / (ssw / df_w)


class TestAnova:
    def test_f_matches_oracle(self):
        view = mixed_view(n=300, seed=1)
        rows = view.rows("train")
        y = view.targets(rows)
        f = anova_f_values(view)
        # continuous attribute scored directly
        col = view.values[rows, 0]
        want = oracle_f([col[y == c] for c in np.unique(y)], 2)
        assert f[0] == pytest.approx(want, rel=1e-10)
        # discrete attribute: max over its indicator columns
        best = -np.inf
        for v in range(1, 7):
            ind = (view.values[rows, 1] == v).astype(float)
            best = max(best, oracle_f([ind[y == c] for c in np.unique(y)], 2))
        assert f[1] == pytest.approx(best, rel=1e-10)

    def test_informative_feature_ranked_first(self):
        rng = np.random.default_rng(2)
        n = 400
        y = rng.integers(1, 3, n).astype(float)
        schema = [
            AttributeSchema("noise", "continuous"),
            AttributeSchema("signal", "continuous"),
            AttributeSchema("y", "discrete", 2, role="target"),
        ]
        values = np.column_stack([
            rng.uniform(0, 1, n),
            np.clip((y - 1) * 0.5 + rng.normal(0, 0.05, n), 0, 1),
            y,
        ])
        view = split_view(DatasetView(schema, values, np.zeros(n, dtype=np.int8)))
        g = anova_feature_select(view, 1)
        assert g.attr("signal").identity
        assert g.attr("noise").k == 1

    def test_constant_column_scores_zero(self):
        view = mixed_view()
        arr = view.values.copy()
        arr[:, 0] = 0.5
        const = split_view(DatasetView(view.schema, arr, np.zeros(view.n, np.int8)))
        assert anova_f_values(const)[0] == 0.0

    def test_selection_keeps_k_and_suppresses_rest(self):
        view = mixed_view()
        g = anova_feature_select(view, 2)
        kept = [m for m in g.attrs if m.identity or (m.k and m.k > 1)]
        dropped = [m for m in g.attrs if m.k == 1]
        assert len(kept) == 2 and len(dropped) == 1

    def test_k_bounds(self):
        with pytest.raises(ValueError):
            anova_feature_select(mixed_view(), 0)
        with pytest.raises(ValueError):
            anova_feature_select(mixed_view(), 4)


def oracle_dp(scores, k):
    """Enumerate every contiguous partition into k non-empty groups."""
    n = len(scores)
    best = (np.inf, None)
    for cuts in itertools.combinations(range(1, n), k - 1):
        edges = [0, *cuts, n]
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            seg = np.asarray(scores[lo:hi], dtype=float)
            total += seg.var()
        obj = total / k
        if obj < best[0]:
            best = (obj, edges)
    return best


class TestDpGroup:
    def test_matches_exhaustive(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            n = int(rng.integers(2, 9))
            k = int(rng.integers(1, n + 1))
            scores = np.sort(rng.normal(size=n))
            groups, obj = dp_group(scores, k)
            want_obj, _ = oracle_dp(scores, k)
            assert obj == pytest.approx(want_obj, abs=1e-12)
            # groups must be contiguous, 1-based, non-empty, exactly k of them
            assert groups[0] == 1 and groups[-1] == k
            assert np.all(np.diff(groups) >= 0)
            assert set(groups) == set(range(1, k + 1))

    def test_two_clusters_split_cleanly(self):
        scores = np.array([0.0, 0.01, 0.02, 5.0, 5.01])
        groups, obj = dp_group(scores, 2)
        assert list(groups) == [1, 1, 1, 2, 2]

    def test_k_equals_n_zero_objective(self):
        groups, obj = dp_group(np.array([1.0, 2.0, 9.0]), 3)
        assert obj == 0.0
        assert list(groups) == [1, 2, 3]

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            dp_group(np.array([1.0, 2.0]), 3)


class TestQuantiles:
    def test_duplicates_merged(self):
        col = np.array([0.2] * 50 + [0.8] * 50)
        ts = _quantile_thresholds(col, 5)
        assert ts == tuple(sorted(set(ts)))
        assert all(0.0 < t < 1.0 for t in ts)

    def test_uniform_data_near_even(self):
        col = np.linspace(0, 1, 1001)
        ts = _quantile_thresholds(col, 4)
        assert np.allclose(ts, (0.25, 0.5, 0.75), atol=1e-3)


class TestIterative:
    def test_respects_budget_and_reports_usage(self):
        view = mixed_view(n=300, seed=4)
        res = iterative_minimize(view, k_init=3, target_error=0.6,
                                 eval_budget=6, schedule=TrainSchedule(epochs=2))
        assert isinstance(res, IterativeResult)
        assert res.budget_exhausted
        assert res.trainings_used <= 6 + 1  # final in-flight training may land

    def test_loose_target_reduces_buckets(self):
        # target well above achievable error: everything shrinks toward k=1
        view = mixed_view(n=300, seed=5)
        res = iterative_minimize(view, k_init=3, target_error=0.99,
                                 eval_budget=500, schedule=TrainSchedule(epochs=2))
        assert not res.budget_exhausted
        assert all((m.k or 99) == 1 for m in res.generalization.attrs)

    def test_impossible_target_keeps_initial(self):
        view = mixed_view(n=300, seed=6)
        res = iterative_minimize(view, k_init=3, target_error=0.0,
                                 eval_budget=500, schedule=TrainSchedule(epochs=2))
        ks = [m.k for m in res.generalization.attrs]
        assert all(k >= 2 for k in ks if k is not None)
