import numpy as np
import pytest

from vdm.dataset import (
    AttributeSchema,
    DataError,
    DatasetView,
    SchemaError,
    encode_onehot,
    load_csv,
    onehot_layout,
    schema_fingerprint,
    schema_from_json,
    schema_to_json,
    split_view,
    write_csv,
)


def small_schema():
    return [
        AttributeSchema("age", "continuous"),
        AttributeSchema("job", "discrete", 3, personal=True),
        AttributeSchema("y", "discrete", 2, role="target"),
    ]


def small_view(n=60, seed=0):
    rng = np.random.default_rng(seed)
    values = np.column_stack([
        rng.uniform(0, 1, n),
        rng.integers(1, 4, n).astype(float),
        rng.integers(1, 3, n).astype(float),
    ])
    view = DatasetView(small_schema(), values, np.zeros(n, dtype=np.int8))
    return split_view(view, seed=seed)


class TestSchema:
    def test_duplicate_names_rejected(self):
        with pytest.raises(SchemaError, match="duplicate"):
            schema_from_json(schema_to_json([
                AttributeSchema("a", "continuous"),
                AttributeSchema("a", "discrete", 2),
                AttributeSchema("y", "discrete", 2, role="target"),
            ]))

    def test_exactly_one_target(self):
        with pytest.raises(SchemaError, match="target"):
            DatasetView([AttributeSchema("a", "continuous")],
                        np.zeros((3, 1)), np.zeros(3, dtype=np.int8))

    def test_target_must_be_discrete(self):
        with pytest.raises(SchemaError):
            schema_from_json([
                {"name": "a", "kind": "discrete", "cardinality": 2},
                {"name": "y", "kind": "continuous", "role": "target"},
            ])

    def test_personal_target_rejected(self):
        with pytest.raises(SchemaError):
            schema_from_json([
                {"name": "a", "kind": "discrete", "cardinality": 2},
                {"name": "y", "kind": "discrete", "cardinality": 2,
                 "role": "target", "personal": True},
            ])

    def test_discrete_needs_cardinality(self):
        with pytest.raises(SchemaError):
            AttributeSchema("a", "discrete")

    def test_fingerprint_ignores_labels_and_norm(self):
        s1 = small_schema()
        s2 = [
            AttributeSchema("age", "continuous", norm_min=0.0, norm_max=5.0),
            AttributeSchema("job", "discrete", 3, personal=True,
                            labels=("x", "y", "z")),
            AttributeSchema("y", "discrete", 2, role="target"),
        ]
        assert schema_fingerprint(s1) == schema_fingerprint(s2)

    def test_fingerprint_sensitive_to_structure(self):
        s1 = small_schema()
        s2 = small_schema()
        s2[1] = AttributeSchema("job", "discrete", 4, personal=True)
        assert schema_fingerprint(s1) != schema_fingerprint(s2)

    def test_json_round_trip(self):
        schema = small_schema()
        assert schema_from_json(schema_to_json(schema)) == schema


class TestSplits:
    def test_default_fractions(self):
        view = small_view(n=100)
        assert len(view.rows("train")) == 60
        assert len(view.rows("val")) == 10
        assert len(view.rows("test")) == 30

    def test_deterministic_in_seed(self):
        v1 = split_view(small_view(), seed=7)
        v2 = split_view(small_view(), seed=7)
        v3 = split_view(small_view(), seed=8)
        assert np.array_equal(v1.split, v2.split)
        assert not np.array_equal(v1.split, v3.split)

    def test_class_coverage_forced_into_train(self):
        # value 3 of "job" appears exactly once; it must land in train
        n = 50
        schema = [
            AttributeSchema("age", "continuous"),
            AttributeSchema("job", "discrete", 3),
            AttributeSchema("y", "discrete", 2, role="target"),
        ]

        def values(first_job):
            jobs = np.r_[first_job, np.full(n - 2, 1.0), 3.0]
            return np.column_stack([np.linspace(0, 1, n), jobs,
                                    np.tile([1.0, 2.0], n // 2)])

        # cardinality 3 declared but value 2 never occurs: infeasible
        with pytest.raises(DataError, match="class-coverage"):
            split_view(DatasetView(schema, values(1.0), np.zeros(n, dtype=np.int8)))
        for seed in range(5):
            view = split_view(DatasetView(schema, values(2.0),
                                          np.zeros(n, dtype=np.int8)), seed=seed)
            train_jobs = set(view.values[view.rows("train"), 1].astype(int))
            assert train_jobs == {1, 2, 3}

    def test_targets_are_zero_based(self):
        view = small_view()
        y = view.targets(view.rows("train"))
        assert set(np.unique(y)) <= {0, 1}


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        view = small_view(n=80, seed=3)
        data, schema = str(tmp_path / "d.csv"), str(tmp_path / "s.json")
        write_csv(view, data, schema)
        back = load_csv(data, schema)
        assert np.array_equal(back.values, view.values)
        assert np.array_equal(back.split, view.split)

    def test_unknown_column(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("age,job,y,bogus\n0.5,1,1,9\n")
        s = tmp_path / "s.json"
        import json
        s.write_text(json.dumps(schema_to_json(small_schema())))
        with pytest.raises(DataError, match="unknown column"):
            load_csv(str(p), str(s))

    def test_value_out_of_range(self, tmp_path):
        import json
        p = tmp_path / "d.csv"
        p.write_text("age,job,y\n0.5,7,1\n0.2,1,2\n")
        s = tmp_path / "s.json"
        s.write_text(json.dumps(schema_to_json(small_schema())))
        with pytest.raises(DataError, match="out of range"):
            load_csv(str(p), str(s))

    def test_non_numeric_continuous(self, tmp_path):
        import json
        p = tmp_path / "d.csv"
        p.write_text("age,job,y\nabc,1,1\n0.2,1,2\n")
        s = tmp_path / "s.json"
        s.write_text(json.dumps(schema_to_json(small_schema())))
        with pytest.raises(DataError, match="non-numeric"):
            load_csv(str(p), str(s))

    def test_missing_target_column(self, tmp_path):
        import json
        p = tmp_path / "d.csv"
        p.write_text("age,job\n0.5,1\n")
        s = tmp_path / "s.json"
        s.write_text(json.dumps(schema_to_json(small_schema())))
        with pytest.raises(DataError, match="target"):
            load_csv(str(p), str(s))

    def test_missing_value(self, tmp_path):
        import json
        p = tmp_path / "d.csv"
        p.write_text("age,job,y\n0.5,,1\n0.2,1,2\n")
        s = tmp_path / "s.json"
        s.write_text(json.dumps(schema_to_json(small_schema())))
        with pytest.raises(DataError, match="missing value"):
            load_csv(str(p), str(s))

    def test_string_labels_mapped(self, tmp_path):
        import json
        p = tmp_path / "d.csv"
        p.write_text("age,job,y\n0.0,nurse,1\n0.5,clerk,2\n1.0,nurse,1\n"
                     "0.25,smith,2\n0.75,nurse,1\n")
        s = tmp_path / "s.json"
        s.write_text(json.dumps(schema_to_json(small_schema())))
        view = load_csv(str(p), str(s))
        codes = view.values[:, 1].astype(int)
        # labels mapped alphabetically: clerk, nurse, smith
        assert list(codes) == [2, 1, 2, 3, 2]

    def test_normalization_from_train_and_clamped(self, tmp_path):
        import json
        rows = ["age,job,y,__split__"]
        # train ages span [10, 20]; test has 30 which must clamp to 1.0
        rows += [f"{a},1,1,train" for a in (10, 12, 20)]
        rows += ["30,2,2,test", "5,3,2,val"]
        p = tmp_path / "d.csv"
        p.write_text("\n".join(rows) + "\n")
        s = tmp_path / "s.json"
        s.write_text(json.dumps(schema_to_json(small_schema())))
        view = load_csv(str(p), str(s))
        ages = view.values[:, 0]
        assert ages[0] == 0.0 and ages[2] == 1.0
        assert ages[3] == 1.0  # clamped above
        assert ages[4] == 0.0  # clamped below


class TestOnehot:
    def test_layout_and_encoding(self):
        view = small_view(n=10)
        layout = onehot_layout(view.schema)
        assert layout == [(0, 0, 1), (1, 1, 3)]
        x = encode_onehot(view, np.arange(view.n))
        assert x.shape == (10, 4)
        assert np.allclose(x[:, 0], view.values[:, 0])
        assert np.all(x[:, 1:].sum(axis=1) == 1.0)
        codes = view.values[:, 1].astype(int)
        assert np.all(x[np.arange(10), codes] == 1.0)

    def test_out_of_bounds_rows(self):
        view = small_view(n=10)
        with pytest.raises(DataError):
            encode_onehot(view, np.array([11]))
