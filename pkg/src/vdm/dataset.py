"""Schema-driven tabular data: ingestion, splits, and one-hot encodings.

Discrete attributes are stored as 1-based integer codes, continuous ones as
min-max normalized values in [0, 1] (statistics taken from the train split
and reused for val/test, which are clamped into range).
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

SPLIT_NAMES = ("train", "val", "test")
SPLIT_COLUMN = "__split__"
DEFAULT_FRACTIONS = (0.6, 0.1, 0.3)


class SchemaError(ValueError):
    """Schema file is malformed or internally inconsistent."""


class DataError(ValueError):
    """Data values violate the declared schema."""


@dataclass(frozen=True)
class AttributeSchema:
    """One column of a dataset.

    ``labels`` maps 1-based codes to source labels for discrete attributes
    read from non-integer CSV columns. ``norm_min``/``norm_max`` hold the
    train-split statistics used to normalize a continuous attribute; when
    present on load, the column is assumed to be already normalized.
    """

    name: str
    kind: str  # "continuous" | "discrete"
    cardinality: int | None = None
    personal: bool = False
    role: str = "feature"  # "feature" | "target"
    labels: tuple[str, ...] | None = None
    norm_min: float | None = None
    norm_max: float | None = None

    def __post_init__(self):
        if self.kind not in ("continuous", "discrete"):
            raise SchemaError(f"attribute {self.name}: unknown kind {self.kind!r}")
        if self.role not in ("feature", "target"):
            raise SchemaError(f"attribute {self.name}: unknown role {self.role!r}")
        if self.kind == "discrete":
            if self.cardinality is None or self.cardinality < 1:
                raise SchemaError(f"attribute {self.name}: discrete needs positive cardinality")
        elif self.cardinality is not None:
            raise SchemaError(f"attribute {self.name}: continuous must not set cardinality")


def validate_schema(schema: list[AttributeSchema]) -> None:
    names = [a.name for a in schema]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate attribute names")
    targets = [a for a in schema if a.role == "target"]
    if len(targets) != 1:
        raise SchemaError(f"schema must declare exactly one target, found {len(targets)}")
    if targets[0].kind != "discrete":
        raise SchemaError("target attribute must be discrete")
    if targets[0].personal:
        raise SchemaError("target attribute cannot be marked personal")


def schema_fingerprint(schema: list[AttributeSchema]) -> str:
    """Stable digest of the structural schema (ignores labels/norm stats)."""
    core = [[a.name, a.kind, a.cardinality, a.personal, a.role] for a in schema]
    blob = json.dumps(core, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def schema_to_json(schema: list[AttributeSchema]) -> list[dict]:
    out = []
    for a in schema:
        d = {
            "name": a.name,
            "kind": a.kind,
            "personal": a.personal,
            "role": a.role,
        }
        if a.kind == "discrete":
            d["cardinality"] = a.cardinality
            if a.labels is not None:
                d["labels"] = list(a.labels)
        elif a.norm_min is not None:
            d["norm_min"] = a.norm_min
            d["norm_max"] = a.norm_max
        out.append(d)
    return out


def schema_from_json(doc) -> list[AttributeSchema]:
    if not isinstance(doc, list):
        raise SchemaError("schema document must be a JSON array of attribute objects")
    schema = []
    for entry in doc:
        try:
            schema.append(
                AttributeSchema(
                    name=entry["name"],
                    kind=entry["kind"],
                    cardinality=entry.get("cardinality"),
                    personal=bool(entry.get("personal", False)),
                    role=entry.get("role", "feature"),
                    labels=tuple(entry["labels"]) if entry.get("labels") else None,
                    norm_min=entry.get("norm_min"),
                    norm_max=entry.get("norm_max"),
                )
            )
        except KeyError as e:
            raise SchemaError(f"schema attribute missing field {e}") from None
    validate_schema(schema)
    return schema


def load_schema(path: str) -> list[AttributeSchema]:
    with open(path) as f:
        return schema_from_json(json.load(f))


def save_schema(schema: list[AttributeSchema], path: str) -> None:
    with open(path, "w") as f:
        json.dump(schema_to_json(schema), f, indent=2)


@dataclass(frozen=True)
class DatasetView:
    """Immutable typed table with per-row train/val/test tags.

    ``values`` has one column per schema attribute: 1-based codes for
    discrete attributes, [0, 1] floats for continuous ones.
    """

    schema: list[AttributeSchema]
    values: np.ndarray  # (n, len(schema)) float64
    split: np.ndarray  # (n,) int8, index into SPLIT_NAMES
    seed: int = 0

    def __post_init__(self):
        validate_schema(self.schema)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.schema):
            raise DataError("values shape does not match schema")
        if self.split.shape != (self.values.shape[0],):
            raise DataError("split tags must be one per row")
        self.values.setflags(write=False)
        self.split.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def target_index(self) -> int:
        return next(i for i, a in enumerate(self.schema) if a.role == "target")

    @property
    def feature_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.schema) if a.role == "feature"]

    @property
    def personal_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.schema) if a.role == "feature" and a.personal]

    def rows(self, split: str | None = None) -> np.ndarray:
        """Row indices of a split ('train'/'val'/'test'), or all rows."""
        if split is None:
            return np.arange(self.n)
        return np.flatnonzero(self.split == SPLIT_NAMES.index(split))

    def targets(self, rows: np.ndarray | None = None) -> np.ndarray:
        """0-based integer target labels for the given rows."""
        rows = np.arange(self.n) if rows is None else rows
        return self.values[rows, self.target_index].astype(int) - 1

    def take(self, rows: np.ndarray, split_tag: str | None = None) -> "DatasetView":
        """Subset view; optionally retag every kept row with one split."""
        split = self.split[rows].copy()
        if split_tag is not None:
            split = np.full(len(rows), SPLIT_NAMES.index(split_tag), dtype=np.int8)
        return DatasetView(self.schema, self.values[rows].copy(), split, self.seed)


def _assign_splits(values: np.ndarray, schema: list[AttributeSchema],
                   fractions, seed: int) -> np.ndarray:
    """Split rows into train/val/test, forcing class coverage into train.

    Every declared class of every discrete attribute must occur at least
    once in the train split; one covering row per missing (attribute,
    class) pair is reserved first, the remainder is shuffled by seed.
    """
    if abs(sum(fractions) - 1.0) > 1e-9 or len(fractions) != 3 or min(fractions) < 0:
        raise DataError("split fractions must be three nonnegative ratios summing to 1")
    n = values.shape[0]
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)

    forced: list[int] = []
    covered: set[tuple[int, int]] = set()
    for j, attr in enumerate(schema):
        if attr.kind != "discrete":
            continue
        col = values[order, j].astype(int)
        for cls in range(1, attr.cardinality + 1):
            if (j, cls) in covered:
                continue
            hits = np.flatnonzero(col == cls)
            if len(hits) == 0:
                raise DataError(
                    f"class-coverage infeasible: attribute {attr.name} has no rows "
                    f"with value {cls}"
                )
            row = order[hits[0]]
            forced.append(row)
            for jj, a2 in enumerate(schema):
                if a2.kind == "discrete":
                    covered.add((jj, int(values[row, jj])))
    forced_arr = np.unique(np.array(forced, dtype=int))

    rest = order[~np.isin(order, forced_arr)]
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_train = max(n_train, len(forced_arr))

    split = np.empty(n, dtype=np.int8)
    split[forced_arr] = 0
    fill_train = rest[: n_train - len(forced_arr)]
    fill_val = rest[n_train - len(forced_arr): n_train - len(forced_arr) + n_val]
    fill_test = rest[n_train - len(forced_arr) + n_val:]
    split[fill_train] = 0
    split[fill_val] = 1
    split[fill_test] = 2
    return split


def split_view(view: DatasetView, fractions=DEFAULT_FRACTIONS, seed: int = 0) -> DatasetView:
    """Reassign train/val/test tags; deterministic in (data, fractions, seed)."""
    split = _assign_splits(view.values, view.schema, fractions, seed)
    return DatasetView(view.schema, view.values.copy(), split, seed)


def _parse_discrete(raw: list[str], attr: AttributeSchema, col: str):
    """Map a raw column to 1-based codes, building a label map if needed."""
    if attr.labels is not None:
        lut = {lab: i + 1 for i, lab in enumerate(attr.labels)}
        codes = np.empty(len(raw))
        for i, v in enumerate(raw):
            if v not in lut:
                raise DataError(f"unknown label {v!r} row {i + 1} col {col}")
            codes[i] = lut[v]
        return codes, attr.labels

    def as_int(s):
        try:
            return int(s)
        except ValueError:
            return None

    ints = [as_int(v) for v in raw]
    if all(v is not None for v in ints):
        codes = np.array(ints, dtype=float)
        for i, v in enumerate(ints):
            if not 1 <= v <= attr.cardinality:
                raise DataError(f"value out of range row {i + 1} col {col}")
        return codes, None

    labels = tuple(sorted(set(raw)))
    if len(labels) > attr.cardinality:
        raise DataError(
            f"col {col}: {len(labels)} distinct labels exceed cardinality {attr.cardinality}"
        )
    lut = {lab: i + 1 for i, lab in enumerate(labels)}
    return np.array([lut[v] for v in raw], dtype=float), labels


def load_csv(path: str, schema_path: str, seed: int = 0,
             fractions=DEFAULT_FRACTIONS) -> DatasetView:
    """Read an RFC-4180 CSV with a header row against a JSON schema.

    A ``__split__`` column written by :func:`write_csv` is honored; otherwise
    rows are split by (fractions, seed). Continuous columns are normalized
    with train-split min/max unless the schema already carries constants.
    """
    schema = load_schema(schema_path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty CSV file") from None
        rows = list(reader)
    if not rows:
        raise DataError("CSV has no data rows")

    names = {a.name for a in schema}
    for col in header:
        if col != SPLIT_COLUMN and col not in names:
            raise DataError(f"unknown column {col!r}")
    col_of = {c: i for i, c in enumerate(header)}
    target_name = next(a.name for a in schema if a.role == "target")
    if target_name not in col_of:
        raise DataError(f"missing target column {target_name!r}")

    n = len(rows)
    values = np.empty((n, len(schema)))
    new_schema: list[AttributeSchema] = []
    for j, attr in enumerate(schema):
        if attr.name not in col_of:
            raise DataError(f"missing column {attr.name!r}")
        raw = [r[col_of[attr.name]] for r in rows]
        for i, v in enumerate(raw):
            if v == "":
                raise DataError(f"missing value row {i + 1} col {attr.name}")
        if attr.kind == "discrete":
            codes, labels = _parse_discrete(raw, attr, attr.name)
            values[:, j] = codes
            new_schema.append(replace(attr, labels=labels))
        else:
            col = np.empty(n)
            for i, v in enumerate(raw):
                try:
                    col[i] = float(v)
                except ValueError:
                    raise DataError(
                        f"non-numeric continuous value row {i + 1} col {attr.name}"
                    ) from None
            values[:, j] = col
            new_schema.append(attr)

    if SPLIT_COLUMN in col_of:
        tags = [r[col_of[SPLIT_COLUMN]] for r in rows]
        split = np.array([SPLIT_NAMES.index(t) for t in tags], dtype=np.int8)
    else:
        split = _assign_splits(values, new_schema, fractions, seed)

    for j, attr in enumerate(new_schema):
        if attr.kind != "continuous":
            continue
        if attr.norm_min is not None:
            mn, mx = attr.norm_min, attr.norm_max
        else:
            train_col = values[split == 0, j]
            mn, mx = float(train_col.min()), float(train_col.max())
            new_schema[j] = replace(attr, norm_min=mn, norm_max=mx)
        span = mx - mn if mx > mn else 1.0
        values[:, j] = np.clip((values[:, j] - mn) / span, 0.0, 1.0)

    return DatasetView(new_schema, values, split, seed)


def write_csv(view: DatasetView, path: str, schema_path: str | None = None) -> None:
    """Write a view (plus split tags) so that load_csv round-trips exactly.

    Continuous columns are written in normalized form; the companion schema
    file carries the normalization constants, so reloading is lossless.
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow([a.name for a in view.schema] + [SPLIT_COLUMN])
        for i in range(view.n):
            row = []
            for j, attr in enumerate(view.schema):
                v = view.values[i, j]
                if attr.kind == "discrete":
                    code = int(v)
                    row.append(attr.labels[code - 1] if attr.labels else str(code))
                else:
                    row.append(repr(float(v)))
            row.append(SPLIT_NAMES[view.split[i]])
            writer.writerow(row)
    if schema_path is not None:
        # written values are already normalized: identity constants
        out_schema = [replace(a, norm_min=0.0, norm_max=1.0)
                      if a.kind == "continuous" else a for a in view.schema]
        save_schema(out_schema, schema_path)


def onehot_layout(schema: list[AttributeSchema]) -> list[tuple[int, int, int]]:
    """(attribute index, start column, width) triples for feature encoding."""
    layout = []
    start = 0
    for j, attr in enumerate(schema):
        if attr.role != "feature":
            continue
        width = attr.cardinality if attr.kind == "discrete" else 1
        layout.append((j, start, width))
        start += width
    return layout


def encode_onehot(view: DatasetView, rows: np.ndarray | None = None) -> np.ndarray:
    """Dense encoding: c one-hot columns per discrete feature, one per continuous."""
    rows = np.arange(view.n) if rows is None else np.asarray(rows)
    if rows.size and (rows.min() < 0 or rows.max() >= view.n):
        raise DataError("row selection out of bounds")
    layout = onehot_layout(view.schema)
    width = sum(w for _, _, w in layout)
    out = np.zeros((len(rows), width))
    for j, start, w in layout:
        col = view.values[rows, j]
        if view.schema[j].kind == "discrete":
            out[np.arange(len(rows)), start + col.astype(int) - 1] = 1.0
        else:
            out[:, start] = col
    return out
