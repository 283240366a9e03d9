"""Strict, global, single-dimensional attribute generalizations.

A generalization maps each feature attribute independently onto 1-based
bucket indices: continuous attributes through an ordered threshold list
(boundary values fall into the lower bucket), discrete attributes through a
surjective value -> bucket map. Includes the NCP/GCP information-loss
metrics and pre-image masks used by the reconstruction adversaries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from vdm.dataset import (
    AttributeSchema,
    DatasetView,
    schema_fingerprint,
)


class GeneralizationError(ValueError):
    pass


@dataclass(frozen=True)
class AttrMap:
    """Bucket map for one feature attribute.

    Exactly one of ``thresholds`` (continuous) or ``value_map`` (discrete) is
    set; a continuous attribute may instead be an identity passthrough.
    """

    name: str
    kind: str
    k: int | None
    thresholds: tuple[float, ...] | None = None
    value_map: tuple[int, ...] | None = None
    identity: bool = False

    def bucket(self, v: float) -> int:
        if self.kind == "discrete":
            return self.value_map[int(v) - 1]
        if self.identity:
            raise GeneralizationError(f"{self.name}: identity map has no buckets")
        return int(np.searchsorted(self.thresholds, v, side="left")) + 1

    def buckets(self, col: np.ndarray) -> np.ndarray:
        if self.kind == "discrete":
            lut = np.asarray(self.value_map)
            return lut[col.astype(int) - 1].astype(float)
        if self.identity:
            return col.astype(float)
        return np.searchsorted(self.thresholds, col, side="left") + 1.0

    def interval(self, bucket: int) -> tuple[float, float]:
        """[lo, hi] range of a continuous bucket within [0, 1]."""
        edges = (0.0,) + tuple(self.thresholds) + (1.0,)
        return edges[bucket - 1], edges[bucket]


def _canonical_value_map(value_map, k: int) -> tuple[int, ...]:
    """Renumber buckets so they sort by the minimum original value they hold."""
    first_seen = {}
    for v, b in enumerate(value_map, start=1):
        first_seen.setdefault(b, v)
    order = sorted(first_seen, key=lambda b: first_seen[b])
    relabel = {b: i + 1 for i, b in enumerate(order)}
    if len(order) != k:
        raise GeneralizationError("value map is not surjective onto its buckets")
    return tuple(relabel[b] for b in value_map)


@dataclass(frozen=True)
class Generalization:
    """Per-attribute bucket maps for every feature attribute of a schema."""

    fingerprint: str
    attrs: tuple[AttrMap, ...]

    @staticmethod
    def build(schema: list[AttributeSchema], maps: dict[str, AttrMap]) -> "Generalization":
        """Assemble and validate a generalization covering every feature attr."""
        attrs = []
        for a in schema:
            if a.role != "feature":
                continue
            if a.name not in maps:
                raise GeneralizationError(f"no map for attribute {a.name}")
            m = maps[a.name]
            if m.kind != a.kind:
                raise GeneralizationError(f"{a.name}: map kind does not match schema")
            if a.kind == "discrete":
                if m.value_map is None or len(m.value_map) != a.cardinality:
                    raise GeneralizationError(f"{a.name}: value map must cover 1..{a.cardinality}")
                vm = _canonical_value_map(m.value_map, m.k)
                m = replace(m, value_map=vm, thresholds=None, identity=False)
            elif not m.identity:
                ts = tuple(float(t) for t in m.thresholds or ())
                if any(not 0.0 < t < 1.0 for t in ts) or any(
                    ts[i] >= ts[i + 1] for i in range(len(ts) - 1)
                ):
                    raise GeneralizationError(
                        f"{a.name}: thresholds must be strictly increasing inside (0,1)"
                    )
                if m.k != len(ts) + 1:
                    raise GeneralizationError(f"{a.name}: k must equal len(thresholds)+1")
                m = replace(m, thresholds=ts, value_map=None)
            else:
                m = replace(m, thresholds=None, value_map=None, k=None)
            attrs.append(m)
        return Generalization(schema_fingerprint(schema), tuple(attrs))

    @staticmethod
    def identity(schema: list[AttributeSchema]) -> "Generalization":
        """No-op generalization: k_i = c_i identity maps, continuous passthrough."""
        maps = {}
        for a in schema:
            if a.role != "feature":
                continue
            if a.kind == "discrete":
                maps[a.name] = AttrMap(a.name, "discrete", a.cardinality,
                                       value_map=tuple(range(1, a.cardinality + 1)))
            else:
                maps[a.name] = AttrMap(a.name, "continuous", None, identity=True)
        return Generalization.build(schema, maps)

    @staticmethod
    def full(schema: list[AttributeSchema]) -> "Generalization":
        """Full suppression: every attribute collapsed to a single bucket."""
        maps = {}
        for a in schema:
            if a.role != "feature":
                continue
            if a.kind == "discrete":
                maps[a.name] = AttrMap(a.name, "discrete", 1, value_map=(1,) * a.cardinality)
            else:
                maps[a.name] = AttrMap(a.name, "continuous", 1, thresholds=())
        return Generalization.build(schema, maps)

    def attr(self, name: str) -> AttrMap:
        for m in self.attrs:
            if m.name == name:
                return m
        raise KeyError(name)

    def check_schema(self, schema: list[AttributeSchema]) -> None:
        if schema_fingerprint(schema) != self.fingerprint:
            raise GeneralizationError("generalization was built for a different schema")

    def generalized_schema(self, schema: list[AttributeSchema]) -> list[AttributeSchema]:
        self.check_schema(schema)
        out = []
        by_name = {m.name: m for m in self.attrs}
        for a in schema:
            if a.role != "feature":
                out.append(a)
                continue
            m = by_name[a.name]
            if m.identity:
                out.append(a)
            else:
                out.append(AttributeSchema(a.name, "discrete", m.k, a.personal, a.role))
        return out

    def apply(self, view: DatasetView) -> DatasetView:
        """Replace every feature value by its bucket index; target untouched."""
        self.check_schema(view.schema)
        by_name = {m.name: m for m in self.attrs}
        values = view.values.copy()
        for j, a in enumerate(view.schema):
            if a.role != "feature":
                continue
            values[:, j] = by_name[a.name].buckets(view.values[:, j])
        return DatasetView(self.generalized_schema(view.schema), values, view.split.copy(),
                           view.seed)

    def total_buckets(self) -> int:
        return sum(m.k for m in self.attrs if m.k is not None)


def _check_weights(weights: np.ndarray, d: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (d,) or (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
        raise GeneralizationError("weights must be nonnegative per feature and sum to 1")
    return w


def ncp(g: Generalization, schema: list[AttributeSchema], gen_record: np.ndarray,
        weights=None) -> float:
    """Normalized certainty penalty of one generalized record.

    Per attribute: 0 for singleton buckets, |preimage|/c for discrete,
    interval length for continuous (domain [0,1] after normalization).
    """
    g.check_schema(schema)
    feats = [a for a in schema if a.role == "feature"]
    w = _check_weights(weights if weights is not None else
                       np.full(len(feats), 1.0 / len(feats)), len(feats))
    by_name = {m.name: m for m in g.attrs}
    fidx = [j for j, a in enumerate(schema) if a.role == "feature"]
    total = 0.0
    for wi, j, a in zip(w, fidx, feats):
        m = by_name[a.name]
        if m.identity:
            continue
        z = int(gen_record[j])
        if a.kind == "discrete":
            size = m.value_map.count(z)
            if size > 1:
                total += wi * size / a.cardinality
        else:
            lo, hi = m.interval(z)
            total += wi * (hi - lo)
    return total


def gcp(g: Generalization, schema: list[AttributeSchema], gen_view: DatasetView,
        weights=None) -> float:
    """Mean NCP over all rows of a generalized view."""
    if gen_view.n == 0:
        raise GeneralizationError("empty view")
    return float(np.mean([ncp(g, schema, gen_view.values[i], weights)
                          for i in range(gen_view.n)]))


@dataclass(frozen=True)
class PreimageMask:
    """Per attribute and bucket, the original values the bucket covers.

    Discrete attributes map to exact value sets; continuous attributes map
    to intervals, optionally refined to train-observed values when a source
    view is supplied.
    """

    sets: dict[str, dict[int, frozenset]]
    intervals: dict[str, dict[int, tuple[float, float]]]


def preimage_mask(g: Generalization, view: DatasetView | None = None) -> PreimageMask:
    sets: dict[str, dict[int, frozenset]] = {}
    intervals: dict[str, dict[int, tuple[float, float]]] = {}
    for m in g.attrs:
        if m.kind == "discrete":
            buckets: dict[int, set] = {b: set() for b in range(1, m.k + 1)}
            for v, b in enumerate(m.value_map, start=1):
                buckets[b].add(v)
            sets[m.name] = {b: frozenset(s) for b, s in buckets.items()}
        elif not m.identity:
            intervals[m.name] = {b: m.interval(b) for b in range(1, m.k + 1)}
            if view is not None:
                j = next(i for i, a in enumerate(view.schema) if a.name == m.name)
                observed = np.unique(view.values[view.rows("train"), j])
                sets[m.name] = {
                    b: frozenset(
                        float(v) for v in observed if m.bucket(float(v)) == b
                    )
                    for b in range(1, m.k + 1)
                }
    return PreimageMask(sets, intervals)


def serialize(g: Generalization) -> dict:
    doc = {"schema_fingerprint": g.fingerprint, "attributes": []}
    for m in g.attrs:
        entry = {"name": m.name, "kind": m.kind, "k": m.k}
        if m.kind == "discrete":
            entry["value_map"] = list(m.value_map)
        elif m.identity:
            entry["identity"] = True
        else:
            entry["thresholds"] = list(m.thresholds)
        doc["attributes"].append(entry)
    return doc


def deserialize(doc: dict, schema: list[AttributeSchema]) -> Generalization:
    if doc.get("schema_fingerprint") != schema_fingerprint(schema):
        raise GeneralizationError("schema fingerprint mismatch")
    maps = {}
    try:
        for entry in doc["attributes"]:
            maps[entry["name"]] = AttrMap(
                name=entry["name"],
                kind=entry["kind"],
                k=entry.get("k"),
                thresholds=tuple(entry["thresholds"]) if "thresholds" in entry else None,
                value_map=tuple(entry["value_map"]) if "value_map" in entry else None,
                identity=bool(entry.get("identity", False)),
            )
    except (KeyError, TypeError) as e:
        raise GeneralizationError(f"malformed generalization document: {e}") from None
    return Generalization.build(schema, maps)


def save(g: Generalization, path: str) -> None:
    with open(path, "w") as f:
        json.dump(serialize(g), f, indent=2)


def load(path: str, schema: list[AttributeSchema]) -> Generalization:
    with open(path) as f:
        return deserialize(json.load(f), schema)
