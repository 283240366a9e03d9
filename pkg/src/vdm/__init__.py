"""Vertical data minimization toolkit.

Learn per-attribute generalizations on a small full-granularity sample,
measure their utility cost and empirical privacy risk against a family of
reconstruction / linkability / singling-out adversaries, and select
Pareto-optimal candidates for deployment.
"""

from vdm.dataset import AttributeSchema, DatasetView, load_csv, load_schema, split_view
from vdm.generalize import Generalization

__all__ = [
    "AttributeSchema",
    "DatasetView",
    "Generalization",
    "load_csv",
    "load_schema",
    "split_view",
]
