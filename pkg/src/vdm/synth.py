"""Seeded synthetic tabular data for tests and demos.

The label depends on exactly two non-personal attributes; each personal
attribute is a noisy deterministic function of one feature, so adversaries
have real signal to exploit.
"""

from __future__ import annotations

import numpy as np

from vdm.dataset import (
    AttributeSchema,
    DatasetView,
    DEFAULT_FRACTIONS,
    split_view,
)


def generate(n: int = 10_000, seed: int = 0, n_continuous: int = 2,
             cards: tuple[int, ...] = (4, 6, 8, 5),
             personal_cards: tuple[int, ...] = (2, 3, 4, 4),
             corr: float = 0.8, label_noise: float = 0.05,
             fractions=DEFAULT_FRACTIONS) -> DatasetView:
    """Draw a dataset with ``n_continuous`` uniform columns, ``cards``
    categorical columns, and ``personal_cards`` personal columns that copy a
    source feature's coarse value with probability ``corr``.

    The binary label is an AND of coarse conditions on the first two
    categorical columns, flipped with probability ``label_noise``.
    """
    if n_continuous < 1 or len(cards) < 2:
        raise ValueError("need at least one continuous and two categorical attributes")
    if not 0.0 <= corr <= 1.0:
        raise ValueError("corr must lie in [0, 1]")
    rng = np.random.default_rng(seed)

    schema: list[AttributeSchema] = []
    columns: list[np.ndarray] = []
    for i in range(n_continuous):
        schema.append(AttributeSchema(f"num{i}", "continuous",
                                      norm_min=0.0, norm_max=1.0))
        columns.append(rng.uniform(0.0, 1.0, size=n))
    for i, c in enumerate(cards):
        schema.append(AttributeSchema(f"cat{i}", "discrete", c))
        columns.append(rng.integers(1, c + 1, size=n).astype(float))

    # personal attributes track features round-robin: num0, num1, ..., cat0, ...
    sources = list(range(n_continuous + len(cards)))
    for i, cp in enumerate(personal_cards):
        s = sources[i % len(sources)]
        src = columns[s]
        if schema[s].kind == "continuous":
            base = np.minimum((src * cp).astype(int) + 1, cp)
        else:
            base = ((src.astype(int) - 1) % cp) + 1
        noise = rng.integers(1, cp + 1, size=n)
        keep = rng.random(n) < corr
        schema.append(AttributeSchema(f"per{i}", "discrete", cp, personal=True))
        columns.append(np.where(keep, base, noise).astype(float))

    cat0 = columns[n_continuous].astype(int)
    cat1 = columns[n_continuous + 1].astype(int)
    rule = (cat0 <= cards[0] // 2) & (cat1 <= cards[1] // 2)
    flip = rng.random(n) < label_noise
    schema.append(AttributeSchema("label", "discrete", 2, role="target"))
    columns.append(np.where(rule ^ flip, 2.0, 1.0))

    values = np.column_stack(columns)
    view = DatasetView(schema, values, np.zeros(n, dtype=np.int8), seed)
    return split_view(view, fractions=fractions, seed=seed)
