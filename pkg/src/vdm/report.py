"""Serialization of evaluated points and rendering of the trade-off report:
a plot-ready points.csv, a full-detail front.json, and a rendered figure of
the utility-privacy plane with the selected front highlighted."""

from __future__ import annotations

import csv
import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from vdm.evaluation import ParetoPoint, pareto_front  # noqa: E402
from vdm.generalize import serialize  # noqa: E402


def point_to_json(p: ParetoPoint, generalization_file: str | None = None) -> dict:
    doc = {
        "minimizer": p.minimizer,
        "params": p.params,
        "clf_err_val": p.clf_err_val,
        "clf_err_test": p.clf_err_test,
        "adv_err_val": p.adv_err_val,
        "adv_err_test": p.adv_err_test,
        "adv_mean_val": p.adv_mean_val,
        "adv_mean_test": p.adv_mean_test,
        "total_buckets": p.total_buckets,
        "failed": p.failed,
    }
    if p.generalization is not None:
        doc["generalization"] = serialize(p.generalization)
    if generalization_file is not None:
        doc["generalization_file"] = generalization_file
    return doc


def point_from_json(doc: dict) -> ParetoPoint:
    """Rebuild the metric fields of a point; the generalization document, if
    present, rides along untouched in ``params['_generalization']``."""
    p = ParetoPoint(doc["minimizer"], dict(doc["params"]), None,
                    clf_err_val=doc["clf_err_val"], clf_err_test=doc["clf_err_test"],
                    adv_err_val=dict(doc.get("adv_err_val", {})),
                    adv_err_test=dict(doc.get("adv_err_test", {})),
                    total_buckets=doc.get("total_buckets"),
                    failed=doc.get("failed"))
    if "generalization" in doc:
        p.params["_generalization"] = doc["generalization"]
    return p


def save_points(points: list[ParetoPoint], path: str,
                generalization_files: list[str | None] | None = None) -> None:
    refs = generalization_files or [None] * len(points)
    with open(path, "w") as f:
        json.dump([point_to_json(p, r) for p, r in zip(points, refs)], f, indent=2)


def load_points(path: str) -> list[ParetoPoint]:
    with open(path) as f:
        return [point_from_json(d) for d in json.load(f)]


def write_points_csv(points: list[ParetoPoint], path: str) -> None:
    """One row per point; per-attribute adversary errors get their own
    columns so the file plots without joins."""
    attrs = sorted({a for p in points for a in
                    list(p.adv_err_val) + list(p.adv_err_test)})
    header = ["minimizer", "params", "clf_err_val", "clf_err_test",
              "adv_err_val", "adv_err_test", "total_buckets", "failed"]
    header += [f"adv_val_{a}" for a in attrs] + [f"adv_test_{a}" for a in attrs]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for p in points:
            params = {k: v for k, v in p.params.items() if not k.startswith("_")}
            row = [p.minimizer, json.dumps(params, sort_keys=True),
                   p.clf_err_val, p.clf_err_test, p.adv_mean_val, p.adv_mean_test,
                   p.total_buckets if p.total_buckets is not None else "",
                   p.failed or ""]
            row += [p.adv_err_val.get(a, "") for a in attrs]
            row += [p.adv_err_test.get(a, "") for a in attrs]
            w.writerow(row)


def write_front_json(front: list[ParetoPoint], path: str) -> None:
    with open(path, "w") as f:
        docs = []
        for p in front:
            doc = point_to_json(p)
            if "_generalization" in p.params:
                doc["generalization"] = p.params["_generalization"]
                doc["params"] = {k: v for k, v in p.params.items()
                                 if not k.startswith("_")}
            docs.append(doc)
        json.dump(docs, f, indent=2)


def render_figure(points: list[ParetoPoint], front: list[ParetoPoint],
                  path: str) -> None:
    """Scatter of all points in the (adversary error, classifier error) plane
    on test metrics, with the validation-selected front drawn on top."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ok = [p for p in points if p.failed is None]
    by_min = {}
    for p in ok:
        by_min.setdefault(p.minimizer, []).append(p)
    for name, ps in sorted(by_min.items()):
        ax.scatter([p.adv_mean_test for p in ps], [p.clf_err_test for p in ps],
                   s=18, alpha=0.6, label=name)
    fr = sorted(front, key=lambda p: p.adv_mean_test)
    if fr:
        ax.plot([p.adv_mean_test for p in fr], [p.clf_err_test for p in fr],
                "k--o", mfc="none", label="selected front")
    ax.set_xlabel("mean adversary error (test)")
    ax.set_ylabel("classifier error (test)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report(points: list[ParetoPoint], out_dir: str,
                 front: list[ParetoPoint] | None = None) -> list[str]:
    """points.csv + front.json + figure.png into ``out_dir``."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    front = front if front is not None else pareto_front(points)
    paths = [os.path.join(out_dir, n) for n in ("points.csv", "front.json", "figure.png")]
    write_points_csv(points, paths[0])
    write_front_json(front, paths[1])
    render_figure(points, front, paths[2])
    return paths
