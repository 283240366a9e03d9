"""Command-line entry point: data synthesis and splitting, minimizer
fitting, adversary evaluation, sweeps, Pareto selection, and reporting.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys

import numpy as np

from vdm import synth
from vdm.adversaries import (
    BreachScenario,
    a1_reconstruct,
    a2_highcertainty,
    a3_a5_sideinfo,
    a3_reconstruct,
    a4_reconstruct,
    a5_reconstruct,
    a6_multibreach,
    a7_linkability,
    a8_singling_out,
)
from vdm.baselines import anova_feature_select, iterative_minimize, uniform_minimize
from vdm.dataset import (
    DataError,
    SchemaError,
    load_csv,
    load_schema,
    split_view,
    write_csv,
)
from vdm.evaluation import limit_points, pareto_front, sweep
from vdm.generalize import Generalization, GeneralizationError
from vdm.generalize import load as load_gen
from vdm.generalize import save as save_gen
from vdm.neural_min import NeuralGenConfig, advtrain_fit, mutualinf_fit
from vdm.nn import TrainSchedule
from vdm.pat import PatConfig, extract_generalization, fit as pat_fit, save_tree
from vdm.report import (
    load_points,
    save_points,
    write_front_json,
    write_report,
)

log = logging.getLogger("vdm")


class ConfigError(Exception):
    pass


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.split(",") if t)


def _load_view(args):
    return load_csv(args.data, args.schema, seed=getattr(args, "seed", 0))


def _load_g(path: str, schema) -> Generalization:
    return load_gen(path, schema)


def cmd_synth(args) -> int:
    view = synth.generate(n=args.n, seed=args.seed, n_continuous=args.continuous,
                          cards=_ints(args.cards),
                          personal_cards=_ints(args.personal_cards),
                          corr=args.corr, label_noise=args.label_noise)
    write_csv(view, args.out, args.schema_out)
    print(f"wrote {view.n} rows to {args.out}")
    return 0


def cmd_split(args) -> int:
    fr = _floats(args.fractions)
    view = load_csv(args.data, args.schema, seed=args.seed, fractions=fr)
    view = split_view(view, fractions=fr, seed=args.seed)
    write_csv(view, args.out, args.schema_out)
    return 0


def cmd_pat(args) -> int:
    view = _load_view(args)
    cfg = PatConfig(alpha=args.alpha, max_leaves=args.max_leaves,
                    min_samples_leaf=args.min_leaf)
    tree = pat_fit(view, cfg)
    save_gen(extract_generalization(tree), args.out)
    if args.tree_out:
        save_tree(tree, args.tree_out)
    print(f"tree with {tree.n_leaves()} leaves, generalization at {args.out}")
    return 0


def cmd_baseline(args) -> int:
    view = _load_view(args)
    if args.method == "uniform":
        g = uniform_minimize(view, args.k, seed=args.seed)
    elif args.method == "featsel":
        g = anova_feature_select(view, args.k)
    else:
        if args.target_error is None:
            raise ConfigError("iterative baseline needs --target-error")
        res = iterative_minimize(view, args.k, args.target_error,
                                 eval_budget=args.budget)
        g = res.generalization
        print(f"trainings used: {res.trainings_used}"
              + (" (budget exhausted)" if res.budget_exhausted else ""))
    save_gen(g, args.out)
    return 0


def cmd_neural(args) -> int:
    view = _load_view(args)
    cfg = NeuralGenConfig(k=args.k, seed=args.seed, epochs=args.epochs)
    fitter = advtrain_fit if args.method == "advtrain" else mutualinf_fit
    save_gen(fitter(view, args.lam, cfg), args.out)
    return 0


def cmd_apply(args) -> int:
    view = _load_view(args)
    g = _load_g(args.generalization, view.schema)
    write_csv(g.apply(view), args.out, args.schema_out)
    return 0


def _report_json(rep) -> dict:
    return {
        "attributes": list(rep.attributes),
        "errors": rep.errors,
        "baselines": rep.baselines,
        "mean_error": rep.mean_error,
        "retained": {a: v.tolist() for a, v in rep.retained.items()}
        if rep.retained else None,
        "fallback_records": {a: v.tolist() for a, v in rep.fallbacks.items()}
        if rep.fallbacks else None,
    }


def cmd_attack(args) -> int:
    view = _load_view(args)
    g = _load_g(args.generalization, view.schema)
    prior = view.take(view.rows("train"), split_tag="train")
    victim = view.take(view.rows(args.breach_split))
    scenario = BreachScenario.from_views(g, prior, victim)
    schedule = TrainSchedule(seed=args.seed, epochs=args.epochs)

    name = args.adversary
    if name == "a1":
        out = _report_json(a1_reconstruct(scenario, schedule))
    elif name == "a2":
        out = _report_json(a2_highcertainty(scenario, args.k_percent, schedule))
    elif name == "a3":
        out = _report_json(a3_reconstruct(scenario, schedule))
    elif name == "a4":
        out = _report_json(a4_reconstruct(scenario, schedule))
    elif name == "a5":
        ordering = args.ordering.split(",") if args.ordering else None
        if args.prefix is not None:
            out = _report_json(a3_a5_sideinfo(scenario, args.prefix, ordering, schedule))
        else:
            out = _report_json(a5_reconstruct(scenario, ordering, schedule))
    elif name == "a6":
        if not args.generalization2:
            raise ConfigError("a6 needs --generalization2 for the second breach")
        g2 = _load_g(args.generalization2, view.schema)
        s2 = BreachScenario.from_views(g2, prior, victim)
        out = _report_json(a6_multibreach(scenario, s2, schedule))
    elif name == "a7":
        if not (args.attrs_a and args.attrs_b):
            raise ConfigError("a7 needs --attrs-a and --attrs-b")
        names_a = args.attrs_a.split(",")
        names_b = args.attrs_b.split(",")
        idx = {a.name: i for i, a in enumerate(view.schema)}
        a_vals = victim.values[:, [idx[n] for n in names_a]]
        b_vals = victim.values[:, [idx[n] for n in names_b]]
        rep = a7_linkability(scenario.breach, g, a_vals, b_vals, names_a, names_b,
                             view.schema, seed=args.seed)
        out = {"match_rate": rep.match_rate, "baseline_rate": rep.baseline_rate,
               "unlinked": rep.skipped.tolist()}
    else:
        rep = a8_singling_out(scenario.breach, g)
        out = {"min_utilization": rep.min_utilization,
               "rarest_count": rep.rarest_count,
               "predicates": rep.predicates,
               "n_distinct": len(rep.utilization)}

    text = json.dumps(out, indent=2)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        print(text)
    return 0


def cmd_sweep(args) -> int:
    view = _load_view(args)
    grid = None
    if args.grid:
        with open(args.grid) as f:
            grid = json.load(f)
    schedule = TrainSchedule(seed=args.seed, epochs=args.epochs)
    points = sweep(view, args.minimizer, grid, schedule, seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    save_points(points, os.path.join(args.out_dir, "points.json"))
    failed = sum(p.failed is not None for p in points)
    print(f"{len(points)} points ({failed} failed) in {args.out_dir}/points.json")
    return 0


def cmd_pareto(args) -> int:
    points = load_points(args.points)
    write_front_json(pareto_front(points), args.out)
    return 0


def cmd_report(args) -> int:
    points = load_points(args.points)
    front = load_points(args.front) if args.front else None
    paths = write_report(points, args.out_dir, front)
    print("wrote " + ", ".join(paths))
    return 0


def _config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def cmd_run(args) -> int:
    with open(args.config) as f:
        cfg = json.load(f)
    for key in ("data", "schema", "out_dir", "minimizers"):
        if key not in cfg:
            raise ConfigError(f"config missing required key {key!r}")
    for key in ("data", "schema"):
        if not os.path.exists(cfg[key]):
            raise ConfigError(f"config references missing file {cfg[key]!r}")
    if "seed" not in cfg:
        raise ConfigError("config must set an explicit seed")

    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    stage = "load"
    try:
        seed = int(cfg["seed"])
        fractions = tuple(cfg.get("fractions", (0.6, 0.1, 0.3)))
        view = load_csv(cfg["data"], cfg["schema"], seed=seed, fractions=fractions)
        schedule = TrainSchedule(seed=seed, **cfg.get("schedule", {}))

        stage = "sweep"
        points = []
        for name, grid in cfg["minimizers"].items():
            points.extend(sweep(view, name, grid or None, schedule, seed=seed))
        stage = "limits"
        points.extend(limit_points(view, schedule))

        stage = "report"
        gens_dir = os.path.join(out_dir, "gens")
        os.makedirs(gens_dir, exist_ok=True)
        refs = []
        for i, p in enumerate(points):
            if p.generalization is None:
                refs.append(None)
                continue
            ref = os.path.join(gens_dir, f"point_{i:03d}.json")
            save_gen(p.generalization, ref)
            refs.append(ref)
        save_points(points, os.path.join(out_dir, "points.json"), refs)
        front = pareto_front(points)
        write_report(points, out_dir, front)

        manifest = {
            "config_hash": _config_hash(cfg),
            "seed": seed,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "vdm": _version(),
            },
            "points": len(points),
            "front": len(front),
        }
        with open(os.path.join(out_dir, "manifest.json"), "w") as f:
            json.dump(manifest, f, indent=2)
    except Exception as e:
        with open(os.path.join(out_dir, "FAILED"), "w") as f:
            f.write(f"stage {stage}: {e}\n")
        raise
    return 0


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("vdm")
    except Exception:
        return "unknown"


def _add_data_args(p, seed=True):
    p.add_argument("--data", required=True, help="CSV data file")
    p.add_argument("--schema", required=True, help="JSON schema file")
    if seed:
        p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vdm",
                                     description="vertical data minimization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate seeded synthetic data")
    p.add_argument("--out", required=True)
    p.add_argument("--schema-out", required=True)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--continuous", type=int, default=2)
    p.add_argument("--cards", default="4,6,8,5")
    p.add_argument("--personal-cards", default="2,3,4,4")
    p.add_argument("--corr", type=float, default=0.8)
    p.add_argument("--label-noise", type=float, default=0.05)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="assign train/val/test tags")
    _add_data_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--schema-out", required=True)
    p.add_argument("--fractions", default="0.6,0.1,0.3")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("pat", help="fit a privacy-aware tree minimizer")
    _add_data_args(p)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--max-leaves", type=int, required=True)
    p.add_argument("--min-leaf", type=int, default=100)
    p.add_argument("--out", required=True)
    p.add_argument("--tree-out")
    p.set_defaults(func=cmd_pat)

    p = sub.add_parser("baseline", help="fit a baseline minimizer")
    _add_data_args(p)
    p.add_argument("--method", choices=("uniform", "featsel", "iterative"),
                   required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--target-error", type=float)
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("neural", help="fit a neural minimizer")
    _add_data_args(p)
    p.add_argument("--method", choices=("advtrain", "mutualinf"), required=True)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_neural)

    p = sub.add_parser("apply", help="apply a stored generalization to data")
    _add_data_args(p, seed=False)
    p.add_argument("--generalization", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--schema-out", required=True)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("attack", help="run a privacy adversary")
    p.add_argument("adversary", choices=[f"a{i}" for i in range(1, 9)])
    _add_data_args(p)
    p.add_argument("--generalization", required=True)
    p.add_argument("--generalization2", help="second breach for a6")
    p.add_argument("--breach-split", choices=("train", "val", "test"),
                   default="test")
    p.add_argument("--k-percent", type=float, default=100.0)
    p.add_argument("--prefix", type=int, help="known personal prefix size (a5)")
    p.add_argument("--ordering", help="comma list of personal attributes (a5)")
    p.add_argument("--attrs-a", help="comma list of A-side attributes (a7)")
    p.add_argument("--attrs-b", help="comma list of B-side attributes (a7)")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--out")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sweep", help="evaluate a hyperparameter grid")
    _add_data_args(p)
    p.add_argument("--minimizer", required=True,
                   choices=("uniform", "featsel", "pat", "advtrain", "mutualinf"))
    p.add_argument("--grid", help="JSON file overriding the default grid")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pareto", help="select the validation Pareto front")
    p.add_argument("points", help="points.json from a sweep")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("report", help="render points.csv, front.json and figure")
    p.add_argument("--points", required=True)
    p.add_argument("--front")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="execute a full configured pipeline")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SchemaError, DataError, GeneralizationError,
            FileNotFoundError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
